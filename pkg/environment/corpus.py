"""
The trajectory corpus.

The data file mirrors the trajectory table cell for cell. Room cells use the
table's own labels, which ``room_labels`` maps onto graph rooms; restaurant
cells become a Move into the restaurant's room (when the agent is not
already there) followed by Eat.
"""
import json
import logging
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Mapping, Sequence, Tuple, Union

from rest_framework import serializers

from .exceptions import UnknownTrajectory
from .graph import (
    DATA_DIR, Action, Eat, Move, RoomGraph, TrajectoryDef, WorldState, load_environment, replay,
)
from .serializers import TrajectoryCorpusSerializer

logger = logging.getLogger(__name__)

DEFAULT_CORPUS = DATA_DIR / 'trajectories.json'


def encode_cells(
    graph: RoomGraph,
    start_room: int,
    cells: Sequence[str],
    room_labels: Mapping[str, int],
) -> Tuple[Tuple[Action, ...], bool]:
    """
    Turn table cells into actions.

    Returns:
        (actions, reconstructed) where ``reconstructed`` is True when a
        restaurant cell needed an inserted Move.
    """
    actions: List[Action] = []
    reconstructed = False
    room = start_room
    for cell in cells:
        if cell in room_labels:
            room = room_labels[cell]
            actions.append(Move(room))
        elif cell in graph.restaurant_rooms:
            target = graph.restaurant_rooms[cell]
            if room != target:
                actions.append(Move(target))
                room = target
                reconstructed = True
            actions.append(Eat(cell))
        else:
            raise serializers.ValidationError(f"Cell {cell!r} is neither a room label nor a restaurant.")
    return tuple(actions), reconstructed


def load_corpus(path: Union[str, Path] = DEFAULT_CORPUS) -> Dict[str, TrajectoryDef]:
    """Load, encode and replay-check every trajectory in a corpus file."""
    with Path(path).open(encoding='utf-8') as fh:
        serializer = TrajectoryCorpusSerializer(data=json.load(fh))
    serializer.is_valid(raise_exception=True)
    data = serializer.validated_data

    graph = load_environment(data['environment'])
    corpus = {}
    for row in data['trajectories']:
        start_room = row.get('start_room', data['start_room'])
        actions, reconstructed = encode_cells(graph, start_room, row['cells'], data['room_labels'])
        trajectory = TrajectoryDef(
            id=row['id'],
            world=WorldState.with_closed(graph, row['closed']),
            start_room=start_room,
            actions=actions,
            table_cells=tuple(row['cells']),
            reconstructed=reconstructed,
            note=row['note'],
        )
        replay(graph, trajectory)
        corpus[trajectory.id] = trajectory
    logger.debug(f"Loaded {len(corpus)} trajectories from {path}")
    return corpus


@lru_cache(maxsize=None)
def default_corpus() -> Dict[str, TrajectoryDef]:
    return load_corpus(DEFAULT_CORPUS)


def list_trajectories() -> List[str]:
    """Trajectory ids in table order."""
    return list(default_corpus())


def load_trajectory(trajectory_id: str) -> TrajectoryDef:
    """Return one row of the shipped corpus."""
    try:
        return default_corpus()[trajectory_id]
    except KeyError:
        raise UnknownTrajectory(f"Unknown trajectory {trajectory_id!r}.") from None
