"""
The partially observable restaurant world.

Rooms form an undirected graph. Restaurants sit in rooms and can be seen
from a fixed set of rooms; whether a restaurant is open is only revealed to
an agent standing in a room from which it is visible.
"""
import itertools
import json
import logging
from collections import deque
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from types import MappingProxyType
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

from rest_framework import serializers

from .exceptions import LegalActionError, UnknownRoom, Unreachable
from .serializers import EnvironmentSpecSerializer

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent / 'data'
DEFAULT_ENVIRONMENT = 'restaurants'


@dataclass(frozen=True)
class Move:
    """Move to an adjacent room."""

    room: int

    @property
    def label(self) -> str:
        return f"Move({self.room})"

    def describe(self) -> str:
        return f"Move to Room {self.room}"


@dataclass(frozen=True)
class Eat:
    """Eat at the restaurant in the current room."""

    restaurant: str

    @property
    def label(self) -> str:
        return f"Eat({self.restaurant})"

    def describe(self) -> str:
        return f"Eat at the {self.restaurant} restaurant"


Action = Union[Move, Eat]


def action_to_json(action: Action) -> Dict[str, Union[int, str]]:
    if isinstance(action, Move):
        return {'move': action.room}
    return {'eat': action.restaurant}


def action_from_json(data: Mapping[str, Union[int, str]]) -> Action:
    if 'move' in data:
        return Move(int(data['move']))
    if 'eat' in data:
        return Eat(str(data['eat']))
    raise serializers.ValidationError(f"Unrecognised action {data!r}.")


@dataclass(frozen=True)
class RoomGraph:
    """Rooms, adjacency, restaurant placement and visibility."""

    name: str
    rooms: Tuple[int, ...]
    adjacency: Mapping[int, Tuple[int, ...]]
    restaurant_rooms: Mapping[str, int]
    visibility: Mapping[str, FrozenSet[int]]

    @property
    def restaurants(self) -> Tuple[str, ...]:
        return tuple(self.restaurant_rooms)

    def require_room(self, room: int) -> None:
        if room not in self.adjacency:
            raise UnknownRoom(f"Room {room} is not part of the {self.name} environment.")

    def neighbors(self, room: int) -> Tuple[int, ...]:
        self.require_room(room)
        return self.adjacency[room]

    def restaurant_at(self, room: int) -> Optional[str]:
        self.require_room(room)
        for restaurant, location in self.restaurant_rooms.items():
            if location == room:
                return restaurant
        return None

    def visible_from(self, room: int) -> Tuple[str, ...]:
        """Restaurants whose open status can be seen from ``room``."""
        self.require_room(room)
        return tuple(r for r in self.restaurants if room in self.visibility[r])


@dataclass(frozen=True)
class WorldState:
    """Which restaurants are open."""

    open: Mapping[str, bool]

    @classmethod
    def all_open(cls, graph: RoomGraph) -> 'WorldState':
        return cls.with_closed(graph, ())

    @classmethod
    def with_closed(cls, graph: RoomGraph, closed: Iterable[str]) -> 'WorldState':
        closed = set(closed)
        unknown = closed - set(graph.restaurants)
        if unknown:
            raise serializers.ValidationError(f"Unknown restaurants marked closed: {sorted(unknown)}.")
        return cls(MappingProxyType({r: r not in closed for r in graph.restaurants}))

    def is_open(self, restaurant: str) -> bool:
        return self.open[restaurant]

    @property
    def closed(self) -> Tuple[str, ...]:
        return tuple(r for r, is_open in self.open.items() if not is_open)

    def describe(self) -> str:
        closed = self.closed
        if not closed:
            return 'All open'
        return f"{'/'.join(closed)} closed"


@dataclass(frozen=True)
class Observation:
    """What an agent standing in ``room`` can see."""

    room: int
    visible: Tuple[Tuple[str, bool], ...]
    reachable: Tuple[int, ...]


@dataclass(frozen=True)
class TrajectoryDef:
    """An observed action sequence and the world it happened in."""

    id: str
    world: WorldState
    start_room: int
    actions: Tuple[Action, ...]
    table_cells: Tuple[str, ...] = ()
    reconstructed: bool = False
    note: str = ''


@dataclass(frozen=True)
class ReplayStep:
    timestep: int
    room: int
    observation: Observation
    legal: Tuple[Action, ...]
    action: Action


def build_environment(spec: Mapping) -> RoomGraph:
    """
    Validate an environment description and build the graph.

    Args:
        spec: Mapping with keys rooms, edges, restaurants, visibility.

    Returns:
        An immutable RoomGraph.

    Raises:
        rest_framework.serializers.ValidationError on asymmetric edges,
        orphan restaurants, missing self-visibility or a disconnected graph.
    """
    serializer = EnvironmentSpecSerializer(data=dict(spec))
    serializer.is_valid(raise_exception=True)
    data = serializer.validated_data

    adjacency = {room: tuple(sorted(data['edges'].get(room, []))) for room in data['rooms']}
    graph = RoomGraph(
        name=data['name'],
        rooms=tuple(data['rooms']),
        adjacency=MappingProxyType(adjacency),
        restaurant_rooms=MappingProxyType(dict(data['restaurants'])),
        visibility=MappingProxyType({
            restaurant: frozenset(data['visibility'].get(restaurant, []))
            for restaurant in data['restaurants']
        }),
    )
    logger.debug(f"Built environment {graph.name} with {len(graph.rooms)} rooms")
    return graph


def load_environment(name_or_path: Union[str, Path] = DEFAULT_ENVIRONMENT) -> RoomGraph:
    """Load a shipped environment by name, or any spec file by path."""
    path = Path(name_or_path)
    if not path.suffix:
        path = DATA_DIR / f"{name_or_path}.json"
    with path.open(encoding='utf-8') as fh:
        return build_environment(json.load(fh))


@lru_cache(maxsize=None)
def default_environment() -> RoomGraph:
    return load_environment(DEFAULT_ENVIRONMENT)


def action_sort_key(graph: RoomGraph, action: Action) -> Tuple[int, int]:
    """Moves by room index, then Eats in restaurant order."""
    if isinstance(action, Move):
        return (0, action.room)
    return (1, graph.restaurants.index(action.restaurant))


def legal_actions(graph: RoomGraph, world: WorldState, room: int) -> Tuple[Action, ...]:
    """All moves to adjacent rooms, plus Eat when an open restaurant is here."""
    actions: List[Action] = [Move(neighbor) for neighbor in graph.neighbors(room)]
    restaurant = graph.restaurant_at(room)
    if restaurant is not None and world.is_open(restaurant):
        actions.append(Eat(restaurant))
    return tuple(sorted(actions, key=lambda a: action_sort_key(graph, a)))


def observe(graph: RoomGraph, world: WorldState, room: int) -> Observation:
    """Visible restaurants with their true status; everything else is absent."""
    visible = tuple((r, world.is_open(r)) for r in graph.visible_from(room))
    return Observation(room=room, visible=visible, reachable=graph.neighbors(room))


def shortest_path(graph: RoomGraph, from_room: int, restaurant: str) -> List[int]:
    """
    Breadth-first shortest path from ``from_room`` to the restaurant's room.

    The returned list excludes the starting room, so it is empty when the
    agent already stands in the restaurant's room. Among equally short paths
    the one visiting the lowest room indices first is chosen.
    """
    graph.require_room(from_room)
    if restaurant not in graph.restaurant_rooms:
        raise Unreachable(f"No {restaurant} restaurant in the {graph.name} environment.")
    target = graph.restaurant_rooms[restaurant]

    distance = {target: 0}
    queue = deque([target])
    while queue:
        current = queue.popleft()
        for neighbor in graph.neighbors(current):
            if neighbor not in distance:
                distance[neighbor] = distance[current] + 1
                queue.append(neighbor)

    if from_room not in distance:
        raise Unreachable(f"Room {from_room} cannot reach the {restaurant} restaurant.")

    path = []
    current = from_room
    while current != target:
        current = min(n for n in graph.neighbors(current) if distance.get(n) == distance[current] - 1)
        path.append(current)
    return path


def world_states(graph: RoomGraph) -> List[WorldState]:
    """Every open/closed combination, all-open first."""
    states = []
    for flags in itertools.product((True, False), repeat=len(graph.restaurants)):
        states.append(WorldState(MappingProxyType(dict(zip(graph.restaurants, flags)))))
    return states


def replay(graph: RoomGraph, trajectory: TrajectoryDef) -> List[ReplayStep]:
    """Walk a trajectory, checking every action against the legal set."""
    steps = []
    room = trajectory.start_room
    graph.require_room(room)
    for timestep, action in enumerate(trajectory.actions):
        if steps and isinstance(steps[-1].action, Eat):
            raise LegalActionError(f"{trajectory.id}: no action may follow eating (step {timestep}).")
        legal = legal_actions(graph, trajectory.world, room)
        if action not in legal:
            raise LegalActionError(
                f"{trajectory.id}: {action.label} is not legal in Room {room} at step {timestep}."
            )
        steps.append(ReplayStep(timestep, room, observe(graph, trajectory.world, room), legal, action))
        if isinstance(action, Move):
            room = action.room
    return steps


def path_rooms(trajectory: TrajectoryDef) -> List[int]:
    """Rooms occupied before each action."""
    rooms = []
    room = trajectory.start_room
    for action in trajectory.actions:
        rooms.append(room)
        if isinstance(action, Move):
            room = action.room
    return rooms


def join_rooms(rooms: Sequence[int], conjunction: str = 'and') -> str:
    """'Room 1, Room 2, and Room 4' style lists."""
    names = [f"Room {room}" for room in rooms]
    if len(names) <= 1:
        return ''.join(names)
    if len(names) == 2:
        return f"{names[0]} {conjunction} {names[1]}"
    return f"{', '.join(names[:-1])}, {conjunction} {names[-1]}"
