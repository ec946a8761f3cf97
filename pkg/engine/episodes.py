"""Turn corpus trajectories into episodes the observer is shown step by step."""
from typing import Optional

from environment.graph import RoomGraph, TrajectoryDef, default_environment, replay
from environment.rendering import render_environment, render_observation

from .prompts import render_prompt
from .records import Episode, EpisodeStep

RESTAURANT_TASK = 'restaurants'
SUBJECT = 'the agent'


def restaurant_scenario(graph: RoomGraph, trajectory: TrajectoryDef, subject: str = SUBJECT, version: Optional[str] = None) -> str:
    """Hypothesis-generation context for the restaurant world."""
    visible = set(graph.visible_from(trajectory.start_room))
    return render_prompt('restaurant_scenario', {
        'subject': subject,
        'restaurant_count': len(graph.restaurants),
        'restaurants': graph.restaurants,
        'start_room': trajectory.start_room,
        'hidden': [r for r in graph.restaurants if r not in visible],
    }, version)


def restaurant_episode(
    trajectory: TrajectoryDef,
    graph: Optional[RoomGraph] = None,
    version: Optional[str] = None,
) -> Episode:
    """
    One step per action; the candidates are the legal actions in canonical order.

    Each step's metadata names the trajectory and timestep so scripted
    responders can answer without reading the prompt.
    """
    graph = graph or default_environment()
    steps = []
    history = []
    for replayed in replay(graph, trajectory):
        steps.append(EpisodeStep(
            timestep=replayed.timestep,
            state_context=render_observation(replayed.observation, version),
            observed=replayed.action.describe(),
            candidates=tuple(a.describe() for a in replayed.legal),
            candidate_labels=tuple(a.label for a in replayed.legal),
            observed_index=replayed.legal.index(replayed.action),
            history=tuple(history),
            metadata={'trajectory_id': trajectory.id, 'timestep': replayed.timestep},
        ))
        history.append(replayed.action.describe())
    return Episode(
        id=trajectory.id,
        task=RESTAURANT_TASK,
        system_prompt=render_environment(graph, version),
        scenario=restaurant_scenario(graph, trajectory, version=version),
        subject=SUBJECT,
        steps=tuple(steps),
        graph=graph,
    )
