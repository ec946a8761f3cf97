"""
Forward model of a rational restaurant-goer.

The agent ranks the restaurants and heads for its favourite among those it
still believes may be open. With probability P(open) that restaurant really
is open; the remaining mass falls through to the next-ranked restaurant.
A fraction epsilon of every step is spent moving to a random adjacent room.
The agent replans from its current belief at every step.
"""
import itertools
import logging
import re
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

from django.conf import settings
from rest_framework import serializers

from environment.exceptions import LegalActionError, Unreachable
from environment.graph import (
    Action, Eat, Move, RoomGraph, TrajectoryDef, action_sort_key, default_environment, observe,
    path_rooms, replay, shortest_path,
)
from laip.distributions import ProbabilityDistribution

from .belief import AgentBelief, init_belief, update_belief
from .exceptions import IllegalTrajectory, NoViableGoal

logger = logging.getLogger(__name__)

ORDERING_TEXT = re.compile(r"^the agent prefers (?P<first>.+?) food the most(?P<rest>(?:, then [^,]+?)*)\.?$", re.I)


@dataclass(frozen=True)
class PreferenceOrdering:
    """A strict ranking of restaurants, most preferred first."""

    ranking: Tuple[str, ...]

    def __post_init__(self):
        if not self.ranking:
            raise serializers.ValidationError("A preference ordering needs at least one restaurant.")
        if len(set(self.ranking)) != len(self.ranking):
            raise serializers.ValidationError(f"Ordering {self.ranking} ranks a restaurant twice.")

    @property
    def label(self) -> str:
        return '>'.join(self.ranking)

    @classmethod
    def from_label(cls, label: str) -> 'PreferenceOrdering':
        return cls(tuple(part.strip() for part in label.split('>')))

    def describe(self) -> str:
        """'The agent prefers Japanese food the most, then Chinese, then Mexican.'"""
        if len(self.ranking) == 1:
            return f"The agent prefers {self.ranking[0]} food."
        rest = ''.join(f", then {r}" for r in self.ranking[1:])
        return f"The agent prefers {self.ranking[0]} food the most{rest}."


def all_orderings(graph: RoomGraph) -> List[PreferenceOrdering]:
    """Every strict ordering of the graph's restaurants, in permutation order."""
    return [PreferenceOrdering(p) for p in itertools.permutations(graph.restaurants)]


def ordering_from_text(text: str, graph: RoomGraph) -> Optional[PreferenceOrdering]:
    """
    Recognise hypothesis text written in the canonical ranking sentence.

    Returns:
        The ordering when the text ranks every restaurant exactly once,
        otherwise None.
    """
    match = ORDERING_TEXT.match(text.strip())
    if not match:
        return None
    names = [match.group('first')] + re.findall(r", then ([^,]+)", match.group('rest'))
    by_lower = {r.lower(): r for r in graph.restaurants}
    ranking = tuple(by_lower.get(name.strip().lower()) for name in names)
    if None in ranking or sorted(ranking) != sorted(graph.restaurants):
        return None
    return PreferenceOrdering(ranking)


def policy_actions(graph: RoomGraph, belief: AgentBelief, room: int) -> Tuple[Action, ...]:
    """Moves to adjacent rooms, plus Eat when the local restaurant may be open."""
    actions: List[Action] = [Move(n) for n in graph.neighbors(room)]
    restaurant = graph.restaurant_at(room)
    if restaurant is not None and belief[restaurant] > 0.0:
        actions.append(Eat(restaurant))
    return tuple(sorted(actions, key=lambda a: action_sort_key(graph, a)))


def forward_policy(
    graph: RoomGraph,
    belief: AgentBelief,
    ordering: PreferenceOrdering,
    room: int,
    epsilon: Optional[float] = None,
) -> ProbabilityDistribution:
    """
    Action distribution of the rational agent standing in ``room``.

    Args:
        graph: The environment.
        belief: The agent's belief after observing ``room``.
        ordering: The hypothesised preference ranking.
        room: Current room.
        epsilon: Random-move noise; defaults to ``LAIP['EPSILON']``.

    Returns:
        A ProbabilityDistribution labelled by action labels, in canonical
        action order.
    """
    if epsilon is None:
        epsilon = settings.LAIP['EPSILON']
    actions = policy_actions(graph, belief, room)
    if not actions:
        raise NoViableGoal(f"No actions available from Room {room}.")

    weights: Dict[Action, float] = {action: 0.0 for action in actions}
    remaining = 1.0 - epsilon
    for restaurant in ordering.ranking:
        p_open = belief[restaurant]
        if p_open <= 0.0:
            continue
        try:
            path = shortest_path(graph, room, restaurant)
        except Unreachable:
            continue
        step = Move(path[0]) if path else Eat(restaurant)
        weights[step] += remaining * p_open
        remaining *= 1.0 - p_open

    moves = [a for a in actions if isinstance(a, Move)]
    if remaining >= 1.0 - epsilon:
        logger.warning(f"No restaurant believed open from Room {room} under {ordering.label}; moving at random")
    leftover = remaining + epsilon
    if moves:
        for move in moves:
            weights[move] += leftover / len(moves)

    return ProbabilityDistribution.from_weights(
        [weights[a] for a in actions], [a.label for a in actions]
    )


def belief_trajectory(graph: RoomGraph, trajectory: TrajectoryDef, p_open: Optional[float] = None) -> List[AgentBelief]:
    """Belief at each timestep, after observing the room the agent stands in."""
    beliefs = []
    belief = init_belief(graph, p_open)
    for room in path_rooms(trajectory):
        belief = update_belief(belief, observe(graph, trajectory.world, room))
        beliefs.append(belief)
    return beliefs


def check_trajectory(graph: RoomGraph, trajectory: TrajectoryDef) -> None:
    try:
        replay(graph, trajectory)
    except LegalActionError as exc:
        raise IllegalTrajectory(str(exc)) from exc


def step_likelihoods(
    graph: RoomGraph,
    ordering: PreferenceOrdering,
    trajectory: TrajectoryDef,
    epsilon: Optional[float] = None,
) -> List[float]:
    """P(a_t | ordering, belief_t) for every timestep."""
    check_trajectory(graph, trajectory)
    likelihoods = []
    for room, belief, action in zip(path_rooms(trajectory), belief_trajectory(graph, trajectory), trajectory.actions):
        policy = forward_policy(graph, belief, ordering, room, epsilon)
        likelihoods.append(policy[action.label] if action.label in policy.labels else 0.0)
    return likelihoods


def trajectory_likelihood(
    ordering: PreferenceOrdering,
    trajectory: TrajectoryDef,
    epsilon: Optional[float] = None,
    graph: Optional[RoomGraph] = None,
) -> float:
    """Product of per-step policy probabilities; 1.0 for an empty trajectory."""
    graph = graph or default_environment()
    likelihood = 1.0
    for value in step_likelihoods(graph, ordering, trajectory, epsilon):
        likelihood *= value
    return likelihood


def likelihood_column(
    graph: RoomGraph,
    orderings: Sequence[PreferenceOrdering],
    trajectory: TrajectoryDef,
    timestep: int,
    epsilon: Optional[float] = None,
) -> List[float]:
    """P(observed action at ``timestep`` | ordering) for each ordering."""
    room = path_rooms(trajectory)[timestep]
    belief = belief_trajectory(graph, trajectory)[timestep]
    action = trajectory.actions[timestep]
    column = []
    for ordering in orderings:
        policy = forward_policy(graph, belief, ordering, room, epsilon)
        column.append(policy[action.label] if action.label in policy.labels else 0.0)
    return column
