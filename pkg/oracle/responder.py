"""
Scripted-backend responder that answers with optimal-observer quantities.

Requests carry a ``metadata['kind']`` telling the responder what is being
asked; the prompt text itself is never read.
"""
import json
import logging
from typing import Mapping, Optional

import numpy as np

from environment.corpus import load_trajectory
from environment.graph import RoomGraph, TrajectoryDef, default_environment, path_rooms
from laip.distributions import ProbabilityDistribution
from providers.exceptions import BackendRefusal
from providers.records import CompletionRequest

from .policy import PreferenceOrdering, all_orderings, belief_trajectory, forward_policy, likelihood_column

logger = logging.getLogger(__name__)


class OracleResponder:
    """Callable for ``ScriptedBackend(responder=...)``."""

    def __init__(
        self,
        graph: Optional[RoomGraph] = None,
        trajectories: Optional[Mapping[str, TrajectoryDef]] = None,
        epsilon: Optional[float] = None,
    ):
        self.graph = graph or default_environment()
        self.trajectories = dict(trajectories or {})
        self.epsilon = epsilon

    def __call__(self, request: CompletionRequest) -> str:
        kind = request.metadata.get('kind')
        handler = getattr(self, f"answer_{kind}", None) if kind else None
        if handler is None:
            raise BackendRefusal(f"The oracle cannot answer {kind or 'untagged'} requests.")
        return handler(request.metadata)

    def trajectory(self, trajectory_id: str) -> TrajectoryDef:
        if trajectory_id in self.trajectories:
            return self.trajectories[trajectory_id]
        return load_trajectory(trajectory_id)

    @staticmethod
    def ordering(label: Optional[str]) -> PreferenceOrdering:
        if not label:
            raise BackendRefusal("The oracle only answers for strict preference orderings.")
        return PreferenceOrdering.from_label(label)

    def answer_likelihood(self, metadata: Mapping) -> str:
        """Forward-policy probabilities of the listed actions, as ``A1: p`` lines."""
        trajectory = self.trajectory(metadata['trajectory_id'])
        timestep = metadata['timestep']
        room = path_rooms(trajectory)[timestep]
        belief = belief_trajectory(self.graph, trajectory)[timestep]
        policy = forward_policy(self.graph, belief, self.ordering(metadata['ordering']), room, self.epsilon)
        row = policy.as_dict()
        return '\n'.join(
            f"A{index}: {row.get(label, 0.0)!r}" for index, label in enumerate(metadata['actions'], start=1)
        )

    def answer_posterior(self, metadata: Mapping) -> str:
        """Exact Bayes update from the displayed prior and likelihood matrix."""
        prior = np.asarray(metadata['prior'], dtype=float)
        column = np.asarray(metadata['matrix'], dtype=float)[:, metadata['observed_index']]
        labels = [f"H{i}" for i in range(1, len(prior) + 1)]
        posterior = ProbabilityDistribution.from_weights(prior * column, labels)
        return json.dumps(posterior.as_dict())

    def answer_posterior_direct(self, metadata: Mapping) -> str:
        """Optimal one-step posterior over the listed orderings."""
        trajectory = self.trajectory(metadata['trajectory_id'])
        orderings = [self.ordering(label) for label in metadata['orderings']]
        column = likelihood_column(self.graph, orderings, trajectory, metadata['timestep'], self.epsilon)
        prior = np.asarray(metadata['prior'], dtype=float)
        labels = [f"H{i}" for i in range(1, len(prior) + 1)]
        posterior = ProbabilityDistribution.from_weights(prior * np.asarray(column), labels)
        return json.dumps(posterior.as_dict())

    def answer_hypotheses(self, metadata: Mapping) -> str:
        """Every strict ordering, with a uniform prior."""
        orderings = all_orderings(self.graph)
        return json.dumps([
            {'hypothesis': ordering.describe(), 'probability': 1.0 / len(orderings)}
            for ordering in orderings
        ])
