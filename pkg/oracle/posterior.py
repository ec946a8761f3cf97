"""Analytic posteriors of the optimal observer over preference orderings."""
import logging
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

from environment.corpus import default_corpus
from environment.graph import RoomGraph, TrajectoryDef, default_environment
from laip.distributions import ProbabilityDistribution
from laip.exceptions import DimensionMismatch

from .policy import PreferenceOrdering, all_orderings, check_trajectory, likelihood_column, step_likelihoods

logger = logging.getLogger(__name__)


def ordering_prior(
    orderings: Sequence[PreferenceOrdering],
    prior: Optional[ProbabilityDistribution] = None,
) -> ProbabilityDistribution:
    """Uniform prior over ``orderings`` unless one is given; labels must match."""
    labels = [o.label for o in orderings]
    if prior is None:
        return ProbabilityDistribution.uniform(labels)
    if len(prior) != len(labels):
        raise DimensionMismatch(f"Prior has {len(prior)} entries for {len(labels)} orderings.")
    return prior


def optimal_posterior(
    trajectory: TrajectoryDef,
    prior: Optional[ProbabilityDistribution] = None,
    epsilon: Optional[float] = None,
    graph: Optional[RoomGraph] = None,
) -> ProbabilityDistribution:
    """
    Posterior over orderings after the whole trajectory.

    Args:
        trajectory: Observed actions and their world.
        prior: Prior over ``all_orderings(graph)``; uniform by default.
        epsilon: Random-move noise.
        graph: Defaults to the shipped restaurant world.

    Returns:
        prior x trajectory likelihood, normalized, labelled by ordering.

    Raises:
        DegeneratePosterior when every ordering has likelihood zero.
    """
    graph = graph or default_environment()
    orderings = all_orderings(graph)
    prior = ordering_prior(orderings, prior)
    likelihoods = np.array([np.prod(step_likelihoods(graph, o, trajectory, epsilon)) for o in orderings])
    return ProbabilityDistribution.from_weights(prior.as_array() * likelihoods, [o.label for o in orderings])


def optimal_step_posteriors(
    trajectory: TrajectoryDef,
    prior: Optional[ProbabilityDistribution] = None,
    epsilon: Optional[float] = None,
    graph: Optional[RoomGraph] = None,
) -> List[ProbabilityDistribution]:
    """Posterior after each timestep; the last entry equals ``optimal_posterior``."""
    graph = graph or default_environment()
    check_trajectory(graph, trajectory)
    orderings = all_orderings(graph)
    labels = [o.label for o in orderings]
    posterior = ordering_prior(orderings, prior)
    posteriors = []
    for timestep in range(len(trajectory.actions)):
        column = np.array(likelihood_column(graph, orderings, trajectory, timestep, epsilon))
        posterior = ProbabilityDistribution.from_weights(posterior.as_array() * column, labels)
        posteriors.append(posterior)
    return posteriors


def ideal_results_table(
    trajectories: Optional[Iterable[TrajectoryDef]] = None,
    epsilon: Optional[float] = None,
    graph: Optional[RoomGraph] = None,
) -> Dict[str, ProbabilityDistribution]:
    """Final optimal posterior for each trajectory, keyed by trajectory id."""
    if trajectories is None:
        trajectories = [t for tid, t in default_corpus().items() if tid.startswith('t')]
    table = {t.id: optimal_posterior(t, epsilon=epsilon, graph=graph) for t in trajectories}
    logger.debug(f"Computed optimal posteriors for {len(table)} trajectories")
    return table
