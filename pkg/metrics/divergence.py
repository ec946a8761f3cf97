"""
Distances between hypothesis distributions.

Every function accepts ProbabilityDistributions (labels must agree) or
plain probability vectors.
"""
import math
from typing import Iterable, Tuple, Union

import numpy as np
from scipy.special import rel_entr

from laip.distributions import ProbabilityDistribution
from laip.exceptions import DimensionMismatch

Distribution = Union[ProbabilityDistribution, Iterable[float]]

TIE_TOLERANCE = 1e-9


def _as_pair(p: Distribution, q: Distribution) -> Tuple[np.ndarray, np.ndarray]:
    if isinstance(p, ProbabilityDistribution) and isinstance(q, ProbabilityDistribution) and p.labels != q.labels:
        raise DimensionMismatch(f"Cannot compare distributions over {p.labels} and {q.labels}.")
    a = p.as_array() if isinstance(p, ProbabilityDistribution) else np.asarray(list(p), dtype=float)
    b = q.as_array() if isinstance(q, ProbabilityDistribution) else np.asarray(list(q), dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"Cannot compare distributions of sizes {a.size} and {b.size}.")
    return a, b


def kl_divergence(p: Distribution, q: Distribution, base: float = 2) -> float:
    """KL(p || q); infinite when p puts mass where q has none."""
    a, b = _as_pair(p, q)
    return float(np.sum(rel_entr(a, b)) / math.log(base))


def jsd(p: Distribution, q: Distribution, base: float = 2) -> float:
    """
    Jensen-Shannon divergence, ½KL(p‖m) + ½KL(q‖m) with m = (p + q) / 2.

    Base 2 bounds it to [0, 1]; pass ``base=math.e`` for nats.
    """
    a, b = _as_pair(p, q)
    m = 0.5 * (a + b)
    return max(0.0, 0.5 * kl_divergence(a, m, base) + 0.5 * kl_divergence(b, m, base))


def hellinger(p: Distribution, q: Distribution) -> float:
    a, b = _as_pair(p, q)
    return float(np.sqrt(0.5 * np.sum((np.sqrt(a) - np.sqrt(b)) ** 2)))


def posterior_mass(distribution: ProbabilityDistribution, labels: Iterable[str]) -> float:
    """Total mass on a subset of hypotheses, e.g. ``posterior_mass(post, ['H9', 'H10'])``."""
    labels = list(labels)
    unknown = set(labels) - set(distribution.labels)
    if unknown:
        raise DimensionMismatch(f"Unknown hypothesis labels: {sorted(unknown)}")
    return float(sum(distribution[label] for label in set(labels)))


def alignment_score(posterior: ProbabilityDistribution, oracle_posterior: ProbabilityDistribution) -> float:
    """Mass ``posterior`` puts on the hypotheses the oracle ranks highest (ties within 1e-9)."""
    if posterior.labels != oracle_posterior.labels:
        raise DimensionMismatch(f"Cannot compare distributions over {posterior.labels} and {oracle_posterior.labels}.")
    oracle = oracle_posterior.as_array()
    best = oracle >= oracle.max() - TIE_TOLERANCE
    return float(posterior.as_array()[best].sum())
