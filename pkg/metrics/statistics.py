"""Correlation and effect-size measures over posterior probabilities."""
from dataclasses import dataclass
from typing import Iterable, Sequence, Tuple

import numpy as np
from scipy import stats

from laip.exceptions import DegenerateInput, DimensionMismatch

MIN_CORRELATION_LENGTH = 3


def _paired(x: Iterable[float], y: Iterable[float]) -> Tuple[np.ndarray, np.ndarray]:
    a = np.asarray(list(x), dtype=float)
    b = np.asarray(list(y), dtype=float)
    if a.shape != b.shape:
        raise DimensionMismatch(f"Cannot correlate vectors of lengths {a.size} and {b.size}.")
    if a.size < MIN_CORRELATION_LENGTH:
        raise DegenerateInput(f"Correlation needs at least {MIN_CORRELATION_LENGTH} points, got {a.size}.")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        raise DegenerateInput("Correlation is undefined for a constant vector.")
    return a, b


def pearson_r(x: Iterable[float], y: Iterable[float]) -> float:
    a, b = _paired(x, y)
    return float(stats.pearsonr(a, b)[0])


def spearman_rho(x: Iterable[float], y: Iterable[float]) -> float:
    """Rank correlation; ties get average ranks."""
    a, b = _paired(x, y)
    return float(stats.spearmanr(a, b)[0])


@dataclass(frozen=True)
class TTestResult:
    t: float
    dof: int
    cohens_d: float
    p_value: float


def paired_t_cohens_d(a: Sequence[float], b: Sequence[float]) -> TTestResult:
    """
    Compare two conditions, e.g. per-trajectory scores of two models.

    The conditions are treated as independent samples with pooled variance,
    so two groups of 8 give 14 degrees of freedom. Cohen's d is the mean
    difference over the pooled standard deviation.

    Raises:
        DegenerateInput when a group has fewer than two values or both
        groups have zero variance.
    """
    x = np.asarray(list(a), dtype=float)
    y = np.asarray(list(b), dtype=float)
    if x.size < 2 or y.size < 2:
        raise DegenerateInput("Each condition needs at least two values.")
    dof = x.size + y.size - 2
    pooled = np.sqrt(((x.size - 1) * x.var(ddof=1) + (y.size - 1) * y.var(ddof=1)) / dof)
    if pooled == 0:
        raise DegenerateInput("Both conditions have zero variance.")
    difference = x.mean() - y.mean()
    if difference == 0:
        return TTestResult(0.0, dof, 0.0, 1.0)
    result = stats.ttest_ind(x, y, equal_var=True)
    return TTestResult(float(result.statistic), dof, float(difference / pooled), float(result.pvalue))
