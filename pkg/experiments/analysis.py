"""
Comparing stored runs with the optimal observer.

Model hypotheses are mapped onto preference orderings: strict-ordering
hypotheses map to themselves, anything else needs an entry in a mapping
file (``{"hypothesis text": "Japanese>Chinese>Mexican" | "unmapped"}``).
"""
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from itertools import combinations
from pathlib import Path
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple, Union

import numpy as np
from django.conf import settings

from engine.records import HypothesisSet
from environment.corpus import load_trajectory
from environment.graph import default_environment
from laip.distributions import ProbabilityDistribution
from laip.exceptions import DegenerateInput, DimensionMismatch
from metrics.divergence import alignment_score, hellinger, jsd, posterior_mass
from metrics.statistics import paired_t_cohens_d, pearson_r, spearman_rho
from oracle.policy import all_orderings
from oracle.posterior import optimal_step_posteriors

from .exceptions import AlignmentError
from .reference import STUDY3_TRUE_PREFERENCES
from .store import COMPLETED, RunRecord

logger = logging.getLogger(__name__)

UNMAPPED = 'unmapped'
COMPARED_MEASURES = ('jsd', 'hellinger')

# Hypotheses whose final mass is reported by default, keyed by trajectory or scenario id.
TARGET_HYPOTHESES = {'alice': STUDY3_TRUE_PREFERENCES}


def load_mapping(path: Union[str, Path, None]) -> Dict[str, str]:
    if not path:
        return {}
    with Path(path).open(encoding='utf-8') as fh:
        data = json.load(fh)
    if not isinstance(data, dict) or not all(isinstance(v, str) for v in data.values()):
        raise AlignmentError(f"Mapping file {path} must map hypothesis text to an ordering label.")
    return data


def align_posterior(
    hypotheses: HypothesisSet,
    posterior: ProbabilityDistribution,
    ordering_labels: Sequence[str],
    mapping: Optional[Mapping[str, str]] = None,
) -> ProbabilityDistribution:
    """
    Re-express ``posterior`` over ordering labels.

    Mass of hypotheses mapped to ``unmapped`` is dropped and the rest
    renormalized.

    Raises:
        AlignmentError when a hypothesis has no mapping, maps to an unknown
        ordering, or no mass is left.
    """
    mapping = mapping or {}
    mass = dict.fromkeys(ordering_labels, 0.0)
    for hypothesis, p in zip(hypotheses, posterior.probs):
        label = hypothesis.structured.label if hypothesis.structured else mapping.get(hypothesis.text)
        if label is None:
            raise AlignmentError(f"No ordering for {hypothesis.label}: {hypothesis.text!r}")
        if label == UNMAPPED:
            continue
        if label not in mass:
            raise AlignmentError(f"{hypothesis.label} maps to unknown ordering {label!r}.")
        mass[label] += p
    if sum(mass.values()) <= 0:
        raise AlignmentError("No posterior mass is left after alignment.")
    return ProbabilityDistribution.from_weights(list(mass.values()), ordering_labels)


@dataclass(frozen=True)
class DistanceRow:
    mode: str
    trajectory: str
    runs: int
    jsd: float
    hellinger: float
    alignment: float
    max_abs_error: float


@dataclass(frozen=True)
class CorrelationRow:
    mode: str
    points: int
    pearson_r: Optional[float]
    spearman_rho: Optional[float]
    jsd: float
    hellinger: float
    max_abs_error: float
    note: str = ''


@dataclass(frozen=True)
class ModeComparisonRow:
    """Two-sample t-test of per-trajectory distances to the oracle, ``mode_a`` against ``mode_b``."""

    mode_a: str
    mode_b: str
    measure: str
    t_stat: Optional[float]
    dof: Optional[int]
    cohens_d: Optional[float]
    p_value: Optional[float]
    note: str = ''


@dataclass
class ComparisonTable:
    distances: List[DistanceRow] = field(default_factory=list)
    correlations: List[CorrelationRow] = field(default_factory=list)
    mode_comparisons: List[ModeComparisonRow] = field(default_factory=list)
    skipped: List[str] = field(default_factory=list)

    @property
    def max_abs_error(self) -> Optional[float]:
        if not self.correlations:
            return None
        return max(row.max_abs_error for row in self.correlations)


def _correlation(fn, x, y, strict: bool) -> Tuple[Optional[float], str]:
    try:
        return fn(x, y), ''
    except DegenerateInput as e:
        if strict:
            raise
        logger.warning(f"{fn.__name__} undefined: {str(e)}")
        return None, str(e)


def compare_to_oracle(
    records: Iterable[RunRecord],
    mapping: Optional[Mapping[str, str]] = None,
    epsilon: Optional[float] = None,
    strict: bool = False,
) -> ComparisonTable:
    """
    Per-mode agreement with the optimal observer's final posteriors.

    Correlations run over the concatenated aligned posterior vectors of all
    of a mode's completed restaurant runs; JSD and Hellinger are averaged
    per trajectory, then over trajectories.

    Args:
        records: Any runs; failed and open-ended runs are skipped.
        mapping: Hypothesis text to ordering label for non-ordering hypotheses.
        epsilon: Oracle action noise; defaults to ``LAIP['EPSILON']``.
        strict: Raise DegenerateInput instead of reporting an undefined correlation.

    Raises:
        AlignmentError when a run's hypotheses cannot be mapped.
    """
    epsilon = settings.LAIP['EPSILON'] if epsilon is None else epsilon
    graph = default_environment()
    ordering_labels = [o.label for o in all_orderings(graph)]
    oracle_cache: Dict[str, ProbabilityDistribution] = {}
    table = ComparisonTable()
    by_mode: Dict[str, List[Tuple[RunRecord, ProbabilityDistribution, ProbabilityDistribution]]] = defaultdict(list)

    for record in sorted(records, key=lambda r: r.run_id):
        if record.status != COMPLETED or record.task != 'restaurants' or not record.steps:
            table.skipped.append(record.run_id)
            continue
        if record.trajectory not in oracle_cache:
            oracle_cache[record.trajectory] = optimal_step_posteriors(
                load_trajectory(record.trajectory), epsilon=epsilon, graph=graph
            )[-1]
        model = align_posterior(record.hypotheses, record.final_posterior, ordering_labels, mapping)
        by_mode[record.mode].append((record, model, oracle_cache[record.trajectory]))

    for mode in sorted(by_mode):
        entries = by_mode[mode]
        per_trajectory: Dict[str, List[Tuple[float, float, float, float]]] = defaultdict(list)
        for record, model, oracle in entries:
            per_trajectory[record.trajectory].append((
                jsd(model, oracle),
                hellinger(model, oracle),
                alignment_score(model, oracle),
                float(np.max(np.abs(model.as_array() - oracle.as_array()))),
            ))
        for trajectory in sorted(per_trajectory):
            values = np.array(per_trajectory[trajectory])
            table.distances.append(DistanceRow(
                mode, trajectory, len(values),
                float(values[:, 0].mean()), float(values[:, 1].mean()), float(values[:, 2].mean()),
                float(values[:, 3].max()),
            ))

        x = np.concatenate([model.as_array() for _, model, _ in entries])
        y = np.concatenate([oracle.as_array() for _, _, oracle in entries])
        r, note_r = _correlation(pearson_r, x, y, strict)
        rho, note_rho = _correlation(spearman_rho, x, y, strict)
        rows = [row for row in table.distances if row.mode == mode]
        table.correlations.append(CorrelationRow(
            mode=mode,
            points=int(x.size),
            pearson_r=r,
            spearman_rho=rho,
            jsd=float(np.mean([row.jsd for row in rows])),
            hellinger=float(np.mean([row.hellinger for row in rows])),
            max_abs_error=max(row.max_abs_error for row in rows),
            note=note_r or note_rho,
        ))
    table.mode_comparisons = compare_modes(table.distances)
    return table


def compare_modes(
    distances: Sequence[DistanceRow],
    measures: Sequence[str] = COMPARED_MEASURES,
) -> List[ModeComparisonRow]:
    """
    t-test and Cohen's d for every pair of modes, one sample per trajectory.

    A pair without enough trajectories, or with zero variance, gets a row
    with no statistics and the reason in ``note``.
    """
    by_mode: Dict[str, List[DistanceRow]] = defaultdict(list)
    for row in distances:
        by_mode[row.mode].append(row)
    rows = []
    for mode_a, mode_b in combinations(sorted(by_mode), 2):
        for measure in measures:
            a = [getattr(row, measure) for row in by_mode[mode_a]]
            b = [getattr(row, measure) for row in by_mode[mode_b]]
            try:
                result = paired_t_cohens_d(a, b)
            except DegenerateInput as e:
                logger.warning(f"No t-test for {mode_a} vs {mode_b} on {measure}: {str(e)}")
                rows.append(ModeComparisonRow(mode_a, mode_b, measure, None, None, None, None, str(e)))
                continue
            rows.append(ModeComparisonRow(mode_a, mode_b, measure, result.t, result.dof, result.cohens_d, result.p_value))
    return rows


@dataclass(frozen=True)
class MassRow:
    run_id: str
    mode: str
    trajectory: str
    repetition: int
    hypotheses: Tuple[str, ...]
    mass: float


def subset_masses(records: Iterable[RunRecord], labels: Optional[Sequence[str]] = None) -> List[MassRow]:
    """
    Final posterior mass on a subset of hypotheses, one row per completed run.

    Without ``labels`` only trajectories listed in ``TARGET_HYPOTHESES`` are
    measured. Runs whose hypotheses lack one of the labels are left out.
    """
    rows = []
    for record in sorted(records, key=lambda r: r.run_id):
        subset = tuple(labels) if labels else TARGET_HYPOTHESES.get(record.trajectory)
        if not subset or record.status != COMPLETED or not record.steps:
            continue
        try:
            mass = posterior_mass(record.final_posterior, subset)
        except DimensionMismatch as e:
            logger.warning(f"No subset mass for {record.run_id}: {str(e)}")
            continue
        rows.append(MassRow(record.run_id, record.mode, record.trajectory, record.repetition, subset, mass))
    return rows


@dataclass(frozen=True)
class DivergenceRow:
    run_id: str
    mode: str
    trajectory: str
    repetition: int
    from_timestep: int
    to_timestep: int
    jsd: float
    hellinger: float


def divergence_rows(record: RunRecord) -> List[DivergenceRow]:
    """Distance between consecutive posteriors: one row per step after the first."""
    return [
        DivergenceRow(
            record.run_id, record.mode, record.trajectory, record.repetition,
            before.timestep, after.timestep,
            jsd(before.posterior, after.posterior), hellinger(before.posterior, after.posterior),
        )
        for before, after in zip(record.steps, record.steps[1:])
    ]
