"""CSV tables and a plain-text summary for a set of runs."""
import csv
import logging
from collections import defaultdict
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Union

import numpy as np

from .analysis import ComparisonTable, MassRow, divergence_rows, subset_masses
from .exceptions import EmptySelection
from .reference import reference_lines
from .store import FAILED, RunRecord

logger = logging.getLogger(__name__)

EQUIVALENCE_TOLERANCE = 1e-9


def _write_csv(path: Path, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    with path.open('w', newline='', encoding='utf-8') as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)
    return path


def _fmt(value: Optional[float]) -> str:
    return 'undefined' if value is None else f"{value:.6g}"


def summary_lines(
    records: List[RunRecord],
    comparison: Optional[ComparisonTable],
    masses: Sequence[MassRow] = (),
) -> List[str]:
    failed = [r for r in records if r.status == FAILED]
    usage = {'calls': 0, 'prompt_tokens': 0, 'completion_tokens': 0}
    for record in records:
        for key, value in record.usage.items():
            usage[key] += value
    modes = sorted({r.mode for r in records})
    lines = [
        f"Runs: {len(records)} ({len(records) - len(failed)} completed, {len(failed)} failed)",
        f"Modes: {', '.join(modes)}",
        f"Trajectories: {', '.join(sorted({r.trajectory for r in records}))}",
        f"Provider calls: {usage['calls']} "
        f"(prompt tokens {usage['prompt_tokens']}, completion tokens {usage['completion_tokens']})",
    ]
    for record in failed:
        lines.append(f"  FAILED {record.run_id} after {len(record.steps)} steps: {record.error}")

    if comparison is not None and comparison.correlations:
        lines.append('')
        lines.append('Agreement with the optimal observer (final posteriors):')
        for row in comparison.correlations:
            line = (
                f"  {row.mode}: r={_fmt(row.pearson_r)} rho={_fmt(row.spearman_rho)} "
                f"JSD={_fmt(row.jsd)} Hellinger={_fmt(row.hellinger)} max|dP|={row.max_abs_error:.3g}"
            )
            if row.note:
                line += f" ({row.note})"
            lines.append(line)
        worst = comparison.max_abs_error
        if worst <= EQUIVALENCE_TOLERANCE:
            lines.append(f"Oracle equivalence holds: max |dposterior| = {worst:.3g} <= {EQUIVALENCE_TOLERANCE:g}")
        else:
            lines.append(f"Max |dposterior| against the oracle: {worst:.3g}")
        if comparison.mode_comparisons:
            lines.append('')
            lines.append('Mode against mode (per-trajectory distance to the oracle):')
        for row in comparison.mode_comparisons:
            if row.t_stat is None:
                lines.append(f"  {row.mode_a} vs {row.mode_b} on {row.measure}: no t-test ({row.note})")
            else:
                lines.append(
                    f"  {row.mode_a} vs {row.mode_b} on {row.measure}: t({row.dof})={row.t_stat:.3g} "
                    f"d={row.cohens_d:.3g} p={row.p_value:.3g}"
                )

    if masses:
        lines.append('')
        lines.append('Final posterior mass on target hypotheses (mean over runs):')
        grouped = defaultdict(list)
        for row in masses:
            grouped[(row.mode, row.trajectory, '+'.join(row.hypotheses))].append(row.mass)
        for (mode, trajectory, hypotheses), values in sorted(grouped.items()):
            lines.append(f"  {mode} {trajectory} {hypotheses}: {np.mean(values):.3f} over {len(values)} runs")

    reference = reference_lines(modes)
    if reference:
        lines.append('')
        lines.append('Published live-model reference values (not reproduced offline):')
        lines.extend(reference)
    return lines


def emit_report(
    records: Iterable[RunRecord],
    out_dir: Union[str, Path],
    comparison: Optional[ComparisonTable] = None,
    mass_labels: Optional[Sequence[str]] = None,
) -> List[Path]:
    """
    Write posteriors.csv, divergence.csv and summary.txt, plus
    correlation.csv, distance.csv and mode_comparison.csv when a comparison
    is given and mass.csv when any run has target hypotheses.

    Records are sorted by run id first, so their order never changes the output.
    ``mass_labels`` overrides the default target hypotheses for every run.

    Raises:
        EmptySelection when ``records`` is empty.
    """
    records = sorted(records, key=lambda r: r.run_id)
    if not records:
        raise EmptySelection("No runs to report on.")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    posterior_rows = []
    for record in records:
        texts = {h.label: h.text for h in record.hypotheses} if record.hypotheses else {}
        for step in record.steps:
            for label, prior, posterior in zip(step.posterior.labels, step.prior.probs, step.posterior.probs):
                posterior_rows.append((
                    record.run_id, record.mode, record.trajectory, record.repetition, step.timestep,
                    label, texts.get(label, ''), repr(prior), repr(posterior),
                ))
    paths = [_write_csv(
        out / 'posteriors.csv',
        ('run_id', 'mode', 'trajectory', 'repetition', 'timestep', 'hypothesis', 'text', 'prior', 'posterior'),
        posterior_rows,
    )]

    paths.append(_write_csv(
        out / 'divergence.csv',
        ('run_id', 'mode', 'trajectory', 'repetition', 'from_timestep', 'to_timestep', 'jsd', 'hellinger'),
        (
            (row.run_id, row.mode, row.trajectory, row.repetition, row.from_timestep, row.to_timestep,
             repr(row.jsd), repr(row.hellinger))
            for record in records for row in divergence_rows(record)
        ),
    ))

    if comparison is not None:
        paths.append(_write_csv(
            out / 'correlation.csv',
            ('mode', 'points', 'pearson_r', 'spearman_rho', 'jsd', 'hellinger', 'max_abs_error'),
            (
                (row.mode, row.points, _fmt(row.pearson_r), _fmt(row.spearman_rho),
                 _fmt(row.jsd), _fmt(row.hellinger), _fmt(row.max_abs_error))
                for row in comparison.correlations
            ),
        ))
        paths.append(_write_csv(
            out / 'distance.csv',
            ('mode', 'trajectory', 'runs', 'jsd', 'hellinger', 'alignment', 'max_abs_error'),
            (
                (row.mode, row.trajectory, row.runs, _fmt(row.jsd), _fmt(row.hellinger),
                 _fmt(row.alignment), _fmt(row.max_abs_error))
                for row in comparison.distances
            ),
        ))
        if comparison.mode_comparisons:
            paths.append(_write_csv(
                out / 'mode_comparison.csv',
                ('mode_a', 'mode_b', 'measure', 't', 'dof', 'cohens_d', 'p_value', 'note'),
                (
                    (row.mode_a, row.mode_b, row.measure, _fmt(row.t_stat), row.dof if row.dof is not None else '',
                     _fmt(row.cohens_d), _fmt(row.p_value), row.note)
                    for row in comparison.mode_comparisons
                ),
            ))

    masses = subset_masses(records, mass_labels)
    if masses:
        paths.append(_write_csv(
            out / 'mass.csv',
            ('run_id', 'mode', 'trajectory', 'repetition', 'hypotheses', 'mass'),
            (
                (row.run_id, row.mode, row.trajectory, row.repetition, '+'.join(row.hypotheses), repr(row.mass))
                for row in masses
            ),
        ))

    summary = out / 'summary.txt'
    summary.write_text('\n'.join(summary_lines(records, comparison, masses)) + '\n', encoding='utf-8')
    paths.append(summary)
    logger.info(f"Wrote {len(paths)} report files to {out}")
    return paths
