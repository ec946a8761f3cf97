"""
Run persistence.

Each run gets ``<RUNS_DIR>/<run_id>/steps.jsonl`` (one StepRecord per line,
appended as steps are emitted) and ``run.json``; the database row in
``ExperimentRun`` indexes them.
"""
import json
import logging
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from django.conf import settings

from engine.records import HypothesisSet, StepRecord
from laip.distributions import ProbabilityDistribution
from providers.client import Transcript

from .exceptions import EmptySelection
from .models import ExperimentRun

logger = logging.getLogger(__name__)

COMPLETED = 'COMPLETED'
FAILED = 'FAILED'
RUNNING = 'RUNNING'


def make_run_id(batch: str, mode: str, trajectory: str, repetition: int) -> str:
    return f"{batch}-{mode}-{trajectory}-rep{repetition}"


@dataclass
class RunRecord:
    run_id: str
    batch: str
    mode: str
    task: str
    trajectory: str
    repetition: int
    seed: Optional[int]
    config: Dict[str, Any]
    hypotheses: Optional[HypothesisSet]
    steps: List[StepRecord] = field(default_factory=list)
    status: str = COMPLETED
    error: str = ''
    wall_clock: float = 0.0
    setup: List[Transcript] = field(default_factory=list)

    @property
    def final_posterior(self) -> Optional[ProbabilityDistribution]:
        return self.steps[-1].posterior if self.steps else None

    @property
    def usage(self) -> Dict[str, int]:
        """Calls and tokens over every step plus hypothesis generation."""
        totals = {'calls': len(self.setup), 'prompt_tokens': 0, 'completion_tokens': 0}
        for transcript in self.setup:
            totals['prompt_tokens'] += int(transcript.usage.get('prompt_tokens', 0))
            totals['completion_tokens'] += int(transcript.usage.get('completion_tokens', 0))
        for step in self.steps:
            for key, value in step.usage.items():
                totals[key] += value
        return totals

    def to_json(self) -> Dict[str, Any]:
        """Everything except the steps, which live in steps.jsonl."""
        return {
            'run_id': self.run_id,
            'batch': self.batch,
            'mode': self.mode,
            'task': self.task,
            'trajectory': self.trajectory,
            'repetition': self.repetition,
            'seed': self.seed,
            'config': self.config,
            'hypotheses': self.hypotheses.to_json() if self.hypotheses else None,
            'status': self.status,
            'error': self.error,
            'wall_clock': self.wall_clock,
            'steps_completed': len(self.steps),
            'final_posterior': self.final_posterior.to_json() if self.final_posterior else None,
            'usage': self.usage,
            'setup': [t.to_json() for t in self.setup],
        }

    @classmethod
    def from_json(cls, data: Dict[str, Any], steps: List[StepRecord]) -> 'RunRecord':
        return cls(
            run_id=data['run_id'],
            batch=data['batch'],
            mode=data['mode'],
            task=data['task'],
            trajectory=data['trajectory'],
            repetition=int(data['repetition']),
            seed=data.get('seed'),
            config=data.get('config', {}),
            hypotheses=HypothesisSet.from_json(data['hypotheses']) if data.get('hypotheses') else None,
            steps=steps,
            status=data.get('status', COMPLETED),
            error=data.get('error', ''),
            wall_clock=float(data.get('wall_clock', 0.0)),
            setup=[Transcript.from_json(t) for t in data.get('setup', [])],
        )


def runs_root(runs_dir: Optional[Union[str, Path]] = None) -> Path:
    return Path(runs_dir or settings.LAIP['RUNS_DIR'])


class StepWriter:
    """``on_step`` callback appending each record to a run's steps.jsonl."""

    def __init__(self, path: Path):
        self.path = path
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self.path.write_text('', encoding='utf-8')
        self._lock = threading.Lock()

    def __call__(self, record: StepRecord):
        line = json.dumps(record.to_json(), ensure_ascii=False)
        with self._lock, self.path.open('a', encoding='utf-8') as fh:
            fh.write(line + '\n')


def step_writer(run_id: str, runs_dir: Optional[Union[str, Path]] = None) -> StepWriter:
    return StepWriter(runs_root(runs_dir) / run_id / 'steps.jsonl')


def start_run(record: RunRecord) -> ExperimentRun:
    run, _ = ExperimentRun.objects.update_or_create(
        run_id=record.run_id,
        defaults={
            'batch': record.batch,
            'mode': record.mode,
            'task': record.task,
            'trajectory': record.trajectory,
            'repetition': record.repetition,
            'seed': record.seed,
            'status': RUNNING,
            'error': '',
            'config': record.config,
            'hypotheses': [],
            'final_posterior': None,
            'steps_completed': 0,
            'calls': 0,
            'prompt_tokens': 0,
            'completion_tokens': 0,
            'wall_clock': 0.0,
        },
    )
    return run


def save_run(record: RunRecord, runs_dir: Optional[Union[str, Path]] = None) -> Path:
    """Write run.json and update the index row."""
    directory = runs_root(runs_dir) / record.run_id
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / 'run.json'
    data = record.to_json()
    with path.open('w', encoding='utf-8') as fh:
        json.dump(data, fh, indent=2, ensure_ascii=False)
    usage = data['usage']
    ExperimentRun.objects.update_or_create(
        run_id=record.run_id,
        defaults={
            'batch': record.batch,
            'mode': record.mode,
            'task': record.task,
            'trajectory': record.trajectory,
            'repetition': record.repetition,
            'seed': record.seed,
            'status': record.status,
            'error': record.error,
            'config': record.config,
            'hypotheses': data['hypotheses'] or [],
            'final_posterior': data['final_posterior'],
            'steps_completed': len(record.steps),
            'calls': usage['calls'],
            'prompt_tokens': usage['prompt_tokens'],
            'completion_tokens': usage['completion_tokens'],
            'wall_clock': record.wall_clock,
        },
    )
    return path


def load_run(run_id: str, runs_dir: Optional[Union[str, Path]] = None) -> RunRecord:
    directory = runs_root(runs_dir) / run_id
    with (directory / 'run.json').open(encoding='utf-8') as fh:
        data = json.load(fh)
    steps = []
    steps_path = directory / 'steps.jsonl'
    if steps_path.exists():
        with steps_path.open(encoding='utf-8') as fh:
            steps = [StepRecord.from_json(json.loads(line)) for line in fh if line.strip()]
    return RunRecord.from_json(data, steps)


def load_records(
    batch: str,
    runs_dir: Optional[Union[str, Path]] = None,
    modes: Optional[List[str]] = None,
    completed_only: bool = False,
) -> List[RunRecord]:
    """
    Rebuild the RunRecords of a batch from the index and the run directories.

    Raises:
        EmptySelection when nothing matches.
    """
    runs = ExperimentRun.objects.filter(batch=batch)
    if modes:
        runs = runs.filter(mode__in=modes)
    if completed_only:
        runs = runs.filter(status=COMPLETED)
    records = [load_run(run.run_id, runs_dir) for run in runs.order_by('run_id')]
    if not records:
        raise EmptySelection(f"No runs found for batch {batch!r}.")
    logger.debug(f"Loaded {len(records)} runs of batch {batch}")
    return records
