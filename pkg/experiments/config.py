"""Experiment configuration: one mode, a list of trajectories, repetitions and model settings."""
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from django.conf import settings

from .serializers import ExperimentConfigSerializer

CONFIG_DIR = Path(__file__).resolve().parent / 'configs'


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    mode: str
    trajectories: List[str]
    task: str = 'restaurants'
    repetitions: int = 1
    seeds: List[int] = field(default_factory=list)
    backend: Dict[str, Any] = field(default_factory=dict)
    embedding: Dict[str, Any] = field(default_factory=dict)
    hypothesis_mode: str = 'orderings'
    hypothesis_fixture: str = ''
    n_hypotheses: int = 6
    prior_mode: str = 'uniform'
    candidate_mode: str = 'fixed'
    proposed_actions: Optional[int] = None
    epsilon: Optional[float] = None
    softmax_temperature: Optional[float] = None
    likelihood_temperature: Optional[float] = None
    hypothesis_temperature: Optional[float] = None
    floor: Optional[float] = None
    retries: Optional[int] = None
    max_workers: Optional[int] = None
    run_workers: Optional[int] = None
    prompt_version: Optional[str] = None
    mapping: str = ''

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> 'ExperimentConfig':
        """Validate ``data``; raises ValidationError on any problem."""
        serializer = ExperimentConfigSerializer(data=dict(data))
        serializer.is_valid(raise_exception=True)
        values = {k: v for k, v in serializer.validated_data.items()}
        values['backend'] = dict(values['backend'])
        values['embedding'] = dict(values['embedding'])
        return cls(**values)

    @property
    def update_mode(self) -> str:
        return 'llm' if self.mode == 'laip-lcp' else 'math'

    @property
    def effective_epsilon(self) -> float:
        return settings.LAIP['EPSILON'] if self.epsilon is None else self.epsilon

    def to_json(self) -> Dict[str, Any]:
        return asdict(self)


def read_config(path: Union[str, Path]) -> Dict[str, Any]:
    """Raw config data by path, or by name from the shipped ``configs/`` directory."""
    path = Path(path)
    if not path.is_file() and not path.suffix:
        path = CONFIG_DIR / f"{path}.json"
    with path.open(encoding='utf-8') as fh:
        return json.load(fh)


def load_experiment_config(path: Union[str, Path], **overrides) -> ExperimentConfig:
    """
    Read a config by path, or by name from the shipped ``configs/`` directory.

    ``overrides`` replace top-level keys before validation.
    """
    data = read_config(path)
    data.update({k: v for k, v in overrides.items() if v is not None})
    return ExperimentConfig.from_dict(data)


def config_from_snapshot(snapshot: Mapping[str, Any], **overrides) -> ExperimentConfig:
    """Rebuild a config stored with a run, replacing top-level keys."""
    data = {k: v for k, v in snapshot.items() if v is not None}
    data.update(overrides)
    return ExperimentConfig.from_dict(data)
