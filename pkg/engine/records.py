"""
Data model of an inference run.

An ``Episode`` is what the observer is shown, step by step. Hypotheses,
likelihood matrices and step records are what the observer produces.
"""
from dataclasses import dataclass, field
from typing import Any, Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from rest_framework import serializers

from environment.graph import RoomGraph
from laip.distributions import ProbabilityDistribution
from laip.exceptions import DimensionMismatch
from oracle.policy import PreferenceOrdering, ordering_from_text
from providers.client import Transcript


@dataclass(frozen=True)
class Hypothesis:
    """A candidate mental state; ``structured`` is set when it is a strict ranking."""

    id: int
    text: str
    structured: Optional[PreferenceOrdering] = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise serializers.ValidationError(f"Hypothesis {self.id} has no text.")

    @property
    def label(self) -> str:
        return f"H{self.id}"

    def to_json(self) -> Dict[str, Any]:
        return {
            'id': self.id,
            'text': self.text,
            'ordering': self.structured.label if self.structured else None,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> 'Hypothesis':
        ordering = data.get('ordering')
        return cls(
            id=int(data['id']),
            text=data['text'],
            structured=PreferenceOrdering.from_label(ordering) if ordering else None,
        )


@dataclass(frozen=True)
class HypothesisSet:
    hypotheses: Tuple[Hypothesis, ...]

    def __post_init__(self):
        object.__setattr__(self, 'hypotheses', tuple(self.hypotheses))
        if not self.hypotheses:
            raise serializers.ValidationError("A hypothesis set needs at least one hypothesis.")
        ids = [h.id for h in self.hypotheses]
        if len(set(ids)) != len(ids):
            raise serializers.ValidationError(f"Hypothesis ids must be unique: {ids}")

    @classmethod
    def from_texts(cls, texts: Sequence[str], graph: Optional[RoomGraph] = None) -> 'HypothesisSet':
        """Number ``texts`` from 1, recognising canonical ranking sentences when a graph is given."""
        return cls(tuple(
            Hypothesis(i, text, ordering_from_text(text, graph) if graph is not None else None)
            for i, text in enumerate(texts, start=1)
        ))

    def __len__(self):
        return len(self.hypotheses)

    def __iter__(self) -> Iterator[Hypothesis]:
        return iter(self.hypotheses)

    def __getitem__(self, index: int) -> Hypothesis:
        return self.hypotheses[index]

    @property
    def labels(self) -> Tuple[str, ...]:
        return tuple(h.label for h in self.hypotheses)

    def permuted(self, order: Sequence[int]) -> 'HypothesisSet':
        return HypothesisSet(tuple(self.hypotheses[i] for i in order))

    def to_json(self) -> List[Dict[str, Any]]:
        return [h.to_json() for h in self.hypotheses]

    @classmethod
    def from_json(cls, data: Sequence[Mapping[str, Any]]) -> 'HypothesisSet':
        return cls(tuple(Hypothesis.from_json(item) for item in data))


@dataclass(frozen=True)
class LikelihoodMatrix:
    """P(action | hypothesis): one row per hypothesis over a shared candidate list."""

    actions: Tuple[str, ...]
    rows: Tuple[ProbabilityDistribution, ...]

    def __post_init__(self):
        object.__setattr__(self, 'actions', tuple(self.actions))
        object.__setattr__(self, 'rows', tuple(self.rows))
        for index, row in enumerate(self.rows):
            if len(row) != len(self.actions):
                raise DimensionMismatch(
                    f"Row {index} has {len(row)} entries for {len(self.actions)} actions."
                )

    @classmethod
    def from_array(cls, values, actions: Sequence[str]) -> 'LikelihoodMatrix':
        labels = [f"A{j}" for j in range(1, len(actions) + 1)]
        return cls(tuple(actions), tuple(ProbabilityDistribution.from_weights(row, labels) for row in np.asarray(values)))

    @property
    def shape(self) -> Tuple[int, int]:
        return len(self.rows), len(self.actions)

    def as_array(self) -> np.ndarray:
        if not self.rows:
            return np.zeros((0, len(self.actions)))
        return np.vstack([row.as_array() for row in self.rows])

    def column(self, index: int) -> np.ndarray:
        return self.as_array()[:, index]

    def to_json(self) -> Dict[str, Any]:
        return {'actions': list(self.actions), 'rows': [row.to_json() for row in self.rows]}

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> 'LikelihoodMatrix':
        return cls(
            tuple(data['actions']),
            tuple(ProbabilityDistribution.from_json(row) for row in data['rows']),
        )


def _optional_json(value):
    return value.to_json() if value is not None else None


@dataclass(frozen=True)
class StepRecord:
    """One timestep of inference, immutable once emitted."""

    timestep: int
    state_context: str
    actions: Tuple[str, ...]
    observed: str
    prior: ProbabilityDistribution
    posterior: ProbabilityDistribution
    matrix: Optional[LikelihoodMatrix] = None
    obs_weights: Optional[ProbabilityDistribution] = None
    math_posterior: Optional[ProbabilityDistribution] = None
    llm_posterior_error: Optional[float] = None
    raw: Tuple[Transcript, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'actions', tuple(self.actions))
        object.__setattr__(self, 'raw', tuple(self.raw))
        if self.prior.labels != self.posterior.labels:
            raise DimensionMismatch(
                f"Step {self.timestep}: prior over {self.prior.labels} but posterior over {self.posterior.labels}."
            )

    @property
    def usage(self) -> Dict[str, int]:
        totals = {'calls': len(self.raw), 'prompt_tokens': 0, 'completion_tokens': 0}
        for transcript in self.raw:
            totals['prompt_tokens'] += int(transcript.usage.get('prompt_tokens', 0))
            totals['completion_tokens'] += int(transcript.usage.get('completion_tokens', 0))
        return totals

    def to_json(self) -> Dict[str, Any]:
        return {
            'timestep': self.timestep,
            'state_context': self.state_context,
            'actions': list(self.actions),
            'observed': self.observed,
            'prior': self.prior.to_json(),
            'posterior': self.posterior.to_json(),
            'matrix': _optional_json(self.matrix),
            'obs_weights': _optional_json(self.obs_weights),
            'math_posterior': _optional_json(self.math_posterior),
            'llm_posterior_error': self.llm_posterior_error,
            'raw': [t.to_json() for t in self.raw],
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> 'StepRecord':
        def distribution(key):
            return ProbabilityDistribution.from_json(data[key]) if data.get(key) else None

        return cls(
            timestep=int(data['timestep']),
            state_context=data['state_context'],
            actions=tuple(data['actions']),
            observed=data['observed'],
            prior=distribution('prior'),
            posterior=distribution('posterior'),
            matrix=LikelihoodMatrix.from_json(data['matrix']) if data.get('matrix') else None,
            obs_weights=distribution('obs_weights'),
            math_posterior=distribution('math_posterior'),
            llm_posterior_error=data.get('llm_posterior_error'),
            raw=tuple(Transcript.from_json(t) for t in data.get('raw', [])),
        )


@dataclass(frozen=True)
class EpisodeStep:
    """
    What the observer sees at one timestep.

    ``candidates`` are the action descriptions offered to the model and
    ``observed_index`` points at the one the agent took. Open-ended steps
    have no fixed candidates and only carry the observed text.
    """

    timestep: int
    state_context: str
    observed: str
    candidates: Tuple[str, ...] = ()
    candidate_labels: Tuple[str, ...] = ()
    observed_index: Optional[int] = None
    history: Tuple[str, ...] = ()
    metadata: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, 'candidates', tuple(self.candidates))
        object.__setattr__(self, 'candidate_labels', tuple(self.candidate_labels))
        object.__setattr__(self, 'history', tuple(self.history))
        if self.observed_index is not None and not 0 <= self.observed_index < len(self.candidates):
            raise DimensionMismatch(
                f"Observed index {self.observed_index} outside {len(self.candidates)} candidates."
            )


@dataclass(frozen=True)
class Episode:
    """A task shown to the observer: rules, scenario and the steps to infer from."""

    id: str
    task: str
    system_prompt: str
    scenario: str
    subject: str
    steps: Tuple[EpisodeStep, ...]
    graph: Optional[RoomGraph] = None

    def __post_init__(self):
        object.__setattr__(self, 'steps', tuple(self.steps))

    def truncated(self, length: int) -> 'Episode':
        return Episode(self.id, self.task, self.system_prompt, self.scenario, self.subject, self.steps[:length], self.graph)
