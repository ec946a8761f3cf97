"""
The simplex type shared by every app.

A ``ProbabilityDistribution`` is an immutable, labelled probability vector.
Hypothesis posteriors, likelihood rows, action policies and soft
observations are all instances of it.
"""
from dataclasses import dataclass
from typing import Dict, Iterable, Optional, Sequence, Tuple, Union

import numpy as np

from .exceptions import DegeneratePosterior, DimensionMismatch, SimplexError

SIMPLEX_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ProbabilityDistribution:
    """Normalized probabilities over an ordered set of labels."""

    labels: Tuple[str, ...]
    probs: Tuple[float, ...]

    def __post_init__(self):
        if len(self.labels) != len(self.probs):
            raise DimensionMismatch(
                f"{len(self.labels)} labels but {len(self.probs)} probabilities"
            )
        if len(set(self.labels)) != len(self.labels):
            raise SimplexError("Distribution labels must be unique.")
        if not self.probs:
            return
        values = np.asarray(self.probs, dtype=float)
        if not np.all(np.isfinite(values)) or np.any(values < 0.0):
            raise SimplexError(f"Probabilities must be finite and non-negative: {self.probs}")
        if abs(values.sum() - 1.0) > SIMPLEX_TOLERANCE:
            raise SimplexError(f"Probabilities sum to {values.sum()!r}, not 1.")

    @classmethod
    def from_weights(
        cls,
        weights: Iterable[float],
        labels: Optional[Sequence[str]] = None,
        floor: float = 0.0,
    ) -> 'ProbabilityDistribution':
        """
        Normalize non-negative weights into a distribution.

        Args:
            weights: Non-negative, unnormalized masses.
            labels: Labels for each entry; defaults to "0", "1", ...
            floor: Entries below this value are raised to it before normalizing.

        Returns:
            A ProbabilityDistribution over ``labels``.
        """
        values = np.asarray(list(weights), dtype=float)
        if labels is None:
            labels = [str(i) for i in range(len(values))]
        if len(labels) != len(values):
            raise DimensionMismatch(f"{len(labels)} labels but {len(values)} weights")
        if np.any(~np.isfinite(values)) or np.any(values < 0.0):
            raise SimplexError(f"Weights must be finite and non-negative: {values.tolist()}")
        if floor > 0.0:
            values = np.maximum(values, floor)
        total = values.sum()
        if total <= 0.0:
            raise DegeneratePosterior("All weights are zero; cannot normalize.")
        return cls(tuple(labels), tuple(float(v) for v in values / total))

    @classmethod
    def uniform(cls, labels: Sequence[str]) -> 'ProbabilityDistribution':
        return cls.from_weights(np.ones(len(labels)), labels)

    @classmethod
    def indicator(cls, labels: Sequence[str], index: int) -> 'ProbabilityDistribution':
        weights = np.zeros(len(labels))
        weights[index] = 1.0
        return cls(tuple(labels), tuple(float(w) for w in weights))

    def __len__(self):
        return len(self.probs)

    def __getitem__(self, key: Union[int, str]) -> float:
        if isinstance(key, str):
            return self.probs[self.labels.index(key)]
        return self.probs[key]

    def as_array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    def as_dict(self) -> Dict[str, float]:
        return dict(zip(self.labels, self.probs))

    def argmax(self) -> int:
        return int(np.argmax(self.as_array()))

    def argmax_label(self) -> str:
        return self.labels[self.argmax()]

    def permuted(self, order: Sequence[int]) -> 'ProbabilityDistribution':
        """Return the distribution with entries reordered by ``order``."""
        return ProbabilityDistribution(
            tuple(self.labels[i] for i in order),
            tuple(self.probs[i] for i in order),
        )

    def to_json(self) -> Dict[str, list]:
        return {'labels': list(self.labels), 'probs': list(self.probs)}

    @classmethod
    def from_json(cls, data: Dict[str, list]) -> 'ProbabilityDistribution':
        return cls(tuple(data['labels']), tuple(float(p) for p in data['probs']))
