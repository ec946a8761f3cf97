"""Matching a free-text observation against proposed actions by embedding similarity."""
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Optional, Sequence, Tuple

import numpy as np
from django.conf import settings
from rest_framework import serializers
from scipy.special import softmax

from engine.likelihood import action_labels
from engine.records import LikelihoodMatrix
from engine.update import posterior_update_math
from laip.distributions import ProbabilityDistribution
from laip.exceptions import DegenerateInput, DimensionMismatch
from providers.embeddings import EmbeddingBackend
from providers.records import EmbeddingVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class FreeAction:
    text: str
    embedding: Optional[EmbeddingVector] = None

    def __post_init__(self):
        if not self.text or not self.text.strip():
            raise serializers.ValidationError("Actions must have text.")

    def embedded(self, embedder: EmbeddingBackend) -> 'FreeAction':
        """This action with its embedding filled in."""
        if self.embedding is not None:
            return self
        return replace(self, embedding=embedder.embed(self.text))


@dataclass(frozen=True)
class SoftObservation:
    """The observed text and its softmax weights over the candidate actions."""

    text: str
    candidates: Tuple[str, ...]
    weights: ProbabilityDistribution
    temperature: float
    similarities: Tuple[float, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, 'candidates', tuple(self.candidates))
        object.__setattr__(self, 'similarities', tuple(float(s) for s in self.similarities))
        if not self.temperature > 0:
            raise serializers.ValidationError("Softmax temperature must be positive.")
        if len(self.weights) != len(self.candidates):
            raise DimensionMismatch(f"{len(self.weights)} weights for {len(self.candidates)} candidates.")


def cosine_similarity(u: EmbeddingVector, v: EmbeddingVector) -> float:
    a, b = u.as_array(), v.as_array()
    if a.shape != b.shape:
        raise DimensionMismatch(f"Cannot compare {a.shape[0]}- and {b.shape[0]}-dimensional embeddings.")
    norm = np.linalg.norm(a) * np.linalg.norm(b)
    if norm == 0:
        raise DegenerateInput("Cosine similarity is undefined for a zero vector.")
    return float(np.dot(a, b) / norm)


def softmax_weights(
    similarities: Sequence[float],
    temperature: Optional[float] = None,
    labels: Optional[Sequence[str]] = None,
) -> ProbabilityDistribution:
    """softmax(similarities / temperature), labelled A1..Ak by default."""
    temperature = settings.LAIP['SOFTMAX_TEMPERATURE'] if temperature is None else temperature
    if not temperature > 0:
        raise serializers.ValidationError("Softmax temperature must be positive.")
    values = np.asarray(similarities, dtype=float)
    if values.size == 0:
        raise DimensionMismatch("No similarities to weight.")
    labels = labels or action_labels(values.size)
    return ProbabilityDistribution.from_weights(softmax(values / temperature), labels)


def similarity_weights(
    observed: str,
    candidates: Sequence[FreeAction],
    embedder: EmbeddingBackend,
    temperature: Optional[float] = None,
) -> SoftObservation:
    """
    Weight each candidate by how close it is to the observed action.

    Raw cosine similarities go into the softmax. Candidate embeddings are
    fetched concurrently; TransportError from the embedder propagates.
    """
    if not candidates:
        raise DimensionMismatch("Cannot weight an observation against no candidates.")
    temperature = settings.LAIP['SOFTMAX_TEMPERATURE'] if temperature is None else temperature
    target = embedder.embed(observed)
    with ThreadPoolExecutor(max_workers=max(1, settings.LAIP['MAX_WORKERS'])) as executor:
        embedded = list(executor.map(lambda action: action.embedded(embedder), candidates))
    similarities = [cosine_similarity(target, action.embedding) for action in embedded]
    weights = softmax_weights(similarities, temperature)
    logger.debug(f"Similarities for {observed!r}: {np.round(similarities, 4).tolist()}")
    return SoftObservation(
        text=observed,
        candidates=tuple(action.text for action in embedded),
        weights=weights,
        temperature=temperature,
        similarities=tuple(similarities),
    )


def soft_posterior_update(
    prior: ProbabilityDistribution,
    matrix: LikelihoodMatrix,
    soft_obs: SoftObservation,
) -> ProbabilityDistribution:
    """
    posterior_i ∝ prior_i * Σ_j weights_j * matrix[i, j].

    An indicator SoftObservation gives exactly the single-action update.
    """
    if tuple(matrix.actions) != soft_obs.candidates:
        raise DimensionMismatch("Matrix columns and observation candidates differ.")
    return posterior_update_math(prior, matrix, soft_obs.weights)
