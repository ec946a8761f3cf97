"""Posterior updates: Bayes' rule in numpy, or delegated to the model."""
import json
import logging
from typing import List, Optional, Tuple

import numpy as np

from laip.distributions import ProbabilityDistribution
from laip.exceptions import DimensionMismatch
from providers.client import Transcript, complete_with_retries
from providers.parsers import parse_distribution

from .config import InferenceConfig
from .prompts import format_probability, labelled, render_prompt
from .records import Episode, EpisodeStep, HypothesisSet, LikelihoodMatrix

logger = logging.getLogger(__name__)


def posterior_update_math(
    prior: ProbabilityDistribution,
    matrix: LikelihoodMatrix,
    obs_weights: ProbabilityDistribution,
) -> ProbabilityDistribution:
    """
    posterior_i ∝ prior_i * Σ_j obs_weights_j * matrix[i, j].

    With indicator ``obs_weights`` this is the single-action Bayes update.

    Raises:
        DimensionMismatch when the shapes disagree.
        DegeneratePosterior when every hypothesis gets zero evidence.
    """
    rows, columns = matrix.shape
    if rows != len(prior):
        raise DimensionMismatch(f"Matrix has {rows} rows for {len(prior)} hypotheses.")
    if columns != len(obs_weights):
        raise DimensionMismatch(f"Matrix has {columns} columns for {len(obs_weights)} observation weights.")
    evidence = matrix.as_array() @ obs_weights.as_array()
    return ProbabilityDistribution.from_weights(prior.as_array() * evidence, prior.labels)


def posterior_update_llm(
    config: InferenceConfig,
    episode: Episode,
    step: EpisodeStep,
    hypotheses: HypothesisSet,
    prior: ProbabilityDistribution,
    matrix: LikelihoodMatrix,
    obs_weights: ProbabilityDistribution,
) -> Tuple[ProbabilityDistribution, List[Transcript]]:
    """
    Show the model the prior, the full matrix and the chosen action; parse its posterior.

    Hypotheses are shown as H1..Hn in set order, and the parsed values are
    mapped back onto ``prior.labels`` by position.
    """
    if matrix.shape[0] != len(prior) or len(hypotheses) != len(prior):
        raise DimensionMismatch("Prior, hypotheses and matrix rows must line up.")
    display = [f"H{i}" for i in range(1, len(prior) + 1)]
    values = matrix.as_array()
    observed_index = int(np.argmax(obs_weights.as_array()))
    soft = not np.isclose(obs_weights[observed_index], 1.0)
    observed = step.observed.rstrip('.')

    user = render_prompt('posterior_llm', {
        'state_context': step.state_context,
        'subject': episode.subject,
        'hypotheses': [
            {'label': label, 'text': h.text, 'prior': format_probability(p)}
            for label, h, p in zip(display, hypotheses, prior.probs)
        ],
        'actions': labelled(matrix.actions, 'A'),
        'rows': [
            f"{label}: " + ', '.join(f"A{j}={format_probability(v)}" for j, v in enumerate(row, start=1))
            for label, row in zip(display, values)
        ],
        'observed': f"did this: {observed}" if soft else f"chose A{observed_index + 1}: {observed}",
        'similarity': ', '.join(
            f"A{j}={format_probability(w)}" for j, w in enumerate(obs_weights.probs, start=1)
        ) if soft else '',
    }, config.prompt_version)
    metadata = dict(step.metadata)
    metadata.update({
        'kind': 'posterior',
        'prior': list(prior.probs),
        'matrix': values.tolist(),
        'observed_index': observed_index,
        'obs_weights': list(obs_weights.probs),
    })
    request = config.request(episode.system_prompt, user, metadata=metadata)
    parsed, transcripts = complete_with_retries(
        config.provider,
        request,
        lambda text: parse_distribution(text, len(prior), labels=display, prefix='H', floor=config.floor),
        retries=config.retries,
    )
    return ProbabilityDistribution(prior.labels, parsed.probs), transcripts


def max_abs_error(a: ProbabilityDistribution, b: Optional[ProbabilityDistribution]) -> Optional[float]:
    if b is None:
        return None
    return float(np.max(np.abs(a.as_array() - b.as_array())))


def describe_posterior(posterior: ProbabilityDistribution) -> str:
    return json.dumps({label: round(p, 4) for label, p in posterior.as_dict().items()})
