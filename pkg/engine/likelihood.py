"""Per-hypothesis action likelihoods, one provider call per hypothesis."""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence, Tuple

from laip.distributions import ProbabilityDistribution
from laip.exceptions import DimensionMismatch
from providers.client import Transcript, complete_with_retries
from providers.parsers import parse_distribution

from .config import InferenceConfig
from .prompts import labelled, render_prompt
from .records import Episode, EpisodeStep, Hypothesis, HypothesisSet, LikelihoodMatrix

logger = logging.getLogger(__name__)


def action_labels(k: int) -> List[str]:
    return [f"A{j}" for j in range(1, k + 1)]


def elicit_likelihood_row(
    config: InferenceConfig,
    episode: Episode,
    step: EpisodeStep,
    hypothesis: Hypothesis,
    candidates: Optional[Sequence[str]] = None,
    candidate_labels: Optional[Sequence[str]] = None,
) -> Tuple[ProbabilityDistribution, List[Transcript]]:
    """
    Ask how likely each candidate action is if ``hypothesis`` holds.

    Args:
        config: Provider and sampling settings.
        episode: Supplies the system prompt and subject.
        step: State context and history for this timestep.
        hypothesis: The hypothesis assumed true.
        candidates: Action descriptions; defaults to the step's own.
        candidate_labels: Machine labels of the candidates, passed to
            scripted responders.

    Returns:
        (row labelled A1..Ak, transcripts). A single candidate gets
        probability 1 without a provider call.
    """
    candidates = tuple(step.candidates if candidates is None else candidates)
    if not candidates:
        raise DimensionMismatch(f"Step {step.timestep} of {episode.id} has no candidate actions.")
    labels = action_labels(len(candidates))
    if len(candidates) == 1:
        return ProbabilityDistribution.indicator(labels, 0), []

    if candidate_labels is None:
        candidate_labels = step.candidate_labels or candidates
    user = render_prompt('likelihood', {
        'state_context': step.state_context,
        'history': step.history,
        'subject': episode.subject,
        'hypothesis': hypothesis.text,
        'actions': labelled(candidates, 'A'),
    }, config.prompt_version)
    metadata = dict(step.metadata)
    metadata.update({
        'kind': 'likelihood',
        'hypothesis': hypothesis.text,
        'ordering': hypothesis.structured.label if hypothesis.structured else None,
        'actions': list(candidate_labels),
    })
    request = config.request(episode.system_prompt, user, metadata=metadata)
    return complete_with_retries(
        config.provider,
        request,
        lambda text: parse_distribution(text, len(candidates), labels=labels, prefix='A', floor=config.floor),
        retries=config.retries,
    )


def elicit_matrix(
    config: InferenceConfig,
    episode: Episode,
    step: EpisodeStep,
    hypotheses: HypothesisSet,
    candidates: Optional[Sequence[str]] = None,
    candidate_labels: Optional[Sequence[str]] = None,
) -> Tuple[LikelihoodMatrix, List[Transcript]]:
    """
    Elicit every row concurrently.

    Rows follow the order of ``hypotheses`` regardless of completion order.
    The first failing row's exception propagates.
    """
    candidates = tuple(step.candidates if candidates is None else candidates)

    def row_for(hypothesis: Hypothesis):
        return elicit_likelihood_row(config, episode, step, hypothesis, candidates, candidate_labels)

    with ThreadPoolExecutor(max_workers=max(1, config.max_workers)) as executor:
        results = list(executor.map(row_for, hypotheses))

    transcripts = [t for _, row_transcripts in results for t in row_transcripts]
    logger.debug(
        f"{episode.id} step {step.timestep}: {len(hypotheses)}x{len(candidates)} matrix from {len(transcripts)} calls"
    )
    return LikelihoodMatrix(candidates, tuple(row for row, _ in results)), transcripts
