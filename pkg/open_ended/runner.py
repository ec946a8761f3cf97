"""
Inference over an open action space.

Each step the model proposes candidate actions, rows are elicited over
them, and the observation is matched to them by embedding similarity.
"""
import logging
from typing import List, Optional, Tuple

from django.conf import settings

from engine.config import InferenceConfig
from engine.likelihood import elicit_matrix
from engine.prompts import render_prompt
from engine.records import Episode, EpisodeStep, HypothesisSet, StepRecord
from engine.runner import StepCallback, run_steps
from engine.update import max_abs_error, posterior_update_llm
from laip.distributions import ProbabilityDistribution
from providers.client import Transcript, complete_with_retries
from providers.embeddings import EmbeddingBackend
from providers.parsers import parse_actions

from .similarity import FreeAction, similarity_weights, soft_posterior_update

logger = logging.getLogger(__name__)


def propose_actions(
    config: InferenceConfig,
    episode: Episode,
    step: EpisodeStep,
    k: Optional[int] = None,
) -> Tuple[List[FreeAction], List[Transcript]]:
    """
    Ask for ``k`` distinct things the subject might do in this step's situation.

    The returned order fixes the matrix columns for the step.
    """
    k = k or settings.LAIP['PROPOSED_ACTIONS']
    user = render_prompt('propose_actions', {
        'state_context': step.state_context,
        'history': step.history,
        'subject': episode.subject,
        'k': k,
    }, config.prompt_version)
    metadata = dict(step.metadata)
    metadata.update({'kind': 'actions', 'k': k})
    request = config.request(
        episode.system_prompt, user, temperature=config.hypothesis_temperature, metadata=metadata
    )
    texts, transcripts = complete_with_retries(
        config.provider, request, lambda text: parse_actions(text, k), retries=config.retries
    )
    return [FreeAction(text) for text in texts], transcripts


def infer_free_step(
    config: InferenceConfig,
    episode: Episode,
    hypotheses: HypothesisSet,
    step: EpisodeStep,
    prior: ProbabilityDistribution,
    embedder: EmbeddingBackend,
    k: Optional[int] = None,
    temperature: Optional[float] = None,
) -> StepRecord:
    actions, transcripts = propose_actions(config, episode, step, k)
    texts = [action.text for action in actions]
    matrix, row_transcripts = elicit_matrix(config, episode, step, hypotheses, texts, texts)
    transcripts = transcripts + row_transcripts
    soft_obs = similarity_weights(step.observed, actions, embedder, temperature)
    math_posterior = soft_posterior_update(prior, matrix, soft_obs)
    posterior = math_posterior
    llm_error = None
    if config.update_mode == 'llm':
        posterior, update_transcripts = posterior_update_llm(
            config, episode, step, hypotheses, prior, matrix, soft_obs.weights
        )
        transcripts = transcripts + update_transcripts
        llm_error = max_abs_error(posterior, math_posterior)
    return StepRecord(
        timestep=step.timestep,
        state_context=step.state_context,
        actions=tuple(texts),
        observed=step.observed,
        prior=prior,
        posterior=posterior,
        matrix=matrix,
        obs_weights=soft_obs.weights,
        math_posterior=math_posterior if config.update_mode == 'llm' else None,
        llm_posterior_error=llm_error,
        raw=tuple(transcripts),
    )


def run_open_ended(
    config: InferenceConfig,
    episode: Episode,
    hypotheses: HypothesisSet,
    prior: ProbabilityDistribution,
    embedder: EmbeddingBackend,
    k: Optional[int] = None,
    temperature: Optional[float] = None,
    on_step: Optional[StepCallback] = None,
) -> List[StepRecord]:
    """
    Run the full model with proposed candidates and soft observations.

    Any episode works, including restaurant episodes, whose fixed candidate
    lists are ignored in favour of proposed ones.
    """
    logger.info(
        f"Running {episode.id} open-ended: {len(hypotheses)} hypotheses, {len(episode.steps)} steps, "
        f"{config.update_mode} update"
    )
    return run_steps(
        episode,
        hypotheses,
        prior,
        lambda step, current: infer_free_step(
            config, episode, hypotheses, step, current, embedder, k, temperature
        ),
        on_step,
    )
