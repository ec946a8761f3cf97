"""
The inference loop: the posterior after step t is the prior of step t+1.

``run_steps`` is shared by every model configuration; each supplies the
function that turns (step, prior) into a StepRecord.
"""
import logging
from typing import Callable, List, Optional

from laip.distributions import ProbabilityDistribution
from laip.exceptions import DimensionMismatch, LAIPError

from .config import InferenceConfig
from .exceptions import RunAborted
from .likelihood import elicit_matrix
from .records import Episode, EpisodeStep, HypothesisSet, StepRecord
from .update import describe_posterior, max_abs_error, posterior_update_llm, posterior_update_math

logger = logging.getLogger(__name__)

StepFunction = Callable[[EpisodeStep, ProbabilityDistribution], StepRecord]
StepCallback = Callable[[StepRecord], None]


def run_steps(
    episode: Episode,
    hypotheses: HypothesisSet,
    prior: ProbabilityDistribution,
    step_fn: StepFunction,
    on_step: Optional[StepCallback] = None,
) -> List[StepRecord]:
    """
    Apply ``step_fn`` to every step in order, feeding each posterior forward.

    Raises:
        RunAborted carrying the records emitted before the failing step.
    """
    if prior.labels != hypotheses.labels:
        raise DimensionMismatch(f"Prior over {prior.labels} does not match hypotheses {hypotheses.labels}.")
    records: List[StepRecord] = []
    for step in episode.steps:
        try:
            record = step_fn(step, prior)
        except LAIPError as e:
            logger.error(f"{episode.id} failed at step {step.timestep}: {str(e)}")
            raise RunAborted(f"{episode.id} failed at step {step.timestep}: {str(e)}", steps=records) from e
        records.append(record)
        if on_step is not None:
            on_step(record)
        logger.debug(f"{episode.id} step {step.timestep}: {describe_posterior(record.posterior)}")
        prior = record.posterior
    return records


def infer_constrained_step(
    config: InferenceConfig,
    episode: Episode,
    hypotheses: HypothesisSet,
    step: EpisodeStep,
    prior: ProbabilityDistribution,
) -> StepRecord:
    """One full-model step over the step's fixed candidate actions."""
    if step.observed_index is None:
        raise DimensionMismatch(f"Step {step.timestep} of {episode.id} has no observed candidate.")
    matrix, transcripts = elicit_matrix(config, episode, step, hypotheses)
    obs_weights = ProbabilityDistribution.indicator(
        [f"A{j}" for j in range(1, len(step.candidates) + 1)], step.observed_index
    )
    math_posterior = posterior_update_math(prior, matrix, obs_weights)
    posterior = math_posterior
    llm_error = None
    if config.update_mode == 'llm':
        posterior, update_transcripts = posterior_update_llm(
            config, episode, step, hypotheses, prior, matrix, obs_weights
        )
        transcripts = transcripts + update_transcripts
        llm_error = max_abs_error(posterior, math_posterior)
    return StepRecord(
        timestep=step.timestep,
        state_context=step.state_context,
        actions=step.candidates,
        observed=step.observed,
        prior=prior,
        posterior=posterior,
        matrix=matrix,
        obs_weights=obs_weights,
        math_posterior=math_posterior if config.update_mode == 'llm' else None,
        llm_posterior_error=llm_error,
        raw=tuple(transcripts),
    )


def run_trajectory(
    config: InferenceConfig,
    episode: Episode,
    hypotheses: HypothesisSet,
    prior: ProbabilityDistribution,
    on_step: Optional[StepCallback] = None,
) -> List[StepRecord]:
    """
    Run the full model (``math`` update) or the LLM-computed-posterior variant (``llm``).

    Args:
        config: Provider, seed, update mode and sampling settings.
        episode: Steps with fixed candidate actions and the observed index.
        hypotheses: The hypothesis set, in prior order.
        prior: Prior over ``hypotheses.labels``.
        on_step: Called with each record as soon as it is emitted.

    Returns:
        One StepRecord per step; empty for an episode without steps.
    """
    logger.info(
        f"Running {episode.id}: {len(hypotheses)} hypotheses, {len(episode.steps)} steps, {config.update_mode} update"
    )
    return run_steps(
        episode,
        hypotheses,
        prior,
        lambda step, current: infer_constrained_step(config, episode, hypotheses, step, current),
        on_step,
    )
