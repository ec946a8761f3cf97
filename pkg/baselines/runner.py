"""
Comparison configurations that ask for the posterior directly.

All three share the engine's episode, hypothesis set and prior so their
records line up with the paired full-model run; they differ only in the
prompt and spend one provider call per timestep.
"""
import logging
from typing import List, Optional

from engine.config import InferenceConfig
from engine.prompts import format_probability, labelled, render_prompt
from engine.records import Episode, EpisodeStep, HypothesisSet, StepRecord
from engine.runner import StepCallback, run_steps
from laip.distributions import ProbabilityDistribution
from providers.client import complete_with_retries
from providers.parsers import parse_distribution

logger = logging.getLogger(__name__)

SINGLE_COT = 'laip-single-cot'
GENERIC_COT = 'generic-cot'
ZERO_SHOT = 'zero-shot'


def observed_phrase(step: EpisodeStep) -> str:
    if step.observed_index is not None and step.candidates:
        return f"chose A{step.observed_index + 1}: {step.observed.rstrip('.')}"
    return f"did this: {step.observed.rstrip('.')}"


def baseline_prompt(
    template: str,
    episode: Episode,
    step: EpisodeStep,
    hypotheses: HypothesisSet,
    prior: ProbabilityDistribution,
    version: Optional[str] = None,
    step_by_step: bool = False,
) -> str:
    """Render a direct-posterior prompt; hypotheses are shown as H1..Hn in set order."""
    return render_prompt(template, {
        'state_context': step.state_context,
        'history': step.history,
        'subject': episode.subject,
        'hypotheses': [
            {'label': f"H{i}", 'text': h.text, 'prior': format_probability(p)}
            for i, (h, p) in enumerate(zip(hypotheses, prior.probs), start=1)
        ],
        'actions': labelled(step.candidates, 'A'),
        'observed': observed_phrase(step),
        'step_by_step': step_by_step,
    }, version)


def direct_posterior_step(
    config: InferenceConfig,
    episode: Episode,
    hypotheses: HypothesisSet,
    step: EpisodeStep,
    prior: ProbabilityDistribution,
    template: str,
    step_by_step: bool = False,
) -> StepRecord:
    user = baseline_prompt(template, episode, step, hypotheses, prior, config.prompt_version, step_by_step)
    metadata = dict(step.metadata)
    metadata.update({
        'kind': 'posterior_direct',
        'prior': list(prior.probs),
        'orderings': [h.structured.label if h.structured else None for h in hypotheses],
    })
    request = config.request(episode.system_prompt, user, metadata=metadata)
    display = [f"H{i}" for i in range(1, len(prior) + 1)]
    parsed, transcripts = complete_with_retries(
        config.provider,
        request,
        lambda text: parse_distribution(text, len(prior), labels=display, prefix='H', floor=config.floor),
        retries=config.retries,
    )
    obs_weights = None
    if step.observed_index is not None:
        obs_weights = ProbabilityDistribution.indicator(
            [f"A{j}" for j in range(1, len(step.candidates) + 1)], step.observed_index
        )
    return StepRecord(
        timestep=step.timestep,
        state_context=step.state_context,
        actions=step.candidates,
        observed=step.observed,
        prior=prior,
        posterior=ProbabilityDistribution(prior.labels, parsed.probs),
        obs_weights=obs_weights,
        raw=tuple(transcripts),
    )


def _run(
    mode: str,
    template: str,
    step_by_step: bool,
    config: InferenceConfig,
    episode: Episode,
    hypotheses: HypothesisSet,
    prior: ProbabilityDistribution,
    on_step: Optional[StepCallback],
) -> List[StepRecord]:
    logger.info(f"Running {mode} on {episode.id}: {len(hypotheses)} hypotheses, {len(episode.steps)} steps")
    return run_steps(
        episode,
        hypotheses,
        prior,
        lambda step, current: direct_posterior_step(
            config, episode, hypotheses, step, current, template, step_by_step
        ),
        on_step,
    )


def run_single_cot(config, episode, hypotheses, prior, on_step=None) -> List[StepRecord]:
    """Every inverse-planning step in one completion per timestep."""
    return _run(SINGLE_COT, 'single_cot', False, config, episode, hypotheses, prior, on_step)


def run_generic_cot(config, episode, hypotheses, prior, on_step=None) -> List[StepRecord]:
    """Situation, hypotheses, priors and action, then an instruction to think step by step."""
    return _run(GENERIC_COT, 'generic', True, config, episode, hypotheses, prior, on_step)


def run_zero_shot(config, episode, hypotheses, prior, on_step=None) -> List[StepRecord]:
    """The generic prompt without the step-by-step line."""
    return _run(ZERO_SHOT, 'generic', False, config, episode, hypotheses, prior, on_step)


BASELINES = {
    SINGLE_COT: run_single_cot,
    GENERIC_COT: run_generic_cot,
    ZERO_SHOT: run_zero_shot,
}
