"""
Batch execution: every (trajectory, repetition) of a config becomes one run.

Runs execute concurrently; database writes stay on the calling thread.
A failed run is recorded with its partial steps and the batch continues.
"""
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import List, Optional, Tuple, Union

from django.conf import settings

from baselines.runner import BASELINES
from engine.config import InferenceConfig
from engine.episodes import restaurant_episode
from engine.exceptions import RunAborted
from engine.hypotheses import generate_prior, load_hypothesis_fixture, ordering_hypotheses, uniform_prior
from engine.likelihood import action_labels
from engine.records import Episode, EpisodeStep, HypothesisSet, StepRecord
from engine.runner import StepCallback, run_steps, run_trajectory
from environment.corpus import load_trajectory
from laip.distributions import ProbabilityDistribution
from laip.exceptions import LAIPError
from open_ended.runner import run_open_ended
from open_ended.scenarios import load_scenario, scenario_episode
from oracle.posterior import optimal_step_posteriors
from oracle.responder import OracleResponder
from providers.backends import ChatBackend
from providers.client import Transcript, build_chat_backend, build_embedding_backend
from providers.embeddings import EmbeddingBackend

from .config import ExperimentConfig
from .store import COMPLETED, FAILED, RunRecord, make_run_id, save_run, start_run, step_writer

logger = logging.getLogger(__name__)


def build_provider(config: ExperimentConfig) -> ChatBackend:
    backend = config.backend
    cache_path = backend.get('cache_path') or None
    if backend['kind'] == 'scripted-oracle':
        cache_mode = backend['cache_mode'] if cache_path else 'off'
        return build_chat_backend(
            'scripted',
            cache_path=cache_path,
            cache_mode=cache_mode,
            responder=OracleResponder(epsilon=config.effective_epsilon),
        )
    if backend['kind'] == 'replay':
        return build_chat_backend('replay', cache_path=cache_path)
    return build_chat_backend(
        'http', cache_path=cache_path, cache_mode=backend['cache_mode'], base_url=backend.get('base_url') or None
    )


def build_embedder(config: ExperimentConfig) -> EmbeddingBackend:
    return build_embedding_backend(config.embedding['kind'], model=config.embedding.get('model') or None)


def inference_config(config: ExperimentConfig, provider: ChatBackend, seed: Optional[int]) -> InferenceConfig:
    return InferenceConfig(
        provider,
        model_id=config.backend.get('model_id') or None,
        update_mode=config.update_mode,
        seed=seed,
        likelihood_temperature=config.likelihood_temperature,
        hypothesis_temperature=config.hypothesis_temperature,
        floor=config.floor,
        retries=config.retries,
        max_workers=config.max_workers,
        prompt_version=config.prompt_version,
    )


def build_episode(config: ExperimentConfig, trajectory_id: str) -> Episode:
    if config.task == 'open_ended':
        return scenario_episode(load_scenario(trajectory_id), config.prompt_version)
    return restaurant_episode(load_trajectory(trajectory_id), version=config.prompt_version)


def build_hypotheses(
    config: ExperimentConfig,
    inference: InferenceConfig,
    episode: Episode,
    trajectory_id: str,
) -> Tuple[HypothesisSet, ProbabilityDistribution, List[Transcript]]:
    """The hypothesis set and prior of one run; generated sets are drawn once per run."""
    if config.hypothesis_mode == 'orderings':
        hypotheses = ordering_hypotheses(episode.graph)
        return hypotheses, uniform_prior(hypotheses), []
    if config.hypothesis_mode == 'generated':
        return generate_prior(inference, episode, config.n_hypotheses, config.prior_mode)
    path = config.hypothesis_fixture
    if not path and config.task == 'open_ended':
        path = load_scenario(trajectory_id).hypotheses_path
    hypotheses, prior = load_hypothesis_fixture(path, episode.graph)
    if prior is None or config.prior_mode == 'uniform':
        prior = uniform_prior(hypotheses)
    return hypotheses, prior, []


def run_optimal(
    config: ExperimentConfig,
    episode: Episode,
    hypotheses: HypothesisSet,
    prior: ProbabilityDistribution,
    trajectory_id: str,
    on_step: Optional[StepCallback] = None,
) -> List[StepRecord]:
    """The analytic observer as a model configuration; no provider calls."""
    orderings = [h.structured.label for h in hypotheses]
    posteriors = optimal_step_posteriors(
        load_trajectory(trajectory_id),
        prior=ProbabilityDistribution(tuple(orderings), prior.probs),
        epsilon=config.effective_epsilon,
        graph=episode.graph,
    )

    def step_fn(step: EpisodeStep, current: ProbabilityDistribution) -> StepRecord:
        return StepRecord(
            timestep=step.timestep,
            state_context=step.state_context,
            actions=step.candidates,
            observed=step.observed,
            prior=current,
            posterior=ProbabilityDistribution(hypotheses.labels, posteriors[step.timestep].probs),
            obs_weights=ProbabilityDistribution.indicator(action_labels(len(step.candidates)), step.observed_index),
        )

    return run_steps(episode, hypotheses, prior, step_fn, on_step)


def dispatch(
    config: ExperimentConfig,
    inference: InferenceConfig,
    episode: Episode,
    hypotheses: HypothesisSet,
    prior: ProbabilityDistribution,
    embedder: Optional[EmbeddingBackend],
    trajectory_id: str,
    on_step: Optional[StepCallback] = None,
) -> List[StepRecord]:
    """Route a run to its model configuration."""
    if config.mode == 'optimal':
        return run_optimal(config, episode, hypotheses, prior, trajectory_id, on_step)
    if config.mode in BASELINES:
        return BASELINES[config.mode](inference, episode, hypotheses, prior, on_step)
    if config.task == 'open_ended' or config.candidate_mode == 'free':
        return run_open_ended(
            inference, episode, hypotheses, prior, embedder,
            k=config.proposed_actions, temperature=config.softmax_temperature, on_step=on_step,
        )
    return run_trajectory(inference, episode, hypotheses, prior, on_step)


def trajectory_label(config: ExperimentConfig, reference: str) -> str:
    """The id a run is filed under: a scenario file is named by the scenario it holds."""
    if config.task == 'open_ended':
        return load_scenario(reference).id
    return reference


def execute_run(
    config: ExperimentConfig,
    record: RunRecord,
    provider: ChatBackend,
    embedder: Optional[EmbeddingBackend],
    runs_dir: Optional[Union[str, Path]] = None,
    source: Optional[str] = None,
) -> RunRecord:
    """
    Fill ``record`` in place; failures are stored on it, never raised.

    ``source`` is the trajectory id or scenario path to load, when it differs
    from the id the record is filed under.
    """
    started = time.perf_counter()
    source = source or record.trajectory
    writer = step_writer(record.run_id, runs_dir)
    try:
        inference = inference_config(config, provider, record.seed)
        episode = build_episode(config, source)
        record.hypotheses, prior, record.setup = build_hypotheses(config, inference, episode, source)
        record.steps = dispatch(
            config, inference, episode, record.hypotheses, prior, embedder, source, writer
        )
        record.status = COMPLETED
    except RunAborted as e:
        record.steps = e.steps
        record.status = FAILED
        record.error = str(e.__cause__ or e)
        logger.warning(f"Run {record.run_id} failed after {len(e.steps)} steps: {record.error}")
    except LAIPError as e:
        record.status = FAILED
        record.error = str(e)
        logger.warning(f"Run {record.run_id} failed before its first step: {str(e)}")
    record.wall_clock = time.perf_counter() - started
    return record


def run_experiment(
    config: ExperimentConfig,
    batch: Optional[str] = None,
    runs_dir: Optional[Union[str, Path]] = None,
    provider: Optional[ChatBackend] = None,
    embedder: Optional[EmbeddingBackend] = None,
) -> List[RunRecord]:
    """
    Run every trajectory for every repetition of ``config``.

    Args:
        config: The validated experiment.
        batch: Run-id prefix and index key; defaults to the config name.
        runs_dir: Where run directories go; defaults to ``LAIP['RUNS_DIR']``.
        provider: Overrides the backend described by the config.
        embedder: Overrides the embedding backend (open-ended runs only).

    Returns:
        One RunRecord per (trajectory, repetition), in config order, failed
        runs included.
    """
    batch = batch or config.name
    provider = provider or build_provider(config)
    needs_embedder = config.mode in ('laip-full', 'laip-lcp') and (
        config.task == 'open_ended' or config.candidate_mode == 'free'
    )
    if needs_embedder and embedder is None:
        embedder = build_embedder(config)
    snapshot = config.to_json()
    sources = {trajectory_label(config, reference): reference for reference in config.trajectories}
    records = [
        RunRecord(
            run_id=make_run_id(batch, config.mode, trajectory, repetition),
            batch=batch,
            mode=config.mode,
            task=config.task,
            trajectory=trajectory,
            repetition=repetition,
            seed=seed,
            config=snapshot,
            hypotheses=None,
        )
        for trajectory in sources
        for repetition, seed in enumerate(config.seeds)
    ]
    for record in records:
        start_run(record)
    logger.info(f"Batch {batch}: {len(records)} {config.mode} runs on {config.task}")

    workers = config.run_workers or settings.LAIP['MAX_WORKERS']
    with ThreadPoolExecutor(max_workers=max(1, workers)) as executor:
        records = list(executor.map(
            lambda record: execute_run(
                config, record, provider, embedder, runs_dir, sources[record.trajectory]
            ),
            records,
        ))
    for record in records:
        save_run(record, runs_dir)

    failed = sum(record.status == FAILED for record in records)
    logger.info(f"Batch {batch} finished: {len(records) - failed} completed, {failed} failed")
    return records
