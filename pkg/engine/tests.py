import json
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase
from rest_framework import serializers

from environment.corpus import list_trajectories, load_trajectory
from laip.distributions import ProbabilityDistribution
from laip.exceptions import DimensionMismatch
from oracle.posterior import optimal_posterior, optimal_step_posteriors
from oracle.responder import OracleResponder
from providers.backends import ScriptedBackend
from providers.exceptions import BackendRefusal, ParseFailure

from .config import InferenceConfig
from .episodes import restaurant_episode
from .exceptions import RunAborted
from .hypotheses import generate_prior, load_hypothesis_fixture, ordering_hypotheses, uniform_prior
from .likelihood import elicit_likelihood_row
from .records import Episode, EpisodeStep, HypothesisSet, LikelihoodMatrix, StepRecord
from .runner import run_trajectory
from .update import posterior_update_math

EPSILON = 0.01


def oracle_config(update_mode='math', **kwargs):
    backend = ScriptedBackend(responder=OracleResponder(epsilon=EPSILON))
    return InferenceConfig(backend, model_id='scripted', update_mode=update_mode, floor=0.0, **kwargs)


def two_choice_episode():
    step = EpisodeStep(
        timestep=0,
        state_context='A fork in the road.',
        observed='Go left',
        candidates=('Go left', 'Go right'),
        observed_index=0,
    )
    return Episode('fork', 'toy', 'You watch a walker.', 'A walker at a fork.', 'the walker', (step,))


def two_choice_responder(posterior_text):
    def respond(request):
        if request.metadata['kind'] == 'likelihood':
            if 'likes left' in request.messages[-1].content:
                return 'A1: 0.8\nA2: 0.2'
            return 'A1: 0.2\nA2: 0.8'
        return posterior_text
    return respond


class OracleEquivalenceTestCase(SimpleTestCase):
    """Test that scripted oracle likelihoods reproduce the analytic posterior"""

    def test_every_corpus_trajectory(self):
        """Test the full model against the optimal observer on all trajectories"""
        hypotheses = ordering_hypotheses()
        for trajectory_id in list_trajectories():
            trajectory = load_trajectory(trajectory_id)
            records = run_trajectory(
                oracle_config(), restaurant_episode(trajectory), hypotheses, uniform_prior(hypotheses)
            )
            expected = optimal_posterior(trajectory, epsilon=EPSILON)
            self.assertEqual(len(records), len(trajectory.actions))
            np.testing.assert_allclose(records[-1].posterior.as_array(), expected.as_array(), atol=1e-9)

    def test_step_posteriors_match(self):
        """Test every intermediate posterior, not only the last"""
        trajectory = load_trajectory('study1-closed')
        hypotheses = ordering_hypotheses()
        records = run_trajectory(
            oracle_config(), restaurant_episode(trajectory), hypotheses, uniform_prior(hypotheses)
        )
        for record, expected in zip(records, optimal_step_posteriors(trajectory, epsilon=EPSILON)):
            np.testing.assert_allclose(record.posterior.as_array(), expected.as_array(), atol=1e-9)
        best = hypotheses[records[-1].posterior.argmax()]
        self.assertEqual(best.structured.label, 'Japanese>Chinese>Mexican')

    def test_llm_update_with_exact_responder(self):
        """Test the LLM-computed posterior when the model does Bayes exactly"""
        trajectory = load_trajectory('t1')
        hypotheses = ordering_hypotheses()
        records = run_trajectory(
            oracle_config('llm'), restaurant_episode(trajectory), hypotheses, uniform_prior(hypotheses)
        )
        expected = optimal_posterior(trajectory, epsilon=EPSILON)
        np.testing.assert_allclose(records[-1].posterior.as_array(), expected.as_array(), atol=1e-9)
        for record in records:
            self.assertIsNotNone(record.math_posterior)
            self.assertLess(record.llm_posterior_error, 1e-9)

    def test_single_candidate_needs_no_call(self):
        """Test that a step with one legal action costs no provider call"""
        trajectory = load_trajectory('study1-open')
        hypotheses = ordering_hypotheses()
        config = oracle_config()
        records = run_trajectory(config, restaurant_episode(trajectory), hypotheses, uniform_prior(hypotheses))
        self.assertEqual(records[0].actions, ('Move to Room 2',))
        self.assertEqual(records[0].raw, ())
        np.testing.assert_allclose(records[0].posterior.as_array(), records[0].prior.as_array(), atol=1e-15)
        self.assertEqual(len(config.provider.requests), sum(len(r.raw) for r in records))

    def test_permuting_hypotheses_permutes_posterior(self):
        """Test that hypothesis order carries no positional bias"""
        trajectory = load_trajectory('t5')
        hypotheses = ordering_hypotheses()
        prior = ProbabilityDistribution.from_weights([1, 2, 3, 4, 5, 6], hypotheses.labels)
        baseline = run_trajectory(oracle_config(), restaurant_episode(trajectory), hypotheses, prior)[-1].posterior
        order = [3, 0, 5, 1, 4, 2]
        permuted = run_trajectory(
            oracle_config(), restaurant_episode(trajectory), hypotheses.permuted(order), prior.permuted(order)
        )[-1].posterior
        self.assertEqual(permuted.labels, baseline.permuted(order).labels)
        np.testing.assert_allclose(permuted.as_array(), baseline.permuted(order).as_array(), atol=1e-12)


class PosteriorUpdateTestCase(SimpleTestCase):
    """Test the mathematical posterior update"""

    def test_two_hypothesis_example(self):
        """Test prior (0.5, 0.5) with observed column (0.8, 0.2)"""
        prior = ProbabilityDistribution.uniform(['H1', 'H2'])
        matrix = LikelihoodMatrix.from_array([[0.8, 0.2], [0.2, 0.8]], ['left', 'right'])
        posterior = posterior_update_math(prior, matrix, ProbabilityDistribution.indicator(['A1', 'A2'], 0))
        np.testing.assert_allclose(posterior.as_array(), [0.8, 0.2], atol=1e-12)

    def test_identical_rows_leave_prior(self):
        """Test that an uninformative matrix returns the prior"""
        prior = ProbabilityDistribution.uniform(['H1', 'H2', 'H3'])
        matrix = LikelihoodMatrix.from_array([[0.3, 0.7]] * 3, ['a', 'b'])
        posterior = posterior_update_math(prior, matrix, ProbabilityDistribution.indicator(['A1', 'A2'], 1))
        np.testing.assert_allclose(posterior.as_array(), prior.as_array(), atol=1e-12)

    def test_dimension_mismatch(self):
        """Test shape checks on rows and columns"""
        prior = ProbabilityDistribution.uniform(['H1', 'H2'])
        matrix = LikelihoodMatrix.from_array([[0.5, 0.5]] * 3, ['a', 'b'])
        with self.assertRaises(DimensionMismatch):
            posterior_update_math(prior, matrix, ProbabilityDistribution.indicator(['A1', 'A2'], 0))
        matrix = LikelihoodMatrix.from_array([[0.5, 0.5]] * 2, ['a', 'b'])
        with self.assertRaises(DimensionMismatch):
            posterior_update_math(prior, matrix, ProbabilityDistribution.indicator(['A1', 'A2', 'A3'], 0))

    def test_only_observed_column_matters(self):
        """Test that unobserved columns do not move the posterior"""
        prior = ProbabilityDistribution.from_weights([0.2, 0.3, 0.5], ['H1', 'H2', 'H3'])
        first = LikelihoodMatrix.from_array([[0.4, 0.6, 0.0], [0.1, 0.1, 0.8], [0.3, 0.2, 0.5]], ['a', 'b', 'c'])
        second = LikelihoodMatrix.from_array([[0.4, 0.0, 0.6], [0.1, 0.8, 0.1], [0.3, 0.7, 0.0]], ['a', 'b', 'c'])
        observed = ProbabilityDistribution.indicator(['A1', 'A2', 'A3'], 0)
        np.testing.assert_allclose(
            posterior_update_math(prior, first, observed).as_array(),
            posterior_update_math(prior, second, observed).as_array(),
            atol=1e-12,
        )

    def test_sequential_equals_batch(self):
        """Test T indicator updates against one product update on 1,000 random instances"""
        rng = np.random.default_rng(20240601)
        for _ in range(1000):
            n = int(rng.integers(2, 9))
            k = int(rng.integers(2, 6))
            steps = int(rng.integers(1, 6))
            labels = [f"H{i}" for i in range(1, n + 1)]
            actions = [f"A{j}" for j in range(1, k + 1)]
            prior = ProbabilityDistribution.from_weights(rng.dirichlet(np.ones(n)), labels)
            batch = prior.as_array().copy()
            posterior = prior
            for _ in range(steps):
                values = rng.dirichlet(np.ones(k), size=n)
                observed = int(rng.integers(k))
                matrix = LikelihoodMatrix.from_array(values, actions)
                posterior = posterior_update_math(posterior, matrix, ProbabilityDistribution.indicator(actions, observed))
                batch = batch * matrix.column(observed)
            np.testing.assert_allclose(posterior.as_array(), batch / batch.sum(), atol=1e-9)
            self.assertAlmostEqual(sum(posterior.probs), 1.0, delta=1e-9)


class RunTrajectoryTestCase(SimpleTestCase):
    """Test the inference loop"""

    def test_zero_steps(self):
        """Test that an empty episode returns no records and makes no calls"""
        hypotheses = ordering_hypotheses()
        config = oracle_config()
        episode = restaurant_episode(load_trajectory('t1')).truncated(0)
        self.assertEqual(run_trajectory(config, episode, hypotheses, uniform_prior(hypotheses)), [])
        self.assertEqual(config.provider.requests, [])

    def test_posterior_feeds_forward(self):
        """Test that each step's prior is the previous posterior"""
        hypotheses = ordering_hypotheses()
        records = run_trajectory(
            oracle_config(), restaurant_episode(load_trajectory('t9')), hypotheses, uniform_prior(hypotheses)
        )
        for previous, current in zip(records, records[1:]):
            self.assertEqual(current.prior, previous.posterior)

    def test_failure_keeps_partial_steps(self):
        """Test that a refused call aborts with the records emitted so far"""
        hypotheses = ordering_hypotheses()
        config = InferenceConfig(ScriptedBackend(), model_id='scripted', floor=0.0)
        seen = []
        with self.assertRaises(RunAborted) as ctx:
            run_trajectory(
                config, restaurant_episode(load_trajectory('t1')), hypotheses, uniform_prior(hypotheses),
                on_step=seen.append,
            )
        self.assertEqual(len(ctx.exception.steps), 1)
        self.assertEqual(seen, ctx.exception.steps)
        self.assertIsInstance(ctx.exception.__cause__, BackendRefusal)

    def test_unparseable_answers(self):
        """Test that a model that never answers in format aborts the run"""
        hypotheses = HypothesisSet.from_texts(['likes left', 'likes right'])
        config = InferenceConfig(ScriptedBackend(responder=lambda r: 'I cannot say.'), model_id='scripted', retries=1)
        with self.assertRaises(RunAborted) as ctx:
            run_trajectory(config, two_choice_episode(), hypotheses, uniform_prior(hypotheses))
        self.assertIsInstance(ctx.exception.__cause__, ParseFailure)
        self.assertEqual(ctx.exception.steps, [])
        # two rows, two attempts each
        self.assertEqual(len(config.provider.requests), 4)

    def test_llm_update_records_error(self):
        """Test that the LLM posterior is kept and its drift from Bayes recorded"""
        hypotheses = HypothesisSet.from_texts(['The walker likes left.', 'The walker likes right.'])
        backend = ScriptedBackend(responder=two_choice_responder('{"H1": 70, "H2": 30}'))
        config = InferenceConfig(backend, model_id='scripted', update_mode='llm', floor=0.0)
        record = run_trajectory(config, two_choice_episode(), hypotheses, uniform_prior(hypotheses))[0]
        np.testing.assert_allclose(record.posterior.as_array(), [0.7, 0.3], atol=1e-12)
        np.testing.assert_allclose(record.math_posterior.as_array(), [0.8, 0.2], atol=1e-12)
        self.assertAlmostEqual(record.llm_posterior_error, 0.1, places=12)
        self.assertEqual(len(record.raw), 3)

    def test_step_record_json(self):
        """Test that step records survive persistence"""
        hypotheses = ordering_hypotheses()
        records = run_trajectory(
            oracle_config(), restaurant_episode(load_trajectory('t4')), hypotheses, uniform_prior(hypotheses)
        )
        for record in records:
            restored = StepRecord.from_json(json.loads(json.dumps(record.to_json())))
            self.assertEqual(restored.posterior, record.posterior)
            self.assertEqual(restored.matrix, record.matrix)
            self.assertEqual(restored.raw, record.raw)


class LikelihoodPromptTestCase(SimpleTestCase):
    """Test what a likelihood request contains"""

    def test_request_contents(self):
        """Test prompt text, metadata and temperature of one row request"""
        config = oracle_config()
        episode = restaurant_episode(load_trajectory('study1-closed'))
        hypothesis = ordering_hypotheses()[0]
        row, transcripts = elicit_likelihood_row(config, episode, episode.steps[1], hypothesis)
        request = config.provider.requests[0]
        self.assertEqual(request.messages[0].role, 'system')
        self.assertIn('There are seven rooms:', request.messages[0].content)
        prompt = request.messages[1].content
        self.assertIn('The agent is in Room 2.', prompt)
        self.assertIn(hypothesis.text, prompt)
        self.assertIn('A1: Move to Room 1', prompt)
        self.assertIn('So far the agent has done the following: Move to Room 2.', prompt)
        self.assertEqual(request.temperature, 0.0)
        self.assertEqual(request.metadata['ordering'], hypothesis.structured.label)
        self.assertEqual(request.metadata['actions'], ['Move(1)', 'Move(3)', 'Move(4)'])
        self.assertEqual(row.labels, ('A1', 'A2', 'A3'))
        self.assertEqual(len(transcripts), 1)


class HypothesisSourceTestCase(SimpleTestCase):
    """Test the hypothesis sources"""

    def test_ordering_hypotheses(self):
        """Test the six strict orderings with canonical text"""
        hypotheses = ordering_hypotheses()
        self.assertEqual(len(hypotheses), 6)
        self.assertEqual(hypotheses.labels, ('H1', 'H2', 'H3', 'H4', 'H5', 'H6'))
        self.assertEqual(hypotheses[0].text, 'The agent prefers Chinese food the most, then Mexican, then Japanese.')
        self.assertTrue(all(h.structured is not None for h in hypotheses))

    def test_generate_prior(self):
        """Test generation against a responder that lists the orderings"""
        config = oracle_config()
        episode = restaurant_episode(load_trajectory('study1-closed'))
        hypotheses, prior, transcripts = generate_prior(config, episode, 6, prior_mode='elicited')
        self.assertEqual(len(hypotheses), 6)
        self.assertEqual([h.structured for h in hypotheses], [h.structured for h in ordering_hypotheses()])
        np.testing.assert_allclose(prior.as_array(), np.full(6, 1 / 6), atol=1e-12)
        request = config.provider.requests[0]
        self.assertEqual(request.temperature, 0.7)
        self.assertIn('write out 6 hypotheses', request.messages[1].content)
        self.assertEqual(len(transcripts), 1)

    def test_uniform_mode_replaces_masses(self):
        """Test that uniform mode discards the elicited masses"""
        answer = json.dumps([
            {'hypothesis': 'Likes noodles.', 'probability': 0.7},
            {'hypothesis': 'Likes rice.', 'probability': 0.3},
        ])
        config = InferenceConfig(ScriptedBackend(responder=lambda r: answer), model_id='scripted')
        episode = two_choice_episode()
        hypotheses, prior, _ = generate_prior(config, episode, 2)
        self.assertEqual([h.text for h in hypotheses], ['Likes noodles.', 'Likes rice.'])
        self.assertEqual(prior.probs, (0.5, 0.5))
        _, elicited, _ = generate_prior(config, episode, 2, prior_mode='elicited')
        np.testing.assert_allclose(elicited.as_array(), [0.7, 0.3], atol=1e-5)

    def test_fixture(self):
        """Test loading a fixture with and without probabilities"""
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'hypotheses.json'
            path.write_text(json.dumps({'hypotheses': [{'text': 'Likes tea.'}, {'text': 'Likes coffee.'}]}))
            hypotheses, prior = load_hypothesis_fixture(path)
            self.assertEqual(hypotheses.labels, ('H1', 'H2'))
            self.assertIsNone(prior)

            path.write_text(json.dumps({'hypotheses': [
                {'text': 'Likes tea.', 'probability': 3}, {'text': 'Likes coffee.', 'probability': 1},
            ]}))
            _, prior = load_hypothesis_fixture(path)
            self.assertEqual(prior.probs, (0.75, 0.25))

            path.write_text(json.dumps({'hypotheses': [{'text': 'Likes tea.', 'probability': 1}, {'text': 'x'}]}))
            with self.assertRaises(serializers.ValidationError):
                load_hypothesis_fixture(path)

    def test_empty_text_rejected(self):
        """Test hypothesis validation"""
        with self.assertRaises(serializers.ValidationError):
            HypothesisSet.from_texts(['fine', '  '])
