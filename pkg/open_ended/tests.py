import json
import math
import tempfile
from dataclasses import replace
from io import StringIO
from pathlib import Path

import numpy as np
from django.conf import settings
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import SimpleTestCase
from rest_framework import serializers

from engine.config import InferenceConfig
from engine.episodes import restaurant_episode
from engine.hypotheses import load_hypothesis_fixture, uniform_prior
from engine.records import HypothesisSet, LikelihoodMatrix
from engine.update import posterior_update_math
from environment.corpus import load_trajectory
from laip.distributions import ProbabilityDistribution
from laip.exceptions import DegenerateInput, DimensionMismatch
from providers.backends import ScriptedBackend
from providers.embeddings import MockEmbeddingBackend
from providers.exceptions import ParseFailure
from providers.records import EmbeddingVector

from .exceptions import UnknownScenario
from .runner import propose_actions, run_open_ended
from .scenarios import DATA_DIR, Scenario, Scene, load_scenario, save_scenario, scenario_episode, simulate_actor
from .similarity import (
    FreeAction,
    SoftObservation,
    cosine_similarity,
    similarity_weights,
    soft_posterior_update,
    softmax_weights,
)

OBSERVED_POSITION = 2


def proposals(observed, scene):
    """Six proposals with the observed action third."""
    options = [f"Alice picks option {scene}-{i}." for i in range(1, 6)]
    options.insert(OBSERVED_POSITION, observed)
    return options


def thai_responder(episode):
    """Proposals contain the observed action; only the Thai hypothesis favours Thai actions."""
    observed = {step.timestep: step.observed for step in episode.steps}

    def respond(request):
        metadata = request.metadata
        if metadata['kind'] == 'actions':
            return json.dumps(proposals(observed[metadata['scene']], metadata['scene']))
        if metadata['kind'] == 'likelihood':
            thai = 'Thai' in metadata['hypothesis']
            weights = [3.0 if thai and 'Thai' in action else 1.0 for action in metadata['actions']]
            total = sum(weights)
            return '\n'.join(f"A{j}: {w / total!r}" for j, w in enumerate(weights, start=1))
        if metadata['kind'] == 'posterior':
            return json.dumps({f"H{i}": 1.0 for i in range(1, len(metadata['prior']) + 1)})
        return ''
    return respond


def scripted_config(responder, **kwargs):
    return InferenceConfig(ScriptedBackend(responder=responder), model_id='scripted', **kwargs)


def random_instance(rng):
    n, k = rng.integers(2, 9), rng.integers(2, 7)
    hypothesis_labels = [f"H{i}" for i in range(1, n + 1)]
    actions = [f"action {j}" for j in range(1, k + 1)]
    prior = ProbabilityDistribution.from_weights(rng.dirichlet(np.ones(n)), hypothesis_labels)
    matrix = LikelihoodMatrix.from_array(rng.dirichlet(np.ones(k), size=n), actions)
    return prior, matrix, actions


class SoftPosteriorUpdateTestCase(SimpleTestCase):
    """Test the similarity-weighted posterior update"""

    def test_one_hot_reduces_to_single_action_update(self):
        """Test that indicator weights give the ordinary Bayes update"""
        rng = np.random.default_rng(20240601)
        for _ in range(1000):
            prior, matrix, actions = random_instance(rng)
            j = int(rng.integers(len(actions)))
            weights = ProbabilityDistribution.indicator([f"A{i}" for i in range(1, len(actions) + 1)], j)
            soft = SoftObservation('observed', actions, weights, 1.0)
            expected = prior.as_array() * matrix.as_array()[:, j]
            expected = expected / expected.sum()
            np.testing.assert_allclose(soft_posterior_update(prior, matrix, soft).as_array(), expected, atol=1e-12)
            np.testing.assert_allclose(
                soft_posterior_update(prior, matrix, soft).as_array(),
                posterior_update_math(prior, matrix, weights).as_array(),
                atol=1e-12,
            )

    def test_uniform_weights_symmetric_rows(self):
        """Test that a symmetric mixture leaves a uniform prior unchanged"""
        matrix = LikelihoodMatrix.from_array([[0.9, 0.1], [0.1, 0.9]], ['eat', 'leave'])
        prior = ProbabilityDistribution.uniform(['H1', 'H2'])
        soft = SoftObservation('observed', ['eat', 'leave'], ProbabilityDistribution.uniform(['A1', 'A2']), 1.0)
        np.testing.assert_allclose(soft_posterior_update(prior, matrix, soft).as_array(), [0.5, 0.5], atol=1e-12)

    def test_mismatched_candidates(self):
        """Test that weights over different candidates are rejected"""
        matrix = LikelihoodMatrix.from_array([[0.9, 0.1], [0.1, 0.9]], ['eat', 'leave'])
        prior = ProbabilityDistribution.uniform(['H1', 'H2'])
        soft = SoftObservation('observed', ['eat', 'leave', 'wait'], ProbabilityDistribution.uniform(['A1', 'A2', 'A3']), 1.0)
        with self.assertRaises(DimensionMismatch):
            soft_posterior_update(prior, matrix, soft)

    def test_weight_count_must_match_candidates(self):
        """Test the SoftObservation dimension check"""
        with self.assertRaises(DimensionMismatch):
            SoftObservation('observed', ['eat'], ProbabilityDistribution.uniform(['A1', 'A2']), 1.0)

    def test_continuous_in_temperature(self):
        """Test that a small temperature change moves the posterior only slightly"""
        rng = np.random.default_rng(7)
        prior, matrix, actions = random_instance(rng)
        similarities = rng.uniform(-1, 1, size=len(actions))

        def posterior(tau):
            weights = softmax_weights(similarities, tau)
            return soft_posterior_update(prior, matrix, SoftObservation('observed', actions, weights, tau)).as_array()

        for tau in (0.5, 1.0, 2.0):
            self.assertLess(np.max(np.abs(posterior(tau) - posterior(tau + 1e-6))), 1e-4)


class SoftmaxWeightsTestCase(SimpleTestCase):
    """Test the softmax over similarities"""

    def test_closed_form(self):
        """Test cosines (1, 0) at temperature 1"""
        weights = softmax_weights([1.0, 0.0], 1.0)
        self.assertAlmostEqual(weights[0], math.e / (math.e + 1), places=12)
        self.assertAlmostEqual(weights[1], 1 / (math.e + 1), places=12)
        self.assertEqual(weights.labels, ('A1', 'A2'))

    def test_shift_invariance(self):
        """Test that adding a constant to every similarity leaves the weights alone"""
        rng = np.random.default_rng(11)
        for _ in range(1000):
            similarities = rng.uniform(-1, 1, size=rng.integers(1, 8))
            shift = rng.uniform(-5, 5)
            np.testing.assert_allclose(
                softmax_weights(similarities + shift, 0.7).as_array(),
                softmax_weights(similarities, 0.7).as_array(),
                rtol=0, atol=1e-12,
            )

    def test_equal_similarities(self):
        """Test that a constant vector gives uniform weights"""
        np.testing.assert_allclose(softmax_weights([0.3] * 4, 1.0).as_array(), [0.25] * 4, atol=1e-12)

    def test_default_temperature(self):
        """Test that the configured temperature is used when none is given"""
        self.assertEqual(settings.LAIP['SOFTMAX_TEMPERATURE'], 1.0)
        np.testing.assert_allclose(softmax_weights([1.0, 0.0]).as_array(), softmax_weights([1.0, 0.0], 1.0).as_array())

    def test_temperature_must_be_positive(self):
        with self.assertRaises(serializers.ValidationError):
            softmax_weights([1.0, 0.0], 0.0)


class SimilarityWeightsTestCase(SimpleTestCase):
    """Test matching an observation against embedded candidates"""

    def setUp(self):
        self.texts = [f"Alice eats dish {i}." for i in range(1, 7)]
        self.embedder = MockEmbeddingBackend(basis=self.texts)

    def test_identical_observation_dominates(self):
        """Test that an exact match takes all the weight at a low temperature"""
        candidates = [FreeAction(text) for text in self.texts]
        soft = similarity_weights(self.texts[2], candidates, self.embedder, temperature=0.01)
        self.assertEqual(soft.weights.argmax(), 2)
        self.assertAlmostEqual(soft.weights[2], 1.0, places=12)
        self.assertEqual(soft.similarities, (0.0, 0.0, 1.0, 0.0, 0.0, 0.0))
        self.assertEqual(soft.candidates, tuple(self.texts))

    def test_precomputed_embedding_is_kept(self):
        """Test that an action's existing embedding is not recomputed"""
        vector = EmbeddingVector.from_array(self.embedder.embed(self.texts[0]).values)
        action = FreeAction('something else entirely', vector)
        self.assertIs(action.embedded(self.embedder), action)
        soft = similarity_weights(self.texts[0], [action, FreeAction(self.texts[1])], self.embedder, 1.0)
        self.assertAlmostEqual(soft.similarities[0], 1.0, places=12)

    def test_no_candidates(self):
        with self.assertRaises(DimensionMismatch):
            similarity_weights('Alice eats.', [], self.embedder)

    def test_cosine_similarity(self):
        """Test cosine similarity on simple vectors"""
        u = EmbeddingVector.from_array([1.0, 0.0])
        self.assertAlmostEqual(cosine_similarity(u, EmbeddingVector.from_array([2.0, 0.0])), 1.0)
        self.assertAlmostEqual(cosine_similarity(u, EmbeddingVector.from_array([0.0, 3.0])), 0.0)
        self.assertAlmostEqual(cosine_similarity(u, EmbeddingVector.from_array([-1.0, 0.0])), -1.0)
        with self.assertRaises(DegenerateInput):
            cosine_similarity(u, EmbeddingVector.from_array([0.0, 0.0]))
        with self.assertRaises(DimensionMismatch):
            cosine_similarity(u, EmbeddingVector.from_array([1.0, 0.0, 0.0]))

    def test_action_needs_text(self):
        with self.assertRaises(serializers.ValidationError):
            FreeAction('  ')


class ProposeActionsTestCase(SimpleTestCase):
    """Test action proposals"""

    def setUp(self):
        self.episode = scenario_episode(load_scenario('alice'))

    def test_canned_list(self):
        """Test that a scripted list comes back in order"""
        canned = ['Alice buys pizza.', 'Alice buys sushi.', 'Alice buys a burger.',
                  'Alice buys shawarma.', 'Alice buys a sandwich.', 'Alice buys coffee.']
        config = scripted_config(lambda request: json.dumps(canned))
        actions, transcripts = propose_actions(config, self.episode, self.episode.steps[0])
        self.assertEqual([a.text for a in actions], canned)
        self.assertEqual(len(transcripts), 1)
        request = config.provider.requests[0]
        self.assertEqual(request.metadata['kind'], 'actions')
        self.assertEqual(request.temperature, config.hypothesis_temperature)
        self.assertIn('List 6 different things Alice might plausibly do next', request.messages[1].content)

    def test_single_action(self):
        config = scripted_config(lambda request: '1. Alice skips lunch.')
        actions, _ = propose_actions(config, self.episode, self.episode.steps[0], k=1)
        self.assertEqual([a.text for a in actions], ['Alice skips lunch.'])

    def test_wrong_count(self):
        """Test that too few actions fail after the retries"""
        config = scripted_config(lambda request: json.dumps(['Alice buys pizza.', 'Alice buys sushi.']), retries=1)
        with self.assertRaises(ParseFailure):
            propose_actions(config, self.episode, self.episode.steps[0])
        self.assertEqual(len(config.provider.requests), 2)


class ScenarioTestCase(SimpleTestCase):
    """Test the shipped scenario and actor simulation"""

    def test_load_alice(self):
        """Test the shipped scenario and its hypothesis fixture"""
        scenario = load_scenario('alice')
        self.assertEqual(scenario.subject, 'Alice')
        self.assertEqual(len(scenario.scenes), 4)
        self.assertTrue(scenario.recorded)
        hypotheses, prior = load_hypothesis_fixture(scenario.hypotheses_path)
        self.assertEqual(len(hypotheses), 20)
        self.assertIsNone(prior)
        self.assertTrue(hypotheses[8].text.startswith('Alice craves Indian food'))
        self.assertTrue(hypotheses[9].text.startswith('Alice is a Thai food enthusiast'))

    def test_episode(self):
        """Test the observer's view of the scenario"""
        scenario = load_scenario('alice')
        episode = scenario_episode(scenario)
        self.assertEqual(episode.task, 'open_ended')
        self.assertEqual(len(episode.steps), 4)
        self.assertIn('Here are some things that you already know:', episode.system_prompt)
        self.assertIn('- Alice might like a cuisine or food that is not listed here.', episode.system_prompt)
        self.assertEqual(episode.steps[1].history, (scenario.scenes[0].action,))
        self.assertEqual(episode.steps[3].observed, scenario.scenes[3].action)
        self.assertIsNone(episode.steps[0].observed_index)

    def test_unknown_scenario(self):
        with self.assertRaises(UnknownScenario):
            load_scenario('bob')

    def test_unrecorded_scenes(self):
        """Test that an episode needs every scene's action"""
        scenario = Scenario('draft', 'Alice', 'A situation.', (Scene('A food court.'),), persona='You are Alice.')
        with self.assertRaises(UnknownScenario):
            scenario_episode(scenario)

    def test_simulate_actor(self):
        """Test that the actor's replies are recorded and written back"""
        scenario = load_scenario('alice')
        config = scripted_config(lambda request: f"Alice eats lunch in scene {request.metadata['scene']}.\n")
        with tempfile.TemporaryDirectory() as tmp:
            path = Path(tmp) / 'alice.json'
            simulated, transcripts = simulate_actor(config, scenario, path)
            reloaded = load_scenario(path)
        self.assertEqual(len(transcripts), 4)
        self.assertEqual([s.action for s in reloaded.scenes], [f"Alice eats lunch in scene {i}." for i in range(4)])
        self.assertEqual(reloaded.scenes, simulated.scenes)
        request = config.provider.requests[0]
        self.assertEqual(request.messages[0].content, scenario.persona)
        self.assertEqual(request.temperature, settings.LAIP['ACTOR_TEMPERATURE'])

    def test_saved_hypothesis_reference(self):
        """Test that a scenario saved elsewhere still finds its hypothesis fixture"""
        scenario = load_scenario('alice')
        with tempfile.TemporaryDirectory() as tmp:
            saved = load_scenario(save_scenario(scenario, Path(tmp) / 'scenarios' / 'alice.json'))
            self.assertEqual(saved.hypotheses_path, DATA_DIR / 'alice_hypotheses.json')
            self.assertTrue(saved.hypotheses_path.is_file())

            fixture = Path(tmp) / 'fixtures' / 'custom.json'
            fixture.parent.mkdir()
            fixture.write_text((DATA_DIR / 'alice_hypotheses.json').read_text(encoding='utf-8'), encoding='utf-8')
            custom = replace(scenario, hypotheses=str(fixture))
            path = save_scenario(custom, Path(tmp) / 'elsewhere' / 'alice.json')
            self.assertEqual(json.loads(path.read_text(encoding='utf-8'))['hypotheses'], str(fixture.resolve()))
            self.assertEqual(load_scenario(path).hypotheses_path, fixture.resolve())

    def test_simulate_actor_command_errors(self):
        """Test exit codes for an unknown scenario and an unrecorded replay"""
        with tempfile.TemporaryDirectory() as tmp:
            with self.assertRaises(CommandError) as ctx:
                call_command('simulate_actor', 'bob', stdout=StringIO())
            self.assertEqual(ctx.exception.returncode, 2)
            with self.assertRaises(CommandError) as ctx:
                call_command(
                    'simulate_actor', 'alice', backend='replay', cache=str(Path(tmp) / 'empty.jsonl'),
                    out=str(Path(tmp) / 'alice.json'), stdout=StringIO(),
                )
            self.assertEqual(ctx.exception.returncode, 1)
            self.assertFalse((Path(tmp) / 'alice.json').exists())


class OpenEndedRunTestCase(SimpleTestCase):
    """Test full open-ended runs with scripted answers"""

    def setUp(self):
        scenario = load_scenario('alice')
        self.episode = scenario_episode(scenario)
        self.hypotheses, _ = load_hypothesis_fixture(scenario.hypotheses_path)
        self.embedder = MockEmbeddingBackend(basis=[step.observed for step in self.episode.steps])

    def test_thai_hypothesis_wins(self):
        """Test that evidence from the Thai scene lands on the Thai hypothesis"""
        config = scripted_config(thai_responder(self.episode))
        records = run_open_ended(
            config, self.episode, self.hypotheses, uniform_prior(self.hypotheses), self.embedder, temperature=0.05
        )
        self.assertEqual(len(records), 4)
        self.assertEqual(len(config.provider.requests), 4 * (1 + 20))
        for record in records:
            self.assertEqual(len(record.actions), 6)
            self.assertEqual(record.matrix.shape, (20, 6))
            self.assertEqual(record.obs_weights.argmax(), OBSERVED_POSITION)
        self.assertEqual(records[-1].posterior.argmax_label(), 'H10')
        np.testing.assert_allclose(records[0].posterior.as_array(), np.full(20, 0.05), atol=1e-9)

    def test_llm_update_records_error(self):
        """Test the model-computed posterior alongside the exact one"""
        config = scripted_config(thai_responder(self.episode), update_mode='llm')
        records = run_open_ended(
            config, self.episode.truncated(2), self.hypotheses, uniform_prior(self.hypotheses), self.embedder, temperature=0.05
        )
        self.assertIsNotNone(records[1].math_posterior)
        self.assertEqual(records[1].math_posterior.argmax_label(), 'H10')
        np.testing.assert_allclose(records[1].posterior.as_array(), np.full(20, 0.05), atol=1e-9)
        self.assertAlmostEqual(
            records[1].llm_posterior_error,
            float(np.max(np.abs(records[1].math_posterior.as_array() - 0.05))),
        )
        update = [r for r in config.provider.requests if r.metadata['kind'] == 'posterior']
        self.assertEqual(len(update), 2)
        self.assertEqual(len(update[1].metadata['obs_weights']), 6)
        self.assertIn('Alice walks past the Chinese restaurants', update[1].messages[1].content)

    def test_restaurant_episode_in_free_mode(self):
        """Test that proposed candidates replace a restaurant step's fixed list"""
        episode = restaurant_episode(load_trajectory('t1'))
        hypotheses = HypothesisSet.from_texts(['The agent likes Thai food.', 'The agent likes noodles.'])

        def respond(request):
            if request.metadata['kind'] == 'actions':
                return json.dumps(proposals(episode.steps[request.metadata['timestep']].observed, 0))
            return '\n'.join(f"A{j}: {1 / 6!r}" for j in range(1, 7))

        embedder = MockEmbeddingBackend(basis=[step.observed for step in episode.steps])
        records = run_open_ended(scripted_config(respond), episode, hypotheses, uniform_prior(hypotheses), embedder)
        self.assertEqual(len(records), len(episode.steps))
        self.assertNotEqual(records[0].actions, episode.steps[0].candidates)
        np.testing.assert_allclose(records[-1].posterior.as_array(), [0.5, 0.5], atol=1e-9)
