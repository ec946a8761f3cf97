import numpy as np
from django.test import SimpleTestCase

from engine.config import InferenceConfig
from engine.episodes import restaurant_episode
from engine.exceptions import RunAborted
from engine.hypotheses import ordering_hypotheses, uniform_prior
from engine.records import Episode, EpisodeStep, HypothesisSet
from environment.corpus import load_trajectory
from oracle.posterior import optimal_posterior
from oracle.responder import OracleResponder
from providers.backends import ScriptedBackend
from providers.exceptions import BackendRefusal

from .runner import BASELINES, baseline_prompt, run_generic_cot, run_single_cot, run_zero_shot

EPSILON = 0.01
STEP_BY_STEP = 'Think step by step before giving your final answer.'


def oracle_config():
    return InferenceConfig(ScriptedBackend(responder=OracleResponder(epsilon=EPSILON)), model_id='scripted', floor=0.0)


def lunch_episode():
    step = EpisodeStep(timestep=0, state_context='Alice is at the food court.', observed='Alice orders pad thai.')
    return Episode('lunch', 'open_ended', 'You are watching Alice.', 'Alice at work.', 'Alice', (step,))


class DirectPosteriorTestCase(SimpleTestCase):
    """Test the single-call baselines against scripted answers"""

    def test_oracle_echo(self):
        """Test that an exact one-step Bayes responder reproduces the optimal posterior"""
        trajectory = load_trajectory('t1')
        hypotheses = ordering_hypotheses()
        for run in BASELINES.values():
            records = run(oracle_config(), restaurant_episode(trajectory), hypotheses, uniform_prior(hypotheses))
            self.assertEqual(len(records), 3)
            expected = optimal_posterior(trajectory, epsilon=EPSILON)
            np.testing.assert_allclose(records[-1].posterior.as_array(), expected.as_array(), atol=1e-9)

    def test_one_call_per_step(self):
        """Test that single-CoT spends exactly one call per timestep and stays on the simplex"""
        hypotheses = ordering_hypotheses()
        config = oracle_config()
        records = run_single_cot(config, restaurant_episode(load_trajectory('t9')), hypotheses, uniform_prior(hypotheses))
        self.assertEqual(len(config.provider.requests), 3)
        for record in records:
            self.assertEqual(len(record.raw), 1)
            self.assertIsNone(record.matrix)
            self.assertAlmostEqual(sum(record.posterior.probs), 1.0, delta=1e-9)
            self.assertTrue(all(p >= 0 for p in record.posterior.probs))
        self.assertIn('Carry out every step of inverse planning', config.provider.requests[0].messages[1].content)

    def test_scripted_answer_is_parsed(self):
        """Test an open-ended step without candidate actions"""
        hypotheses = HypothesisSet.from_texts(['Alice likes Thai food.', 'Alice likes burgers.'])
        config = InferenceConfig(ScriptedBackend(responder=lambda r: '{"H1": 0.9, "H2": 0.1}'), model_id='scripted')
        record = run_zero_shot(config, lunch_episode(), hypotheses, uniform_prior(hypotheses))[0]
        np.testing.assert_allclose(record.posterior.as_array(), [0.9, 0.1], atol=1e-5)
        self.assertIsNone(record.obs_weights)
        self.assertIn('Alice did this: Alice orders pad thai.', config.provider.requests[0].messages[1].content)

    def test_oracle_refuses_free_text_hypotheses(self):
        """Test that unstructured hypotheses cannot be answered by the oracle"""
        hypotheses = HypothesisSet.from_texts(['Likes noodles.', 'Likes rice.'])
        with self.assertRaises(RunAborted) as ctx:
            run_generic_cot(oracle_config(), restaurant_episode(load_trajectory('t4')), hypotheses, uniform_prior(hypotheses))
        self.assertIsInstance(ctx.exception.__cause__, BackendRefusal)


class BaselinePromptTestCase(SimpleTestCase):
    """Test the baseline prompt templates"""

    def setUp(self):
        self.episode = restaurant_episode(load_trajectory('study1-closed'))
        self.hypotheses = ordering_hypotheses()
        self.prior = uniform_prior(self.hypotheses)
        self.step = self.episode.steps[2]

    def test_generic_has_instruction(self):
        """Test that the generic prompt carries the literal step-by-step instruction"""
        config = oracle_config()
        run_generic_cot(config, self.episode, self.hypotheses, self.prior)
        self.assertIn(STEP_BY_STEP, config.provider.requests[0].messages[1].content)

    def test_zero_shot_differs_by_one_line(self):
        """Test that zero-shot is the generic prompt minus the instruction line"""
        generic = baseline_prompt('generic', self.episode, self.step, self.hypotheses, self.prior, step_by_step=True)
        zero_shot = baseline_prompt('generic', self.episode, self.step, self.hypotheses, self.prior)
        generic_lines = generic.splitlines()
        self.assertIn(STEP_BY_STEP, generic_lines)
        self.assertNotIn(STEP_BY_STEP, zero_shot)
        generic_lines.remove(STEP_BY_STEP)
        self.assertEqual([line for line in generic_lines if line], [line for line in zero_shot.splitlines() if line])

    def test_prompt_lists_hypotheses_and_action(self):
        """Test the situation, hypotheses, priors and chosen action"""
        prompt = baseline_prompt('generic', self.episode, self.step, self.hypotheses, self.prior)
        self.assertIn('The agent is in Room 4.', prompt)
        self.assertIn(f"H1: {self.hypotheses[0].text} (probability 0.1667)", prompt)
        self.assertIn('The agent chose A1: Move to Room 2.', prompt)
