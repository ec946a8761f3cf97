import itertools
import json
from types import MappingProxyType

from django.test import SimpleTestCase

from environment.corpus import default_corpus, load_trajectory
from environment.graph import Eat, Move, TrajectoryDef, WorldState, build_environment, default_environment, observe
from laip.distributions import ProbabilityDistribution
from providers.exceptions import BackendRefusal
from providers.records import CompletionRequest

from .belief import AgentBelief, init_belief, update_belief
from .exceptions import IllegalTrajectory
from .policy import (
    PreferenceOrdering, all_orderings, belief_trajectory, forward_policy, ordering_from_text,
    trajectory_likelihood,
)
from .posterior import ideal_results_table, optimal_posterior, optimal_step_posteriors
from .responder import OracleResponder

P_OPEN = 0.95
EPSILON = 0.01


def belief_of(graph, values):
    return AgentBelief(MappingProxyType(dict(zip(graph.restaurants, values))))


def first_steps(graph, room, target_room):
    """First room of the shortest, then lowest-indexed, simple path."""
    paths = []

    def walk(current, visited):
        if current == target_room:
            paths.append(visited[1:])
            return
        for neighbor in graph.neighbors(current):
            if neighbor not in visited:
                walk(neighbor, visited + [neighbor])

    walk(room, [room])
    best = min(paths, key=lambda p: (len(p), p))
    return best[0] if best else None


def brute_force_likelihood(graph, ranking, trajectory):
    """Likelihood recomputed from goal probabilities and enumerated paths."""
    seen = set()
    room = trajectory.start_room
    total = 1.0
    for action in trajectory.actions:
        seen.update(r for r in graph.restaurants if room in graph.visibility[r])
        belief = {
            r: (1.0 if trajectory.world.open[r] else 0.0) if r in seen else P_OPEN
            for r in graph.restaurants
        }
        goal_probs = {}
        still_searching = 1.0
        for restaurant in ranking:
            goal_probs[restaurant] = still_searching * belief[restaurant]
            still_searching *= 1.0 - belief[restaurant]

        moves = graph.neighbors(room)
        prob = 0.0
        for restaurant, goal_prob in goal_probs.items():
            step = first_steps(graph, room, graph.restaurant_rooms[restaurant])
            chosen = Eat(restaurant) if step is None else Move(step)
            if chosen == action:
                prob += (1.0 - EPSILON) * goal_prob
        if isinstance(action, Move):
            prob += (EPSILON + (1.0 - EPSILON) * still_searching) / len(moves)
        total *= prob
        if isinstance(action, Move):
            room = action.room
    return total


class BeliefTestCase(SimpleTestCase):
    """Test cases for the agent's open/closed belief."""

    def test_init_belief(self):
        """Test that every restaurant starts at 0.95."""
        belief = init_belief(default_environment())
        self.assertEqual(belief.to_json(), {'Chinese': 0.95, 'Mexican': 0.95, 'Japanese': 0.95})

    def test_init_belief_empty_and_large(self):
        """Test graphs with no restaurants and with five restaurants."""
        self.assertEqual(init_belief(build_environment({'rooms': [1]})).to_json(), {})
        spec = {
            'rooms': [1, 2, 3, 4, 5, 6],
            'edges': {'1': [2, 3, 4, 5, 6], '2': [1], '3': [1], '4': [1], '5': [1], '6': [1]},
            'restaurants': {'A': 2, 'B': 3, 'C': 4, 'D': 5, 'E': 6},
            'visibility': {'A': [2], 'B': [3], 'C': [4], 'D': [5], 'E': [6]},
        }
        belief = init_belief(build_environment(spec))
        self.assertEqual(list(belief.to_json().values()), [0.95] * 5)

    def test_update_on_closed_restaurant(self):
        """Test that observing a closed restaurant sets its entry to 0."""
        graph = default_environment()
        world = WorldState.with_closed(graph, ['Chinese'])
        belief = update_belief(init_belief(graph), observe(graph, world, 3))
        self.assertEqual(belief.to_json(), {'Chinese': 0.0, 'Mexican': 0.95, 'Japanese': 0.95})

    def test_update_is_idempotent(self):
        """Test that re-observing changes nothing."""
        graph = default_environment()
        world = WorldState.all_open(graph)
        once = update_belief(init_belief(graph), observe(graph, world, 4))
        twice = update_belief(once, observe(graph, world, 4))
        self.assertEqual(once, twice)
        self.assertEqual(once.to_json(), {'Chinese': 1.0, 'Mexican': 1.0, 'Japanese': 1.0})

    def test_update_without_visible_restaurants(self):
        """Test that an empty observation leaves the belief unchanged."""
        graph = build_environment({
            'rooms': [1, 2], 'edges': {'1': [2], '2': [1]},
            'restaurants': {'Thai': 2}, 'visibility': {'Thai': [2]},
        })
        belief = init_belief(graph)
        self.assertIs(update_belief(belief, observe(graph, WorldState.all_open(graph), 1)), belief)

    def test_belief_trajectory_ignores_hypothesis(self):
        """Test that beliefs depend only on the rooms visited."""
        graph = default_environment()
        beliefs = belief_trajectory(graph, load_trajectory('study1-closed'))
        self.assertEqual(beliefs[0].to_json(), {'Chinese': 1.0, 'Mexican': 0.95, 'Japanese': 0.95})
        self.assertEqual(beliefs[2].to_json(), {'Chinese': 1.0, 'Mexican': 1.0, 'Japanese': 0.0})


class ForwardPolicyTestCase(SimpleTestCase):
    """Test cases for the rational agent's action distribution."""

    def setUp(self):
        """Set up the default graph."""
        self.graph = default_environment()

    def test_room_one_fresh_belief(self):
        """Test that every ordering leaves Room 1 through Room 2."""
        belief = update_belief(init_belief(self.graph), observe(self.graph, WorldState.all_open(self.graph), 1))
        policy = forward_policy(self.graph, belief, PreferenceOrdering(('Japanese', 'Chinese', 'Mexican')), 1, EPSILON)
        self.assertEqual(policy.labels, ('Move(2)',))
        self.assertGreaterEqual(policy['Move(2)'], 0.95 * 0.99)

    def test_eat_when_top_choice_is_here(self):
        """Test the Chinese-first agent standing at an open Chinese restaurant."""
        belief = belief_of(self.graph, (1.0, 0.95, 0.95))
        policy = forward_policy(self.graph, belief, PreferenceOrdering(('Chinese', 'Japanese', 'Mexican')), 3, EPSILON)
        self.assertEqual(policy.labels, ('Move(2)', 'Eat(Chinese)'))
        self.assertAlmostEqual(policy['Eat(Chinese)'], 0.99, places=12)
        self.assertAlmostEqual(policy['Move(2)'], 0.01, places=12)

    def test_fallthrough_to_next_restaurant(self):
        """Test that believed-closed mass moves to the next-ranked restaurant."""
        belief = belief_of(self.graph, (1.0, 1.0, 0.95))
        policy = forward_policy(self.graph, belief, PreferenceOrdering(('Japanese', 'Chinese', 'Mexican')), 2, EPSILON)
        self.assertAlmostEqual(policy['Move(4)'], 0.99 * 0.95 + 0.01 / 3, places=12)
        self.assertAlmostEqual(policy['Move(3)'], 0.99 * 0.05 + 0.01 / 3, places=12)
        self.assertAlmostEqual(policy['Move(1)'], 0.01 / 3, places=12)

    def test_all_beliefs_zero(self):
        """Test the uniform fallback over moves when nothing may be open."""
        belief = belief_of(self.graph, (0.0, 0.0, 0.0))
        with self.assertLogs('oracle.policy', level='WARNING'):
            policy = forward_policy(self.graph, belief, PreferenceOrdering(('Chinese', 'Mexican', 'Japanese')), 2, EPSILON)
        self.assertEqual(policy.labels, ('Move(1)', 'Move(3)', 'Move(4)'))
        for prob in policy.probs:
            self.assertAlmostEqual(prob, 1.0 / 3, places=12)

    def test_policy_sums_to_one_exhaustive(self):
        """Test every room, every belief in {0, 0.95, 1}^3 and every ordering."""
        orderings = all_orderings(self.graph)
        self.assertEqual(len(orderings), 6)
        with self.assertLogs('oracle.policy', level='WARNING'):
            for room in self.graph.rooms:
                for values in itertools.product((0.0, 0.95, 1.0), repeat=3):
                    belief = belief_of(self.graph, values)
                    for ordering in orderings:
                        policy = forward_policy(self.graph, belief, ordering, room, EPSILON)
                        self.assertAlmostEqual(sum(policy.probs), 1.0, delta=1e-12)
                        self.assertTrue(all(p >= 0.0 for p in policy.probs))


class OrderingTestCase(SimpleTestCase):
    """Test cases for preference orderings."""

    def test_labels_and_text(self):
        """Test the label and the natural-language sentence."""
        ordering = PreferenceOrdering(('Japanese', 'Chinese', 'Mexican'))
        self.assertEqual(ordering.label, 'Japanese>Chinese>Mexican')
        self.assertEqual(
            ordering.describe(),
            'The agent prefers Japanese food the most, then Chinese, then Mexican.',
        )
        self.assertEqual(PreferenceOrdering.from_label(ordering.label), ordering)

    def test_text_round_trip_for_all_orderings(self):
        """Test that canonical sentences are recognised as orderings."""
        graph = default_environment()
        for ordering in all_orderings(graph):
            self.assertEqual(ordering_from_text(ordering.describe(), graph), ordering)
        self.assertIsNone(ordering_from_text('The agent likes spicy food.', graph))


class LikelihoodTestCase(SimpleTestCase):
    """Test cases for trajectory likelihoods."""

    def setUp(self):
        """Set up the default graph."""
        self.graph = default_environment()

    def test_empty_trajectory(self):
        """Test the empty product."""
        trajectory = TrajectoryDef(id='empty', world=WorldState.all_open(self.graph), start_room=1, actions=())
        for ordering in all_orderings(self.graph):
            self.assertEqual(trajectory_likelihood(ordering, trajectory, EPSILON), 1.0)

    def test_t1_prefers_japanese_first(self):
        """Test that t1 is likelier under J>C>M than under M>J>C."""
        trajectory = load_trajectory('t1')
        jcm = trajectory_likelihood(PreferenceOrdering.from_label('Japanese>Chinese>Mexican'), trajectory, EPSILON)
        mjc = trajectory_likelihood(PreferenceOrdering.from_label('Mexican>Japanese>Chinese'), trajectory, EPSILON)
        self.assertGreater(jcm, mjc)

    def test_move_only_trajectories_are_positive(self):
        """Test that the noise keeps every move-only trajectory possible."""
        for trajectory in default_corpus().values():
            if any(isinstance(a, Eat) for a in trajectory.actions):
                continue
            for ordering in all_orderings(self.graph):
                value = trajectory_likelihood(ordering, trajectory, EPSILON)
                self.assertGreater(value, 0.0)
                self.assertLessEqual(value, 1.0)

    def test_matches_brute_force(self):
        """Test every corpus trajectory against the independent recomputation."""
        for trajectory in default_corpus().values():
            for ordering in all_orderings(self.graph):
                self.assertAlmostEqual(
                    trajectory_likelihood(ordering, trajectory, EPSILON),
                    brute_force_likelihood(self.graph, ordering.ranking, trajectory),
                    delta=1e-12,
                )

    def test_illegal_trajectory(self):
        """Test that an impossible action sequence is rejected."""
        trajectory = TrajectoryDef(
            id='bad', world=WorldState.all_open(self.graph), start_room=1, actions=(Move(3),),
        )
        with self.assertRaises(IllegalTrajectory):
            trajectory_likelihood(all_orderings(self.graph)[0], trajectory, EPSILON)


class OptimalPosteriorTestCase(SimpleTestCase):
    """Test cases for the analytic posterior."""

    def setUp(self):
        """Set up the default graph and orderings."""
        self.graph = default_environment()
        self.orderings = all_orderings(self.graph)

    def test_study1_closed_argmax(self):
        """Test that the closed-world trajectory points to Japanese > Chinese > Mexican."""
        posterior = optimal_posterior(load_trajectory('study1-closed'), epsilon=EPSILON)
        self.assertEqual(posterior.argmax_label(), 'Japanese>Chinese>Mexican')

    def test_empty_trajectory_returns_prior(self):
        """Test that no evidence leaves a uniform prior untouched."""
        trajectory = TrajectoryDef(id='empty', world=WorldState.all_open(self.graph), start_room=1, actions=())
        posterior = optimal_posterior(trajectory, epsilon=EPSILON)
        for prob in posterior.probs:
            self.assertAlmostEqual(prob, 1.0 / 6, places=12)

    def test_t4_is_symmetric_between_chinese_first_orderings(self):
        """Test that nothing distinguishes C>J>M from C>M>J on t4."""
        posterior = optimal_posterior(load_trajectory('t4'), epsilon=EPSILON)
        self.assertAlmostEqual(posterior['Chinese>Japanese>Mexican'], posterior['Chinese>Mexican>Japanese'], places=12)
        top = sorted(posterior.probs, reverse=True)[:2]
        self.assertAlmostEqual(sum(top), posterior['Chinese>Japanese>Mexican'] * 2, places=12)

    def test_matches_brute_force(self):
        """Test all twelve corpus trajectories against the recomputed posterior."""
        for trajectory in default_corpus().values():
            weights = [brute_force_likelihood(self.graph, o.ranking, trajectory) for o in self.orderings]
            expected = [w / sum(weights) for w in weights]
            posterior = optimal_posterior(trajectory, epsilon=EPSILON)
            for got, want in zip(posterior.probs, expected):
                self.assertAlmostEqual(got, want, delta=1e-9)

    def test_rescaling_prior_weights(self):
        """Test invariance to scaling every likelihood by the same constant."""
        trajectory = load_trajectory('t2')
        prior = ProbabilityDistribution.uniform([o.label for o in self.orderings])
        base = optimal_posterior(trajectory, prior, epsilon=EPSILON)
        weights = [prior[i] * trajectory_likelihood(o, trajectory, EPSILON) * 7.5 for i, o in enumerate(self.orderings)]
        rescaled = ProbabilityDistribution.from_weights(weights, prior.labels)
        for a, b in zip(base.probs, rescaled.probs):
            self.assertAlmostEqual(a, b, delta=1e-12)

    def test_move_only_posterior_has_no_zeros(self):
        """Test that no entry vanishes on a move-only trajectory."""
        posterior = optimal_posterior(load_trajectory('t10'), epsilon=EPSILON)
        self.assertTrue(all(p > 0.0 for p in posterior.probs))

    def test_step_posteriors_end_at_final_posterior(self):
        """Test that sequential and whole-trajectory posteriors agree."""
        for trajectory in default_corpus().values():
            steps = optimal_step_posteriors(trajectory, epsilon=EPSILON)
            self.assertEqual(len(steps), len(trajectory.actions))
            final = optimal_posterior(trajectory, epsilon=EPSILON)
            for got, want in zip(steps[-1].probs, final.probs):
                self.assertAlmostEqual(got, want, delta=1e-12)

    def test_ideal_results_table(self):
        """Test that the table covers trajectories 1 through 10."""
        table = ideal_results_table(epsilon=EPSILON)
        self.assertEqual(list(table), [f"t{i}" for i in range(1, 11)])


class OracleResponderTestCase(SimpleTestCase):
    """Test cases for the scripted responder."""

    def setUp(self):
        """Set up a responder."""
        self.responder = OracleResponder(epsilon=EPSILON)

    def request(self, **metadata):
        return CompletionRequest.from_prompts('oracle', '', 'question', metadata=metadata)

    def test_likelihood_lines(self):
        """Test that likelihood answers follow the A1..Ak listing."""
        text = self.responder(self.request(
            kind='likelihood', trajectory_id='study1-closed', timestep=4,
            ordering='Japanese>Chinese>Mexican', actions=['Move(2)', 'Eat(Chinese)'],
        ))
        lines = text.splitlines()
        self.assertEqual(len(lines), 2)
        self.assertTrue(lines[0].startswith('A1: '))
        self.assertAlmostEqual(float(lines[1].split(': ')[1]), 0.99, places=12)

    def test_posterior_answer(self):
        """Test the exact Bayes answer for a two-hypothesis matrix."""
        text = self.responder(self.request(
            kind='posterior', prior=[0.5, 0.5], matrix=[[0.8, 0.2], [0.2, 0.8]], observed_index=0,
        ))
        answer = json.loads(text)
        self.assertAlmostEqual(answer['H1'], 0.8, places=12)
        self.assertAlmostEqual(answer['H2'], 0.2, places=12)

    def test_hypothesis_answer(self):
        """Test that hypothesis requests get the six orderings."""
        answer = json.loads(self.responder(self.request(kind='hypotheses', n=6)))
        self.assertEqual(len(answer), 6)
        self.assertEqual(answer[0]['hypothesis'], 'The agent prefers Chinese food the most, then Mexican, then Japanese.')

    def test_unknown_kind(self):
        """Test that unsupported requests are refused."""
        with self.assertRaises(BackendRefusal):
            self.responder(self.request(kind='actions'))
        with self.assertRaises(BackendRefusal):
            self.responder(self.request())
