from django.test import SimpleTestCase
from rest_framework import serializers

from .corpus import encode_cells, list_trajectories, load_trajectory
from .exceptions import LegalActionError, UnknownRoom, UnknownTrajectory, Unreachable
from .graph import (
    Eat, Move, TrajectoryDef, WorldState, build_environment, default_environment, legal_actions,
    observe, replay, shortest_path, world_states,
)
from .rendering import render_environment, render_observation


def all_simple_paths(graph, start, target):
    """Enumerate every simple path by depth-first search."""
    paths = []

    def walk(room, visited):
        if room == target:
            paths.append(visited[1:])
            return
        for neighbor in graph.neighbors(room):
            if neighbor not in visited:
                walk(neighbor, visited + [neighbor])

    walk(start, [start])
    return paths


CYCLIC_SPEC = {
    'name': 'square',
    'rooms': [1, 2, 3, 4],
    'edges': {'1': [2, 3], '2': [1, 4], '3': [1, 4], '4': [2, 3]},
    'restaurants': {'Noodles': 4, 'Tacos': 3},
    'visibility': {'Noodles': [4, 2], 'Tacos': [3]},
}


class BuildEnvironmentTestCase(SimpleTestCase):
    """Test cases for environment construction."""

    def test_default_environment_layout(self):
        """Test that the shipped spec reproduces the seven-room task."""
        graph = default_environment()
        self.assertEqual(graph.rooms, (1, 2, 3, 4, 5, 6, 7))
        self.assertEqual(graph.restaurants, ('Chinese', 'Mexican', 'Japanese'))
        self.assertEqual(dict(graph.restaurant_rooms), {'Chinese': 3, 'Mexican': 5, 'Japanese': 7})
        self.assertEqual(graph.visibility['Chinese'], frozenset({1, 2, 3, 4}))
        self.assertEqual(graph.visibility['Mexican'], frozenset({2, 4, 5, 6}))
        self.assertEqual(graph.visibility['Japanese'], frozenset({4, 6, 7}))
        self.assertEqual(graph.neighbors(2), (1, 3, 4))
        self.assertEqual(graph.neighbors(3), (2,))

    def test_every_restaurant_visible_from_its_room(self):
        """Test the self-visibility invariant on the shipped graph."""
        graph = default_environment()
        for restaurant, room in graph.restaurant_rooms.items():
            self.assertIn(room, graph.visibility[restaurant])

    def test_single_room_graph(self):
        """Test that a single room with no restaurants is valid."""
        graph = build_environment({'rooms': [1]})
        self.assertEqual(graph.rooms, (1,))
        self.assertEqual(graph.restaurants, ())
        self.assertEqual(legal_actions(graph, WorldState.all_open(graph), 1), ())

    def test_restaurant_not_visible_from_own_room(self):
        """Test that a restaurant invisible from its own room is rejected."""
        spec = dict(CYCLIC_SPEC, visibility={'Noodles': [2], 'Tacos': [3]})
        with self.assertRaises(serializers.ValidationError):
            build_environment(spec)

    def test_restaurant_without_visibility_is_rejected(self):
        """Test that an orphan restaurant with no visibility entry is rejected."""
        spec = dict(CYCLIC_SPEC, visibility={'Tacos': [3]})
        with self.assertRaises(serializers.ValidationError):
            build_environment(spec)

    def test_asymmetric_edges(self):
        """Test that one-way edges are rejected."""
        spec = dict(CYCLIC_SPEC, edges={'1': [2, 3], '2': [4], '3': [1, 4], '4': [2, 3]})
        with self.assertRaises(serializers.ValidationError):
            build_environment(spec)

    def test_self_loop(self):
        """Test that adjacency is irreflexive."""
        spec = {'rooms': [1, 2], 'edges': {'1': [1, 2], '2': [1]}}
        with self.assertRaises(serializers.ValidationError):
            build_environment(spec)

    def test_disconnected_graph(self):
        """Test that disconnected rooms are rejected."""
        spec = {'rooms': [1, 2, 3], 'edges': {'1': [2], '2': [1]}}
        with self.assertRaises(serializers.ValidationError):
            build_environment(spec)


class LegalActionsTestCase(SimpleTestCase):
    """Test cases for legal actions and observations."""

    def setUp(self):
        """Set up the default graph."""
        self.graph = default_environment()
        self.open_world = WorldState.all_open(self.graph)

    def test_room_one(self):
        """Test that Room 1 only offers the move to Room 2."""
        self.assertEqual(legal_actions(self.graph, self.open_world, 1), (Move(2),))

    def test_open_restaurant(self):
        """Test that an open restaurant adds Eat after the moves."""
        self.assertEqual(legal_actions(self.graph, self.open_world, 3), (Move(2), Eat('Chinese')))

    def test_closed_restaurant(self):
        """Test that a closed restaurant removes Eat."""
        world = WorldState.with_closed(self.graph, ['Chinese'])
        self.assertEqual(legal_actions(self.graph, world, 3), (Move(2),))

    def test_never_eat_closed_exhaustive(self):
        """Test every room in every world state for Eat at a closed restaurant."""
        worlds = world_states(self.graph)
        self.assertEqual(len(worlds), 8)
        for world in worlds:
            for room in self.graph.rooms:
                for action in legal_actions(self.graph, world, room):
                    if isinstance(action, Eat):
                        self.assertTrue(world.is_open(action.restaurant))
                        self.assertEqual(self.graph.restaurant_rooms[action.restaurant], room)
                    else:
                        self.assertIn(action.room, self.graph.neighbors(room))

    def test_unknown_room(self):
        """Test that unknown rooms raise UnknownRoom."""
        with self.assertRaises(UnknownRoom):
            legal_actions(self.graph, self.open_world, 42)
        with self.assertRaises(UnknownRoom):
            observe(self.graph, self.open_world, 0)

    def test_observe_room_two(self):
        """Test that Room 2 sees Chinese and Mexican but not Japanese."""
        obs = observe(self.graph, self.open_world, 2)
        self.assertEqual(obs.visible, (('Chinese', True), ('Mexican', True)))
        self.assertEqual(obs.reachable, (1, 3, 4))

    def test_observe_room_one_reports_true_status(self):
        """Test that Room 1 only sees the Chinese restaurant, with its true status."""
        world = WorldState.with_closed(self.graph, ['Chinese'])
        obs = observe(self.graph, world, 1)
        self.assertEqual(obs.visible, (('Chinese', False),))

    def test_observe_without_visibility(self):
        """Test a custom room from which nothing is visible."""
        graph = build_environment(CYCLIC_SPEC)
        obs = observe(graph, WorldState.all_open(graph), 1)
        self.assertEqual(obs.visible, ())

    def test_observe_is_deterministic(self):
        """Test that identical inputs give identical observations."""
        for world in world_states(self.graph):
            for room in self.graph.rooms:
                self.assertEqual(observe(self.graph, world, room), observe(self.graph, world, room))


class ShortestPathTestCase(SimpleTestCase):
    """Test cases for breadth-first planning."""

    def test_room_one_to_japanese(self):
        """Test the path from Room 1 to the Japanese restaurant."""
        self.assertEqual(shortest_path(default_environment(), 1, 'Japanese'), [2, 4, 6, 7])

    def test_already_there(self):
        """Test that the path is empty when already in the restaurant's room."""
        self.assertEqual(shortest_path(default_environment(), 3, 'Chinese'), [])

    def test_ties_prefer_lowest_room(self):
        """Test tie breaking on a graph with two equally short routes."""
        graph = build_environment(CYCLIC_SPEC)
        self.assertEqual(shortest_path(graph, 1, 'Noodles'), [2, 4])

    def test_matches_exhaustive_enumeration(self):
        """Test against the shortest, then lowest-indexed, simple path."""
        for graph in (default_environment(), build_environment(CYCLIC_SPEC)):
            for room in graph.rooms:
                for restaurant, target in graph.restaurant_rooms.items():
                    paths = all_simple_paths(graph, room, target)
                    expected = min(paths, key=lambda p: (len(p), p))
                    self.assertEqual(shortest_path(graph, room, restaurant), expected)

    def test_unknown_restaurant(self):
        """Test that a missing restaurant is unreachable."""
        with self.assertRaises(Unreachable):
            shortest_path(default_environment(), 1, 'Thai')


class TrajectoryCorpusTestCase(SimpleTestCase):
    """Test cases for the trajectory corpus."""

    def test_corpus_ids(self):
        """Test that the corpus holds both study1 rows and ten numbered rows."""
        ids = list_trajectories()
        self.assertEqual(len(ids), 12)
        self.assertEqual(ids[:2], ['study1-open', 'study1-closed'])
        self.assertEqual(ids[2:], [f"t{i}" for i in range(1, 11)])

    def test_study1_closed(self):
        """Test the encoded study1-closed trajectory."""
        trajectory = load_trajectory('study1-closed')
        self.assertEqual(trajectory.table_cells, ('Room 2', 'Room 3', 'Room 2', 'Chinese'))
        self.assertEqual(
            trajectory.actions,
            (Move(2), Move(4), Move(2), Move(3), Eat('Chinese')),
        )
        self.assertEqual(trajectory.world.closed, ('Japanese',))
        self.assertTrue(trajectory.reconstructed)

    def test_t1_cells_are_verbatim(self):
        """Test that t1 keeps the table row and needs no reconstruction."""
        trajectory = load_trajectory('t1')
        self.assertEqual(trajectory.table_cells, ('Room 2', 'Room 3', 'Room 2'))
        self.assertEqual(trajectory.actions, (Move(2), Move(4), Move(2)))
        self.assertFalse(trajectory.reconstructed)

    def test_t3_completion(self):
        """Test that t3 reaches the Mexican restaurant by the shortest legal route."""
        trajectory = load_trajectory('t3')
        self.assertEqual(trajectory.actions, (Move(2), Move(4), Move(5), Eat('Mexican')))
        self.assertTrue(trajectory.reconstructed)
        self.assertEqual(trajectory.world.closed, ())

    def test_t10(self):
        """Test that t10 has both Chinese and Mexican closed."""
        trajectory = load_trajectory('t10')
        self.assertEqual(trajectory.actions, (Move(2), Move(4), Move(6)))
        self.assertEqual(trajectory.world.describe(), 'Chinese/Mexican closed')

    def test_every_trajectory_replays(self):
        """Test that every corpus row is legal step by step."""
        graph = default_environment()
        for trajectory_id in list_trajectories():
            trajectory = load_trajectory(trajectory_id)
            steps = replay(graph, trajectory)
            self.assertEqual(len(steps), len(trajectory.actions))

    def test_unknown_trajectory(self):
        """Test that unknown ids raise UnknownTrajectory."""
        with self.assertRaises(UnknownTrajectory):
            load_trajectory('t11')

    def test_illegal_replay(self):
        """Test that eating in a room without the restaurant is illegal."""
        graph = default_environment()
        trajectory = TrajectoryDef(
            id='bad', world=WorldState.all_open(graph), start_room=1,
            actions=(Move(2), Eat('Chinese')),
        )
        with self.assertRaises(LegalActionError):
            replay(graph, trajectory)

    def test_unknown_cell(self):
        """Test that a cell naming nothing in the graph is rejected."""
        with self.assertRaises(serializers.ValidationError):
            encode_cells(default_environment(), 1, ['Room 9'], {'Room 2': 2})


class RenderingTestCase(SimpleTestCase):
    """Test cases for prompt rendering of the environment."""

    def test_environment_rules(self):
        """Test that the rule text lists rooms and visibility."""
        text = render_environment(default_environment())
        self.assertIn('There are seven rooms:', text)
        self.assertIn('Room 1 connects to Room 2.', text)
        self.assertIn('Room 2 connects to Room 1, Room 3, and Room 4.', text)
        self.assertIn('Room 7 has a Japanese restaurant in it.', text)
        self.assertIn('The Chinese restaurant is **visible** from Room 1, Room 2, and Room 4.', text)
        self.assertIn('The Japanese restaurant is **visible** from Room 4 and Room 6.', text)
        self.assertIn('Agents cannot eat at restaurants that are closed', text)

    def test_observation_text(self):
        """Test the per-step observation text."""
        graph = default_environment()
        world = WorldState.with_closed(graph, ['Mexican'])
        text = render_observation(observe(graph, world, 2))
        self.assertIn('The agent is in Room 2.', text)
        self.assertIn('the Chinese restaurant (open), the Mexican restaurant (closed)', text)
        self.assertIn('The agent can move to Room 1, Room 3, and Room 4.', text)
