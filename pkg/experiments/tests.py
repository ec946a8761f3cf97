import json
import random
import tempfile
from io import StringIO
from pathlib import Path

import numpy as np
from django.core.management import call_command
from django.core.management.base import CommandError
from django.test import TestCase
from rest_framework import serializers

from engine.config import InferenceConfig
from engine.hypotheses import load_hypothesis_fixture, ordering_hypotheses, uniform_prior
from engine.records import HypothesisSet, StepRecord
from environment.corpus import load_trajectory
from laip.distributions import ProbabilityDistribution
from laip.exceptions import DegenerateInput
from open_ended.scenarios import load_scenario, save_scenario, simulate_actor
from oracle.posterior import optimal_posterior
from oracle.responder import OracleResponder
from providers.backends import ScriptedBackend
from providers.embeddings import MockEmbeddingBackend
from providers.exceptions import BackendRefusal

from .analysis import align_posterior, compare_to_oracle, divergence_rows, subset_masses
from .config import ExperimentConfig, config_from_snapshot, load_experiment_config
from .exceptions import AlignmentError, EmptySelection
from .models import ExperimentRun
from .report import emit_report
from .runner import run_experiment
from .store import COMPLETED, FAILED, RunRecord, load_records

STUDY2 = ['t1', 't2', 't3', 't4', 't5', 't6', 't7', 't8', 't9', 't10']


def oracle_config(**kwargs):
    data = {
        'name': 'test',
        'mode': 'laip-full',
        'trajectories': ['t1'],
        'backend': {'kind': 'scripted-oracle', 'cache_mode': 'off'},
        'floor': 0.0,
    }
    data.update(kwargs)
    return ExperimentConfig.from_dict(data)


def failing_responder(trajectory_id, timestep):
    oracle = OracleResponder()

    def respond(request):
        metadata = request.metadata
        if metadata.get('trajectory_id') == trajectory_id and metadata.get('timestep') == timestep:
            raise BackendRefusal('Refused for testing.')
        return oracle(request)
    return respond


def uniform_record(run_id, trajectory='t1'):
    hypotheses = ordering_hypotheses()
    prior = uniform_prior(hypotheses)
    step = StepRecord(0, 'A room.', ('Move to Room 2',), 'Move to Room 2', prior, prior)
    return RunRecord(run_id, 'dummy', 'zero-shot', 'restaurants', trajectory, 0, 0, {}, hypotheses, [step])


class ExperimentConfigTestCase(TestCase):
    """Test config validation"""

    def test_defaults(self):
        config = oracle_config(repetitions=3)
        self.assertEqual(config.seeds, [0, 1, 2])
        self.assertEqual(config.update_mode, 'math')
        self.assertEqual(oracle_config(mode='laip-lcp').update_mode, 'llm')
        self.assertEqual(config.embedding['kind'], 'http')

    def test_invalid_configs(self):
        """Test seeds, trajectories and mode/task combinations"""
        invalid = [
            {'repetitions': 2, 'seeds': [1]},
            {'repetitions': 0},
            {'trajectories': ['t99']},
            {'mode': 'optimal', 'hypothesis_mode': 'generated'},
            {'mode': 'unknown'},
            {'task': 'open_ended', 'trajectories': ['alice'], 'hypothesis_mode': 'orderings',
             'backend': {'kind': 'http'}},
            {'task': 'open_ended', 'trajectories': ['alice'], 'hypothesis_mode': 'fixture'},
            {'softmax_temperature': 0.0},
        ]
        for overrides in invalid:
            with self.subTest(overrides=overrides):
                with self.assertRaises(serializers.ValidationError):
                    oracle_config(**overrides)

    def test_shipped_configs(self):
        """Test that every shipped study profile validates"""
        self.assertEqual(load_experiment_config('study1').repetitions, 10)
        self.assertEqual(load_experiment_config('study2').trajectories, STUDY2)
        self.assertEqual(load_experiment_config('study3').task, 'open_ended')
        self.assertEqual(load_experiment_config('oracle-equivalence').floor, 0.0)

    def test_snapshot_round_trip(self):
        config = oracle_config(repetitions=2)
        self.assertEqual(config_from_snapshot(config.to_json()), config)


class RunExperimentTestCase(TestCase):
    """Test batch execution and run persistence"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.runs_dir = Path(self.tmp.name) / 'runs'

    def tearDown(self):
        self.tmp.cleanup()

    def test_full_study_grid(self):
        """Test 10 trajectories x 5 repetitions"""
        records = run_experiment(oracle_config(trajectories=STUDY2, repetitions=5), batch='grid', runs_dir=self.runs_dir)
        self.assertEqual(len(records), 50)
        self.assertTrue(all(r.status == COMPLETED for r in records))
        self.assertEqual(ExperimentRun.objects.filter(batch='grid', status=COMPLETED).count(), 50)
        self.assertEqual(records[0].run_id, 'grid-laip-full-t1-rep0')
        self.assertEqual(records[-1].run_id, 'grid-laip-full-t10-rep4')

    def test_single_run_persistence(self):
        """Test steps.jsonl, run.json and the index row for one run"""
        record = run_experiment(oracle_config(), batch='one', runs_dir=self.runs_dir)[0]
        directory = self.runs_dir / 'one-laip-full-t1-rep0'
        lines = (directory / 'steps.jsonl').read_text().splitlines()
        self.assertEqual(len(lines), len(record.steps))
        self.assertTrue((directory / 'run.json').exists())
        row = ExperimentRun.objects.get(run_id=record.run_id)
        self.assertEqual(row.steps_completed, len(record.steps))
        self.assertEqual(row.calls, record.usage['calls'])
        self.assertEqual(row.calls, sum(len(step.raw) for step in record.steps))

        loaded = load_records('one', self.runs_dir)[0]
        self.assertEqual(loaded.final_posterior, record.final_posterior)
        self.assertEqual(loaded.hypotheses, record.hypotheses)
        expected = optimal_posterior(load_trajectory('t1'))
        np.testing.assert_allclose(loaded.final_posterior.as_array(), expected.as_array(), atol=1e-9)

    def test_failed_run_does_not_stop_batch(self):
        """Test that a failing run keeps its partial steps and the others complete"""
        provider = ScriptedBackend(responder=failing_responder('t2', 1))
        records = run_experiment(
            oracle_config(trajectories=['t1', 't2', 't3']), batch='partial', runs_dir=self.runs_dir, provider=provider
        )
        statuses = {r.trajectory: r.status for r in records}
        self.assertEqual(statuses, {'t1': COMPLETED, 't2': FAILED, 't3': COMPLETED})
        failed = records[1]
        self.assertEqual(len(failed.steps), 1)
        self.assertIn('Refused for testing', failed.error)
        steps_file = self.runs_dir / failed.run_id / 'steps.jsonl'
        self.assertEqual(len(steps_file.read_text().splitlines()), 1)
        self.assertEqual(ExperimentRun.objects.get(run_id=failed.run_id).status, FAILED)

    def test_optimal_mode(self):
        """Test the analytic configuration without provider calls"""
        provider = ScriptedBackend()
        record = run_experiment(
            oracle_config(mode='optimal', trajectories=['study1-closed']), batch='opt',
            runs_dir=self.runs_dir, provider=provider,
        )[0]
        self.assertEqual(record.status, COMPLETED)
        self.assertEqual(provider.requests, [])
        self.assertEqual(len(record.steps), 5)
        expected = optimal_posterior(load_trajectory('study1-closed'))
        np.testing.assert_allclose(record.final_posterior.as_array(), expected.as_array(), atol=1e-12)

    def test_generated_hypotheses(self):
        """Test that generated hypotheses are drawn once per run and counted in usage"""
        record = run_experiment(oracle_config(hypothesis_mode='generated'), batch='gen', runs_dir=self.runs_dir)[0]
        self.assertEqual(record.status, COMPLETED)
        self.assertEqual(len(record.setup), 1)
        self.assertEqual(len(record.hypotheses), 6)
        self.assertTrue(all(h.structured is not None for h in record.hypotheses))
        self.assertEqual(record.usage['calls'], 1 + sum(len(step.raw) for step in record.steps))

    def test_open_ended_task(self):
        """Test the Alice scenario end to end with scripted answers"""
        def respond(request):
            metadata = request.metadata
            if metadata['kind'] == 'actions':
                return json.dumps([f"Alice picks option {metadata['scene']}-{i}." for i in range(6)])
            return '\n'.join(f"A{j}: 1" for j in range(1, 7))

        config = ExperimentConfig.from_dict({
            'name': 'alice', 'mode': 'laip-full', 'task': 'open_ended', 'trajectories': ['alice'],
            'hypothesis_mode': 'fixture', 'embedding': {'kind': 'mock'},
        })
        record = run_experiment(
            config, batch='alice', runs_dir=self.runs_dir,
            provider=ScriptedBackend(responder=respond), embedder=MockEmbeddingBackend(),
        )[0]
        self.assertEqual(record.status, COMPLETED)
        self.assertEqual(len(record.steps), 4)
        self.assertEqual(len(record.hypotheses), 20)
        np.testing.assert_allclose(record.final_posterior.as_array(), np.full(20, 0.05), atol=1e-9)

    def test_simulated_scenario_file(self):
        """Test that a freshly simulated scenario file runs under its scenario id"""
        def respond(request):
            metadata = request.metadata
            if metadata['kind'] == 'actor':
                return f"Alice orders lunch in scene {metadata['scene']}."
            if metadata['kind'] == 'actions':
                return json.dumps([f"Alice picks option {metadata['scene']}-{i}." for i in range(6)])
            return '\n'.join(f"A{j}: 1" for j in range(1, 7))

        provider = ScriptedBackend(responder=respond)
        path = Path(self.tmp.name) / 'scenarios' / 'alice.json'
        simulate_actor(InferenceConfig(provider, model_id='scripted'), load_scenario('alice'), path)
        config = ExperimentConfig.from_dict({
            'name': 'simulated', 'mode': 'laip-full', 'task': 'open_ended', 'trajectories': [str(path)],
            'hypothesis_mode': 'fixture', 'embedding': {'kind': 'mock'},
        })
        record = run_experiment(
            config, batch='sim', runs_dir=self.runs_dir, provider=provider, embedder=MockEmbeddingBackend(),
        )[0]
        self.assertEqual(record.status, COMPLETED)
        self.assertEqual(record.run_id, 'sim-laip-full-alice-rep0')
        self.assertEqual(record.trajectory, 'alice')
        self.assertEqual(len(record.hypotheses), 20)
        self.assertEqual(record.steps[2].observed, 'Alice orders lunch in scene 2.')

    def test_scenario_paths_are_validated(self):
        """Test that missing files and repeated scenario ids are rejected"""
        path = save_scenario(load_scenario('alice'), Path(self.tmp.name) / 'copy.json')
        base = {'name': 'paths', 'mode': 'laip-full', 'task': 'open_ended', 'hypothesis_mode': 'fixture'}
        for trajectories in ([str(Path(self.tmp.name) / 'missing.json')], ['alice', str(path)]):
            with self.subTest(trajectories=trajectories):
                with self.assertRaises(serializers.ValidationError):
                    ExperimentConfig.from_dict({**base, 'trajectories': trajectories})

    def test_replay_reproduces_posteriors(self):
        """Test that a recorded batch replays to identical posteriors and tables"""
        cache = str(Path(self.tmp.name) / 'cache.jsonl')
        recorded = run_experiment(
            oracle_config(trajectories=['t1', 't5'], repetitions=2,
                          backend={'kind': 'scripted-oracle', 'cache_path': cache, 'cache_mode': 'record'}),
            batch='rec', runs_dir=self.runs_dir,
        )
        snapshot = recorded[0].config
        replay_config = config_from_snapshot(snapshot, backend={'kind': 'replay', 'cache_path': cache})
        replayed = run_experiment(replay_config, batch='rep', runs_dir=self.runs_dir)
        self.assertTrue(all(r.status == COMPLETED for r in replayed))
        for original, copy in zip(recorded, replayed):
            self.assertEqual(
                [json.dumps(s.posterior.to_json()) for s in original.steps],
                [json.dumps(s.posterior.to_json()) for s in copy.steps],
            )
        out_a, out_b = Path(self.tmp.name) / 'a', Path(self.tmp.name) / 'b'
        emit_report(recorded, out_a, compare_to_oracle(recorded))
        emit_report(replayed, out_b, compare_to_oracle(replayed))
        for name in ('correlation.csv', 'distance.csv'):
            self.assertEqual((out_a / name).read_bytes(), (out_b / name).read_bytes())

    def test_replay_without_recording_fails(self):
        config = oracle_config(backend={'kind': 'replay', 'cache_path': str(Path(self.tmp.name) / 'empty.jsonl')})
        record = run_experiment(config, batch='miss', runs_dir=self.runs_dir)[0]
        self.assertEqual(record.status, FAILED)
        self.assertEqual(record.steps, [])


class CompareToOracleTestCase(TestCase):
    """Test alignment and agreement with the optimal observer"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.runs_dir = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_oracle_batch_agrees(self):
        """Test that scripted-oracle runs correlate perfectly with the oracle"""
        records = run_experiment(oracle_config(trajectories=STUDY2), batch='eq', runs_dir=self.runs_dir)
        table = compare_to_oracle(records)
        row = table.correlations[0]
        self.assertAlmostEqual(row.pearson_r, 1.0, places=9)
        self.assertLess(row.jsd, 1e-9)
        self.assertLessEqual(table.max_abs_error, 1e-9)
        self.assertEqual(len(table.distances), 10)
        self.assertTrue(all(d.runs == 1 for d in table.distances))

    def test_order_independent(self):
        """Test that shuffling the records leaves the tables unchanged"""
        records = run_experiment(oracle_config(trajectories=['t1', 't4', 't9'], repetitions=2), batch='ord', runs_dir=self.runs_dir)
        shuffled = list(records)
        random.Random(4).shuffle(shuffled)
        a, b = compare_to_oracle(records), compare_to_oracle(shuffled)
        self.assertEqual(a.correlations, b.correlations)
        self.assertEqual(a.distances, b.distances)

    def test_uniform_posterior_is_degenerate(self):
        """Test that a constant posterior vector leaves the correlation undefined"""
        records = [uniform_record('dummy-1'), uniform_record('dummy-2', 't4')]
        table = compare_to_oracle(records)
        self.assertIsNone(table.correlations[0].pearson_r)
        self.assertIn('constant', table.correlations[0].note)
        with self.assertRaises(DegenerateInput):
            compare_to_oracle(records, strict=True)

    def test_free_text_hypotheses_need_mapping(self):
        """Test alignment through a declared mapping file"""
        orderings = ordering_hypotheses()
        labels = [h.structured.label for h in orderings]
        hypotheses = HypothesisSet.from_texts(['Likes Japanese food best.', 'Likes sushi.', 'Unclear.'])
        posterior = ProbabilityDistribution(hypotheses.labels, (0.5, 0.3, 0.2))
        with self.assertRaises(AlignmentError):
            align_posterior(hypotheses, posterior, labels)
        mapping = {
            'Likes Japanese food best.': labels[0],
            'Likes sushi.': labels[0],
            'Unclear.': 'unmapped',
        }
        aligned = align_posterior(hypotheses, posterior, labels, mapping)
        self.assertEqual(aligned.labels, tuple(labels))
        self.assertAlmostEqual(aligned[labels[0]], 1.0)
        with self.assertRaises(AlignmentError):
            align_posterior(hypotheses, posterior, labels, {**mapping, 'Likes sushi.': 'Pizza>Tacos'})

    def test_mode_comparison(self):
        """Test the t-test between two modes over eight trajectories each"""
        records = run_experiment(oracle_config(trajectories=STUDY2[:8]), batch='cmp', runs_dir=self.runs_dir)
        records += [uniform_record(f"dummy-{t}", t) for t in STUDY2[:8]]
        table = compare_to_oracle(records)
        rows = {row.measure: row for row in table.mode_comparisons}
        self.assertEqual(sorted(rows), ['hellinger', 'jsd'])
        for row in rows.values():
            self.assertEqual((row.mode_a, row.mode_b), ('laip-full', 'zero-shot'))
            self.assertEqual(row.dof, 14)
            self.assertLess(row.t_stat, 0)
            self.assertLess(row.cohens_d, 0)
            self.assertLess(row.p_value, 0.05)

        single = compare_to_oracle(records[:1] + [uniform_record('dummy-one')])
        self.assertTrue(all(row.t_stat is None for row in single.mode_comparisons))
        self.assertIn('at least two values', single.mode_comparisons[0].note)

    def test_open_ended_and_failed_runs_are_skipped(self):
        record = uniform_record('skip-1')
        record.status = FAILED
        table = compare_to_oracle([record])
        self.assertEqual(table.skipped, ['skip-1'])
        self.assertEqual(table.correlations, [])


class ReportTestCase(TestCase):
    """Test report emission"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.runs_dir = Path(self.tmp.name) / 'runs'
        self.out = Path(self.tmp.name) / 'report'

    def tearDown(self):
        self.tmp.cleanup()

    def test_divergence_rows_per_step(self):
        """Test one divergence row per consecutive pair of posteriors"""
        record = run_experiment(
            oracle_config(mode='optimal', trajectories=['study1-closed']), batch='div', runs_dir=self.runs_dir
        )[0]
        rows = divergence_rows(record)
        self.assertEqual(len(rows), len(record.steps) - 1)
        self.assertEqual((rows[0].from_timestep, rows[0].to_timestep), (0, 1))
        emit_report([record], self.out)
        lines = (self.out / 'divergence.csv').read_text().splitlines()
        self.assertEqual(len(lines), 1 + 4)
        self.assertFalse((self.out / 'correlation.csv').exists())

    def test_oracle_equivalence_summary(self):
        """Test the files and the equivalence statement for a scripted-oracle batch"""
        records = run_experiment(oracle_config(trajectories=['t1', 't2']), batch='sum', runs_dir=self.runs_dir)
        paths = emit_report(records, self.out, compare_to_oracle(records))
        self.assertEqual(
            sorted(p.name for p in paths),
            ['correlation.csv', 'distance.csv', 'divergence.csv', 'posteriors.csv', 'summary.txt'],
        )
        summary = (self.out / 'summary.txt').read_text()
        self.assertIn('Oracle equivalence holds', summary)
        self.assertIn('Runs: 2 (2 completed, 0 failed)', summary)
        posterior_lines = (self.out / 'posteriors.csv').read_text().splitlines()
        steps = sum(len(r.steps) for r in records)
        self.assertEqual(len(posterior_lines), 1 + 6 * steps)

    def test_mode_comparison_report(self):
        """Test the mode comparison table and summary lines"""
        records = run_experiment(oracle_config(trajectories=STUDY2[:8]), batch='modes', runs_dir=self.runs_dir)
        records += [uniform_record(f"dummy-{t}", t) for t in STUDY2[:8]]
        paths = emit_report(records, self.out, compare_to_oracle(records))
        self.assertIn('mode_comparison.csv', [p.name for p in paths])
        lines = (self.out / 'mode_comparison.csv').read_text().splitlines()
        self.assertEqual(lines[0], 'mode_a,mode_b,measure,t,dof,cohens_d,p_value,note')
        self.assertEqual(len(lines), 1 + 2)
        self.assertIn('laip-full vs zero-shot on jsd: t(14)=', (self.out / 'summary.txt').read_text())

    def test_target_hypothesis_mass(self):
        """Test the final mass on Alice's true preferences and on an explicit subset"""
        hypotheses, _ = load_hypothesis_fixture(load_scenario('alice').hypotheses_path)
        weights = np.full(20, 0.6 / 18)
        weights[8] = weights[9] = 0.2
        posterior = ProbabilityDistribution.from_weights(weights, hypotheses.labels)
        prior = uniform_prior(hypotheses)
        step = StepRecord(0, 'A food court.', (), 'Alice buys a curry.', prior, posterior)
        record = RunRecord('alice-1', 'alice', 'laip-full', 'open_ended', 'alice', 0, 0, {}, hypotheses, [step])

        emit_report([record], self.out)
        rows = (self.out / 'mass.csv').read_text().splitlines()
        self.assertEqual(rows[0], 'run_id,mode,trajectory,repetition,hypotheses,mass')
        self.assertAlmostEqual(float(rows[1].split(',')[-1]), 0.4, places=12)
        self.assertIn('laip-full alice H9+H10: 0.400 over 1 runs', (self.out / 'summary.txt').read_text())

        masses = subset_masses([record], ['H1', 'H2'])
        self.assertAlmostEqual(masses[0].mass, 1.2 / 18, places=12)
        self.assertEqual(subset_masses([uniform_record('rest-1')]), [])
        self.assertEqual(subset_masses([uniform_record('rest-1')], ['H99']), [])

    def test_empty_selection(self):
        with self.assertRaises(EmptySelection):
            emit_report([], self.out)
        with self.assertRaises(EmptySelection):
            load_records('nothing-here', self.runs_dir)


class CommandTestCase(TestCase):
    """Test the management commands and their exit codes"""

    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)
        self.runs_dir = str(self.root / 'runs')
        self.config_path = self.root / 'config.json'
        self.write_config()

    def tearDown(self):
        self.tmp.cleanup()

    def write_config(self, **kwargs):
        data = {
            'name': 'cli',
            'mode': 'laip-full',
            'trajectories': ['t1', 't6'],
            'backend': {'kind': 'scripted-oracle', 'cache_path': str(self.root / 'cache.jsonl')},
            'floor': 0.0,
        }
        data.update(kwargs)
        self.config_path.write_text(json.dumps(data))

    def call(self, *args, **kwargs):
        out = StringIO()
        call_command(*args, stdout=out, **kwargs)
        return out.getvalue()

    def test_run_compare_report_replay(self):
        """Test the whole command-line workflow on a scripted-oracle batch"""
        output = self.call('run', str(self.config_path), runs_dir=self.runs_dir)
        self.assertIn('Completed 2 runs in batch cli', output)
        output = self.call('compare', 'cli', runs_dir=self.runs_dir)
        self.assertIn('laip-full', output)
        self.assertIn('Max |dposterior| against the oracle', output)
        out_dir = self.root / 'report'
        self.call('report', 'cli', runs_dir=self.runs_dir, out=str(out_dir), mass='H1, H2')
        self.assertTrue((out_dir / 'summary.txt').exists())
        self.assertEqual(len((out_dir / 'mass.csv').read_text().splitlines()), 1 + 2)
        output = self.call('replay', 'cli', runs_dir=self.runs_dir)
        self.assertIn('All 2 replayed runs match batch cli', output)

    def test_invalid_config_exit_code(self):
        self.write_config(trajectories=['t99'])
        with self.assertRaises(CommandError) as ctx:
            self.call('run', str(self.config_path), runs_dir=self.runs_dir)
        self.assertEqual(ctx.exception.returncode, 2)
        with self.assertRaises(CommandError) as ctx:
            self.call('run', str(self.root / 'missing.json'), runs_dir=self.runs_dir)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_partial_failure_exit_code(self):
        """Test that failed runs give exit code 1"""
        with self.assertRaises(CommandError) as ctx:
            self.call('run', str(self.config_path), runs_dir=self.runs_dir, backend='replay',
                      cache=str(self.root / 'empty.jsonl'))
        self.assertEqual(ctx.exception.returncode, 1)
        self.assertEqual(ExperimentRun.objects.filter(batch='cli', status=FAILED).count(), 2)

    def test_empty_report_exit_code(self):
        with self.assertRaises(CommandError) as ctx:
            self.call('report', 'nothing', runs_dir=self.runs_dir)
        self.assertEqual(ctx.exception.returncode, 2)
        with self.assertRaises(CommandError) as ctx:
            self.call('compare', 'nothing', runs_dir=self.runs_dir)
        self.assertEqual(ctx.exception.returncode, 2)

    def test_list_trajectories(self):
        output = self.call('list_trajectories')
        self.assertIn('study1-closed', output)
        self.assertIn('alice: 4 scenes about Alice', output)
