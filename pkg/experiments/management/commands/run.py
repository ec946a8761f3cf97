from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from experiments.config import ExperimentConfig, read_config
from experiments.runner import run_experiment
from experiments.store import FAILED


class Command(BaseCommand):
    help = 'Run an experiment config: every trajectory for every repetition'

    def add_arguments(self, parser):
        parser.add_argument('config', help='Config file path, or the name of a shipped config')
        parser.add_argument('--batch', help='Batch name (defaults to the config name)')
        parser.add_argument('--runs-dir', help='Directory for run files')
        parser.add_argument('--backend', choices=['http', 'scripted-oracle', 'replay'], help='Override the backend kind')
        parser.add_argument('--cache', help='Provider cache path')
        parser.add_argument('--repetitions', type=int, help='Override the repetition count')
        parser.add_argument('--trajectories', help='Comma-separated trajectory or scenario ids')

    def handle(self, *args, **options):
        try:
            data = read_config(options['config'])
        except FileNotFoundError as e:
            raise CommandError(f"Config not found: {e.filename}", returncode=2)
        except ValueError as e:
            raise CommandError(f"Config is not valid JSON: {str(e)}", returncode=2)

        if options['repetitions'] is not None:
            data['repetitions'] = options['repetitions']
            data['seeds'] = list(range(options['repetitions']))
        if options['trajectories']:
            data['trajectories'] = [t.strip() for t in options['trajectories'].split(',') if t.strip()]
        if options['backend'] or options['cache']:
            backend = dict(data.get('backend') or {})
            if options['backend']:
                backend['kind'] = options['backend']
            if options['cache']:
                backend['cache_path'] = options['cache']
            data['backend'] = backend
        try:
            config = ExperimentConfig.from_dict(data)
        except serializers.ValidationError as e:
            raise CommandError(f"Invalid config: {e.detail}", returncode=2)

        self.stdout.write(
            f"Running {config.mode} on {len(config.trajectories)} trajectories x {config.repetitions} repetitions..."
        )
        records = run_experiment(config, batch=options['batch'], runs_dir=options['runs_dir'])
        failed = [r for r in records if r.status == FAILED]
        for record in records:
            if record.status == FAILED:
                self.stdout.write(self.style.WARNING(f"  {record.run_id}: FAILED ({record.error})"))
            else:
                self.stdout.write(f"  {record.run_id}: {len(record.steps)} steps")
        if failed:
            raise CommandError(f"{len(failed)} of {len(records)} runs failed", returncode=1)
        self.stdout.write(self.style.SUCCESS(f"Completed {len(records)} runs in batch {records[0].batch}"))
