import json

from django.core.management.base import BaseCommand, CommandError
from rest_framework import serializers

from experiments.config import config_from_snapshot
from experiments.exceptions import EmptySelection
from experiments.runner import run_experiment
from experiments.store import FAILED, load_records


def posterior_key(record):
    return json.dumps([step.posterior.to_json() for step in record.steps], sort_keys=True)


class Command(BaseCommand):
    help = 'Re-run a recorded batch from the provider cache and check the posteriors match'

    def add_arguments(self, parser):
        parser.add_argument('batch', help='Recorded batch name')
        parser.add_argument('--cache', help='Provider cache path (defaults to the one the batch used)')
        parser.add_argument('--runs-dir', help='Directory for run files')
        parser.add_argument('--as-batch', help='Name for the replayed batch (default: <batch>-replay)')

    def handle(self, *args, **options):
        batch = options['batch']
        try:
            originals = load_records(batch, options['runs_dir'])
        except EmptySelection as e:
            raise CommandError(str(e), returncode=2)

        snapshot = originals[0].config
        backend = dict(snapshot.get('backend') or {})
        backend.update({'kind': 'replay', 'cache_path': options['cache'] or backend.get('cache_path', '')})
        try:
            config = config_from_snapshot(snapshot, backend=backend)
        except serializers.ValidationError as e:
            raise CommandError(f"Stored config is no longer valid: {e.detail}", returncode=2)

        replayed = run_experiment(config, batch=options['as_batch'] or f"{batch}-replay", runs_dir=options['runs_dir'])
        expected = {(r.trajectory, r.repetition): posterior_key(r) for r in originals}
        mismatched = [
            r.run_id for r in replayed
            if r.status == FAILED or posterior_key(r) != expected.get((r.trajectory, r.repetition))
        ]
        if mismatched:
            for run_id in mismatched:
                self.stdout.write(self.style.ERROR(f"  {run_id} does not match the recording"))
            raise CommandError(f"{len(mismatched)} of {len(replayed)} replayed runs differ", returncode=1)
        self.stdout.write(self.style.SUCCESS(f"All {len(replayed)} replayed runs match batch {batch}"))
