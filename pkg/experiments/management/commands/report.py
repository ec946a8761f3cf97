from pathlib import Path

from django.core.management.base import BaseCommand, CommandError

from experiments.analysis import compare_to_oracle, load_mapping
from experiments.exceptions import AlignmentError, EmptySelection
from experiments.report import emit_report
from experiments.store import load_records, runs_root


class Command(BaseCommand):
    help = 'Write CSV tables and a summary for one or more batches'

    def add_arguments(self, parser):
        parser.add_argument('batches', nargs='+', help='Batch names')
        parser.add_argument('--runs-dir', help='Directory for run files')
        parser.add_argument('--out', help='Output directory (default: <runs dir>/reports/<first batch>)')
        parser.add_argument('--mode', action='append', dest='modes', help='Only include this mode (repeatable)')
        parser.add_argument('--mapping', help='JSON file mapping hypothesis text to ordering labels')
        parser.add_argument('--no-compare', action='store_true', help='Skip the oracle comparison tables')
        parser.add_argument(
            '--mass', help='Comma-separated hypothesis labels whose final mass is reported, e.g. H9,H10'
        )

    def handle(self, *args, **options):
        records = []
        for batch in options['batches']:
            try:
                records.extend(load_records(batch, options['runs_dir'], modes=options['modes']))
            except EmptySelection as e:
                self.stdout.write(self.style.WARNING(str(e)))
        if not records:
            raise CommandError("No runs match the selection", returncode=2)

        comparison = None
        if not options['no_compare'] and any(r.task == 'restaurants' for r in records):
            try:
                comparison = compare_to_oracle(records, load_mapping(options['mapping']))
            except AlignmentError as e:
                self.stdout.write(self.style.WARNING(f"Skipping oracle comparison: {str(e)}"))

        out = Path(options['out'] or runs_root(options['runs_dir']) / 'reports' / options['batches'][0])
        mass_labels = [label.strip() for label in (options['mass'] or '').split(',') if label.strip()] or None
        for path in emit_report(records, out, comparison, mass_labels):
            self.stdout.write(f"  wrote {path}")
        self.stdout.write(self.style.SUCCESS(f"Report for {len(records)} runs written to {out}"))
