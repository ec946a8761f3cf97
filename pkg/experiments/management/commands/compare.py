from django.core.management.base import BaseCommand, CommandError

from experiments.analysis import compare_to_oracle, load_mapping
from experiments.exceptions import AlignmentError, EmptySelection
from experiments.store import load_records
from laip.exceptions import DegenerateInput


def fmt(value):
    return 'undefined' if value is None else f"{value:.3f}"


class Command(BaseCommand):
    help = "Compare a batch's final posteriors with the optimal observer"

    def add_arguments(self, parser):
        parser.add_argument('batch', help='Batch name')
        parser.add_argument('--runs-dir', help='Directory for run files')
        parser.add_argument('--mapping', help='JSON file mapping hypothesis text to ordering labels')
        parser.add_argument('--strict', action='store_true', help='Fail when a correlation is undefined')

    def handle(self, *args, **options):
        try:
            records = load_records(options['batch'], options['runs_dir'])
            table = compare_to_oracle(records, load_mapping(options['mapping']), strict=options['strict'])
        except (EmptySelection, AlignmentError, FileNotFoundError) as e:
            raise CommandError(str(e), returncode=2)
        except DegenerateInput as e:
            raise CommandError(f"Correlation undefined: {str(e)}", returncode=1)

        if not table.correlations:
            raise CommandError("No completed restaurant runs to compare", returncode=2)
        self.stdout.write(f"{'mode':<18}{'r':>10}{'rho':>10}{'JSD':>10}{'Hellinger':>11}")
        for row in table.correlations:
            self.stdout.write(
                f"{row.mode:<18}{fmt(row.pearson_r):>10}{fmt(row.spearman_rho):>10}"
                f"{fmt(row.jsd):>10}{fmt(row.hellinger):>11}"
            )
            if row.note:
                self.stdout.write(self.style.WARNING(f"  {row.mode}: {row.note}"))
        for row in table.mode_comparisons:
            if row.t_stat is None:
                self.stdout.write(self.style.WARNING(f"{row.mode_a} vs {row.mode_b} on {row.measure}: {row.note}"))
            else:
                self.stdout.write(
                    f"{row.mode_a} vs {row.mode_b} on {row.measure}: t({row.dof})={fmt(row.t_stat)} "
                    f"d={fmt(row.cohens_d)} p={fmt(row.p_value)}"
                )
        if table.skipped:
            self.stdout.write(self.style.WARNING(f"Skipped {len(table.skipped)} failed or open-ended runs"))
        self.stdout.write(self.style.SUCCESS(f"Max |dposterior| against the oracle: {table.max_abs_error:.3g}"))
