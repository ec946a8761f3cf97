from django.core.management.base import BaseCommand

from environment.corpus import default_corpus, list_trajectories
from open_ended.scenarios import list_scenarios, load_scenario


class Command(BaseCommand):
    help = 'List the restaurant trajectories and open-ended scenarios'

    def handle(self, *args, **options):
        corpus = default_corpus()
        self.stdout.write('Restaurant trajectories:')
        for trajectory_id in list_trajectories():
            trajectory = corpus[trajectory_id]
            actions = ', '.join(action.label for action in trajectory.actions)
            flag = ' (reconstructed)' if trajectory.reconstructed else ''
            self.stdout.write(f"  {trajectory_id}: {actions}{flag}")
        self.stdout.write('Open-ended scenarios:')
        for scenario_id in list_scenarios():
            scenario = load_scenario(scenario_id)
            self.stdout.write(f"  {scenario_id}: {len(scenario.scenes)} scenes about {scenario.subject}")
        self.stdout.write(self.style.SUCCESS(f"{len(corpus)} trajectories"))
