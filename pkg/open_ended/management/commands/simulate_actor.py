from pathlib import Path

from django.conf import settings
from django.core.management.base import BaseCommand, CommandError

from engine.config import InferenceConfig
from laip.exceptions import LAIPError
from open_ended.exceptions import UnknownScenario
from open_ended.scenarios import load_scenario, simulate_actor
from providers.client import build_chat_backend


class Command(BaseCommand):
    help = "Play a scenario's scenes to a language-model actor and save the actions it chooses"

    def add_arguments(self, parser):
        parser.add_argument('scenario', help='Scenario id or path')
        parser.add_argument('--out', help='Where to write the scenario (default: <runs dir>/scenarios/<id>.json)')
        parser.add_argument('--backend', choices=['http', 'replay'], default='http', help='Chat backend kind')
        parser.add_argument('--cache', help='Provider cache path')
        parser.add_argument('--seed', type=int, help='Sampling seed')

    def handle(self, *args, **options):
        try:
            scenario = load_scenario(options['scenario'])
        except UnknownScenario as e:
            raise CommandError(str(e), returncode=2)

        out = Path(options['out'] or Path(settings.LAIP['RUNS_DIR']) / 'scenarios' / f"{scenario.id}.json")
        provider = build_chat_backend(options['backend'], cache_path=options['cache'])
        config = InferenceConfig(provider, seed=options['seed'])
        try:
            simulated, transcripts = simulate_actor(config, scenario, out)
        except LAIPError as e:
            raise CommandError(f"Actor simulation failed: {str(e)}", returncode=1)

        for index, scene in enumerate(simulated.scenes):
            self.stdout.write(f"  scene {index}: {scene.action}")
        self.stdout.write(self.style.SUCCESS(f"Saved {len(simulated.scenes)} actions to {out} ({len(transcripts)} calls)"))
