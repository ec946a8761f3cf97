"""
Open-ended scenarios: loading, actor simulation and conversion to episodes.

A scenario file records the actor's action for each scene, so inference
can replay it without the actor backend.
"""
import json
import logging
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from django.conf import settings

from engine.config import InferenceConfig
from engine.prompts import render_prompt
from engine.records import Episode, EpisodeStep
from providers.client import Transcript, complete_with_retries
from providers.exceptions import ParseFailure

from .exceptions import UnknownScenario
from .serializers import ScenarioSerializer

logger = logging.getLogger(__name__)

DATA_DIR = Path(__file__).resolve().parent / 'data'
OPEN_ENDED_TASK = 'open_ended'


@dataclass(frozen=True)
class Scene:
    setting: str
    action: str = ''


@dataclass(frozen=True)
class Scenario:
    id: str
    subject: str
    situation: str
    scenes: Tuple[Scene, ...]
    facts: Tuple[str, ...] = ()
    observer: str = ''
    persona: str = ''
    hypotheses: str = ''
    source: Optional[Path] = None

    @property
    def hypotheses_path(self) -> Optional[Path]:
        """
        The hypothesis fixture: an absolute path, a file next to the scenario,
        or a fixture shipped in the data directory.
        """
        if not self.hypotheses:
            return None
        reference = Path(self.hypotheses)
        if reference.is_absolute():
            return reference
        if self.source is not None and (self.source.parent / reference).is_file():
            return self.source.parent / reference
        return DATA_DIR / reference

    @property
    def recorded(self) -> bool:
        return all(scene.action for scene in self.scenes)

    def to_json(self) -> Dict[str, Any]:
        return {
            'id': self.id,
            'subject': self.subject,
            'observer': self.observer,
            'situation': self.situation,
            'facts': list(self.facts),
            'persona': self.persona,
            'hypotheses': self.hypotheses,
            'scenes': [{'setting': s.setting, 'action': s.action} for s in self.scenes],
        }


def list_scenarios() -> List[str]:
    return sorted(path.stem for path in DATA_DIR.glob('*.json') if not path.stem.endswith('_hypotheses'))


def scenario_path(scenario: Union[str, Path]) -> Path:
    """A shipped scenario id maps into the data directory; anything with a suffix is a file path."""
    path = Path(scenario)
    return path if path.suffix else DATA_DIR / f"{scenario}.json"


def load_scenario(scenario: Union[str, Path]) -> Scenario:
    """
    Load a scenario by id (from the shipped data) or from a JSON path.

    Raises:
        UnknownScenario when no file matches.
        ValidationError when the file is malformed.
    """
    path = scenario_path(scenario)
    if not path.is_file():
        raise UnknownScenario(f"No scenario at {path}.")
    with path.open(encoding='utf-8') as fh:
        serializer = ScenarioSerializer(data=json.load(fh))
    serializer.is_valid(raise_exception=True)
    data = serializer.validated_data
    return Scenario(
        id=data['id'],
        subject=data['subject'],
        situation=data['situation'],
        scenes=tuple(Scene(s['setting'], s['action']) for s in data['scenes']),
        facts=tuple(data['facts']),
        observer=data['observer'],
        persona=data['persona'],
        hypotheses=data['hypotheses'],
        source=path.resolve(),
    )


def save_scenario(scenario: Scenario, path: Union[str, Path]) -> Path:
    """
    Write ``scenario`` to ``path``.

    The hypothesis reference is rewritten so it still resolves from the new
    location: a bare name for fixtures next to the file or in the data
    directory, an absolute path otherwise.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    data = scenario.to_json()
    fixture = scenario.hypotheses_path
    if fixture is not None:
        fixture = fixture.resolve()
        local = path.resolve().parent
        data['hypotheses'] = fixture.name if fixture.parent in (DATA_DIR, local) else str(fixture)
    with path.open('w', encoding='utf-8') as fh:
        json.dump(data, fh, indent=2, ensure_ascii=False)
        fh.write('\n')
    return path


def parse_actor_action(text: str) -> str:
    """The first non-empty line of the actor's reply."""
    if isinstance(text, str):
        for line in text.splitlines():
            line = line.strip().strip('"').strip()
            if line:
                return line
    raise ParseFailure("The actor gave no action.")


def simulate_actor(
    config: InferenceConfig,
    scenario: Scenario,
    path: Optional[Union[str, Path]] = None,
) -> Tuple[Scenario, List[Transcript]]:
    """
    Play each scene to the actor persona and record the action it describes.

    The returned scenario carries the new actions and is written to ``path``
    when one is given.
    """
    if not scenario.persona:
        raise UnknownScenario(f"Scenario {scenario.id} has no actor persona.")
    transcripts: List[Transcript] = []
    scenes = []
    for index, scene in enumerate(scenario.scenes):
        user = render_prompt('actor', {'setting': scene.setting, 'subject': scenario.subject}, config.prompt_version)
        request = config.request(
            scenario.persona,
            user,
            temperature=settings.LAIP['ACTOR_TEMPERATURE'],
            metadata={'kind': 'actor', 'scenario': scenario.id, 'scene': index},
        )
        action, scene_transcripts = complete_with_retries(
            config.provider, request, parse_actor_action, retries=config.retries
        )
        transcripts.extend(scene_transcripts)
        scenes.append(replace(scene, action=action))
        logger.info(f"{scenario.id} scene {index}: {action}")
    simulated = replace(scenario, scenes=tuple(scenes))
    if path is not None:
        save_scenario(simulated, path)
    return simulated, transcripts


def scenario_episode(scenario: Scenario, version: Optional[str] = None) -> Episode:
    """
    One step per scene; the observed action is the recorded one.

    Raises:
        UnknownScenario when a scene has no recorded action.
    """
    if not scenario.recorded:
        raise UnknownScenario(f"Scenario {scenario.id} has scenes without a recorded action; simulate the actor first.")
    system_prompt = render_prompt('situation', {
        'situation': scenario.situation,
        'facts': scenario.facts,
    }, version)
    steps = tuple(
        EpisodeStep(
            timestep=index,
            state_context=scene.setting,
            observed=scene.action,
            history=tuple(s.action for s in scenario.scenes[:index]),
            metadata={'scenario': scenario.id, 'scene': index},
        )
        for index, scene in enumerate(scenario.scenes)
    )
    return Episode(
        id=scenario.id,
        task=OPEN_ENDED_TASK,
        system_prompt=system_prompt,
        scenario=scenario.situation,
        subject=scenario.subject,
        steps=steps,
    )
