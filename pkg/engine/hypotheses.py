"""
Hypothesis sources: the strict orderings, an LLM-generated list, or a fixture.

Every source returns a HypothesisSet labelled H1..Hn plus a prior over the
same labels.
"""
import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

from rest_framework import serializers

from environment.graph import RoomGraph, default_environment
from laip.distributions import ProbabilityDistribution
from oracle.policy import all_orderings
from providers.client import Transcript, complete_with_retries
from providers.parsers import parse_hypotheses

from .config import InferenceConfig
from .prompts import render_prompt
from .records import Episode, Hypothesis, HypothesisSet
from .serializers import HypothesisFixtureSerializer

logger = logging.getLogger(__name__)

HYPOTHESIS_MODES = ('orderings', 'generated', 'fixture')
PRIOR_MODES = ('uniform', 'elicited')


def uniform_prior(hypotheses: HypothesisSet) -> ProbabilityDistribution:
    return ProbabilityDistribution.uniform(hypotheses.labels)


def ordering_hypotheses(graph: Optional[RoomGraph] = None) -> HypothesisSet:
    """One hypothesis per strict ordering, worded as the canonical ranking sentence."""
    graph = graph or default_environment()
    return HypothesisSet(tuple(
        Hypothesis(i, ordering.describe(), ordering)
        for i, ordering in enumerate(all_orderings(graph), start=1)
    ))


def generate_prior(
    config: InferenceConfig,
    episode: Episode,
    n: int,
    prior_mode: str = 'uniform',
) -> Tuple[HypothesisSet, ProbabilityDistribution, List[Transcript]]:
    """
    Ask the model for ``n`` hypotheses with prior masses.

    Args:
        config: Provider and sampling settings; hypothesis temperature applies.
        episode: Supplies the system prompt and the scenario text.
        n: Number of hypotheses requested.
        prior_mode: ``elicited`` keeps the model's masses, ``uniform``
            replaces them with 1/n.

    Returns:
        (hypotheses, prior, transcripts)

    Raises:
        ParseFailure after the retry budget is spent.
    """
    if prior_mode not in PRIOR_MODES:
        raise serializers.ValidationError(f"Unknown prior mode {prior_mode!r}.")
    example = None
    if episode.graph is not None and episode.graph.restaurants:
        example = all_orderings(episode.graph)[0].describe().replace('The agent', episode.subject.capitalize(), 1)
    user = render_prompt('hypotheses', {
        'scenario': episode.scenario,
        'subject': episode.subject,
        'n': n,
        'example': example,
    }, config.prompt_version)
    request = config.request(
        episode.system_prompt,
        user,
        temperature=config.hypothesis_temperature,
        metadata={'kind': 'hypotheses', 'n': n},
    )
    (statements, elicited), transcripts = complete_with_retries(
        config.provider,
        request,
        lambda text: parse_hypotheses(text, n, floor=config.floor),
        retries=config.retries,
    )
    hypotheses = HypothesisSet.from_texts(statements, episode.graph)
    structured = sum(h.structured is not None for h in hypotheses)
    logger.info(f"Generated {n} hypotheses for {episode.id} ({structured} strict orderings)")
    prior = elicited if prior_mode == 'elicited' else uniform_prior(hypotheses)
    return hypotheses, prior, transcripts


def load_hypothesis_fixture(
    path: Union[str, Path],
    graph: Optional[RoomGraph] = None,
) -> Tuple[HypothesisSet, Optional[ProbabilityDistribution]]:
    """
    Load a hypothesis list from JSON.

    Returns:
        The hypotheses and their prior, or None when the fixture carries no
        probabilities.
    """
    with Path(path).open(encoding='utf-8') as fh:
        serializer = HypothesisFixtureSerializer(data=json.load(fh))
    serializer.is_valid(raise_exception=True)
    entries = serializer.validated_data['hypotheses']
    hypotheses = HypothesisSet.from_texts([entry['text'] for entry in entries], graph)
    prior = None
    if 'probability' in entries[0]:
        prior = ProbabilityDistribution.from_weights([entry['probability'] for entry in entries], hypotheses.labels)
    logger.debug(f"Loaded {len(hypotheses)} hypotheses from {path}")
    return hypotheses, prior
