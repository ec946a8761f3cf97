"""Model-call settings for one run, shared by the engine, baselines and open-ended task."""
from dataclasses import dataclass
from typing import Any, Mapping, Optional

from django.conf import settings
from rest_framework import serializers

from providers.backends import ChatBackend
from providers.records import CompletionRequest

UPDATE_MODES = ('math', 'llm')

# field name -> LAIP settings key
DEFAULTS = (
    ('model_id', 'CHAT_MODEL'),
    ('likelihood_temperature', 'LIKELIHOOD_TEMPERATURE'),
    ('hypothesis_temperature', 'HYPOTHESIS_TEMPERATURE'),
    ('floor', 'PROBABILITY_FLOOR'),
    ('retries', 'PARSE_RETRIES'),
    ('max_workers', 'MAX_WORKERS'),
    ('prompt_version', 'PROMPT_VERSION'),
)


@dataclass(frozen=True)
class InferenceConfig:
    """
    Everything a step needs to talk to the provider.

    Unset fields fall back to ``settings.LAIP``. The seed is shared by every
    call of a run, so repetitions with different seeds never share cache
    entries.
    """

    provider: ChatBackend
    model_id: Optional[str] = None
    update_mode: str = 'math'
    seed: Optional[int] = None
    likelihood_temperature: Optional[float] = None
    hypothesis_temperature: Optional[float] = None
    floor: Optional[float] = None
    retries: Optional[int] = None
    max_workers: Optional[int] = None
    prompt_version: Optional[str] = None

    def __post_init__(self):
        if self.update_mode not in UPDATE_MODES:
            raise serializers.ValidationError(f"Unknown update mode {self.update_mode!r}.")
        for name, key in DEFAULTS:
            if getattr(self, name) is None:
                object.__setattr__(self, name, settings.LAIP[key])

    def request(
        self,
        system: str,
        user: str,
        temperature: Optional[float] = None,
        metadata: Optional[Mapping[str, Any]] = None,
    ) -> CompletionRequest:
        if temperature is None:
            temperature = self.likelihood_temperature
        return CompletionRequest.from_prompts(
            self.model_id,
            system,
            user,
            temperature=temperature,
            seed=self.seed,
            max_tokens=settings.LAIP['MAX_TOKENS'],
            metadata=dict(metadata or {}),
        )
