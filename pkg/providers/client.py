"""Retry loop and backend construction shared by every app that calls a model."""
import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple, TypeVar

from django.conf import settings

from .backends import CachedBackend, ChatBackend, HttpChatBackend, ReplayBackend, Responder, ScriptedBackend
from .cache import ResponseCache
from .embeddings import EmbeddingBackend, HttpEmbeddingBackend, MockEmbeddingBackend
from .exceptions import ParseFailure
from .records import ChatMessage, CompletionRequest

logger = logging.getLogger(__name__)

T = TypeVar('T')

FORMAT_REMINDER = (
    "Your previous answer could not be read ({error}). "
    "Reply again using exactly the requested format."
)


@dataclass(frozen=True)
class Transcript:
    """One provider call as persisted with a StepRecord."""

    digest: str
    request: Mapping[str, Any]
    response: str
    backend: str
    cache_hit: bool
    usage: Mapping[str, int] = field(default_factory=dict)
    error: str = ''

    def to_json(self) -> Dict[str, Any]:
        return {
            'digest': self.digest,
            'request': dict(self.request),
            'response': self.response,
            'backend': self.backend,
            'cache_hit': self.cache_hit,
            'usage': dict(self.usage),
            'error': self.error,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> 'Transcript':
        return cls(**data)


def complete_with_retries(
    provider: ChatBackend,
    request: CompletionRequest,
    parser: Callable[[str], T],
    retries: Optional[int] = None,
    reminder: str = FORMAT_REMINDER,
) -> Tuple[T, List[Transcript]]:
    """
    Call the provider and parse, retrying with a format reminder.

    Args:
        provider: Any ChatBackend.
        request: The initial request.
        parser: Turns completion text into a value or raises ParseFailure.
        retries: Extra attempts after the first; defaults to ``LAIP['PARSE_RETRIES']``.
        reminder: Follow-up user message; ``{error}`` is filled in.

    Returns:
        (parsed value, transcripts of every attempt)

    Raises:
        ParseFailure when every attempt fails to parse; provider errors propagate.
    """
    if retries is None:
        retries = settings.LAIP['PARSE_RETRIES']
    transcripts: List[Transcript] = []
    current = request
    last_error = None
    for attempt in range(retries + 1):
        result = provider.complete(current)
        try:
            value = parser(result.text)
        except ParseFailure as e:
            last_error = e
            transcripts.append(Transcript(
                result.digest or current.digest, current.to_json(), result.text,
                result.backend, result.cache_hit, result.usage, str(e),
            ))
            logger.warning(f"Parse failure on attempt {attempt + 1} for {current.digest[:12]}: {str(e)}")
            current = current.with_messages(
                ChatMessage('assistant', result.text),
                ChatMessage('user', reminder.format(error=str(e))),
            )
            continue
        transcripts.append(Transcript(
            result.digest or current.digest, current.to_json(), result.text,
            result.backend, result.cache_hit, result.usage,
        ))
        return value, transcripts
    raise ParseFailure(f"Unparseable after {retries + 1} attempts: {last_error}", transcripts=transcripts)


def build_chat_backend(
    kind: str,
    cache_path: Optional[str] = None,
    cache_mode: str = 'record',
    base_url: Optional[str] = None,
    responder: Optional[Responder] = None,
    responses: Optional[Mapping[str, str]] = None,
) -> ChatBackend:
    """
    Backend for a run configuration.

    ``http`` and ``scripted`` backends are wrapped in the response cache
    when ``cache_path`` is given; ``replay`` always reads from it.
    """
    cache_path = cache_path or settings.LAIP['CACHE_PATH']
    if kind == 'replay':
        return ReplayBackend(ResponseCache(cache_path))
    if kind == 'http':
        backend = HttpChatBackend(base_url=base_url)
    elif kind == 'scripted':
        backend = ScriptedBackend(responses=responses, responder=responder)
    else:
        raise ValueError(f"Unknown backend kind {kind!r}.")
    if cache_mode == 'off':
        return backend
    return CachedBackend(backend, ResponseCache(cache_path), mode=cache_mode)


def build_embedding_backend(kind: str, model: Optional[str] = None, base_url: Optional[str] = None, basis=()) -> EmbeddingBackend:
    if kind == 'http':
        return HttpEmbeddingBackend(model=model, base_url=base_url)
    if kind == 'mock':
        return MockEmbeddingBackend(basis=basis)
    raise ValueError(f"Unknown embedding backend kind {kind!r}.")
