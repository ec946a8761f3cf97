"""Chat-completion backends: live HTTP, scripted, replay, and the caching wrapper."""
import logging
import threading
from abc import ABC, abstractmethod
from typing import Callable, List, Mapping, Optional

import requests
from django.conf import settings

from .cache import ResponseCache
from .exceptions import BackendRefusal, CacheMiss, TransportError
from .records import CompletionRequest, CompletionResult, estimate_usage

logger = logging.getLogger(__name__)

CACHE_MODES = ('record', 'replay', 'off')

Responder = Callable[[CompletionRequest], str]


class ChatBackend(ABC):
    """Anything that turns a CompletionRequest into a CompletionResult."""

    name = 'abstract'

    @abstractmethod
    def complete(self, request: CompletionRequest) -> CompletionResult:
        """
        Run one completion.

        Raises:
            TransportError, BackendRefusal or CacheMiss.
        """


class HttpChatBackend(ChatBackend):
    """Speaks the chat-completions wire format over HTTPS."""

    name = 'http'

    def __init__(
        self,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        timeout: Optional[int] = None,
        session: Optional[requests.Session] = None,
    ):
        self.base_url = (base_url or settings.LAIP['API_BASE_URL']).rstrip('/')
        self.api_key = settings.LAIP['API_KEY'] if api_key is None else api_key
        self.timeout = timeout or settings.LAIP['REQUEST_TIMEOUT']
        self.session = session or requests.Session()

    def complete(self, request: CompletionRequest) -> CompletionResult:
        payload = {
            'model': request.model_id,
            'messages': [m.to_json() for m in request.messages],
            'temperature': request.temperature,
            'max_tokens': request.max_tokens,
        }
        if request.seed is not None:
            payload['seed'] = request.seed
        headers = {
            'Content-Type': 'application/json',
            'Accept': 'application/json',
        }
        if self.api_key:
            headers['Authorization'] = f"Bearer {self.api_key}"

        try:
            response = self.session.post(
                f"{self.base_url}/chat/completions",
                json=payload,
                headers=headers,
                timeout=self.timeout,
            )
        except requests.exceptions.RequestException as e:
            logger.error(f"Request error calling {self.base_url}: {str(e)}")
            raise TransportError(f"Request error: {str(e)}") from e

        if response.status_code >= 500:
            logger.error(f"Server error {response.status_code} from {self.base_url}")
            raise TransportError(f"Server error {response.status_code}")
        if response.status_code >= 300:
            raise BackendRefusal(f"Backend refused the request with status {response.status_code}: {response.text[:200]}")

        try:
            body = response.json()
            text = body['choices'][0]['message']['content']
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendRefusal(f"Malformed completion payload: {str(e)}") from e
        if not text:
            raise BackendRefusal("Backend returned an empty completion.")

        usage = body.get('usage') or {}
        return CompletionResult(
            text=text,
            usage={
                'prompt_tokens': int(usage.get('prompt_tokens', 0)),
                'completion_tokens': int(usage.get('completion_tokens', 0)),
            },
            backend=self.name,
            digest=request.digest,
        )


class ScriptedBackend(ChatBackend):
    """
    Deterministic backend for tests and oracle runs.

    Answers from a digest-keyed table first, then from ``responder``.
    """

    name = 'scripted'

    def __init__(self, responses: Optional[Mapping[str, str]] = None, responder: Optional[Responder] = None):
        self.responses = dict(responses or {})
        self.responder = responder
        self.requests: List[CompletionRequest] = []
        self._lock = threading.Lock()

    def complete(self, request: CompletionRequest) -> CompletionResult:
        with self._lock:
            self.requests.append(request)
        digest = request.digest
        if digest in self.responses:
            text = self.responses[digest]
        elif self.responder is not None:
            text = self.responder(request)
        else:
            raise BackendRefusal(f"No scripted response for request {digest[:12]}.")
        if not text:
            raise BackendRefusal(f"Scripted response for {digest[:12]} is empty.")
        return CompletionResult(text=text, usage=estimate_usage(request, text), backend=self.name, digest=digest)


class ReplayBackend(ChatBackend):
    """Serves a recorded session; anything unrecorded is a CacheMiss."""

    name = 'replay'

    def __init__(self, cache: ResponseCache):
        self.cache = cache

    def complete(self, request: CompletionRequest) -> CompletionResult:
        result = self.cache.lookup(request)
        if result is None:
            raise CacheMiss(f"No recorded response for request {request.digest[:12]} in {self.cache.path}.")
        return result


class CachedBackend(ChatBackend):
    """
    Wraps a backend with the response cache.

    Modes: ``record`` calls the backend on a miss and appends the result,
    ``replay`` never calls the backend, ``off`` bypasses the cache.
    """

    def __init__(self, backend: ChatBackend, cache: ResponseCache, mode: str = 'record'):
        if mode not in CACHE_MODES:
            raise ValueError(f"Unknown cache mode {mode!r}; expected one of {CACHE_MODES}.")
        self.backend = backend
        self.cache = cache
        self.mode = mode

    @property
    def name(self) -> str:
        return f"{self.backend.name}+cache"

    def complete(self, request: CompletionRequest) -> CompletionResult:
        if self.mode == 'off':
            return self.backend.complete(request)
        cached = self.cache.lookup(request)
        if cached is not None:
            return cached
        if self.mode == 'replay':
            raise CacheMiss(f"No recorded response for request {request.digest[:12]} in {self.cache.path}.")
        result = self.backend.complete(request)
        self.cache.append(request, result)
        return result
