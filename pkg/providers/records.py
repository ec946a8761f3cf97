"""Request and response types exchanged with every backend."""
import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from typing import Any, Dict, Mapping, Optional, Sequence, Tuple

import numpy as np
from rest_framework import serializers

ROLES = ('system', 'user', 'assistant')


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise serializers.ValidationError(f"Unknown message role {self.role!r}.")

    def to_json(self) -> Dict[str, str]:
        return {'role': self.role, 'content': self.content}


@dataclass(frozen=True)
class CompletionRequest:
    """
    One chat-completion call.

    ``metadata`` travels with the request inside the process only: it is not
    part of the digest and never leaves the machine.
    """

    model_id: str
    messages: Tuple[ChatMessage, ...]
    temperature: float = 0.0
    seed: Optional[int] = None
    max_tokens: int = 1024
    metadata: Mapping[str, Any] = field(default_factory=dict, compare=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, 'messages', tuple(self.messages))
        if not self.messages:
            raise serializers.ValidationError("A completion request needs at least one message.")
        if any(m.role == 'system' for m in self.messages[1:]):
            raise serializers.ValidationError("Only the first message may be a system message.")
        if self.temperature < 0:
            raise serializers.ValidationError("Temperature must be non-negative.")
        if self.max_tokens <= 0:
            raise serializers.ValidationError("max_tokens must be positive.")

    @classmethod
    def from_prompts(cls, model_id: str, system: str, user: str, **kwargs) -> 'CompletionRequest':
        messages = [ChatMessage('user', user)]
        if system:
            messages.insert(0, ChatMessage('system', system))
        return cls(model_id=model_id, messages=tuple(messages), **kwargs)

    def with_messages(self, *extra: ChatMessage) -> 'CompletionRequest':
        return dataclasses.replace(self, messages=self.messages + tuple(extra))

    @property
    def digest(self) -> str:
        return request_digest(self)

    def to_json(self) -> Dict[str, Any]:
        return {
            'model_id': self.model_id,
            'messages': [m.to_json() for m in self.messages],
            'temperature': self.temperature,
            'seed': self.seed,
            'max_tokens': self.max_tokens,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> 'CompletionRequest':
        return cls(
            model_id=data['model_id'],
            messages=tuple(ChatMessage(m['role'], m['content']) for m in data['messages']),
            temperature=float(data.get('temperature', 0.0)),
            seed=data.get('seed'),
            max_tokens=int(data.get('max_tokens', 1024)),
        )


def request_digest(request: CompletionRequest) -> str:
    """
    Stable sha256 over model, messages, temperature and seed.

    ``max_tokens`` and ``metadata`` are not part of the digest.
    """
    payload = {
        'model_id': request.model_id,
        'messages': [m.to_json() for m in request.messages],
        'temperature': float(request.temperature),
        'seed': request.seed,
    }
    canonical = json.dumps(payload, sort_keys=True, separators=(',', ':'), ensure_ascii=False)
    return hashlib.sha256(canonical.encode('utf-8')).hexdigest()


def estimate_usage(request: CompletionRequest, text: str) -> Dict[str, int]:
    """Whitespace token counts for backends that do not report usage."""
    return {
        'prompt_tokens': sum(len(m.content.split()) for m in request.messages),
        'completion_tokens': len(text.split()),
    }


@dataclass(frozen=True)
class CompletionResult:
    text: str
    usage: Mapping[str, int] = field(default_factory=dict)
    backend: str = ''
    cache_hit: bool = False
    digest: str = ''

    def to_json(self) -> Dict[str, Any]:
        return {
            'text': self.text,
            'usage': dict(self.usage),
            'backend': self.backend,
            'cache_hit': self.cache_hit,
            'digest': self.digest,
        }


@dataclass(frozen=True)
class EmbeddingVector:
    values: Tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, 'values', tuple(float(v) for v in self.values))
        if not self.values:
            raise serializers.ValidationError("Embeddings must have at least one dimension.")
        if not np.all(np.isfinite(self.values)):
            raise serializers.ValidationError("Embedding entries must be finite.")

    @property
    def dim(self) -> int:
        return len(self.values)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)

    @classmethod
    def from_array(cls, values: Sequence[float]) -> 'EmbeddingVector':
        return cls(tuple(values))
