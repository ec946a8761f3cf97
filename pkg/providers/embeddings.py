"""Embedding backends: live HTTP and a seeded mock."""
import hashlib
import logging
from abc import ABC, abstractmethod
from typing import Optional, Sequence

import numpy as np
import requests
from django.conf import settings

from .exceptions import BackendRefusal, TransportError
from .records import EmbeddingVector

logger = logging.getLogger(__name__)


class EmbeddingBackend(ABC):
    name = 'abstract'

    @abstractmethod
    def embed(self, text: str) -> EmbeddingVector:
        """Embed one string. Raises TransportError when the backend is unreachable."""


class HttpEmbeddingBackend(EmbeddingBackend):
    name = 'http'

    def __init__(
        self,
        model: Optional[str] = None,
        base_url: Optional[str] = None,
        api_key: Optional[str] = None,
        timeout: Optional[int] = None,
        session: Optional[requests.Session] = None,
    ):
        self.model = model or settings.LAIP['EMBEDDING_MODEL']
        self.base_url = (base_url or settings.LAIP['API_BASE_URL']).rstrip('/')
        self.api_key = settings.LAIP['API_KEY'] if api_key is None else api_key
        self.timeout = timeout or settings.LAIP['REQUEST_TIMEOUT']
        self.session = session or requests.Session()

    def embed(self, text: str) -> EmbeddingVector:
        headers = {'Content-Type': 'application/json'}
        if self.api_key:
            headers['Authorization'] = f"Bearer {self.api_key}"
        try:
            response = self.session.post(
                f"{self.base_url}/embeddings",
                json={'model': self.model, 'input': text},
                headers=headers,
                timeout=self.timeout,
            )
        except requests.exceptions.RequestException as e:
            logger.error(f"Request error embedding text: {str(e)}")
            raise TransportError(f"Request error: {str(e)}") from e

        if response.status_code >= 500:
            logger.error(f"Server error {response.status_code} from {self.base_url}")
            raise TransportError(f"Server error {response.status_code}")
        if response.status_code >= 300:
            raise BackendRefusal(f"Embedding request refused with status {response.status_code}: {response.text[:200]}")

        try:
            values = response.json()['data'][0]['embedding']
        except (ValueError, KeyError, IndexError, TypeError) as e:
            raise BackendRefusal(f"Malformed embedding payload: {str(e)}") from e
        return EmbeddingVector.from_array(values)


class MockEmbeddingBackend(EmbeddingBackend):
    """
    Deterministic unit vectors seeded from the text digest.

    Strings listed in ``basis`` map to exact standard basis vectors, so
    distinct basis strings are orthogonal.
    """

    name = 'mock'

    def __init__(self, dim: Optional[int] = None, basis: Sequence[str] = ()):
        self.dim = dim or settings.LAIP['EMBEDDING_DIM']
        if len(basis) > self.dim:
            raise ValueError(f"{len(basis)} basis strings do not fit in {self.dim} dimensions.")
        self.basis = {text: index for index, text in enumerate(basis)}

    def embed(self, text: str) -> EmbeddingVector:
        if text in self.basis:
            vector = np.zeros(self.dim)
            vector[self.basis[text]] = 1.0
            return EmbeddingVector.from_array(vector)
        seed = int(hashlib.sha256(text.encode('utf-8')).hexdigest()[:16], 16)
        vector = np.random.default_rng(seed).standard_normal(self.dim)
        return EmbeddingVector.from_array(vector / np.linalg.norm(vector))
