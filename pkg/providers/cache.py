"""
Append-only JSONL response cache.

One record per distinct request digest:
{digest, request, response_text, timestamp, usage}. The first record for a
digest wins, so a recorded session replays exactly.
"""
import json
import logging
import threading
from pathlib import Path
from typing import Dict, Optional, Union

from django.utils import timezone

from .records import CompletionRequest, CompletionResult

logger = logging.getLogger(__name__)


class ResponseCache:
    def __init__(self, path: Union[str, Path]):
        self.path = Path(path)
        self._lock = threading.Lock()
        self._entries: Dict[str, dict] = {}
        self._load()

    def _load(self):
        if not self.path.exists():
            return
        with self.path.open(encoding='utf-8') as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    record = json.loads(line)
                    digest = record['digest']
                except (ValueError, KeyError, TypeError):
                    logger.warning(f"Skipping unreadable cache line {lineno} in {self.path}")
                    continue
                self._entries.setdefault(digest, record)
        logger.debug(f"Loaded {len(self._entries)} cached responses from {self.path}")

    def __len__(self):
        return len(self._entries)

    def __contains__(self, digest: str) -> bool:
        return digest in self._entries

    def get(self, digest: str) -> Optional[dict]:
        with self._lock:
            return self._entries.get(digest)

    def lookup(self, request: CompletionRequest) -> Optional[CompletionResult]:
        """Cached result for ``request``, flagged as a cache hit."""
        record = self.get(request.digest)
        if record is None:
            return None
        return CompletionResult(
            text=record['response_text'],
            usage=record.get('usage', {}),
            backend='cache',
            cache_hit=True,
            digest=record['digest'],
        )

    def append(self, request: CompletionRequest, result: CompletionResult) -> dict:
        """Write one record; an existing record for the digest is kept instead."""
        digest = request.digest
        with self._lock:
            if digest in self._entries:
                return self._entries[digest]
            record = {
                'digest': digest,
                'request': request.to_json(),
                'response_text': result.text,
                'timestamp': timezone.now().isoformat(),
                'usage': dict(result.usage),
            }
            self.path.parent.mkdir(parents=True, exist_ok=True)
            with self.path.open('a', encoding='utf-8') as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + '\n')
            self._entries[digest] = record
        logger.info(f"Cached response {digest[:12]} in {self.path.name}")
        return record
