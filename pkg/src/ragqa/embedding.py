"""Text embedders and an on-disk embedding cache.

The offline embedder is a signed hashed bag of words:

* tokens are ``text.lower().split()`` (Unicode whitespace, punctuation kept);
* each token's UTF-8 bytes are hashed with 64-bit FNV-1a (offset basis
  ``0xcbf29ce484222325``, prime ``0x100000001b3``);
* the token adds ``+1`` (hash bit 63 clear) or ``-1`` (bit 63 set) to bucket
  ``hash % dim``;
* the accumulated vector is L2-normalised.

Vectors are plain 1-D ``float64`` numpy arrays; batches are 2-D arrays with
one row per input text.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import threading
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
import requests

from .errors import EmbedServiceError, InvalidInput, InvalidSpec

logger = logging.getLogger(__name__)

FNV64_OFFSET = 0xCBF29CE484222325
FNV64_PRIME = 0x100000001B3
_MASK64 = (1 << 64) - 1

DEFAULT_DIM = 384
API_KEY_ENV = "RAGQA_API_KEY"


def fnv1a_64(data: bytes) -> int:
    h = FNV64_OFFSET
    for byte in data:
        h = ((h ^ byte) * FNV64_PRIME) & _MASK64
    return h


@dataclass(frozen=True)
class EmbedderSpec:
    kind: str = "deterministic-hash"
    dim: int = DEFAULT_DIM
    endpoint: str = ""
    model_name: str = ""
    timeout: float = 30.0
    retries: int = 2
    max_in_flight: int = 4
    batch_size: int = 64

    def __post_init__(self):
        if self.kind not in ("deterministic-hash", "http-service"):
            raise InvalidSpec(f"unknown embedder kind {self.kind!r}")
        if self.dim < 8:
            raise InvalidSpec(f"embedding dim must be >= 8, got {self.dim}")
        if self.kind == "http-service" and not self.endpoint:
            raise InvalidSpec("http-service embedder needs an endpoint")


def _check_texts(texts: Sequence[str]) -> None:
    if isinstance(texts, str):
        raise InvalidInput("embed expects a list of strings, not a single string")
    if len(texts) == 0:
        raise InvalidInput("embed needs at least one text")
    for i, t in enumerate(texts):
        if not isinstance(t, str) or not t.strip():
            raise InvalidInput(f"text #{i} is empty")


class HashEmbedder:
    """Deterministic hashed bag-of-words embedder (no model, no network)."""

    def __init__(self, dim: int = DEFAULT_DIM):
        self.spec = EmbedderSpec(kind="deterministic-hash", dim=dim)
        self.dim = dim
        self.calls = 0

    def _bucket_sign(self, token: str) -> tuple[int, float]:
        h = fnv1a_64(token.encode("utf-8"))
        return h % self.dim, (-1.0 if h >> 63 else 1.0)

    def embed_one(self, text: str) -> np.ndarray:
        acc = np.zeros(self.dim)
        for token in text.lower().split():
            bucket, sign = self._bucket_sign(token)
            acc[bucket] += sign
        norm = math.sqrt(float(np.dot(acc, acc)))
        if norm == 0.0:
            # Only reachable when signed counts cancel exactly in every bucket.
            raise InvalidInput(f"hashed token counts cancel to zero for {text!r}")
        return acc / norm

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        _check_texts(texts)
        self.calls += len(texts)
        return np.vstack([self.embed_one(t) for t in texts])


class HttpEmbedder:
    """Client for an embeddings endpoint speaking the common
    ``{"model", "input"}`` -> ``{"data": [{"embedding"}]}`` shape."""

    def __init__(self, spec: EmbedderSpec, session: requests.Session | None = None):
        if spec.kind != "http-service":
            raise InvalidSpec("HttpEmbedder needs an http-service spec")
        self.spec = spec
        self.dim = spec.dim
        self.calls = 0
        self._session = session or requests.Session()
        self._lock = threading.Lock()

    def _headers(self) -> dict:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(API_KEY_ENV)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        return headers

    def _post(self, batch: list[str]) -> np.ndarray:
        payload = {"model": self.spec.model_name, "input": batch}
        last_error: EmbedServiceError | None = None
        for _ in range(self.spec.retries + 1):
            try:
                resp = self._session.post(self.spec.endpoint, json=payload,
                                          headers=self._headers(), timeout=self.spec.timeout)
            except requests.RequestException as exc:
                last_error = EmbedServiceError(f"embedding request failed: {exc}")
                continue
            if resp.status_code >= 500:
                last_error = EmbedServiceError(f"embedding service returned {resp.status_code}",
                                               resp.status_code, resp.text[:200])
                continue
            if resp.status_code != 200:
                raise EmbedServiceError(f"embedding service returned {resp.status_code}",
                                        resp.status_code, resp.text[:200])
            return self._parse(resp, len(batch))
        assert last_error is not None
        raise last_error

    def _parse(self, resp, expected: int) -> np.ndarray:
        try:
            data = resp.json()["data"]
            rows = [item["embedding"] for item in data]
        except (ValueError, KeyError, TypeError) as exc:
            raise EmbedServiceError("malformed embedding response", resp.status_code,
                                    resp.text[:200]) from exc
        if len(rows) != expected:
            raise EmbedServiceError(f"expected {expected} embeddings, got {len(rows)}",
                                    resp.status_code, resp.text[:200])
        arr = np.asarray(rows, dtype=float)
        if arr.ndim != 2 or arr.shape[1] != self.dim:
            raise EmbedServiceError(f"embedding dim mismatch: expected {self.dim}, got shape {arr.shape}",
                                    resp.status_code, resp.text[:200])
        if not np.all(np.isfinite(arr)):
            raise EmbedServiceError("embedding service returned non-finite values",
                                    resp.status_code, resp.text[:200])
        return arr

    def embed(self, texts: Sequence[str]) -> np.ndarray:
        _check_texts(texts)
        texts = list(texts)
        size = self.spec.batch_size
        batches = [texts[i:i + size] for i in range(0, len(texts), size)]
        with ThreadPoolExecutor(max_workers=max(1, self.spec.max_in_flight)) as pool:
            parts = list(pool.map(self._post, batches))
        with self._lock:
            self.calls += len(texts)
        return np.vstack(parts)


def make_embedder(spec: EmbedderSpec):
    if spec.kind == "deterministic-hash":
        return HashEmbedder(spec.dim)
    return HttpEmbedder(spec)


def embed(texts: Sequence[str], spec: EmbedderSpec) -> np.ndarray:
    return make_embedder(spec).embed(texts)


def cache_key(spec: EmbedderSpec, text: str) -> str:
    ident = json.dumps([spec.kind, spec.dim, spec.model_name, text], ensure_ascii=False)
    return hashlib.sha256(ident.encode("utf-8")).hexdigest()


def _record_checksum(key: str, vector: list[float]) -> str:
    body = json.dumps([key, vector], separators=(",", ":"))
    return format(zlib.crc32(body.encode("utf-8")), "08x")


class EmbeddingCache:
    """Append-only JSON-lines store of embeddings, one checksummed record per
    line (``{"key", "vector", "crc"}``).

    Records failing to parse or verify are skipped with a warning and the
    affected texts get recomputed. ``service_calls`` counts texts that had to
    be sent to the backing embedder.
    """

    FILENAME = "embeddings.jsonl"

    def __init__(self, directory):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)
        self.path = self.directory / self.FILENAME
        self.service_calls = 0
        self._lock = threading.Lock()
        self._index: dict[str, np.ndarray] = {}
        self._load()

    def _load(self) -> None:
        self._index.clear()
        if not self.path.exists():
            return
        with open(self.path, "rb") as fh:
            for lineno, raw in enumerate(fh, 1):
                try:
                    rec = json.loads(raw.decode("utf-8"))
                    key, vector = rec["key"], rec["vector"]
                    ok = rec["crc"] == _record_checksum(key, vector)
                except (UnicodeDecodeError, ValueError, KeyError, TypeError):
                    ok = False
                if not ok:
                    logger.warning("discarding corrupt embedding cache record at %s:%d", self.path, lineno)
                    continue
                self._index[key] = np.asarray(vector, dtype=float)

    def __len__(self):
        return len(self._index)

    def get(self, key: str):
        return self._index.get(key)

    def put_many(self, items: list[tuple[str, np.ndarray]]) -> None:
        with self._lock:
            with open(self.path, "a", encoding="utf-8") as fh:
                for key, vec in items:
                    values = [float(x) for x in vec]
                    rec = {"key": key, "vector": values, "crc": _record_checksum(key, values)}
                    fh.write(json.dumps(rec, separators=(",", ":")) + "\n")
                    self._index[key] = np.asarray(values)

    def clear(self) -> None:
        with self._lock:
            if self.path.exists():
                self.path.unlink()
            self._index.clear()

    def reload(self) -> None:
        with self._lock:
            self._load()


def cached_embed(texts: Sequence[str], spec: EmbedderSpec, cache: EmbeddingCache,
                 embedder=None) -> np.ndarray:
    """``embed`` with lookups in ``cache``; only misses reach the embedder."""
    _check_texts(texts)
    embedder = embedder or make_embedder(spec)
    keys = [cache_key(spec, t) for t in texts]
    missing: dict[str, int] = {}
    for i, key in enumerate(keys):
        if key not in missing and cache.get(key) is None:
            missing[key] = i
    if missing:
        fresh = embedder.embed([texts[i] for i in missing.values()])
        cache.put_many(list(zip(missing, fresh)))
        with cache._lock:
            cache.service_calls += len(missing)
    return np.vstack([cache.get(k) for k in keys])
