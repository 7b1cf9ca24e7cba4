"""Text embedding backends and the vector math shared by retrieval and scoring.

Two backends speak through one interface: a remote OpenAI-compatible
embeddings endpoint (the trained bi-encoder service, or any hosted
provider) and a deterministic offline fallback built on character-n-gram
feature hashing. Everything downstream only sees 768-dim L2-normalized
vectors.
"""
from __future__ import annotations

import hashlib
import os
import struct
import threading
import time
from dataclasses import dataclass
from enum import Enum

import httpx
import numpy as np

EMBEDDING_DIM = 768

HASHED_FALLBACK_MODEL_ID = "hashed-ngram-768-v1"

ENDPOINT_ENV = "FALCON_EMBED_ENDPOINT"
API_KEY_ENV = "FALCON_EMBED_API_KEY"


class EmbeddingError(Exception):
    """Raised when a backend cannot produce usable vectors."""


class EmbeddingBackend(str, Enum):
    REMOTE = "remote"
    HASHED_FALLBACK = "hashed_fallback"


@dataclass(frozen=True)
class EmbeddingVector:
    """Fixed-length real vector with provenance."""

    values: np.ndarray
    model_id: str
    normalized: bool = True

    def __post_init__(self) -> None:
        arr = np.asarray(self.values, dtype=np.float64)
        object.__setattr__(self, "values", arr)
        if arr.shape != (EMBEDDING_DIM,):
            raise EmbeddingError(f"expected dimension {EMBEDDING_DIM}, got {arr.shape}")
        if self.normalized:
            norm = float(np.linalg.norm(arr))
            if abs(norm - 1.0) >= 1e-6:
                raise EmbeddingError(f"vector flagged normalized but has norm {norm}")

    def to_list(self) -> list[float]:
        return [float(v) for v in self.values]


@dataclass
class EmbeddingProviderConfig:
    backend: EmbeddingBackend = EmbeddingBackend.HASHED_FALLBACK
    endpoint_url: str | None = None
    api_key: str | None = None
    model_name: str = "cti-rule-encoder"
    batch_size: int = 32
    timeout: float = 30.0
    retries: int = 3
    max_in_flight: int = 4
    seed: int = 0

    def __post_init__(self) -> None:
        if self.batch_size < 1:
            raise ValueError("batch_size must be positive")
        if self.backend is EmbeddingBackend.REMOTE and not self.endpoint_url:
            raise ValueError("remote backend requires endpoint_url")

    @classmethod
    def from_env(cls) -> "EmbeddingProviderConfig":
        """Remote config when FALCON_EMBED_ENDPOINT is set, fallback otherwise."""
        endpoint = os.environ.get(ENDPOINT_ENV)
        if endpoint:
            return cls(
                backend=EmbeddingBackend.REMOTE,
                endpoint_url=endpoint,
                api_key=os.environ.get(API_KEY_ENV),
            )
        return cls()


# --------------------------------------------------------------------------
# Offline fallback: signed feature hashing of character 3-5-grams.

_NGRAM_SIZES = (3, 4, 5)


def _hashed_vector(text: str, seed: int) -> np.ndarray:
    vec = np.zeros(EMBEDDING_DIM, dtype=np.float64)
    seed_bytes = struct.pack("<q", seed)
    data = text.encode("utf-8")
    for n in _NGRAM_SIZES:
        if len(data) < n:
            continue
        for i in range(len(data) - n + 1):
            digest = hashlib.blake2b(data[i : i + n], digest_size=9, key=seed_bytes).digest()
            h = int.from_bytes(digest[:8], "little")
            sign = 1.0 if digest[8] & 1 else -1.0
            vec[h % EMBEDDING_DIM] += sign
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        # Degenerate inputs (shorter than every n-gram) hash their raw bytes.
        digest = hashlib.blake2b(data or b"\x00", digest_size=9, key=seed_bytes).digest()
        h = int.from_bytes(digest[:8], "little")
        vec[h % EMBEDDING_DIM] = 1.0
        norm = 1.0
    return vec / norm


def _embed_hashed(texts: list[str], config: EmbeddingProviderConfig) -> list[EmbeddingVector]:
    return [
        EmbeddingVector(values=_hashed_vector(t, config.seed), model_id=HASHED_FALLBACK_MODEL_ID)
        for t in texts
    ]


# --------------------------------------------------------------------------
# Remote backend: OpenAI-compatible embeddings endpoint.

_inflight_lock = threading.Lock()
_inflight_semaphores: dict[int, threading.BoundedSemaphore] = {}


def _semaphore_for(limit: int) -> threading.BoundedSemaphore:
    with _inflight_lock:
        if limit not in _inflight_semaphores:
            _inflight_semaphores[limit] = threading.BoundedSemaphore(limit)
        return _inflight_semaphores[limit]


def _post_embeddings(batch: list[str], config: EmbeddingProviderConfig) -> list[np.ndarray]:
    headers = {"Content-Type": "application/json"}
    if config.api_key:
        headers["Authorization"] = f"Bearer {config.api_key}"
    payload = {"model": config.model_name, "input": batch}
    last_error: Exception | None = None
    for attempt in range(config.retries):
        try:
            sem = _semaphore_for(config.max_in_flight)
            with sem:
                resp = httpx.post(
                    config.endpoint_url, json=payload, headers=headers, timeout=config.timeout
                )
            resp.raise_for_status()
            body = resp.json()
            rows = sorted(body["data"], key=lambda d: d["index"])
            if len(rows) != len(batch):
                raise EmbeddingError(
                    f"endpoint returned {len(rows)} vectors for {len(batch)} inputs"
                )
            return [np.asarray(r["embedding"], dtype=np.float64) for r in rows]
        except (httpx.HTTPError, KeyError, ValueError) as exc:
            last_error = exc
            if attempt + 1 < config.retries:
                time.sleep(min(2.0**attempt * 0.2, 5.0))
    raise EmbeddingError(f"remote embedding failed after {config.retries} attempts: {last_error}")


def _embed_remote(texts: list[str], config: EmbeddingProviderConfig) -> list[EmbeddingVector]:
    out: list[EmbeddingVector] = []
    for start in range(0, len(texts), config.batch_size):
        batch = texts[start : start + config.batch_size]
        for raw in _post_embeddings(batch, config):
            if raw.shape != (EMBEDDING_DIM,):
                raise EmbeddingError(
                    f"remote model returned dimension {raw.shape}, expected {EMBEDDING_DIM};"
                    " wrong model behind the endpoint"
                )
            norm = float(np.linalg.norm(raw))
            if norm == 0.0:
                raise EmbeddingError("remote model returned a zero vector")
            out.append(
                EmbeddingVector(values=raw / norm, model_id=config.model_name)
            )
    return out


def embed_batch(texts: list[str], config: EmbeddingProviderConfig) -> list[EmbeddingVector]:
    """Embed texts in input order; every vector is L2-normalized, dim 768."""
    if not texts:
        raise ValueError("texts must be non-empty")
    if any(not t for t in texts):
        raise ValueError("every text must be non-empty")
    if config.backend is EmbeddingBackend.REMOTE:
        return _embed_remote(texts, config)
    return _embed_hashed(texts, config)


def cosine(a: EmbeddingVector, b: EmbeddingVector) -> float:
    """Exact cosine similarity; zero vectors are a hard error."""
    va, vb = a.values, b.values
    na = float(np.linalg.norm(va))
    nb = float(np.linalg.norm(vb))
    if na == 0.0 or nb == 0.0:
        raise EmbeddingError("cosine undefined for zero vector (broken embedder upstream)")
    return float(np.dot(va, vb) / (na * nb))


class Embedder:
    """Callable facade bound to one provider config, with a small cache.

    The cache keys on exact text; identical inputs across scoring,
    retrieval, and redundancy scans then cost one backend call.
    """

    def __init__(self, config: EmbeddingProviderConfig | None = None, cache_size: int = 4096):
        self.config = config or EmbeddingProviderConfig()
        self._cache: dict[str, EmbeddingVector] = {}
        self._cache_size = cache_size
        self._lock = threading.Lock()

    def embed(self, texts: list[str]) -> list[EmbeddingVector]:
        with self._lock:
            missing = [t for t in dict.fromkeys(texts) if t not in self._cache]
        if missing:
            fresh = embed_batch(missing, self.config)
            with self._lock:
                for text, vec in zip(missing, fresh):
                    if len(self._cache) >= self._cache_size:
                        self._cache.clear()
                    self._cache[text] = vec
        with self._lock:
            return [self._cache[t] for t in texts]

    def embed_one(self, text: str) -> EmbeddingVector:
        return self.embed([text])[0]
