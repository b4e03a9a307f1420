"""Text embedding backends and cosine similarity.

Two interchangeable backends sit behind the same operations: a remote
HTTP embedding service, and a deterministic local feature hasher so that
retrieval is fully testable offline.

The local backend is pinned exactly (reproducible across languages):
lowercase the UTF-8 bytes, enumerate contiguous byte n-grams (the whole
string when shorter than n), hash each n-gram with FNV-1a 64, bucket by
``hash % dim``, add +1 when bit 63 of the hash is 0 else -1, then
L2-normalize. Empty text maps to the all-zero vector.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Sequence, Union

import numpy as np

from . import transport
from .hashing import fnv1a64
from .ingest import MoleculeRecord


class EmbedError(ValueError):
    pass


class DimensionMismatch(EmbedError):
    pass


@dataclass(frozen=True)
class LocalHashConfig:
    """Deterministic n-gram feature-hashing embedder."""

    dim: int = 256
    ngram: int = 3

    def __post_init__(self):
        if self.dim < 8:
            raise EmbedError(f"dim must be >= 8, got {self.dim}")
        if self.ngram < 1:
            raise EmbedError(f"ngram must be >= 1, got {self.ngram}")

    @property
    def fingerprint(self) -> str:
        return f"localhash:dim={self.dim}:ngram={self.ngram}"


@dataclass(frozen=True)
class RemoteHttpConfig:
    """Remote embedding service speaking the common batch-embedding shape.

    Request body is ``{"model": ..., "input": [...]}``; the response must
    contain an ordered array of numeric arrays at ``response_path``. The
    API key is read from the environment variable named by ``key_env``.
    """

    endpoint: str
    model: str
    key_env: Optional[str] = None
    response_path: str = "data[*].embedding"
    batch_size: int = 128
    max_in_flight: int = 4
    timeout: float = 60.0

    @property
    def fingerprint(self) -> str:
        return f"remote:{self.model}"


EmbedderConfig = Union[LocalHashConfig, RemoteHttpConfig]


def _local_hash_vector(cfg: LocalHashConfig, text: str) -> np.ndarray:
    data = text.encode("utf-8").lower()
    vec = np.zeros(cfg.dim, dtype=np.float64)
    if not data:
        return vec
    n = cfg.ngram
    if len(data) < n:
        grams = [data]
    else:
        grams = [data[i : i + n] for i in range(len(data) - n + 1)]
    for gram in grams:
        h = fnv1a64(gram)
        sign = 1.0 if (h >> 63) == 0 else -1.0
        vec[h % cfg.dim] += sign
    norm = math.sqrt(float(np.dot(vec, vec)))
    if norm > 0.0:
        vec /= norm
    return vec


def _remote_batch(cfg: RemoteHttpConfig, texts: Sequence[str]) -> List[np.ndarray]:
    api_key = transport.resolve_api_key(cfg.key_env)
    body = {"model": cfg.model, "input": list(texts)}
    payload, _ = transport.post_json(
        cfg.endpoint, body, api_key=api_key, timeout=cfg.timeout
    )
    try:
        rows = transport.extract_path(payload, cfg.response_path)
    except (KeyError, IndexError, TypeError) as exc:
        raise EmbedError(
            f"embedding response missing {cfg.response_path!r}"
        ) from exc
    if not isinstance(rows, list) or len(rows) != len(texts):
        raise EmbedError(
            f"embedding response has {len(rows) if isinstance(rows, list) else '?'} "
            f"rows for {len(texts)} inputs"
        )
    return [np.asarray(row, dtype=np.float64) for row in rows]


def embed_texts(cfg: EmbedderConfig, texts: Sequence[str]) -> List[np.ndarray]:
    """Embed a batch of strings, results aligned with the input order.

    The remote backend splits the batch into chunks of ``batch_size`` and
    may run up to ``max_in_flight`` requests concurrently; results are
    reassembled in input order regardless of completion order.
    """
    if isinstance(cfg, LocalHashConfig):
        return [_local_hash_vector(cfg, t) for t in texts]
    chunks = [
        list(texts[i : i + cfg.batch_size])
        for i in range(0, len(texts), cfg.batch_size)
    ]
    if not chunks:
        return []
    if len(chunks) == 1:
        return _remote_batch(cfg, chunks[0])
    with ThreadPoolExecutor(max_workers=max(1, cfg.max_in_flight)) as pool:
        results = list(pool.map(lambda c: _remote_batch(cfg, c), chunks))
    out: List[np.ndarray] = []
    for part in results:
        out.extend(part)
    return out


def embed_text(cfg: EmbedderConfig, text: str) -> np.ndarray:
    """Embed one string. Deterministic for the local backend."""
    return embed_texts(cfg, [text])[0]


def compose_molecule_text(record: MoleculeRecord, include_description: bool) -> str:
    """Text fed to the embedder: SMILES, plus the description when asked
    for and present."""
    if include_description and record.description:
        return f"{record.smiles}\n{record.description}"
    return record.smiles


def embed_molecule(
    cfg: EmbedderConfig, record: MoleculeRecord, include_description: bool = False
) -> np.ndarray:
    return embed_text(cfg, compose_molecule_text(record, include_description))


def embedder_fingerprint(cfg: EmbedderConfig, include_description: bool) -> str:
    """Identity string for "how embeddings were produced"; stored in the
    knowledge database and checked before querying it."""
    suffix = ":desc=1" if include_description else ":desc=0"
    return cfg.fingerprint + suffix


def cosine_similarity(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity in [-1, 1]; 0 when either vector is all-zero."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatch(f"dim mismatch: {a.shape} vs {b.shape}")
    na = math.sqrt(float(np.dot(a, a)))
    nb = math.sqrt(float(np.dot(b, b)))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.dot(a, b)) / (na * nb)
