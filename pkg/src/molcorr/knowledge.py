"""Contextual knowledge database: build, persist, query.

The database pools the labeled training molecules with the validation
molecules (which additionally carry the base model's prediction), each
with a cached embedding vector. Queries rank the whole pool by cosine
similarity and select entries with one of three strategies:

  * top-k: the k most similar entries;
  * jump: k evenly spaced ranks, ``i*(n-1)//(k-1)``, always covering the
    most- and least-similar retained entries;
  * random: k distinct entries via a partial Fisher-Yates shuffle driven
    by splitmix64, so "random" runs reproduce across implementations.

Ties in similarity break by ascending id so the ranking is a total order.
A query coming from the validation split excludes its own entry from the
pool (the leakage guard).

On disk a database is two files: ``metadata.jsonl`` (a header line, then
one JSON object per entry) and ``embeddings.lcdb`` (magic ``LCDB``, u32
little-endian dim and count, then count*dim float32 little-endian values
in metadata order).
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np

from .embed import EmbedderConfig, compose_molecule_text, embed_texts, embedder_fingerprint
from .hashing import SplitMix64
from .ingest import DatasetBundle, PredictionSet, Split, TaskKind, TaskSpec

MAGIC = b"LCDB"
METADATA_FILE = "metadata.jsonl"
SIDECAR_FILE = "embeddings.lcdb"


class KnowledgeError(ValueError):
    pass


class EmptyPool(KnowledgeError):
    pass


class RetrievalDimMismatch(KnowledgeError):
    pass


class PersistenceError(KnowledgeError):
    pass


class MagicMismatch(PersistenceError):
    pass


class DimMismatch(PersistenceError):
    pass


class CountMismatch(PersistenceError):
    pass


class TruncatedEmbeddings(PersistenceError):
    pass


@dataclass(frozen=True)
class TopK:
    pass


@dataclass(frozen=True)
class Jump:
    pass


@dataclass(frozen=True)
class Random:
    seed: int = 0


RetrievalStrategy = Union[TopK, Jump, Random]


STRATEGY_NAMES = {"topk": TopK, "jump": Jump, "random": Random}


def strategy_name(strategy: RetrievalStrategy) -> str:
    if isinstance(strategy, TopK):
        return "topk"
    if isinstance(strategy, Jump):
        return "jump"
    return "random"


class KnowledgeEntry:
    """One database entry: molecule text, label, optional base-model
    prediction (validation entries only) and the cached embedding."""

    __slots__ = ("id", "smiles", "description", "label", "primary_prediction", "source", "embedding")

    def __init__(
        self,
        id: str,
        smiles: str,
        description: Optional[str],
        label: float,
        primary_prediction: Optional[float],
        source: Split,
        embedding: np.ndarray,
    ):
        if source is Split.TRAIN and primary_prediction is not None:
            raise KnowledgeError(f"train entry {id!r} must not carry a prediction")
        if source is Split.VALID and primary_prediction is None:
            raise KnowledgeError(f"valid entry {id!r} must carry a prediction")
        self.id = id
        self.smiles = smiles
        self.description = description
        self.label = label
        self.primary_prediction = primary_prediction
        self.source = source
        self.embedding = np.asarray(embedding, dtype=np.float32)

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeEntry):
            return NotImplemented
        return (
            self.id == other.id
            and self.smiles == other.smiles
            and self.description == other.description
            and self.label == other.label
            and self.primary_prediction == other.primary_prediction
            and self.source == other.source
            and np.array_equal(self.embedding, other.embedding)
        )

    def __repr__(self) -> str:
        return f"KnowledgeEntry(id={self.id!r}, source={self.source.value})"


class KnowledgeDatabase:
    """Immutable entry collection plus the embedder fingerprint that
    produced it."""

    def __init__(self, task: TaskSpec, fingerprint: str, entries: Tuple[KnowledgeEntry, ...]):
        entries = tuple(entries)
        dims = {e.embedding.shape[0] for e in entries}
        if len(dims) > 1:
            raise KnowledgeError(f"mixed embedding dims in database: {sorted(dims)}")
        ids = [e.id for e in entries]
        if len(set(ids)) != len(ids):
            raise KnowledgeError("duplicate ids in database")
        self.task = task
        self.fingerprint = fingerprint
        self.entries = entries

    @property
    def dim(self) -> int:
        if not self.entries:
            return 0
        return self.entries[0].embedding.shape[0]

    def __len__(self) -> int:
        return len(self.entries)

    def __eq__(self, other) -> bool:
        if not isinstance(other, KnowledgeDatabase):
            return NotImplemented
        return (
            self.task == other.task
            and self.fingerprint == other.fingerprint
            and self.entries == other.entries
        )

    @cached_property
    def _matrix(self) -> np.ndarray:
        if not self.entries:
            return np.zeros((0, 0), dtype=np.float64)
        return np.stack([e.embedding for e in self.entries]).astype(np.float64)

    @cached_property
    def _norms(self) -> np.ndarray:
        return np.linalg.norm(self._matrix, axis=1)


@dataclass(frozen=True)
class ScoredEntry:
    entry: KnowledgeEntry
    similarity: float


@dataclass(frozen=True)
class RetrievedContext:
    """Selected entries in rank order (most similar first)."""

    items: Tuple[ScoredEntry, ...]

    @property
    def train_items(self) -> Tuple[ScoredEntry, ...]:
        return tuple(s for s in self.items if s.entry.source is Split.TRAIN)

    @property
    def valid_items(self) -> Tuple[ScoredEntry, ...]:
        return tuple(s for s in self.items if s.entry.source is Split.VALID)

    @property
    def ids(self) -> Tuple[str, ...]:
        return tuple(s.entry.id for s in self.items)

    def __len__(self) -> int:
        return len(self.items)


def build_database(
    bundle: DatasetBundle,
    val_predictions: PredictionSet,
    embedder: EmbedderConfig,
    include_description: bool = False,
) -> KnowledgeDatabase:
    """Embed every train and valid molecule into a KnowledgeDatabase.

    Entry order follows dataset order. Valid entries must all be covered
    by ``val_predictions`` (the prediction loader guarantees this when the
    set was loaded against the same bundle).
    """
    pool = [r for r in bundle.records if r.split in (Split.TRAIN, Split.VALID)]
    for rec in pool:
        if rec.split is Split.VALID and rec.id not in val_predictions.entries:
            raise KnowledgeError(f"no validation prediction for id {rec.id!r}")
        if rec.label is None:
            raise KnowledgeError(f"knowledge entry {rec.id!r} has no label")
    texts = [compose_molecule_text(r, include_description) for r in pool]
    vectors = embed_texts(embedder, texts)
    entries = tuple(
        KnowledgeEntry(
            id=rec.id,
            smiles=rec.smiles,
            description=rec.description,
            label=rec.label,
            primary_prediction=(
                val_predictions.entries[rec.id] if rec.split is Split.VALID else None
            ),
            source=rec.split,
            embedding=vec,
        )
        for rec, vec in zip(pool, vectors)
    )
    return KnowledgeDatabase(
        task=bundle.task,
        fingerprint=embedder_fingerprint(embedder, include_description),
        entries=entries,
    )


def _ranked_pool(
    db: KnowledgeDatabase, query_vec: np.ndarray, exclude_id: Optional[str]
) -> List[ScoredEntry]:
    """All candidate entries ranked by similarity desc, id asc on ties."""
    q = np.asarray(query_vec, dtype=np.float64)
    if q.shape != (db.dim,):
        raise RetrievalDimMismatch(
            f"query dim {q.shape} does not match database dim {db.dim}"
        )
    qn = float(np.linalg.norm(q))
    if qn == 0.0:
        sims = np.zeros(len(db.entries))
    else:
        with np.errstate(invalid="ignore", divide="ignore"):
            sims = (db._matrix @ q) / (db._norms * qn)
        sims = np.where(db._norms == 0.0, 0.0, sims)
    candidates = [
        ScoredEntry(entry=e, similarity=float(sims[i]))
        for i, e in enumerate(db.entries)
        if e.id != exclude_id
    ]
    candidates.sort(key=lambda s: (-s.similarity, s.entry.id))
    return candidates


def retrieve(
    db: KnowledgeDatabase,
    query_vec: np.ndarray,
    k: int,
    strategy: RetrievalStrategy = TopK(),
    exclude_id: Optional[str] = None,
) -> RetrievedContext:
    """Select up to k entries for a query.

    ``exclude_id`` drops the query's own entry from the candidate pool.
    When k exceeds the pool size the whole pool is returned.
    """
    if k < 1:
        raise KnowledgeError(f"k must be >= 1, got {k}")
    pool = _ranked_pool(db, query_vec, exclude_id)
    n = len(pool)
    if n == 0:
        raise EmptyPool("retrieval pool is empty")
    if k >= n:
        return RetrievedContext(items=tuple(pool))
    if isinstance(strategy, TopK):
        ranks = range(k)
    elif isinstance(strategy, Jump):
        ranks = [0] if k == 1 else [i * (n - 1) // (k - 1) for i in range(k)]
    else:
        rng = SplitMix64(strategy.seed)
        indices = list(range(n))
        for i in range(k):
            j = i + rng.next_uint64() % (n - i)
            indices[i], indices[j] = indices[j], indices[i]
        ranks = sorted(indices[:k])
    return RetrievedContext(items=tuple(pool[r] for r in ranks))


def save_database(db: KnowledgeDatabase, directory: Union[str, Path]) -> None:
    """Write metadata and the binary embedding sidecar."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    header = {
        "task": db.task.kind.value,
        "fingerprint": db.fingerprint,
        "dim": db.dim,
        "entries": len(db.entries),
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    for e in db.entries:
        lines.append(
            json.dumps(
                {
                    "id": e.id,
                    "smiles": e.smiles,
                    "description": e.description,
                    "label": e.label,
                    "primary_prediction": e.primary_prediction,
                    "source": e.source.value,
                },
                separators=(",", ":"),
            )
        )
    (directory / METADATA_FILE).write_text("\n".join(lines) + "\n", encoding="utf-8")
    with (directory / SIDECAR_FILE).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", db.dim, len(db.entries)))
        if db.entries:
            matrix = np.stack([e.embedding for e in db.entries]).astype("<f4")
            fh.write(matrix.tobytes(order="C"))


def load_database(directory: Union[str, Path]) -> KnowledgeDatabase:
    """Load a saved database; save -> load round-trips bit for bit."""
    directory = Path(directory)
    meta_path = directory / METADATA_FILE
    sidecar_path = directory / SIDECAR_FILE
    lines = meta_path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise PersistenceError(f"{meta_path}: empty metadata file")
    header = json.loads(lines[0])
    task = TaskSpec(TaskKind(header["task"]))
    dim = int(header["dim"])
    count = int(header["entries"])
    records = [json.loads(line) for line in lines[1:] if line.strip()]
    if len(records) != count:
        raise CountMismatch(
            f"{meta_path}: header says {count} entries, found {len(records)}"
        )

    raw = sidecar_path.read_bytes()
    if raw[:4] != MAGIC:
        raise MagicMismatch(f"{sidecar_path}: bad magic {raw[:4]!r}")
    if len(raw) < 12:
        raise TruncatedEmbeddings(f"{sidecar_path}: missing header")
    side_dim, side_count = struct.unpack("<II", raw[4:12])
    if side_dim != dim:
        raise DimMismatch(
            f"{sidecar_path}: sidecar dim {side_dim} != metadata dim {dim}"
        )
    if side_count != count:
        raise CountMismatch(
            f"{sidecar_path}: sidecar count {side_count} != metadata count {count}"
        )
    expected = 4 * dim * count
    payload = raw[12:]
    if len(payload) != expected:
        raise TruncatedEmbeddings(
            f"{sidecar_path}: expected {expected} payload bytes, got {len(payload)}"
        )
    matrix = np.frombuffer(payload, dtype="<f4").reshape(count, dim) if count else None

    entries = []
    for i, rec in enumerate(records):
        entries.append(
            KnowledgeEntry(
                id=rec["id"],
                smiles=rec["smiles"],
                description=rec["description"],
                label=float(rec["label"]),
                primary_prediction=(
                    float(rec["primary_prediction"])
                    if rec["primary_prediction"] is not None
                    else None
                ),
                source=Split(rec["source"]),
                embedding=matrix[i],
            )
        )
    return KnowledgeDatabase(task=task, fingerprint=header["fingerprint"], entries=tuple(entries))
