"""Dataset and prediction-file loading.

The toolkit never computes ML predictions itself: the base model is a
black box whose outputs are ingested from files. This module loads the
pre-split molecule CSV and the per-split prediction files, validating
identity alignment and label availability up front so every later stage
can assume a consistent bundle.

File formats:
  * Molecule CSV, header ``id,smiles,description,label,split`` (RFC-4180,
    UTF-8). ``split`` is one of ``train``, ``valid``, ``test``. ``label``
    and ``description`` cells may be empty where permitted.
  * Predictions: JSON-lines, one ``{"id": <str>, "prediction": <number>}``
    object per line.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Dict, Optional, Sequence, Tuple, Union


class IngestError(ValueError):
    """Base class for dataset/prediction loading failures."""


class DuplicateId(IngestError):
    pass


class MissingLabel(IngestError):
    pass


class InvalidLabel(IngestError):
    pass


class EmptySmiles(IngestError):
    pass


class UnknownSplit(IngestError):
    pass


class BadHeader(IngestError):
    pass


class MissingPrediction(IngestError):
    pass


class UnknownPredictionId(IngestError):
    pass


class DuplicatePrediction(IngestError):
    pass


class OutOfRangeProbability(IngestError):
    pass


class TaskKind(str, Enum):
    BINARY_CLASSIFICATION = "binary_classification"
    REGRESSION = "regression"


class Metric(str, Enum):
    ROC_AUC = "roc_auc"
    RMSE = "rmse"


@dataclass(frozen=True)
class TaskSpec:
    """Task type; the evaluation metric is forced by the kind."""

    kind: TaskKind

    @property
    def metric(self) -> Metric:
        if self.kind is TaskKind.BINARY_CLASSIFICATION:
            return Metric.ROC_AUC
        return Metric.RMSE

    @property
    def is_classification(self) -> bool:
        return self.kind is TaskKind.BINARY_CLASSIFICATION


CLASSIFICATION = TaskSpec(TaskKind.BINARY_CLASSIFICATION)
REGRESSION = TaskSpec(TaskKind.REGRESSION)


class Split(str, Enum):
    TRAIN = "train"
    VALID = "valid"
    TEST = "test"


@dataclass(frozen=True)
class MoleculeRecord:
    id: str
    smiles: str
    description: Optional[str]
    split: Split
    label: Optional[float]


@dataclass(frozen=True)
class PredictionSet:
    """Per-split model predictions, keyed by molecule id."""

    split: Split
    entries: Dict[str, float]

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class DatasetBundle:
    task: TaskSpec
    records: Tuple[MoleculeRecord, ...]
    counts: Dict[Split, int] = field(default_factory=dict)

    def split_records(self, split: Split) -> Tuple[MoleculeRecord, ...]:
        return tuple(r for r in self.records if r.split is split)


CSV_HEADER = ["id", "smiles", "description", "label", "split"]

_SPLIT_TOKENS = {s.value: s for s in Split}


def _parse_label(raw: str, task: TaskSpec, row_id: str) -> float:
    try:
        value = float(raw)
    except ValueError as exc:
        raise InvalidLabel(f"row {row_id!r}: label {raw!r} is not a number") from exc
    if not math.isfinite(value):
        raise InvalidLabel(f"row {row_id!r}: label {raw!r} is not finite")
    if task.is_classification and value not in (0.0, 1.0):
        raise InvalidLabel(
            f"row {row_id!r}: classification label must be 0 or 1, got {raw!r}"
        )
    return value


def load_molecules(path: Union[str, Path], task: TaskSpec) -> DatasetBundle:
    """Load and validate a molecule CSV into a DatasetBundle.

    Record order is preserved from the file. Raises IngestError subclasses
    on duplicate ids, missing required labels, out-of-domain classification
    labels, empty SMILES or unknown split tokens.
    """
    path = Path(path)
    records = []
    seen = set()
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise BadHeader(f"{path}: empty file") from None
        if header != CSV_HEADER:
            raise BadHeader(f"{path}: expected header {CSV_HEADER}, got {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != len(CSV_HEADER):
                raise BadHeader(f"{path}:{lineno}: expected {len(CSV_HEADER)} cells")
            mol_id, smiles, description, label_raw, split_raw = row
            if mol_id in seen:
                raise DuplicateId(f"{path}:{lineno}: duplicate id {mol_id!r}")
            seen.add(mol_id)
            if not smiles:
                raise EmptySmiles(f"{path}:{lineno}: empty SMILES for id {mol_id!r}")
            split = _SPLIT_TOKENS.get(split_raw)
            if split is None:
                raise UnknownSplit(f"{path}:{lineno}: unknown split {split_raw!r}")
            label = _parse_label(label_raw, task, mol_id) if label_raw else None
            if label is None and split in (Split.TRAIN, Split.VALID):
                raise MissingLabel(
                    f"{path}:{lineno}: id {mol_id!r} in split {split.value} has no label"
                )
            records.append(
                MoleculeRecord(
                    id=mol_id,
                    smiles=smiles,
                    description=description or None,
                    split=split,
                    label=label,
                )
            )
    counts = {s: 0 for s in Split}
    for rec in records:
        counts[rec.split] += 1
    return DatasetBundle(task=task, records=tuple(records), counts=counts)


def save_molecules(bundle: DatasetBundle, path: Union[str, Path]) -> None:
    """Write a bundle back to CSV; reloading yields an identical bundle.

    Labels use shortest round-trip decimal rendering (repr), so the float
    value survives the trip exactly.
    """
    path = Path(path)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_HEADER)
        for rec in bundle.records:
            writer.writerow(
                [
                    rec.id,
                    rec.smiles,
                    rec.description or "",
                    repr(rec.label) if rec.label is not None else "",
                    rec.split.value,
                ]
            )


def load_predictions(
    path: Union[str, Path], bundle: DatasetBundle, split: Split
) -> PredictionSet:
    """Load a JSON-lines prediction file covering one split exactly.

    Every id of the split must appear exactly once; ids outside the split
    are rejected. Classification predictions must be probabilities in
    [0, 1].
    """
    path = Path(path)
    wanted = {r.id for r in bundle.records if r.split is split}
    entries: Dict[str, float] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
                mol_id = obj["id"]
                value = float(obj["prediction"])
            except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
                raise IngestError(f"{path}:{lineno}: malformed prediction line") from exc
            if mol_id not in wanted:
                raise UnknownPredictionId(
                    f"{path}:{lineno}: id {mol_id!r} is not in the {split.value} split"
                )
            if mol_id in entries:
                raise DuplicatePrediction(f"{path}:{lineno}: duplicate id {mol_id!r}")
            if bundle.task.is_classification and not 0.0 <= value <= 1.0:
                raise OutOfRangeProbability(
                    f"{path}:{lineno}: probability {value} outside [0, 1] for {mol_id!r}"
                )
            entries[mol_id] = value
    missing = wanted - entries.keys()
    if missing:
        shown = sorted(missing)[:5]
        raise MissingPrediction(
            f"{path}: {len(missing)} {split.value} id(s) without predictions, "
            f"e.g. {shown}"
        )
    return PredictionSet(split=split, entries=entries)


def predictions_for(
    bundle: DatasetBundle, predictions: PredictionSet, split: Split
) -> Sequence[Tuple[MoleculeRecord, float]]:
    """Pair split records with their predictions, in dataset order."""
    return [
        (rec, predictions.entries[rec.id])
        for rec in bundle.records
        if rec.split is split
    ]
