"""Metrics, baseline-vs-corrected comparison and ablation sweeps.

ROC-AUC uses the exact rank statistic (concordant pairs count 1, ties
count 1/2, over all positive-negative pairs) rather than curve
integration: same value, cleaner tie semantics, and directly checkable
against a brute-force pairwise oracle. Improvement percentages are the
raw signed relative change ``100 * (new - old) / old`` rounded
half-away-from-zero to one decimal, matching how published comparison
tables print them: a positive value means the corrected metric is higher,
whatever the metric's preferred direction.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from .correct import CorrectionOutcome, RunConfig, correct_split, run_summary
from .embed import EmbedderConfig
from .ingest import DatasetBundle, Metric, PredictionSet, Split, TaskSpec
from .knowledge import Jump, KnowledgeDatabase, Random, TopK, build_database
from .llmclient import LlmBackendConfig


class EvalError(ValueError):
    pass


class DegenerateLabels(EvalError):
    pass


@dataclass(frozen=True)
class MetricValue:
    metric: Metric
    value: float
    n: int


def roc_auc(scores: Sequence[float], labels: Sequence[float]) -> MetricValue:
    """Probability that a random positive scores above a random negative,
    ties counting one half."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if scores.shape != labels.shape:
        raise EvalError("scores and labels must have equal length")
    if not np.isin(labels, (0.0, 1.0)).all():
        raise EvalError("labels must be 0 or 1")
    pos = np.sort(scores[labels == 1.0])
    neg = np.sort(scores[labels == 0.0])
    if len(pos) == 0 or len(neg) == 0:
        raise DegenerateLabels("need at least one positive and one negative label")
    below = np.searchsorted(neg, pos, side="left")
    ties = np.searchsorted(neg, pos, side="right") - below
    numerator = float(below.sum()) + 0.5 * float(ties.sum())
    value = numerator / (len(pos) * len(neg))
    return MetricValue(metric=Metric.ROC_AUC, value=value, n=len(scores))


def rmse(preds: Sequence[float], truths: Sequence[float]) -> MetricValue:
    """Root mean squared error."""
    preds = np.asarray(preds, dtype=np.float64)
    truths = np.asarray(truths, dtype=np.float64)
    if preds.shape != truths.shape:
        raise EvalError("predictions and truths must have equal length")
    if len(preds) == 0:
        raise EvalError("cannot compute RMSE of an empty sequence")
    value = math.sqrt(float(np.mean((preds - truths) ** 2)))
    return MetricValue(metric=Metric.RMSE, value=value, n=len(preds))


def score(task: TaskSpec, preds: Sequence[float], truths: Sequence[float]) -> MetricValue:
    if task.is_classification:
        return roc_auc(preds, truths)
    return rmse(preds, truths)


def improvement_pct(old: float, new: float) -> float:
    """Signed relative change in percent, half-away-from-zero at 1 decimal."""
    if old == 0.0:
        raise EvalError("improvement is undefined for a zero baseline")
    raw = 100.0 * (new - old) / old
    return math.copysign(math.floor(abs(raw) * 10.0 + 0.5), raw) / 10.0 + 0.0


@dataclass(frozen=True)
class SplitComparison:
    baseline: MetricValue
    corrected: MetricValue
    improvement_pct: float


@dataclass(frozen=True)
class EvalReport:
    task: TaskSpec
    splits: Dict[str, SplitComparison]
    config: Dict
    consistency: Dict
    score_sources: Dict = None  # classification: probability- vs label-scored counts

    def to_json_dict(self) -> Dict:
        blob = {
            "task": self.task.kind.value,
            "metric": self.task.metric.value,
            "splits": {
                name: {
                    "baseline": cmp.baseline.value,
                    "corrected": cmp.corrected.value,
                    "improvement_pct": cmp.improvement_pct,
                    "n": cmp.baseline.n,
                }
                for name, cmp in self.splits.items()
            },
            "config": self.config,
            "consistency": self.consistency,
        }
        if self.score_sources is not None:
            blob["score_sources"] = self.score_sources
        return blob

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    def to_text_table(self) -> str:
        """Aligned table: corrected value with its improvement beneath."""
        lines = [f"metric: {self.task.metric.value}"]
        lines.append(f"{'split':<8}{'baseline':>12}{'corrected':>12}")
        for name, cmp in self.splits.items():
            lines.append(
                f"{name:<8}{cmp.baseline.value:>12.4f}{cmp.corrected.value:>12.4f}"
            )
            lines.append(f"{'':<8}{'':>12}{_pct_text(cmp.improvement_pct):>12}")
        return "\n".join(lines)


def _pct_text(pct: float) -> str:
    return f"{pct:+.1f}%"


def compare_outcomes(
    task: TaskSpec,
    outcomes: Sequence[CorrectionOutcome],
    truths: Sequence[float],
) -> SplitComparison:
    """Score base-model predictions against refined ones on one split."""
    baseline = score(task, [o.primary for o in outcomes], truths)
    corrected = score(task, [o.final for o in outcomes], truths)
    return SplitComparison(
        baseline=baseline,
        corrected=corrected,
        improvement_pct=improvement_pct(baseline.value, corrected.value),
    )


def split_truths(bundle: DatasetBundle, split: Split) -> List[float]:
    truths = []
    for rec in bundle.records:
        if rec.split is split:
            if rec.label is None:
                raise EvalError(f"record {rec.id!r} has no label; cannot evaluate")
            truths.append(rec.label)
    return truths


def evaluate_run(
    bundle: DatasetBundle,
    split: Split,
    outcomes: Sequence[CorrectionOutcome],
    cfg: RunConfig,
    embedder: EmbedderConfig,
    llm: LlmBackendConfig,
) -> EvalReport:
    """Build the report for one corrected split (labels required)."""
    comparison = compare_outcomes(bundle.task, outcomes, split_truths(bundle, split))
    summary = run_summary(outcomes, cfg, embedder, llm)
    score_sources = None
    if bundle.task.is_classification:
        score_sources = {
            "probability": summary["final_from_probability"],
            "label": summary["final_from_label"],
        }
    return EvalReport(
        task=bundle.task,
        splits={split.value: comparison},
        config=summary["config"],
        consistency=summary["consistency"],
        score_sources=score_sources,
    )


@dataclass(frozen=True)
class KSweep:
    values: Tuple[int, ...]


@dataclass(frozen=True)
class StrategySweep:
    pass


@dataclass(frozen=True)
class EmbedderSweep:
    configs: Tuple[EmbedderConfig, ...]


@dataclass(frozen=True)
class SelfCorrectionToggle:
    pass


AblationAxis = Union[KSweep, StrategySweep, EmbedderSweep, SelfCorrectionToggle]


def run_ablation(
    axis: AblationAxis,
    bundle: DatasetBundle,
    val_predictions: PredictionSet,
    split: Split,
    split_predictions: PredictionSet,
    cfg: RunConfig,
    embedder: EmbedderConfig,
    llm: LlmBackendConfig,
    db: Optional[KnowledgeDatabase] = None,
) -> List[EvalReport]:
    """One report per axis point, everything else held fixed.

    Axis points run in a fixed order: the given k values; top-k, jump,
    random; the given embedder configs; self-correction on then off. All
    points share the run seed. The database is rebuilt only when the
    embedder itself is being swept.
    """
    points: List[Tuple[Dict, RunConfig, EmbedderConfig]] = []
    if isinstance(axis, KSweep):
        for k in axis.values:
            points.append(({"axis": "k", "value": k}, replace(cfg, k=k), embedder))
    elif isinstance(axis, StrategySweep):
        for strat in (TopK(), Jump(), Random(seed=cfg.seed)):
            points.append(
                (
                    {"axis": "strategy", "value": type(strat).__name__.lower()},
                    replace(cfg, strategy=strat),
                    embedder,
                )
            )
    elif isinstance(axis, EmbedderSweep):
        for emb in axis.configs:
            points.append(({"axis": "embedder", "value": emb.fingerprint}, cfg, emb))
    elif isinstance(axis, SelfCorrectionToggle):
        for flag in (True, False):
            points.append(
                (
                    {"axis": "self_correction", "value": flag},
                    replace(cfg, self_correction=flag),
                    embedder,
                )
            )
    else:
        raise EvalError(f"unknown ablation axis: {axis!r}")

    reports = []
    base_db = db
    if base_db is None and not isinstance(axis, EmbedderSweep):
        base_db = build_database(bundle, val_predictions, embedder, cfg.include_description)
    for point_echo, point_cfg, point_embedder in points:
        if isinstance(axis, EmbedderSweep):
            point_db = build_database(
                bundle, val_predictions, point_embedder, point_cfg.include_description
            )
        else:
            point_db = base_db
        outcomes = correct_split(
            split, bundle, split_predictions, point_db, point_cfg, point_embedder, llm
        )
        report = evaluate_run(bundle, split, outcomes, point_cfg, point_embedder, llm)
        report = replace(report, config={**report.config, **point_echo})
        reports.append(report)
    return reports
