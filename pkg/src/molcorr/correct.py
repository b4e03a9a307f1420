"""End-to-end correction of one query or one split.

Per query: embed, retrieve context (excluding the query's own entry when
it comes from the validation split), render the corrector prompt, send it,
parse the response, optionally run one self-correction round, and record
the refined prediction.

Self-correction fires when the proposed correction deviates strongly from
the base model: a flipped label for classification, or a relative change
above the trigger fraction (default 20%) for regression, with an absolute
1e-9 epsilon branch when the base prediction is ~0. The self-correction
response overrides the initial proposal; a query whose response cannot be
parsed (or whose backend call fails outright) falls back to the base
model's prediction, so every query always yields a final value.

All per-query randomness derives from (seed, query id); outcomes are
emitted in dataset order regardless of worker count.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .embed import EmbedderConfig, embed_molecule, embedder_fingerprint
from .ingest import DatasetBundle, MoleculeRecord, PredictionSet, Split, TaskSpec
from .knowledge import KnowledgeDatabase, RetrievalStrategy, TopK, retrieve, strategy_name
from .llmclient import AuditLog, LlmBackendConfig, LlmError, QueryMeta, backend_name, complete
from .parse import ParseError, ParsedAnswer, consistency_rate, parse_response
from .prompt import DEFAULT_TOKEN_BUDGET, build_corrector_prompt, build_self_correction_prompt

logger = logging.getLogger(__name__)

ZERO_PRIMARY_EPSILON = 1e-9


class CorrectionError(RuntimeError):
    pass


class FingerprintMismatch(CorrectionError):
    pass


@dataclass(frozen=True)
class RunConfig:
    k: int = 10
    strategy: RetrievalStrategy = field(default_factory=TopK)
    self_correction: bool = True
    regression_trigger_fraction: float = 0.20
    token_budget: int = DEFAULT_TOKEN_BUDGET
    seed: int = 0
    include_description: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.regression_trigger_fraction <= 0.0:
            raise CorrectionError("trigger fraction must be positive")
        if self.k < 1:
            raise CorrectionError(f"k must be >= 1, got {self.k}")


@dataclass(frozen=True)
class CorrectionOutcome:
    id: str
    primary: float
    initial: Optional[ParsedAnswer]
    self_correction_invoked: bool
    final: float
    fallback_used: bool
    context_ids: Tuple[str, ...]
    final_source: Optional[str] = None  # "probability" | "label" (classification only)


def should_self_correct(
    task: TaskSpec, primary: float, proposed: float, cfg: RunConfig
) -> bool:
    """Whether a proposed correction deviates enough to re-question it."""
    if task.is_classification:
        primary_label = 1.0 if primary >= 0.5 else 0.0
        proposed_label = 1.0 if proposed >= 0.5 else 0.0
        return primary_label != proposed_label
    if abs(primary) < ZERO_PRIMARY_EPSILON:
        return abs(proposed) >= ZERO_PRIMARY_EPSILON
    return abs(proposed - primary) > cfg.regression_trigger_fraction * abs(primary)


def _final_value(task: TaskSpec, answer: ParsedAnswer) -> Tuple[float, Optional[str]]:
    """Refined prediction recorded for an answer.

    Classification answers score by probability when present, else by the
    hard label as 0.0/1.0; the source is reported so downstream metrics
    can say which path dominated.
    """
    if task.is_classification:
        if answer.probability is not None:
            return answer.probability, "probability"
        return answer.prediction, "label"
    return answer.prediction, None


def correct_one(
    record: MoleculeRecord,
    primary: float,
    db: KnowledgeDatabase,
    cfg: RunConfig,
    embedder: EmbedderConfig,
    llm: LlmBackendConfig,
    audit: Optional[AuditLog] = None,
) -> CorrectionOutcome:
    """Run the full correction pipeline for a single query."""
    task = db.task
    expected = embedder_fingerprint(embedder, cfg.include_description)
    if db.fingerprint != expected:
        raise FingerprintMismatch(
            f"database fingerprint {db.fingerprint!r} does not match "
            f"configured embedder {expected!r}"
        )
    query_vec = embed_molecule(embedder, record, cfg.include_description)
    exclude = record.id if record.split is Split.VALID else None
    ctx = retrieve(db, query_vec, cfg.k, cfg.strategy, exclude_id=exclude)
    prompt = build_corrector_prompt(record, primary, ctx, task, cfg.token_budget)
    meta = QueryMeta(id=record.id, primary=primary, true_label=record.label)

    def fallback() -> CorrectionOutcome:
        return CorrectionOutcome(
            id=record.id,
            primary=primary,
            initial=None,
            self_correction_invoked=False,
            final=primary,
            fallback_used=True,
            context_ids=ctx.ids,
        )

    try:
        exchange = complete(llm, prompt, meta, task)
        if audit is not None:
            audit.append(record.id, exchange)
        initial = _parse_or_none(exchange.response_text, task)
    except LlmError as exc:
        logger.warning("query %s: backend error, falling back (%s)", record.id, exc)
        return fallback()
    if initial is None:
        return fallback()

    proposed = initial.prediction
    invoked = cfg.self_correction and should_self_correct(task, primary, proposed, cfg)
    answer = initial
    if invoked:
        sc_prompt = build_self_correction_prompt(
            record, primary, proposed, task, prior_explanation=initial.explanation
        )
        try:
            sc_exchange = complete(llm, sc_prompt, meta, task)
            if audit is not None:
                audit.append(record.id, sc_exchange)
            revised = _parse_or_none(sc_exchange.response_text, task)
        except LlmError as exc:
            logger.warning("query %s: self-correction backend error (%s)", record.id, exc)
            revised = None
        if revised is not None:
            answer = revised

    final, source = _final_value(task, answer)
    return CorrectionOutcome(
        id=record.id,
        primary=primary,
        initial=initial,
        self_correction_invoked=invoked,
        final=final,
        fallback_used=False,
        context_ids=ctx.ids,
        final_source=source,
    )


def _parse_or_none(text: str, task: TaskSpec) -> Optional[ParsedAnswer]:
    try:
        return parse_response(text, task)
    except ParseError:
        return None


def correct_split(
    split: Split,
    bundle: DatasetBundle,
    predictions: PredictionSet,
    db: KnowledgeDatabase,
    cfg: RunConfig,
    embedder: EmbedderConfig,
    llm: LlmBackendConfig,
    audit: Optional[AuditLog] = None,
) -> List[CorrectionOutcome]:
    """Correct every molecule of a split, outcomes in dataset order.

    The leakage guard applies only to validation queries. ``cfg.jobs``
    workers may process queries concurrently; ordering and results do
    not depend on the worker count.
    """
    queries = [
        (rec, predictions.entries[rec.id])
        for rec in bundle.records
        if rec.split is split
    ]

    def run(pair) -> CorrectionOutcome:
        rec, primary = pair
        return correct_one(rec, primary, db, cfg, embedder, llm, audit=audit)

    if cfg.jobs <= 1 or len(queries) <= 1:
        return [run(q) for q in queries]
    with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
        return list(pool.map(run, queries))


def run_summary(
    outcomes: Sequence[CorrectionOutcome],
    cfg: RunConfig,
    embedder: EmbedderConfig,
    llm: LlmBackendConfig,
) -> Dict:
    """Aggregate stats for a corrected split, plus a config echo."""
    answers: List = [
        o.initial if o.initial is not None else ParseError("fallback")
        for o in outcomes
    ]
    stats = consistency_rate(answers)
    return {
        "config": config_echo(cfg, embedder, llm),
        "queries": len(outcomes),
        "consistency": {"total": stats.total, "strict": stats.strict, "rate": stats.rate},
        "self_corrections": sum(1 for o in outcomes if o.self_correction_invoked),
        "fallbacks": sum(1 for o in outcomes if o.fallback_used),
        "final_from_probability": sum(1 for o in outcomes if o.final_source == "probability"),
        "final_from_label": sum(1 for o in outcomes if o.final_source == "label"),
    }


def config_echo(
    cfg: RunConfig, embedder: EmbedderConfig, llm: LlmBackendConfig
) -> Dict:
    return {
        "k": cfg.k,
        "strategy": strategy_name(cfg.strategy),
        "self_correction": cfg.self_correction,
        "regression_trigger_fraction": cfg.regression_trigger_fraction,
        "token_budget": cfg.token_budget,
        "seed": cfg.seed,
        "include_description": cfg.include_description,
        "jobs": cfg.jobs,
        "embedder": embedder_fingerprint(embedder, cfg.include_description),
        "backend": backend_name(llm),
    }


def outcome_to_dict(outcome: CorrectionOutcome) -> Dict:
    initial = None
    if outcome.initial is not None:
        initial = {
            "prediction": outcome.initial.prediction,
            "probability": outcome.initial.probability,
            "explanation": outcome.initial.explanation,
            "strict": outcome.initial.strict,
        }
    return {
        "id": outcome.id,
        "primary": outcome.primary,
        "initial": initial,
        "self_correction_invoked": outcome.self_correction_invoked,
        "final": outcome.final,
        "fallback_used": outcome.fallback_used,
        "context_ids": list(outcome.context_ids),
        "final_source": outcome.final_source,
    }


def write_outcomes(outcomes: Sequence[CorrectionOutcome], path) -> None:
    """One JSON object per line, in outcome order; byte-deterministic."""
    with open(path, "w", encoding="utf-8") as fh:
        for outcome in outcomes:
            fh.write(json.dumps(outcome_to_dict(outcome), separators=(",", ":")) + "\n")
