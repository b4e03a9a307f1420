"""Command-line entry point.

One binary, four subcommands:

  * ``build-db``   embed the train+valid pool into a knowledge database
  * ``correct``    refine a split's predictions through the LLM backend
  * ``predict``    query the LLM directly (ip/ipd/ie/ied/fs prompts)
  * ``ablate``     sweep one config axis and report each point

Configuration comes from a line-oriented ``key=value`` file (``--config``)
with flag overrides winning. Exit codes: 0 success, 1 partial (some
queries fell back), 2 configuration or input error. API keys are only
ever read from the environment variables named in the config.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Dict, List, Optional

from . import correct as correct_mod
from . import evaluate as evaluate_mod
from .embed import EmbedError, EmbedderConfig, LocalHashConfig, RemoteHttpConfig, embedder_fingerprint
from .ingest import (
    CLASSIFICATION,
    REGRESSION,
    DatasetBundle,
    IngestError,
    PredictionSet,
    Split,
    load_molecules,
    load_predictions,
)
from .knowledge import (
    Jump,
    KnowledgeError,
    METADATA_FILE,
    Random,
    TopK,
    build_database,
    load_database,
    save_database,
)
from .llmclient import (
    AuditLog,
    LlmBackendConfig,
    LlmError,
    MockEcho,
    MockNoisyOracle,
    MockPerfectOracle,
    MockScripted,
    QueryMeta,
    RemoteChatConfig,
    complete,
)
from .parse import ParseError, consistency_rate, parse_response
from .prompt import MissingDescription, PromptError, PromptKind, build_predictor_prompt

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    pass


@dataclass
class AppConfig:
    task: str = "classification"
    dataset: Optional[str] = None
    valid_predictions: Optional[str] = None
    test_predictions: Optional[str] = None
    database_dir: Optional[str] = None
    output_dir: str = "."
    k: int = 10
    strategy: str = "topk"
    seed: int = 0
    self_correction: bool = True
    regression_trigger_fraction: float = 0.20
    token_budget: int = 3000
    jobs: int = 1
    include_description: bool = False
    embedder_backend: str = "localhash"
    embedder_dim: int = 256
    embedder_ngram: int = 3
    embedder_endpoint: Optional[str] = None
    embedder_model: Optional[str] = None
    embedder_key_env: Optional[str] = None
    llm_backend: str = "echo"
    llm_endpoint: Optional[str] = None
    llm_model: Optional[str] = None
    llm_key_env: Optional[str] = None
    llm_temperature: float = 0.0
    noisy_p: float = 0.5
    noisy_seed: int = 0
    scripted_responses: Optional[str] = None
    audit_log: bool = False


_BOOL_TOKENS = {"true": True, "1": True, "yes": True, "false": False, "0": False, "no": False}


def parse_config_file(path: Path) -> Dict[str, str]:
    values: Dict[str, str] = {}
    for lineno, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def build_app_config(config_path: Optional[str], overrides: Dict[str, object]) -> AppConfig:
    cfg = AppConfig()
    known = {f.name for f in fields(AppConfig)}
    if config_path:
        raw = parse_config_file(Path(config_path))
        for key, value in raw.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            current = getattr(cfg, key)
            if isinstance(current, bool):
                token = value.lower()
                if token not in _BOOL_TOKENS:
                    raise ConfigError(f"config key {key!r}: expected a boolean, got {value!r}")
                setattr(cfg, key, _BOOL_TOKENS[token])
            elif isinstance(current, int):
                setattr(cfg, key, int(value))
            elif isinstance(current, float):
                setattr(cfg, key, float(value))
            else:
                setattr(cfg, key, value)
    for key, value in overrides.items():
        if value is not None:
            setattr(cfg, key, value)
    return cfg


def app_task(cfg: AppConfig):
    if cfg.task in ("classification", "binary_classification"):
        return CLASSIFICATION
    if cfg.task == "regression":
        return REGRESSION
    raise ConfigError(f"unknown task {cfg.task!r}")


def app_embedder(cfg: AppConfig) -> EmbedderConfig:
    if cfg.embedder_backend == "localhash":
        return LocalHashConfig(dim=cfg.embedder_dim, ngram=cfg.embedder_ngram)
    if cfg.embedder_backend == "remote":
        if not cfg.embedder_endpoint or not cfg.embedder_model:
            raise ConfigError("remote embedder needs embedder_endpoint and embedder_model")
        return RemoteHttpConfig(
            endpoint=cfg.embedder_endpoint,
            model=cfg.embedder_model,
            key_env=cfg.embedder_key_env,
        )
    raise ConfigError(f"unknown embedder backend {cfg.embedder_backend!r}")


def app_llm(cfg: AppConfig) -> LlmBackendConfig:
    name = cfg.llm_backend
    if name == "echo":
        return MockEcho()
    if name == "perfect":
        return MockPerfectOracle()
    if name == "noisy":
        return MockNoisyOracle(p=cfg.noisy_p, seed=cfg.noisy_seed)
    if name == "scripted":
        if not cfg.scripted_responses:
            raise ConfigError("scripted backend needs scripted_responses (a JSON file)")
        responses = json.loads(Path(cfg.scripted_responses).read_text(encoding="utf-8"))
        return MockScripted(responses=responses)
    if name == "remote":
        if not cfg.llm_endpoint or not cfg.llm_model:
            raise ConfigError("remote backend needs llm_endpoint and llm_model")
        return RemoteChatConfig(
            endpoint=cfg.llm_endpoint,
            model=cfg.llm_model,
            key_env=cfg.llm_key_env,
            temperature=cfg.llm_temperature,
        )
    raise ConfigError(f"unknown llm backend {name!r}")


def app_run_config(cfg: AppConfig) -> correct_mod.RunConfig:
    strategies = {
        "topk": TopK(),
        "jump": Jump(),
        "random": Random(seed=cfg.seed),
    }
    if cfg.strategy not in strategies:
        raise ConfigError(f"unknown strategy {cfg.strategy!r}")
    return correct_mod.RunConfig(
        k=cfg.k,
        strategy=strategies[cfg.strategy],
        self_correction=cfg.self_correction,
        regression_trigger_fraction=cfg.regression_trigger_fraction,
        token_budget=cfg.token_budget,
        seed=cfg.seed,
        include_description=cfg.include_description,
        jobs=cfg.jobs,
    )


def _require(cfg: AppConfig, *names: str) -> None:
    for name in names:
        if getattr(cfg, name) is None:
            raise ConfigError(f"config key {name!r} is required for this command")


def _load_bundle(cfg: AppConfig) -> DatasetBundle:
    _require(cfg, "dataset")
    return load_molecules(cfg.dataset, app_task(cfg))


def _split_predictions(cfg: AppConfig, bundle: DatasetBundle, split: Split) -> PredictionSet:
    key = {Split.VALID: "valid_predictions", Split.TEST: "test_predictions"}[split]
    _require(cfg, key)
    return load_predictions(getattr(cfg, key), bundle, split)


def cmd_build_db(cfg: AppConfig) -> int:
    _require(cfg, "database_dir")
    bundle = _load_bundle(cfg)
    val_preds = _split_predictions(cfg, bundle, Split.VALID)
    embedder = app_embedder(cfg)
    fingerprint = embedder_fingerprint(embedder, cfg.include_description)
    db_dir = Path(cfg.database_dir)
    existing_meta = db_dir / METADATA_FILE
    if existing_meta.exists():
        header = json.loads(existing_meta.read_text(encoding="utf-8").splitlines()[0])
        if header.get("fingerprint") != fingerprint:
            raise ConfigError(
                f"database at {db_dir} was built with {header.get('fingerprint')!r}, "
                f"configured embedder is {fingerprint!r}"
            )
    db = build_database(bundle, val_preds, embedder, cfg.include_description)
    save_database(db, db_dir)
    counts = {
        "train": sum(1 for e in db.entries if e.primary_prediction is None),
        "valid": sum(1 for e in db.entries if e.primary_prediction is not None),
    }
    print(
        f"built database: {len(db)} entries "
        f"(train {counts['train']}, valid {counts['valid']}), "
        f"dim {db.dim}, fingerprint {db.fingerprint}"
    )
    return EXIT_OK


def cmd_correct(cfg: AppConfig, split: Split) -> int:
    if split is Split.TRAIN:
        raise ConfigError("correct runs on the valid or test split")
    _require(cfg, "database_dir")
    bundle = _load_bundle(cfg)
    if not bundle.split_records(split):
        raise ConfigError(f"split {split.value} is empty")
    preds = _split_predictions(cfg, bundle, split)
    db = load_database(cfg.database_dir)
    embedder = app_embedder(cfg)
    run_cfg = app_run_config(cfg)
    expected = embedder_fingerprint(embedder, cfg.include_description)
    if db.fingerprint != expected:
        raise ConfigError(
            f"database fingerprint {db.fingerprint!r} does not match "
            f"configured embedder {expected!r}"
        )
    llm = app_llm(cfg)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    audit = None
    if cfg.audit_log:
        audit_path = out_dir / f"audit_{split.value}.jsonl"
        audit_path.write_text("", encoding="utf-8")
        audit = AuditLog(audit_path)
    outcomes = correct_mod.correct_split(
        split, bundle, preds, db, run_cfg, embedder, llm, audit=audit
    )
    correct_mod.write_outcomes(outcomes, out_dir / f"outcomes_{split.value}.jsonl")
    summary = correct_mod.run_summary(outcomes, run_cfg, embedder, llm)
    (out_dir / f"summary_{split.value}.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    labeled = all(
        rec.label is not None for rec in bundle.records if rec.split is split
    )
    if labeled:
        report = evaluate_mod.evaluate_run(bundle, split, outcomes, run_cfg, embedder, llm)
        (out_dir / f"report_{split.value}.json").write_text(
            report.to_json() + "\n", encoding="utf-8"
        )
        print(report.to_text_table())
    else:
        print(f"corrected {len(outcomes)} queries (no labels; metrics skipped)")
    fallbacks = summary["fallbacks"]
    if fallbacks:
        print(f"warning: {fallbacks} query(ies) fell back to the base prediction")
        return EXIT_PARTIAL
    return EXIT_OK


_PROMPT_KINDS = {
    "ip": PromptKind.IP,
    "ipd": PromptKind.IPD,
    "ie": PromptKind.IE,
    "ied": PromptKind.IED,
    "fs": PromptKind.FEW_SHOT,
}


def cmd_predict(cfg: AppConfig, kind_name: str, split: Split, shots: int) -> int:
    kind = _PROMPT_KINDS.get(kind_name)
    if kind is None:
        raise ConfigError(f"unknown prompt kind {kind_name!r}")
    bundle = _load_bundle(cfg)
    task = bundle.task
    records = bundle.split_records(split)
    if not records:
        raise ConfigError(f"split {split.value} is empty")
    if kind in (PromptKind.IPD, PromptKind.IED):
        missing = [r.id for r in records if not r.description]
        if missing:
            raise MissingDescription(
                f"{kind_name} prompts need descriptions; {len(missing)} record(s) "
                f"lack one, e.g. {missing[:3]}"
            )
    examples = None
    if kind is PromptKind.FEW_SHOT:
        train = bundle.split_records(Split.TRAIN)
        if shots < 1 or shots > len(train):
            raise ConfigError(
                f"--shots must be between 1 and the train size ({len(train)})"
            )
        examples = [(rec, rec.label) for rec in train[:shots]]
    llm = app_llm(cfg)
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    answers = []
    failures = 0
    for rec in records:
        prompt = build_predictor_prompt(kind, rec, task, examples=examples, shots=shots if examples else None)
        try:
            exchange = complete(llm, prompt, QueryMeta(id=rec.id, true_label=rec.label), task)
            answer = parse_response(exchange.response_text, task)
        except (LlmError, ParseError) as exc:
            answers.append(ParseError(str(exc)))
            rows.append({"id": rec.id, "prediction": None, "strict": False})
            failures += 1
            continue
        answers.append(answer)
        value = answer.probability if (task.is_classification and answer.probability is not None) else answer.prediction
        rows.append({"id": rec.id, "prediction": value, "strict": answer.strict})

    stem = f"predict_{kind_name}{shots if kind is PromptKind.FEW_SHOT else ''}_{split.value}"
    with (out_dir / f"{stem}.jsonl").open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")
    stats = consistency_rate(answers)
    result = {
        "prompt": kind_name,
        "split": split.value,
        "queries": len(records),
        "failures": failures,
        "consistency": {"total": stats.total, "strict": stats.strict, "rate": stats.rate},
    }
    labeled = all(rec.label is not None for rec in records)
    if labeled and failures < len(records):
        scored = [
            (row["prediction"], rec.label)
            for row, rec in zip(rows, records)
            if row["prediction"] is not None
        ]
        metric = evaluate_mod.score(task, [s for s, _ in scored], [t for _, t in scored])
        result["metric"] = {"name": metric.metric.value, "value": metric.value, "n": metric.n}
        print(f"{kind_name} on {split.value}: {metric.metric.value} = {metric.value:.4f}")
    else:
        print(f"{kind_name} on {split.value}: {len(records)} queries, no metric")
    (out_dir / f"{stem}.json").write_text(
        json.dumps(result, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return EXIT_PARTIAL if failures else EXIT_OK


_AXES = ("k", "strategy", "self-correction", "embedder")


def cmd_ablate(cfg: AppConfig, axis_name: str, split: Split, k_values: str, dims: str) -> int:
    _require(cfg, "database_dir")
    bundle = _load_bundle(cfg)
    val_preds = _split_predictions(cfg, bundle, Split.VALID)
    split_preds = _split_predictions(cfg, bundle, split)
    embedder = app_embedder(cfg)
    run_cfg = app_run_config(cfg)
    llm = app_llm(cfg)
    if axis_name == "k":
        values = tuple(int(v) for v in k_values.split(",") if v.strip())
        if not values:
            raise ConfigError("--k-values is required for the k axis")
        axis = evaluate_mod.KSweep(values=values)
    elif axis_name == "strategy":
        axis = evaluate_mod.StrategySweep()
    elif axis_name == "self-correction":
        axis = evaluate_mod.SelfCorrectionToggle()
    elif axis_name == "embedder":
        dim_values = tuple(int(v) for v in dims.split(",") if v.strip())
        if not dim_values:
            raise ConfigError("--dims is required for the embedder axis")
        axis = evaluate_mod.EmbedderSweep(
            configs=tuple(LocalHashConfig(dim=d, ngram=cfg.embedder_ngram) for d in dim_values)
        )
    else:
        raise ConfigError(f"unknown axis {axis_name!r}; expected one of {_AXES}")

    db = None
    db_meta = Path(cfg.database_dir) / METADATA_FILE
    if db_meta.exists() and axis_name != "embedder":
        db = load_database(cfg.database_dir)
        if db.fingerprint != embedder_fingerprint(embedder, cfg.include_description):
            raise ConfigError("existing database does not match the configured embedder")

    reports = evaluate_mod.run_ablation(
        axis, bundle, val_preds, split, split_preds, run_cfg, embedder, llm, db=db
    )
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    tables = []
    for i, report in enumerate(reports):
        (out_dir / f"ablation_{axis_name}_{i}.json").write_text(
            report.to_json() + "\n", encoding="utf-8"
        )
        point = f"{report.config.get('axis')}={report.config.get('value')}"
        tables.append(f"[{point}]\n{report.to_text_table()}")
    combined = "\n\n".join(tables) + "\n"
    (out_dir / f"ablation_{axis_name}.txt").write_text(combined, encoding="utf-8")
    print(combined, end="")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="molcorr",
        description="Refine ML molecular property predictions with an LLM backend.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="key=value configuration file")
        p.add_argument("--k", type=int)
        p.add_argument("--strategy", choices=["topk", "jump", "random"])
        p.add_argument("--seed", type=int)
        p.add_argument("--backend", help="llm backend name (echo|perfect|noisy|scripted|remote)")
        p.add_argument("--jobs", type=int)
        p.add_argument("--no-self-correction", action="store_true")

    p_build = sub.add_parser("build-db", help="build the knowledge database")
    add_common(p_build)

    p_correct = sub.add_parser("correct", help="correct a split's predictions")
    add_common(p_correct)
    p_correct.add_argument("--split", choices=["valid", "test"], default="test")

    p_predict = sub.add_parser("predict", help="query the LLM as a direct predictor")
    add_common(p_predict)
    p_predict.add_argument("--split", choices=["train", "valid", "test"], default="test")
    p_predict.add_argument("--prompt", choices=sorted(_PROMPT_KINDS), default="ip")
    p_predict.add_argument("--shots", type=int, default=3)

    p_ablate = sub.add_parser("ablate", help="sweep one configuration axis")
    add_common(p_ablate)
    p_ablate.add_argument("--split", choices=["valid", "test"], default="test")
    p_ablate.add_argument("--axis", choices=_AXES, required=True)
    p_ablate.add_argument("--k-values", default="")
    p_ablate.add_argument("--dims", default="")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    args = make_parser().parse_args(argv)
    overrides: Dict[str, object] = {
        "k": args.k,
        "strategy": args.strategy,
        "seed": args.seed,
        "llm_backend": args.backend,
        "jobs": args.jobs,
    }
    if args.no_self_correction:
        overrides["self_correction"] = False
    try:
        cfg = build_app_config(args.config, overrides)
        if args.command == "build-db":
            return cmd_build_db(cfg)
        if args.command == "correct":
            return cmd_correct(cfg, Split(args.split))
        if args.command == "predict":
            return cmd_predict(cfg, args.prompt, Split(args.split), args.shots)
        if args.command == "ablate":
            return cmd_ablate(cfg, args.axis, Split(args.split), args.k_values, args.dims)
        raise ConfigError(f"unknown command {args.command!r}")
    except (
        ConfigError,
        IngestError,
        KnowledgeError,
        PromptError,
        EmbedError,
        correct_mod.CorrectionError,
        evaluate_mod.EvalError,
        FileNotFoundError,
        NotADirectoryError,
    ) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
