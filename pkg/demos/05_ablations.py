"""
Sweeping one configuration axis at a time
=========================================

run_ablation holds everything fixed except one axis: the context size k,
the retrieval strategy, the embedder, or the self-correction toggle.
Each point yields a full report with the baseline-vs-corrected metric
and the improvement percentage.
"""

import random

from molcorr import (
    REGRESSION,
    KSweep,
    LocalHashConfig,
    MockNoisyOracle,
    RunConfig,
    SelfCorrectionToggle,
    StrategySweep,
    run_ablation,
)
from molcorr.ingest import DatasetBundle, MoleculeRecord, PredictionSet, Split

rng = random.Random(12)
records = []
val_preds, test_preds = {}, {}
for i in range(120):
    split = Split.TRAIN if i < 70 else (Split.VALID if i < 95 else Split.TEST)
    smiles = "".join(rng.choice("CNOS()=c1") for _ in range(rng.randint(5, 14)))
    label = round(rng.uniform(0, 4), 4)
    records.append(MoleculeRecord(f"m{i}", smiles, None, split, label))
    noisy = round(label + rng.uniform(-1.2, 1.2), 4)
    if split is Split.VALID:
        val_preds[f"m{i}"] = noisy
    elif split is Split.TEST:
        test_preds[f"m{i}"] = noisy

bundle = DatasetBundle(REGRESSION, tuple(records), {})
emb = LocalHashConfig(dim=64)
cfg = RunConfig(k=5, seed=1)
llm = MockNoisyOracle(p=0.6, seed=9)
val_set = PredictionSet(Split.VALID, val_preds)
test_set = PredictionSet(Split.TEST, test_preds)

for axis in (KSweep(values=(1, 5, 20)), StrategySweep(), SelfCorrectionToggle()):
    print("=" * 52)
    print(type(axis).__name__)
    print("=" * 52)
    reports = run_ablation(axis, bundle, val_set, Split.TEST, test_set, cfg, emb, llm)
    for report in reports:
        cmp = report.splits["test"]
        print(
            f"  {report.config['axis']}={report.config['value']!s:<12} "
            f"baseline {cmp.baseline.value:.4f}  corrected {cmp.corrected.value:.4f}  "
            f"({cmp.improvement_pct:+.1f}%)"
        )
