"""
Deterministic text embeddings and similarity retrieval
======================================================

The local feature-hashing embedder maps any text to a unit vector with no
model download or network call, which makes retrieval reproducible
everywhere. A knowledge database pools labeled train molecules with
validation molecules (plus the model's prediction for those), and top-k /
jump / random strategies select context for a query.
"""

import random

from molcorr import (
    REGRESSION,
    Jump,
    LocalHashConfig,
    Random,
    TopK,
    build_database,
    cosine_similarity,
    embed_text,
    retrieve,
)
from molcorr.ingest import DatasetBundle, MoleculeRecord, PredictionSet, Split

emb = LocalHashConfig(dim=64, ngram=3)

# similar strings land close together, unrelated ones do not
a = embed_text(emb, "CCCCO")
b = embed_text(emb, "CCCCCO")
c = embed_text(emb, "c1ccncc1[N+](=O)[O-]")
print("cos(CCCCO, CCCCCO)      =", round(cosine_similarity(a, b), 4))
print("cos(CCCCO, nitropyridine) =", round(cosine_similarity(a, c), 4))

# a small pool: 16 train molecules and 6 validation molecules
rng = random.Random(1)
records, val_preds = [], {}
for i in range(22):
    split = Split.TRAIN if i < 16 else Split.VALID
    smiles = "C" * rng.randint(1, 8) + rng.choice(["O", "N", "S"]) + str(i)
    label = round(rng.uniform(0, 3), 4)
    records.append(MoleculeRecord(f"m{i}", smiles, None, split, label))
    if split is Split.VALID:
        val_preds[f"m{i}"] = round(label + rng.uniform(-1, 1), 4)

bundle = DatasetBundle(REGRESSION, tuple(records), {})
db = build_database(bundle, PredictionSet(Split.VALID, val_preds), emb)
print(f"\ndatabase: {len(db)} entries, fingerprint {db.fingerprint}")

query = embed_text(emb, "CCCCCCS8")
for strategy in (TopK(), Jump(), Random(seed=7)):
    ctx = retrieve(db, query, k=5, strategy=strategy)
    print(f"{type(strategy).__name__:>6}: {list(ctx.ids)}")

# a validation query excludes its own database entry (leakage guard)
own = records[17]
ctx = retrieve(db, embed_text(emb, own.smiles), k=22, exclude_id=own.id)
print(f"\nexcluded {own.id}: retrieved {len(ctx)} of {len(db)} entries")
