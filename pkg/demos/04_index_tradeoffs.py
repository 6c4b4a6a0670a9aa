"""
What the quantizing index trades away, and what nprobe buys back
================================================================

The descriptor index answers nearest-neighbor queries from compressed codes:
a learned rotation, a coarse partition, and 8-byte product codes per vector.
Compression loses precision; probing more coarse cells at query time buys
recall back. This demo measures both effects on synthetic descriptors.
"""
import time

import numpy as np

from memegenres.features import FeatureSet, Keypoint
from memegenres.index import build_index, search, train_opq
from memegenres.synthetic import make_descriptor_sample

# ---------------------------------------------------------------------------
# 1. 10k SURF-like unit vectors, wrapped as 50 fake "images" of 200 each.
# ---------------------------------------------------------------------------
desc = make_descriptor_sample(n=10000, n_clusters=150, seed=0).astype(np.float64)
PER = 200
features = {
    img: FeatureSet(
        img,
        [Keypoint(0.0, 0.0, 2.0, 0.0, 1.0)] * PER,
        desc[img * PER : (img + 1) * PER].astype(np.float32),
    )
    for img in range(len(desc) // PER)
}

# ---------------------------------------------------------------------------
# 2. Rotation learning vs plain product quantization: same training loop,
#    the rotation is simply frozen at identity for the comparison branch.
# ---------------------------------------------------------------------------
train = desc[np.random.default_rng(1).choice(10000, 5000, replace=False)]
for learn, name in ((False, "PQ  (identity rotation)"), (True, "OPQ (learned rotation)")):
    m = train_opq(train, iterations=8, seed=0, learn_rotation=learn)
    print(f"{name}: reconstruction MSE {m.errors[0]:.5f} -> {m.errors[-1]:.5f}")

opq = train_opq(train, iterations=8, seed=0)
index = build_index(features, opq, coarse_k=256, seed=0)

# ---------------------------------------------------------------------------
# 3. Recall@1 against exact search as nprobe grows. Queries are jittered
#    copies of indexed vectors, so each query's true neighbor is known and
#    the coarse cell actually has to be found.
# ---------------------------------------------------------------------------
rng = np.random.default_rng(2)
qidx = rng.choice(10000, size=500, replace=False)
queries = desc[qidx] + rng.normal(scale=0.01, size=(500, 64))
queries /= np.linalg.norm(queries, axis=1, keepdims=True)

print(f"\n{'nprobe':>6} {'recall@1':>9} {'ms/query':>9}")
for nprobe in (1, 2, 4, 8, 16, 32, 64):
    t0 = time.perf_counter()
    got = search(index, queries, knn=1, nprobe=nprobe)
    ms = (time.perf_counter() - t0) / len(queries) * 1000
    hits = sum(
        1
        for qi, per in enumerate(got)
        if per and per[0].match_image_id * PER + per[0].match_keypoint_ordinal == qidx[qi]
    )
    print(f"{nprobe:>6} {hits / len(queries):>9.3f} {ms:>9.2f}")

print("\nrecall climbs with nprobe while cost grows roughly linearly;"
      "\nthe pipeline default (nprobe=32) sits past the knee.")
