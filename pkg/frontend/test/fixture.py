"""Build a tiny server-ready evaluation directory for the browser tests.

Usage: python3 fixture.py OUT_DIR

Writes into OUT_DIR:
    images/*.png          20 random images
    snapshot.csv          corpus snapshot over those images
    assignment.csv        two clusters of 10
    eval/tasks.jsonl      40 real impostor tasks (20 per cluster)
"""
import sys
from pathlib import Path

import numpy as np
from PIL import Image

from memegenres.corpus import ingest_manifest, save_snapshot
from memegenres.evaluation import generate_tasks, save_tasks
from memegenres.spectral import ClusterAssignment, save_assignment

N_IMAGES = 20


def main(out_dir: str) -> None:
    out = Path(out_dir)
    img_dir = out / "images"
    img_dir.mkdir(parents=True, exist_ok=True)

    rng = np.random.default_rng(7)
    lines = ["path,source_tag"]
    for i in range(N_IMAGES):
        arr = rng.integers(0, 255, size=(32, 32), dtype=np.uint8)
        Image.fromarray(arr).save(img_dir / f"img{i:03d}.png")
        lines.append(f"images/img{i:03d}.png,fixture")
    manifest = out / "manifest.csv"
    manifest.write_text("\n".join(lines) + "\n")

    result = ingest_manifest(manifest, out)
    save_snapshot(result.snapshot, out / "snapshot.csv")

    assignment = ClusterAssignment(
        assignments={i: 0 if i < N_IMAGES // 2 else 1 for i in range(N_IMAGES)},
        K=2,
        centroid_inertia=0.0,
    )
    save_assignment(assignment, out / "assignment.csv")

    tasks, _ = generate_tasks(assignment, tasks_per_cluster=20, seed=1)
    eval_dir = out / "eval"
    eval_dir.mkdir(exist_ok=True)
    save_tasks(tasks, eval_dir / "tasks.jsonl")
    print(f"fixture ready: {len(result.snapshot)} images, {len(tasks)} tasks")


if __name__ == "__main__":
    main(sys.argv[1])
