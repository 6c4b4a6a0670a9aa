"""
Grading clusters with the impostor-host protocol
================================================

Cluster quality is measured behaviourally: show five images, four from one
cluster ("hosts") plus one from elsewhere (the "impostor"), and ask which one
does not belong. Good clusters make the impostor obvious.

This demo generates tasks from a made-up assignment and scores two simulated
annotators: one guessing uniformly, one with sharp eyes on the big cluster
only. The gap between average and size-weighted accuracy is the point.
"""
import numpy as np

from memegenres.evaluation import (
    Response,
    generate_tasks,
    response_accuracy,
    score,
    simulate_random_annotator,
)
from memegenres.spectral import ClusterAssignment

# ---------------------------------------------------------------------------
# 1. A deliberately lopsided assignment: one blob of 160 images, one of 40.
# ---------------------------------------------------------------------------
assignments = {}
img = 0
for cluster, size in ((0, 160), (1, 40)):
    for _ in range(size):
        assignments[img] = cluster
        img += 1
asg = ClusterAssignment(assignments=assignments, K=2, centroid_inertia=0.0)

tasks, skipped = generate_tasks(asg, tasks_per_cluster=500, seed=1)
print(f"{len(tasks)} tasks generated ({'none' if not skipped else skipped} skipped)")

# ---------------------------------------------------------------------------
# 2. Annotator A guesses at random: calibrates to 1/5.
# ---------------------------------------------------------------------------
guesses = simulate_random_annotator(tasks, seed=7)
print(f"random annotator accuracy: {response_accuracy(tasks, guesses):.3f} "
      "(five positions, so ~0.200)")

# ---------------------------------------------------------------------------
# 3. Annotator B nails the big cluster (90%) but flails on the small one
#    (30%). The plain average of per-cluster accuracies hides that most
#    *images* live where the annotator is strong; the size-weighted
#    (normalized) score restores the image's-eye view.
# ---------------------------------------------------------------------------
rng = np.random.default_rng(3)
responses = []
hit_rate = {0: 0.9, 1: 0.3}
for t in tasks:
    if rng.random() < hit_rate[t.host_cluster]:
        pos = t.impostor_position
    else:
        pos = int(1 + (t.impostor_position % 5))  # a wrong slot
    responses.append(Response("demo-annotator", t.task_id, pos, 0.0))

rep = score(tasks, responses, asg)
print(f"\nper-cluster accuracy: " +
      ", ".join(f"cluster {c}: {a:.3f}" for c, a in rep.acc.items()))
print(f"cluster mass p_i:     " +
      ", ".join(f"cluster {c}: {p:.2f}" for c, p in rep.p.items()))
print(f"\naverage accuracy:            {rep.avg_accuracy:.4f}")
print(f"normalized (size-weighted):  {rep.normalized_avg_accuracy:.4f}")
print(f"delta:                       {rep.normalized_delta:+.4f}")
print("\npositive delta = small clusters are cleaner than big ones;"
      "\nnegative delta = the bulk of the corpus is the well-sorted part.")
