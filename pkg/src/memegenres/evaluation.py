"""Impostor-host evaluation: task generation, annotator filtering, accuracy metrics.

A task shows five images — four drawn from one ("host") cluster and one
impostor from a different cluster — and asks which image does not belong.
Annotators work in 25-task sessions containing five hidden control tasks
(four copies of one image plus an obviously different impostor); a session
with two or more control misses is discarded.

Metrics per cluster i: acc_i = correct/answered. The plain average is the
mean of acc_i over clusters with responses. The normalized average weights
each cluster by the fraction of corpus images it holds (weights renormalized
over responding clusters, so the result is a convex combination of the
acc_i). Their difference — the delta — exposes degenerate clusterings that
park most of the corpus in one incoherent cluster.
"""
from __future__ import annotations

import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .spectral import ClusterAssignment

TASKS_PER_CLUSTER = 200
SESSION_TASKS = 25
SESSION_CONTROLS = 5
MIN_HOST_CLUSTER = 4
POSITIONS = 5
MAX_CONTROL_MISSES = 1
# control tasks get ids far above any generated real task
CONTROL_ID_BASE = 10_000_000


@dataclass(frozen=True)
class ImpostorTask:
    task_id: int
    host_cluster: int
    host_images: tuple[int, int, int, int]
    impostor_image: int
    impostor_position: int            # 1..5
    is_control: bool = False
    control_answer: int | None = None

    def __post_init__(self):
        if not 1 <= self.impostor_position <= POSITIONS:
            raise ValueError("impostor_position must be in 1..5")
        if len(self.host_images) != 4:
            raise ValueError("exactly 4 host images required")
        if not self.is_control:
            if len(set(self.host_images)) != 4:
                raise ValueError("host images must be distinct")
            if self.impostor_image in self.host_images:
                raise ValueError("impostor must differ from hosts")
        elif self.control_answer != self.impostor_position:
            raise ValueError("control answer must point at the impostor")

    def slots(self) -> tuple[int, int, int, int, int]:
        """The five image ids in display order (impostor at its position)."""
        out = list(self.host_images)
        out.insert(self.impostor_position - 1, self.impostor_image)
        return tuple(out)


@dataclass
class Response:
    annotator_id: str
    task_id: int
    chosen_position: int
    timestamp: float = 0.0


@dataclass
class AnnotatorSession:
    annotator_id: str
    tasks: list[ImpostorTask]
    responses: dict[int, int] = field(default_factory=dict)   # task_id -> position
    qualified: bool = False

    def control_misses(self) -> int:
        misses = 0
        for t in self.tasks:
            if not t.is_control:
                continue
            if self.responses.get(t.task_id) != t.control_answer:
                misses += 1  # unanswered controls count as misses
        return misses


@dataclass
class EvalReport:
    acc: dict[int, float]             # cluster -> accuracy over answered tasks
    p: dict[int, float]               # cluster -> image fraction (sums to 1)
    avg_accuracy: float
    normalized_avg_accuracy: float
    normalized_delta: float
    n_responses: int
    n_correct: int
    answered: dict[int, int]          # cluster -> answered-task count
    clusters_without_responses: list[int]
    defined: bool

    def to_json(self) -> dict:
        def num(x: float):  # undefined metrics serialize as null, not NaN
            return None if x != x else x

        return {
            "acc": {str(k): v for k, v in sorted(self.acc.items())},
            "p": {str(k): v for k, v in sorted(self.p.items())},
            "avg_accuracy": num(self.avg_accuracy),
            "normalized_avg_accuracy": num(self.normalized_avg_accuracy),
            "normalized_delta": num(self.normalized_delta),
            "n_responses": self.n_responses,
            "n_correct": self.n_correct,
            "answered": {str(k): v for k, v in sorted(self.answered.items())},
            "clusters_without_responses": self.clusters_without_responses,
            "defined": self.defined,
        }


def _clusters_of(assignment: ClusterAssignment) -> dict[int, list[int]]:
    """Non-overflow cluster membership, ids sorted for determinism."""
    out: dict[int, list[int]] = {}
    for img in sorted(assignment.assignments):
        c = assignment.assignments[img]
        if c == assignment.K:
            continue  # overflow never hosts or supplies impostors
        out.setdefault(c, []).append(img)
    return out


def generate_tasks(
    assignment: ClusterAssignment,
    tasks_per_cluster: int = TASKS_PER_CLUSTER,
    seed: int = 0,
) -> tuple[list[ImpostorTask], list[tuple[int, int]]]:
    """Impostor-host tasks plus a report of skipped (cluster, size) pairs.

    Each cluster with >= 4 images hosts `tasks_per_cluster` tasks; hosts are
    drawn without replacement within a task, fresh across tasks. The impostor
    comes uniformly from the union of all other clusters' images.
    """
    clusters = _clusters_of(assignment)
    non_empty = {c: v for c, v in clusters.items() if v}
    if len(non_empty) < 2:
        raise ValueError("cannot form impostor: need at least 2 non-empty clusters")
    eligible = {c: v for c, v in non_empty.items() if len(v) >= MIN_HOST_CLUSTER}
    skipped = sorted((c, len(v)) for c, v in non_empty.items() if len(v) < MIN_HOST_CLUSTER)

    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xE7A1]))
    tasks: list[ImpostorTask] = []
    tid = 0
    for c in sorted(eligible):
        members = np.asarray(eligible[c])
        pool = np.asarray(
            [img for other, v in sorted(non_empty.items()) if other != c for img in v]
        )
        for _ in range(tasks_per_cluster):
            hosts = rng.choice(members, size=4, replace=False)
            imp = int(rng.choice(pool))
            pos = int(rng.integers(1, POSITIONS + 1))
            tasks.append(
                ImpostorTask(
                    task_id=tid,
                    host_cluster=c,
                    host_images=tuple(int(h) for h in hosts),
                    impostor_image=imp,
                    impostor_position=pos,
                )
            )
            tid += 1
    return tasks, skipped


def make_controls(
    image_ids: list[int],
    count: int,
    seed: int = 0,
    id_start: int = CONTROL_ID_BASE,
) -> list[ImpostorTask]:
    """Pre-labeled controls: four copies of one image plus a different image."""
    if len(image_ids) < 2:
        raise ValueError("need at least 2 images for control tasks")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0xC011]))
    ids = np.asarray(sorted(image_ids))
    out = []
    for i in range(count):
        host = int(rng.choice(ids))
        imp = host
        while imp == host:
            imp = int(rng.choice(ids))
        pos = int(rng.integers(1, POSITIONS + 1))
        out.append(
            ImpostorTask(
                task_id=id_start + i,
                host_cluster=-1,
                host_images=(host, host, host, host),
                impostor_image=imp,
                impostor_position=pos,
                is_control=True,
                control_answer=pos,
            )
        )
    return out


def qualify_annotators(
    sessions: list[AnnotatorSession],
) -> tuple[list[AnnotatorSession], list[AnnotatorSession]]:
    """Split sessions into (qualified, discarded) on the <= 1 control-miss rule."""
    qualified, discarded = [], []
    for s in sessions:
        s.qualified = s.control_misses() <= MAX_CONTROL_MISSES
        (qualified if s.qualified else discarded).append(s)
    return qualified, discarded


def assemble_sessions(
    tasks: list[ImpostorTask],
    responses: list[Response],
    roster: dict[str, list[int]] | None = None,
) -> list[AnnotatorSession]:
    """Group a response log into per-annotator sessions.

    With a roster (annotator -> task ids, as persisted by the server) the
    session holds exactly those tasks, so unanswered controls count as misses.
    Without one, each annotator's session is the set of tasks they answered.
    First response per (annotator, task) wins; duplicates are dropped.
    """
    by_id = {t.task_id: t for t in tasks}
    grouped: dict[str, dict[int, int]] = {}
    order: list[str] = []
    for r in responses:
        if r.task_id not in by_id:
            raise ValueError(f"response references unknown task {r.task_id}")
        if r.annotator_id not in grouped:
            grouped[r.annotator_id] = {}
            order.append(r.annotator_id)
        grouped[r.annotator_id].setdefault(r.task_id, r.chosen_position)

    sessions = []
    if roster is not None:
        for aid in roster:
            if aid not in grouped:
                grouped[aid] = {}
                order.append(aid)
    for aid in order:
        if roster is not None and aid in roster:
            ids = roster[aid]
        else:
            ids = sorted(grouped[aid])
        sessions.append(
            AnnotatorSession(
                annotator_id=aid,
                tasks=[by_id[t] for t in ids],
                responses=grouped[aid],
            )
        )
    return sessions


def score(
    tasks: list[ImpostorTask],
    responses: list[Response],
    assignment: ClusterAssignment,
) -> EvalReport:
    """Accuracy metrics over qualified responses to non-control tasks."""
    by_id = {t.task_id: t for t in tasks}
    clusters = _clusters_of(assignment)
    total = sum(len(v) for v in clusters.values())
    if total == 0:
        raise ValueError("assignment has no non-overflow images")
    p = {c: len(v) / total for c, v in sorted(clusters.items()) if v}

    seen: set[tuple[str, int]] = set()
    answered: dict[int, int] = {}
    correct: dict[int, int] = {}
    n_resp = n_corr = 0
    for r in responses:
        task = by_id.get(r.task_id)
        if task is None:
            raise ValueError(f"response references unknown task {r.task_id}")
        if task.is_control:
            continue
        key = (r.annotator_id, r.task_id)
        if key in seen:
            continue
        seen.add(key)
        c = task.host_cluster
        answered[c] = answered.get(c, 0) + 1
        hit = int(r.chosen_position == task.impostor_position)
        correct[c] = correct.get(c, 0) + hit
        n_resp += 1
        n_corr += hit

    acc = {c: correct.get(c, 0) / a for c, a in sorted(answered.items())}
    without = sorted(set(p) - set(acc))
    if not acc:
        nan = float("nan")
        return EvalReport(
            acc={}, p=p, avg_accuracy=nan, normalized_avg_accuracy=nan,
            normalized_delta=nan, n_responses=0, n_correct=0, answered={},
            clusters_without_responses=without, defined=False,
        )
    avg = float(np.mean(list(acc.values())))
    mass = sum(p[c] for c in acc)
    normalized = float(sum(p[c] / mass * acc[c] for c in acc))
    return EvalReport(
        acc=acc, p=p, avg_accuracy=avg, normalized_avg_accuracy=normalized,
        normalized_delta=avg - normalized, n_responses=n_resp, n_correct=n_corr,
        answered=dict(sorted(answered.items())),
        clusters_without_responses=without, defined=True,
    )


def simulate_random_annotator(
    tasks: list[ImpostorTask],
    seed: int = 0,
    annotator_id: str = "sim-random",
) -> list[Response]:
    """Uniform guess in 1..5 for every task."""
    if not tasks:
        raise ValueError("no tasks to answer")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x5A17]))
    now = time.time()
    return [
        Response(annotator_id, t.task_id, int(rng.integers(1, POSITIONS + 1)), now)
        for t in tasks
    ]


def response_accuracy(tasks: list[ImpostorTask], responses: list[Response]) -> float:
    by_id = {t.task_id: t for t in tasks}
    hits = [int(r.chosen_position == by_id[r.task_id].impostor_position) for r in responses]
    if not hits:
        raise ValueError("no responses")
    return float(np.mean(hits))


# ---------------------------------------------------------------------------
# persistence

def task_to_json(t: ImpostorTask) -> dict:
    d = {
        "task_id": t.task_id,
        "host_cluster": t.host_cluster,
        "host_images": list(t.host_images),
        "impostor_image": t.impostor_image,
        "impostor_position": t.impostor_position,
        "is_control": t.is_control,
    }
    if t.control_answer is not None:
        d["control_answer"] = t.control_answer
    return d


def task_from_json(d: dict) -> ImpostorTask:
    return ImpostorTask(
        task_id=int(d["task_id"]),
        host_cluster=int(d["host_cluster"]),
        host_images=tuple(int(x) for x in d["host_images"]),
        impostor_image=int(d["impostor_image"]),
        impostor_position=int(d["impostor_position"]),
        is_control=bool(d.get("is_control", False)),
        control_answer=d.get("control_answer"),
    )


def save_tasks(tasks: list[ImpostorTask], path: str | Path) -> None:
    with open(path, "w") as fh:
        for t in tasks:
            fh.write(json.dumps(task_to_json(t), sort_keys=True) + "\n")


def load_tasks(path: str | Path) -> list[ImpostorTask]:
    out = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(task_from_json(json.loads(line)))
    return out


def format_response_line(r: Response) -> str:
    return f"{r.annotator_id},{r.task_id},{r.chosen_position},{r.timestamp:.6f}\n"


def parse_response_log(path: str | Path) -> list[Response]:
    out = []
    with open(path) as fh:
        for ln, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 4:
                raise ValueError(f"{path}:{ln}: malformed response line")
            out.append(Response(parts[0], int(parts[1]), int(parts[2]), float(parts[3])))
    return out


def save_roster(roster: dict[str, list[int]], path: str | Path) -> None:
    with open(path, "w") as fh:
        for aid in sorted(roster):
            fh.write(json.dumps({"annotator_id": aid, "task_ids": roster[aid]}) + "\n")


def load_roster(path: str | Path) -> dict[str, list[int]]:
    out: dict[str, list[int]] = {}
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if line:
                d = json.loads(line)
                out[d["annotator_id"]] = [int(t) for t in d["task_ids"]]
    return out
