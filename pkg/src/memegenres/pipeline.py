"""End-to-end orchestration: ingest -> extract -> index -> affinity -> cluster.

Every stage persists its artifact into one run directory and is skipped on
rerun when that artifact already exists, so an interrupted run resumes where
it stopped and a finished run is a no-op. The exact configuration is written
next to the outputs, together with stage timings, library versions, and the
measured throughput in images/hour.

Configuration files are plain ``key = value`` lines (``#`` comments allowed);
any key can be overridden from the command line.
"""
from __future__ import annotations

import dataclasses
import json
import logging
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import PIL
import scipy

from . import __version__
from .affinity import (
    SparseAffinity,
    build_affinity,
    connected_components,
    load_affinity,
    sample_queries,
    save_affinity,
)
from .corpus import (
    CorpusSnapshot,
    dedup_exact,
    ingest_manifest,
    load_gray,
    load_snapshot,
    save_snapshot,
)
from .features import MAX_FEATURES, extract_features, load_features, save_features
from .index import (
    COARSE_K,
    DEFAULT_KNN,
    DEFAULT_NPROBE,
    SUBSPACES,
    TRAIN_SAMPLE,
    build_index,
    load_index,
    save_index,
    train_opq,
)
from .matching import TOP_J
from .spectral import (
    ClusterAssignment,
    cluster_graph,
    cluster_stats,
    kmeans,
    load_assignment,
    save_assignment,
    spectral_embed,
)

logger = logging.getLogger(__name__)

STAGES = ("ingest", "extract", "index", "affinity", "cluster")


class StageError(RuntimeError):
    """A pipeline stage failed; .stage names it."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class RunConfig:
    manifest: str = ""
    image_root: str = ""
    out_dir: str = ""
    seed: int = 0
    feature_cap: int = MAX_FEATURES          # 2500
    coarse_k: int = COARSE_K                 # 2048
    subspaces: int = SUBSPACES               # 8 (fixed by the index layout)
    knn: int = DEFAULT_KNN                   # 5
    nprobe: int = DEFAULT_NPROBE             # 32
    query_fraction: float = 0.1
    J: int = TOP_J                           # 100
    K: int = 20
    baseline: str = "none"                   # none | phash | embed
    embeddings_path: str = ""
    opq_iterations: int = 15
    train_sample: int = TRAIN_SAMPLE         # 200000
    tasks_per_cluster: int = 200

    def validate(self) -> None:
        if self.subspaces != SUBSPACES:
            raise ValueError(f"subspaces is fixed at {SUBSPACES} by the code layout")
        if self.baseline not in ("none", "phash", "embed"):
            raise ValueError("baseline must be one of: none, phash, embed")
        if not 0 < self.query_fraction <= 1:
            raise ValueError("query_fraction must be in (0, 1]")
        for name in ("feature_cap", "coarse_k", "knn", "nprobe", "J", "K",
                     "opq_iterations", "train_sample", "tasks_per_cluster"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")


def parse_config_text(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for ln, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {ln}: expected key = value, got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def config_from_mapping(mapping: dict[str, str], base: RunConfig | None = None) -> RunConfig:
    cfg = dataclasses.replace(base) if base else RunConfig()
    types = {f.name: f.type for f in dataclasses.fields(RunConfig)}
    for key, value in mapping.items():
        if key not in types:
            raise ValueError(f"unknown config key: {key}")
        t = types[key]
        if t == "int":
            setattr(cfg, key, int(value))
        elif t == "float":
            setattr(cfg, key, float(value))
        else:
            setattr(cfg, key, value)
    return cfg


def load_config(path: str | Path, overrides: dict[str, str] | None = None) -> RunConfig:
    cfg = config_from_mapping(parse_config_text(Path(path).read_text()))
    if overrides:
        cfg = config_from_mapping(overrides, base=cfg)
    cfg.validate()
    return cfg


def save_config(cfg: RunConfig, path: str | Path) -> None:
    lines = [f"{f.name} = {getattr(cfg, f.name)}" for f in dataclasses.fields(RunConfig)]
    Path(path).write_text("\n".join(lines) + "\n")


@dataclass
class RunResult:
    snapshot: CorpusSnapshot
    affinity: SparseAffinity | None
    assignment: ClusterAssignment | None
    stats: dict | None
    timings: dict[str, float] = field(default_factory=dict)


def _versions() -> dict[str, str]:
    return {
        "package": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "pillow": PIL.__version__,
    }


def run_pipeline(cfg: RunConfig, resume: bool = True, until: str | None = None) -> RunResult:
    """Execute the pipeline stages, optionally stopping after stage `until`."""
    cfg.validate()
    if until is not None and until not in STAGES:
        raise ValueError(f"unknown stage {until!r}; stages are {', '.join(STAGES)}")
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    save_config(cfg, out / "config.txt")
    timings: dict[str, float] = {}

    def staged(name, artifact: Path, build, load):
        t0 = time.time()
        try:
            if resume and artifact.exists():
                value = load()
                timings[name] = 0.0
                logger.info("stage %s: reused %s", name, artifact.name)
            else:
                value = build()
                timings[name] = time.time() - t0
                logger.info("stage %s: %.1fs", name, timings[name])
        except Exception as e:  # noqa: BLE001 - reporting which stage failed
            raise StageError(name, e) from e
        return value

    snap_path = out / "snapshot.csv"

    def build_snapshot():
        res = ingest_manifest(cfg.manifest, cfg.image_root)
        ded = dedup_exact(res.snapshot)
        save_snapshot(ded.snapshot, snap_path)
        return ded.snapshot

    snapshot = staged("ingest", snap_path, build_snapshot, lambda: load_snapshot(snap_path))
    if until == "ingest":
        return _finish(cfg, out, snapshot, None, None, timings)

    feat_path = out / "features.mgdf"

    def build_features():
        sets = []
        for rec in snapshot.records:
            img = load_gray(rec.path)
            sets.append(extract_features(img, image_id=rec.image_id, max_count=cfg.feature_cap))
        save_features(sets, feat_path)
        return {fs.image_id: fs for fs in sets}

    features = staged("extract", feat_path, build_features, lambda: load_features(feat_path))
    if until == "extract":
        return _finish(cfg, out, snapshot, None, None, timings)

    index_path = out / "index.mgdi"

    def build_idx():
        all_desc = np.vstack(
            [fs.descriptors for fs in features.values() if len(fs)]
        )
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 0x7A1]))
        if all_desc.shape[0] > cfg.train_sample:
            pick = rng.choice(all_desc.shape[0], size=cfg.train_sample, replace=False)
            sample = all_desc[np.sort(pick)]
        else:
            sample = all_desc
        opq = train_opq(sample, iterations=cfg.opq_iterations, seed=cfg.seed)
        idx = build_index(
            features, opq, coarse_k=cfg.coarse_k, seed=cfg.seed, train_sample=cfg.train_sample
        )
        save_index(idx, index_path)
        return idx

    index = staged("index", index_path, build_idx, lambda: load_index(index_path))
    if until == "index":
        return _finish(cfg, out, snapshot, None, None, timings)

    aff_path = out / "affinity.tsv"
    n_nodes = (max(r.image_id for r in snapshot.records) + 1) if snapshot.records else 0

    def build_aff():
        plan = sample_queries(snapshot, fraction=cfg.query_fraction, seed=cfg.seed)
        aff = build_affinity(
            index, features, plan, J=cfg.J, knn=cfg.knn, nprobe=cfg.nprobe, n_nodes=n_nodes
        )
        save_affinity(aff, aff_path, seed=cfg.seed, J=cfg.J)
        return aff

    affinity = staged("affinity", aff_path, build_aff, lambda: load_affinity(aff_path))
    if until == "affinity":
        return _finish(cfg, out, snapshot, affinity, None, timings)

    asg_path = out / "assignment.csv"

    def build_cluster():
        asg = cluster_graph(affinity, cfg.K, seed=cfg.seed)
        save_assignment(asg, asg_path)
        return asg

    assignment = staged(
        "cluster", asg_path, build_cluster, lambda: load_assignment(asg_path, K=cfg.K)
    )
    return _finish(cfg, out, snapshot, affinity, assignment, timings)


def _finish(cfg, out: Path, snapshot, affinity, assignment, timings) -> RunResult:
    stats = None
    if affinity is not None and assignment is not None:
        stats = compute_stats(affinity, assignment)
        (out / "stats.json").write_text(json.dumps(stats, indent=2) + "\n")

    wall = sum(timings.values())
    n_images = len(snapshot.records)
    meta = {
        "versions": _versions(),
        "config": {f.name: getattr(cfg, f.name) for f in dataclasses.fields(RunConfig)},
        "timings_s": {k: round(v, 3) for k, v in timings.items()},
        "n_images": n_images,
        "images_per_hour": round(n_images / wall * 3600.0, 1) if wall > 0 else None,
        "argv": sys.argv,
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2) + "\n")
    return RunResult(
        snapshot=snapshot,
        affinity=affinity,
        assignment=assignment,
        stats=stats,
        timings=timings,
    )


def compute_stats(affinity: SparseAffinity, assignment: ClusterAssignment) -> dict:
    comps = connected_components(affinity)
    deg = affinity.degrees()
    edged = int((deg > 0).sum())
    if all(c == assignment.K for c in assignment.assignments.values()):
        # nothing clusterable (e.g. a duplicate-free corpus under a
        # near-duplicate graph): report the empty shape instead of refusing
        return {
            "K": assignment.K,
            "sizes": {},
            "median_size": 0.0,
            "max_size": 0,
            "min_size": 0,
            "histogram": {},
            "overflow_size": len(assignment.assignments),
            "empty_clusters": list(range(assignment.K)),
            "n_edges": len(affinity.edges),
            "nodes_with_edges": edged,
            "largest_component": comps[0] if comps else 0,
            "component_sizes_gt1": [c for c in comps if c > 1][:50],
        }
    st = cluster_stats(assignment)
    return {
        "K": assignment.K,
        "sizes": {str(k): v for k, v in st.sizes.items()},
        "median_size": st.median_size,
        "max_size": st.max_size,
        "min_size": st.min_size,
        "histogram": {str(k): v for k, v in sorted(st.histogram.items())},
        "overflow_size": st.overflow_size,
        "empty_clusters": st.empty_clusters,
        "n_edges": len(affinity.edges),
        "nodes_with_edges": edged,
        "largest_component": comps[0] if comps else 0,
        "component_sizes_gt1": [c for c in comps if c > 1][:50],
    }


def k_sweep(
    affinity: SparseAffinity, k_values: list[int], seed: int = 0
) -> tuple[list[dict], list[str]]:
    """Cluster the same graph at several K; returns (stat rows, skip notes)."""
    deg = affinity.degrees()
    n_active = int((deg > 0).sum())
    rows: list[dict] = []
    notes: list[str] = []
    for K in k_values:
        if K > n_active:
            notes.append(f"K={K} skipped: exceeds {n_active} active nodes")
            continue
        emb = spectral_embed(affinity, K)
        asg = kmeans(emb, K, seed=seed)
        st = cluster_stats(asg)
        rows.append(
            {
                "K": K,
                "n_active": n_active,
                "min_size": st.min_size,
                "median_size": st.median_size,
                "max_size": st.max_size,
                "overflow_size": st.overflow_size,
                "n_empty": len(st.empty_clusters),
            }
        )
    return rows, notes


def sweep_to_csv(rows: list[dict]) -> str:
    header = ["K", "n_active", "min_size", "median_size", "max_size", "overflow_size", "n_empty"]
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(str(r[h]) for h in header))
    return "\n".join(lines) + "\n"
