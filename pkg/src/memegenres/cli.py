"""Command-line entry point.

Subcommands mirror the pipeline stages plus evaluation and reporting:

    ingest     read a manifest, decode + dedup images, write the snapshot
    extract    local features for every snapshot image
    index      train the quantizer and build the descriptor index
    affinity   sampled match queries -> weighted graph
    cluster    spectral embedding + k-means -> assignment.csv
    baseline   perceptual-hash or imported-embedding affinity graph
    eval-gen   impostor-host tasks from an assignment
    eval-serve HTTP API (and optional static UI) for live annotation
    eval-score offline scoring of a response log
    ksweep     cluster the same graph at several K, tabulate sizes
    report     exemplar-grid HTML + JSON for an assignment

Stage commands are resumable: artifacts already present in --out-dir are
reused, so `memegenres cluster -c run.cfg` builds whatever is missing.

Exit codes: 0 success, 1 usage/config error, 2 stage failure.
``MEMEGENRES_THREADS`` caps the BLAS/OpenMP thread pools (set before
numerical libraries load).
"""
from __future__ import annotations

import argparse
import os
import sys

THREAD_ENV = "MEMEGENRES_THREADS"


class UsageError(ValueError):
    """Bad flags or config — the user must fix the invocation."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # usage errors exit 1, not argparse's default 2
        self.print_usage(sys.stderr)
        raise SystemExit(self.prog.split()[0] + ": error: " + message) from None


def _apply_thread_env() -> None:
    threads = os.environ.get(THREAD_ENV)
    if not threads:
        return
    if not threads.isdigit() or int(threads) < 1:
        raise UsageError(f"{THREAD_ENV} must be a positive integer, got {threads!r}")
    for var in (
        "OMP_NUM_THREADS",
        "OPENBLAS_NUM_THREADS",
        "MKL_NUM_THREADS",
        "NUMEXPR_NUM_THREADS",
        "VECLIB_MAXIMUM_THREADS",
    ):
        os.environ.setdefault(var, threads)


def _config_from_args(args) -> "RunConfig":
    from .pipeline import RunConfig, config_from_mapping, load_config

    overrides: dict[str, str] = {}
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects key=value, got {item!r}")
        key, value = item.split("=", 1)
        overrides[key.strip()] = value.strip()
    for flag in ("manifest", "image_root", "out_dir", "seed", "K"):
        v = getattr(args, flag, None)
        if v is not None:
            overrides[flag] = str(v)
    try:
        if args.config:
            cfg = load_config(args.config, overrides)
        else:
            cfg = config_from_mapping(overrides, base=RunConfig())
            cfg.validate()
    except (ValueError, FileNotFoundError) as e:
        raise UsageError(str(e)) from e
    if not cfg.out_dir:
        raise UsageError("an output directory is required (--out-dir or config out_dir)")
    return cfg


def _add_common(p: argparse.ArgumentParser, need_manifest: bool = False) -> None:
    p.add_argument("-c", "--config", help="key = value config file")
    p.add_argument("--set", action="append", metavar="KEY=VALUE",
                   help="override one config key (repeatable)")
    p.add_argument("--out-dir", help="run directory for artifacts")
    p.add_argument("--seed", type=int, help="global random seed")
    if need_manifest:
        p.add_argument("--manifest", help="corpus manifest CSV (path,source_tag)")
        p.add_argument("--image-root", dest="image_root",
                       help="directory manifest paths are relative to")


def _graph_paths(out_dir: str, graph: str) -> tuple[str, str]:
    """(affinity file, assignment file) for the chosen graph flavor."""
    from pathlib import Path

    out = Path(out_dir)
    if graph == "mgd":
        return str(out / "affinity.tsv"), str(out / "assignment.csv")
    return str(out / f"affinity-{graph}.tsv"), str(out / f"assignment-{graph}.csv")


def _stage_cmd(args, until: str):
    from .pipeline import run_pipeline

    cfg = _config_from_args(args)
    result = run_pipeline(cfg, resume=not getattr(args, "fresh", False), until=until)
    if result.stats:
        import json

        print(json.dumps(result.stats, indent=2))
    return 0


def cmd_ingest(args):
    return _stage_cmd(args, "ingest")


def cmd_extract(args):
    return _stage_cmd(args, "extract")


def cmd_index(args):
    return _stage_cmd(args, "index")


def cmd_affinity(args):
    return _stage_cmd(args, "affinity")


def cmd_cluster(args):
    import json
    from pathlib import Path

    from .affinity import load_affinity
    from .pipeline import compute_stats, run_pipeline
    from .spectral import cluster_graph, save_assignment

    cfg = _config_from_args(args)
    if args.graph == "mgd":
        result = run_pipeline(cfg, resume=not args.fresh, until="cluster")
        print(json.dumps(result.stats, indent=2))
        return 0
    aff_path, asg_path = _graph_paths(cfg.out_dir, args.graph)
    if not Path(aff_path).exists():
        raise UsageError(f"{aff_path} not found; run `memegenres baseline` first")
    aff = load_affinity(aff_path)
    asg = cluster_graph(aff, cfg.K, seed=cfg.seed)
    save_assignment(asg, asg_path)
    print(json.dumps(compute_stats(aff, asg), indent=2))
    return 0


def cmd_baseline(args):
    from pathlib import Path

    from .affinity import save_affinity
    from .baselines import (
        affinity_from_embeddings,
        affinity_from_hashes,
        load_embeddings,
        phash64,
        save_hashes,
    )
    from .corpus import load_gray, load_snapshot

    cfg = _config_from_args(args)
    out = Path(cfg.out_dir)
    snap_path = out / "snapshot.csv"
    if not snap_path.exists():
        raise UsageError(f"{snap_path} not found; run `memegenres ingest` first")
    snapshot = load_snapshot(snap_path)
    n_nodes = max(r.image_id for r in snapshot.records) + 1
    kind = args.kind or cfg.baseline
    if kind == "phash":
        hashes = [phash64(load_gray(r.path), r.image_id) for r in snapshot.records]
        save_hashes(hashes, out / "hashes.csv")
        aff = affinity_from_hashes(hashes, max_distance=args.max_distance, n_nodes=n_nodes)
        aff_path, _ = _graph_paths(cfg.out_dir, "phash")
    elif kind == "embed":
        emb_path = args.embeddings or cfg.embeddings_path
        if not emb_path:
            raise UsageError("embed baseline needs --embeddings FILE")
        emb = load_embeddings(emb_path)
        aff = affinity_from_embeddings(
            emb,
            knn=args.embed_knn,
            expected_ids=[r.image_id for r in snapshot.records],
            n_nodes=n_nodes,
        )
        aff_path, _ = _graph_paths(cfg.out_dir, "embed")
    else:
        raise UsageError("baseline kind must be phash or embed (flag or config `baseline`)")
    save_affinity(aff, aff_path, seed=cfg.seed, J=cfg.J)
    print(f"{aff_path}: {len(aff.edges)} edges over {aff.n} nodes")
    return 0


def cmd_eval_gen(args):
    from pathlib import Path

    from .evaluation import generate_tasks, save_tasks
    from .spectral import load_assignment

    cfg = _config_from_args(args)
    _, asg_path = _graph_paths(cfg.out_dir, args.graph)
    if not Path(asg_path).exists():
        raise UsageError(f"{asg_path} not found; run `memegenres cluster` first")
    assignment = load_assignment(asg_path, K=cfg.K)
    tasks, skipped = generate_tasks(
        assignment, tasks_per_cluster=cfg.tasks_per_cluster, seed=cfg.seed
    )
    eval_dir = Path(args.eval_dir)
    eval_dir.mkdir(parents=True, exist_ok=True)
    save_tasks(tasks, eval_dir / "tasks.jsonl")
    print(f"{len(tasks)} tasks -> {eval_dir / 'tasks.jsonl'}")
    for cid, size in skipped:
        print(f"skipped cluster {cid}: only {size} images (< 4)")
    return 0


def cmd_eval_serve(args):
    from pathlib import Path

    import uvicorn

    from .corpus import load_snapshot
    from .server import create_app
    from .spectral import load_assignment

    cfg = _config_from_args(args)
    out = Path(cfg.out_dir)
    snapshot = load_snapshot(out / "snapshot.csv")
    _, asg_path = _graph_paths(cfg.out_dir, args.graph)
    assignment = load_assignment(asg_path, K=cfg.K)
    app = create_app(
        args.eval_dir,
        {r.image_id: r.path for r in snapshot.records},
        assignment,
        seed=cfg.seed,
        ui_dir=args.ui,
    )
    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


def cmd_eval_score(args):
    import json
    from pathlib import Path

    from .evaluation import (
        assemble_sessions,
        load_roster,
        load_tasks,
        parse_response_log,
        qualify_annotators,
        score,
    )
    from .spectral import load_assignment

    cfg = _config_from_args(args)
    _, asg_path = _graph_paths(cfg.out_dir, args.graph)
    assignment = load_assignment(asg_path, K=cfg.K)
    eval_dir = Path(args.eval_dir)
    tasks = load_tasks(eval_dir / "tasks.jsonl")
    controls_path = eval_dir / "controls.jsonl"
    if controls_path.exists():
        tasks = tasks + load_tasks(controls_path)
    responses_path = Path(args.responses) if args.responses else eval_dir / "responses.log"
    if not responses_path.exists():
        raise UsageError(f"no response log at {responses_path}")
    responses = parse_response_log(responses_path)
    roster_path = eval_dir / "sessions.jsonl"
    roster = load_roster(roster_path) if roster_path.exists() else None
    sessions = assemble_sessions(tasks, responses, roster=roster)
    qualified, discarded = qualify_annotators(sessions)
    q_names = {s.annotator_id for s in qualified}
    rep = score(tasks, [r for r in responses if r.annotator_id in q_names], assignment)
    doc = rep.to_json()
    doc["n_sessions"] = len(sessions)
    doc["n_qualified"] = len(qualified)
    doc["n_discarded"] = len(discarded)
    doc["discarded_annotators"] = sorted(s.annotator_id for s in discarded)
    text = json.dumps(doc, indent=2)
    if args.out:
        Path(args.out).write_text(text + "\n")
        print(f"report -> {args.out}")
    else:
        print(text)
    return 0


def cmd_ksweep(args):
    import json
    from pathlib import Path

    from .affinity import load_affinity
    from .pipeline import k_sweep, sweep_to_csv

    cfg = _config_from_args(args)
    aff_path, _ = _graph_paths(cfg.out_dir, args.graph)
    if not Path(aff_path).exists():
        raise UsageError(f"{aff_path} not found; build the graph first")
    try:
        k_values = [int(v) for v in args.k_values.split(",") if v.strip()]
    except ValueError as e:
        raise UsageError(f"--k-values expects comma-separated integers: {e}") from e
    if not k_values:
        raise UsageError("--k-values is empty")
    aff = load_affinity(aff_path)
    rows, notes = k_sweep(aff, k_values, seed=cfg.seed)
    out = Path(cfg.out_dir)
    suffix = "" if args.graph == "mgd" else f"-{args.graph}"
    csv_path = out / f"ksweep{suffix}.csv"
    csv_path.write_text(sweep_to_csv(rows))
    (out / f"ksweep{suffix}.json").write_text(json.dumps({"rows": rows, "notes": notes}, indent=2) + "\n")
    print(sweep_to_csv(rows), end="")
    for n in notes:
        print(n, file=sys.stderr)
    return 0


def cmd_report(args):
    from pathlib import Path

    from .affinity import load_affinity
    from .corpus import load_snapshot
    from .report import write_report
    from .spectral import load_assignment

    cfg = _config_from_args(args)
    out = Path(cfg.out_dir)
    snapshot = load_snapshot(out / "snapshot.csv")
    aff_path, asg_path = _graph_paths(cfg.out_dir, args.graph)
    assignment = load_assignment(asg_path, K=cfg.K)
    affinity = load_affinity(aff_path) if Path(aff_path).exists() else None
    html_path, json_path = write_report(
        assignment, snapshot, out, affinity=affinity, top=args.top
    )
    print(f"{html_path}\n{json_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="memegenres", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("-v", "--verbose", action="store_true", help="stage progress logs")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, help_, need_manifest=False, graph=False, fresh=False):
        p = sub.add_parser(name, help=help_)
        _add_common(p, need_manifest=need_manifest)
        if graph:
            p.add_argument("--graph", choices=("mgd", "phash", "embed"), default="mgd",
                           help="which affinity graph / assignment to use")
        if fresh:
            p.add_argument("--fresh", action="store_true",
                           help="rebuild even if artifacts exist")
        p.set_defaults(handler=fn)
        return p

    add("ingest", cmd_ingest, "decode + dedup corpus into a snapshot",
        need_manifest=True, fresh=True)
    add("extract", cmd_extract, "local features for all snapshot images",
        need_manifest=True, fresh=True)
    add("index", cmd_index, "train quantizer, build descriptor index",
        need_manifest=True, fresh=True)
    add("affinity", cmd_affinity, "sampled queries -> weighted match graph",
        need_manifest=True, fresh=True)
    p = add("cluster", cmd_cluster, "spectral embedding + k-means assignment",
            need_manifest=True, graph=True, fresh=True)
    p.add_argument("-K", type=int, dest="K", help="cluster count")

    p = add("baseline", cmd_baseline, "build a comparison affinity graph")
    p.add_argument("--kind", choices=("phash", "embed"),
                   help="which baseline (defaults to config `baseline`)")
    p.add_argument("--max-distance", type=int, default=10,
                   help="Hamming threshold for phash edges")
    p.add_argument("--embeddings", help="embedding sidecar file (embed baseline)")
    p.add_argument("--embed-knn", type=int, default=100,
                   help="neighbors per image for the embed baseline")

    p = add("eval-gen", cmd_eval_gen, "generate impostor-host tasks", graph=True)
    p.add_argument("--eval-dir", required=True, help="directory for tasks + responses")
    p.add_argument("-K", type=int, dest="K", help="cluster count of the assignment")

    p = add("eval-serve", cmd_eval_serve, "serve tasks + images over HTTP", graph=True)
    p.add_argument("--eval-dir", required=True)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.add_argument("--ui", help="directory of built UI assets to serve at /")
    p.add_argument("-K", type=int, dest="K", help="cluster count of the assignment")

    p = add("eval-score", cmd_eval_score, "score a response log", graph=True)
    p.add_argument("--eval-dir", required=True)
    p.add_argument("--responses", help="response log (default: eval dir's responses.log)")
    p.add_argument("--out", help="write the JSON report here instead of stdout")
    p.add_argument("-K", type=int, dest="K", help="cluster count of the assignment")

    p = add("ksweep", cmd_ksweep, "cluster at several K, tabulate sizes", graph=True)
    p.add_argument("--k-values", required=True, help="comma-separated K list, e.g. 10,50,100")

    p = add("report", cmd_report, "exemplar-grid HTML + JSON report", graph=True)
    p.add_argument("--top", type=int, default=9, help="exemplars per cluster")
    p.add_argument("-K", type=int, dest="K", help="cluster count of the assignment")

    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        _apply_thread_env()
        parser = build_parser()
        args = parser.parse_args(argv)
        if args.verbose:
            import logging

            logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
        return args.handler(args)
    except SystemExit as e:  # argparse --help exits 0; our _Parser raises str codes
        if isinstance(e.code, str):
            print(e.code, file=sys.stderr)
            return 1
        return e.code if isinstance(e.code, int) else 0
    except UsageError as e:
        print(f"memegenres: error: {e}", file=sys.stderr)
        return 1
    except KeyboardInterrupt:
        return 130
    except Exception as e:  # noqa: BLE001 - anything else is a stage failure
        print(f"memegenres: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
