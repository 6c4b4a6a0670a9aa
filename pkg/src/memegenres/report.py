"""Cluster reports: exemplar grids as a self-contained HTML page plus JSON.

Each cluster section shows up to ``top`` exemplar thumbnails. Exemplars are
the cluster members with the highest affinity-graph degree (ties broken by
image id), since well-connected nodes are the images the matcher kept
vouching for. Thumbnails are embedded as base64 so the report is a single
file. An empty overflow cluster is omitted entirely.
"""
from __future__ import annotations

import base64
import html
import io
import json
from pathlib import Path

import numpy as np
from PIL import Image

from .affinity import SparseAffinity
from .corpus import CorpusSnapshot
from .spectral import ClusterAssignment

TOP_EXEMPLARS = 9
THUMB_SIDE = 96

REPORT_SCHEMA = {
    "type": "object",
    "required": ["K", "n_images", "clusters"],
    "properties": {
        "K": {"type": "integer", "minimum": 1},
        "n_images": {"type": "integer", "minimum": 0},
        "clusters": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["cluster_id", "size", "exemplars", "source_tags"],
                "properties": {
                    "cluster_id": {"type": "integer", "minimum": 0},
                    "size": {"type": "integer", "minimum": 0},
                    "is_overflow": {"type": "boolean"},
                    "exemplars": {
                        "type": "array",
                        "items": {"type": "integer", "minimum": 0},
                    },
                    "source_tags": {
                        "type": "object",
                        "additionalProperties": {"type": "integer", "minimum": 0},
                    },
                },
                "additionalProperties": False,
            },
        },
    },
    "additionalProperties": False,
}


def _thumbnail_b64(path: str | Path) -> str | None:
    try:
        with Image.open(path) as im:
            im = im.convert("RGB")
            im.thumbnail((THUMB_SIDE, THUMB_SIDE))
            buf = io.BytesIO()
            im.save(buf, format="PNG")
        return base64.b64encode(buf.getvalue()).decode("ascii")
    except OSError:
        return None


def report_clusters(
    assignment: ClusterAssignment,
    snapshot: CorpusSnapshot,
    affinity: SparseAffinity | None = None,
    top: int = TOP_EXEMPLARS,
) -> tuple[str, dict]:
    """(HTML page, JSON document) describing every non-empty cluster."""
    by_id = snapshot.by_id()
    deg = (
        affinity.degrees()
        if affinity is not None
        else np.zeros(max(assignment.assignments, default=0) + 1, dtype=np.int64)
    )

    members: dict[int, list[int]] = {}
    for img, c in assignment.assignments.items():
        members.setdefault(c, []).append(img)

    clusters_json = []
    sections = []
    order = sorted(
        (c for c in members if c != assignment.K),
        key=lambda c: (-len(members[c]), c),
    )
    if members.get(assignment.K):
        order.append(assignment.K)  # non-empty overflow reported last

    for c in order:
        imgs = members[c]
        ranked = sorted(imgs, key=lambda i: (-int(deg[i]) if i < len(deg) else 0, i))
        exemplars = ranked[:top]
        tags: dict[str, int] = {}
        for i in imgs:
            rec = by_id.get(i)
            tag = rec.source_tag if rec else "?"
            tags[tag] = tags.get(tag, 0) + 1
        is_overflow = c == assignment.K
        clusters_json.append(
            {
                "cluster_id": c,
                "size": len(imgs),
                "is_overflow": is_overflow,
                "exemplars": exemplars,
                "source_tags": dict(sorted(tags.items())),
            }
        )
        cells = []
        for i in exemplars:
            rec = by_id.get(i)
            b64 = _thumbnail_b64(rec.path) if rec else None
            if b64:
                cells.append(
                    f'<figure><img src="data:image/png;base64,{b64}" alt="image {i}">'
                    f"<figcaption>#{i}</figcaption></figure>"
                )
            else:
                cells.append(f"<figure><figcaption>#{i} (missing)</figcaption></figure>")
        title = f"overflow (zero-edge nodes) — {len(imgs)} images" if is_overflow \
            else f"cluster {c} — {len(imgs)} images"
        tag_line = ", ".join(f"{html.escape(t)}: {n}" for t, n in sorted(tags.items()))
        sections.append(
            f"<section><h2>{html.escape(title)}</h2>"
            f"<p class=tags>{tag_line}</p><div class=grid>{''.join(cells)}</div></section>"
        )

    n_images = len(assignment.assignments)
    doc = {"K": assignment.K, "n_images": n_images, "clusters": clusters_json}
    page = (
        "<!doctype html><meta charset=utf-8><title>cluster report</title><style>"
        "body{font-family:sans-serif;margin:2rem;background:#fafafa}"
        ".grid{display:flex;flex-wrap:wrap;gap:8px}"
        "figure{margin:0;text-align:center;font-size:11px}"
        "img{display:block;border:1px solid #ccc;border-radius:3px}"
        "h2{margin:1.5rem 0 .3rem}.tags{color:#666;font-size:12px;margin:.2rem 0 .6rem}"
        "</style>"
        f"<h1>{n_images} images in {assignment.K} clusters</h1>"
        + "".join(sections)
    )
    return page, doc


def write_report(
    assignment: ClusterAssignment,
    snapshot: CorpusSnapshot,
    out_dir: str | Path,
    affinity: SparseAffinity | None = None,
    top: int = TOP_EXEMPLARS,
) -> tuple[Path, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    page, doc = report_clusters(assignment, snapshot, affinity=affinity, top=top)
    html_path = out / "clusters.html"
    json_path = out / "clusters.json"
    html_path.write_text(page)
    json_path.write_text(json.dumps(doc, indent=2) + "\n")
    return html_path, json_path
