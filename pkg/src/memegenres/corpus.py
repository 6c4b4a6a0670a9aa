"""Corpus ingest: manifest loading, stable ids, exact-byte dedup, snapshots."""
from __future__ import annotations

import csv
import hashlib
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from PIL import Image

logger = logging.getLogger(__name__)

# images larger than this on either side are downscaled before extraction
MAX_SIDE = 1024


@dataclass
class ImageRecord:
    image_id: int
    path: str
    content_hash: str  # sha256 hex
    source_tag: str
    width: int
    height: int


@dataclass
class CorpusSnapshot:
    records: list[ImageRecord]
    created_at: float
    manifest_digest: str

    def __post_init__(self):
        self.records.sort(key=lambda r: r.image_id)

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[int, ImageRecord]:
        return {r.image_id: r for r in self.records}


@dataclass
class IngestResult:
    snapshot: CorpusSnapshot
    skipped: list[tuple[str, str]] = field(default_factory=list)  # (path, reason)


@dataclass
class DedupResult:
    snapshot: CorpusSnapshot
    id_map: dict[int, int] = field(default_factory=dict)  # old id -> new id


def load_gray(path: str | Path) -> np.ndarray:
    """Decode to 8-bit grayscale, downscaling so max(w, h) <= MAX_SIDE."""
    with Image.open(path) as im:
        im = im.convert("L")
        w, h = im.size
        if max(w, h) > MAX_SIDE:
            s = MAX_SIDE / max(w, h)
            im = im.resize((max(1, round(w * s)), max(1, round(h * s))), Image.Resampling.LANCZOS)
        return np.asarray(im, dtype=np.uint8)


def ingest_manifest(manifest_path: str | Path, image_root: str | Path) -> IngestResult:
    """Read a `path,source_tag` CSV manifest and build a snapshot.

    Ids are dense in manifest order over the files that decode; undecodable
    files go to the skip report instead of aborting the run.
    """
    manifest_path = Path(manifest_path)
    image_root = Path(image_root)
    if not manifest_path.is_file():
        raise FileNotFoundError(f"manifest not found: {manifest_path}")
    raw = manifest_path.read_bytes()
    digest = hashlib.sha256(raw).hexdigest()

    rows: list[tuple[str, str]] = []
    reader = csv.DictReader(raw.decode("utf-8").splitlines())
    if reader.fieldnames is None or "path" not in reader.fieldnames:
        raise ValueError("manifest must be a CSV with a 'path' column")
    for row in reader:
        rows.append((row["path"], row.get("source_tag") or ""))
    if not rows:
        raise ValueError("empty corpus: manifest lists no files")

    records: list[ImageRecord] = []
    skipped: list[tuple[str, str]] = []
    next_id = 0
    for rel, tag in rows:
        full = image_root / rel
        try:
            data = full.read_bytes()
            with Image.open(full) as im:
                im.load()
                w, h = im.size
        except Exception as exc:  # undecodable or unreadable: skip, don't abort
            logger.warning("skipping %s: %s", rel, exc)
            skipped.append((rel, str(exc)))
            continue
        records.append(
            ImageRecord(
                image_id=next_id,
                path=str(full),
                content_hash=hashlib.sha256(data).hexdigest(),
                source_tag=tag,
                width=w,
                height=h,
            )
        )
        next_id += 1
    if not records:
        raise ValueError("empty corpus: no decodable images")
    snap = CorpusSnapshot(records=records, created_at=time.time(), manifest_digest=digest)
    return IngestResult(snapshot=snap, skipped=skipped)


def dedup_exact(snapshot: CorpusSnapshot) -> DedupResult:
    """Drop exact byte-copies (same content hash); first occurrence wins.

    Ids are re-densified; the returned map sends every old id to the id that
    now represents its bytes.
    """
    seen: dict[str, int] = {}  # hash -> new id
    out: list[ImageRecord] = []
    id_map: dict[int, int] = {}
    for rec in snapshot.records:
        if rec.content_hash in seen:
            id_map[rec.image_id] = seen[rec.content_hash]
            continue
        new_id = len(out)
        seen[rec.content_hash] = new_id
        id_map[rec.image_id] = new_id
        out.append(
            ImageRecord(
                image_id=new_id,
                path=rec.path,
                content_hash=rec.content_hash,
                source_tag=rec.source_tag,
                width=rec.width,
                height=rec.height,
            )
        )
    snap = CorpusSnapshot(
        records=out, created_at=snapshot.created_at, manifest_digest=snapshot.manifest_digest
    )
    return DedupResult(snapshot=snap, id_map=id_map)


def save_snapshot(snapshot: CorpusSnapshot, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(f"#corpus.snapshot created_at={snapshot.created_at!r} manifest={snapshot.manifest_digest}\n")
        writer = csv.writer(fh)
        for r in snapshot.records:
            writer.writerow([r.image_id, r.path, r.content_hash, r.source_tag, r.width, r.height])


def load_snapshot(path: str | Path) -> CorpusSnapshot:
    with open(path, newline="", encoding="utf-8") as fh:
        header = fh.readline()
        if not header.startswith("#corpus.snapshot"):
            raise ValueError(f"not a corpus snapshot: {path}")
        parts = dict(p.split("=", 1) for p in header.strip().split()[1:])
        records = []
        for row in csv.reader(fh):
            records.append(
                ImageRecord(
                    image_id=int(row[0]),
                    path=row[1],
                    content_hash=row[2],
                    source_tag=row[3],
                    width=int(row[4]),
                    height=int(row[5]),
                )
            )
    return CorpusSnapshot(
        records=records,
        created_at=float(parts["created_at"]),
        manifest_digest=parts["manifest"],
    )
