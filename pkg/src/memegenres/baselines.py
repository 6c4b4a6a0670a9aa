"""Comparison feature extractors: 64-bit perceptual hash and imported global embeddings.

Each baseline turns the corpus into a SparseAffinity that feeds the same
spectral clustering as the localized-matching pipeline, so cluster quality can
be compared like-for-like.

The perceptual hash is the classic DCT construction: resize to 32x32, 2-D
DCT-II, keep the 8x8 block of lowest AC frequencies (rows/cols 1..8, which
excludes the DC term), and threshold each coefficient at the median of the 64.
Pairs within a Hamming radius are found with 4-block multi-index probing
rather than an all-pairs scan.

Global embeddings are never computed here — they are imported from a small
binary sidecar (magic ``MGDE``) so the package stays free of any neural-net
runtime.
"""
from __future__ import annotations

import itertools
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image
from scipy.fft import dctn

from .affinity import SparseAffinity

HASH_BITS = 64
HASH_SIZE = 8           # AC block side
RESIZE_SIDE = 32
MAX_HAMMING = 10
EMBED_KNN = 100
MIH_BLOCKS = 4
MIH_BLOCK_BITS = HASH_BITS // MIH_BLOCKS

EMBED_MAGIC = b"MGDE"
EMBED_VERSION = 1


@dataclass(frozen=True)
class PerceptualHash:
    image_id: int
    bits: int  # 64-bit value


def phash64(gray: np.ndarray, image_id: int = -1) -> PerceptualHash:
    """DCT perceptual hash of a 2-D intensity array (floats in [0,1] or uint8)."""
    arr = np.asarray(gray)
    if arr.ndim != 2:
        raise ValueError("phash64 expects a 2-D intensity array")
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    small = Image.fromarray(arr).resize((RESIZE_SIDE, RESIZE_SIDE), Image.LANCZOS)
    coeffs = dctn(np.asarray(small, dtype=np.float64), norm="ortho")
    block = coeffs[1 : HASH_SIZE + 1, 1 : HASH_SIZE + 1]
    med = np.median(block)
    bits = 0
    for v in block.ravel():  # row-major, first coefficient = most significant bit
        bits = (bits << 1) | (1 if v > med else 0)
    return PerceptualHash(image_id=image_id, bits=bits)


def hamming64(a: int, b: int) -> int:
    return int(bin(a ^ b).count("1"))


def _blocks_of(bits: int) -> tuple[int, ...]:
    """Split a 64-bit value into MIH_BLOCKS contiguous 16-bit blocks, high to low."""
    return tuple(
        (bits >> (HASH_BITS - (i + 1) * MIH_BLOCK_BITS)) & ((1 << MIH_BLOCK_BITS) - 1)
        for i in range(MIH_BLOCKS)
    )


def _probe_patterns(block: int, radius: int) -> list[int]:
    """All 16-bit patterns within Hamming distance `radius` of `block`."""
    out = [block]
    for r in range(1, radius + 1):
        for flips in itertools.combinations(range(MIH_BLOCK_BITS), r):
            x = block
            for i in flips:
                x ^= 1 << i
            out.append(x)
    return out


def affinity_from_hashes(
    hashes: list[PerceptualHash],
    max_distance: int = MAX_HAMMING,
    n_nodes: int | None = None,
) -> SparseAffinity:
    """Edges (64 - hamming)/64 for all pairs within `max_distance`.

    Candidate pairs come from multi-index probing: any two hashes within
    Hamming distance d share a 16-bit block within distance floor(d/4), so
    probing each block's table at that radius finds every qualifying pair.
    """
    if max_distance < 0 or max_distance >= HASH_BITS:
        raise ValueError("max_distance must be in [0, 63]")
    ids = [h.image_id for h in hashes]
    if len(set(ids)) != len(ids):
        raise ValueError("duplicate image ids in hash list")
    if n_nodes is None:
        n_nodes = max(ids) + 1 if ids else 0
    radius = max_distance // MIH_BLOCKS

    tables: list[dict[int, list[int]]] = [dict() for _ in range(MIH_BLOCKS)]
    by_id = {h.image_id: h.bits for h in hashes}
    for h in hashes:
        for t, blk in zip(tables, _blocks_of(h.bits)):
            t.setdefault(blk, []).append(h.image_id)

    pairs: set[tuple[int, int]] = set()
    for h in hashes:
        seen: set[int] = set()
        for t, blk in zip(tables, _blocks_of(h.bits)):
            for pattern in _probe_patterns(blk, radius):
                for other in t.get(pattern, ()):
                    if other == h.image_id or other in seen:
                        continue
                    seen.add(other)
                    if hamming64(h.bits, by_id[other]) <= max_distance:
                        pairs.add((min(h.image_id, other), max(h.image_id, other)))
    edges = [
        (i, j, (HASH_BITS - hamming64(by_id[i], by_id[j])) / HASH_BITS)
        for i, j in sorted(pairs)
    ]
    return SparseAffinity(n=n_nodes, edges=edges)


def affinity_from_embeddings(
    embeddings: dict[int, np.ndarray],
    knn: int = EMBED_KNN,
    expected_ids: list[int] | None = None,
    n_nodes: int | None = None,
) -> SparseAffinity:
    """Exact cosine k-NN graph; weight max(cosine, 0), symmetrized by max."""
    if expected_ids is not None:
        missing = sorted(set(expected_ids) - set(embeddings))
        if missing:
            raise ValueError(f"embeddings missing {len(missing)} image ids: {missing[:20]}")
    ids = np.array(sorted(embeddings), dtype=np.int64)
    if len(ids) == 0:
        raise ValueError("no embeddings given")
    x = np.stack([embeddings[i] for i in ids]).astype(np.float64)
    norms = np.linalg.norm(x, axis=1)
    if (norms <= 0).any() or not np.isfinite(x).all():
        raise ValueError("embeddings must be finite and non-zero")
    x /= norms[:, None]
    n = len(ids)
    if n_nodes is None:
        n_nodes = int(ids.max()) + 1
    k = min(knn, n - 1)

    weights: dict[tuple[int, int], float] = {}
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, n, chunk):
        sims = x[start : start + chunk] @ x.T
        for local, row in enumerate(sims):
            q = start + local
            row[q] = -np.inf  # exclude self
            top = np.argpartition(row, -k)[-k:]
            for t in top:
                w = float(row[t])
                if w <= 0.0:
                    continue
                key = (min(ids[q], ids[t]), max(ids[q], ids[t]))
                if w > weights.get(key, 0.0):
                    weights[key] = w
    edges = [(int(i), int(j), w) for (i, j), w in sorted(weights.items())]
    return SparseAffinity(n=n_nodes, edges=edges)


# ---------------------------------------------------------------------------
# persistence

def save_hashes(hashes: list[PerceptualHash], path: str | Path) -> None:
    with open(path, "w") as fh:
        fh.write("image_id,hash_hex\n")
        for h in sorted(hashes, key=lambda h: h.image_id):
            fh.write(f"{h.image_id},{h.bits:016x}\n")


def load_hashes(path: str | Path) -> list[PerceptualHash]:
    out = []
    with open(path) as fh:
        header = fh.readline().strip()
        if header != "image_id,hash_hex":
            raise ValueError(f"not a hash dump: {path}")
        for line in fh:
            img, hx = line.strip().split(",")
            out.append(PerceptualHash(image_id=int(img), bits=int(hx, 16)))
    return out


def save_embeddings(embeddings: dict[int, np.ndarray], path: str | Path) -> None:
    items = sorted(embeddings.items())
    if not items:
        raise ValueError("no embeddings to save")
    dim = len(np.ravel(items[0][1]))
    with open(path, "wb") as fh:
        fh.write(EMBED_MAGIC)
        fh.write(struct.pack("<HII", EMBED_VERSION, len(items), dim))
        for img, vec in items:
            v = np.ravel(np.asarray(vec, dtype=np.float32))
            if v.shape[0] != dim:
                raise ValueError("all embedding vectors must share one dimension")
            fh.write(struct.pack("<I", img))
            fh.write(v.tobytes())


def load_embeddings(path: str | Path) -> dict[int, np.ndarray]:
    """Read an MGDE sidecar; vectors come back L2-normalized float64."""
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != EMBED_MAGIC:
            raise ValueError(f"not an embedding sidecar: {path}")
        version, count, dim = struct.unpack("<HII", fh.read(10))
        if version != EMBED_VERSION:
            raise ValueError(f"unsupported sidecar version {version}")
        out: dict[int, np.ndarray] = {}
        for _ in range(count):
            (img,) = struct.unpack("<I", fh.read(4))
            vec = np.frombuffer(fh.read(4 * dim), dtype="<f4").astype(np.float64)
            if vec.shape[0] != dim:
                raise ValueError("truncated embedding sidecar")
            if not np.isfinite(vec).all():
                raise ValueError(f"non-finite embedding for image {img}")
            nrm = np.linalg.norm(vec)
            if nrm == 0:
                raise ValueError(f"zero embedding for image {img}")
            out[img] = vec / nrm
    return out
