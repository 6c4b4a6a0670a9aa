"""Quantized descriptor index: learned rotation + product codes in an inverted file.

train_opq learns a 64x64 orthonormal rotation and 8x256x8 codebooks by
alternating per-subspace k-means with an orthogonal Procrustes rotation
update. build_index clusters the rotated descriptors into coarse cells,
refits the product codebooks on the coarse residuals, and packs 8-byte codes
into per-cell inverted lists. search does asymmetric distance computation
against the probed cells only.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from ._kmeans import assign, kmeans_fit, lloyd
from .features import DESCRIPTOR_DIM, FeatureSet

logger = logging.getLogger(__name__)

SUBSPACES = 8
DIMS_PER_SUBSPACE = 8
CODEBOOK_SIZE = 256
COARSE_K = 2048
TRAIN_SAMPLE = 200_000
DEFAULT_KNN = 5
DEFAULT_NPROBE = 32

MGDI_MAGIC = b"MGDI"
MGDI_VERSION = 1


@dataclass
class OpqModel:
    rotation: np.ndarray   # (64, 64) orthonormal
    codebooks: np.ndarray  # (8, 256, 8)
    subspaces: int = SUBSPACES
    dims_per_subspace: int = DIMS_PER_SUBSPACE
    errors: Optional[list[float]] = None  # per-iteration mean squared reconstruction error


@dataclass
class OpqIvfIndex:
    opq: OpqModel
    coarse_codebook: np.ndarray          # (coarse_k, 64)
    list_image_ids: list[np.ndarray]     # per cell: (n,) int32
    list_ordinals: list[np.ndarray]      # per cell: (n,) int32
    list_codes: list[np.ndarray]         # per cell: (n, 8) uint8

    @property
    def coarse_k(self) -> int:
        return self.coarse_codebook.shape[0]

    @property
    def total_entries(self) -> int:
        return int(sum(len(a) for a in self.list_image_ids))


@dataclass
class DescriptorMatch:
    query_ordinal: int
    match_image_id: int
    match_keypoint_ordinal: int
    approx_distance: float


def _split(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[0], SUBSPACES, DIMS_PER_SUBSPACE)


def _encode(x_rot: np.ndarray, codebooks: np.ndarray) -> np.ndarray:
    """Nearest codebook entry per subspace -> (n, 8) uint8."""
    n = x_rot.shape[0]
    codes = np.empty((n, SUBSPACES), dtype=np.uint8)
    sub = _split(x_rot)
    for s in range(SUBSPACES):
        labels, _ = assign(np.ascontiguousarray(sub[:, s]), codebooks[s])
        codes[:, s] = labels.astype(np.uint8)
    return codes


def _decode(codes: np.ndarray, codebooks: np.ndarray) -> np.ndarray:
    out = np.empty((codes.shape[0], SUBSPACES, DIMS_PER_SUBSPACE))
    for s in range(SUBSPACES):
        out[:, s] = codebooks[s][codes[:, s]]
    return out.reshape(codes.shape[0], DESCRIPTOR_DIM)


def _reconstruction_mse(x_rot: np.ndarray, codes: np.ndarray, codebooks: np.ndarray) -> float:
    diff = x_rot - _decode(codes, codebooks)
    return float((diff * diff).sum() / x_rot.shape[0])


def train_opq(
    sample: np.ndarray,
    iterations: int = 20,
    seed: int = 0,
    learn_rotation: bool = True,
) -> OpqModel:
    """Alternating codebook / rotation optimization (non-parametric style).

    learn_rotation=False freezes the identity rotation, i.e. plain product
    quantization with the same training loop — used as the comparison branch.
    """
    x = np.asarray(sample, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != DESCRIPTOR_DIM:
        raise ValueError(f"expected (M, {DESCRIPTOR_DIM}) sample")
    if x.shape[0] < CODEBOOK_SIZE:
        raise ValueError(
            f"insufficient training sample: {x.shape[0]} < {CODEBOOK_SIZE} vectors"
        )
    if not np.isfinite(x).all():
        raise ValueError("training sample contains non-finite values")

    rot = np.eye(DESCRIPTOR_DIM)
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x09B]))
    codebooks = np.empty((SUBSPACES, CODEBOOK_SIZE, DIMS_PER_SUBSPACE))
    xr = x @ rot
    sub = _split(xr)
    for s in range(SUBSPACES):
        c, _, _ = kmeans_fit(np.ascontiguousarray(sub[:, s]), CODEBOOK_SIZE, rng, iterations=8)
        codebooks[s] = c

    errors: list[float] = []
    for _ in range(iterations):
        xr = x @ rot
        sub = _split(xr)
        # a few Lloyd steps from the previous codebooks keeps the objective monotone
        for s in range(SUBSPACES):
            c, _, _ = lloyd(np.ascontiguousarray(sub[:, s]), codebooks[s], iterations=2)
            codebooks[s] = c
        codes = _encode(xr, codebooks)
        if learn_rotation:
            y = _decode(codes, codebooks)
            u, _, vt = np.linalg.svd(x.T @ y)
            rot = u @ vt
            xr = x @ rot
            codes = _encode(xr, codebooks)
        errors.append(_reconstruction_mse(xr, codes, codebooks))
    return OpqModel(rotation=rot, codebooks=codebooks, errors=errors)


def _collect_descriptors(
    features: Mapping[int, FeatureSet] | Sequence[FeatureSet],
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if isinstance(features, Mapping):
        for key, fs in features.items():
            if key != fs.image_id:
                raise ValueError(
                    f"feature mapping key {key} != FeatureSet.image_id {fs.image_id}; "
                    "pass image_id when extracting"
                )
        sets = list(features.values())
    else:
        sets = list(features)
    sets.sort(key=lambda fs: fs.image_id)
    seen_ids = set()
    mats, ids, ords = [], [], []
    for fs in sets:
        if fs.image_id < 0:
            raise ValueError("FeatureSet.image_id must be a non-negative corpus id")
        if fs.image_id in seen_ids:
            raise ValueError(f"duplicate FeatureSet for image {fs.image_id}")
        seen_ids.add(fs.image_id)
        n = len(fs.keypoints)
        if n == 0:
            continue
        mats.append(np.asarray(fs.descriptors, dtype=np.float64))
        ids.append(np.full(n, fs.image_id, dtype=np.int32))
        ords.append(np.arange(n, dtype=np.int32))
    if not mats:
        return (
            np.zeros((0, DESCRIPTOR_DIM)),
            np.zeros(0, np.int32),
            np.zeros(0, np.int32),
        )
    return np.concatenate(mats), np.concatenate(ids), np.concatenate(ords)


def build_index(
    features: Mapping[int, FeatureSet] | Sequence[FeatureSet],
    opq: OpqModel,
    coarse_k: int = COARSE_K,
    seed: int = 0,
    train_sample: int = TRAIN_SAMPLE,
) -> OpqIvfIndex:
    """Coarse k-means over rotated descriptors; residuals PQ-coded into cells.

    The product codebooks are refit on coarse residuals here (keeping the
    trained rotation): codebooks fit to raw descriptors would mismatch the
    residual distribution they have to encode.
    """
    x, ids, ords = _collect_descriptors(features)
    if x.shape[0] < coarse_k:
        raise ValueError(
            f"{x.shape[0]} descriptors < coarse_k={coarse_k}; lower coarse_k to at most that"
        )
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0x1DE]))
    xr = x @ opq.rotation

    n_train = min(train_sample, xr.shape[0])
    pick = rng.choice(xr.shape[0], size=n_train, replace=False) if n_train < xr.shape[0] else np.arange(xr.shape[0])
    coarse, _, _ = kmeans_fit(xr[pick], coarse_k, rng, iterations=25)

    cell, _ = assign(xr, coarse)
    residual = xr - coarse[cell]

    codebooks = np.empty_like(opq.codebooks)
    rsub = _split(residual[pick])
    for s in range(SUBSPACES):
        c, _, _ = kmeans_fit(np.ascontiguousarray(rsub[:, s]), CODEBOOK_SIZE, rng, iterations=10)
        codebooks[s] = c
    codes = _encode(residual, codebooks)

    order = np.argsort(cell, kind="stable")
    cell_sorted = cell[order]
    bounds = np.searchsorted(cell_sorted, np.arange(coarse_k + 1))
    list_ids, list_ords, list_codes = [], [], []
    for c0 in range(coarse_k):
        sl = order[bounds[c0] : bounds[c0 + 1]]
        list_ids.append(ids[sl].copy())
        list_ords.append(ords[sl].copy())
        list_codes.append(codes[sl].copy())
    model = OpqModel(rotation=opq.rotation.copy(), codebooks=codebooks)
    return OpqIvfIndex(
        opq=model,
        coarse_codebook=coarse,
        list_image_ids=list_ids,
        list_ordinals=list_ords,
        list_codes=list_codes,
    )


def search(
    index: OpqIvfIndex,
    queries: np.ndarray,
    knn: int = DEFAULT_KNN,
    nprobe: int = DEFAULT_NPROBE,
    exclude_image: Optional[int] = None,
) -> list[list[DescriptorMatch]]:
    """ADC k-NN over the nprobe nearest coarse cells, per query row.

    Distances are Euclidean (sqrt of the subspace table sums), so downstream
    ratio tests see plain descriptor distances.
    """
    if knn < 1:
        raise ValueError("knn must be >= 1")
    nprobe = max(1, min(nprobe, index.coarse_k))
    q = np.asarray(queries, dtype=np.float64)
    if q.ndim != 2 or q.shape[1] != DESCRIPTOR_DIM:
        raise ValueError(f"expected (Q, {DESCRIPTOR_DIM}) queries")
    nq = q.shape[0]
    results: list[list[DescriptorMatch]] = [[] for _ in range(nq)]
    if nq == 0 or index.total_entries == 0:
        return results

    qr = q @ index.opq.rotation
    coarse = index.coarse_codebook
    d_coarse = (
        (qr * qr).sum(1)[:, None] - 2.0 * (qr @ coarse.T) + (coarse * coarse).sum(1)[None, :]
    )
    probe = np.argpartition(d_coarse, nprobe - 1, axis=1)[:, :nprobe] if nprobe < index.coarse_k else np.tile(
        np.arange(index.coarse_k), (nq, 1)
    )

    # group (query, cell) pairs by cell so each inverted list is scanned once per batch
    pair_q = np.repeat(np.arange(nq), nprobe)
    pair_c = probe.ravel()
    order = np.argsort(pair_c, kind="stable")
    pair_q = pair_q[order]
    pair_c = pair_c[order]
    cells, starts = np.unique(pair_c, return_index=True)
    starts = np.append(starts, len(pair_c))

    cand_d: list[list[np.ndarray]] = [[] for _ in range(nq)]
    cand_id: list[list[np.ndarray]] = [[] for _ in range(nq)]
    cand_ord: list[list[np.ndarray]] = [[] for _ in range(nq)]
    books = index.opq.codebooks
    sub_idx = np.arange(SUBSPACES)[:, None]
    for ci, cell in enumerate(cells):
        entry_ids = index.list_image_ids[cell]
        if len(entry_ids) == 0:
            continue
        qs = pair_q[starts[ci] : starts[ci + 1]]
        res = _split(qr[qs] - coarse[cell])              # (m, 8, 8)
        lut = ((res[:, :, None, :] - books[None]) ** 2).sum(-1)  # (m, 8, 256)
        codes = index.list_codes[cell]
        # gather: out[m, n] = sum_s lut[m, s, codes[n, s]]
        d = lut[:, sub_idx, codes.T].sum(axis=1)
        for qi, drow in zip(qs, d):
            cand_d[qi].append(drow)
            cand_id[qi].append(entry_ids)
            cand_ord[qi].append(index.list_ordinals[cell])

    for qi in range(nq):
        if not cand_d[qi]:
            continue
        d = np.concatenate(cand_d[qi])
        iid = np.concatenate(cand_id[qi])
        kord = np.concatenate(cand_ord[qi])
        if exclude_image is not None:
            keep = iid != exclude_image
            d, iid, kord = d[keep], iid[keep], kord[keep]
        if d.size == 0:
            continue
        k = min(knn, d.size)
        top = np.argpartition(d, k - 1)[:k]
        # deterministic ordering: distance, then image id, then ordinal
        top = top[np.lexsort((kord[top], iid[top], d[top]))]
        results[qi] = [
            DescriptorMatch(
                query_ordinal=qi,
                match_image_id=int(iid[t]),
                match_keypoint_ordinal=int(kord[t]),
                approx_distance=float(np.sqrt(max(d[t], 0.0))),
            )
            for t in top
        ]
    return results


# --- serialization ----------------------------------------------------------

def save_index(index: OpqIvfIndex, path: str | Path) -> None:
    with open(path, "wb") as fh:
        fh.write(MGDI_MAGIC)
        fh.write(struct.pack("<HI", MGDI_VERSION, index.coarse_k))
        fh.write(np.ascontiguousarray(index.opq.rotation, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(index.opq.codebooks, dtype="<f4").tobytes())
        fh.write(np.ascontiguousarray(index.coarse_codebook, dtype="<f4").tobytes())
        counts = np.array([len(a) for a in index.list_image_ids], dtype="<u8")
        fh.write(counts.tobytes())
        for ids, ords, codes in zip(index.list_image_ids, index.list_ordinals, index.list_codes):
            fh.write(np.ascontiguousarray(ids, dtype="<i4").tobytes())
            fh.write(np.ascontiguousarray(ords, dtype="<i4").tobytes())
            fh.write(np.ascontiguousarray(codes, dtype="u1").tobytes())


def load_index(path: str | Path) -> OpqIvfIndex:
    with open(path, "rb") as fh:
        if fh.read(4) != MGDI_MAGIC:
            raise ValueError(f"not an index file: {path}")
        version, coarse_k = struct.unpack("<HI", fh.read(6))
        if version != MGDI_VERSION:
            raise ValueError(f"unsupported index version {version}")
        d = DESCRIPTOR_DIM
        rot = np.frombuffer(fh.read(4 * d * d), dtype="<f4").reshape(d, d).astype(np.float64)
        books = (
            np.frombuffer(fh.read(4 * SUBSPACES * CODEBOOK_SIZE * DIMS_PER_SUBSPACE), dtype="<f4")
            .reshape(SUBSPACES, CODEBOOK_SIZE, DIMS_PER_SUBSPACE)
            .astype(np.float64)
        )
        coarse = np.frombuffer(fh.read(4 * coarse_k * d), dtype="<f4").reshape(coarse_k, d).astype(np.float64)
        counts = np.frombuffer(fh.read(8 * coarse_k), dtype="<u8")
        list_ids, list_ords, list_codes = [], [], []
        for n in counts:
            n = int(n)
            list_ids.append(np.frombuffer(fh.read(4 * n), dtype="<i4").copy())
            list_ords.append(np.frombuffer(fh.read(4 * n), dtype="<i4").copy())
            list_codes.append(np.frombuffer(fh.read(SUBSPACES * n), dtype="u1").reshape(n, SUBSPACES).copy())
    return OpqIvfIndex(
        opq=OpqModel(rotation=rot, codebooks=books),
        coarse_codebook=coarse,
        list_image_ids=list_ids,
        list_ordinals=list_ords,
        list_codes=list_codes,
    )
