"""Local features: Fast-Hessian (SURF-style) detection and 64-d descriptors.

Box-filter responses over an integral image, 3x3x3 non-max suppression with
sub-pixel refinement, Haar-wavelet dominant orientation, and the classic
4x4 x (sum dx, sum |dx|, sum dy, sum |dy|) descriptor, L2-normalized.
Implemented directly on numpy; no external CV dependency.
"""
from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np
from scipy.ndimage import maximum_filter

logger = logging.getLogger(__name__)

MAX_FEATURES = 2500          # per-image descriptor cap
N_OCTAVES = 3
N_INTERVALS = 4
BASE_FILTER = 9              # smallest box filter; scale = 1.2 * size / 9
HESSIAN_THRESHOLD = 1e-5   # low absolute floor; the cap does the real selection
DESCRIPTOR_DIM = 64

MGDF_MAGIC = b"MGDF"
MGDF_VERSION = 1


@dataclass
class IntegralImage:
    sums: np.ndarray  # (h+1, w+1) int64, zero first row/col
    height: int
    width: int


@dataclass
class Keypoint:
    x: float
    y: float
    scale: float
    orientation: float  # radians in [0, 2pi)
    response: float


@dataclass
class FeatureSet:
    image_id: int
    keypoints: list[Keypoint] = field(default_factory=list)
    descriptors: np.ndarray = field(default_factory=lambda: np.zeros((0, DESCRIPTOR_DIM), np.float32))

    def __len__(self) -> int:
        return len(self.keypoints)


def integral_image(gray: np.ndarray) -> IntegralImage:
    """Prefix sums with a zero border row/column: sums[i, j] = sum of gray[:i, :j]."""
    gray = np.asarray(gray)
    if gray.ndim != 2 or gray.shape[0] < 1 or gray.shape[1] < 1:
        raise ValueError("expected a non-empty 2-D intensity array")
    h, w = gray.shape
    sums = np.zeros((h + 1, w + 1), dtype=np.int64)
    np.cumsum(np.cumsum(gray.astype(np.int64), axis=0), axis=1, out=sums[1:, 1:])
    return IntegralImage(sums=sums, height=h, width=w)


def _box(sums: np.ndarray, r0, c0, r1, c1):
    """Sum over the half-open pixel window [r0, r1) x [c0, c1), clipped to the image."""
    h, w = sums.shape
    r0 = np.clip(r0, 0, h - 1)
    r1 = np.clip(r1, 0, h - 1)
    c0 = np.clip(c0, 0, w - 1)
    c1 = np.clip(c1, 0, w - 1)
    return sums[r1, c1] - sums[r0, c1] - sums[r1, c0] + sums[r0, c0]


def box_sum(integral: IntegralImage, r0: int, c0: int, r1: int, c1: int) -> int:
    """Inclusive-exclusive box sum; the O(1) query the integral image exists for."""
    return int(_box(integral.sums, r0, c0, r1, c1))


def _filter_sizes(octave: int) -> list[int]:
    return [3 * ((1 << (octave + 1)) * (i + 1) + 1) for i in range(N_INTERVALS)]


def _response_layer(ii: IntegralImage, size: int, step: int) -> np.ndarray:
    """Normalized Fast-Hessian determinant on the sampled grid (0 outside the valid border)."""
    sums = ii.sums
    lobe = size // 3
    b = size // 2
    m = (lobe - 1) // 2
    rows = np.arange(0, ii.height, step)
    cols = np.arange(0, ii.width, step)
    resp = np.zeros((len(rows), len(cols)), dtype=np.float64)
    rv = (rows >= b) & (rows < ii.height - b)
    cv = (cols >= b) & (cols < ii.width - b)
    if not rv.any() or not cv.any():
        return resp
    r = rows[rv][:, None]
    c = cols[cv][None, :]

    dyy = _box(sums, r - b, c - (lobe - 1), r + b + 1, c + lobe) - 3.0 * _box(
        sums, r - m, c - (lobe - 1), r + m + 1, c + lobe
    )
    dxx = _box(sums, r - (lobe - 1), c - b, r + lobe, c + b + 1) - 3.0 * _box(
        sums, r - (lobe - 1), c - m, r + lobe, c + m + 1
    )
    dxy = (
        _box(sums, r - lobe, c + 1, r, c + 1 + lobe)
        + _box(sums, r + 1, c - lobe, r + 1 + lobe, c)
        - _box(sums, r - lobe, c - lobe, r, c)
        - _box(sums, r + 1, c + 1, r + 1 + lobe, c + 1 + lobe)
    )
    inv = 1.0 / (size * size * 255.0)
    dxx = dxx * inv
    dyy = dyy * inv
    dxy = dxy * inv
    det = dxx * dyy - 0.81 * dxy * dxy
    out = np.zeros_like(resp)
    out[np.ix_(rv, cv)] = det
    return out


def detect_keypoints(
    integral: IntegralImage,
    max_count: int = MAX_FEATURES,
    threshold: float = HESSIAN_THRESHOLD,
) -> list[Keypoint]:
    """Fast-Hessian keypoints: 3 octaves x 4 intervals, 3x3x3 NMS, sub-pixel refinement.

    The absolute threshold is a low floor; ranking by response and keeping the
    top max_count is what actually bounds the output (cap semantics).
    """
    if integral.height < 15 or integral.width < 15:
        return []
    found: list[tuple[float, float, float, float]] = []  # (response, x, y, scale)
    for octave in range(N_OCTAVES):
        step = 1 << octave
        sizes = _filter_sizes(octave)
        size_step = sizes[1] - sizes[0]
        stack = np.stack([_response_layer(integral, s, step) for s in sizes])
        if stack.shape[1] < 3 or stack.shape[2] < 3:
            continue
        maxf = maximum_filter(stack, size=3, mode="constant", cval=0.0)
        peaks = (stack == maxf) & (stack > threshold)
        peaks[0] = False
        peaks[-1] = False
        peaks[:, 0, :] = peaks[:, -1, :] = False
        peaks[:, :, 0] = peaks[:, :, -1] = False
        ids, rs, cs = np.nonzero(peaks)
        if len(ids) == 0:
            continue
        L = stack
        v = L[ids, rs, cs]
        gx = 0.5 * (L[ids, rs, cs + 1] - L[ids, rs, cs - 1])
        gy = 0.5 * (L[ids, rs + 1, cs] - L[ids, rs - 1, cs])
        gs = 0.5 * (L[ids + 1, rs, cs] - L[ids - 1, rs, cs])
        hxx = L[ids, rs, cs + 1] - 2 * v + L[ids, rs, cs - 1]
        hyy = L[ids, rs + 1, cs] - 2 * v + L[ids, rs - 1, cs]
        hss = L[ids + 1, rs, cs] - 2 * v + L[ids - 1, rs, cs]
        hxy = 0.25 * (
            L[ids, rs + 1, cs + 1] - L[ids, rs + 1, cs - 1] - L[ids, rs - 1, cs + 1] + L[ids, rs - 1, cs - 1]
        )
        hxs = 0.25 * (
            L[ids + 1, rs, cs + 1] - L[ids + 1, rs, cs - 1] - L[ids - 1, rs, cs + 1] + L[ids - 1, rs, cs - 1]
        )
        hys = 0.25 * (
            L[ids + 1, rs + 1, cs] - L[ids + 1, rs - 1, cs] - L[ids - 1, rs + 1, cs] + L[ids - 1, rs - 1, cs]
        )
        hess = np.empty((len(ids), 3, 3))
        hess[:, 0, 0] = hxx
        hess[:, 1, 1] = hyy
        hess[:, 2, 2] = hss
        hess[:, 0, 1] = hess[:, 1, 0] = hxy
        hess[:, 0, 2] = hess[:, 2, 0] = hxs
        hess[:, 1, 2] = hess[:, 2, 1] = hys
        hess += 1e-12 * np.eye(3)  # ridge: near-singular peaks get huge offsets and are culled below
        grad = np.stack([gx, gy, gs], axis=1)
        try:
            offs = -np.linalg.solve(hess, grad[..., None])[..., 0]
        except np.linalg.LinAlgError:
            continue
        ok = np.isfinite(offs).all(axis=1) & (np.abs(offs) < 0.5).all(axis=1)
        for i in np.nonzero(ok)[0]:
            x = (cs[i] + offs[i, 0]) * step
            y = (rs[i] + offs[i, 1]) * step
            size = sizes[ids[i]] + offs[i, 2] * size_step
            scale = 1.2 * size / BASE_FILTER
            if 0.0 <= x < integral.width and 0.0 <= y < integral.height and scale > 0:
                found.append((float(v[i]), float(x), float(y), float(scale)))
    found.sort(key=lambda t: (-t[0], t[2], t[1], t[3]))
    return [Keypoint(x=x, y=y, scale=s, orientation=0.0, response=r) for r, x, y, s in found[:max_count]]


# --- descriptor machinery -------------------------------------------------

def _haar_x(sums, py, px, half):
    r0 = py - half
    r1 = py + half
    return (_box(sums, r0, px, r1, px + half) - _box(sums, r0, px - half, r1, px)).astype(np.float64)


def _haar_y(sums, py, px, half):
    c0 = px - half
    c1 = px + half
    return (_box(sums, py, c0, py + half, c1) - _box(sums, py - half, c0, py, c1)).astype(np.float64)


def _disc_offsets() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    g = np.arange(-6, 7)
    jj, ii2 = np.meshgrid(g, g, indexing="ij")
    mask = ii2 * ii2 + jj * jj < 36
    i = ii2[mask].astype(np.float64)
    j = jj[mask].astype(np.float64)
    w = np.exp(-(i * i + j * j) / (2.0 * 2.5 * 2.5))
    return i, j, w


_ORI_I, _ORI_J, _ORI_W = _disc_offsets()

_DESC_STEPS = np.arange(20) - 9.5
_DESC_U, _DESC_V = np.meshgrid(_DESC_STEPS, _DESC_STEPS, indexing="ij")
_DESC_GAUSS = np.exp(-(_DESC_U ** 2 + _DESC_V ** 2) / (2.0 * 3.3 * 3.3)).ravel()
_DESC_UF = _DESC_U.ravel()
_DESC_VF = _DESC_V.ravel()

_ORI_WINDOWS = np.arange(0.0, 2.0 * np.pi, 0.15)
_ORI_WINDOW_SPAN = np.pi / 3.0


def _support_margin(scale: float) -> int:
    # descriptor samples reach ~9.5*sqrt(2)*s plus the wavelet half-width
    return int(np.ceil(14.5 * scale)) + 2


def _dominant_orientations(ii: IntegralImage, xs, ys, ss) -> np.ndarray:
    """Sliding-window Haar orientation for a batch of keypoints."""
    sums = ii.sums
    k = len(xs)
    px = np.rint(xs[:, None] + _ORI_I[None, :] * ss[:, None]).astype(np.int64)
    py = np.rint(ys[:, None] + _ORI_J[None, :] * ss[:, None]).astype(np.int64)
    half = np.maximum(1, np.rint(2.0 * ss)).astype(np.int64)[:, None]
    rx = _haar_x(sums, py, px, half) * _ORI_W[None, :]
    ry = _haar_y(sums, py, px, half) * _ORI_W[None, :]
    ang = np.mod(np.arctan2(ry, rx), 2.0 * np.pi)
    best_mag = np.full(k, -1.0)
    best_ori = np.zeros(k)
    for a0 in _ORI_WINDOWS:
        in_win = np.mod(ang - a0, 2.0 * np.pi) < _ORI_WINDOW_SPAN
        sx = np.where(in_win, rx, 0.0).sum(axis=1)
        sy = np.where(in_win, ry, 0.0).sum(axis=1)
        mag = sx * sx + sy * sy
        upd = mag > best_mag
        best_mag[upd] = mag[upd]
        best_ori[upd] = np.arctan2(sy[upd], sx[upd])
    return np.mod(best_ori, 2.0 * np.pi)


def describe(integral: IntegralImage, keypoints: list[Keypoint], image_id: int = -1) -> FeatureSet:
    """Oriented 64-d descriptors; border keypoints are dropped, not padded."""
    kept: list[Keypoint] = []
    for kp in keypoints:
        mgn = _support_margin(kp.scale)
        if mgn <= kp.x < integral.width - mgn and mgn <= kp.y < integral.height - mgn:
            kept.append(kp)
    dropped = len(keypoints) - len(kept)
    if dropped:
        logger.debug("image %d: dropped %d border keypoints", image_id, dropped)
    if not kept:
        return FeatureSet(image_id=image_id)

    xs = np.array([kp.x for kp in kept])
    ys = np.array([kp.y for kp in kept])
    ss = np.array([kp.scale for kp in kept])
    oris = _dominant_orientations(integral, xs, ys, ss)

    sums = integral.sums
    cos_t = np.cos(oris)[:, None]
    sin_t = np.sin(oris)[:, None]
    su = ss[:, None] * _DESC_UF[None, :]
    sv = ss[:, None] * _DESC_VF[None, :]
    px = np.rint(xs[:, None] + cos_t * su - sin_t * sv).astype(np.int64)
    py = np.rint(ys[:, None] + sin_t * su + cos_t * sv).astype(np.int64)
    half = np.maximum(1, np.rint(ss)).astype(np.int64)[:, None]
    rx = _haar_x(sums, py, px, half) * _DESC_GAUSS[None, :]
    ry = _haar_y(sums, py, px, half) * _DESC_GAUSS[None, :]
    dx = cos_t * rx + sin_t * ry
    dy = -sin_t * rx + cos_t * ry

    k = len(kept)
    dx = dx.reshape(k, 4, 5, 4, 5)
    dy = dy.reshape(k, 4, 5, 4, 5)
    parts = (
        dx.sum(axis=(2, 4)),
        np.abs(dx).sum(axis=(2, 4)),
        dy.sum(axis=(2, 4)),
        np.abs(dy).sum(axis=(2, 4)),
    )
    desc = np.stack(parts, axis=-1).reshape(k, DESCRIPTOR_DIM)
    norms = np.linalg.norm(desc, axis=1)
    usable = norms > 1e-12
    if not usable.all():
        logger.debug("image %d: dropped %d flat keypoints", image_id, int((~usable).sum()))
    desc = (desc[usable] / norms[usable, None]).astype(np.float32)
    out_kps = [
        Keypoint(x=kp.x, y=kp.y, scale=kp.scale, orientation=float(o), response=kp.response)
        for kp, o, u in zip(kept, oris, usable)
        if u
    ]
    return FeatureSet(image_id=image_id, keypoints=out_kps, descriptors=desc)


def extract_features(
    gray: np.ndarray,
    image_id: int = -1,
    max_count: int = MAX_FEATURES,
    threshold: float = HESSIAN_THRESHOLD,
) -> FeatureSet:
    """Detect + describe in one call. Pure per-image function."""
    ii = integral_image(gray)
    kps = detect_keypoints(ii, max_count=max_count, threshold=threshold)
    return describe(ii, kps, image_id=image_id)


# --- persisted feature store ----------------------------------------------

def save_features(feature_sets: Iterable[FeatureSet], path: str | Path) -> None:
    """Binary store: magic MGDF, version u16, then per image id/count/keypoints/descriptors."""
    with open(path, "wb") as fh:
        fh.write(MGDF_MAGIC)
        fh.write(struct.pack("<H", MGDF_VERSION))
        for fs in feature_sets:
            n = len(fs.keypoints)
            fh.write(struct.pack("<II", fs.image_id, n))
            if n:
                kp = np.array(
                    [[k.x, k.y, k.scale, k.orientation, k.response] for k in fs.keypoints],
                    dtype="<f4",
                )
                fh.write(kp.tobytes())
                fh.write(np.ascontiguousarray(fs.descriptors, dtype="<f4").tobytes())


def load_features(path: str | Path) -> dict[int, FeatureSet]:
    with open(path, "rb") as fh:
        if fh.read(4) != MGDF_MAGIC:
            raise ValueError(f"not a feature store: {path}")
        (version,) = struct.unpack("<H", fh.read(2))
        if version != MGDF_VERSION:
            raise ValueError(f"unsupported feature store version {version}")
        out: dict[int, FeatureSet] = {}
        while True:
            head = fh.read(8)
            if not head:
                break
            image_id, n = struct.unpack("<II", head)
            kps: list[Keypoint] = []
            desc = np.zeros((0, DESCRIPTOR_DIM), np.float32)
            if n:
                kp = np.frombuffer(fh.read(4 * 5 * n), dtype="<f4").reshape(n, 5)
                desc = np.frombuffer(fh.read(4 * DESCRIPTOR_DIM * n), dtype="<f4").reshape(
                    n, DESCRIPTOR_DIM
                ).copy()
                kps = [
                    Keypoint(
                        x=float(r[0]), y=float(r[1]), scale=float(r[2]),
                        orientation=float(r[3]), response=float(r[4]),
                    )
                    for r in kp
                ]
            out[image_id] = FeatureSet(image_id=image_id, keypoints=kps, descriptors=desc)
    return out
