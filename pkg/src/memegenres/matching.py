"""Object-to-object scoring: ratio-test vote collection + similarity RANSAC.

Raw descriptor matches from the index are grouped per candidate image, then
each candidate is geometrically verified with a 2-point similarity RANSAC.
An image pair's score is the inlier count of the best transform, which keeps
the affinity matrix integer-weighted and monotone in match quality.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .features import FeatureSet, Keypoint
from .index import DescriptorMatch

logger = logging.getLogger(__name__)

RATIO_TEST = 0.9        # best/second-best across *different* target images
MIN_INLIERS = 4         # below this a candidate scores 0
RANSAC_ITERATIONS = 500
INLIER_PX = 5.0
SCALE_MIN = 1.0 / 16.0  # accepted similarity scale range
SCALE_MAX = 16.0
TOP_J = 100


@dataclass
class Correspondence:
    query_keypoint: Keypoint
    match_keypoint: Keypoint
    descriptor_distance: float


@dataclass
class SimilarityTransform:
    scale: float
    rotation: float
    translation: tuple[float, float]

    def apply(self, pts: np.ndarray) -> np.ndarray:
        c, s = np.cos(self.rotation), np.sin(self.rotation)
        m = self.scale * np.array([[c, -s], [s, c]])
        return pts @ m.T + np.asarray(self.translation)


@dataclass
class ImageScore:
    image_id: int
    score: int
    transform: Optional[SimilarityTransform] = None


def collect_candidates(
    query: FeatureSet,
    raw: list[list[DescriptorMatch]],
    features: Mapping[int, FeatureSet],
) -> dict[int, list[Correspondence]]:
    """Group index matches by target image after the cross-image ratio test.

    For each query keypoint, a match into image T survives only if its distance
    is <= RATIO_TEST times the best distance into any other image (so only the
    clearly-best target keeps the vote; ambiguous keypoints vote nowhere).
    Raw matches must have been produced with exclude_image set to the query.
    """
    out: dict[int, list[Correspondence]] = {}
    for per_kp in raw:
        if not per_kp:
            continue
        for m in per_kp:
            if m.match_image_id == query.image_id:
                raise ValueError(
                    "raw matches contain the query image itself; "
                    "search() must be called with exclude_image=query.image_id"
                )
        # best match per distinct target image, ascending by distance
        best_per_image: dict[int, DescriptorMatch] = {}
        for m in per_kp:
            cur = best_per_image.get(m.match_image_id)
            if cur is None or m.approx_distance < cur.approx_distance:
                best_per_image[m.match_image_id] = m
        ranked = sorted(best_per_image.values(), key=lambda m: (m.approx_distance, m.match_image_id))
        for i, m in enumerate(ranked):
            if len(ranked) == 1:
                other = np.inf
            else:
                other = ranked[1].approx_distance if i == 0 else ranked[0].approx_distance
            if m.approx_distance <= RATIO_TEST * other:
                q_ord = m.query_ordinal
                target = features.get(m.match_image_id)
                if target is None or m.match_keypoint_ordinal >= len(target.keypoints):
                    logger.warning("match references missing features of image %d", m.match_image_id)
                    continue
                out.setdefault(m.match_image_id, []).append(
                    Correspondence(
                        query_keypoint=query.keypoints[q_ord],
                        match_keypoint=target.keypoints[m.match_keypoint_ordinal],
                        descriptor_distance=m.approx_distance,
                    )
                )
    return out


def _solve_complex(p: np.ndarray, q: np.ndarray) -> tuple[float, float, complex] | None:
    """Least-squares similarity p -> q using complex coordinates."""
    pc = p[:, 0] + 1j * p[:, 1]
    qc = q[:, 0] + 1j * q[:, 1]
    pm, qm = pc.mean(), qc.mean()
    var = ((pc - pm).conj() * (pc - pm)).real.sum()
    if var < 1e-12:
        return None
    a = ((pc - pm).conj() * (qc - qm)).sum() / var
    t = qm - a * pm
    return float(np.abs(a)), float(np.angle(a)), t


def estimate_similarity_ransac(
    corrs: list[Correspondence],
    iterations: int = RANSAC_ITERATIONS,
    inlier_px: float = INLIER_PX,
    seed: "int | np.random.SeedSequence" = 0,
) -> tuple[Optional[SimilarityTransform], int]:
    """2-point similarity RANSAC with a least-squares refit on the inliers."""
    n = len(corrs)
    if n < 2:
        return None, 0
    p = np.array([[c.query_keypoint.x, c.query_keypoint.y] for c in corrs])
    q = np.array([[c.match_keypoint.x, c.match_keypoint.y] for c in corrs])
    pc = p[:, 0] + 1j * p[:, 1]
    qc = q[:, 0] + 1j * q[:, 1]

    rng = np.random.default_rng(seed)
    idx = rng.integers(0, n, size=(iterations, 2))
    dp = pc[idx[:, 1]] - pc[idx[:, 0]]
    dq = qc[idx[:, 1]] - qc[idx[:, 0]]
    denom = np.abs(dp)
    valid = denom > 1e-9
    a = np.zeros(iterations, dtype=complex)
    a[valid] = dq[valid] / dp[valid]
    scale = np.abs(a)
    valid &= (scale > SCALE_MIN) & (scale < SCALE_MAX)
    if not valid.any():
        return None, 0
    t = qc[idx[:, 0]] - a * pc[idx[:, 0]]
    resid = np.abs(a[:, None] * pc[None, :] + t[:, None] - qc[None, :])
    counts = np.where(valid, (resid <= inlier_px).sum(axis=1), 0)
    best_it = int(np.argmax(counts))  # first max wins: deterministic
    best_count = int(counts[best_it])
    if best_count < 2:
        return None, 0
    inl = resid[best_it] <= inlier_px

    refit = _solve_complex(p[inl], q[inl])
    best_a, best_t = a[best_it], t[best_it]
    model = SimilarityTransform(
        scale=float(np.abs(best_a)),
        rotation=float(np.angle(best_a)),
        translation=(float(best_t.real), float(best_t.imag)),
    )
    if refit is not None:
        r_scale, r_rot, r_t = refit
        if SCALE_MIN < r_scale < SCALE_MAX:
            ar = r_scale * np.exp(1j * r_rot)
            resid_r = np.abs(ar * pc + r_t - qc)
            count_r = int((resid_r <= inlier_px).sum())
            if count_r >= best_count:
                return (
                    SimilarityTransform(
                        scale=r_scale, rotation=r_rot, translation=(float(r_t.real), float(r_t.imag))
                    ),
                    count_r,
                )
    return model, best_count


def _pair_seed(query_id: int, candidate_id: int) -> np.random.SeedSequence:
    # seed depends only on the pair, so scores are independent of scan order
    return np.random.SeedSequence([0x05205, query_id, candidate_id])


def score_images(
    query: FeatureSet,
    candidates: Mapping[int, list[Correspondence]],
    J: int = TOP_J,
    min_inliers: int = MIN_INLIERS,
) -> list[ImageScore]:
    """RANSAC-verify every candidate; keep the top-J positive scores."""
    scored: list[ImageScore] = []
    for image_id in sorted(candidates):
        corrs = candidates[image_id]
        if len(corrs) < min_inliers:
            continue
        transform, inliers = estimate_similarity_ransac(
            corrs, seed=_pair_seed(query.image_id, image_id)
        )
        if inliers >= min_inliers and transform is not None:
            scored.append(ImageScore(image_id=image_id, score=inliers, transform=transform))
    scored.sort(key=lambda s: (-s.score, s.image_id))
    return scored[:J]
