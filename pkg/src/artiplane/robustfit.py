"""Robust plane estimation: single and multi-plane RANSAC, plus the
per-detection plane lifting used on rendered views.

Plane sign bridging: the offset estimator averages d = n . x over the
masked pixels' 3-D points, i.e. on-plane points satisfy n . x = d. The
canonical Plane type stores n . x + o = 0, so lifted planes carry
o = -d. This is the single place where the two conventions meet.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import (
    BinaryMask,
    DepthMap,
    Intrinsics,
    Plane,
    PointCloud,
    backproject,
    fit_plane_lsq,
)
from .errors import ContractViolation, DegenerateInput

_SCORE_CHUNK = 256  # hypotheses scored per matmul block


@dataclass(frozen=True)
class RansacParams:
    """Knobs for plane RANSAC. Defaults: 5e-3 threshold, 2000 iterations."""

    inlier_threshold: float = 5e-3
    iterations: int = 2000
    min_inliers: int = 50
    max_planes: int = 8
    seed: int = 0

    def __post_init__(self):
        if self.inlier_threshold <= 0:
            raise ContractViolation("inlier threshold must be positive")
        if self.iterations < 1:
            raise ContractViolation("need at least one iteration")
        if self.min_inliers < 3:
            raise ContractViolation("min_inliers must be at least 3")

    def to_json(self) -> dict:
        return {
            "inlier_threshold": self.inlier_threshold,
            "iterations": self.iterations,
            "min_inliers": self.min_inliers,
            "max_planes": self.max_planes,
            "seed": self.seed,
        }

    @staticmethod
    def from_json(d: dict) -> "RansacParams":
        return RansacParams(**d)


@dataclass(frozen=True, eq=False)
class PlaneDetection2D:
    """A 2-D plane detection: class label, box, mask and camera-frame normal."""

    label: str
    bbox: tuple[float, float, float, float]
    mask: BinaryMask
    normal_cam: np.ndarray

    def __post_init__(self):
        if self.label not in ("planar", "nonplanar"):
            raise ContractViolation("label must be 'planar' or 'nonplanar'")
        if self.mask.count() == 0:
            raise ContractViolation("detection mask must be nonempty")
        n = np.asarray(self.normal_cam, dtype=np.float64).reshape(3)
        if abs(float(np.linalg.norm(n)) - 1.0) > 1e-9:
            raise ContractViolation("detection normal must be unit length")
        object.__setattr__(self, "normal_cam", n)
        object.__setattr__(self, "bbox", tuple(float(b) for b in self.bbox))


def mask_bbox(mask: BinaryMask) -> tuple[float, float, float, float]:
    """Inclusive pixel bounds (x0, y0, x1, y1) of the set pixels."""
    vv, uu = np.nonzero(mask.values)
    if vv.size == 0:
        raise DegenerateInput("empty mask has no bounding box")
    return float(uu.min()), float(vv.min()), float(uu.max()), float(vv.max())


def _score_hypotheses(pts: np.ndarray, normals: np.ndarray, offsets: np.ndarray,
                      threshold: float) -> np.ndarray:
    """Inlier count per hypothesis, evaluated in chunks to bound memory."""
    counts = np.zeros(normals.shape[0], dtype=np.int64)
    for lo in range(0, normals.shape[0], _SCORE_CHUNK):
        hi = min(lo + _SCORE_CHUNK, normals.shape[0])
        d = np.abs(pts @ normals[lo:hi].T + offsets[lo:hi])
        counts[lo:hi] = (d < threshold).sum(axis=0)
    return counts


def ransac_plane(cloud: PointCloud, params: RansacParams
                 ) -> Optional[tuple[Plane, np.ndarray]]:
    """Classic 3-point RANSAC followed by a least-squares refit.

    Returns (plane, inlier indices) or None when the best hypothesis
    supports fewer than `min_inliers` points. Rounds drawing duplicate
    or collinear triples are burned against the iteration budget. The
    refit is kept only if it does not lose inliers at the threshold.
    """
    pts = cloud.points
    n = pts.shape[0]
    if n < 3:
        raise ContractViolation("RANSAC needs at least 3 points")
    rng = np.random.default_rng(params.seed)
    triples = rng.integers(0, n, size=(params.iterations, 3))
    a, b, c = pts[triples[:, 0]], pts[triples[:, 1]], pts[triples[:, 2]]
    normals = np.cross(b - a, c - a)
    lengths = np.linalg.norm(normals, axis=1)
    distinct = (
        (triples[:, 0] != triples[:, 1])
        & (triples[:, 1] != triples[:, 2])
        & (triples[:, 0] != triples[:, 2])
    )
    # Near-zero cross products are collinear triples: no usable hypothesis.
    scale = float(np.abs(pts).max()) + 1.0
    valid = distinct & (lengths > 1e-12 * scale * scale)
    if not valid.any():
        return None
    normals = np.where(valid[:, None], normals / np.where(valid, lengths, 1.0)[:, None], 0.0)
    offsets = -np.einsum("ij,ij->i", normals, a)
    counts = _score_hypotheses(pts, normals, offsets, params.inlier_threshold)
    counts[~valid] = -1
    best = int(np.argmax(counts))
    best_count = int(counts[best])
    if best_count < params.min_inliers:
        return None
    hyp_plane = Plane(normals[best], float(offsets[best]))
    hyp_inliers = np.nonzero(np.abs(hyp_plane.signed_distance(pts)) < params.inlier_threshold)[0]
    try:
        refit = fit_plane_lsq(pts[hyp_inliers])
    except DegenerateInput:
        return hyp_plane, hyp_inliers
    refit_inliers = np.nonzero(np.abs(refit.signed_distance(pts)) < params.inlier_threshold)[0]
    if refit_inliers.shape[0] >= hyp_inliers.shape[0]:
        return refit, refit_inliers
    return hyp_plane, hyp_inliers


def multi_plane_ransac(cloud: PointCloud, params: RansacParams
                       ) -> list[tuple[Plane, np.ndarray]]:
    """Greedy sequential extraction of up to `max_planes` planes.

    Each round runs `ransac_plane` on the points not yet claimed and
    removes the winners. Returned inlier indices refer to the input
    cloud; the list is ordered by descending inlier count.
    """
    results: list[tuple[Plane, np.ndarray]] = []
    if len(cloud) == 0:
        return results
    remaining = np.arange(len(cloud))
    rng = np.random.default_rng(params.seed)
    while len(results) < params.max_planes and remaining.shape[0] >= max(3, params.min_inliers):
        sub = cloud.subset(remaining)
        round_params = RansacParams(
            params.inlier_threshold, params.iterations, params.min_inliers,
            params.max_planes, int(rng.integers(0, 2**63 - 1)),
        )
        found = ransac_plane(sub, round_params)
        if found is None:
            break
        plane, local_inliers = found
        results.append((plane, remaining[local_inliers]))
        keep = np.ones(remaining.shape[0], dtype=bool)
        keep[local_inliers] = False
        remaining = remaining[keep]
    results.sort(key=lambda pi: -pi[1].shape[0])
    return results


def plane_offset(normal_cam: np.ndarray, depth: DepthMap, mask: BinaryMask,
                 K: Intrinsics) -> float:
    """Mask-averaged plane offset from depth: d = mean of n . (z K^-1 x).

    Only masked pixels with positive depth contribute. On-plane points
    satisfy n . x = d in the camera frame.
    """
    pts = backproject(depth, K, mask)
    if len(pts) == 0:
        raise DegenerateInput("mask covers no valid-depth pixels")
    n = np.asarray(normal_cam, dtype=np.float64).reshape(3)
    return float(np.mean(pts.points @ n))


@dataclass(frozen=True)
class DropRecord:
    """Why a detection produced no lifted plane."""

    detection_index: int
    reason: str


def lift_view_planes(detections: list[PlaneDetection2D], depth: DepthMap,
                     K: Intrinsics) -> tuple[list[tuple[Plane, PointCloud]], list[DropRecord]]:
    """Lift 2-D detections to camera-frame planes using the depth map.

    Each detection gets its offset from `plane_offset` and its support
    from backprojecting the usable mask pixels. Detections whose masks
    hit no valid depth are dropped with a record, in order.
    """
    lifted: list[tuple[Plane, PointCloud]] = []
    dropped: list[DropRecord] = []
    for i, det in enumerate(detections):
        support = backproject(depth, K, det.mask)
        if len(support) == 0:
            dropped.append(DropRecord(i, "mask has no valid-depth pixels"))
            continue
        d = float(np.mean(support.points @ det.normal_cam))
        lifted.append((Plane(det.normal_cam, -d), support))
    return lifted, dropped
