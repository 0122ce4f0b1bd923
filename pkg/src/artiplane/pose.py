"""Camera pose solving from 2D-3D correspondences on unarticulated pixels.

The correspondence provider is an oracle over ground-truth renders with
a configurable noise model; real matcher outputs can be ingested from
JSON ({pixel: [u, v], point: [x, y, z]} records) instead. The solver is
a DLT initialization (with a homography fallback for coplanar points)
refined by Levenberg-Marquardt on pixel reprojection, wrapped in RANSAC
for outlier-contaminated input.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import (
    BinaryMask,
    Intrinsics,
    Pose,
    backproject,
    project_points,
    rotation_angle_deg,
    sample_mesh_surface,
    transform_points,
)
from .errors import ContractViolation, DegenerateInput, PoseFailure
from .kinematics import rotation_about_axis
from .synth.generator import ArticulatedModel
from .synth.render import ViewBundle

_MIN_CORRESPONDENCES = 6
_PLANAR_RATIO = 1e-8


@dataclass(frozen=True, eq=False)
class Correspondence:
    """A sub-pixel image location paired with a rest-model 3-D point."""

    pixel: np.ndarray
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "pixel", np.asarray(self.pixel, dtype=np.float64).reshape(2))
        object.__setattr__(self, "point", np.asarray(self.point, dtype=np.float64).reshape(3))

    def to_json(self) -> dict:
        return {"pixel": [float(x) for x in self.pixel],
                "point": [float(x) for x in self.point]}

    @staticmethod
    def from_json(d: dict) -> "Correspondence":
        return Correspondence(np.asarray(d["pixel"]), np.asarray(d["point"]))


@dataclass(frozen=True)
class CorrespondenceNoise:
    """Gaussian pixel/point jitter plus a gross-outlier fraction."""

    sigma_px: float = 0.0
    sigma_pt: float = 0.0
    outlier_fraction: float = 0.0

    def to_json(self) -> dict:
        return {"sigma_px": self.sigma_px, "sigma_pt": self.sigma_pt,
                "outlier_fraction": self.outlier_fraction}

    @staticmethod
    def from_json(d: dict) -> "CorrespondenceNoise":
        return CorrespondenceNoise(**d)


def unarticulated_mask(view: ViewBundle) -> BinaryMask:
    """Foreground minus every part mask whose motion value is nonzero."""
    moving = np.zeros(view.depth.shape, dtype=bool)
    active = {s.part_id for s in view.states if s.motion.value != 0.0}
    for pid, mask in view.part_masks.items():
        if pid in active:
            moving |= mask.as_bool()
    keep = (view.face_id >= 0) & ~moving
    return BinaryMask(keep.astype(np.uint8))


def oracle_correspondences(view: ViewBundle, n: int, noise: CorrespondenceNoise,
                           seed: int, model: Optional[ArticulatedModel] = None
                           ) -> list[Correspondence]:
    """Ground-truth pixel-to-point matches over unarticulated pixels.

    Samples up to `n` unarticulated pixels, backprojects them with the
    view's true depth and pose, then corrupts the result: Gaussian pixel
    and point jitter, and an `outlier_fraction` of points replaced by
    random surface points (from the rest model when given, otherwise
    from the view's own foreground geometry).
    """
    rng = np.random.default_rng(seed)
    mask = unarticulated_mask(view)
    usable = mask.as_bool() & (view.depth.values > 0)
    vv, uu = np.nonzero(usable)
    if vv.size == 0:
        raise DegenerateInput("no unarticulated pixels to sample")
    k = min(n, vv.size)
    pick = np.sort(rng.choice(vv.size, size=k, replace=False))
    grid = np.zeros(mask.shape, dtype=np.uint8)
    grid[vv[pick], uu[pick]] = 1
    sel = BinaryMask(grid)
    cam = backproject(view.depth, view.K, sel)
    world = transform_points(view.pose, cam, "cam_to_world")
    order = np.argsort(world.pixel_index)
    points = world.points[order]
    pixels = np.stack(
        [world.pixel_index[order] % view.K.width, world.pixel_index[order] // view.K.width],
        axis=1,
    ).astype(np.float64)

    if noise.sigma_px > 0:
        pixels = pixels + rng.normal(0.0, noise.sigma_px, pixels.shape)
        pixels[:, 0] = np.clip(pixels[:, 0], 0, view.K.width - 1)
        pixels[:, 1] = np.clip(pixels[:, 1], 0, view.K.height - 1)
    if noise.sigma_pt > 0:
        points = points + rng.normal(0.0, noise.sigma_pt, points.shape)
    n_out = int(round(noise.outlier_fraction * k))
    if n_out > 0:
        out_idx = rng.choice(k, size=n_out, replace=False)
        if model is not None:
            replacements = sample_mesh_surface(model.rest_mesh, n_out, rng)
        else:
            fg = backproject(view.depth, view.K, view.foreground())
            fg_world = transform_points(view.pose, fg, "cam_to_world")
            replacements = fg_world.points[rng.choice(len(fg_world), size=n_out, replace=False)]
        points = np.array(points)
        points[out_idx] = replacements
    return [Correspondence(px, pt) for px, pt in zip(pixels, points)]


# ---------------------------------------------------------------------------
# PnP


def _normalized(K: Intrinsics, px: np.ndarray) -> np.ndarray:
    return np.stack([(px[:, 0] - K.cx) / K.fx, (px[:, 1] - K.cy) / K.fy], axis=1)


def _positive_depth_count(R, t, pts) -> int:
    return int(((pts @ R.T + t)[:, 2] > 0).sum())


def _pose_from_projection(M: np.ndarray, pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormalize a 3x4 projection into (R, t), fixing scale and sign."""
    best = None
    for sign in (1.0, -1.0):
        Ms = sign * M
        U, S, Vt = np.linalg.svd(Ms[:, :3])
        R = U @ np.diag([1.0, 1.0, np.linalg.det(U @ Vt)]) @ Vt
        scale = S.mean()
        if scale < 1e-12:
            continue
        t = Ms[:, 3] / scale
        score = _positive_depth_count(R, t, pts)
        if best is None or score > best[0]:
            best = (score, R, t)
    if best is None:
        raise DegenerateInput("projection matrix is numerically rank deficient")
    return best[1], best[2]


def _dlt_general(pts: np.ndarray, xn: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = pts.shape[0]
    A = np.zeros((2 * n, 12))
    A[0::2, 0:3] = pts
    A[0::2, 3] = 1.0
    A[0::2, 8:11] = -xn[:, :1] * pts
    A[0::2, 11] = -xn[:, 0]
    A[1::2, 4:7] = pts
    A[1::2, 7] = 1.0
    A[1::2, 8:11] = -xn[:, 1:2] * pts
    A[1::2, 11] = -xn[:, 1]
    _, _, Vt = np.linalg.svd(A)
    return _pose_from_projection(Vt[-1].reshape(3, 4), pts)


def _dlt_planar(pts: np.ndarray, xn: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Homography decomposition for (nearly) coplanar 3-D points."""
    c = pts.mean(axis=0)
    centered = pts - c
    _, _, Vt = np.linalg.svd(centered, full_matrices=False)
    e1, e2 = Vt[0], Vt[1]
    w = centered @ np.stack([e1, e2], axis=1)
    n = pts.shape[0]
    A = np.zeros((2 * n, 9))
    A[0::2, 0:2] = w
    A[0::2, 2] = 1.0
    A[0::2, 6:8] = -xn[:, :1] * w
    A[0::2, 8] = -xn[:, 0]
    A[1::2, 3:5] = w
    A[1::2, 5] = 1.0
    A[1::2, 6:8] = -xn[:, 1:2] * w
    A[1::2, 8] = -xn[:, 1]
    _, _, VtH = np.linalg.svd(A)
    H = VtH[-1].reshape(3, 3)
    E = np.stack([e1, e2, np.cross(e1, e2)], axis=1)
    best = None
    for sign in (1.0, -1.0):
        Hs = sign * H
        h1, h2, h3 = Hs[:, 0], Hs[:, 1], Hs[:, 2]
        lam = 2.0 / (np.linalg.norm(h1) + np.linalg.norm(h2))
        Q = np.stack([lam * h1, lam * h2, np.cross(lam * h1, lam * h2)], axis=1)
        U, _, Vt2 = np.linalg.svd(Q)
        Rp = U @ np.diag([1.0, 1.0, np.linalg.det(U @ Vt2)]) @ Vt2
        R = Rp @ E.T
        t = lam * h3 - R @ c
        score = _positive_depth_count(R, t, pts)
        if best is None or score > best[0]:
            best = (score, R, t)
    return best[1], best[2]


def _initial_candidates(pts: np.ndarray, xn: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Candidate (R, t) initializations.

    The general DLT degrades long before the points are exactly coplanar
    (a front rim plus a thin side sliver is almost planar), so the
    homography route is always offered as well; callers keep whichever
    reprojects better.
    """
    candidates = []
    centered = pts - pts.mean(axis=0)
    s = np.linalg.svd(centered, compute_uv=False)
    if s[0] > 1e-12 and s[2] / s[0] > _PLANAR_RATIO:
        try:
            candidates.append(_dlt_general(pts, xn))
        except (DegenerateInput, np.linalg.LinAlgError):
            pass
    try:
        candidates.append(_dlt_planar(pts, xn))
    except (DegenerateInput, np.linalg.LinAlgError):
        pass
    if not candidates:
        raise DegenerateInput("no usable pose initialization")
    return candidates


def _reproj_errors(R, t, pts, px, K: Intrinsics) -> np.ndarray:
    cam = pts @ R.T + t
    z = cam[:, 2]
    bad = z <= 1e-9
    zs = np.where(bad, 1.0, z)
    u = K.fx * cam[:, 0] / zs + K.cx
    v = K.fy * cam[:, 1] / zs + K.cy
    err = np.hypot(u - px[:, 0], v - px[:, 1])
    err[bad] = np.inf
    return err


def _refine_lm(R, t, pts, px, K: Intrinsics, iterations: int = 50):
    """Levenberg-Marquardt on pixel reprojection over SO(3) x R^3."""
    lam = 1e-3
    R = np.array(R)
    t = np.array(t)

    def cost(Rc, tc):
        e = _reproj_errors(Rc, tc, pts, px, K)
        return np.inf if not np.all(np.isfinite(e)) else float((e ** 2).sum())

    current = cost(R, t)
    for _ in range(iterations):
        cam = pts @ R.T + t
        x, y, z = cam[:, 0], cam[:, 1], cam[:, 2]
        if np.any(z <= 1e-9):
            break
        u = K.fx * x / z + K.cx
        v = K.fy * y / z + K.cy
        r = np.concatenate([u - px[:, 0], v - px[:, 1]])
        n = pts.shape[0]
        du = np.stack([K.fx / z, np.zeros(n), -K.fx * x / z ** 2], axis=1)
        dv = np.stack([np.zeros(n), K.fy / z, -K.fy * y / z ** 2], axis=1)
        # Left perturbation of the whole transform, cam' = exp(w) cam + dt,
        # so d(cam)/d(w_k) = e_k x cam and the update couples R and t.
        Ju = np.zeros((n, 6))
        Jv = np.zeros((n, 6))
        for col, basis in enumerate(np.eye(3)):
            dcam = np.cross(np.broadcast_to(basis, cam.shape), cam)
            Ju[:, col] = (du * dcam).sum(axis=1)
            Jv[:, col] = (dv * dcam).sum(axis=1)
        Ju[:, 3:] = du
        Jv[:, 3:] = dv
        J = np.vstack([Ju, Jv])
        g = J.T @ r
        Hm = J.T @ J
        stepped = False
        delta = np.zeros(6)
        for _ in range(8):
            try:
                delta = np.linalg.solve(Hm + lam * np.eye(6), -g)
            except np.linalg.LinAlgError:
                lam *= 10.0
                continue
            angle = float(np.linalg.norm(delta[:3]))
            dR = rotation_about_axis(delta[:3] / angle, angle) if angle > 0 else np.eye(3)
            Rn = dR @ R
            tn = dR @ t + delta[3:]
            new = cost(Rn, tn)
            if new < current:
                R, t, current = Rn, tn, new
                lam = max(lam * 0.3, 1e-12)
                stepped = True
                break
            lam *= 10.0
        if not stepped or np.linalg.norm(delta) < 1e-14:
            break
    return R, t, current


def solve_pnp(corrs: list[Correspondence], K: Intrinsics, *,
              robust: bool = True, inlier_threshold_px: float = 2.0,
              rounds: int = 500, seed: int = 0) -> Pose:
    """Recover the world-to-camera pose from pixel/point correspondences.

    DLT initialization (homography route for coplanar points) refined by
    LM on reprojection error. With `robust` a 500-round RANSAC over
    6-point subsets guards against outliers (2 px inlier threshold by
    default). Raises PoseFailure with diagnostics when fewer than 6
    correspondences are given or no consensus is found.
    """
    if len(corrs) < _MIN_CORRESPONDENCES:
        raise PoseFailure(
            f"need at least {_MIN_CORRESPONDENCES} correspondences, got {len(corrs)}",
            inlier_count=len(corrs),
        )
    pts = np.stack([c.point for c in corrs])
    px = np.stack([c.pixel for c in corrs])
    xn = _normalized(K, px)
    n = pts.shape[0]

    if robust and n > _MIN_CORRESPONDENCES:
        rng = np.random.default_rng(seed)
        best_count = -1
        best_model = None
        for _ in range(rounds):
            idx = rng.choice(n, size=_MIN_CORRESPONDENCES, replace=False)
            try:
                candidates = _initial_candidates(pts[idx], xn[idx])
            except DegenerateInput:
                continue
            for R0, t0 in candidates:
                count = int((_reproj_errors(R0, t0, pts, px, K) < inlier_threshold_px).sum())
                if count > best_count:
                    best_count = count
                    best_model = (R0, t0)
            if best_count == n:
                break
        if best_model is None or best_count < _MIN_CORRESPONDENCES:
            raise PoseFailure("no RANSAC consensus", inlier_count=max(best_count, 0))
        inliers = _reproj_errors(*best_model, pts, px, K) < inlier_threshold_px
        R, t, _ = _refine_lm(*best_model, pts[inliers], px[inliers], K)
        inliers = _reproj_errors(R, t, pts, px, K) < inlier_threshold_px
        if inliers.sum() < _MIN_CORRESPONDENCES:
            raise PoseFailure("consensus collapsed during refinement",
                              inlier_count=int(inliers.sum()))
        R, t, cost = _refine_lm(R, t, pts[inliers], px[inliers], K)
        residual = float(np.sqrt(cost / max(int(inliers.sum()), 1)))
    else:
        try:
            candidates = _initial_candidates(pts, xn)
        except DegenerateInput as exc:
            raise PoseFailure(f"initialization failed: {exc}") from exc
        def _cost(model):
            e = _reproj_errors(*model, pts, px, K)
            return float(np.sum(np.minimum(e, 1e6) ** 2))
        R0, t0 = min(candidates, key=_cost)
        R, t, cost = _refine_lm(R0, t0, pts, px, K)
        residual = float(np.sqrt(cost / n))
    if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
        raise PoseFailure("solver diverged", residual=float("inf"))
    return Pose(R, t)


def pose_errors(pred: Pose, gt: Pose) -> tuple[float, float]:
    """(geodesic rotation error in degrees, squared translation error)."""
    rot = rotation_angle_deg(pred.rotation @ gt.rotation.T)
    dt = pred.translation - gt.translation
    return rot, float(dt @ dt)


def correspondences_to_json(corrs: list[Correspondence]) -> list[dict]:
    return [c.to_json() for c in corrs]


def correspondences_from_json(data: list[dict]) -> list[Correspondence]:
    return [Correspondence.from_json(d) for d in data]
