"""Ray-cast rendering of articulated models and interior labeling.

One ray is shot through each pixel center; the nearest triangle hit
(Moller-Trumbore) defines depth, face id and mask membership. Interior
labeling follows the revealed-face rule: a pixel is interior iff its hit
face belongs to the static body and is never hit in any rest-state
render of a fixed canonical sweep.
"""

from __future__ import annotations

import math
import weakref
from dataclasses import dataclass
from typing import Optional

import numpy as np
from numba import njit

from ..core import BinaryMask, DepthMap, Intrinsics, Pose, TriMesh, _freeze, look_at_pose
from ..errors import ContractViolation
from ..kinematics import PartArticulation
from .generator import ArticulatedModel, articulated_mesh

_LEAF_SIZE = 8
_T_NEAR = 1e-6
_BARY_EPS = 1e-9


@njit(cache=True)
def _raycast_kernel(origin, dirs, v0, e1, e2, leaf_lo, leaf_hi, leaf_start, leaf_count,
                    scene_lo, scene_hi, t_out, hit_out):
    ox, oy, oz = origin[0], origin[1], origin[2]
    n_leaves = leaf_start.shape[0]
    for i in range(dirs.shape[0]):
        dx, dy, dz = dirs[i, 0], dirs[i, 1], dirs[i, 2]
        best_t = np.inf
        best_j = -1
        # Scene bounding box rejection: most rays miss the object.
        tmin = _T_NEAR
        tmax = np.inf
        skip = False
        for a in range(3):
            d = dirs[i, a]
            o = origin[a]
            if abs(d) < 1e-300:
                if o < scene_lo[a] or o > scene_hi[a]:
                    skip = True
                    break
            else:
                inv = 1.0 / d
                ta = (scene_lo[a] - o) * inv
                tb = (scene_hi[a] - o) * inv
                if ta > tb:
                    ta, tb = tb, ta
                if ta > tmin:
                    tmin = ta
                if tb < tmax:
                    tmax = tb
                if tmin > tmax:
                    skip = True
                    break
        if skip:
            t_out[i] = 0.0
            hit_out[i] = -1
            continue
        for L in range(n_leaves):
            # Leaf AABB test, pruned against the current best hit.
            tmin = _T_NEAR
            tmax = best_t
            miss = False
            for a in range(3):
                d = dirs[i, a]
                o = origin[a]
                if abs(d) < 1e-300:
                    if o < leaf_lo[L, a] or o > leaf_hi[L, a]:
                        miss = True
                        break
                else:
                    inv = 1.0 / d
                    ta = (leaf_lo[L, a] - o) * inv
                    tb = (leaf_hi[L, a] - o) * inv
                    if ta > tb:
                        ta, tb = tb, ta
                    if ta > tmin:
                        tmin = ta
                    if tb < tmax:
                        tmax = tb
                    if tmin > tmax:
                        miss = True
                        break
            if miss:
                continue
            for j in range(leaf_start[L], leaf_start[L] + leaf_count[L]):
                p0 = dy * e2[j, 2] - dz * e2[j, 1]
                p1 = dz * e2[j, 0] - dx * e2[j, 2]
                p2 = dx * e2[j, 1] - dy * e2[j, 0]
                det = e1[j, 0] * p0 + e1[j, 1] * p1 + e1[j, 2] * p2
                if abs(det) < 1e-14:
                    continue
                inv_det = 1.0 / det
                tx = ox - v0[j, 0]
                ty = oy - v0[j, 1]
                tz = oz - v0[j, 2]
                u = (tx * p0 + ty * p1 + tz * p2) * inv_det
                if u < -_BARY_EPS or u > 1.0 + _BARY_EPS:
                    continue
                q0 = ty * e1[j, 2] - tz * e1[j, 1]
                q1 = tz * e1[j, 0] - tx * e1[j, 2]
                q2 = tx * e1[j, 1] - ty * e1[j, 0]
                v = (dx * q0 + dy * q1 + dz * q2) * inv_det
                if v < -_BARY_EPS or u + v > 1.0 + _BARY_EPS:
                    continue
                t = (e2[j, 0] * q0 + e2[j, 1] * q1 + e2[j, 2] * q2) * inv_det
                if _T_NEAR < t < best_t:
                    best_t = t
                    best_j = j
        if best_j < 0:
            t_out[i] = 0.0
            hit_out[i] = -1
        else:
            t_out[i] = best_t
            hit_out[i] = best_j


@dataclass(frozen=True, eq=False)
class MeshAccel:
    """Triangle soup reordered into median-split leaves with AABBs."""

    v0: np.ndarray
    e1: np.ndarray
    e2: np.ndarray
    leaf_lo: np.ndarray
    leaf_hi: np.ndarray
    leaf_start: np.ndarray
    leaf_count: np.ndarray
    scene_lo: np.ndarray
    scene_hi: np.ndarray
    face_origin: np.ndarray  # original face index per reordered triangle


def build_accel(mesh: TriMesh) -> MeshAccel:
    tri = mesh.triangles()
    m = tri.shape[0]
    if m == 0:
        raise ContractViolation("cannot build ray accelerator for an empty mesh")
    centroids = tri.mean(axis=1)
    order: list[np.ndarray] = []
    stack = [np.arange(m)]
    while stack:
        idx = stack.pop()
        if idx.shape[0] <= _LEAF_SIZE:
            order.append(idx)
            continue
        c = centroids[idx]
        axis = int(np.argmax(c.max(axis=0) - c.min(axis=0)))
        srt = idx[np.argsort(c[:, axis], kind="stable")]
        half = srt.shape[0] // 2
        stack.append(srt[half:])
        stack.append(srt[:half])
    starts = np.zeros(len(order), dtype=np.int64)
    counts = np.zeros(len(order), dtype=np.int64)
    perm = np.concatenate(order)
    pos = 0
    for k, leaf in enumerate(order):
        starts[k] = pos
        counts[k] = leaf.shape[0]
        pos += leaf.shape[0]
    tri_p = tri[perm]
    leaf_lo = np.stack([tri_p[s : s + c].min(axis=(0, 1)) for s, c in zip(starts, counts)])
    leaf_hi = np.stack([tri_p[s : s + c].max(axis=(0, 1)) for s, c in zip(starts, counts)])
    return MeshAccel(
        v0=np.ascontiguousarray(tri_p[:, 0]),
        e1=np.ascontiguousarray(tri_p[:, 1] - tri_p[:, 0]),
        e2=np.ascontiguousarray(tri_p[:, 2] - tri_p[:, 0]),
        leaf_lo=np.ascontiguousarray(leaf_lo),
        leaf_hi=np.ascontiguousarray(leaf_hi),
        leaf_start=starts,
        leaf_count=counts,
        scene_lo=tri.min(axis=(0, 1)),
        scene_hi=tri.max(axis=(0, 1)),
        face_origin=perm,
    )


def cast_rays(accel: MeshAccel, origin: np.ndarray, dirs: np.ndarray
              ) -> tuple[np.ndarray, np.ndarray]:
    """Nearest-hit ray parameters and original face ids (-1 on miss)."""
    n = dirs.shape[0]
    t = np.zeros(n, dtype=np.float64)
    hit = np.zeros(n, dtype=np.int64)
    _raycast_kernel(
        np.ascontiguousarray(origin, dtype=np.float64),
        np.ascontiguousarray(dirs, dtype=np.float64),
        accel.v0, accel.e1, accel.e2,
        accel.leaf_lo, accel.leaf_hi, accel.leaf_start, accel.leaf_count,
        accel.scene_lo, accel.scene_hi, t, hit,
    )
    face = np.where(hit >= 0, accel.face_origin[np.maximum(hit, 0)], -1)
    return t, face


def _pixel_dirs_world(K: Intrinsics, pose: Pose) -> np.ndarray:
    """Unnormalized world-frame ray directions through all pixel centers.

    Camera-frame directions are ((u-cx)/fx, (v-cy)/fy, 1), so the ray
    parameter t of a hit equals its camera-frame z depth directly.
    """
    u = np.arange(K.width, dtype=np.float64)
    v = np.arange(K.height, dtype=np.float64)
    uu, vv = np.meshgrid(u, v)
    d = np.stack(
        [(uu - K.cx) / K.fx, (vv - K.cy) / K.fy, np.ones_like(uu)], axis=-1
    ).reshape(-1, 3)
    return d @ pose.rotation  # R^T applied to each row


@dataclass(frozen=True, eq=False)
class ViewBundle:
    """Everything one rendered view knows about itself."""

    pose: Pose
    K: Intrinsics
    states: tuple[PartArticulation, ...]
    depth: DepthMap
    part_masks: dict[int, BinaryMask]
    interior_mask: BinaryMask
    face_id: np.ndarray

    def __post_init__(self):
        fid = np.asarray(self.face_id, dtype=np.int32)
        if fid.shape != self.depth.shape:
            raise ContractViolation("face id grid must match depth dimensions")
        object.__setattr__(self, "face_id", _freeze(fid))
        object.__setattr__(self, "states", tuple(self.states))

    def foreground(self) -> BinaryMask:
        return BinaryMask((self.face_id >= 0).astype(np.uint8))


@dataclass(frozen=True)
class SweepConfig:
    """Canonical rest-visibility sweep: full-circle azimuths at four
    elevations, radius factor applied to the model diagonal."""

    n_azimuths: int = 8
    elevations: tuple[float, ...] = (-40.0, -15.0, 15.0, 40.0)
    radius_factor: float = 2.5
    azimuth_offset_deg: float = 11.25

    @property
    def n_views(self) -> int:
        return self.n_azimuths * len(self.elevations)

    def poses(self, center: np.ndarray, diag: float) -> list[Pose]:
        out = []
        radius = self.radius_factor * diag
        for ei, el_deg in enumerate(self.elevations):
            el = math.radians(el_deg)
            for ai in range(self.n_azimuths):
                az = math.radians(self.azimuth_offset_deg + 360.0 * ai / self.n_azimuths)
                offset = np.array(
                    [math.sin(az) * math.cos(el), math.sin(el), -math.cos(az) * math.cos(el)]
                )
                out.append(look_at_pose(center + radius * offset, center))
        return out

    def to_json(self) -> dict:
        return {
            "n_azimuths": self.n_azimuths,
            "elevations": list(self.elevations),
            "radius_factor": self.radius_factor,
            "azimuth_offset_deg": self.azimuth_offset_deg,
        }


_rest_visible_cache: "weakref.WeakKeyDictionary" = weakref.WeakKeyDictionary()


def rest_visible_faces(model: ArticulatedModel, K: Intrinsics,
                       sweep: SweepConfig = SweepConfig()) -> np.ndarray:
    """Boolean flag per face: hit by at least one rest-state sweep render.

    Cached per model instance; the sweep is the package's concrete choice
    of "all viewpoints" for the revealed-face interior rule.
    """
    per_model = _rest_visible_cache.setdefault(model, {})
    key = (K.width, K.height, K.fx, K.fy, sweep)
    if key in per_model:
        return per_model[key]
    accel = build_accel(model.mesh)
    visible = np.zeros(model.mesh.n_faces, dtype=bool)
    for pose in sweep.poses(model.center(), model.diagonal()):
        dirs = _pixel_dirs_world(K, pose)
        _, face = cast_rays(accel, pose.camera_center, dirs)
        visible[face[face >= 0]] = True
    visible = _freeze(visible)
    per_model[key] = visible
    return visible


def raycast_render(model: ArticulatedModel, states: list[PartArticulation],
                   pose: Pose, K: Intrinsics,
                   sweep: SweepConfig = SweepConfig(),
                   rest_visible: Optional[np.ndarray] = None) -> ViewBundle:
    """Render one articulated view: depth, face ids, part and interior masks."""
    mesh = articulated_mesh(model, states)
    accel = build_accel(mesh)
    dirs = _pixel_dirs_world(K, pose)
    t, face = cast_rays(accel, pose.camera_center, dirs)
    h, w = K.height, K.width
    face_grid = face.reshape(h, w).astype(np.int32)
    depth = DepthMap(np.where(face_grid >= 0, t.reshape(h, w), 0.0).astype(np.float32))
    part_of_face = model.mesh.face_part_id
    part_masks = {}
    for tpl in model.parts:
        sel = (face_grid >= 0) & (part_of_face[np.maximum(face_grid, 0)] == tpl.part_id)
        part_masks[tpl.part_id] = BinaryMask(sel.astype(np.uint8))
    if rest_visible is None:
        rest_visible = rest_visible_faces(model, K, sweep)
    # Interior = revealed-only faces of the static body. Moving parts also
    # expose rest-hidden faces (a door's back), but those travel with the
    # articulation and are not the object's interior structure.
    static = part_of_face[np.maximum(face_grid, 0)] == 0
    revealed = (face_grid >= 0) & static & ~rest_visible[np.maximum(face_grid, 0)]
    return ViewBundle(
        pose=pose, K=K, states=tuple(states), depth=depth,
        part_masks=part_masks, interior_mask=BinaryMask(revealed.astype(np.uint8)),
        face_id=face_grid,
    )


def interior_pixels(model: ArticulatedModel, states: list[PartArticulation],
                    pose: Pose, K: Intrinsics,
                    sweep: SweepConfig = SweepConfig()) -> BinaryMask:
    """Mask of pixels whose hit face is revealed only by articulation."""
    return raycast_render(model, states, pose, K, sweep).interior_mask
