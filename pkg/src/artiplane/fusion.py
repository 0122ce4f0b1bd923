"""Multi-view plane fusion in the world frame.

Per-view planes are projected to the world frame with the per-view
camera pose, then merged pairwise: a smaller plane is absorbed by a
larger one when their normals differ by less than the angle threshold
(15 degrees) and every support point of the smaller plane lies within
the subsume distance (0.3 units) of the larger plane. Absorbed support
is projected onto the surviving plane, whose parameters never change.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Plane, PointCloud, Pose, TriMesh, oriented_angle_deg
from .errors import ContractViolation, DegenerateInput

_SHELL_INFLATE = 0.01


@dataclass(frozen=True)
class FusionParams:
    angle_thresh_deg: float = 15.0
    subsume_dist: float = 0.3

    def __post_init__(self):
        if not 0 < self.angle_thresh_deg < 90:
            raise ContractViolation("angle threshold must be in (0, 90)")
        if self.subsume_dist <= 0:
            raise ContractViolation("subsume distance must be positive")

    def to_json(self) -> dict:
        return {"angle_thresh_deg": self.angle_thresh_deg, "subsume_dist": self.subsume_dist}

    @staticmethod
    def from_json(d: dict) -> "FusionParams":
        return FusionParams(**d)


@dataclass(frozen=True, eq=False)
class WorldPlane:
    """A fused plane with its world-frame support and contributing views."""

    plane: Plane
    support: PointCloud
    source_views: frozenset[int]

    def __post_init__(self):
        object.__setattr__(self, "source_views", frozenset(self.source_views))

    @property
    def size(self) -> int:
        return len(self.support)


def plane_to_world(plane_cam: Plane, support_cam: PointCloud, pose: Pose,
                   view_index: int = 0) -> WorldPlane:
    """Express a camera-frame plane in the world frame of `pose`.

    With x_cam = R x_world + t, the world normal is R^T n and the world
    offset is o + n . t, which keeps all transformed support points on
    the plane.
    """
    n_world = pose.rotation.T @ plane_cam.normal
    o_world = plane_cam.offset + float(plane_cam.normal @ pose.translation)
    support_world = PointCloud(
        pose.cam_to_world().apply(support_cam.points), support_cam.pixel_index
    )
    return WorldPlane(Plane(n_world, o_world), support_world, frozenset({view_index}))


def merge_planes(planes: list[WorldPlane], params: FusionParams = FusionParams()
                 ) -> list[WorldPlane]:
    """Pairwise absorb smaller planes into larger ones until a fixpoint.

    "Larger" means more support points. Support of an absorbed plane is
    orthogonally projected onto the absorbing plane; survivor parameters
    are left untouched. Normals are compared as oriented directions, so
    the two faces of a thin slab never merge.
    """
    current = list(planes)
    while True:
        current.sort(key=lambda wp: -wp.size)
        merged_any = False
        absorbed: set[int] = set()
        result: list[WorldPlane] = []
        for i, big in enumerate(current):
            if i in absorbed:
                continue
            acc = big
            for j in range(i + 1, len(current)):
                if j in absorbed:
                    continue
                small = current[j]
                if oriented_angle_deg(acc.plane.normal, small.plane.normal) >= params.angle_thresh_deg:
                    continue
                dist = float(np.abs(acc.plane.signed_distance(small.support.points)).max())
                if dist >= params.subsume_dist:
                    continue
                projected = acc.plane.project(small.support.points)
                pix = None
                if acc.support.pixel_index is not None and small.support.pixel_index is not None:
                    pix = np.concatenate([acc.support.pixel_index, small.support.pixel_index])
                acc = WorldPlane(
                    acc.plane,
                    PointCloud(np.concatenate([acc.support.points, projected]), pix),
                    acc.source_views | small.source_views,
                )
                absorbed.add(j)
                merged_any = True
            result.append(acc)
        current = result
        if not merged_any:
            return current


def bound_rectangle(wp: WorldPlane) -> np.ndarray:
    """Tight in-plane rectangle around the support, as 4 corners.

    Axes follow the two principal scatter directions of the support
    projected onto the plane; corners come back in a consistent winding
    around the plane normal.
    """
    if wp.size < 3:
        raise DegenerateInput("rectangle needs at least 3 support points")
    flat = wp.plane.project(wp.support.points)
    c = flat.mean(axis=0)
    centered = flat - c
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    if s[1] / max(s[0], 1e-300) < 1e-10:
        raise DegenerateInput("support is collinear; rectangle is undefined")
    e1, e2 = vt[0], vt[1]
    if np.dot(np.cross(e1, e2), wp.plane.normal) < 0:
        e2 = -e2
    a = centered @ e1
    b = centered @ e2
    corners = [
        c + a.min() * e1 + b.min() * e2,
        c + a.max() * e1 + b.min() * e2,
        c + a.max() * e1 + b.max() * e2,
        c + a.min() * e1 + b.max() * e2,
    ]
    return np.stack(corners)


def clip_to_shell(planes: list[WorldPlane], shell: TriMesh) -> list[WorldPlane]:
    """Drop support outside the shell's inflated bounding box.

    Planes left with fewer than 3 support points are removed entirely.
    """
    if shell.n_faces == 0:
        raise ContractViolation("shell mesh is empty")
    lo, hi = shell.bounds()
    pad = _SHELL_INFLATE * (hi - lo)
    lo = lo - pad
    hi = hi + pad
    out: list[WorldPlane] = []
    for wp in planes:
        pts = wp.support.points
        keep = np.all((pts >= lo) & (pts <= hi), axis=1)
        if keep.sum() < 3:
            continue
        if keep.all():
            out.append(wp)
        else:
            out.append(WorldPlane(wp.plane, wp.support.subset(keep), wp.source_views))
    return out
