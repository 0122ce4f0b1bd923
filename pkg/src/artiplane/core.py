"""Core geometric types and camera math.

Conventions used throughout the package:

* World frame is right-handed, +y up. Objects face the -z direction.
* Camera frame follows the usual computer-vision layout: +x right,
  +y down, +z forward along the optical axis.
* A Pose maps world to camera: x_cam = R @ x_world + t.
* Depth is the camera-frame z coordinate of a surface point (not ray
  length). Invalid pixels carry depth 0.
* Pixel (u, v) means column u, row v; the pixel center sits at the
  integer coordinate, so backprojection of (cx, cy) lands on the
  optical axis.
* A plane with unit normal n and offset o contains exactly the points
  with n . x + o = 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from .errors import ContractViolation, DegenerateInput

_UNIT_TOL = 1e-9


def unit_vector(v) -> np.ndarray:
    """Return v / ||v|| as float64, raising on near-zero input."""
    v = np.asarray(v, dtype=np.float64)
    n = float(np.linalg.norm(v))
    if n < 1e-15:
        raise DegenerateInput("cannot normalize a zero vector")
    return v / n


def _freeze(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Plane:
    """Oriented plane n . x + o = 0 with unit normal n."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        n = np.asarray(self.normal, dtype=np.float64).reshape(3)
        if abs(float(np.linalg.norm(n)) - 1.0) > _UNIT_TOL:
            raise ContractViolation("plane normal must be unit length")
        object.__setattr__(self, "normal", _freeze(n))
        object.__setattr__(self, "offset", float(self.offset))

    def signed_distance(self, points: np.ndarray) -> np.ndarray:
        """Signed distances n . x + o for an (n, 3) array of points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.normal + self.offset

    def flipped(self) -> "Plane":
        return Plane(-self.normal, -self.offset)

    def project(self, points: np.ndarray) -> np.ndarray:
        """Orthogonal projection of points onto the plane."""
        pts = np.asarray(points, dtype=np.float64)
        d = pts @ self.normal + self.offset
        return pts - np.outer(d, self.normal)


@dataclass(frozen=True, eq=False)
class Intrinsics:
    """Pinhole intrinsics in pixels for a width x height image."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ContractViolation("focal lengths must be positive")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ContractViolation("principal point must lie inside the image")

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def to_json(self) -> dict:
        return {
            "fx": self.fx, "fy": self.fy, "cx": self.cx, "cy": self.cy,
            "width": self.width, "height": self.height,
        }

    @staticmethod
    def from_json(d: dict) -> "Intrinsics":
        return Intrinsics(d["fx"], d["fy"], d["cx"], d["cy"], d["width"], d["height"])


def default_intrinsics(size: int = 256, vfov_deg: float = 60.0) -> Intrinsics:
    """Shared rendering intrinsics: square image, 60 degree vertical FOV.

    For size 256 this gives fx = fy = 128 / tan(30 deg) ~ 221.7025 with the
    principal point at (128, 128).
    """
    f = (size / 2.0) / math.tan(math.radians(vfov_deg / 2.0))
    return Intrinsics(fx=f, fy=f, cx=size / 2.0, cy=size / 2.0, width=size, height=size)


@dataclass(frozen=True, eq=False)
class RigidTransform:
    """Rotation followed by translation: x -> R @ x + t."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        object.__setattr__(self, "rotation", _freeze(R))
        object.__setattr__(self, "translation", _freeze(t))

    @staticmethod
    def identity() -> "RigidTransform":
        return RigidTransform(np.eye(3), np.zeros(3))

    def apply(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def inverse(self) -> "RigidTransform":
        Rt = self.rotation.T
        return RigidTransform(Rt, -Rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """self after other: x -> self(other(x))."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera pose: x_cam = rotation @ x_world + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if np.max(np.abs(R @ R.T - np.eye(3))) > 1e-6 or np.linalg.det(R) < 0:
            raise ContractViolation("pose rotation must be orthonormal with det +1")
        object.__setattr__(self, "rotation", _freeze(R))
        object.__setattr__(self, "translation", _freeze(t))

    @property
    def camera_center(self) -> np.ndarray:
        """Camera position in world coordinates."""
        return -self.rotation.T @ self.translation

    def world_to_cam(self) -> RigidTransform:
        return RigidTransform(self.rotation, self.translation)

    def cam_to_world(self) -> RigidTransform:
        return self.world_to_cam().inverse()

    def to_json(self) -> dict:
        return {
            "rotation": [[float(x) for x in row] for row in self.rotation],
            "translation": [float(x) for x in self.translation],
        }

    @staticmethod
    def from_json(d: dict) -> "Pose":
        return Pose(np.array(d["rotation"]), np.array(d["translation"]))


def look_at_pose(position, target, up=(0.0, 1.0, 0.0)) -> Pose:
    """Pose of a camera at `position` looking toward `target`.

    The image x axis points to the camera's right and the image y axis
    points down, so `up` (world up) maps to negative image y.
    """
    position = np.asarray(position, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    z = unit_vector(target - position)
    x = np.cross(z, np.asarray(up, dtype=np.float64))
    nx = np.linalg.norm(x)
    if nx < 1e-12:
        raise DegenerateInput("view direction parallel to up vector")
    x = x / nx
    y = np.cross(z, x)
    R = np.stack([x, y, z])
    return Pose(R, -R @ position)


@dataclass(frozen=True, eq=False)
class DepthMap:
    """Per-pixel depth along the optical axis, 0 marking invalid pixels."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float32)
        if v.ndim != 2:
            raise ContractViolation("depth map must be 2-D")
        if not np.all(np.isfinite(v)) or np.any(v < 0):
            raise ContractViolation("depths must be finite and non-negative")
        object.__setattr__(self, "values", _freeze(v))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class BinaryMask:
    """Height x width grid of {0, 1}."""

    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values)
        if v.ndim != 2:
            raise ContractViolation("mask must be 2-D")
        if v.dtype == bool:
            v = v.astype(np.uint8)
        if not np.isin(v, (0, 1)).all():
            raise ContractViolation("mask values must be 0 or 1")
        object.__setattr__(self, "values", _freeze(v.astype(np.uint8)))

    @property
    def shape(self):
        return self.values.shape

    def count(self) -> int:
        return int(self.values.sum())

    def as_bool(self) -> np.ndarray:
        return self.values.astype(bool)


@dataclass(frozen=True, eq=False)
class PointCloud:
    """3-D points, optionally tagged with the flat pixel index they came from."""

    points: np.ndarray
    pixel_index: Optional[np.ndarray] = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(pts)):
            raise ContractViolation("point coordinates must be finite")
        object.__setattr__(self, "points", _freeze(pts))
        if self.pixel_index is not None:
            idx = np.asarray(self.pixel_index, dtype=np.int64).reshape(-1)
            if idx.shape[0] != pts.shape[0]:
                raise ContractViolation("pixel_index length must match point count")
            object.__setattr__(self, "pixel_index", _freeze(idx))

    def __len__(self) -> int:
        return self.points.shape[0]

    def subset(self, idx) -> "PointCloud":
        pix = None if self.pixel_index is None else self.pixel_index[idx]
        return PointCloud(self.points[idx], pix)


@dataclass(frozen=True, eq=False)
class TriMesh:
    """Indexed triangle mesh with a part id per face.

    Part ids must form a contiguous range starting at 0; id 0 is the
    static body by convention, movable parts take 1..P.
    """

    vertices: np.ndarray
    faces: np.ndarray
    face_part_id: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        f = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        p = np.asarray(self.face_part_id, dtype=np.int64).reshape(-1)
        if p.shape[0] != f.shape[0]:
            raise ContractViolation("face_part_id length must match face count")
        if f.size and (f.min() < 0 or f.max() >= v.shape[0]):
            raise ContractViolation("face indices out of range")
        if p.size:
            ids = np.unique(p)
            if ids[0] != 0 or not np.array_equal(ids, np.arange(ids.shape[0])):
                raise ContractViolation("part ids must be contiguous from 0")
        object.__setattr__(self, "vertices", _freeze(v))
        object.__setattr__(self, "faces", _freeze(f))
        object.__setattr__(self, "face_part_id", _freeze(p))

    @property
    def n_faces(self) -> int:
        return self.faces.shape[0]

    def triangles(self) -> np.ndarray:
        """(n_faces, 3, 3) array of triangle corner positions."""
        return self.vertices[self.faces]

    def face_areas(self) -> np.ndarray:
        tri = self.triangles()
        cr = np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0])
        return 0.5 * np.linalg.norm(cr, axis=1)

    def bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Axis-aligned bounding box (min corner, max corner)."""
        return self.vertices.min(axis=0), self.vertices.max(axis=0)

    def submesh(self, face_sel) -> "TriMesh":
        """Mesh restricted to the selected faces (part ids re-packed)."""
        faces = self.faces[face_sel]
        part = self.face_part_id[face_sel]
        used = np.unique(faces)
        remap = np.full(self.vertices.shape[0], -1, dtype=np.int64)
        remap[used] = np.arange(used.shape[0])
        uniq = np.unique(part)
        pmap = {int(p): i for i, p in enumerate(uniq)}
        part = np.array([pmap[int(p)] for p in part], dtype=np.int64)
        return TriMesh(self.vertices[used], remap[faces], part)


# ---------------------------------------------------------------------------
# Operations


def backproject(depth: DepthMap, K: Intrinsics, mask: BinaryMask) -> PointCloud:
    """Lift masked pixels with positive depth into the camera frame.

    Each selected pixel (u, v) with depth z yields z * K^-1 (u, v, 1).
    The flat pixel index v * width + u is kept with each point.
    """
    h, w = depth.shape
    if (h, w) != mask.shape:
        raise ContractViolation("depth and mask dimensions differ")
    if (w, h) != (K.width, K.height):
        raise ContractViolation("depth dimensions do not match intrinsics")
    sel = mask.as_bool() & (depth.values > 0)
    vv, uu = np.nonzero(sel)
    z = depth.values[vv, uu].astype(np.float64)
    x = (uu - K.cx) / K.fx * z
    y = (vv - K.cy) / K.fy * z
    return PointCloud(np.stack([x, y, z], axis=1), vv.astype(np.int64) * w + uu)


def project_points(K: Intrinsics, points: np.ndarray) -> np.ndarray:
    """Project camera-frame points to pixel coordinates (n, 2)."""
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    z = pts[:, 2]
    return np.stack([K.fx * pts[:, 0] / z + K.cx, K.fy * pts[:, 1] / z + K.cy], axis=1)


Direction = Literal["cam_to_world", "world_to_cam"]


def transform_points(pose: Pose, cloud: PointCloud, direction: Direction) -> PointCloud:
    """Rigidly map a cloud between world and camera frames of `pose`."""
    if direction == "world_to_cam":
        tf = pose.world_to_cam()
    elif direction == "cam_to_world":
        tf = pose.cam_to_world()
    else:
        raise ContractViolation(f"unknown direction {direction!r}")
    return PointCloud(tf.apply(cloud.points), cloud.pixel_index)


def plane_signed_distance(plane: Plane, x) -> float:
    """Signed distance n . x + o of a single point."""
    return float(np.dot(plane.normal, np.asarray(x, dtype=np.float64)) + plane.offset)


def _canonical_plane_sign(normal: np.ndarray, offset: float) -> Plane:
    # Prefer the orientation with negative offset; for planes through the
    # origin fall back to the lexicographically positive (z, y, x) normal.
    if offset > 1e-12:
        return Plane(-normal, -offset)
    if offset < -1e-12:
        return Plane(normal, offset)
    for c in (2, 1, 0):
        if normal[c] > 1e-12:
            return Plane(normal, 0.0)
        if normal[c] < -1e-12:
            return Plane(-normal, 0.0)
    return Plane(normal, 0.0)


def fit_plane_lsq(points) -> Plane:
    """Total-least-squares plane through >= 3 non-collinear points.

    The normal is the direction of smallest scatter about the centroid;
    its sign is canonicalized so the offset is <= 0 when possible.
    """
    if isinstance(points, PointCloud):
        pts = points.points
    else:
        pts = np.asarray(points, dtype=np.float64).reshape(-1, 3)
    if pts.shape[0] < 3:
        raise DegenerateInput("plane fit needs at least 3 points")
    centroid = pts.mean(axis=0)
    centered = pts - centroid
    # Row space singular values: s[1] ~ 0 means the points are collinear.
    _, s, vt = np.linalg.svd(centered, full_matrices=False)
    scale = max(s[0], 1e-300)
    if s[1] / scale < 1e-10:
        raise DegenerateInput("points are collinear; plane is undefined")
    normal = vt[2]
    normal = normal / np.linalg.norm(normal)
    offset = -float(normal @ centroid)
    return _canonical_plane_sign(normal, offset)


def normal_angle_deg(n1, n2) -> float:
    """Unsigned angle between two unit normals, in [0, 90] degrees."""
    d = abs(float(np.dot(np.asarray(n1, dtype=np.float64), np.asarray(n2, dtype=np.float64))))
    return math.degrees(math.acos(min(d, 1.0)))


def oriented_angle_deg(n1, n2) -> float:
    """Angle between oriented unit normals, in [0, 180] degrees."""
    d = float(np.dot(np.asarray(n1, dtype=np.float64), np.asarray(n2, dtype=np.float64)))
    return math.degrees(math.acos(max(-1.0, min(1.0, d))))


def rotation_angle_deg(R: np.ndarray) -> float:
    """Geodesic rotation angle of a rotation matrix, in degrees."""
    c = (float(np.trace(R)) - 1.0) / 2.0
    return math.degrees(math.acos(max(-1.0, min(1.0, c))))


def sample_mesh_surface(mesh: TriMesh, n: int, rng: np.random.Generator,
                        face_sel=None) -> np.ndarray:
    """Area-uniform surface samples, optionally restricted to a face subset."""
    tri = mesh.triangles()
    if face_sel is not None:
        tri = tri[face_sel]
    if tri.shape[0] == 0:
        raise DegenerateInput("no faces to sample")
    areas = 0.5 * np.linalg.norm(np.cross(tri[:, 1] - tri[:, 0], tri[:, 2] - tri[:, 0]), axis=1)
    total = areas.sum()
    if total <= 0:
        raise DegenerateInput("mesh has zero surface area")
    which = rng.choice(tri.shape[0], size=n, p=areas / total)
    # Square-root trick for uniform barycentric coordinates.
    r1 = np.sqrt(rng.random(n))
    r2 = rng.random(n)
    a, b, c = tri[which, 0], tri[which, 1], tri[which, 2]
    return (1 - r1)[:, None] * a + (r1 * (1 - r2))[:, None] * b + (r1 * r2)[:, None] * c
