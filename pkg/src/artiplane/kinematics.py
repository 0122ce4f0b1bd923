"""Part articulations: revolute and prismatic motions.

Revolute magnitudes are degrees, prismatic magnitudes are world units.
A motion origin exists only for revolute motions (any point on the
rotation axis line).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np

from .core import PointCloud, RigidTransform, TriMesh, _freeze
from .errors import ContractViolation

_CANONICAL_AXES = np.array(
    [
        [1.0, 0.0, 0.0],
        [-1.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        [0.0, -1.0, 0.0],
        [0.0, 0.0, 1.0],
        [0.0, 0.0, -1.0],
    ]
)


class MotionType(str, enum.Enum):
    REVOLUTE = "revolute"
    PRISMATIC = "prismatic"


@dataclass(frozen=True, eq=False)
class MotionParams:
    """Motion type, unit axis, origin (revolute only) and magnitude."""

    mtype: MotionType
    axis: np.ndarray
    origin: Optional[np.ndarray]
    value: float

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=np.float64).reshape(3)
        if abs(float(np.linalg.norm(axis)) - 1.0) > 1e-9:
            raise ContractViolation("motion axis must be unit length")
        object.__setattr__(self, "axis", _freeze(axis))
        object.__setattr__(self, "mtype", MotionType(self.mtype))
        object.__setattr__(self, "value", float(self.value))
        if self.mtype == MotionType.PRISMATIC:
            if self.origin is not None:
                raise ContractViolation("prismatic motions carry no origin")
        else:
            if self.origin is None:
                raise ContractViolation("revolute motions require an origin")
            origin = np.asarray(self.origin, dtype=np.float64).reshape(3)
            object.__setattr__(self, "origin", _freeze(origin))

    def with_value(self, value: float) -> "MotionParams":
        return MotionParams(self.mtype, self.axis, self.origin, value)

    def negated(self) -> "MotionParams":
        return self.with_value(-self.value)

    def to_json(self) -> dict:
        return {
            "type": self.mtype.value,
            "axis": [float(x) for x in self.axis],
            "origin": None if self.origin is None else [float(x) for x in self.origin],
            "value": self.value,
        }

    @staticmethod
    def from_json(d: dict) -> "MotionParams":
        origin = d.get("origin")
        return MotionParams(
            MotionType(d["type"]),
            np.asarray(d["axis"], dtype=np.float64),
            None if origin is None else np.asarray(origin, dtype=np.float64),
            float(d["value"]),
        )


@dataclass(frozen=True, eq=False)
class PartArticulation:
    """A part id paired with a concrete motion."""

    part_id: int
    motion: MotionParams

    def to_json(self) -> dict:
        return {"part_id": self.part_id, "motion": self.motion.to_json()}

    @staticmethod
    def from_json(d: dict) -> "PartArticulation":
        return PartArticulation(int(d["part_id"]), MotionParams.from_json(d["motion"]))


def rotation_about_axis(axis: np.ndarray, angle_rad: float) -> np.ndarray:
    """Rodrigues rotation matrix for a unit axis."""
    k = np.asarray(axis, dtype=np.float64)
    K = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.eye(3) + math.sin(angle_rad) * K + (1.0 - math.cos(angle_rad)) * (K @ K)


def motion_to_transform(m: MotionParams) -> RigidTransform:
    """Rigid transform realizing the motion at its current magnitude.

    Revolute: right-hand rotation of `value` degrees about the line
    through `origin` with direction `axis`. Prismatic: translation by
    axis * value.
    """
    if m.mtype == MotionType.PRISMATIC:
        return RigidTransform(np.eye(3), m.axis * m.value)
    R = rotation_about_axis(m.axis, math.radians(m.value))
    return RigidTransform(R, m.origin - R @ m.origin)


Geometry = Union[TriMesh, PointCloud]


def apply_motion(geom: Geometry, m: MotionParams) -> Geometry:
    """Map every vertex/point of the geometry by the motion transform."""
    tf = motion_to_transform(m)
    if isinstance(geom, TriMesh):
        return TriMesh(tf.apply(geom.vertices), geom.faces, geom.face_part_id)
    if isinstance(geom, PointCloud):
        return PointCloud(tf.apply(geom.points), geom.pixel_index)
    raise ContractViolation(f"unsupported geometry type {type(geom).__name__}")


def reverse_motion(geom: Geometry, m: MotionParams) -> Geometry:
    """Undo a motion: equivalent to applying it with negated magnitude."""
    return apply_motion(geom, m.negated())


def snap_axis(axis: np.ndarray) -> np.ndarray:
    """Signed canonical axis with maximal dot product (ties by fixed order)."""
    dots = _CANONICAL_AXES @ np.asarray(axis, dtype=np.float64)
    return _CANONICAL_AXES[int(np.argmax(dots))].copy()


def snap_to_canonical(m: MotionParams, origin_grid: Optional[float] = None) -> MotionParams:
    """Post-process a motion so its axis lies on a canonical axis.

    For revolute motions the origin component along the snapped axis is
    kept; the two orthogonal components are snapped to the nearest
    multiple of `origin_grid` when a grid step is configured, and left
    unchanged otherwise. The magnitude is never touched.
    """
    axis = snap_axis(m.axis)
    if m.mtype == MotionType.PRISMATIC:
        return MotionParams(m.mtype, axis, None, m.value)
    origin = np.array(m.origin)
    if origin_grid is not None and origin_grid > 0:
        ortho = np.abs(axis) < 0.5
        origin[ortho] = np.round(origin[ortho] / origin_grid) * origin_grid
    return MotionParams(m.mtype, axis, origin, m.value)
