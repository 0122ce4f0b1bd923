"""Evaluation metrics: plane-set geometry, motion parameters, poses.

Plane sets are compared by (a) one-way Chamfer distance from the pooled
ground-truth supports to the pooled predicted supports, (b) mean normal
angle difference over assigned plane pairs, and (c) mean plane parameter
distance ||[n; o]_gt - [n; o]_pred|| with the predicted normal flipped
into the hemisphere of the ground-truth normal.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .core import Plane, PointCloud, normal_angle_deg
from .errors import ContractViolation
from .fusion import WorldPlane
from .kinematics import MotionParams, MotionType
from .recover import chamfer_one_way


@dataclass(frozen=True)
class PlaneSetReport:
    """Plane-set comparison outcome plus the assignment audit table."""

    one_way_cd: Optional[float]
    mean_normal_diff_deg: Optional[float]
    mean_param_diff: Optional[float]
    n_gt: int
    n_pred: int
    n_assigned: int
    n_unassigned_gt: int
    assignment: tuple[dict, ...] = field(default_factory=tuple)

    def to_json(self) -> dict:
        return {
            "one_way_cd": self.one_way_cd,
            "mean_normal_diff_deg": self.mean_normal_diff_deg,
            "mean_param_diff": self.mean_param_diff,
            "n_gt": self.n_gt,
            "n_pred": self.n_pred,
            "n_assigned": self.n_assigned,
            "n_unassigned_gt": self.n_unassigned_gt,
            "assignment": list(self.assignment),
        }


def _param_vector(plane: Plane) -> np.ndarray:
    return np.concatenate([plane.normal, [plane.offset]])


def _aligned_params(gt: Plane, pred: Plane) -> np.ndarray:
    if float(gt.normal @ pred.normal) < 0:
        pred = pred.flipped()
    return _param_vector(pred)


def plane_set_metrics(pred: list[WorldPlane], gt: list[tuple[Plane, PointCloud]]
                      ) -> PlaneSetReport:
    """Compare predicted world planes against ground-truth planes.

    Assignment is greedy in ground-truth order: each GT plane takes the
    unused predicted plane with the smallest parameter distance.
    Unassigned GT planes are excluded from the means and counted. With
    no predictions the distances are reported as None.
    """
    if not gt:
        raise ContractViolation("ground-truth plane set must be nonempty")
    if not pred:
        return PlaneSetReport(None, None, None, len(gt), 0, 0, len(gt))
    gt_support = PointCloud(np.concatenate([s.points for _, s in gt]))
    pred_support = PointCloud(np.concatenate([wp.support.points for wp in pred]))
    cd = chamfer_one_way(gt_support, pred_support)

    unused = set(range(len(pred)))
    rows = []
    normal_diffs = []
    param_diffs = []
    for gi, (gplane, _) in enumerate(gt):
        if not unused:
            rows.append({"gt": gi, "pred": None, "normal_diff_deg": None, "param_diff": None})
            continue
        gvec = _param_vector(gplane)
        best_pi = min(
            unused,
            key=lambda pi: (float(np.linalg.norm(gvec - _aligned_params(gplane, pred[pi].plane))), pi),
        )
        unused.discard(best_pi)
        pdiff = float(np.linalg.norm(gvec - _aligned_params(gplane, pred[best_pi].plane)))
        ndiff = normal_angle_deg(gplane.normal, pred[best_pi].plane.normal)
        rows.append({"gt": gi, "pred": best_pi, "normal_diff_deg": ndiff, "param_diff": pdiff})
        normal_diffs.append(ndiff)
        param_diffs.append(pdiff)
    n_assigned = len(normal_diffs)
    return PlaneSetReport(
        one_way_cd=cd,
        mean_normal_diff_deg=float(np.mean(normal_diffs)) if normal_diffs else None,
        mean_param_diff=float(np.mean(param_diffs)) if param_diffs else None,
        n_gt=len(gt),
        n_pred=len(pred),
        n_assigned=n_assigned,
        n_unassigned_gt=len(gt) - n_assigned,
        assignment=tuple(rows),
    )


@dataclass(frozen=True)
class MotionErrors:
    """Per-detection motion parameter errors against ground truth."""

    type_match: bool
    axis_deg: Optional[float]
    origin_l2: Optional[float]       # distance between axis lines (revolute)
    origin_l2_raw: Optional[float]   # raw point-to-point distance
    magnitude_err: Optional[float]

    def to_json(self) -> dict:
        return {
            "type_match": self.type_match,
            "axis_deg": self.axis_deg,
            "origin_l2": self.origin_l2,
            "origin_l2_raw": self.origin_l2_raw,
            "magnitude_err": self.magnitude_err,
        }


def motion_metrics(pred: MotionParams, gt: MotionParams) -> MotionErrors:
    """Axis/origin/magnitude errors; a type mismatch skips the parameters.

    The origin error projects the origin difference orthogonal to the GT
    axis (an origin is only defined up to sliding along its axis); the
    literal point-to-point distance is also reported.
    """
    if pred.mtype != gt.mtype:
        return MotionErrors(False, None, None, None, None)
    axis_deg = normal_angle_deg(pred.axis, gt.axis)
    magnitude_err = abs(pred.value - gt.value)
    origin_l2 = origin_l2_raw = None
    if gt.mtype == MotionType.REVOLUTE:
        diff = pred.origin - gt.origin
        ortho = diff - (diff @ gt.axis) * gt.axis
        origin_l2 = float(np.linalg.norm(ortho))
        origin_l2_raw = float(np.linalg.norm(diff))
    return MotionErrors(True, axis_deg, origin_l2, origin_l2_raw, magnitude_err)


def format_report_table(rows: list[tuple[str, Optional[float]]], title: str = "") -> str:
    """Aligned two-column plain-text table for metric summaries."""
    width = max((len(name) for name, _ in rows), default=0)
    lines = []
    if title:
        lines.append(title)
        lines.append("-" * max(len(title), width + 12))
    for name, value in rows:
        text = "n/a" if value is None else f"{value:.6g}"
        lines.append(f"{name.ljust(width)}  {text}")
    return "\n".join(lines)
