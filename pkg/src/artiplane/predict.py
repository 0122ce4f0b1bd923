"""Prediction sources: the seam where neural predictors were excised.

A prediction source supplies, per view: a depth map, 2-D interior plane
detections with camera-frame normals, articulated-part detections with
motion parameters, and pixel-to-point correspondences for pose solving.
The oracle source derives all of these from ground truth and corrupts
them with a configurable noise model; the external source reads the
same content from a documented directory layout, so real model outputs
can be dropped in without touching the pipeline.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import ndimage

from . import io as fio
from .core import BinaryMask, DepthMap, unit_vector
from .errors import ContractViolation
from .kinematics import MotionParams, MotionType
from .pose import (
    Correspondence,
    CorrespondenceNoise,
    correspondences_from_json,
    correspondences_to_json,
    oracle_correspondences,
)
from .robustfit import PlaneDetection2D, mask_bbox
from .synth.dataset import GroundTruth

DEFAULT_CORRESPONDENCES = 2048


def derive_seed(*parts: int) -> int:
    """Stable sub-seed from a tuple of integers."""
    return int(np.random.SeedSequence([int(p) & 0x7FFFFFFF for p in parts]).generate_state(1)[0])


@dataclass(frozen=True)
class NoiseSpec:
    """Per-channel corruption applied to oracle predictions.

    mask_morph_px is signed: positive dilates masks, negative erodes.
    """

    depth_sigma: float = 0.0
    mask_morph_px: int = 0
    corr: CorrespondenceNoise = field(default_factory=CorrespondenceNoise)
    motion_axis_jitter_deg: float = 0.0
    motion_origin_jitter: float = 0.0
    motion_value_jitter: float = 0.0

    def __post_init__(self):
        for name in ("depth_sigma", "motion_axis_jitter_deg",
                     "motion_origin_jitter", "motion_value_jitter"):
            if getattr(self, name) < 0:
                raise ContractViolation(f"{name} must be >= 0")

    def to_json(self) -> dict:
        return {
            "depth_sigma": self.depth_sigma,
            "mask_morph_px": self.mask_morph_px,
            "corr": self.corr.to_json(),
            "motion_axis_jitter_deg": self.motion_axis_jitter_deg,
            "motion_origin_jitter": self.motion_origin_jitter,
            "motion_value_jitter": self.motion_value_jitter,
        }

    @staticmethod
    def from_json(d: dict) -> "NoiseSpec":
        d = dict(d)
        corr = d.pop("corr", {})
        return NoiseSpec(corr=CorrespondenceNoise.from_json(corr), **d)

    def with_channel(self, channel: str, level: float) -> "NoiseSpec":
        """Copy with one noise channel set to `level`."""
        corr_fields = {"sigma_px", "sigma_pt", "outlier_fraction"}
        base = self.to_json()
        if channel in corr_fields:
            base["corr"][channel] = level
        elif channel == "mask_morph_px":
            base[channel] = int(level)
        elif channel in base:
            base[channel] = level
        else:
            raise ContractViolation(f"unknown noise channel {channel!r}")
        return NoiseSpec.from_json(base)


@dataclass(frozen=True, eq=False)
class PartDetection:
    """A detected articulated part: 2-D mask plus motion parameters.

    `gt_part_id` is evaluation provenance (which part the detection
    actually covers); oracle sources fill it, real predictors leave it
    None and evaluation falls back to the matched part.
    """

    mask: BinaryMask
    motion: MotionParams
    gt_part_id: Optional[int] = None

    def __post_init__(self):
        if self.mask.count() == 0:
            raise ContractViolation("part detection mask must be nonempty")


@dataclass(frozen=True, eq=False)
class ViewPredictions:
    """Everything the pipeline consumes for one view."""

    depth: DepthMap
    plane_detections: tuple[PlaneDetection2D, ...]
    part_detections: tuple[PartDetection, ...]
    correspondences: tuple[Correspondence, ...]

    def __post_init__(self):
        object.__setattr__(self, "plane_detections", tuple(self.plane_detections))
        object.__setattr__(self, "part_detections", tuple(self.part_detections))
        object.__setattr__(self, "correspondences", tuple(self.correspondences))


def _morph_mask(mask: BinaryMask, px: int) -> BinaryMask:
    if px == 0:
        return mask
    m = mask.as_bool()
    if px > 0:
        m = ndimage.binary_dilation(m, iterations=px)
    else:
        m = ndimage.binary_erosion(m, iterations=-px)
    return BinaryMask(m.astype(np.uint8))


def _jitter_motion(m: MotionParams, noise: NoiseSpec, rng: np.random.Generator
                   ) -> MotionParams:
    axis = np.array(m.axis)
    if noise.motion_axis_jitter_deg > 0:
        ref = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
        b1 = unit_vector(np.cross(axis, ref))
        b2 = np.cross(axis, b1)
        phi = rng.uniform(0.0, 2.0 * math.pi)
        alpha = math.radians(noise.motion_axis_jitter_deg)
        axis = math.cos(alpha) * axis + math.sin(alpha) * (
            math.cos(phi) * b1 + math.sin(phi) * b2
        )
        axis = unit_vector(axis)
    origin = m.origin
    if origin is not None and noise.motion_origin_jitter > 0:
        origin = origin + rng.normal(0.0, noise.motion_origin_jitter, 3)
    value = m.value
    if noise.motion_value_jitter > 0:
        value = value + float(rng.normal(0.0, noise.motion_value_jitter))
    return MotionParams(m.mtype, axis, origin, value)


class OraclePredictionSource:
    """Ground-truth-backed predictions with optional noise.

    Plane detections are the per-view pixel supports of the GT planes
    (at least `min_detection_pixels` pixels) with GT normals rotated
    into the camera frame. Part detections cover exactly the parts
    articulated in the view. Correspondences follow the pose module's
    oracle. All randomness is derived from (seed, view, channel).
    """

    def __init__(self, gt: GroundTruth, noise: NoiseSpec = NoiseSpec(), seed: int = 0,
                 n_correspondences: int = DEFAULT_CORRESPONDENCES,
                 min_detection_pixels: int = 1):
        self.gt = gt
        self.noise = noise
        self.seed = seed
        self.n_correspondences = n_correspondences
        self.min_detection_pixels = min_detection_pixels

    def n_views(self) -> int:
        return len(self.gt.bundles)

    def for_view(self, view_index: int) -> ViewPredictions:
        gt = self.gt
        bundle = gt.bundles[view_index]
        h, w = bundle.depth.shape
        wh = w * h

        depth_values = np.array(bundle.depth.values, dtype=np.float64)
        if self.noise.depth_sigma > 0:
            rng = np.random.default_rng(derive_seed(self.seed, view_index, 0))
            valid = depth_values > 0
            depth_values[valid] += rng.normal(0.0, self.noise.depth_sigma, int(valid.sum()))
            depth_values[valid] = np.maximum(depth_values[valid], 1e-6)
        depth = DepthMap(depth_values.astype(np.float32))

        plane_dets: list[PlaneDetection2D] = []
        for plane, support in gt.gt_planes:
            packed = support.pixel_index
            sel = (packed // wh) == view_index
            if int(sel.sum()) < self.min_detection_pixels:
                continue
            pix = packed[sel] % wh
            grid = np.zeros(wh, dtype=np.uint8)
            grid[pix] = 1
            mask = _morph_mask(BinaryMask(grid.reshape(h, w)), self.noise.mask_morph_px)
            if mask.count() < self.min_detection_pixels:
                continue
            normal_cam = bundle.pose.rotation @ plane.normal
            plane_dets.append(
                PlaneDetection2D("planar", mask_bbox(mask), mask, normal_cam)
            )

        part_dets: list[PartDetection] = []
        rng_motion = np.random.default_rng(derive_seed(self.seed, view_index, 1))
        for state in bundle.states:
            mask = _morph_mask(bundle.part_masks[state.part_id], self.noise.mask_morph_px)
            if mask.count() == 0:
                continue
            motion = _jitter_motion(state.motion, self.noise, rng_motion)
            part_dets.append(PartDetection(mask, motion, state.part_id))

        corrs = oracle_correspondences(
            bundle, self.n_correspondences, self.noise.corr,
            derive_seed(self.seed, view_index, 2), gt.model,
        )
        return ViewPredictions(depth, tuple(plane_dets), tuple(part_dets), tuple(corrs))


class ExternalPredictionSource:
    """Predictions read from a scene directory (see `write_predictions`)."""

    def __init__(self, scene_dir):
        self.root = Path(scene_dir)
        if not self.root.is_dir():
            raise ContractViolation(f"prediction directory {self.root} does not exist")

    def n_views(self) -> int:
        return len(sorted(self.root.glob("view_*")))

    def for_view(self, view_index: int) -> ViewPredictions:
        vdir = self.root / f"view_{view_index:03d}"
        if not vdir.is_dir():
            raise ContractViolation(f"missing prediction view directory {vdir}")
        depth = fio.load_depth(vdir / "depth.f32")
        plane_dets = []
        for det in json.loads((vdir / "detections.json").read_text()):
            mask = fio.load_mask_pgm(vdir / det["mask_file"])
            plane_dets.append(
                PlaneDetection2D(det["label"], tuple(det["bbox"]), mask,
                                 np.asarray(det["normal"], dtype=np.float64))
            )
        part_dets = []
        for det in json.loads((vdir / "articulations.json").read_text()):
            mask = fio.load_mask_pgm(vdir / det["mask_file"])
            part_dets.append(PartDetection(mask, MotionParams.from_json(det["motion"]),
                                           det.get("gt_part_id")))
        corrs = correspondences_from_json(
            json.loads((vdir / "correspondences.json").read_text())
        )
        return ViewPredictions(depth, tuple(plane_dets), tuple(part_dets), tuple(corrs))


def write_predictions(source, n_views: int, scene_dir) -> None:
    """Materialize a prediction source to the external-source layout.

    Layout per view directory `view_{i:03d}/`:
      depth.f32 (+ .json sidecar)
      detections.json       [{label, bbox, mask_file, normal}]
      det_mask_{k:02d}.pgm
      articulations.json    [{mask_file, motion}]
      part_mask_{k:02d}.pgm
      correspondences.json  [{pixel, point}]
    """
    root = Path(scene_dir)
    for vi in range(n_views):
        preds = source.for_view(vi)
        vdir = root / f"view_{vi:03d}"
        vdir.mkdir(parents=True, exist_ok=True)
        fio.save_depth(preds.depth, vdir / "depth.f32")
        dets = []
        for k, det in enumerate(preds.plane_detections):
            rel = f"det_mask_{k:02d}.pgm"
            fio.save_mask_pgm(det.mask, vdir / rel)
            dets.append(
                {
                    "label": det.label,
                    "bbox": list(det.bbox),
                    "mask_file": rel,
                    "normal": [float(x) for x in det.normal_cam],
                }
            )
        fio.write_json(dets, vdir / "detections.json")
        arts = []
        for k, det in enumerate(preds.part_detections):
            rel = f"part_mask_{k:02d}.pgm"
            fio.save_mask_pgm(det.mask, vdir / rel)
            arts.append({"mask_file": rel, "motion": det.motion.to_json(),
                         "gt_part_id": det.gt_part_id})
        fio.write_json(arts, vdir / "articulations.json")
        fio.write_json(correspondences_to_json(list(preds.correspondences)),
                       vdir / "correspondences.json")
