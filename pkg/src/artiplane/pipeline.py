"""End-to-end orchestration: generate or load scenes, source predictions,
solve per-view poses, lift and fuse planes, realize motions, evaluate.

Everything is deterministic in (config, seed): artifacts and summaries
are byte-identical across identical invocations. Per-view failures are
recorded and skipped; a scene only counts as a hard failure when an
error escapes its whole processing loop.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import io as fio
from .core import Intrinsics, PointCloud, backproject, default_intrinsics, transform_points
from .errors import ContractViolation, GeometryError
from .fusion import FusionParams, WorldPlane, bound_rectangle, clip_to_shell, merge_planes, plane_to_world
from .kinematics import snap_to_canonical
from .metrics import format_report_table, motion_metrics, plane_set_metrics
from .pose import pose_errors, solve_pnp
from .predict import (
    DEFAULT_CORRESPONDENCES,
    ExternalPredictionSource,
    NoiseSpec,
    OraclePredictionSource,
    derive_seed,
)
from .recover import part_chamfer_table, realize, segment_part_cloud
from .robustfit import RansacParams, lift_view_planes, multi_plane_ransac
from .synth.dataset import GroundTruth, build_ground_truth, load_dataset
from .synth.generator import SceneSpec


@dataclass(frozen=True)
class PipelineConfig:
    """Run configuration; see README for the JSON schema."""

    scenes: tuple[SceneSpec, ...] = ()
    dataset_dirs: tuple[str, ...] = ()
    views: int = 3
    predictor: str = "oracle"
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    ransac: RansacParams = field(default_factory=RansacParams)
    fusion: FusionParams = field(default_factory=FusionParams)
    seed: int = 0
    out_dir: Optional[str] = None
    image_size: int = 256
    n_correspondences: int = DEFAULT_CORRESPONDENCES
    min_detection_pixels: int = 1
    chamfer_samples: int = 4096
    origin_snap_grid: Optional[float] = None
    repeats: int = 1

    def __post_init__(self):
        object.__setattr__(self, "scenes", tuple(self.scenes))
        object.__setattr__(self, "dataset_dirs", tuple(self.dataset_dirs))
        if self.views < 1:
            raise ContractViolation("views must be >= 1")
        if self.repeats < 1:
            raise ContractViolation("repeats must be >= 1")
        if not self.scenes and not self.dataset_dirs:
            raise ContractViolation("config needs scene specs or dataset dirs")
        if self.dataset_dirs and self.repeats > 1:
            raise ContractViolation("repeats require generated scenes (views are resampled)")

    def to_json(self) -> dict:
        return {
            "scenes": [s.to_json() for s in self.scenes],
            "dataset_dirs": list(self.dataset_dirs),
            "views": self.views,
            "predictor": self.predictor,
            "noise": self.noise.to_json(),
            "ransac": self.ransac.to_json(),
            "fusion": self.fusion.to_json(),
            "seed": self.seed,
            "out_dir": self.out_dir,
            "image_size": self.image_size,
            "n_correspondences": self.n_correspondences,
            "min_detection_pixels": self.min_detection_pixels,
            "chamfer_samples": self.chamfer_samples,
            "origin_snap_grid": self.origin_snap_grid,
            "repeats": self.repeats,
        }

    @staticmethod
    def from_json(d: dict) -> "PipelineConfig":
        d = dict(d)
        return PipelineConfig(
            scenes=tuple(SceneSpec.from_json(s) for s in d.pop("scenes", [])),
            dataset_dirs=tuple(d.pop("dataset_dirs", []) or []),
            noise=NoiseSpec.from_json(d.pop("noise", {})),
            ransac=RansacParams.from_json(d.pop("ransac", {})) if "ransac" in d else RansacParams(),
            fusion=FusionParams.from_json(d.pop("fusion", {})) if "fusion" in d else FusionParams(),
            **d,
        )


def _scene_ground_truth(config: PipelineConfig, scene_index: int, repeat: int) -> GroundTruth:
    if config.dataset_dirs:
        return load_dataset(config.dataset_dirs[scene_index])
    K = default_intrinsics(config.image_size)
    return build_ground_truth(
        config.scenes[scene_index], config.views, K=K, view_salt=repeat
    )


def _n_scenes(config: PipelineConfig) -> int:
    return len(config.dataset_dirs) if config.dataset_dirs else len(config.scenes)


def _make_source(config: PipelineConfig, gt: GroundTruth, scene_index: int, repeat: int):
    if config.predictor == "oracle":
        return OraclePredictionSource(
            gt, config.noise, derive_seed(config.seed, scene_index, repeat),
            config.n_correspondences, config.min_detection_pixels,
        )
    return ExternalPredictionSource(Path(config.predictor) / f"scene_{scene_index:03d}")


def _plane_artifacts(fused: list[WorldPlane], out_dir: Optional[Path], registry) -> list[dict]:
    records = []
    for k, wp in enumerate(fused):
        try:
            rect = [[float(x) for x in corner] for corner in bound_rectangle(wp)]
        except GeometryError:
            rect = None
        rec = {
            "normal": [float(x) for x in wp.plane.normal],
            "offset": wp.plane.offset,
            "rectangle": rect,
            "source_views": sorted(wp.source_views),
            "n_support": wp.size,
        }
        if out_dir is not None:
            rel = f"fused_plane_{k:02d}_support.ply"
            fio.save_cloud_ply(wp.support, registry(out_dir, rel))
            rec["support_file"] = rel
        records.append(rec)
    return records


def _run_scene(config: PipelineConfig, scene_index: int, repeat: int, gt: GroundTruth,
               out_dir: Optional[Path], registry) -> dict:
    K = gt.K
    source = _make_source(config, gt, scene_index, repeat)
    world_planes: list[WorldPlane] = []
    views_out = []
    for vi, bundle in enumerate(gt.bundles):
        record: dict = {"view": vi}
        try:
            preds = source.for_view(vi)
            pose_pred = solve_pnp(
                list(preds.correspondences), K,
                seed=derive_seed(config.seed, scene_index, repeat, vi, 3),
            )
            rot_err, trans_err = pose_errors(pose_pred, bundle.pose)
            record["pose"] = {
                "rotation_err_deg": rot_err,
                "translation_sq_err": trans_err,
            }
            lifted, dropped = lift_view_planes(list(preds.plane_detections), preds.depth, K)
            record["n_detections"] = len(preds.plane_detections)
            record["n_dropped_detections"] = len(dropped)
            for plane, support in lifted:
                world_planes.append(plane_to_world(plane, support, pose_pred, vi))
            motions = []
            for di, det in enumerate(preds.part_detections):
                cloud = segment_part_cloud(det.mask, preds.depth, K, pose_pred)
                table = part_chamfer_table(
                    cloud, det.motion, gt.model, config.chamfer_samples,
                    derive_seed(config.seed, scene_index, repeat, vi, 5),
                )
                matched = min(table, key=lambda pid: (table[pid], pid))
                mrec: dict = {
                    "detection": di,
                    "matched_part": matched,
                    "chamfer_table": {str(pid): d for pid, d in sorted(table.items())},
                }
                gt_state = next((s for s in bundle.states if s.part_id == matched), None)
                if det.gt_part_id is not None:
                    mrec["gt_part"] = det.gt_part_id
                    mrec["match_correct"] = matched == det.gt_part_id
                    gt_state = next(
                        (s for s in bundle.states if s.part_id == det.gt_part_id), None
                    )
                if gt_state is not None:
                    mrec["errors_raw"] = motion_metrics(det.motion, gt_state.motion).to_json()
                    snapped = snap_to_canonical(det.motion, config.origin_snap_grid)
                    mrec["errors_snapped"] = motion_metrics(snapped, gt_state.motion).to_json()
                if out_dir is not None:
                    rel = f"realized_v{vi:02d}_d{di:02d}.ply"
                    fio.save_mesh_ply(realize(gt.model, matched, det.motion),
                                      registry(out_dir, rel))
                    mrec["realized_file"] = rel
                motions.append(mrec)
            record["motions"] = motions
        except GeometryError as exc:
            record["error"] = f"{type(exc).__name__}: {exc}"
        views_out.append(record)

    fused = merge_planes(world_planes, config.fusion)
    fused = clip_to_shell(fused, gt.model.rest_mesh)
    plane_report = plane_set_metrics(fused, list(gt.gt_planes)) if gt.gt_planes else None
    scene_summary = {
        "scene": scene_index,
        "repeat": repeat,
        "n_gt_planes": len(gt.gt_planes),
        "n_fused_planes": len(fused),
        "views": views_out,
        "plane_metrics": None if plane_report is None else plane_report.to_json(),
        "fused_planes": _plane_artifacts(fused, out_dir, registry),
    }
    return scene_summary


def _aggregate(scene_summaries: list[dict]) -> dict:
    def collect(path):
        vals = []
        for s in scene_summaries:
            node = s
            for key in path:
                node = node.get(key) if isinstance(node, dict) else None
                if node is None:
                    break
            if isinstance(node, (int, float)):
                vals.append(float(node))
        return vals

    def stats(vals):
        if not vals:
            return None
        return {"mean": float(np.mean(vals)), "std": float(np.std(vals)), "n": len(vals)}

    pose_rot, pose_trans, match_flags = [], [], []
    axis_raw, axis_snap = [], []
    for s in scene_summaries:
        for v in s.get("views", []):
            if "pose" in v:
                pose_rot.append(v["pose"]["rotation_err_deg"])
                pose_trans.append(v["pose"]["translation_sq_err"])
            for m in v.get("motions", []):
                if "match_correct" in m:
                    match_flags.append(1.0 if m["match_correct"] else 0.0)
                if m.get("errors_raw", {}).get("axis_deg") is not None:
                    axis_raw.append(m["errors_raw"]["axis_deg"])
                if m.get("errors_snapped", {}).get("axis_deg") is not None:
                    axis_snap.append(m["errors_snapped"]["axis_deg"])
    return {
        "one_way_cd": stats(collect(("plane_metrics", "one_way_cd"))),
        "mean_normal_diff_deg": stats(collect(("plane_metrics", "mean_normal_diff_deg"))),
        "mean_param_diff": stats(collect(("plane_metrics", "mean_param_diff"))),
        "pose_rotation_err_deg": stats(pose_rot),
        "pose_translation_sq_err": stats(pose_trans),
        "part_match_accuracy": stats(match_flags),
        "motion_axis_err_deg_raw": stats(axis_raw),
        "motion_axis_err_deg_snapped": stats(axis_snap),
    }


def run_pipeline(config: PipelineConfig) -> dict:
    """Run the full recovery pipeline; returns (and optionally writes) the summary."""
    out_root = Path(config.out_dir) if config.out_dir else None
    artifact_files: list[str] = []

    def registry(scene_dir: Path, rel: str) -> Path:
        scene_dir.mkdir(parents=True, exist_ok=True)
        full = scene_dir / rel
        artifact_files.append(str(full.relative_to(out_root)))
        return full

    scene_summaries = []
    hard_failures = 0
    for si in range(_n_scenes(config)):
        for rep in range(config.repeats):
            scene_dir = None
            if out_root is not None:
                scene_dir = out_root / (
                    f"scene_{si:03d}" if config.repeats == 1 else f"scene_{si:03d}_r{rep:02d}"
                )
            try:
                gt = _scene_ground_truth(config, si, rep)
                scene_summaries.append(_run_scene(config, si, rep, gt, scene_dir, registry))
            except Exception as exc:
                hard_failures += 1
                scene_summaries.append(
                    {"scene": si, "repeat": rep, "error": f"{type(exc).__name__}: {exc}"}
                )
    summary = {
        # out_dir is run placement, not semantics: identical configs give
        # byte-identical summaries wherever their artifacts land.
        "config": {**config.to_json(), "out_dir": None},
        "scenes": scene_summaries,
        "aggregate": _aggregate(scene_summaries),
        "hard_failures": hard_failures,
    }
    if out_root is not None:
        out_root.mkdir(parents=True, exist_ok=True)
        fio.write_json(summary, out_root / "summary.json")
        artifact_files.append("summary.json")
        manifest = {
            "files": {rel: fio.sha256_file(out_root / rel) for rel in sorted(artifact_files)}
        }
        fio.write_json(manifest, out_root / "manifest.json")
    return summary


def baseline_ransac_planes(config: PipelineConfig) -> dict:
    """Per-view RANSAC plane fitting on interior depth, no detections.

    Interior-mask pixels are backprojected from the (possibly noisy)
    depth, transformed with the predicted pose, and fed directly to
    multi-plane RANSAC. The per-view planes are pooled (no fusion) and
    compared against ground truth.
    """
    scene_summaries = []
    hard_failures = 0
    for si in range(_n_scenes(config)):
        for rep in range(config.repeats):
            try:
                gt = _scene_ground_truth(config, si, rep)
                source = _make_source(config, gt, si, rep)
                pooled: list[WorldPlane] = []
                views_out = []
                for vi, bundle in enumerate(gt.bundles):
                    record: dict = {"view": vi}
                    try:
                        preds = source.for_view(vi)
                        pose_pred = solve_pnp(
                            list(preds.correspondences), gt.K,
                            seed=derive_seed(config.seed, si, rep, vi, 3),
                        )
                        cam = backproject(preds.depth, gt.K, bundle.interior_mask)
                        if len(cam) == 0:
                            record["n_planes"] = 0
                            views_out.append(record)
                            continue
                        world = transform_points(pose_pred, cam, "cam_to_world")
                        params = RansacParams(
                            config.ransac.inlier_threshold, config.ransac.iterations,
                            config.ransac.min_inliers, config.ransac.max_planes,
                            derive_seed(config.seed, si, rep, vi, 4),
                        )
                        found = multi_plane_ransac(world, params)
                        for plane, idx in found:
                            pooled.append(WorldPlane(plane, world.subset(idx), frozenset({vi})))
                        record["n_planes"] = len(found)
                    except GeometryError as exc:
                        record["error"] = f"{type(exc).__name__}: {exc}"
                    views_out.append(record)
                report = plane_set_metrics(pooled, list(gt.gt_planes)) if gt.gt_planes else None
                scene_summaries.append(
                    {
                        "scene": si,
                        "repeat": rep,
                        "views": views_out,
                        "plane_metrics": None if report is None else report.to_json(),
                    }
                )
            except Exception as exc:
                hard_failures += 1
                scene_summaries.append(
                    {"scene": si, "repeat": rep, "error": f"{type(exc).__name__}: {exc}"}
                )
    summary = {
        "config": {**config.to_json(), "out_dir": None},
        "scenes": scene_summaries,
        "aggregate": _aggregate(scene_summaries),
        "hard_failures": hard_failures,
    }
    if config.out_dir:
        out_root = Path(config.out_dir)
        out_root.mkdir(parents=True, exist_ok=True)
        fio.write_json(summary, out_root / "baseline_summary.json")
    return summary


_SWEEP_METRICS = (
    "one_way_cd", "mean_normal_diff_deg", "mean_param_diff",
    "pose_rotation_err_deg", "pose_translation_sq_err",
)


def noise_sweep(config: PipelineConfig, channel: str, grid: list[float]) -> list[dict]:
    """Run the pipeline across a sorted grid of noise levels for one channel.

    Returns one row per level with mean/std per metric over scenes, and
    writes noise_sweep.csv when the config has an output directory.
    """
    if not grid:
        raise ContractViolation("noise sweep grid must be nonempty")
    if sorted(grid) != list(grid):
        raise ContractViolation("noise sweep grid must be sorted ascending")
    rows = []
    for level in grid:
        level_cfg = PipelineConfig.from_json(
            {**config.to_json(), "noise": config.noise.with_channel(channel, level).to_json(),
             "out_dir": None}
        )
        summary = run_pipeline(level_cfg)
        row: dict = {"level": level}
        for metric in _SWEEP_METRICS:
            agg = summary["aggregate"].get(metric)
            row[f"{metric}_mean"] = None if agg is None else agg["mean"]
            row[f"{metric}_std"] = None if agg is None else agg["std"]
        rows.append(row)
    if config.out_dir:
        out_root = Path(config.out_dir)
        out_root.mkdir(parents=True, exist_ok=True)
        header = ["level"]
        for metric in _SWEEP_METRICS:
            header += [f"{metric}_mean", f"{metric}_std"]
        lines = [",".join(header)]
        for row in rows:
            lines.append(",".join(
                "" if row.get(col) is None else repr(row[col]) for col in header
            ))
        (out_root / "noise_sweep.csv").write_text("\n".join(lines) + "\n")
    return rows


def summarize_run(summary: dict) -> str:
    """Aligned text table of the aggregate metrics of a run summary."""
    agg = summary.get("aggregate", {})
    rows = []
    for name in (
        "one_way_cd", "mean_normal_diff_deg", "mean_param_diff",
        "pose_rotation_err_deg", "pose_translation_sq_err",
        "part_match_accuracy", "motion_axis_err_deg_raw", "motion_axis_err_deg_snapped",
    ):
        entry = agg.get(name)
        rows.append((name, None if entry is None else entry["mean"]))
    return format_report_table(rows, title="aggregate metrics (means over scenes)")


def evaluate_run(run_dir) -> dict:
    """Reload a run summary and reprint its metric table."""
    path = Path(run_dir) / "summary.json"
    if not path.exists():
        raise ContractViolation(f"no summary.json under {run_dir}")
    summary = json.loads(path.read_text())
    return summary
