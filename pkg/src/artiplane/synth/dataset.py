"""Ground-truth assembly and on-disk dataset format.

A dataset directory holds the model meshes (PLY), per-view depth maps,
masks and camera metadata, the extracted ground-truth planes with their
supports, and a manifest listing every artifact with a sha256 checksum.
Re-exporting with the same seed is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import io as fio
from ..core import (
    BinaryMask,
    DepthMap,
    Intrinsics,
    Plane,
    PointCloud,
    Pose,
    backproject,
    default_intrinsics,
    transform_points,
)
from ..errors import ContractViolation
from ..kinematics import PartArticulation
from ..robustfit import RansacParams, multi_plane_ransac
from .generator import ArticulatedModel, PartTemplate, SceneSpec, generate_model, sample_views
from .render import SweepConfig, ViewBundle, raycast_render, rest_visible_faces

MANIFEST_VERSION = 1


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """One synthetic scene: model, rendered views and GT planes."""

    spec: SceneSpec
    model: ArticulatedModel
    K: Intrinsics
    bundles: tuple[ViewBundle, ...]
    gt_planes: tuple[tuple[Plane, PointCloud], ...]
    sweep: SweepConfig = SweepConfig()
    ransac: RansacParams = RansacParams()

    def __post_init__(self):
        object.__setattr__(self, "bundles", tuple(self.bundles))
        object.__setattr__(self, "gt_planes", tuple(self.gt_planes))


def view_pixel_index(view_idx: int, pixel_index: np.ndarray, K: Intrinsics) -> np.ndarray:
    """Pack (view, pixel) provenance into one integer per point."""
    return view_idx * (K.width * K.height) + pixel_index


def extract_gt_planes(bundles: list[ViewBundle], params: RansacParams
                      ) -> list[tuple[Plane, PointCloud]]:
    """Multi-plane RANSAC over the pooled interior points of all views.

    Interior pixels are backprojected with ground-truth depth and pose
    into the world frame; supports keep packed (view, pixel) indices.
    """
    clouds = []
    for vi, b in enumerate(bundles):
        cam = backproject(b.depth, b.K, b.interior_mask)
        if len(cam) == 0:
            continue
        world = transform_points(b.pose, cam, "cam_to_world")
        clouds.append(PointCloud(world.points, view_pixel_index(vi, world.pixel_index, b.K)))
    if not clouds:
        return []
    pooled = PointCloud(
        np.concatenate([c.points for c in clouds]),
        np.concatenate([c.pixel_index for c in clouds]),
    )
    return [(plane, pooled.subset(idx)) for plane, idx in multi_plane_ransac(pooled, params)]


def build_ground_truth(spec: SceneSpec, n_views: int = 3,
                       K: Intrinsics | None = None,
                       sweep: SweepConfig = SweepConfig(),
                       ransac: RansacParams | None = None,
                       view_salt: int = 0) -> GroundTruth:
    """Generate, render and annotate one scene; deterministic in spec.seed.

    `view_salt` resamples the camera/articulation draw without touching
    the model (used by the pipeline's --repeats).
    """
    K = K or default_intrinsics()
    model = generate_model(spec)
    rest_visible = rest_visible_faces(model, K, sweep)
    view_seed = int(np.random.SeedSequence([spec.seed, 1, view_salt]).generate_state(1)[0])
    views = sample_views(model, n_views, view_seed)
    bundles = [
        raycast_render(model, states, pose, K, sweep, rest_visible)
        for pose, states in views
    ]
    ransac_seed = int(np.random.SeedSequence([spec.seed, 2]).generate_state(1)[0])
    params = ransac or RansacParams(seed=ransac_seed)
    gt_planes = extract_gt_planes(bundles, params)
    return GroundTruth(spec, model, K, tuple(bundles), tuple(gt_planes), sweep, params)


def export_dataset(gt: GroundTruth, out_dir) -> dict:
    """Write a scene to disk and return its manifest (also written)."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: list[str] = []

    def _reg(rel: str) -> Path:
        files.append(rel)
        return out / rel

    fio.save_mesh_ply(gt.model.mesh, _reg("model_full.ply"))
    fio.save_mesh_ply(gt.model.rest_mesh, _reg("model_rest.ply"))
    fio.save_mesh_ply(gt.model.interior_mesh, _reg("model_interior.ply"))
    fio.write_json(
        {
            "interior_faces": [int(i) for i in np.nonzero(gt.model.interior_faces)[0]],
            "parts": [t.to_json() for t in gt.model.parts],
            "shelf_ys": list(gt.model.shelf_ys),
        },
        _reg("model.json"),
    )
    planes_meta = []
    for k, (plane, support) in enumerate(gt.gt_planes):
        rel = f"gt_plane_{k:02d}_support.ply"
        fio.save_cloud_ply(support, _reg(rel))
        planes_meta.append(
            {
                "normal": [float(x) for x in plane.normal],
                "offset": plane.offset,
                "support_file": rel,
            }
        )
    fio.write_json(planes_meta, _reg("gt_planes.json"))

    for vi, b in enumerate(gt.bundles):
        vdir = out / f"views/view_{vi:03d}"
        vdir.mkdir(parents=True, exist_ok=True)
        rel = f"views/view_{vi:03d}"
        fio.save_depth(b.depth, _reg(f"{rel}/depth.f32"))
        files.append(f"{rel}/depth.f32.json")
        fio.save_int_grid(b.face_id, _reg(f"{rel}/face_id.i32"))
        files.append(f"{rel}/face_id.i32.json")
        fio.save_mask_pgm(b.interior_mask, _reg(f"{rel}/interior.pgm"))
        for pid, mask in sorted(b.part_masks.items()):
            fio.save_mask_pgm(mask, _reg(f"{rel}/part_{pid:02d}.pgm"))
        fio.write_json(
            {
                "pose": b.pose.to_json(),
                "intrinsics": b.K.to_json(),
                "states": [s.to_json() for s in b.states],
            },
            _reg(f"{rel}/view.json"),
        )

    manifest = {
        "version": MANIFEST_VERSION,
        "spec": gt.spec.to_json(),
        "intrinsics": gt.K.to_json(),
        "sweep": gt.sweep.to_json(),
        "ransac": gt.ransac.to_json(),
        "n_views": len(gt.bundles),
        "files": {rel: fio.sha256_file(out / rel) for rel in sorted(files)},
    }
    fio.write_json(manifest, out / "manifest.json")
    return manifest


def load_dataset(in_dir) -> GroundTruth:
    """Re-load an exported scene. Inverse of `export_dataset`."""
    root = Path(in_dir)
    manifest = json.loads((root / "manifest.json").read_text())
    if manifest.get("version") != MANIFEST_VERSION:
        raise ContractViolation(f"unsupported manifest version {manifest.get('version')}")
    spec = SceneSpec.from_json(manifest["spec"])
    K = Intrinsics.from_json(manifest["intrinsics"])
    sweep = SweepConfig(**manifest["sweep"])
    params = RansacParams.from_json(manifest["ransac"])

    mesh = fio.load_mesh_ply(root / "model_full.ply")
    model_meta = json.loads((root / "model.json").read_text())
    interior = np.zeros(mesh.n_faces, dtype=bool)
    interior[model_meta["interior_faces"]] = True
    parts = tuple(PartTemplate.from_json(p) for p in model_meta["parts"])
    model = ArticulatedModel(mesh, interior, parts, tuple(model_meta["shelf_ys"]))

    planes_meta = json.loads((root / "gt_planes.json").read_text())
    gt_planes = tuple(
        (Plane(np.array(p["normal"]), p["offset"]), fio.load_cloud_ply(root / p["support_file"]))
        for p in planes_meta
    )

    bundles = []
    for vi in range(manifest["n_views"]):
        vdir = root / f"views/view_{vi:03d}"
        meta = json.loads((vdir / "view.json").read_text())
        depth = fio.load_depth(vdir / "depth.f32")
        face_id = fio.load_int_grid(vdir / "face_id.i32")
        part_masks = {
            t.part_id: fio.load_mask_pgm(vdir / f"part_{t.part_id:02d}.pgm") for t in parts
        }
        bundles.append(
            ViewBundle(
                pose=Pose.from_json(meta["pose"]),
                K=Intrinsics.from_json(meta["intrinsics"]),
                states=tuple(PartArticulation.from_json(s) for s in meta["states"]),
                depth=depth,
                part_masks=part_masks,
                interior_mask=fio.load_mask_pgm(vdir / "interior.pgm"),
                face_id=face_id,
            )
        )
    return GroundTruth(spec, model, K, tuple(bundles), gt_planes, sweep, params)
