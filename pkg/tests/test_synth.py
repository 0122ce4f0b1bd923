"""Model generation, ray-cast rendering, interior labeling, dataset IO."""

import numpy as np
import pytest

from artiplane import io as fio
from artiplane.core import Plane, TriMesh, default_intrinsics, look_at_pose
from artiplane.errors import GenerationError
from artiplane.kinematics import MotionType, PartArticulation
from artiplane.robustfit import RansacParams
from artiplane.synth.dataset import build_ground_truth, export_dataset, extract_gt_planes, load_dataset
from artiplane.synth.generator import SceneSpec, articulated_mesh, generate_model, random_scene_specs
from artiplane.synth.render import (
    SweepConfig,
    build_accel,
    cast_rays,
    interior_pixels,
    raycast_render,
    rest_visible_faces,
)

from conftest import assert_rotation


def door_spec(seed=21, shelves=2):
    return SceneSpec("storage", 1, (1.2, 2.0, 0.9), 0.03, shelves, seed=seed,
                     part_kinds=("door",))


class TestGenerateModel:
    def test_deterministic_ply_bytes(self, tmp_path):
        spec = SceneSpec("storage", 2, (1.0, 1.5, 0.8), 0.03, 1, seed=7)
        for name in ("a", "b"):
            fio.save_mesh_ply(generate_model(spec).mesh, tmp_path / f"{name}.ply")
        assert (tmp_path / "a.ply").read_bytes() == (tmp_path / "b.ply").read_bytes()

    def test_single_door_is_vertical_revolute(self):
        model = generate_model(door_spec())
        assert len(model.parts) == 1
        tpl = model.parts[0]
        assert tpl.kind == "door"
        assert tpl.mtype == MotionType.REVOLUTE
        assert abs(tpl.axis[1]) == 1.0 and tpl.axis[0] == tpl.axis[2] == 0.0

    def test_two_shelves_in_interior_mesh(self):
        model = generate_model(door_spec(shelves=2))
        assert len(model.shelf_ys) == 2
        interior = model.interior_mesh
        # Two horizontal shelf slabs plus the five inner panel faces.
        shelf_faces = 2 * 12  # every face of each shelf cuboid is interior
        panel_faces = 5 * 2   # one inner side (2 triangles) per shell panel
        assert interior.n_faces == shelf_faces + panel_faces
        ys = sorted(model.shelf_ys)
        assert ys[1] - ys[0] >= 0.35

    def test_part_vertices_disjoint_from_shell(self):
        model = generate_model(SceneSpec("storage", 3, (1.4, 1.8, 1.0), 0.03, 0, seed=5))
        mesh = model.mesh
        shell_verts = set(np.unique(mesh.faces[mesh.face_part_id == 0]).tolist())
        for tpl in model.parts:
            part_verts = set(np.unique(mesh.faces[mesh.face_part_id == tpl.part_id]).tolist())
            assert not (part_verts & shell_verts)

    def test_no_degenerate_faces(self):
        model = generate_model(SceneSpec("oven", 2, (1.1, 1.3, 0.9), 0.025, 1, seed=3))
        assert model.mesh.face_areas().min() > 1e-9

    def test_infeasible_spec_raises(self):
        # Three rows of a small opening cannot fit 4x wall thickness each.
        with pytest.raises(GenerationError):
            generate_model(SceneSpec("storage", 3, (0.5, 0.5, 0.8), 0.12, 0, seed=1))

    def test_drawer_rows_have_prismatic_templates(self):
        model = generate_model(
            SceneSpec("storage", 2, (1.0, 1.4, 1.0), 0.03, 0, seed=9,
                      part_kinds=("drawer", "drawer"))
        )
        for tpl in model.parts:
            assert tpl.mtype == MotionType.PRISMATIC
            np.testing.assert_array_equal(tpl.axis, [0, 0, -1])
            lo, hi = tpl.value_range
            assert 0 < lo < hi

    def test_category_restricts_kinds(self):
        for seed in range(5):
            model = generate_model(SceneSpec("box", 1, (0.8, 0.8, 0.8), 0.03, 0, seed=seed))
            assert model.parts[0].kind == "lid"


class TestSampleViewsProperties:
    def test_reproducible_and_rigid(self, door_scene):
        from artiplane.synth.generator import sample_views

        model = generate_model(door_spec())
        v1 = sample_views(model, 3, seed=5)
        v2 = sample_views(model, 3, seed=5)
        for (p1, s1), (p2, s2) in zip(v1, v2):
            np.testing.assert_array_equal(p1.rotation, p2.rotation)
            assert len(s1) == len(s2)
        for pose, states in v1:
            assert_rotation(pose.rotation, tol=1e-9)
            assert len(states) >= 1
            for s in states:
                assert s.motion.value != 0.0


class TestRaycast:
    def test_cube_front_face_depth(self, K256):
        # Unit-square quad at z = 2 seen from the origin: center ray depth 2.
        verts = np.array([
            [-0.5, -0.5, 2.0], [0.5, -0.5, 2.0], [0.5, 0.5, 2.0], [-0.5, 0.5, 2.0],
        ])
        mesh = TriMesh(verts, [[0, 1, 2], [0, 2, 3]], [0, 0])
        accel = build_accel(mesh)
        t, face = cast_rays(accel, np.zeros(3), np.array([[0.0, 0.0, 1.0]]))
        assert face[0] >= 0
        assert t[0] == pytest.approx(2.0, abs=1e-12)

    def test_background_pixels(self, door_scene):
        bundle = door_scene.bundles[0]
        bg = bundle.face_id < 0
        assert bg.any()
        assert np.all(bundle.depth.values[bg] == 0.0)
        fg = bundle.face_id >= 0
        assert np.all(bundle.depth.values[fg] > 0.0)

    def test_depth_matches_analytic_ray_plane_intersection(self, K160):
        # Independent oracle: intersect each pixel ray with the door's
        # front plane z = -D/2 analytically and compare depths.
        model = generate_model(door_spec())
        pose = look_at_pose([0.3, 0.4, -3.0], [0.0, 0.0, 0.0])
        bundle = raycast_render(model, [], pose, K160)
        hd = 0.9 / 2
        door_front_faces = set()
        tris = model.mesh.triangles()
        for fi in range(model.mesh.n_faces):
            if model.mesh.face_part_id[fi] == 1 and np.allclose(tris[fi][:, 2], -hd):
                door_front_faces.add(fi)
        assert door_front_faces
        C = pose.camera_center
        R = pose.rotation
        hit = np.isin(bundle.face_id, list(door_front_faces))
        assert hit.sum() > 100
        vv, uu = np.nonzero(hit)
        d_cam = np.stack(
            [(uu - K160.cx) / K160.fx, (vv - K160.cy) / K160.fy, np.ones_like(uu, float)],
            axis=1,
        )
        d_world = d_cam @ R  # rows R^T d
        t_analytic = (-hd - C[2]) / d_world[:, 2]
        # f64 caster agrees to 1e-9; the stored f32 map to f32 resolution.
        accel = build_accel(articulated_mesh(model, []))
        t_exact, _ = cast_rays(accel, C, d_world)
        np.testing.assert_allclose(t_exact, t_analytic, atol=1e-9)
        np.testing.assert_allclose(
            bundle.depth.values[vv, uu], t_analytic.astype(np.float32), atol=1e-5
        )

    def test_masks_subset_of_foreground(self, mixed_scene):
        for bundle in mixed_scene.bundles:
            fg = bundle.face_id >= 0
            for mask in bundle.part_masks.values():
                assert not np.any(mask.as_bool() & ~fg)
            assert not np.any(bundle.interior_mask.as_bool() & ~fg)


class TestInterior:
    def test_zero_articulation_empty_interior(self, K160):
        model = generate_model(door_spec())
        pose = look_at_pose([0.0, 0.5, -3.0], [0, 0, 0])
        mask = interior_pixels(model, [], pose, K160)
        assert mask.count() == 0

    def test_open_door_reveals_back_panel(self, K160):
        model = generate_model(door_spec())
        tpl = model.parts[0]
        states = [PartArticulation(tpl.part_id, tpl.motion(90.0))]
        pose = look_at_pose([0.1, 0.3, -2.8], [0, 0, 0])
        bundle = raycast_render(model, states, pose, K160)
        assert bundle.interior_mask.count() > 50
        # Every interior pixel lies on a construction-marked interior face.
        fids = bundle.face_id[bundle.interior_mask.as_bool()]
        assert np.all(model.interior_faces[fids])
        # The back panel inner plane z = D/2 - t must be among them.
        tris = model.mesh.triangles()
        zs = tris[fids][:, :, 2]
        assert np.any(np.all(np.abs(zs - (0.45 - 0.03)) < 1e-12, axis=1))

    def test_interior_disjoint_from_part_masks(self, mixed_scene):
        for bundle in mixed_scene.bundles:
            interior = bundle.interior_mask.as_bool()
            for mask in bundle.part_masks.values():
                assert not np.any(interior & mask.as_bool())

    def test_interior_faces_never_rest_visible(self, K160):
        # Defining property, checked by the exhaustive 32-view sweep.
        for seed in (21, 33):
            spec = SceneSpec("storage", 2, (1.2, 1.6, 0.9), 0.03, 1, seed=seed)
            model = generate_model(spec)
            visible = rest_visible_faces(model, K160)
            assert SweepConfig().n_views == 32
            assert not np.any(visible & model.interior_faces)


class TestExtractGtPlanes:
    def test_single_back_panel_orientation(self, K160):
        # Shelf-free door cabinet seen frontally: the dominant revealed
        # plane is the back panel with normal within 2 degrees of +-z.
        spec = SceneSpec("storage", 1, (1.2, 1.6, 0.9), 0.03, 0, seed=2,
                         part_kinds=("door",))
        model = generate_model(spec)
        tpl = model.parts[0]
        states = [PartArticulation(tpl.part_id, tpl.motion(100.0))]
        pose = look_at_pose([0.2, 0.4, -3.2], [0, 0, 0])
        bundle = raycast_render(model, states, pose, K160)
        planes = extract_gt_planes([bundle], RansacParams(seed=1))
        assert planes
        best_plane, support = max(planes, key=lambda ps: len(ps[1]))
        angle = np.degrees(np.arccos(min(1.0, abs(best_plane.normal @ np.array([0.0, 0.0, 1.0])))))
        assert angle < 2.0
        assert len(support) >= 50

    def test_two_shelf_cabinet_recovers_three_planes(self, door_scene):
        assert len(door_scene.gt_planes) >= 3

    def test_supports_within_threshold(self, door_scene):
        thr = door_scene.ransac.inlier_threshold
        for plane, support in door_scene.gt_planes:
            assert np.abs(plane.signed_distance(support.points)).max() < thr
            assert len(support) >= 50

    def test_empty_interior_gives_empty_list(self, K160):
        model = generate_model(door_spec())
        pose = look_at_pose([0.0, 0.5, -3.0], [0, 0, 0])
        bundle = raycast_render(model, [], pose, K160)
        assert extract_gt_planes([bundle], RansacParams()) == []


class TestDataset:
    def test_export_roundtrip_and_checksums(self, tmp_path, door_scene):
        m1 = export_dataset(door_scene, tmp_path / "a")
        m2 = export_dataset(door_scene, tmp_path / "b")
        assert m1["files"] == m2["files"]
        assert m1["n_views"] == 3
        depth_files = [f for f in m1["files"] if f.endswith("depth.f32")]
        assert len(depth_files) == 3

        back = load_dataset(tmp_path / "a")
        assert back.spec.to_json() == door_scene.spec.to_json()
        np.testing.assert_array_equal(back.model.mesh.vertices, door_scene.model.mesh.vertices)
        np.testing.assert_array_equal(back.model.interior_faces, door_scene.model.interior_faces)
        assert len(back.gt_planes) == len(door_scene.gt_planes)
        for (p1, s1), (p2, s2) in zip(back.gt_planes, door_scene.gt_planes):
            np.testing.assert_array_equal(p1.normal, p2.normal)
            np.testing.assert_array_equal(s1.points, s2.points)
        for b1, b2 in zip(back.bundles, door_scene.bundles):
            np.testing.assert_array_equal(b1.depth.values, b2.depth.values)
            np.testing.assert_array_equal(b1.face_id, b2.face_id)
            np.testing.assert_array_equal(b1.pose.rotation, b2.pose.rotation)
            np.testing.assert_array_equal(
                b1.interior_mask.values, b2.interior_mask.values
            )
            assert [s.to_json() for s in b1.states] == [s.to_json() for s in b2.states]

        m3 = export_dataset(back, tmp_path / "c")
        assert m3["files"] == m1["files"]

    def test_build_ground_truth_deterministic(self, K160):
        spec = door_spec(seed=77)
        a = build_ground_truth(spec, 2, K=K160)
        b = build_ground_truth(spec, 2, K=K160)
        for ba, bb in zip(a.bundles, b.bundles):
            np.testing.assert_array_equal(ba.depth.values, bb.depth.values)
        assert len(a.gt_planes) == len(b.gt_planes)

    def test_view_salt_changes_views(self, K160):
        spec = door_spec(seed=78)
        a = build_ground_truth(spec, 2, K=K160, view_salt=0)
        b = build_ground_truth(spec, 2, K=K160, view_salt=1)
        assert not np.array_equal(a.bundles[0].pose.rotation, b.bundles[0].pose.rotation)

    def test_random_scene_specs_valid(self):
        specs = random_scene_specs(20, seed=1)
        assert len({s.seed for s in specs}) == 20
        for s in specs:
            generate_model(s)
