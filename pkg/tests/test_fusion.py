"""World-frame plane fusion: transform, merge, rectangle, shell clip."""

import math

import numpy as np
import pytest

from artiplane.core import Plane, PointCloud, Pose, TriMesh, unit_vector
from artiplane.errors import DegenerateInput
from artiplane.fusion import (
    FusionParams,
    WorldPlane,
    bound_rectangle,
    clip_to_shell,
    merge_planes,
    plane_to_world,
)
from artiplane.kinematics import rotation_about_axis


def _random_pose(seed):
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.normal(size=(3, 3)))
    if np.linalg.det(Q) < 0:
        Q[:, 0] = -Q[:, 0]
    return Pose(Q.T, rng.normal(size=3))


def _grid_support(plane: Plane, center, e1, e2, nu=12, nv=10, su=1.0, sv=1.0):
    """Exact on-plane support grid spanning su x sv around center."""
    u = np.linspace(-su / 2, su / 2, nu)
    v = np.linspace(-sv / 2, sv / 2, nv)
    uu, vv = np.meshgrid(u, v)
    pts = np.asarray(center) + uu.reshape(-1, 1) * e1 + vv.reshape(-1, 1) * e2
    assert np.abs(plane.signed_distance(pts)).max() < 1e-9
    return PointCloud(pts)


def _plane_with_frame(normal, offset):
    normal = unit_vector(normal)
    plane = Plane(normal, offset)
    ref = np.array([1.0, 0.0, 0.0]) if abs(normal[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    e1 = unit_vector(np.cross(normal, ref))
    e2 = np.cross(normal, e1)
    return plane, e1, e2


def _tilted_pair(angle_deg, max_dist, big_n=200, small_n=60):
    """A large z=0 plane and a smaller plane tilted by `angle_deg` whose
    support reaches exactly `max_dist` from the large plane at its far edge."""
    big_plane, e1, e2 = _plane_with_frame([0.0, 0.0, 1.0], 0.0)
    big = WorldPlane(big_plane, _grid_support(big_plane, [0, 0, 0], e1, e2, 20, 10), {0})
    a = math.radians(angle_deg)
    n_small = np.array([math.sin(a), 0.0, math.cos(a)])
    # Support spans u in [-0.5, 0.5] along the tilted in-plane axis
    # (cos a, 0, -sin a); distance to z=0 at the far edge is h + 0.5 sin a.
    half_span = 0.5
    h = max_dist - half_span * math.sin(a)
    center = np.array([0.0, 0.0, h])
    sp = Plane(n_small, -float(n_small @ center))
    eu = np.array([math.cos(a), 0.0, -math.sin(a)])
    ev = np.array([0.0, 1.0, 0.0])
    small = WorldPlane(sp, _grid_support(sp, center, eu, ev, 10, 6), {1})
    dists = np.abs(big_plane.signed_distance(small.support.points))
    assert dists.max() == pytest.approx(max_dist, abs=1e-9)
    return big, small


class TestPlaneToWorld:
    def test_identity_pose(self):
        plane, e1, e2 = _plane_with_frame([0.0, 0.0, 1.0], -2.0)
        support = _grid_support(plane, [0, 0, 2.0], e1, e2)
        wp = plane_to_world(plane, support, Pose(np.eye(3), np.zeros(3)), 4)
        np.testing.assert_allclose(wp.plane.normal, plane.normal, atol=1e-15)
        assert wp.plane.offset == pytest.approx(plane.offset, abs=1e-15)
        assert wp.source_views == {4}

    def test_pure_translation_keeps_support_on_plane(self):
        plane, e1, e2 = _plane_with_frame([0.0, 0.0, 1.0], -3.0)
        support = _grid_support(plane, [0, 0, 3.0], e1, e2)
        pose = Pose(np.eye(3), np.array([0.0, 0.0, 1.0]))
        wp = plane_to_world(plane, support, pose)
        np.testing.assert_allclose(wp.plane.normal, plane.normal, atol=1e-15)
        # World offset satisfies n . x + o = 0 on the transformed support.
        assert np.abs(wp.plane.signed_distance(wp.support.points)).max() < 1e-12
        assert wp.plane.offset == pytest.approx(plane.offset + 1.0, abs=1e-12)

    def test_random_pose_roundtrip(self):
        plane, e1, e2 = _plane_with_frame([0.3, -0.5, 0.8], -1.3)
        support = _grid_support(plane, -plane.offset * plane.normal, e1, e2)
        pose = _random_pose(8)
        wp = plane_to_world(plane, support, pose)
        assert np.abs(wp.plane.signed_distance(wp.support.points)).max() < 1e-9
        inverse = Pose(pose.rotation.T, -pose.rotation.T @ pose.translation)
        back = plane_to_world(wp.plane, wp.support, inverse)
        np.testing.assert_allclose(back.plane.normal, plane.normal, atol=1e-9)
        assert back.plane.offset == pytest.approx(plane.offset, abs=1e-9)
        np.testing.assert_allclose(back.support.points, support.points, atol=1e-9)


class TestMergePlanes:
    def test_coplanar_halves_merge(self):
        plane, e1, e2 = _plane_with_frame([0.0, 0.0, 1.0], -1.0)
        left = WorldPlane(plane, _grid_support(plane, [-0.5, 0, 1], e1, e2, 12, 10), {0})
        right = WorldPlane(plane, _grid_support(plane, [0.5, 0, 1], e1, e2, 10, 10), {1})
        merged = merge_planes([left, right], FusionParams())
        assert len(merged) == 1
        assert merged[0].size == left.size + right.size
        assert merged[0].source_views == {0, 1}

    def test_20_degrees_apart_not_merged(self):
        big, small = _tilted_pair(20.0, 0.25)
        assert len(merge_planes([big, small], FusionParams())) == 2

    def test_close_angle_but_distant_not_merged(self):
        big, small = _tilted_pair(10.0, 0.5)
        assert len(merge_planes([big, small], FusionParams())) == 2

    def test_boundary_cases_from_thresholds(self):
        merged = merge_planes(list(_tilted_pair(14.0, 0.29)), FusionParams())
        assert len(merged) == 1
        assert len(merge_planes(list(_tilted_pair(16.0, 0.29)), FusionParams())) == 2
        assert len(merge_planes(list(_tilted_pair(14.0, 0.31)), FusionParams())) == 2

    def test_absorbed_points_projected_onto_survivor(self):
        big, small = _tilted_pair(5.0, 0.2)
        merged = merge_planes([big, small], FusionParams())
        assert len(merged) == 1
        survivor = merged[0]
        np.testing.assert_allclose(survivor.plane.normal, big.plane.normal, atol=1e-15)
        assert np.abs(survivor.plane.signed_distance(survivor.support.points)).max() < 1e-9

    def test_support_count_conserved(self):
        big, small = _tilted_pair(8.0, 0.25)
        merged = merge_planes([big, small], FusionParams())
        assert sum(wp.size for wp in merged) == big.size + small.size

    def test_idempotent(self):
        planes = list(_tilted_pair(5.0, 0.2)) + list(_tilted_pair(14.0, 0.29)[1:2])
        once = merge_planes(planes, FusionParams())
        twice = merge_planes(once, FusionParams())
        assert len(once) == len(twice)
        for a, b in zip(once, twice):
            np.testing.assert_array_equal(a.support.points, b.support.points)

    def test_opposite_normals_never_merge(self):
        top, e1, e2 = _plane_with_frame([0.0, 0.0, 1.0], -1.0)
        bottom = Plane(np.array([0.0, 0.0, -1.0]), 0.97)
        wp_top = WorldPlane(top, _grid_support(top, [0, 0, 1.0], e1, e2), {0})
        wp_bot = WorldPlane(bottom, _grid_support(bottom, [0, 0, 0.97], e1, e2, 10, 8), {1})
        assert len(merge_planes([wp_top, wp_bot], FusionParams())) == 2

    def test_order_independence_on_unambiguous_input(self):
        rng = np.random.default_rng(0)
        base, e1, e2 = _plane_with_frame([0.0, 0.0, 1.0], 0.0)
        group_a = [
            WorldPlane(base, _grid_support(base, [dx, 0, 0], e1, e2, 8, 8), {i})
            for i, dx in enumerate((0.0, 0.3, 0.6))
        ]
        far = Plane(np.array([1.0, 0.0, 0.0]), -5.0)
        f1 = unit_vector(np.cross(far.normal, [0, 0, 1.0]))
        f2 = np.cross(far.normal, f1)
        group_b = [WorldPlane(far, _grid_support(far, [5.0, 0, 0], f1, f2, 7, 7), {9})]
        planes = group_a + group_b
        results = []
        for _ in range(5):
            order = rng.permutation(len(planes))
            merged = merge_planes([planes[i] for i in order], FusionParams())
            results.append(sorted((wp.size, tuple(sorted(wp.source_views))) for wp in merged))
        assert all(r == results[0] for r in results)


class TestBoundRectangle:
    def test_axis_aligned_unit_square(self):
        plane, _, _ = _plane_with_frame([0.0, 0.0, 1.0], 0.0)
        u = np.linspace(0, 1, 11)
        v = np.linspace(0, 1, 9)
        uu, vv = np.meshgrid(u, v)
        pts = np.stack([uu.ravel(), vv.ravel(), np.zeros(uu.size)], axis=1)
        wp = WorldPlane(plane, PointCloud(pts), {0})
        corners = bound_rectangle(wp)
        expected = {(0, 0, 0), (1, 0, 0), (1, 1, 0), (0, 1, 0)}
        got = {tuple(np.round(c, 9)) for c in corners}
        assert got == expected

    def test_collinear_support_raises(self):
        plane, _, _ = _plane_with_frame([0.0, 0.0, 1.0], 0.0)
        pts = np.stack([np.linspace(0, 1, 10), np.zeros(10), np.zeros(10)], axis=1)
        with pytest.raises(DegenerateInput):
            bound_rectangle(WorldPlane(plane, PointCloud(pts), {0}))

    def test_rotated_rectangle_area(self):
        # Support drawn from a known 0.8 x 0.5 rectangle rotated in-plane;
        # the recovered rectangle's area must come out within 5%.
        rng = np.random.default_rng(4)
        plane, e1, e2 = _plane_with_frame([0.2, 0.5, 1.0], -0.7)
        ang = 0.6
        r1 = math.cos(ang) * e1 + math.sin(ang) * e2
        r2 = -math.sin(ang) * e1 + math.cos(ang) * e2
        center = -plane.offset * plane.normal
        uv = rng.uniform(-0.5, 0.5, (4000, 2)) * [0.8, 0.5]
        pts = center + uv[:, :1] * r1 + uv[:, 1:] * r2
        corners = bound_rectangle(WorldPlane(plane, PointCloud(pts), {0}))
        side_a = np.linalg.norm(corners[1] - corners[0])
        side_b = np.linalg.norm(corners[3] - corners[0])
        assert side_a * side_b == pytest.approx(0.8 * 0.5, rel=0.05)

    def test_winding_consistent_with_normal(self):
        plane, e1, e2 = _plane_with_frame([0.3, -0.2, 0.9], -0.4)
        support = _grid_support(plane, -plane.offset * plane.normal, e1, e2, 9, 7)
        corners = bound_rectangle(WorldPlane(plane, support, {0}))
        cross = np.cross(corners[1] - corners[0], corners[3] - corners[0])
        assert float(cross @ plane.normal) > 0


class TestClipToShell:
    def _shell(self):
        verts = np.array([
            [-1, -1, -1], [1, -1, -1], [1, 1, -1], [-1, 1, -1],
            [-1, -1, 1], [1, -1, 1], [1, 1, 1], [-1, 1, 1],
        ], dtype=float)
        faces = [[0, 1, 2], [0, 2, 3], [4, 5, 6], [4, 6, 7]]
        return TriMesh(verts, faces, [0, 0, 0, 0])

    def test_inside_unchanged(self):
        plane, e1, e2 = _plane_with_frame([0.0, 0.0, 1.0], -0.5)
        wp = WorldPlane(plane, _grid_support(plane, [0, 0, 0.5], e1, e2, 6, 6, 0.5, 0.5), {0})
        out = clip_to_shell([wp], self._shell())
        assert len(out) == 1 and out[0].size == wp.size

    def test_stray_point_removed(self):
        plane, e1, e2 = _plane_with_frame([0.0, 0.0, 1.0], -0.5)
        support = _grid_support(plane, [0, 0, 0.5], e1, e2, 6, 6, 0.5, 0.5)
        pts = np.vstack([support.points, [[10.0, 0.0, 0.5]]])
        wp = WorldPlane(plane, PointCloud(pts), {0})
        out = clip_to_shell([wp], self._shell())
        assert out[0].size == wp.size - 1

    def test_fully_outside_plane_removed(self):
        plane, e1, e2 = _plane_with_frame([0.0, 0.0, 1.0], -9.0)
        wp = WorldPlane(plane, _grid_support(plane, [0, 0, 9.0], e1, e2, 5, 5), {0})
        assert clip_to_shell([wp], self._shell()) == []
