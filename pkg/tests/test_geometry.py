import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpi_engine import (
    CameraIntrinsics,
    GeometryError,
    Plane,
    Pose,
    ValidationError,
    compose_pose,
    homography,
    homography_ref_to_tgt,
    homography_tgt_to_ref,
    invert_pose,
    plane_set,
    project_point,
    transform_plane,
)

from conftest import random_intrinsics, random_pose, random_rotation
from oracles import compose_pose_matmul


def unit(v):
    v = np.asarray(v, dtype=np.float64)
    return v / np.linalg.norm(v)


class TestTypes:
    def test_intrinsics_validation(self):
        with pytest.raises(ValidationError):
            CameraIntrinsics(fx=-1, fy=1, cx=0, cy=0, width=4, height=4)
        with pytest.raises(ValidationError):
            CameraIntrinsics(fx=1, fy=1, cx=0, cy=0, width=0, height=4)

    def test_pose_rejects_non_orthonormal(self):
        with pytest.raises(ValidationError):
            Pose(np.eye(3) * 2.0, np.zeros(3))

    def test_pose_rejects_reflection(self):
        refl = np.diag([1.0, 1.0, -1.0])
        with pytest.raises(ValidationError):
            Pose(refl, np.zeros(3))

    def test_plane_validation(self):
        with pytest.raises(ValidationError):
            Plane(np.array([0.0, 0.0, 2.0]), 1.0)
        with pytest.raises(ValidationError):
            Plane(np.array([0.0, 0.0, 1.0]), 0.0)

    def test_pose_arrays_are_frozen(self):
        p = Pose.identity()
        with pytest.raises(ValueError):
            p.rotation[0, 0] = 5.0


class TestPoseOps:
    def test_invert_identity(self):
        inv = invert_pose(Pose.identity())
        assert np.allclose(inv.rotation, np.eye(3))
        assert np.allclose(inv.translation, 0.0)

    def test_invert_pure_translation_negates(self):
        inv = invert_pose(Pose.translation_only(x=1.0))
        assert np.allclose(inv.rotation, np.eye(3))
        assert np.allclose(inv.translation, [-1.0, 0.0, 0.0])

    def test_compose_identities(self):
        c = compose_pose(Pose.identity(), Pose.identity())
        assert np.allclose(c.matrix, np.eye(4))

    def test_compose_translations_add(self):
        c = compose_pose(Pose.translation_only(x=1.0), Pose.translation_only(y=1.0))
        assert np.allclose(c.translation, [1.0, 1.0, 0.0])

    def test_compose_matches_matrix_oracle(self, rng):
        for _ in range(50):
            a = random_pose(rng)
            b = random_pose(rng)
            c = compose_pose(a, b)
            rot, trans = compose_pose_matmul(a.rotation, a.translation, b.rotation, b.translation)
            np.testing.assert_allclose(c.rotation, rot, atol=1e-12)
            np.testing.assert_allclose(c.translation, trans, atol=1e-12)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_invert_round_trips_to_identity(self, seed):
        pose = random_pose(np.random.default_rng(seed), max_translation=3.0)
        rt = compose_pose(pose, invert_pose(pose))
        assert np.abs(rt.rotation - np.eye(3)).max() < 1e-9
        assert np.abs(rt.translation).max() < 1e-9

    def test_apply_matches_matrix(self, rng):
        pose = random_pose(rng)
        pts = rng.normal(size=(5, 3))
        expected = (pose.matrix @ np.concatenate([pts, np.ones((5, 1))], axis=1).T).T[:, :3]
        np.testing.assert_allclose(pose.apply(pts), expected, atol=1e-12)


class TestPlaneSet:
    def test_inverse_depth_spacing_endpoints(self):
        planes = plane_set(1.0, 100.0, 32)
        assert len(planes) == 32
        assert planes[0].distance == pytest.approx(1.0)
        assert planes[-1].distance == pytest.approx(100.0)
        inv = np.array([1.0 / p.distance for p in planes])
        steps = np.diff(inv)
        np.testing.assert_allclose(steps, steps[0], rtol=1e-9)

    def test_three_plane_hand_case(self):
        # 1/d = [1, 2/3, 1/3] -> d = [1, 1.5, 3]
        dists = [p.distance for p in plane_set(1.0, 3.0, 3)]
        np.testing.assert_allclose(dists, [1.0, 1.5, 3.0], rtol=1e-12)

    def test_distances_strictly_increasing(self):
        dists = [p.distance for p in plane_set(2.0, 77.0, 13)]
        assert all(b > a for a, b in zip(dists, dists[1:]))

    def test_all_fronto_parallel(self):
        for p in plane_set(0.5, 9.0, 5):
            np.testing.assert_allclose(p.normal, [0.0, 0.0, 1.0])

    def test_rejects_degenerate_ranges(self):
        with pytest.raises(ValidationError):
            plane_set(2.0, 2.0, 8)
        with pytest.raises(ValidationError):
            plane_set(3.0, 2.0, 8)
        with pytest.raises(ValidationError):
            plane_set(0.0, 2.0, 8)
        with pytest.raises(ValidationError):
            plane_set(1.0, 2.0, 1)


class TestProjectPoint:
    def test_optical_axis(self):
        k = CameraIntrinsics(fx=1, fy=1, cx=0, cy=0, width=8, height=8)
        assert project_point(k, Pose.identity(), [0.0, 0.0, 1.0]) == (0.0, 0.0)

    def test_hand_case(self):
        k = CameraIntrinsics(fx=100, fy=100, cx=50, cy=50, width=100, height=100)
        u, v = project_point(k, Pose.identity(), [1.0, 0.0, 2.0])
        assert (u, v) == (100.0, 50.0)

    def test_behind_camera(self):
        k = CameraIntrinsics(fx=1, fy=1, cx=0, cy=0, width=8, height=8)
        with pytest.raises(GeometryError):
            project_point(k, Pose.identity(), [0.0, 0.0, -1.0])


def point_on_plane_through_pixel(plane, k_ref, u, v):
    """Intersect the reference ray of pixel (u, v) with the plane."""
    ray = k_ref.inverse_matrix @ np.array([u, v, 1.0])
    denom = plane.normal @ ray
    if abs(denom) < 1e-9:
        return None
    s = plane.distance / denom
    if s <= 0:
        return None
    return s * ray


class TestHomography:
    def test_identity_configuration_any_plane(self, rng):
        k = random_intrinsics(rng)
        planes = [Plane.fronto_parallel(d) for d in (0.5, 3.0, 80.0)]
        planes.append(Plane(unit([0.2, -0.1, 1.0]), 4.0))
        for plane in planes:
            h = homography(plane, k, k, Pose.identity())
            h = h / np.linalg.norm(h)
            eye = np.eye(3) / np.linalg.norm(np.eye(3))
            assert np.abs(h - eye).max() < 1e-12

    def test_fronto_parallel_translation_is_pixel_shift(self):
        k = CameraIntrinsics(fx=100, fy=100, cx=32, cy=32, width=64, height=64)
        plane = Plane.fronto_parallel(2.0)
        pose = Pose.translation_only(x=0.54)
        h = homography_ref_to_tgt(plane, k, k, pose)
        h = h / h[2, 2]
        # pure pixel translation of magnitude f * t_x / d = 27 px
        expected = np.eye(3)
        expected[0, 2] = 27.0
        np.testing.assert_allclose(h, expected, atol=1e-9)

    def test_point_on_plane_oracle_pins_direction(self, rng):
        hits = 0
        while hits < 100:
            k_ref = random_intrinsics(rng)
            k_tgt = random_intrinsics(rng)
            pose = random_pose(rng, max_translation=0.4)
            normal = unit(rng.normal(size=3) + [0, 0, 3.0])
            plane = Plane(normal, float(rng.uniform(2.0, 8.0)))
            u = rng.uniform(5, k_ref.width - 5)
            v = rng.uniform(5, k_ref.height - 5)
            x = point_on_plane_through_pixel(plane, k_ref, u, v)
            if x is None:
                continue
            try:
                ut, vt = project_point(k_tgt, pose, x)
            except GeometryError:
                continue
            h = homography_tgt_to_ref(plane, k_ref, k_tgt, pose)
            mapped = h @ np.array([ut, vt, 1.0])
            assert abs(mapped[0] / mapped[2] - u) < 1e-6
            assert abs(mapped[1] / mapped[2] - v) < 1e-6
            fwd = homography_ref_to_tgt(plane, k_ref, k_tgt, pose)
            mapped_f = fwd @ np.array([u, v, 1.0])
            assert abs(mapped_f[0] / mapped_f[2] - ut) < 1e-6
            assert abs(mapped_f[1] / mapped_f[2] - vt) < 1e-6
            hits += 1

    def test_directions_are_mutual_inverses(self, rng):
        for _ in range(20):
            k_ref = random_intrinsics(rng)
            k_tgt = random_intrinsics(rng)
            pose = random_pose(rng)
            plane = Plane.fronto_parallel(float(rng.uniform(1.0, 10.0)))
            back = homography_tgt_to_ref(plane, k_ref, k_tgt, pose)
            fwd = homography_ref_to_tgt(plane, k_ref, k_tgt, pose)
            prod = back @ fwd
            prod = prod / prod[2, 2]
            np.testing.assert_allclose(prod, np.eye(3), atol=1e-9)

    def test_camera_center_on_plane_is_degenerate(self):
        k = CameraIntrinsics(fx=50, fy=50, cx=16, cy=16, width=32, height=32)
        plane = Plane.fronto_parallel(1.0)
        # target camera center is at -R^T t = (0, 0, 1), exactly on the plane
        pose = Pose.translation_only(z=-1.0)
        with pytest.raises(GeometryError):
            homography_tgt_to_ref(plane, k, k, pose)
        with pytest.raises(GeometryError):
            homography_ref_to_tgt(plane, k, k, pose)

    def test_composition_for_shared_plane(self, rng):
        # Translation-only chain keeps the plane fronto-parallel in every frame.
        k = random_intrinsics(rng)
        plane_a = Plane.fronto_parallel(5.0)
        theta_ab = Pose.translation_only(x=0.3, z=0.4)
        theta_bc = Pose.translation_only(x=-0.1, z=0.7)
        theta_ac = compose_pose(theta_bc, theta_ab)
        plane_b = transform_plane(plane_a, theta_ab)
        h_ab = homography_tgt_to_ref(plane_a, k, k, theta_ab)
        h_bc = homography_tgt_to_ref(plane_b, k, k, theta_bc)
        h_ac = homography_tgt_to_ref(plane_a, k, k, theta_ac)
        chained = h_ab @ h_bc
        chained /= np.linalg.norm(chained) * np.sign(chained[2, 2])
        direct = h_ac / (np.linalg.norm(h_ac) * np.sign(h_ac[2, 2]))
        np.testing.assert_allclose(chained, direct, atol=1e-12)


class TestTransformPlane:
    def test_points_satisfy_target_equation(self, rng):
        for _ in range(20):
            pose = random_pose(rng)
            plane = Plane(unit(rng.normal(size=3) + [0, 0, 4.0]), float(rng.uniform(2, 9)))
            moved = transform_plane(plane, pose)
            # sample points on the reference plane, map them, check n_t . x = d_t
            for _ in range(5):
                tangent = rng.normal(size=3)
                tangent -= (tangent @ plane.normal) * plane.normal
                x_ref = plane.normal * plane.distance + tangent
                x_tgt = pose.apply(x_ref)
                assert abs(moved.normal @ x_tgt - moved.distance) < 1e-9


class TestSerialization:
    def test_round_trip_dicts(self, rng):
        pose = random_pose(rng)
        assert np.array_equal(Pose.from_dict(pose.to_dict()).rotation, pose.rotation)
        k = random_intrinsics(rng)
        assert CameraIntrinsics.from_dict(k.to_dict()) == k
        plane = Plane.fronto_parallel(3.5)
        back = Plane.from_dict(plane.to_dict())
        assert back.distance == plane.distance
        assert np.array_equal(back.normal, plane.normal)

    def test_missing_fields_rejected(self):
        with pytest.raises(ValidationError):
            Pose.from_dict({"rotation": np.eye(3).tolist()})
        with pytest.raises(ValidationError):
            CameraIntrinsics.from_dict({"fx": 1.0})
