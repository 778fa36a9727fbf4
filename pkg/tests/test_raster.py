import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from mpi_engine import (
    BorderPolicy,
    CameraIntrinsics,
    GeometryError,
    Plane,
    Pose,
    ValidationError,
    bilinear_sample,
    homography_tgt_to_ref,
    make_raster,
    warp,
)

T = BorderPolicy.TRANSPARENT
C = BorderPolicy.CLAMP


def checker(width, height, channels=1, seed=3):
    rng = np.random.default_rng(seed)
    return rng.uniform(0.0, 1.0, (height, width, channels)).astype(np.float32)


class TestBilinear:
    def test_pixel_centers_reproduce_exactly(self):
        img = checker(5, 4, 3)
        for y in range(4):
            for x in range(5):
                np.testing.assert_array_equal(
                    bilinear_sample(img, float(x), float(y), T).astype(np.float32),
                    img[y, x],
                )

    def test_constant_image_partition_of_unity(self):
        img = make_raster(6, 6, 2, fill=0.73)
        for x, y in [(0.5, 0.5), (1.3, 4.9), (4.999, 0.001)]:
            np.testing.assert_allclose(bilinear_sample(img, x, y, T), 0.73, rtol=1e-6)

    def test_two_texel_hand_case(self):
        img = np.array([[[0.0], [10.0]]], dtype=np.float32)  # 2x1, values 0 and 10
        assert bilinear_sample(img, 0.25, 0.0, T)[0] == pytest.approx(2.5)

    def test_transparent_outside_reads_zero(self):
        img = make_raster(3, 3, 2, fill=1.0)
        for x, y in [(-0.1, 1.0), (1.0, -0.1), (2.1, 1.0), (1.0, 2.0001)]:
            np.testing.assert_array_equal(bilinear_sample(img, x, y, T), [0.0, 0.0])

    def test_clamp_outside_reads_edge(self):
        img = np.arange(6, dtype=np.float32).reshape(2, 3, 1)
        assert bilinear_sample(img, -5.0, 0.0, C)[0] == 0.0
        assert bilinear_sample(img, 10.0, 1.0, C)[0] == 5.0


def translation_h(dx, dy):
    h = np.eye(3)
    h[0, 2] = dx
    h[1, 2] = dy
    return h


class TestWarp:
    def test_identity_is_bit_exact(self):
        img = checker(7, 5, 3)
        out = warp(img, np.eye(3), 7, 5, T)
        np.testing.assert_array_equal(out, img)

    def test_integer_shift_reveals_zeros(self):
        img = checker(6, 4, 1)
        # h maps output px to source px; shifting content by (+2, +1) means
        # sampling the source at (u - 2, v - 1)
        out = warp(img, translation_h(-2.0, -1.0), 6, 4, T)
        np.testing.assert_array_equal(out[1:, 2:], img[:-1, :-2])
        assert np.all(out[0, :] == 0.0)
        assert np.all(out[:, :2] == 0.0)

    def test_single_texel_disparity_shift(self):
        # fronto-parallel plane at d=2, f=100, t_x=0.54 -> 27 px shift
        k = CameraIntrinsics(fx=100, fy=100, cx=32, cy=32, width=64, height=64)
        plane = Plane.fronto_parallel(2.0)
        pose = Pose.translation_only(x=0.54)
        h = homography_tgt_to_ref(plane, k, k, pose)
        img = make_raster(64, 64, 1)
        img[30, 20, 0] = 1.0
        out = warp(img, h, 64, 64, T)
        peak = np.unravel_index(np.argmax(out[:, :, 0]), out.shape[:2])
        assert peak == (30, 47)  # moved +27 px in x
        assert out[30, 47, 0] == pytest.approx(1.0, abs=1e-6)

    def test_output_dims_override(self):
        img = checker(6, 4, 2)
        out = warp(img, np.eye(3), 9, 3, T)
        assert out.shape == (3, 9, 2)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), a=st.floats(-2, 2), b=st.floats(-2, 2))
    def test_linearity(self, seed, a, b):
        rng = np.random.default_rng(seed)
        img_a = rng.uniform(0, 1, (5, 6, 2)).astype(np.float32)
        img_b = rng.uniform(0, 1, (5, 6, 2)).astype(np.float32)
        h = translation_h(float(rng.uniform(-2, 2)), float(rng.uniform(-2, 2)))
        lhs = warp((a * img_a + b * img_b).astype(np.float32), h, 6, 5, T)
        rhs = a * warp(img_a, h, 6, 5, T) + b * warp(img_b, h, 6, 5, T)
        np.testing.assert_allclose(lhs, rhs, atol=1e-6)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_range_preservation(self, seed):
        rng = np.random.default_rng(seed)
        lo, hi = -0.25, 0.8  # lo <= 0 so transparent zeros stay inside
        img = rng.uniform(lo, hi, (6, 6, 1)).astype(np.float32)
        h = translation_h(float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3)))
        out = warp(img, h, 6, 6, T)
        assert out.min() >= lo - 1e-6
        assert out.max() <= hi + 1e-6

    def test_alpha_stays_in_unit_interval(self, rng):
        alpha = rng.uniform(0, 1, (12, 12, 1)).astype(np.float32)
        h = translation_h(0.37, -1.21)
        out = warp(alpha, h, 12, 12, T)
        assert out.min() >= 0.0
        assert out.max() <= 1.0

    def test_round_trip_on_smooth_image(self):
        # band-limited test image: low-frequency sinusoids in [0, 1]
        w = h = 32
        yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
        img = (0.5 + 0.25 * np.sin(2 * np.pi * xx / 16) * np.cos(2 * np.pi * yy / 16)).astype(
            np.float32
        )[..., None]
        hom = np.array([[1.02, 0.01, 0.4], [-0.02, 0.99, -0.3], [0.0001, 0.0, 1.0]])
        once = warp(img, hom, w, h, T)
        back = warp(once, np.linalg.inv(hom), w, h, T)
        interior = (slice(4, -4), slice(4, -4))
        assert np.abs(back[interior] - img[interior]).max() < 2e-2

    def test_scale_invariance_of_homography(self):
        img = checker(10, 8, 2)
        hom = np.array([[1.1, 0.02, -0.5], [0.0, 0.93, 0.2], [0.0002, -0.0001, 1.0]])
        base = warp(img, hom, 10, 8, T)
        for c in (0.25, 7.5, 1e3):
            np.testing.assert_allclose(warp(img, c * hom, 10, 8, T), base, atol=1e-5)

    def test_degenerate_w_column_reads_transparent(self):
        # w = u - 2 vanishes along output column u = 2
        hom = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [1.0, 0.0, -2.0]])
        img = make_raster(5, 3, 1, fill=1.0)
        out = warp(img, hom, 5, 3, T)
        assert np.all(out[:, 2, 0] == 0.0)
        out_clamped = warp(img, hom, 5, 3, C)
        assert np.all(out_clamped[:, 2, 0] == 0.0)

    def test_singular_homography_rejected(self):
        img = checker(4, 4)
        with pytest.raises(GeometryError):
            warp(img, np.zeros((3, 3)), 4, 4, T)
        singular = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 0.0, 1.0]])
        with pytest.raises(GeometryError):
            warp(img, singular, 4, 4, T)

    def test_bad_inputs_rejected(self):
        img = checker(4, 4)
        with pytest.raises(ValidationError):
            warp(img, np.eye(3), 0, 4, T)
        with pytest.raises(ValidationError):
            warp(np.zeros((4, 4)), np.eye(3), 4, 4, T)  # missing channel axis
        nan_img = img.copy()
        nan_img[0, 0, 0] = np.nan
        with pytest.raises(ValidationError):
            warp(nan_img, np.eye(3), 4, 4, T)

    def test_thread_schedules_are_bit_identical(self):
        img = checker(33, 29, 3, seed=11)
        hom = np.array([[0.97, 0.03, 1.7], [-0.01, 1.05, -2.2], [0.0003, -0.0002, 1.0]])
        base = warp(img, hom, 31, 27, T, threads=1)
        for threads in (2, 3, 8):
            np.testing.assert_array_equal(warp(img, hom, 31, 27, T, threads=threads), base)
        np.testing.assert_array_equal(warp(img, hom, 31, 27, T, threads=0), base)

    def test_outputs_are_finite(self, rng):
        img = rng.uniform(-5, 5, (9, 9, 2)).astype(np.float32)
        hom = np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.3, 0.2, 1.0]])
        out = warp(img, hom, 9, 9, T)
        assert np.all(np.isfinite(out))
