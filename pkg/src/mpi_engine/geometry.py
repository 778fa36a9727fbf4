"""Pinhole cameras, SE(3) poses, plane sets and plane-induced homographies.

Conventions (pinned by the point-projection oracle in the test suite):
  - camera frame: x right, y down, z forward; a camera sees points with z > 0
  - pixel (u, v) corresponds to the homogeneous vector [u, v, 1]
  - a plane is n^T X = d in the reference camera frame, with unit n and d > 0
  - a pose theta = (R, t) maps reference coordinates to target coordinates:
    X_tgt = R @ X_ref + t

All math here is float64; raster data elsewhere is float32.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError, ValidationError

__all__ = [
    "CameraIntrinsics",
    "Pose",
    "Plane",
    "invert_pose",
    "compose_pose",
    "transform_plane",
    "plane_set",
    "project_point",
    "homography",
    "homography_tgt_to_ref",
    "homography_ref_to_tgt",
]

_ORTHO_TOL = 1e-9


def _as_float_array(value, shape, name):
    arr = np.asarray(value, dtype=np.float64)
    if arr.shape != shape:
        raise ValidationError(f"{name} must have shape {shape}, got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} contains non-finite values")
    return arr


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole intrinsics: focal lengths and principal point in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if not (self.width >= 1 and self.height >= 1):
            raise ValidationError(f"image size must be >= 1, got {self.width}x{self.height}")

    @property
    def matrix(self) -> np.ndarray:
        """3x3 calibration matrix K."""
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]],
            dtype=np.float64,
        )

    @property
    def inverse_matrix(self) -> np.ndarray:
        """Closed-form K^-1 (cheaper and more accurate than a generic inverse)."""
        return np.array(
            [
                [1.0 / self.fx, 0.0, -self.cx / self.fx],
                [0.0, 1.0 / self.fy, -self.cy / self.fy],
                [0.0, 0.0, 1.0],
            ],
            dtype=np.float64,
        )

    def to_dict(self) -> dict:
        return {
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "CameraIntrinsics":
        try:
            return cls(
                fx=float(data["fx"]),
                fy=float(data["fy"]),
                cx=float(data["cx"]),
                cy=float(data["cy"]),
                width=int(data["width"]),
                height=int(data["height"]),
            )
        except KeyError as exc:
            raise ValidationError(f"intrinsics dict missing field {exc}") from exc


@dataclass(frozen=True, eq=False)
class Pose:
    """SE(3) transform mapping reference coordinates to target coordinates."""

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        rot = _as_float_array(self.rotation, (3, 3), "rotation").copy()
        trans = _as_float_array(self.translation, (3,), "translation").copy()
        if not np.allclose(rot.T @ rot, np.eye(3), atol=_ORTHO_TOL, rtol=0.0):
            raise ValidationError("rotation is not orthonormal within 1e-9")
        if abs(np.linalg.det(rot) - 1.0) > _ORTHO_TOL:
            raise ValidationError("rotation determinant is not +1 within 1e-9")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def translation_only(cls, x: float = 0.0, y: float = 0.0, z: float = 0.0) -> "Pose":
        return cls(np.eye(3), np.array([x, y, z], dtype=np.float64))

    @property
    def matrix(self) -> np.ndarray:
        """4x4 homogeneous matrix [R | t; 0 1]."""
        mat = np.eye(4)
        mat[:3, :3] = self.rotation
        mat[:3, 3] = self.translation
        return mat

    def apply(self, x) -> np.ndarray:
        """Map a 3-point (or Nx3 batch) from the reference to the target frame."""
        pts = np.asarray(x, dtype=np.float64)
        return pts @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        return {
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Pose":
        try:
            return cls(np.asarray(data["rotation"]), np.asarray(data["translation"]))
        except KeyError as exc:
            raise ValidationError(f"pose dict missing field {exc}") from exc


@dataclass(frozen=True, eq=False)
class Plane:
    """One MPI plane [n^T, d] in the reference camera frame, n^T X = d."""

    normal: np.ndarray
    distance: float

    def __post_init__(self):
        normal = _as_float_array(self.normal, (3,), "normal").copy()
        if abs(np.linalg.norm(normal) - 1.0) > _ORTHO_TOL:
            raise ValidationError("plane normal must be unit length within 1e-9")
        if not self.distance > 0:
            raise ValidationError(f"plane distance must be > 0, got {self.distance}")
        normal.setflags(write=False)
        object.__setattr__(self, "normal", normal)
        object.__setattr__(self, "distance", float(self.distance))

    @classmethod
    def fronto_parallel(cls, distance: float) -> "Plane":
        return cls(np.array([0.0, 0.0, 1.0]), distance)

    def to_dict(self) -> dict:
        return {"normal": self.normal.tolist(), "distance": self.distance}

    @classmethod
    def from_dict(cls, data: dict) -> "Plane":
        try:
            return cls(np.asarray(data["normal"]), float(data["distance"]))
        except KeyError as exc:
            raise ValidationError(f"plane dict missing field {exc}") from exc


def invert_pose(p: Pose) -> Pose:
    """Inverse transform: maps target coordinates back to reference coordinates."""
    rot_inv = p.rotation.T
    return Pose(rot_inv, -rot_inv @ p.translation)


def compose_pose(a: Pose, b: Pose) -> Pose:
    """Composition a(b(x)): R = R_a R_b, t = R_a t_b + t_a."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def transform_plane(plane: Plane, pose: Pose) -> Plane:
    """Re-express a reference-frame plane in the pose's target frame.

    n_t = R n, d_t = d + n^T R^T t. Raises if the plane would end up behind
    or through the target camera (d_t <= 0).
    """
    n_t = pose.rotation @ plane.normal
    d_t = plane.distance + plane.normal @ (pose.rotation.T @ pose.translation)
    if not d_t > 0:
        raise GeometryError(f"plane crosses the target camera center (d_t={d_t:.3g})")
    return Plane(n_t, d_t)


def plane_set(d_near: float, d_far: float, m: int) -> list[Plane]:
    """m fronto-parallel planes with inverse distance sampled linearly.

    1/d_i runs uniformly from 1/d_near to 1/d_far inclusive, so distances
    are strictly increasing with d_1 = d_near and d_m = d_far.
    """
    if m < 2:
        raise ValidationError(f"plane count must be >= 2, got {m}")
    if not (0 < d_near < d_far):
        raise ValidationError(f"need 0 < d_near < d_far, got [{d_near}, {d_far}]")
    inv = np.linspace(1.0 / d_near, 1.0 / d_far, int(m))
    return [Plane.fronto_parallel(1.0 / v) for v in inv]


def project_point(k: CameraIntrinsics, pose: Pose, x) -> tuple[float, float]:
    """Pinhole projection of (R x + t); the sign-convention oracle for the homography maps.

    Raises GeometryError for points at or behind the camera (z' <= 1e-9).
    """
    pt = _as_float_array(x, (3,), "point")
    cam = pose.rotation @ pt + pose.translation
    if cam[2] <= 1e-9:
        raise GeometryError(f"point is behind the camera (z={cam[2]:.3g})")
    u = k.fx * cam[0] / cam[2] + k.cx
    v = k.fy * cam[1] / cam[2] + k.cy
    return float(u), float(v)


def _bracket_tgt_to_ref(plane: Plane, theta: Pose) -> np.ndarray:
    """The plane-induced 3x3 map from target-frame to reference-frame rays.

    R^T + (R^T t)(R n)^T / (-d - n^T R^T t). The denominator vanishes exactly
    when the target camera center lies on the plane.
    """
    rot_t = theta.rotation.T
    rt_t = rot_t @ theta.translation
    denom = -plane.distance - plane.normal @ rt_t
    if abs(denom) <= 1e-12:
        raise GeometryError(
            f"degenerate homography: target camera center lies on the plane "
            f"(d={plane.distance}, denominator={denom:.3g})"
        )
    return rot_t + np.outer(rt_t, theta.rotation @ plane.normal) / denom


def homography_tgt_to_ref(
    plane: Plane, k_ref: CameraIntrinsics, k_tgt: CameraIntrinsics, theta: Pose
) -> np.ndarray:
    """Homography mapping target pixels to reference pixels (inverse-warp form).

    H = K^ref [R^T + (R^T t n^T R^T)/(-d - n^T R^T t)] K^tgt^-1, the direction
    validated by the projection oracle. Defined up to scale.
    """
    return k_ref.matrix @ _bracket_tgt_to_ref(plane, theta) @ k_tgt.inverse_matrix


def homography_ref_to_tgt(
    plane: Plane, k_ref: CameraIntrinsics, k_tgt: CameraIntrinsics, theta: Pose
) -> np.ndarray:
    """Homography mapping reference pixels to target pixels.

    Closed form K^tgt (R + t n^T / d) K^ref^-1; the matrix inverse of
    homography_tgt_to_ref up to scale.
    """
    # Degeneracy is shared with the inverse direction; check it the same way.
    _bracket_tgt_to_ref(plane, theta)
    fwd = theta.rotation + np.outer(theta.translation, plane.normal) / plane.distance
    return k_tgt.matrix @ fwd @ k_ref.inverse_matrix


# The canonical plane-homography map in its oracle-pinned direction: target
# pixels -> reference pixels, the form consumed by inverse warping.
homography = homography_tgt_to_ref
