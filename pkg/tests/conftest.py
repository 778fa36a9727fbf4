import numpy as np
import pytest

from mpi_engine import (
    CameraIntrinsics,
    ChannelKind,
    HybridScene,
    MpiScene,
    Plane,
    Pose,
    plane_set,
)


def planes_for(m, d_near=1.0, d_far=20.0):
    if m == 1:
        return (Plane.fronto_parallel(d_near),)
    return tuple(plane_set(d_near, d_far, m))


def random_rotation(rng):
    """Uniform-ish rotation from the QR of a Gaussian matrix, det forced +1."""
    mat = rng.normal(size=(3, 3))
    q, r = np.linalg.qr(mat)
    q = q @ np.diag(np.sign(np.diag(r)))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


def random_pose(rng, max_translation=0.5):
    return Pose(random_rotation(rng), rng.uniform(-max_translation, max_translation, 3))


def random_intrinsics(rng, width=64, height=48):
    return CameraIntrinsics(
        fx=float(rng.uniform(50, 200)),
        fy=float(rng.uniform(50, 200)),
        cx=float(rng.uniform(0.3, 0.7) * width),
        cy=float(rng.uniform(0.3, 0.7) * height),
        width=width,
        height=height,
    )


def square_intrinsics(focal, width, height):
    return CameraIntrinsics(fx=focal, fy=focal, cx=(width - 1) / 2.0,
                            cy=(height - 1) / 2.0, width=width, height=height)


def random_mpi_scene(rng, width=4, height=4, m=3, channels=3,
                     kind=ChannelKind.COLOR, d_near=1.0, d_far=20.0):
    content = rng.uniform(0.0, 1.0, (m, height, width, channels)).astype(np.float32)
    if kind is ChannelKind.SEMANTICS:
        content = rng.dirichlet(np.ones(channels), size=(m, height, width)).astype(np.float32)
        content *= rng.uniform(0.2, 1.0, (m, height, width, 1)).astype(np.float32)
    alpha = rng.uniform(0.0, 1.0, (m, height, width, 1)).astype(np.float32)
    return MpiScene(
        planes=planes_for(m, d_near, d_far),
        content=content,
        alpha=alpha,
        intrinsics=square_intrinsics(60.0, width, height),
        channel_kind=kind,
    )


def random_hybrid_scene(rng, width=4, height=4, k=2, m=4, channels=3,
                        kind=ChannelKind.SEMANTICS, degenerate_columns=True):
    if kind is ChannelKind.SEMANTICS:
        lifted = rng.dirichlet(np.ones(channels), size=(k, height, width)).astype(np.float32)
    else:
        lifted = rng.uniform(-1.0, 1.0, (k, height, width, channels)).astype(np.float32)
    alpha = rng.uniform(0.0, 1.0, (m, height, width, 1)).astype(np.float32)
    assoc = rng.uniform(0.0, 1.0, (height, width, k, m)).astype(np.float32)
    if degenerate_columns:
        drop = rng.uniform(size=(height, width, 1, m)) < 0.15
        assoc = np.where(drop, np.float32(0.0), assoc)
    return HybridScene(
        lifted=lifted,
        alpha=alpha,
        assoc=assoc,
        planes=planes_for(m),
        intrinsics=square_intrinsics(60.0, width, height),
        channel_kind=kind,
    )


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
