"""Deterministic synthetic scene fixtures with analytic ground truth.

A fixture is a fronto-parallel ground plane covering the whole frame plus
axis-aligned boxes at fixed depths. Every primitive snaps to the nearest MPI
plane in inverse depth, so composited depth is exactly representable and the
analytic ground truth (any translational or rotational pose, via each plane's
own homography) can be compared against rendered output directly.

Pixels where no surface is visible read as label 0 and far-plane depth,
mirroring the renderer's argmax-on-zero-probabilities and normalized-depth
fallbacks. Lifted layer 0 holds the front visible semantics; deeper layers
hold the content occluded by the closer ones.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .geometry import CameraIntrinsics, Plane, Pose, homography_tgt_to_ref, plane_set
from .mpi import ChannelKind, HybridScene
from .raster import BORDER_EPS

__all__ = [
    "BoxSpec",
    "SynthSpec",
    "GroundTruth",
    "snap_to_plane",
    "synth_scene",
    "synth_ground_truth",
]


@dataclass(frozen=True)
class BoxSpec:
    """An opaque axis-aligned box: label, depth in meters, rect (x, y, w, h)."""

    label: int
    depth: float
    rect: tuple[int, int, int, int]

    def to_dict(self) -> dict:
        return {"label": self.label, "depth": self.depth, "rect": list(self.rect)}

    @classmethod
    def from_dict(cls, data: dict) -> "BoxSpec":
        try:
            return cls(int(data["label"]), float(data["depth"]), tuple(int(v) for v in data["rect"]))
        except KeyError as exc:
            raise ValidationError(f"box dict missing field {exc}") from exc


@dataclass(frozen=True)
class SynthSpec:
    """Layout of a synthetic fixture; fully determines the scene per seed."""

    width: int = 64
    height: int = 64
    focal: float = 100.0
    num_planes: int = 8
    num_lifted: int = 3
    num_labels: int = 4
    d_near: float = 1.0
    d_far: float = 100.0
    ground_depth: float = 50.0
    ground_label: int = 1
    boxes: tuple[BoxSpec, ...] = ()
    num_random_boxes: int = 0
    seed: int = 0

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValidationError(f"invalid image size {self.width}x{self.height}")
        if self.focal <= 0:
            raise ValidationError(f"focal must be positive, got {self.focal}")
        if not (0 < self.d_near < self.d_far):
            raise ValidationError(f"need 0 < d_near < d_far, got [{self.d_near}, {self.d_far}]")
        if self.num_lifted < 1 or self.num_lifted > self.num_planes:
            raise ValidationError(
                f"num_lifted must be in [1, num_planes], got {self.num_lifted} vs {self.num_planes}"
            )
        if self.num_labels < 1:
            raise ValidationError("need at least one label")
        if self.num_random_boxes < 0:
            raise ValidationError("num_random_boxes must be >= 0")
        depths = [self.ground_depth] + [b.depth for b in self.boxes]
        for d in depths:
            if not (self.d_near <= d <= self.d_far):
                raise ValidationError(
                    f"primitive depth {d} outside plane range [{self.d_near}, {self.d_far}]"
                )
        labels = [self.ground_label] + [b.label for b in self.boxes]
        for lab in labels:
            if not (0 <= lab < self.num_labels):
                raise ValidationError(f"label {lab} out of range [0, {self.num_labels})")
        object.__setattr__(self, "boxes", tuple(self.boxes))

    @property
    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(
            fx=self.focal,
            fy=self.focal,
            cx=(self.width - 1) / 2.0,
            cy=(self.height - 1) / 2.0,
            width=self.width,
            height=self.height,
        )

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "focal": self.focal,
            "num_planes": self.num_planes,
            "num_lifted": self.num_lifted,
            "num_labels": self.num_labels,
            "d_near": self.d_near,
            "d_far": self.d_far,
            "ground_depth": self.ground_depth,
            "ground_label": self.ground_label,
            "boxes": [b.to_dict() for b in self.boxes],
            "num_random_boxes": self.num_random_boxes,
            "seed": self.seed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SynthSpec":
        kwargs = dict(data)
        kwargs["boxes"] = tuple(BoxSpec.from_dict(b) for b in data.get("boxes", ()))
        try:
            return cls(**kwargs)
        except TypeError as exc:
            raise ValidationError(f"bad synth spec: {exc}") from exc

    @classmethod
    def from_json(cls, text: str) -> "SynthSpec":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"synth spec is not valid JSON: {exc}") from exc


@dataclass(frozen=True)
class GroundTruth:
    """Analytic depth and label maps for one pose."""

    depth: np.ndarray  # (H, W, 1) float32
    labels: np.ndarray  # (H, W) int32


@dataclass(frozen=True)
class _Surface:
    label: int
    plane_index: int
    rect: tuple[int, int, int, int]  # clipped to the frame


def snap_to_plane(planes, depth: float) -> int:
    """Index of the plane nearest in inverse depth (ties to the nearer plane)."""
    inv = np.array([1.0 / p.distance for p in planes])
    return int(np.argmin(np.abs(inv - 1.0 / depth)))


def _clip_rect(rect, width, height):
    x, y, w, h = rect
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + w, width), min(y + h, height)
    if x1 <= x0 or y1 <= y0:
        return None
    return (x0, y0, x1 - x0, y1 - y0)


def _random_boxes(spec: SynthSpec, planes, used_planes: set[int]) -> list[BoxSpec]:
    rng = np.random.default_rng(spec.seed)
    out = []
    for _ in range(spec.num_random_boxes):
        for _try in range(64):
            depth = float(rng.uniform(spec.d_near, spec.ground_depth))
            idx = snap_to_plane(planes, depth)
            if idx not in used_planes:
                break
        else:
            continue  # plane budget exhausted, skip this box
        used_planes.add(idx)
        w = int(rng.integers(max(2, spec.width // 8), max(3, spec.width // 3)))
        h = int(rng.integers(max(2, spec.height // 8), max(3, spec.height // 3)))
        x = int(rng.integers(0, max(1, spec.width - w)))
        y = int(rng.integers(0, max(1, spec.height - h)))
        label = int(rng.integers(1, spec.num_labels)) if spec.num_labels > 1 else 0
        out.append(BoxSpec(label=label, depth=depth, rect=(x, y, w, h)))
    return out


def _surfaces(spec: SynthSpec, planes) -> list[_Surface]:
    """All primitives, clipped and snapped, sorted nearest first (ties keep
    declaration order, ground last among equals)."""
    ground_idx = snap_to_plane(planes, spec.ground_depth)
    used = {ground_idx}
    used.update(snap_to_plane(planes, b.depth) for b in spec.boxes)
    boxes = list(spec.boxes) + _random_boxes(spec, planes, used)
    surfaces = []
    for box in boxes:
        clipped = _clip_rect(box.rect, spec.width, spec.height)
        if clipped is None:
            warnings.warn(
                f"box {box.rect} lies outside the {spec.width}x{spec.height} frame; skipped",
                stacklevel=2,
            )
            continue
        surfaces.append(_Surface(box.label, snap_to_plane(planes, box.depth), clipped))
    surfaces.append(_Surface(spec.ground_label, ground_idx, (0, 0, spec.width, spec.height)))
    order = sorted(range(len(surfaces)), key=lambda i: (surfaces[i].plane_index, i))
    return [surfaces[i] for i in order]


def _rect_mask(rect, width, height) -> np.ndarray:
    x, y, w, h = rect
    mask = np.zeros((height, width), dtype=bool)
    mask[y : y + h, x : x + w] = True
    return mask


def synth_scene(spec: SynthSpec) -> HybridScene:
    """Build the hybrid fixture scene. Deterministic per spec (seeded PCG64
    drives random boxes; everything else is fixed-width arithmetic)."""
    planes = plane_set(spec.d_near, spec.d_far, spec.num_planes)
    surfaces = _surfaces(spec, planes)
    w, h, k, m, l = spec.width, spec.height, spec.num_lifted, spec.num_planes, spec.num_labels

    alpha = np.zeros((m, h, w, 1), dtype=np.float32)
    layer_label = np.zeros((k, h, w), dtype=np.int32)
    layer_plane = np.zeros((k, h, w), dtype=np.int32)
    assigned = np.zeros((k, h, w), dtype=bool)
    depth_count = np.zeros((h, w), dtype=np.int32)

    for surf in surfaces:
        mask = _rect_mask(surf.rect, w, h)
        alpha[surf.plane_index, mask, 0] = 1.0
        for j in range(k):
            sel = mask & (depth_count == j)
            layer_label[j][sel] = surf.label
            layer_plane[j][sel] = surf.plane_index
            assigned[j][sel] = True
        depth_count[mask] += 1

    # Layers deeper than the local surface stack repeat the deepest content
    # but claim no plane: each plane stays owned by exactly one lifted layer,
    # so layer edits translate one-to-one into the expanded MPI.
    for j in range(1, k):
        un = ~assigned[j]
        layer_label[j][un] = layer_label[j - 1][un]

    eye = np.eye(l, dtype=np.float32)
    lifted = eye[layer_label]  # (k, H, W, l)

    phi = np.zeros((h, w, k, m), dtype=np.float32)
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    for j in range(k):
        sel = assigned[j]
        phi[yy[sel], xx[sel], j, layer_plane[j][sel]] = 1.0

    return HybridScene(
        lifted=lifted,
        alpha=alpha,
        assoc=phi,
        planes=tuple(planes),
        intrinsics=spec.intrinsics,
        channel_kind=ChannelKind.SEMANTICS,
    )


def synth_ground_truth(
    spec: SynthSpec, pose: Pose | None = None, k_tgt: CameraIntrinsics | None = None
) -> GroundTruth:
    """Analytic reprojection of the layout into a target camera.

    Each surface's coverage is tested by mapping target pixel centers through
    its own plane homography; a pixel is covered when the reference point
    falls within half a texel of the surface's rect (where bilinear resampling
    crosses alpha 0.5) and inside the reference sample domain [0, w-1] x
    [0, h-1] (where the transparent border cuts off). Visible surface =
    nearest covering one.
    """
    planes = plane_set(spec.d_near, spec.d_far, spec.num_planes)
    surfaces = _surfaces(spec, planes)
    pose = pose if pose is not None else Pose.identity()
    k_ref = spec.intrinsics
    k_tgt = k_tgt if k_tgt is not None else k_ref

    u = np.arange(k_tgt.width, dtype=np.float64)[None, :]
    v = np.arange(k_tgt.height, dtype=np.float64)[:, None]
    labels = np.zeros((k_tgt.height, k_tgt.width), dtype=np.int32)
    depth = np.full((k_tgt.height, k_tgt.width, 1), np.float32(planes[-1].distance), dtype=np.float32)
    unset = np.ones((k_tgt.height, k_tgt.width), dtype=bool)

    for surf in surfaces:
        hom = homography_tgt_to_ref(planes[surf.plane_index], k_ref, k_tgt, pose)
        sx = hom[0, 0] * u + hom[0, 1] * v + hom[0, 2]
        sy = hom[1, 0] * u + hom[1, 1] * v + hom[1, 2]
        sw = hom[2, 0] * u + hom[2, 1] * v + hom[2, 2]
        ok = np.abs(sw) >= 1e-12
        sw = np.where(ok, sw, 1.0)
        xr = sx / sw
        yr = sy / sw
        x0, y0, bw, bh = surf.rect
        covered = (
            ok
            & (xr >= x0 - 0.5)
            & (xr < x0 + bw - 0.5)
            & (yr >= y0 - 0.5)
            & (yr < y0 + bh - 0.5)
            & (xr >= -BORDER_EPS)
            & (xr <= k_ref.width - 1 + BORDER_EPS)
            & (yr >= -BORDER_EPS)
            & (yr <= k_ref.height - 1 + BORDER_EPS)
        )
        take = covered & unset
        labels[take] = surf.label
        depth[take, 0] = np.float32(planes[surf.plane_index].distance)
        unset &= ~take

    return GroundTruth(depth=depth, labels=labels)
