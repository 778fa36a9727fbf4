"""MPI and hybrid scene containers, compositing, rendering, depth, editing.

Plane stacks are ordered front to back: index 0 is the nearest plane, and the
occlusion product in compositing runs over the planes in front of each layer.
Scenes are immutable after construction (arrays are marked read-only); every
operation here is a pure function and safe to call concurrently.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ValidationError
from .geometry import CameraIntrinsics, Plane, Pose, homography_tgt_to_ref
from .raster import BorderPolicy, warp

__all__ = [
    "ChannelKind",
    "DepthMode",
    "MpiScene",
    "HybridScene",
    "CompositeOutput",
    "SemanticRender",
    "SetLabel",
    "Erase",
    "PasteStamp",
    "EditOp",
    "normalize_association",
    "expand_hybrid",
    "composite",
    "render_view",
    "render_semantics",
    "depth_from_alpha",
    "inverse_depth_from_alpha",
    "depth_to_disparity",
    "apply_edits",
]

SIMPLEX_TOL = 1e-4
COVERAGE_EPS = 1e-6


class ChannelKind(enum.Enum):
    COLOR = "color"
    SEMANTICS = "semantics"
    FEATURES = "features"


class DepthMode(enum.Enum):
    """RAW composites plane values verbatim; NORMALIZED divides by coverage
    and lets fully transparent pixels read as the far plane."""

    RAW = "raw"
    NORMALIZED = "normalized"


def _freeze(arr: np.ndarray) -> np.ndarray:
    out = np.ascontiguousarray(arr, dtype=np.float32)
    if out is arr or out.base is arr:
        out = out.copy()
    out.setflags(write=False)
    return out


def _check_planes(planes, m: int) -> tuple[Plane, ...]:
    planes = tuple(planes)
    if len(planes) != m:
        raise ValidationError(f"expected {m} planes, got {len(planes)}")
    dists = [p.distance for p in planes]
    if any(b <= a for a, b in zip(dists, dists[1:])):
        raise ValidationError("plane distances must be strictly increasing front to back")
    return planes


def _check_alpha(alpha: np.ndarray, name: str = "alpha") -> None:
    if alpha.ndim != 4 or alpha.shape[3] != 1:
        raise ValidationError(f"{name} must be (m, H, W, 1), got {alpha.shape}")
    if not np.all(np.isfinite(alpha)):
        raise ValidationError(f"{name} contains non-finite values")
    if alpha.min() < 0.0 or alpha.max() > 1.0:
        raise ValidationError(f"{name} values must lie in [0, 1]")


def _check_simplex(content: np.ndarray, name: str) -> None:
    if content.min() < -SIMPLEX_TOL:
        raise ValidationError(f"{name}: semantic values must be >= 0 (within {SIMPLEX_TOL})")
    sums = content.sum(axis=-1, dtype=np.float64)
    if sums.max() > 1.0 + SIMPLEX_TOL:
        raise ValidationError(f"{name}: per-pixel semantic sums must be <= 1 (within {SIMPLEX_TOL})")


def _check_intrinsics_dims(intrinsics: CameraIntrinsics, w: int, h: int) -> None:
    if (intrinsics.width, intrinsics.height) != (w, h):
        raise ValidationError(
            f"intrinsics size {intrinsics.width}x{intrinsics.height} "
            f"does not match raster size {w}x{h}"
        )


@dataclass(frozen=True, eq=False)
class MpiScene:
    """Full MPI: m planes with per-plane content and alpha rasters."""

    planes: tuple[Plane, ...]
    content: np.ndarray  # (m, H, W, C) float32
    alpha: np.ndarray  # (m, H, W, 1) float32 in [0, 1]
    intrinsics: CameraIntrinsics
    channel_kind: ChannelKind = ChannelKind.COLOR

    def __post_init__(self):
        content = _freeze(np.asarray(self.content))
        alpha = _freeze(np.asarray(self.alpha))
        if content.ndim != 4:
            raise ValidationError(f"content must be (m, H, W, C), got {content.shape}")
        m = content.shape[0]
        if m < 1:
            raise ValidationError("scene needs at least one plane")
        _check_alpha(alpha)
        if alpha.shape[:3] != content.shape[:3]:
            raise ValidationError(
                f"alpha shape {alpha.shape} does not match content shape {content.shape}"
            )
        if not np.all(np.isfinite(content)):
            raise ValidationError("content contains non-finite values")
        if self.channel_kind is ChannelKind.SEMANTICS:
            _check_simplex(content, "content")
        planes = _check_planes(self.planes, m)
        _check_intrinsics_dims(self.intrinsics, content.shape[2], content.shape[1])
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "content", content)
        object.__setattr__(self, "alpha", alpha)

    @property
    def num_planes(self) -> int:
        return self.content.shape[0]

    @property
    def height(self) -> int:
        return self.content.shape[1]

    @property
    def width(self) -> int:
        return self.content.shape[2]

    @property
    def channels(self) -> int:
        return self.content.shape[3]


@dataclass(frozen=True, eq=False)
class HybridScene:
    """Hybrid representation: k lifted content layers, m alpha layers, and a
    per-pixel association tensor distributing lifted layers onto planes."""

    lifted: np.ndarray  # (k, H, W, C) float32
    alpha: np.ndarray  # (m, H, W, 1) float32 in [0, 1]
    assoc: np.ndarray  # (H, W, k, m) float32 >= 0
    planes: tuple[Plane, ...]
    intrinsics: CameraIntrinsics
    channel_kind: ChannelKind = ChannelKind.SEMANTICS

    def __post_init__(self):
        lifted = _freeze(np.asarray(self.lifted))
        alpha = _freeze(np.asarray(self.alpha))
        assoc = _freeze(np.asarray(self.assoc))
        if lifted.ndim != 4:
            raise ValidationError(f"lifted must be (k, H, W, C), got {lifted.shape}")
        _check_alpha(alpha)
        k, h, w, _ = lifted.shape
        m = alpha.shape[0]
        if k < 1:
            raise ValidationError("need at least one lifted layer")
        # Spec intent is k < m (memory saving) but identity association
        # fixtures need k == m, so equality is allowed.
        if k > m:
            raise ValidationError(f"lifted layer count {k} exceeds plane count {m}")
        if alpha.shape[1:3] != (h, w):
            raise ValidationError(
                f"alpha size {alpha.shape[1:3]} does not match lifted size {(h, w)}"
            )
        if assoc.shape != (h, w, k, m):
            raise ValidationError(
                f"association tensor must be {(h, w, k, m)}, got {assoc.shape}"
            )
        if not np.all(np.isfinite(lifted)):
            raise ValidationError("lifted contains non-finite values")
        if not np.all(np.isfinite(assoc)):
            raise ValidationError("association tensor contains non-finite values")
        if assoc.min() < 0.0:
            raise ValidationError("association tensor entries must be >= 0")
        if self.channel_kind is ChannelKind.SEMANTICS:
            _check_simplex(lifted, "lifted")
        planes = _check_planes(self.planes, m)
        _check_intrinsics_dims(self.intrinsics, w, h)
        object.__setattr__(self, "planes", planes)
        object.__setattr__(self, "lifted", lifted)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "assoc", assoc)

    @property
    def num_lifted(self) -> int:
        return self.lifted.shape[0]

    @property
    def num_planes(self) -> int:
        return self.alpha.shape[0]

    @property
    def height(self) -> int:
        return self.lifted.shape[1]

    @property
    def width(self) -> int:
        return self.lifted.shape[2]

    @property
    def channels(self) -> int:
        return self.lifted.shape[3]


@dataclass(frozen=True)
class CompositeOutput:
    """Composited content plus the residual see-through fraction."""

    image: np.ndarray  # (H, W, C) float32
    transmittance: np.ndarray  # (H, W, 1) float32


@dataclass(frozen=True)
class SemanticRender:
    labels: np.ndarray  # (H, W) int32, argmax with ties to the lowest label
    probabilities: np.ndarray  # (H, W, l) float32
    transmittance: np.ndarray  # (H, W, 1) float32


def normalize_association(phi: np.ndarray) -> np.ndarray:
    """Column-normalize an association tensor (H, W, k, m) over its k axis.

    Each (pixel, plane) column is divided by its sum; columns whose sum is
    <= 1e-8 become the uniform column 1/k. Idempotent up to rounding.
    """
    arr = np.asarray(phi)
    if arr.ndim != 4:
        raise ValidationError(f"association tensor must be (H, W, k, m), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("association tensor contains non-finite values")
    if arr.min() < 0.0:
        raise ValidationError("association tensor entries must be >= 0")
    k = arr.shape[2]
    arr = arr.astype(np.float64)
    sums = arr.sum(axis=2, keepdims=True)
    degenerate = sums <= 1e-8
    safe = np.where(degenerate, 1.0, sums)
    out = np.where(degenerate, 1.0 / k, arr / safe)
    return out.astype(np.float32)


def expand_hybrid(scene: HybridScene) -> MpiScene:
    """Materialize the full MPI: per pixel, content (C x m) = lifted (C x k)
    times the column-normalized association matrix (k x m). Alphas and planes
    carry through unchanged."""
    phi = normalize_association(scene.assoc).astype(np.float64)
    lifted = scene.lifted.astype(np.float64)
    content = np.einsum("jhwc,hwji->ihwc", lifted, phi).astype(np.float32)
    return MpiScene(
        planes=scene.planes,
        content=content,
        alpha=scene.alpha,
        intrinsics=scene.intrinsics,
        channel_kind=scene.channel_kind,
    )


def _stack(layers, name: str) -> np.ndarray:
    try:
        arr = layers if isinstance(layers, np.ndarray) else np.asarray(layers, dtype=np.float32)
    except ValueError as exc:
        raise ValidationError(f"{name} layers do not stack: {exc}") from exc
    if arr.ndim == 4:
        return arr.astype(np.float32, copy=False)
    raise ValidationError(f"{name} must be a (m, H, W, C) stack or list of rasters")


def _composite_weights(alpha64: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-plane weights alpha_z * prod_{j<z}(1 - alpha_j) and transmittance."""
    one_minus = 1.0 - alpha64
    occl = np.cumprod(one_minus, axis=0)
    front = np.concatenate([np.ones_like(occl[:1]), occl[:-1]], axis=0)
    return alpha64 * front, occl[-1]


def composite(content, alpha) -> CompositeOutput:
    """Back-to-front alpha compositing over a front-to-back plane stack.

    image = sum_z content_z * alpha_z * prod_{j<z}(1 - alpha_j); the residual
    transmittance prod_z(1 - alpha_z) is returned explicitly instead of
    assuming an opaque background plane.
    """
    content = _stack(content, "content")
    alpha = _stack(alpha, "alpha")
    if content.shape[0] == 0:
        raise ValidationError("cannot composite an empty plane list")
    if alpha.shape[0] != content.shape[0] or alpha.shape[1:3] != content.shape[1:3]:
        raise ValidationError(
            f"content {content.shape} and alpha {alpha.shape} do not agree"
        )
    _check_alpha(alpha)
    weights, trans = _composite_weights(alpha.astype(np.float64))
    image = (content.astype(np.float64) * weights).sum(axis=0)
    return CompositeOutput(
        image=image.astype(np.float32),
        transmittance=trans.astype(np.float32),
    )


def render_view(
    scene: MpiScene | HybridScene,
    k_tgt: CameraIntrinsics,
    theta: Pose,
    border: BorderPolicy = BorderPolicy.TRANSPARENT,
    threads: int = 1,
) -> CompositeOutput:
    """Warp every plane's content and alpha into the target camera, composite.

    Hybrid scenes are expanded first. With the identity pose and matching
    intrinsics this reproduces composite(scene.content, scene.alpha).
    """
    if isinstance(scene, HybridScene):
        scene = expand_hybrid(scene)
    warped_content = np.empty(
        (scene.num_planes, k_tgt.height, k_tgt.width, scene.channels), dtype=np.float32
    )
    warped_alpha = np.empty((scene.num_planes, k_tgt.height, k_tgt.width, 1), dtype=np.float32)
    for i, plane in enumerate(scene.planes):
        try:
            hom = homography_tgt_to_ref(plane, scene.intrinsics, k_tgt, theta)
            warped_content[i] = warp(
                scene.content[i], hom, k_tgt.width, k_tgt.height, border, threads
            )
            warped_alpha[i] = warp(
                scene.alpha[i], hom, k_tgt.width, k_tgt.height, border, threads
            )
        except GeometryError as exc:
            raise GeometryError(f"plane {i}: {exc}") from exc
    return composite(warped_content, warped_alpha)


def render_semantics(
    scene: MpiScene | HybridScene,
    k_tgt: CameraIntrinsics,
    theta: Pose,
    border: BorderPolicy = BorderPolicy.TRANSPARENT,
    threads: int = 1,
    normalized: bool = False,
) -> SemanticRender:
    """Render a semantics scene and take the per-pixel argmax label.

    Ties break toward the lowest label index. With normalized=True the
    probabilities are divided by coverage (1 - transmittance) where coverage
    exceeds 1e-6 (argmax labels are unaffected by that positive rescale).
    """
    kind = scene.channel_kind
    if kind is not ChannelKind.SEMANTICS:
        raise ValidationError(f"render_semantics needs a semantics scene, got {kind.value}")
    out = render_view(scene, k_tgt, theta, border, threads)
    probs = out.image
    if normalized:
        coverage = 1.0 - out.transmittance.astype(np.float64)
        covered = coverage > COVERAGE_EPS
        probs = np.where(
            covered, probs.astype(np.float64) / np.where(covered, coverage, 1.0), probs
        ).astype(np.float32)
    labels = np.argmax(probs, axis=2).astype(np.int32)
    return SemanticRender(labels=labels, probabilities=probs, transmittance=out.transmittance)


def _plane_value_composite(alpha, planes, values: np.ndarray, mode: DepthMode,
                           fallback: float) -> np.ndarray:
    alpha = _stack(alpha, "alpha")
    _check_alpha(alpha)
    planes = _check_planes(planes, alpha.shape[0])
    for i, plane in enumerate(planes):
        if abs(plane.normal[0]) > 1e-9 or abs(plane.normal[1]) > 1e-9:
            raise ValidationError(
                f"plane {i} is not fronto-parallel; plane distances are depths only for n = (0, 0, 1)"
            )
    weights, trans = _composite_weights(alpha.astype(np.float64))
    raw = (values.reshape(-1, 1, 1, 1) * weights).sum(axis=0)
    if mode is DepthMode.RAW:
        return raw.astype(np.float32)
    coverage = 1.0 - trans
    covered = coverage > COVERAGE_EPS
    out = np.where(covered, raw / np.where(covered, coverage, 1.0), fallback)
    return out.astype(np.float32)


def depth_from_alpha(alpha, planes, mode: DepthMode = DepthMode.RAW) -> np.ndarray:
    """Depth by alpha-compositing the plane distances:
    Z(p) = sum_i d_i * alpha(p, i) * prod_{j<i}(1 - alpha(p, j)).

    NORMALIZED divides by coverage; fully transparent pixels read as the far
    plane distance d_m.
    """
    planes = tuple(planes)
    if not planes:
        raise ValidationError("need at least one plane")
    dists = np.array([p.distance for p in planes], dtype=np.float64)
    return _plane_value_composite(alpha, planes, dists, mode, fallback=dists[-1])


def inverse_depth_from_alpha(alpha, planes, mode: DepthMode = DepthMode.RAW) -> np.ndarray:
    """Same composite with per-plane values 1/d_i; NORMALIZED falls back to 1/d_m."""
    planes = tuple(planes)
    if not planes:
        raise ValidationError("need at least one plane")
    inv = np.array([1.0 / p.distance for p in planes], dtype=np.float64)
    return _plane_value_composite(alpha, planes, inv, mode, fallback=inv[-1])


def depth_to_disparity(values: np.ndarray, fx: float, baseline: float = 0.54,
                       inverse: bool = False) -> np.ndarray:
    """Scaled inverse depth: disparity = fx * baseline / depth.

    Pass inverse=True when `values` already holds inverse depth (then the
    product fx * baseline * values is used and no positivity check applies).
    The 0.54 m default models the virtual stereo baseline of the source
    camera rigs.
    """
    arr = np.asarray(values, dtype=np.float64)
    if fx <= 0:
        raise ValidationError(f"fx must be positive, got {fx}")
    if baseline <= 0:
        raise ValidationError(f"baseline must be positive, got {baseline}")
    if inverse:
        return (fx * baseline * arr).astype(np.float32)
    bad = int(np.count_nonzero(arr <= 0))
    if bad:
        raise ValidationError(
            f"depth raster has {bad} nonpositive pixel(s); pass inverse=True for inverse depth"
        )
    return (fx * baseline / arr).astype(np.float32)


@dataclass(frozen=True)
class SetLabel:
    """Write a one-hot distribution of `label` inside the region."""

    label: int


@dataclass(frozen=True)
class Erase:
    """Overwrite the region with the one-hot fill label (object removal)."""

    fill_label: int


@dataclass(frozen=True, eq=False)
class PasteStamp:
    """Write one-hot distributions of a label stamp at an anchor (x, y)."""

    labels: np.ndarray  # (h, w) integer label raster
    anchor: tuple[int, int]


@dataclass(frozen=True, eq=False)
class EditOp:
    """One edit: a lifted layer, an action, and (for SetLabel/Erase) a target
    region given as a rect (x, y, w, h) or a boolean mask."""

    layer: int
    action: SetLabel | Erase | PasteStamp
    rect: tuple[int, int, int, int] | None = None
    mask: np.ndarray | None = None


def _check_label(label: int, num_labels: int) -> None:
    if not (0 <= label < num_labels):
        raise ValidationError(f"label {label} out of range [0, {num_labels})")


def _region_mask(op: EditOp, height: int, width: int) -> np.ndarray:
    if (op.rect is None) == (op.mask is None):
        raise ValidationError("edit op needs exactly one of rect or mask")
    if op.rect is not None:
        x, y, w, h = op.rect
        if w < 1 or h < 1 or x < 0 or y < 0 or x + w > width or y + h > height:
            raise ValidationError(f"rect {op.rect} out of range for {width}x{height} image")
        mask = np.zeros((height, width), dtype=bool)
        mask[y : y + h, x : x + w] = True
        return mask
    mask = np.asarray(op.mask)
    if mask.shape != (height, width) or mask.dtype != bool:
        raise ValidationError(
            f"mask must be ({height}, {width}) bool, got {mask.shape} {mask.dtype}"
        )
    return mask


def apply_edits(scene: HybridScene, script) -> HybridScene:
    """Apply an ordered edit script to the lifted semantic layers.

    Everything is validated before any mutation (all-or-nothing); alphas,
    association and planes are untouched. Any lifted layer may be edited,
    though layer 0 is the one holding the input-view semantics.
    """
    if scene.channel_kind is not ChannelKind.SEMANTICS:
        raise ValidationError("edits apply to semantics scenes only")
    ops = list(script)
    k = scene.num_lifted
    num_labels = scene.channels
    h, w = scene.height, scene.width

    staged = []
    for idx, op in enumerate(ops):
        if not isinstance(op, EditOp):
            raise ValidationError(f"script entry {idx} is not an EditOp")
        if not (0 <= op.layer < k):
            raise ValidationError(f"edit {idx}: layer {op.layer} out of range [0, {k})")
        action = op.action
        if isinstance(action, SetLabel):
            _check_label(action.label, num_labels)
            staged.append((op.layer, _region_mask(op, h, w), action.label))
        elif isinstance(action, Erase):
            _check_label(action.fill_label, num_labels)
            staged.append((op.layer, _region_mask(op, h, w), action.fill_label))
        elif isinstance(action, PasteStamp):
            if op.rect is not None or op.mask is not None:
                raise ValidationError(f"edit {idx}: paste ops take no rect/mask")
            stamp = np.asarray(action.labels)
            if stamp.ndim != 2 or not np.issubdtype(stamp.dtype, np.integer):
                raise ValidationError(f"edit {idx}: stamp must be a 2D integer raster")
            if stamp.size == 0:
                raise ValidationError(f"edit {idx}: empty stamp")
            if stamp.min() < 0 or stamp.max() >= num_labels:
                raise ValidationError(f"edit {idx}: stamp labels out of range [0, {num_labels})")
            x, y = action.anchor
            sh, sw = stamp.shape
            if x < 0 or y < 0 or x + sw > w or y + sh > h:
                raise ValidationError(
                    f"edit {idx}: stamp rect ({x}, {y}, {sw}, {sh}) out of range"
                )
            staged.append((op.layer, (x, y), stamp))
        else:
            raise ValidationError(f"edit {idx}: unknown action {type(action).__name__}")

    lifted = scene.lifted.copy()
    eye = np.eye(num_labels, dtype=np.float32)
    for layer, where, payload in staged:
        if isinstance(payload, np.ndarray):
            x, y = where
            sh, sw = payload.shape
            lifted[layer, y : y + sh, x : x + sw, :] = eye[payload]
        else:
            lifted[layer, where, :] = eye[payload]
    return HybridScene(
        lifted=lifted,
        alpha=scene.alpha,
        assoc=scene.assoc,
        planes=scene.planes,
        intrinsics=scene.intrinsics,
        channel_kind=scene.channel_kind,
    )
