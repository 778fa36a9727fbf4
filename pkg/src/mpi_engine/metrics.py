"""Evaluation and loss formulas: segmentation, depth, photometric, aggregate.

Segmentation scores are class means in percent over the classes present in
the ground truth. Depth metrics follow the DeMoN conventions: sc_inv is the
scale-invariant log-depth deviation, l1_rel the relative L1 error, l1_inv
the L1 error on inverse depth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

__all__ = [
    "ConfusionMatrix",
    "SegmentationScores",
    "DepthMetrics",
    "LossWeights",
    "confusion",
    "class_accuracy_and_iou",
    "depth_metrics",
    "photometric",
    "semantic_nll",
    "aggregate_loss",
    "label_boundary_band",
]


def _as_labels(arr, name: str) -> np.ndarray:
    out = np.asarray(arr)
    if out.ndim == 3 and out.shape[2] == 1:
        out = out[:, :, 0]
    if out.ndim != 2:
        raise ValidationError(f"{name} must be a 2D label raster, got shape {out.shape}")
    if not np.issubdtype(out.dtype, np.integer):
        raise ValidationError(f"{name} must hold integer labels, got dtype {out.dtype}")
    return out


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """counts[g][p] = pixels with ground-truth label g predicted as p."""

    counts: np.ndarray  # (l, l) int64
    num_classes: int

    def __post_init__(self):
        counts = np.asarray(self.counts, dtype=np.int64)
        if counts.shape != (self.num_classes, self.num_classes):
            raise ValidationError(
                f"counts must be {self.num_classes}x{self.num_classes}, got {counts.shape}"
            )
        if counts.min() < 0:
            raise ValidationError("confusion counts must be non-negative")
        counts = counts.copy()
        counts.setflags(write=False)
        object.__setattr__(self, "counts", counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.num_classes != other.num_classes:
            raise ValidationError("cannot merge confusion matrices of different sizes")
        return ConfusionMatrix(self.counts + other.counts, self.num_classes)


def confusion(pred, gt, num_classes: int, ignore: int | None = None) -> ConfusionMatrix:
    """Accumulate a confusion matrix; pixels whose gt equals `ignore` are skipped."""
    pred = _as_labels(pred, "pred")
    gt = _as_labels(gt, "gt")
    if pred.shape != gt.shape:
        raise ValidationError(f"pred {pred.shape} and gt {gt.shape} differ in shape")
    if num_classes < 1:
        raise ValidationError(f"num_classes must be >= 1, got {num_classes}")
    keep = np.ones(gt.shape, dtype=bool)
    if ignore is not None:
        keep = (gt != ignore) & (pred != ignore)
    for name, arr in (("gt", gt), ("pred", pred)):
        bad = keep & ((arr < 0) | (arr >= num_classes))
        if bad.any():
            y, x = np.argwhere(bad)[0]
            raise ValidationError(
                f"{name} label {int(arr[y, x])} out of range [0, {num_classes}) at pixel ({int(x)}, {int(y)})"
            )
    flat = num_classes * gt[keep].astype(np.int64) + pred[keep].astype(np.int64)
    counts = np.bincount(flat, minlength=num_classes * num_classes)
    return ConfusionMatrix(counts.reshape(num_classes, num_classes), num_classes)


@dataclass(frozen=True)
class SegmentationScores:
    """Class means in percent; per-class entries are NaN for classes absent
    from the ground truth."""

    mean_class_accuracy: float
    mean_iou: float
    class_accuracy: np.ndarray
    class_iou: np.ndarray


def class_accuracy_and_iou(cm: ConfusionMatrix) -> SegmentationScores:
    """Per-class accuracy diag/row-sum and IoU diag/(row+col-diag), averaged
    over the classes present in gt (row-sum > 0)."""
    counts = cm.counts.astype(np.float64)
    diag = np.diag(counts)
    gt_per_class = counts.sum(axis=1)
    pred_per_class = counts.sum(axis=0)
    present = gt_per_class > 0
    if not present.any():
        raise ValidationError("no class present in the ground truth")

    acc = np.full(cm.num_classes, np.nan)
    iou = np.full(cm.num_classes, np.nan)
    acc[present] = 100.0 * diag[present] / gt_per_class[present]
    union = gt_per_class + pred_per_class - diag
    iou[present] = 100.0 * diag[present] / union[present]
    return SegmentationScores(
        mean_class_accuracy=float(acc[present].mean()),
        mean_iou=float(iou[present].mean()),
        class_accuracy=acc,
        class_iou=iou,
    )


@dataclass(frozen=True)
class DepthMetrics:
    sc_inv: float
    l1_rel: float
    l1_inv: float
    valid_pixel_count: int


def depth_metrics(pred, gt, depth_range: tuple[float, float] = (1.0, 100.0)) -> DepthMetrics:
    """Depth errors over pixels whose gt depth lies inside [z_min, z_max].

    sc_inv = sqrt(mean(e^2) - mean(e)^2) with e = ln(pred) - ln(gt);
    l1_rel = mean(|pred - gt| / gt); l1_inv = mean(|1/pred - 1/gt|).
    """
    pred = np.asarray(pred, dtype=np.float64).reshape(-1)
    gt = np.asarray(gt, dtype=np.float64).reshape(-1)
    if pred.shape != gt.shape:
        raise ValidationError("pred and gt depth rasters differ in size")
    z_min, z_max = depth_range
    if not (0 < z_min < z_max):
        raise ValidationError(f"need 0 < z_min < z_max, got [{z_min}, {z_max}]")
    valid = (gt >= z_min) & (gt <= z_max)
    n = int(valid.sum())
    if n == 0:
        raise ValidationError(f"no gt pixels inside depth range [{z_min}, {z_max}]")
    p = pred[valid]
    g = gt[valid]
    if np.any(p <= 0):
        raise ValidationError(
            f"{int(np.count_nonzero(p <= 0))} nonpositive predicted depth(s) inside the window"
        )
    e = np.log(p) - np.log(g)
    var = max(float(np.mean(e * e) - np.mean(e) ** 2), 0.0)
    return DepthMetrics(
        sc_inv=math.sqrt(var),
        l1_rel=float(np.mean(np.abs(p - g) / g)),
        l1_inv=float(np.mean(np.abs(1.0 / p - 1.0 / g))),
        valid_pixel_count=n,
    )


def photometric(pred, gt) -> tuple[float, float]:
    """Mean absolute difference and PSNR for [0, 1]-valued rasters.

    Returns (l1, psnr); psnr is math.inf when the images are identical.
    """
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise ValidationError(f"pred {pred.shape} and gt {gt.shape} differ in shape")
    for name, arr in (("pred", pred), ("gt", gt)):
        if arr.size == 0:
            raise ValidationError(f"{name} is empty")
        if arr.min() < 0.0 or arr.max() > 1.0:
            raise ValidationError(f"{name} values must lie in [0, 1]")
    diff = pred - gt
    l1 = float(np.mean(np.abs(diff)))
    mse = float(np.mean(diff * diff))
    psnr = math.inf if mse == 0.0 else 10.0 * math.log10(1.0 / mse)
    return l1, psnr


def semantic_nll(pred_probs, gt, eps: float = 1e-8) -> float:
    """Mean negative log-likelihood of the gt label under predicted
    probabilities, clamped below at eps."""
    probs = np.asarray(pred_probs, dtype=np.float64)
    labels = _as_labels(gt, "gt")
    if probs.ndim != 3 or probs.shape[:2] != labels.shape:
        raise ValidationError(
            f"probabilities {probs.shape} do not match labels {labels.shape}"
        )
    if probs.min() < 0.0:
        raise ValidationError("probabilities must be >= 0")
    num_labels = probs.shape[2]
    if labels.min() < 0 or labels.max() >= num_labels:
        raise ValidationError(f"gt labels out of range [0, {num_labels})")
    picked = np.take_along_axis(probs, labels[..., None].astype(np.intp), axis=2)[..., 0]
    return float(np.mean(-np.log(np.maximum(picked, eps))))


@dataclass(frozen=True)
class LossWeights:
    """Weights of the aggregate training objective; the depth term default
    is 0.1 and the rest 1."""

    semantic: float = 1.0
    depth: float = 0.1
    color: float = 1.0
    gan: float = 1.0

    def __post_init__(self):
        for name in ("semantic", "depth", "color", "gan"):
            if not math.isfinite(getattr(self, name)):
                raise ValidationError(f"loss weight {name} is not finite")


def aggregate_loss(sem: float, dep: float, col: float, gan: float | None = None,
                   weights: LossWeights = LossWeights()) -> float:
    """Weighted sum of the loss terms; a missing gan term contributes 0."""
    terms = {"sem": sem, "dep": dep, "col": col}
    for name, value in terms.items():
        if not math.isfinite(value):
            raise ValidationError(f"loss term {name} is not finite")
    if gan is not None and not math.isfinite(gan):
        raise ValidationError("loss term gan is not finite")
    total = weights.semantic * sem + weights.depth * dep + weights.color * col
    if gan is not None:
        total += weights.gan * gan
    return float(total)


def label_boundary_band(labels, radius: int = 1) -> np.ndarray:
    """Boolean mask of pixels within `radius` of a label boundary
    (8-neighborhood). Used to exclude resampling-ambiguous pixels from
    semantic comparisons."""
    lab = _as_labels(labels, "labels")
    if radius < 0:
        raise ValidationError(f"radius must be >= 0, got {radius}")
    if radius == 0:
        return np.zeros(lab.shape, dtype=bool)
    edge = np.zeros(lab.shape, dtype=bool)
    edge[:, :-1] |= lab[:, :-1] != lab[:, 1:]
    edge[:, 1:] |= lab[:, 1:] != lab[:, :-1]
    edge[:-1, :] |= lab[:-1, :] != lab[1:, :]
    edge[1:, :] |= lab[1:, :] != lab[:-1, :]
    edge[:-1, :-1] |= lab[:-1, :-1] != lab[1:, 1:]
    edge[1:, 1:] |= lab[1:, 1:] != lab[:-1, :-1]
    edge[:-1, 1:] |= lab[:-1, 1:] != lab[1:, :-1]
    edge[1:, :-1] |= lab[1:, :-1] != lab[:-1, 1:]
    band = edge
    for _ in range(radius - 1):
        grown = band.copy()
        grown[:, :-1] |= band[:, 1:]
        grown[:, 1:] |= band[:, :-1]
        grown[:-1, :] |= band[1:, :]
        grown[1:, :] |= band[:-1, :]
        grown[:-1, :-1] |= band[1:, 1:]
        grown[1:, 1:] |= band[:-1, :-1]
        grown[:-1, 1:] |= band[1:, :-1]
        grown[1:, :-1] |= band[:-1, 1:]
        band = grown
    return band
