"""Multi-plane-image scene engine.

Layered scene representation with per-plane homography warping, back-to-front
alpha compositing, hybrid lifted-semantics expansion, depth from transparency,
semantic editing, and the matching evaluation metrics.
"""

from .errors import EngineError, GeometryError, SceneIOError, ValidationError
from .geometry import (
    CameraIntrinsics,
    Plane,
    Pose,
    compose_pose,
    homography,
    homography_ref_to_tgt,
    homography_tgt_to_ref,
    invert_pose,
    plane_set,
    project_point,
    transform_plane,
)
from .io import load_scene, read_pfm, save_scene, write_pfm
from .metrics import (
    ConfusionMatrix,
    DepthMetrics,
    LossWeights,
    SegmentationScores,
    aggregate_loss,
    class_accuracy_and_iou,
    confusion,
    depth_metrics,
    label_boundary_band,
    photometric,
    semantic_nll,
)
from .mpi import (
    ChannelKind,
    CompositeOutput,
    DepthMode,
    EditOp,
    Erase,
    HybridScene,
    MpiScene,
    PasteStamp,
    SemanticRender,
    SetLabel,
    apply_edits,
    composite,
    depth_from_alpha,
    depth_to_disparity,
    expand_hybrid,
    inverse_depth_from_alpha,
    normalize_association,
    render_semantics,
    render_view,
)
from .raster import BorderPolicy, bilinear_sample, make_raster, warp
from .synth import BoxSpec, GroundTruth, SynthSpec, synth_ground_truth, synth_scene

__version__ = "0.1.0"

__all__ = [
    "EngineError",
    "GeometryError",
    "SceneIOError",
    "ValidationError",
    "CameraIntrinsics",
    "Plane",
    "Pose",
    "compose_pose",
    "homography",
    "homography_ref_to_tgt",
    "homography_tgt_to_ref",
    "invert_pose",
    "plane_set",
    "project_point",
    "transform_plane",
    "BorderPolicy",
    "bilinear_sample",
    "make_raster",
    "warp",
    "ChannelKind",
    "CompositeOutput",
    "DepthMode",
    "EditOp",
    "Erase",
    "HybridScene",
    "MpiScene",
    "PasteStamp",
    "SemanticRender",
    "SetLabel",
    "apply_edits",
    "composite",
    "depth_from_alpha",
    "depth_to_disparity",
    "expand_hybrid",
    "inverse_depth_from_alpha",
    "normalize_association",
    "render_semantics",
    "render_view",
    "ConfusionMatrix",
    "DepthMetrics",
    "LossWeights",
    "SegmentationScores",
    "aggregate_loss",
    "class_accuracy_and_iou",
    "confusion",
    "depth_metrics",
    "label_boundary_band",
    "photometric",
    "semantic_nll",
    "load_scene",
    "read_pfm",
    "save_scene",
    "write_pfm",
    "BoxSpec",
    "GroundTruth",
    "SynthSpec",
    "synth_ground_truth",
    "synth_scene",
]
