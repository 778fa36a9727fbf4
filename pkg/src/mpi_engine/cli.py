"""Command-line surface: render, depth, expand, edit, metrics, synth, planes.

Exit codes: 0 ok, 2 validation error, 3 numeric/geometry failure, 4 I/O
failure. Outputs are staged in temporaries and renamed on success, so a
failing command leaves its targets untouched. All commands are deterministic
and byte-identical for any --threads value.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import io as scene_io
from .errors import GeometryError, SceneIOError, ValidationError
from .geometry import CameraIntrinsics, Pose, plane_set
from .mpi import (
    ChannelKind,
    DepthMode,
    EditOp,
    Erase,
    HybridScene,
    PasteStamp,
    SetLabel,
    apply_edits,
    depth_from_alpha,
    depth_to_disparity,
    expand_hybrid,
    inverse_depth_from_alpha,
    render_semantics,
    render_view,
)
from .metrics import class_accuracy_and_iou, confusion, depth_metrics, photometric
from .synth import SynthSpec, synth_ground_truth, synth_scene

log = logging.getLogger("mpi_engine")

THREADS_ENV = "MPI_ENGINE_THREADS"


def _read_json_file(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise SceneIOError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path} is not valid JSON: {exc}") from exc


def _resolve_pose(args) -> Pose:
    sources = sum(bool(v) for v in (args.pose, args.pose_inline, args.lateral or args.forward))
    if sources > 1:
        raise ValidationError("give at most one of --pose, --pose-inline, --lateral/--forward")
    if args.pose:
        return Pose.from_dict(_read_json_file(args.pose))
    if args.pose_inline:
        try:
            return Pose.from_dict(json.loads(args.pose_inline))
        except json.JSONDecodeError as exc:
            raise ValidationError(f"--pose-inline is not valid JSON: {exc}") from exc
    if args.lateral or args.forward:
        return Pose.translation_only(x=args.lateral, z=args.forward)
    return Pose.identity()


def _add_pose_flags(sub):
    sub.add_argument("--pose", help="pose JSON file (rotation 3x3 row-major, translation 3)")
    sub.add_argument("--pose-inline", help="pose JSON given inline")
    sub.add_argument("--lateral", type=float, default=0.0,
                     help="shorthand: translate the camera array laterally by X meters")
    sub.add_argument("--forward", type=float, default=0.0,
                     help="shorthand: translate the camera array forward by Z meters")


def _save_raster(path: Path, arr: np.ndarray) -> None:
    suffix = path.suffix.lower()
    if suffix == ".pfm":
        scene_io.write_pfm(path, arr)
    elif suffix == ".png":
        scene_io.write_preview_png(path, arr)
    elif suffix == ".raw":
        scene_io.write_raw_raster(path, arr)
    else:
        raise ValidationError(f"unsupported output format {suffix!r} (use .pfm, .png or .raw)")


def _atomic_outputs(writes) -> None:
    """writes: list of (final_path, fn(temp_path)). All temps are written
    first; renames happen only after every write succeeded."""
    staged = []
    try:
        for final, fn in writes:
            final = Path(final)
            final.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=final.parent, suffix=final.suffix)
            os.close(fd)
            staged.append((tmp, final))
            fn(Path(tmp))
        for tmp, final in staged:
            os.replace(tmp, final)
    except BaseException:
        for tmp, _final in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)
        raise


def _atomic_scene_dir(out_dir: Path, build_fn) -> None:
    """Stage a directory next to the target and swap it in on success."""
    out_dir = Path(out_dir)
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=out_dir.parent, prefix=out_dir.name + ".tmp"))
    try:
        build_fn(tmp)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if out_dir.exists():
        shutil.rmtree(out_dir)
    os.replace(tmp, out_dir)


def _load_scene(path) -> "HybridScene":
    scene_dir = Path(path)
    if not scene_dir.is_dir():
        raise ValidationError(f"scene directory {scene_dir} does not exist")
    return scene_io.load_scene(scene_dir)


def _target_intrinsics(args, scene) -> CameraIntrinsics:
    if getattr(args, "target_intrinsics", None):
        return CameraIntrinsics.from_dict(_read_json_file(args.target_intrinsics))
    return scene.intrinsics


def cmd_render(args) -> int:
    pose = _resolve_pose(args)
    scene = _load_scene(args.scene)
    k_tgt = _target_intrinsics(args, scene)
    out_path = Path(args.out)

    writes = []
    if args.labels_out:
        if scene.channel_kind is not ChannelKind.SEMANTICS:
            raise ValidationError("--labels-out needs a semantics scene")
        sem = render_semantics(scene, k_tgt, pose, threads=args.threads,
                               normalized=args.normalized)
        image, trans = sem.probabilities, sem.transmittance
        writes.append((Path(args.labels_out), lambda p, a=sem.labels: scene_io.write_label_png(p, a)))
    else:
        out = render_view(scene, k_tgt, pose, threads=args.threads)
        image, trans = out.image, out.transmittance
        if args.normalized:
            coverage = 1.0 - trans.astype(np.float64)
            covered = coverage > 1e-6
            image = np.where(covered, image.astype(np.float64) / np.where(covered, coverage, 1.0),
                             image).astype(np.float32)
    writes.insert(0, (out_path, lambda p, a=image: _save_raster(p, a)))
    trans_path = out_path.with_name(out_path.stem + "_transmittance.pfm")
    writes.append((trans_path, lambda p, a=trans: scene_io.write_pfm(p, a)))
    _atomic_outputs(writes)
    log.info("rendered %s -> %s", args.scene, out_path)
    return 0


def cmd_depth(args) -> int:
    scene = _load_scene(args.scene)
    mode = DepthMode.NORMALIZED if args.normalized else DepthMode.RAW
    if args.disparity or args.inverse:
        values = inverse_depth_from_alpha(scene.alpha, scene.planes, mode)
    else:
        values = depth_from_alpha(scene.alpha, scene.planes, mode)
    if args.disparity:
        fx = args.fx if args.fx is not None else scene.intrinsics.fx
        values = depth_to_disparity(values, fx=fx, baseline=args.baseline, inverse=True)
    _atomic_outputs([(Path(args.out), lambda p: _save_raster(p, values))])
    return 0


def cmd_expand(args) -> int:
    scene = _load_scene(args.scene)
    if not isinstance(scene, HybridScene):
        raise ValidationError(f"{args.scene} is already a full MPI scene")
    expanded = expand_hybrid(scene)
    _atomic_scene_dir(Path(args.out), lambda d: scene_io.save_scene(expanded, d))
    return 0


def _parse_edit_script(path) -> list[EditOp]:
    data = _read_json_file(path)
    base = Path(path).parent
    if not isinstance(data, dict) or "edits" not in data:
        raise ValidationError("edit script must be a JSON object with an 'edits' list")
    ops = []
    for i, entry in enumerate(data["edits"]):
        try:
            layer = int(entry["layer"])
            action_name = entry["action"]
        except (KeyError, TypeError) as exc:
            raise ValidationError(f"edit {i}: missing field {exc}") from exc
        rect = tuple(int(v) for v in entry["rect"]) if "rect" in entry else None
        mask = None
        if "mask" in entry:
            mask = scene_io.read_label_png(base / entry["mask"]) != 0
        if action_name == "set_label":
            action = SetLabel(int(entry["label"]))
        elif action_name == "erase":
            action = Erase(int(entry["label"]))
        elif action_name == "paste_stamp":
            stamp = scene_io.read_label_png(base / entry["stamp"])
            action = PasteStamp(labels=stamp, anchor=tuple(int(v) for v in entry["anchor"]))
        else:
            raise ValidationError(f"edit {i}: unknown action {action_name!r}")
        ops.append(EditOp(layer=layer, action=action, rect=rect, mask=mask))
    return ops


def cmd_edit(args) -> int:
    scene = _load_scene(args.scene)
    if not isinstance(scene, HybridScene):
        raise ValidationError("edits apply to hybrid scenes")
    script = _parse_edit_script(args.script)
    edited = apply_edits(scene, script)
    _atomic_scene_dir(Path(args.out), lambda d: scene_io.save_scene(edited, d))
    return 0


def _load_metric_raster(path, want_labels: bool) -> np.ndarray:
    path = Path(path)
    suffix = path.suffix.lower()
    if want_labels:
        if suffix != ".png":
            raise ValidationError(f"label maps must be .png, got {path.name}")
        return scene_io.read_label_png(path)
    if suffix == ".pfm":
        return scene_io.read_pfm(path)
    if suffix == ".raw":
        return scene_io.read_raw_raster(path)
    if suffix == ".png":
        return scene_io.read_preview_png(path)
    raise ValidationError(f"unsupported raster format {suffix!r}")


def _parse_range(text: str) -> tuple[float, float]:
    try:
        lo, hi = text.split(":")
        return float(lo), float(hi)
    except ValueError as exc:
        raise ValidationError(f"--range must look like 1:100, got {text!r}") from exc


def cmd_metrics(args) -> int:
    records = []
    if args.kind == "sem":
        pred = _load_metric_raster(args.pred, want_labels=True)
        gt = _load_metric_raster(args.gt, want_labels=True)
        num_classes = args.num_classes
        if num_classes is None:
            candidates = [int(arr.max()) for arr in (pred, gt) if arr.size]
            if args.ignore is not None:
                candidates = [
                    int(arr[arr != args.ignore].max()) if (arr != args.ignore).any() else 0
                    for arr in (pred, gt)
                ]
            num_classes = max(candidates) + 1
        cm = confusion(pred, gt, num_classes, ignore=args.ignore)
        scores = class_accuracy_and_iou(cm)
        params = {
            "num_classes": num_classes,
            "ignore": args.ignore,
            "convention": "class_mean_percent",
        }
        records = [
            {"metric": "mean_class_accuracy", "value": scores.mean_class_accuracy,
             "valid_pixels": cm.total, "params": params},
            {"metric": "mean_iou", "value": scores.mean_iou,
             "valid_pixels": cm.total, "params": params},
        ]
    elif args.kind == "depth":
        pred = _load_metric_raster(args.pred, want_labels=False)
        gt = _load_metric_raster(args.gt, want_labels=False)
        depth_range = _parse_range(args.range)
        result = depth_metrics(pred, gt, depth_range)
        params = {"range": list(depth_range)}
        records = [
            {"metric": name, "value": getattr(result, name),
             "valid_pixels": result.valid_pixel_count, "params": params}
            for name in ("sc_inv", "l1_rel", "l1_inv")
        ]
    elif args.kind == "photo":
        pred = _load_metric_raster(args.pred, want_labels=False)
        gt = _load_metric_raster(args.gt, want_labels=False)
        l1, psnr = photometric(pred, gt)
        params: dict = {}
        n = int(np.asarray(pred).size)
        records = [
            {"metric": "l1", "value": l1, "valid_pixels": n, "params": params},
            {"metric": "psnr", "value": psnr, "valid_pixels": n, "params": params},
        ]
    else:
        raise ValidationError(f"unknown metrics kind {args.kind!r}")

    text = json.dumps(records, indent=2) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _atomic_outputs([(Path(args.out), lambda p: p.write_text(text))])
    return 0


def cmd_synth(args) -> int:
    spec = SynthSpec.from_json(Path(args.spec).read_text())
    scene = synth_scene(spec)
    gt = synth_ground_truth(spec)

    def build(d: Path) -> None:
        scene_io.save_scene(scene, d)
        (d / "synth_spec.json").write_text(json.dumps(spec.to_dict(), indent=2) + "\n")
        scene_io.write_pfm(d / "gt_depth.pfm", gt.depth)
        scene_io.write_label_png(d / "gt_labels.png", gt.labels)

    _atomic_scene_dir(Path(args.out), build)
    return 0


def cmd_planes(args) -> int:
    planes = plane_set(args.near, args.far, args.m)
    text = json.dumps([p.to_dict() for p in planes], indent=2) + "\n"
    if args.out == "-":
        sys.stdout.write(text)
    else:
        _atomic_outputs([(Path(args.out), lambda p: p.write_text(text))])
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mpi-engine",
        description="Multi-plane-image scene engine: render novel views, extract "
        "depth, expand hybrid scenes, edit semantics, compute metrics.",
    )
    parser.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (0 = auto; default ${THREADS_ENV} or 1)")
    parser.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("render", help="render a novel view of a scene")
    p.add_argument("--scene", required=True, help="scene directory")
    _add_pose_flags(p)
    p.add_argument("--target-intrinsics", help="target camera intrinsics JSON file")
    p.add_argument("--out", required=True, help="output image (.pfm/.png/.raw)")
    p.add_argument("--normalized", action="store_true",
                   help="divide composited values by coverage (1 - transmittance)")
    p.add_argument("--labels-out", help="also write the argmax label map (semantics scenes)")
    p.set_defaults(func=cmd_render)

    p = sub.add_parser("depth", help="extract depth/disparity from alpha layers")
    p.add_argument("--scene", required=True)
    p.add_argument("--inverse", action="store_true", help="composite inverse depth 1/d")
    p.add_argument("--normalized", action="store_true", help="divide by coverage")
    p.add_argument("--disparity", action="store_true",
                   help="write disparity fx * baseline * inverse depth")
    p.add_argument("--fx", type=float, default=None, help="focal length for --disparity")
    p.add_argument("--baseline", type=float, default=0.54, help="stereo baseline in meters")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_depth)

    p = sub.add_parser("expand", help="materialize a hybrid scene into a full MPI")
    p.add_argument("--scene", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_expand)

    p = sub.add_parser("edit", help="apply a semantic edit script to a hybrid scene")
    p.add_argument("--scene", required=True)
    p.add_argument("--script", required=True, help="edit script JSON file")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("metrics", help="compare prediction and ground truth rasters")
    p.add_argument("--pred", required=True)
    p.add_argument("--gt", required=True)
    p.add_argument("--kind", required=True, choices=["sem", "depth", "photo"])
    p.add_argument("--range", default="1:100", help="gt depth window, e.g. 1:100")
    p.add_argument("--num-classes", type=int, default=None)
    p.add_argument("--ignore", type=int, default=None, help="label excluded from scoring")
    p.add_argument("--out", default="-", help="output JSON path, or - for stdout")
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("synth", help="generate a synthetic fixture scene")
    p.add_argument("--spec", required=True, help="synth spec JSON file")
    p.add_argument("--out", required=True, help="output scene directory")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("planes", help="emit an inverse-depth-linear plane set")
    p.add_argument("--near", type=float, required=True)
    p.add_argument("--far", type=float, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--out", default="-", help="output JSON path, or - for stdout")
    p.set_defaults(func=cmd_planes)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=args.log_level.upper())

    if args.threads is None:
        env = os.environ.get(THREADS_ENV, "")
        try:
            args.threads = int(env) if env else 1
        except ValueError:
            print(f"error: ${THREADS_ENV}={env!r} is not an integer", file=sys.stderr)
            return 2
    if args.threads < 0:
        print("error: --threads must be >= 0", file=sys.stderr)
        return 2

    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except GeometryError as exc:
        print(f"geometry error: {exc}", file=sys.stderr)
        return 3
    except (SceneIOError, OSError) as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
