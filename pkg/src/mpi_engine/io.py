"""Scene persistence and raster file formats.

Formats:
  - `.raw`: 8-byte magic b"MPIR1\\0\\0\\0", then u32 W, H, C little-endian,
    then W*H*C float32 little-endian, row-major, channel-interleaved.
    Bit-exact round trips are contractual.
  - PFM: little-endian (scale -1.0), rows stored bottom-to-top per the format.
  - PNG: 8-bit label maps (palette-mapped on write) and linear previews
    (value 0.5 -> byte 128, round half up).
  - `scene.json`: manifest tying a directory of rasters into a scene.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import SceneIOError, ValidationError
from .geometry import CameraIntrinsics, Plane
from .mpi import ChannelKind, HybridScene, MpiScene
from .raster import validate_raster

__all__ = [
    "FORMAT_VERSION",
    "RAW_MAGIC",
    "write_raw_raster",
    "read_raw_raster",
    "write_pfm",
    "read_pfm",
    "write_label_png",
    "read_label_png",
    "write_preview_png",
    "read_preview_png",
    "save_scene",
    "load_scene",
]

FORMAT_VERSION = 1
RAW_MAGIC = b"MPIR1\x00\x00\x00"
_RAW_HEADER = struct.Struct("<8sIII")


def write_raw_raster(path, img: np.ndarray) -> None:
    arr = np.ascontiguousarray(validate_raster(img), dtype=np.float32)
    h, w, c = arr.shape
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(RAW_MAGIC, w, h, c))
        fh.write(arr.astype("<f4", copy=False).tobytes())


def read_raw_raster(path) -> np.ndarray:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise SceneIOError(f"cannot read raster {path.name}: {exc}") from exc
    if len(blob) < _RAW_HEADER.size:
        raise SceneIOError(f"raster {path.name}: truncated header")
    magic, w, h, c = _RAW_HEADER.unpack_from(blob)
    if magic != RAW_MAGIC:
        raise SceneIOError(f"raster {path.name}: bad magic {magic!r}")
    expected = _RAW_HEADER.size + 4 * w * h * c
    if len(blob) != expected:
        raise SceneIOError(
            f"raster {path.name}: expected {expected} bytes for {w}x{h}x{c}, got {len(blob)}"
        )
    data = np.frombuffer(blob, dtype="<f4", offset=_RAW_HEADER.size)
    return data.reshape(h, w, c).astype(np.float32, copy=True)


def write_pfm(path, img: np.ndarray) -> None:
    """Write a 1- or 3-channel float raster as a little-endian PFM."""
    arr = np.ascontiguousarray(validate_raster(img), dtype=np.float32)
    h, w, c = arr.shape
    if c not in (1, 3):
        raise ValidationError(f"PFM supports 1 or 3 channels, got {c}")
    header = ("Pf" if c == 1 else "PF") + f"\n{w} {h}\n-1.0\n"
    flipped = np.ascontiguousarray(arr[::-1])  # PFM rows go bottom to top
    with open(path, "wb") as fh:
        fh.write(header.encode("ascii"))
        fh.write(flipped.astype("<f4", copy=False).tobytes())


def _read_pfm_token(fh) -> bytes:
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise SceneIOError("PFM: unexpected end of header")
        if ch.isspace():
            if tok:
                return tok
            continue
        tok += ch


def read_pfm(path) -> np.ndarray:
    path = Path(path)
    with open(path, "rb") as fh:
        tag = _read_pfm_token(fh)
        if tag == b"PF":
            channels = 3
        elif tag == b"Pf":
            channels = 1
        else:
            raise SceneIOError(f"{path.name}: not a PFM file (tag {tag!r})")
        try:
            w = int(_read_pfm_token(fh))
            h = int(_read_pfm_token(fh))
            scale = float(_read_pfm_token(fh))
        except ValueError as exc:
            raise SceneIOError(f"{path.name}: malformed PFM header") from exc
        if w < 1 or h < 1 or scale == 0.0:
            raise SceneIOError(f"{path.name}: malformed PFM header ({w}x{h}, scale {scale})")
        count = w * h * channels
        data = fh.read(4 * count)
        if len(data) != 4 * count:
            raise SceneIOError(f"{path.name}: truncated PFM payload")
    dtype = "<f4" if scale < 0 else ">f4"
    arr = np.frombuffer(data, dtype=dtype).astype(np.float32).reshape(h, w, channels)
    return np.ascontiguousarray(arr[::-1])


def _voc_palette(num_entries: int = 256) -> list[int]:
    """Deterministic label palette (the classic bit-shuffling colormap)."""
    palette = []
    for i in range(num_entries):
        r = g = b = 0
        cid = i
        for shift in range(8):
            r |= ((cid >> 0) & 1) << (7 - shift)
            g |= ((cid >> 1) & 1) << (7 - shift)
            b |= ((cid >> 2) & 1) << (7 - shift)
            cid >>= 3
        palette.extend([r, g, b])
    return palette


def write_label_png(path, labels: np.ndarray) -> None:
    """One 8-bit label per pixel, stored palette-mapped."""
    arr = np.asarray(labels)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim != 2 or not np.issubdtype(arr.dtype, np.integer):
        raise ValidationError(f"labels must be a 2D integer raster, got {arr.shape} {arr.dtype}")
    if arr.size and (arr.min() < 0 or arr.max() > 255):
        raise ValidationError("labels must fit in 8 bits")
    img = Image.fromarray(arr.astype(np.uint8), mode="P")
    img.putpalette(_voc_palette())
    img.save(path, format="PNG")


def read_label_png(path) -> np.ndarray:
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise SceneIOError(f"cannot read {path.name}: {exc}") from exc
    if img.mode not in ("P", "L"):
        raise SceneIOError(f"{path.name}: unsupported PNG mode {img.mode} for labels")
    return np.asarray(img, dtype=np.int32)


def write_preview_png(path, img: np.ndarray) -> None:
    """Linear [0, 1] floats to 8-bit with saturation clamp; 0.5 -> 128."""
    arr = validate_raster(img)
    if arr.shape[2] not in (1, 3):
        raise ValidationError(f"previews need 1 or 3 channels, got {arr.shape[2]}")
    clamped = np.clip(arr.astype(np.float64), 0.0, 1.0)
    bytes_ = np.floor(clamped * 255.0 + 0.5).astype(np.uint8)
    if bytes_.shape[2] == 1:
        Image.fromarray(bytes_[:, :, 0], mode="L").save(path, format="PNG")
    else:
        Image.fromarray(bytes_, mode="RGB").save(path, format="PNG")


def read_preview_png(path) -> np.ndarray:
    path = Path(path)
    try:
        img = Image.open(path)
        img.load()
    except OSError as exc:
        raise SceneIOError(f"cannot read {path.name}: {exc}") from exc
    if img.mode not in ("L", "RGB"):
        raise SceneIOError(f"{path.name}: unsupported PNG mode {img.mode} for previews")
    arr = np.asarray(img, dtype=np.float32) / 255.0
    if arr.ndim == 2:
        arr = arr[:, :, None]
    return arr


def _scene_header(scene: MpiScene | HybridScene) -> dict:
    return {
        "format_version": FORMAT_VERSION,
        "channel_kind": scene.channel_kind.value,
        "width": scene.width,
        "height": scene.height,
        "channels": scene.channels,
        "num_planes": scene.num_planes,
        "intrinsics": scene.intrinsics.to_dict(),
        "planes": [p.to_dict() for p in scene.planes],
    }


def save_scene(scene: MpiScene | HybridScene, dirpath) -> dict:
    """Persist a scene losslessly into a directory; returns the manifest."""
    out = Path(dirpath)
    out.mkdir(parents=True, exist_ok=True)
    manifest = _scene_header(scene)
    if isinstance(scene, HybridScene):
        manifest["scene_type"] = "hybrid"
        manifest["num_lifted"] = scene.num_lifted
        files: dict = {
            "alpha": [f"alpha_{i:02d}.raw" for i in range(scene.num_planes)],
            "lifted": [f"lifted_{j:02d}.raw" for j in range(scene.num_lifted)],
            "assoc": "assoc.raw",
        }
        for j, name in enumerate(files["lifted"]):
            write_raw_raster(out / name, scene.lifted[j])
        k, m = scene.num_lifted, scene.num_planes
        write_raw_raster(out / files["assoc"], scene.assoc.reshape(scene.height, scene.width, k * m))
    elif isinstance(scene, MpiScene):
        manifest["scene_type"] = "mpi"
        files = {
            "alpha": [f"alpha_{i:02d}.raw" for i in range(scene.num_planes)],
            "content": [f"content_{i:02d}.raw" for i in range(scene.num_planes)],
        }
        for i, name in enumerate(files["content"]):
            write_raw_raster(out / name, scene.content[i])
    else:
        raise ValidationError(f"cannot save object of type {type(scene).__name__}")
    for i, name in enumerate(files["alpha"]):
        write_raw_raster(out / name, scene.alpha[i])
    manifest["files"] = files
    (out / "scene.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return manifest


def _load_checked(dirpath: Path, name: str, width: int, height: int, channels: int) -> np.ndarray:
    path = dirpath / name
    if not path.is_file():
        raise SceneIOError(f"scene file missing: {name}")
    arr = read_raw_raster(path)
    if arr.shape != (height, width, channels):
        raise SceneIOError(
            f"{name}: raster is {arr.shape[1]}x{arr.shape[0]}x{arr.shape[2]}, "
            f"manifest declares {width}x{height}x{channels}"
        )
    return arr


def load_scene(dirpath) -> MpiScene | HybridScene:
    """Load a scene directory written by save_scene; bitwise inverse of it."""
    root = Path(dirpath)
    manifest_path = root / "scene.json"
    if not manifest_path.is_file():
        raise SceneIOError(f"no scene.json in {root}")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as exc:
        raise SceneIOError(f"scene.json is not valid JSON: {exc}") from exc

    version = manifest.get("format_version")
    if version != FORMAT_VERSION:
        raise SceneIOError(f"unsupported format_version {version!r} (engine reads {FORMAT_VERSION})")
    try:
        scene_type = manifest["scene_type"]
        kind = ChannelKind(manifest["channel_kind"])
        width = int(manifest["width"])
        height = int(manifest["height"])
        channels = int(manifest["channels"])
        m = int(manifest["num_planes"])
        intrinsics = CameraIntrinsics.from_dict(manifest["intrinsics"])
        planes = tuple(Plane.from_dict(p) for p in manifest["planes"])
        files = manifest["files"]
        alpha_names = list(files["alpha"])
    except (KeyError, ValueError) as exc:
        raise SceneIOError(f"scene.json is missing or has a malformed field: {exc}") from exc
    if len(alpha_names) != m:
        raise SceneIOError(f"manifest lists {len(alpha_names)} alpha files for {m} planes")

    alpha = np.stack([_load_checked(root, n, width, height, 1) for n in alpha_names])
    try:
        if scene_type == "hybrid":
            k = int(manifest["num_lifted"])
            lifted_names = list(files["lifted"])
            if len(lifted_names) != k:
                raise SceneIOError(
                    f"manifest lists {len(lifted_names)} lifted files for {k} layers"
                )
            lifted = np.stack(
                [_load_checked(root, n, width, height, channels) for n in lifted_names]
            )
            assoc = _load_checked(root, str(files["assoc"]), width, height, k * m)
            return HybridScene(
                lifted=lifted,
                alpha=alpha,
                assoc=assoc.reshape(height, width, k, m),
                planes=planes,
                intrinsics=intrinsics,
                channel_kind=kind,
            )
        if scene_type == "mpi":
            content_names = list(files["content"])
            if len(content_names) != m:
                raise SceneIOError(
                    f"manifest lists {len(content_names)} content files for {m} planes"
                )
            content = np.stack(
                [_load_checked(root, n, width, height, channels) for n in content_names]
            )
            return MpiScene(
                planes=planes,
                content=content,
                alpha=alpha,
                intrinsics=intrinsics,
                channel_kind=kind,
            )
    except KeyError as exc:
        raise SceneIOError(f"scene.json is missing field {exc}") from exc
    except ValidationError as exc:
        raise SceneIOError(f"scene directory is inconsistent: {exc}") from exc
    raise SceneIOError(f"unknown scene_type {scene_type!r}")
