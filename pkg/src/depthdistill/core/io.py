"""
File formats.

* PFM: ``Pf`` (1 channel) or ``PF`` (3 channels) header, ``width height``,
  a negative scale (little-endian), then float32 rows from bottom to top.
  Invalid depth is written as 0.
* PNG: 8-bit images through Pillow; depth as 16-bit millimeters with
  ``round(meters * 1000)`` and 0 meaning invalid.
* Intrinsics sidecar: one line ``fx fy cx cy``.
* NPZ grids: exact float64 round trip of any grid type.

All writers go through `atomic_write`.
"""

# Standard packages
import io
import logging
import os
import re
import tempfile
from pathlib import Path
from typing import Union

# Third-party packages
import chardet
import numpy as np
from PIL import Image as PILImage
from tenacity import before_sleep_log, retry, retry_if_exception_type, stop_after_attempt, wait_exponential

# Local packages
from depthdistill.core.camera import CameraIntrinsics
from depthdistill.core.errors import FormatError
from depthdistill.core.grids import DepthMap, Image, RelativeDepthMap

log = logging.getLogger(__name__)

PathLike = Union[str, Path]

MM_PER_M = 1000.0
PNG16_MAX = 65535
_PFM_HEADER = re.compile(rb"\A(P[fF])\s+(\d+)\s+(\d+)\s+([-+0-9.eE]+)\s")


@retry(
    retry=retry_if_exception_type(OSError),
    wait=wait_exponential(multiplier=0.05, max=1),
    stop=stop_after_attempt(3),
    before_sleep=before_sleep_log(log, logging.INFO),
    reraise=True,
)
def atomic_write(path: PathLike, data: bytes) -> None:
    """Write bytes to `path` through a temporary file and `os.replace`.

    Retried on OSError (e.g. a transiently locked destination).
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    log.debug(f"Wrote {len(data)} bytes to {path}")


def decode_text(raw: bytes, source: str = "<bytes>") -> str:
    """Decode human-edited text with the encoding chardet detects."""
    if not raw:
        return ""
    encoding = chardet.detect(raw).get("encoding") or "utf-8"
    try:
        return raw.decode(encoding)
    except (UnicodeDecodeError, LookupError) as e:
        raise FormatError(f"Cannot decode {source} as {encoding}: {e}")


def read_text(path: PathLike) -> str:
    return decode_text(Path(path).read_bytes(), str(path))


# PFM


def encode_pfm(data: np.ndarray) -> bytes:
    arr = np.asarray(data, dtype=np.float64)
    if arr.ndim == 3 and arr.shape[2] == 1:
        arr = arr[:, :, 0]
    if arr.ndim == 2:
        tag = b"Pf"
    elif arr.ndim == 3 and arr.shape[2] == 3:
        tag = b"PF"
    else:
        raise FormatError(f"PFM holds 1 or 3 channels, got shape {arr.shape}")
    h, w = arr.shape[:2]
    header = tag + f"\n{w} {h}\n-1.0\n".encode("ascii")
    return header + np.ascontiguousarray(arr[::-1]).astype("<f4").tobytes()


def decode_pfm(raw: bytes, source: str = "<bytes>") -> np.ndarray:
    """Decode PFM bytes to a float64 array, top row first.

    Raises:
        FormatError: malformed header or truncated data
    """
    match = _PFM_HEADER.match(raw)
    if match is None:
        raise FormatError(f"{source}: malformed PFM header")
    tag, w, h, scale = match.groups()
    w, h = int(w), int(h)
    try:
        scale = float(scale)
    except ValueError:
        raise FormatError(f"{source}: malformed PFM scale {scale!r}")
    if w < 1 or h < 1 or scale == 0:
        raise FormatError(f"{source}: invalid PFM dimensions {w}x{h} or scale {scale}")
    channels = 3 if tag == b"PF" else 1
    dtype = "<f4" if scale < 0 else ">f4"
    body = raw[match.end() :]
    count = w * h * channels
    if len(body) < count * 4:
        raise FormatError(f"{source}: PFM body has {len(body)} bytes, expected {count * 4}")
    arr = np.frombuffer(body, dtype=dtype, count=count).astype(np.float64)
    shape = (h, w, 3) if channels == 3 else (h, w)
    return arr.reshape(shape)[::-1].copy()


def write_pfm(path: PathLike, grid: Union[DepthMap, RelativeDepthMap, Image, np.ndarray]) -> None:
    if isinstance(grid, DepthMap):
        data = np.where(grid.valid, grid.data, 0.0)
    elif isinstance(grid, (RelativeDepthMap, Image)):
        data = grid.data
    else:
        data = grid
    atomic_write(path, encode_pfm(data))


def read_pfm(path: PathLike) -> np.ndarray:
    return decode_pfm(Path(path).read_bytes(), str(path))


# PNG


def _png_bytes(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    PILImage.fromarray(arr).save(buf, format="PNG")
    return buf.getvalue()


def write_image(path: PathLike, image: Image) -> None:
    """Write an 8-bit grayscale or RGB PNG."""
    atomic_write(path, _png_bytes(image.to_uint8()))


def read_image(path: PathLike) -> Image:
    """Read an 8- or 16-bit PNG (or any Pillow format) as an Image in [0, 1].

    Raises:
        FormatError: unreadable file or unsupported mode
    """
    try:
        with PILImage.open(path) as img:
            if img.mode in ("I;16", "I;16B", "I;16L"):
                return Image.from_integers(np.array(img, dtype=np.uint16), bit_depth=16)
            if img.mode not in ("L", "RGB"):
                img = img.convert("RGB")
            return Image.from_integers(np.array(img, dtype=np.uint8), bit_depth=8)
    except (OSError, ValueError) as e:
        raise FormatError(f"Cannot read image {path}: {e}")


def encode_depth_png16(depth: DepthMap) -> bytes:
    """Raises:
    FormatError: a valid depth above 65.535 m
    """
    mm = np.where(depth.valid, np.round(depth.data * MM_PER_M), 0.0)
    if np.any(mm > PNG16_MAX):
        worst = float(depth.data[depth.valid].max())
        raise FormatError(f"Depth {worst:.3f} m exceeds the 16-bit range of {PNG16_MAX / MM_PER_M} m")
    return _png_bytes(mm.astype(np.uint16))


def write_depth_png16(path: PathLike, depth: DepthMap) -> None:
    atomic_write(path, encode_depth_png16(depth))


def read_depth_png16(path: PathLike) -> DepthMap:
    try:
        with PILImage.open(path) as img:
            mm = np.array(img).astype(np.float64)
    except OSError as e:
        raise FormatError(f"Cannot read depth image {path}: {e}")
    if mm.ndim != 2:
        raise FormatError(f"{path}: 16-bit depth must be single channel, got shape {mm.shape}")
    return DepthMap(mm / MM_PER_M, mm > 0)


# intrinsics


def write_intrinsics(path: PathLike, K: CameraIntrinsics) -> None:
    atomic_write(path, (" ".join(repr(float(v)) for v in K.as_tuple()) + "\n").encode("ascii"))


def read_intrinsics(path: PathLike) -> CameraIntrinsics:
    """Raises:
    FormatError: not exactly four numbers
    """
    fields = read_text(path).split()
    try:
        values = [float(f) for f in fields]
    except ValueError:
        raise FormatError(f"{path}: intrinsics must be four numbers 'fx fy cx cy'")
    if len(values) != 4:
        raise FormatError(f"{path}: expected 4 intrinsics values, found {len(values)}")
    return CameraIntrinsics(*values)


# exact grids

_KINDS = {"DepthMap": DepthMap, "Image": Image, "RelativeDepthMap": RelativeDepthMap}


def save_grid(path: PathLike, grid: Union[DepthMap, Image, RelativeDepthMap]) -> None:
    kind = type(grid).__name__
    if kind not in _KINDS:
        raise FormatError(f"Cannot save {kind} as a grid archive")
    arrays = {"kind": np.array(kind), "data": grid.data}
    if isinstance(grid, DepthMap):
        arrays["valid"] = grid.valid
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write(path, buf.getvalue())


def load_grid(path: PathLike) -> Union[DepthMap, Image, RelativeDepthMap]:
    try:
        with np.load(path, allow_pickle=False) as archive:
            kind = str(archive["kind"])
            data = archive["data"]
            valid = archive["valid"] if "valid" in archive.files else None
    except (OSError, ValueError, KeyError) as e:
        raise FormatError(f"Cannot read grid archive {path}: {e}")
    if kind not in _KINDS:
        raise FormatError(f"{path}: unknown grid kind {kind!r}")
    if kind == "DepthMap":
        return DepthMap(data, valid)
    return _KINDS[kind](data)


# dispatch by extension


def read_depth(path: PathLike) -> DepthMap:
    """Depth from .pfm, .png (16-bit mm) or .npz."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        data = read_pfm(path)
        if data.ndim != 2:
            raise FormatError(f"{path}: depth PFM must be single channel")
        return DepthMap(data)
    if suffix == ".png":
        return read_depth_png16(path)
    if suffix == ".npz":
        grid = load_grid(path)
        if not isinstance(grid, DepthMap):
            raise FormatError(f"{path} holds a {type(grid).__name__}, not a DepthMap")
        return grid
    raise FormatError(f"Unsupported depth file type {suffix!r} for {path}")


def write_depth(path: PathLike, depth: DepthMap) -> None:
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        write_pfm(path, depth)
    elif suffix == ".png":
        write_depth_png16(path, depth)
    elif suffix == ".npz":
        save_grid(path, depth)
    else:
        raise FormatError(f"Unsupported depth file type {suffix!r} for {path}")


def read_relative(path: PathLike) -> RelativeDepthMap:
    """Expert map from .pfm or .npz."""
    suffix = Path(path).suffix.lower()
    if suffix == ".pfm":
        data = read_pfm(path)
        if data.ndim != 2:
            raise FormatError(f"{path}: expert PFM must be single channel")
        return RelativeDepthMap(data)
    if suffix == ".npz":
        grid = load_grid(path)
        return grid if isinstance(grid, RelativeDepthMap) else RelativeDepthMap(grid.data)
    raise FormatError(f"Unsupported expert file type {suffix!r} for {path}")
