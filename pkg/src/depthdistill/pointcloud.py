"""
Depth maps to colored point clouds, and PLY files for them.

PLY vertices carry ``float x, y, z`` and ``uchar red, green, blue``; both the
``ascii`` and ``binary_little_endian`` encodings are written and read.
"""

# Standard packages
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

# Third-party packages
import numpy as np

# Local packages
from depthdistill.core.camera import CameraIntrinsics, RigidTransform
from depthdistill.core.errors import DomainError, FormatError
from depthdistill.core.grids import DepthMap, Image
from depthdistill.core.io import atomic_write
from depthdistill.geometry import backproject_grid

log = logging.getLogger(__name__)

PLY_FORMATS = ("ascii", "binary_little_endian")
VERTEX_DTYPE = np.dtype(
    [("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("red", "u1"), ("green", "u1"), ("blue", "u1")]
)
PROPERTIES = ("float x", "float y", "float z", "uchar red", "uchar green", "uchar blue")


@dataclass(frozen=True, eq=False)
class PointCloud(object):
    """Points in meters (N, 3) with colors in [0, 1] (N, 3)."""

    points: np.ndarray
    colors: np.ndarray

    def __len__(self):
        return int(self.points.shape[0])


def depth_to_cloud(
    depth: DepthMap,
    image: Image,
    K: CameraIntrinsics,
    pose: Optional[RigidTransform] = None,
) -> PointCloud:
    """One point per valid pixel, moved to the world by the camera-to-world
    `pose` (identity by default).

    Raises:
        DomainError: depth and image shapes differ

    Example:

        >>> K = CameraIntrinsics(1.0, 1.0, 0.0, 0.0)
        >>> cloud = depth_to_cloud(DepthMap([[3.0]]), Image([[0.5]]), K)
        >>> cloud.points
        array([[0., 0., 3.]])
    """
    if depth.shape != image.shape:
        raise DomainError(f"Depth shape {depth.shape} does not match image {image.shape}")
    pose = pose or RigidTransform.identity()
    points = pose.apply(backproject_grid(depth.data, K)[depth.valid])
    colors = image.data[depth.valid]
    if colors.shape[1] == 1:
        colors = np.repeat(colors, 3, axis=1)
    return PointCloud(points, colors)


def _header(fmt: str, count: int) -> bytes:
    lines = ["ply", f"format {fmt} 1.0", "comment depth-distill", f"element vertex {count}"]
    lines += [f"property {p}" for p in PROPERTIES]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_ply(cloud: PointCloud, path: Union[str, Path], fmt: str = "binary_little_endian") -> bytes:
    """Encode a point cloud as PLY and write it.

    Returns:
        bytes: the written file content
    """
    if fmt not in PLY_FORMATS:
        raise DomainError(f"Unknown PLY format {fmt!r}; expected one of {PLY_FORMATS}")
    vertices = np.empty(len(cloud), dtype=VERTEX_DTYPE)
    for i, axis in enumerate("xyz"):
        vertices[axis] = cloud.points[:, i]
    rgb = np.round(np.clip(cloud.colors, 0.0, 1.0) * 255.0).astype(np.uint8)
    for i, name in enumerate(("red", "green", "blue")):
        vertices[name] = rgb[:, i]

    if fmt == "ascii":
        body = "".join(
            f"{x!r} {y!r} {z!r} {r} {g} {b}\n" for x, y, z, r, g, b in vertices.tolist()
        ).encode("ascii")
    else:
        body = vertices.tobytes()
    data = _header(fmt, len(cloud)) + body
    atomic_write(path, data)
    log.info(f"Wrote {len(cloud)} points to {path} ({fmt})")
    return data


def read_ply(path: Union[str, Path]) -> PointCloud:
    """Read a PLY file written by `write_ply` (same vertex layout).

    Raises:
        FormatError: unsupported header or truncated body
    """
    raw = Path(path).read_bytes()
    marker = b"end_header\n"
    end = raw.find(marker)
    if not raw.startswith(b"ply\n") or end < 0:
        raise FormatError(f"{path} is not a PLY file")
    header = raw[:end].decode("ascii", errors="replace").splitlines()
    body = raw[end + len(marker) :]

    fmt, count, props = None, None, []
    for line in header[1:]:
        parts = line.split()
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            fmt = parts[1]
        elif parts[:2] == ["element", "vertex"]:
            count = int(parts[2])
        elif parts[0] == "property":
            props.append(" ".join(parts[1:]))
    if fmt not in PLY_FORMATS or count is None or tuple(props) != PROPERTIES:
        raise FormatError(f"Unsupported PLY layout in {path}: format={fmt}, properties={props}")

    if fmt == "ascii":
        rows = [line.split() for line in body.decode("ascii").splitlines() if line.strip()]
        if len(rows) != count or any(len(r) != 6 for r in rows):
            raise FormatError(f"Expected {count} ascii vertices in {path}, found {len(rows)}")
        table = np.array(rows, dtype=np.float64).reshape(count, 6)
        points, rgb = table[:, :3], table[:, 3:]
    else:
        if len(body) < count * VERTEX_DTYPE.itemsize:
            raise FormatError(f"Truncated binary PLY body in {path}")
        vertices = np.frombuffer(body, dtype=VERTEX_DTYPE, count=count)
        points = np.stack([vertices[a] for a in "xyz"], axis=1).astype(np.float64)
        rgb = np.stack([vertices[c] for c in ("red", "green", "blue")], axis=1)
    return PointCloud(points, np.asarray(rgb, dtype=np.float64) / 255.0)
