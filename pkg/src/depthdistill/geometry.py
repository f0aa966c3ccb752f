"""
Pinhole geometry and differentiable inverse warping.

Conventions: x right, y down, z forward; pixels are (u = column, v = row).
A `RigidTransform` maps points from the target camera frame into the source
camera frame, so ``warp(source, depth_target, T, K)`` reconstructs the target
view from the source image.
"""

# Standard packages
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Tuple, Union

# Third-party packages
import numpy as np

# Local packages
from depthdistill.core.camera import CameraIntrinsics, RigidTransform
from depthdistill.core.errors import BehindCameraError, DomainError
from depthdistill.core.grids import DepthMap, Image

log = logging.getLogger(__name__)

# below this rotation angle the exponential map uses its Taylor expansion
SMALL_ANGLE = 1e-8
MIN_DEPTH = 1e-9


def backproject(pixel: Sequence[float], depth: float, K: CameraIntrinsics) -> np.ndarray:
    """Lift a pixel at metric depth into the camera frame.

    Raises:
        DomainError: depth is not positive
    """
    if not depth > 0:
        raise DomainError(f"Cannot back-project non-positive depth {depth}")
    u, v = pixel
    return np.array([(u - K.cx) * depth / K.fx, (v - K.cy) * depth / K.fy, float(depth)])


def project(point: Sequence[float], K: CameraIntrinsics) -> Tuple[Tuple[float, float], float]:
    """Project a camera-frame point to ((u, v), depth).

    Raises:
        BehindCameraError: point.z <= 0
    """
    x, y, z = (float(c) for c in point)
    if not z > 0:
        raise BehindCameraError(f"Point ({x}, {y}, {z}) is behind the camera")
    return (K.fx * x / z + K.cx, K.fy * y / z + K.cy), z


def apply_transform(T: RigidTransform, point: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
    """``T.rotation @ point + T.translation`` for one point or (..., 3) points."""
    return T.apply(point)


def pixel_rays(height: int, width: int, K: CameraIntrinsics) -> np.ndarray:
    """Per-pixel rays ((u-cx)/fx, (v-cy)/fy, 1), shaped (H, W, 3)."""
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([(u - K.cx) / K.fx, (v - K.cy) / K.fy, np.ones_like(u)], axis=-1)


def backproject_grid(depth: np.ndarray, K: CameraIntrinsics) -> np.ndarray:
    """Back-project a whole depth grid to (H, W, 3) camera-frame points."""
    depth = np.asarray(depth, dtype=np.float64)
    return pixel_rays(depth.shape[0], depth.shape[1], K) * depth[:, :, None]


def project_points(points: np.ndarray, K: CameraIntrinsics):
    """Vectorized projection; no behind-camera check.

    Returns:
        tuple: (u, v, z) arrays; u and v are NaN where z <= 0
    """
    points = np.asarray(points, dtype=np.float64)
    z = points[..., 2]
    safe = np.where(z > MIN_DEPTH, z, np.nan)
    return K.fx * points[..., 0] / safe + K.cx, K.fy * points[..., 1] / safe + K.cy, z


@dataclass(frozen=True, eq=False)
class Sample(object):
    """Bilinear samples and their analytic derivatives w.r.t. (u, v).

    values, du, dv are shaped (..., C); valid is shaped (...).
    """

    values: np.ndarray
    du: np.ndarray
    dv: np.ndarray
    valid: np.ndarray


def bilinear_sample(image: Union[Image, np.ndarray], at: Tuple) -> Sample:
    """Sample an image at continuous (u, v) positions.

    Out-of-frame positions (outside [0, W-1] x [0, H-1], or NaN) are flagged
    invalid and return zero values and derivatives.

    Parameters:
        image (Image or ndarray): (H, W, C) source
        at (tuple): (u, v), scalars or equally shaped arrays

    Returns:
        Sample
    """
    data = image.data if isinstance(image, Image) else np.asarray(image, dtype=np.float64)
    if data.ndim == 2:
        data = data[:, :, None]
    h, w = data.shape[:2]
    u = np.asarray(at[0], dtype=np.float64)
    v = np.asarray(at[1], dtype=np.float64)
    u, v = np.broadcast_arrays(u, v)

    with np.errstate(invalid="ignore"):
        valid = (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    uc = np.where(valid, u, 0.0)
    vc = np.where(valid, v, 0.0)
    u0 = np.clip(np.floor(uc).astype(np.intp), 0, max(w - 2, 0))
    v0 = np.clip(np.floor(vc).astype(np.intp), 0, max(h - 2, 0))
    u1 = np.minimum(u0 + 1, w - 1)
    v1 = np.minimum(v0 + 1, h - 1)
    fu = (uc - u0)[..., None]
    fv = (vc - v0)[..., None]

    i00 = data[v0, u0]
    i01 = data[v0, u1]
    i10 = data[v1, u0]
    i11 = data[v1, u1]

    values = (1 - fu) * (1 - fv) * i00 + fu * (1 - fv) * i01 + (1 - fu) * fv * i10 + fu * fv * i11
    du = (1 - fv) * (i01 - i00) + fv * (i11 - i10)
    dv = (1 - fu) * (i10 - i00) + fu * (i11 - i01)

    keep = valid[..., None]
    return Sample(
        np.where(keep, values, 0.0), np.where(keep, du, 0.0), np.where(keep, dv, 0.0), valid
    )


@dataclass(frozen=True, eq=False)
class WarpResult(object):
    """Warped image, its validity, and derivatives of warped intensity.

    Attributes:
        image (Image): source resampled on the target grid (0 where invalid)
        valid (ndarray): (H, W) bool
        jacobian (ndarray): (H, W, C) d(warped)/d(depth)
        point_jacobian (ndarray): (H, W, C, 3) d(warped)/d(transformed point)
        points (ndarray): (H, W, 3) back-projected target points before T
        coords (tuple): projected (u, v) source coordinates
    """

    image: Image
    valid: np.ndarray
    jacobian: np.ndarray
    point_jacobian: np.ndarray
    points: np.ndarray
    coords: tuple


def warp(
    source: Union[Image, np.ndarray],
    depth: Union[DepthMap, np.ndarray],
    T: RigidTransform,
    K: CameraIntrinsics,
) -> WarpResult:
    """Inverse-warp `source` onto the target grid described by `depth`.

    Each target pixel is back-projected with its depth, moved by `T` into
    the source frame, projected and bilinearly sampled. Pixels whose
    projection leaves the frame or falls behind the camera are masked.

    Raises:
        DomainError: source and depth shapes differ
    """
    src = source if isinstance(source, Image) else Image(source)
    if isinstance(depth, DepthMap):
        d, depth_valid = depth.data, depth.valid
    else:
        d = np.asarray(depth, dtype=np.float64)
        depth_valid = np.isfinite(d) & (d > 0)
    if d.shape != src.shape:
        raise DomainError(f"Depth shape {d.shape} does not match source shape {src.shape}")

    d = np.where(depth_valid, d, 1.0)
    rays = pixel_rays(d.shape[0], d.shape[1], K)
    points = rays * d[:, :, None]
    q = T.apply(points)
    qz = q[..., 2]
    front = qz > MIN_DEPTH
    qz_safe = np.where(front, qz, 1.0)

    u = K.fx * q[..., 0] / qz_safe + K.cx
    v = K.fy * q[..., 1] / qz_safe + K.cy
    u = np.where(front, u, np.nan)
    v = np.where(front, v, np.nan)
    sample = bilinear_sample(src, (u, v))
    valid = sample.valid & front & depth_valid

    zero = np.zeros_like(qz_safe)
    du_dq = np.stack([K.fx / qz_safe, zero, -K.fx * q[..., 0] / qz_safe**2], axis=-1)
    dv_dq = np.stack([zero, K.fy / qz_safe, -K.fy * q[..., 1] / qz_safe**2], axis=-1)
    point_jacobian = (
        sample.du[..., None] * du_dq[:, :, None, :] + sample.dv[..., None] * dv_dq[:, :, None, :]
    )
    point_jacobian = np.where(valid[:, :, None, None], point_jacobian, 0.0)
    dq_dd = rays @ T.rotation.T
    jacobian = np.einsum("hwck,hwk->hwc", point_jacobian, dq_dd)

    warped = np.where(valid[:, :, None], sample.values, 0.0)
    log.debug(f"Warp kept {int(valid.sum())} of {valid.size} pixels")
    return WarpResult(Image(warped), valid, jacobian, point_jacobian, points, (u, v))


def _skew(w: np.ndarray) -> np.ndarray:
    return np.array([[0.0, -w[2], w[1]], [w[2], 0.0, -w[0]], [-w[1], w[0], 0.0]])


@dataclass(frozen=True, eq=False)
class PoseJacobian(object):
    """Derivatives of a 6-parameter pose (axis-angle, translation).

    Attributes:
        rotation (ndarray): (3, 3, 3) with ``rotation[i] = dR/dω_i``
    """

    rotation: np.ndarray

    def action(self, points: np.ndarray) -> np.ndarray:
        """d(R p + t)/d(params) for points (..., 3), shaped (..., 3, 6)."""
        p = np.asarray(points, dtype=np.float64)
        d_rot = np.einsum("iab,...b->...ai", self.rotation, p)
        d_trans = np.broadcast_to(np.eye(3), p.shape[:-1] + (3, 3))
        return np.concatenate([d_rot, d_trans], axis=-1)


def pose_param_to_transform(params: Sequence[float]) -> Tuple[RigidTransform, PoseJacobian]:
    """Exponential map from (ωx, ωy, ωz, tx, ty, tz) to a rigid transform.

    Returns:
        tuple: (RigidTransform, PoseJacobian)

    Example:

        >>> T, _ = pose_param_to_transform([0, 0, 0, 1, 2, 3])
        >>> T.translation
        array([1., 2., 3.])
    """
    params = np.asarray(params, dtype=np.float64).reshape(-1)
    if params.shape != (6,):
        raise DomainError(f"Pose parameters must be a 6-vector, got {params.shape}")
    w, t = params[:3], params[3:]
    theta = math.sqrt(float(w @ w))
    wx = _skew(w)
    eye = np.eye(3)

    if theta < SMALL_ANGLE:
        rot = eye + wx + 0.5 * (wx @ wx)
        d_rot = np.stack([_skew(e) for e in eye])
    else:
        k = wx / theta
        rot = eye + math.sin(theta) * k + (1.0 - math.cos(theta)) * (k @ k)
        d_rot = np.stack(
            [
                ((w[i] * wx + _skew(np.cross(w, (eye - rot) @ eye[i]))) / theta**2) @ rot
                for i in range(3)
            ]
        )
    return RigidTransform(rot, t), PoseJacobian(d_rot)
