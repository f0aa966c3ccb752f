"""
Raster grids shared by every module.

All grids store row-major numpy arrays addressed as ``data[v, u]`` (v = row,
u = column, origin top-left) and are read-only after construction.
"""

# Standard packages
import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

# Third-party packages
import numpy as np

# Local packages
from depthdistill.core.camera import CameraIntrinsics, RigidTransform
from depthdistill.core.errors import DomainError

log = logging.getLogger(__name__)

LUMA = np.array([0.299, 0.587, 0.114])

ArrayLike = Union[np.ndarray, Sequence]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr.setflags(write=False)
    return arr


def _check_plane(name: str, arr: np.ndarray, shape: Optional[tuple] = None) -> None:
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise DomainError(f"{name} must be a non-empty 2-D grid, got shape {arr.shape}")
    if shape is not None and arr.shape != shape:
        raise DomainError(f"{name} shape {arr.shape} does not match {shape}")


def _from_flat(values: ArrayLike, width: int, height: int, channels: int = 1) -> np.ndarray:
    flat = np.asarray(values, dtype=np.float64).ravel()
    expected = width * height * channels
    if flat.size != expected:
        raise DomainError(
            f"Data length {flat.size} does not match {width}x{height}x{channels} = {expected}"
        )
    if channels == 1:
        return flat.reshape(height, width)
    return flat.reshape(height, width, channels)


@dataclass(frozen=True, eq=False)
class Image(object):
    """Intensity image with values in [0, 1].

    Parameters:
        data (ndarray): (H, W) or (H, W, C) with C in {1, 3}; stored as (H, W, C)
    """

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3) or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise DomainError(f"Image must be (H, W, 1|3), got shape {arr.shape}")
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def from_flat(cls, values: ArrayLike, width: int, height: int, channels: int = 1) -> "Image":
        return cls(_from_flat(values, width, height, channels))

    @classmethod
    def from_integers(cls, arr: np.ndarray, bit_depth: Optional[int] = None) -> "Image":
        """Normalize an integer raster to [0, 1].

        Parameters:
            arr (ndarray): integer samples
            bit_depth (int, optional): 8 or 16; inferred from uint8/uint16 dtypes
        """
        arr = np.asarray(arr)
        if bit_depth is None:
            bit_depth = {np.dtype(np.uint8): 8, np.dtype(np.uint16): 16}.get(arr.dtype)
        if bit_depth not in (8, 16):
            raise DomainError(f"Cannot infer bit depth for dtype {arr.dtype}")
        return cls(arr.astype(np.float64) / float(2**bit_depth - 1))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def shape(self) -> tuple:
        return self.data.shape[:2]

    def gray(self) -> "Image":
        """Linear luma (0.299 R + 0.587 G + 0.114 B)."""
        if self.channels == 1:
            return self
        return Image(self.data @ LUMA)

    def to_uint8(self) -> np.ndarray:
        arr = np.round(np.clip(self.data, 0.0, 1.0) * 255.0).astype(np.uint8)
        return arr[:, :, 0] if self.channels == 1 else arr

    def __repr__(self):
        return f"<Image({self.width}x{self.height}x{self.channels})>"


@dataclass(frozen=True, eq=False)
class DepthMap(object):
    """Metric depth in meters with an explicit validity mask.

    Parameters:
        data (ndarray): (H, W) depth values
        valid (ndarray, optional): (H, W) bool. Defaults to finite and positive data.
    """

    data: np.ndarray
    valid: Optional[np.ndarray] = None

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        _check_plane("DepthMap data", arr)
        if self.valid is None:
            with np.errstate(invalid="ignore"):
                mask = np.isfinite(arr) & (arr > 0)
        else:
            mask = np.array(self.valid, dtype=bool)
            _check_plane("DepthMap validity", mask, arr.shape)
        object.__setattr__(self, "data", _frozen(arr))
        object.__setattr__(self, "valid", _frozen(mask))

    @classmethod
    def from_flat(
        cls, values: ArrayLike, width: int, height: int, valid: Optional[ArrayLike] = None
    ) -> "DepthMap":
        mask = None
        if valid is not None:
            mask = _from_flat(valid, width, height).astype(bool)
        return cls(_from_flat(values, width, height), mask)

    @classmethod
    def constant(cls, value: float, width: int, height: int) -> "DepthMap":
        return cls(np.full((height, width), float(value)))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    @property
    def count(self) -> int:
        return int(self.valid.sum())

    def values(self) -> np.ndarray:
        """Valid depths as a flat array."""
        return self.data[self.valid]

    def with_valid(self, valid: np.ndarray) -> "DepthMap":
        return DepthMap(self.data, np.asarray(valid, dtype=bool) & self.valid)

    def __repr__(self):
        return f"<DepthMap({self.width}x{self.height}, valid={self.count})>"


@dataclass(frozen=True, eq=False)
class RelativeDepthMap(object):
    """Unitless expert output, inverse-depth-like and metric-agnostic."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.array(self.data, dtype=np.float64)
        _check_plane("RelativeDepthMap data", arr)
        object.__setattr__(self, "data", _frozen(arr))

    @classmethod
    def from_flat(cls, values: ArrayLike, width: int, height: int) -> "RelativeDepthMap":
        return cls(_from_flat(values, width, height))

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple:
        return self.data.shape

    def __repr__(self):
        return f"<RelativeDepthMap({self.width}x{self.height})>"


@dataclass(frozen=True, eq=False)
class GradientMap(object):
    """First-order gradients (gu along columns, gv along rows) and their
    Euclidean magnitude.
    """

    gu: np.ndarray
    gv: np.ndarray
    magnitude: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        gu = np.array(self.gu, dtype=np.float64)
        _check_plane("GradientMap gu", gu)
        for name in ("gv", "magnitude"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            _check_plane(f"GradientMap {name}", arr, gu.shape)
            object.__setattr__(self, name, _frozen(arr))
        mask = np.array(self.valid, dtype=bool)
        _check_plane("GradientMap validity", mask, gu.shape)
        object.__setattr__(self, "gu", _frozen(gu))
        object.__setattr__(self, "valid", _frozen(mask))

    @classmethod
    def from_components(
        cls, gu: np.ndarray, gv: np.ndarray, valid: Optional[np.ndarray] = None
    ) -> "GradientMap":
        if valid is None:
            valid = np.ones(np.shape(gu), dtype=bool)
        return cls(gu, gv, np.hypot(gu, gv), valid)

    @property
    def shape(self) -> tuple:
        return self.gu.shape


@dataclass(frozen=True, eq=False)
class BoundaryMap(object):
    """Occluding-boundary map: binary `hard` values and the soft-sign
    `soft` values they threshold.
    """

    hard: np.ndarray
    soft: np.ndarray
    valid: np.ndarray = field(default=None)

    def __post_init__(self):
        soft = np.array(self.soft, dtype=np.float64)
        _check_plane("BoundaryMap soft", soft)
        hard = np.array(self.hard, dtype=np.uint8)
        _check_plane("BoundaryMap hard", hard, soft.shape)
        if self.valid is None:
            mask = np.ones(soft.shape, dtype=bool)
        else:
            mask = np.array(self.valid, dtype=bool)
            _check_plane("BoundaryMap validity", mask, soft.shape)
        object.__setattr__(self, "soft", _frozen(soft))
        object.__setattr__(self, "hard", _frozen(hard))
        object.__setattr__(self, "valid", _frozen(mask))

    @classmethod
    def from_soft(cls, soft: np.ndarray, valid: Optional[np.ndarray] = None) -> "BoundaryMap":
        soft = np.asarray(soft, dtype=np.float64)
        return cls((soft > 0).astype(np.uint8), soft, valid)

    @property
    def shape(self) -> tuple:
        return self.soft.shape


@dataclass(frozen=True)
class Violation(object):
    """One broken invariant and the flat pixel indices where it breaks."""

    rule: str
    indices: tuple = ()


@dataclass(frozen=True)
class ValidationResult(object):
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    @property
    def rules(self) -> list[str]:
        return [v.rule for v in self.violations]

    def __bool__(self):
        return self.ok

    def __str__(self):
        if self.ok:
            return "pass"
        return "; ".join(f"{v.rule} at {len(v.indices)} location(s)" for v in self.violations)


def _where(mask: np.ndarray) -> tuple:
    return tuple(int(i) for i in np.flatnonzero(mask))


def validate(grid) -> ValidationResult:
    """Check a grid or camera object against its invariants.

    Never raises: every violation is reported with the flat (row-major)
    indices where it occurs, and any other object fails with a single
    "unsupported type" violation.

    Parameters:
        grid: Image, DepthMap, RelativeDepthMap, GradientMap, BoundaryMap,
            CameraIntrinsics or RigidTransform

    Returns:
        ValidationResult: ``ok`` is True when nothing is violated

    Example:

        >>> validate(Image(np.full((4, 4), 0.5))).ok
        True
    """
    found = []

    def check(rule: str, bad: np.ndarray) -> None:
        if np.any(bad):
            found.append(Violation(rule, _where(bad)))

    with np.errstate(invalid="ignore"):
        if isinstance(grid, Image):
            pixel = grid.data
            check("non-finite value", ~np.isfinite(pixel).all(axis=2))
            check("value out of range [0,1]", ((pixel < 0) | (pixel > 1)).any(axis=2))
        elif isinstance(grid, DepthMap):
            check("non-finite depth", grid.valid & ~np.isfinite(grid.data))
            check("non-positive depth", grid.valid & (grid.data <= 0))
        elif isinstance(grid, RelativeDepthMap):
            check("non-finite value", ~np.isfinite(grid.data))
        elif isinstance(grid, GradientMap):
            expected = np.sqrt(grid.gu**2 + grid.gv**2)
            check("magnitude mismatch", ~(np.abs(grid.magnitude - expected) <= 1e-12))
        elif isinstance(grid, BoundaryMap):
            check("hard value not binary", grid.hard > 1)
            check("soft value out of range (-1,1)", ~((grid.soft > -1) & (grid.soft < 1)))
            check("hard/soft disagreement", (grid.hard == 1) != (grid.soft > 0))
        elif isinstance(grid, CameraIntrinsics):
            values = np.array(grid.as_tuple())
            check("non-finite intrinsics", ~np.isfinite(values))
            check("non-positive focal length", values[:2] <= 0)
        elif isinstance(grid, RigidTransform):
            rot = grid.rotation
            check("not orthonormal", np.abs(rot.T @ rot - np.eye(3)) > 1e-9)
            check("not a proper rotation", np.atleast_1d(abs(np.linalg.det(rot) - 1.0) > 1e-9))
            check("non-finite translation", ~np.isfinite(grid.translation))
        else:
            log.warning(f"Cannot validate {type(grid).__name__}")
            found.append(Violation("unsupported type"))

    return ValidationResult(tuple(found))
