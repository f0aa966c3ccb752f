# Standard packages
import logging
import math
from dataclasses import dataclass
from typing import Sequence, Union

# Third-party packages
import numpy as np

# Local packages
from depthdistill.core.errors import DomainError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class CameraIntrinsics(object):
    """Pinhole intrinsics K, in pixels.

    Parameters:
        fx (float): horizontal focal length
        fy (float): vertical focal length
        cx (float): principal point column
        cy (float): principal point row

    Example:

        >>> K = CameraIntrinsics.from_fov(256, 256, 60.0)
        >>> round(K.fx, 2)
        221.7
    """

    fx: float
    fy: float
    cx: float
    cy: float

    @classmethod
    def from_fov(cls, width: int, height: int, fov_deg: float) -> "CameraIntrinsics":
        """Square-pixel intrinsics from a horizontal field of view, principal
        point at the image center (pixel-center convention, (w-1)/2).
        """
        f = (width / 2.0) / math.tan(math.radians(fov_deg) / 2.0)
        return cls(f, f, (width - 1) / 2.0, (height - 1) / 2.0)

    @property
    def matrix(self) -> np.ndarray:
        return np.array(
            [[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    def as_tuple(self) -> tuple:
        return (self.fx, self.fy, self.cx, self.cy)

    def __str__(self):
        return f"fx={self.fx:g} fy={self.fy:g} cx={self.cx:g} cy={self.cy:g}"


@dataclass(frozen=True, eq=False)
class RigidTransform(object):
    """SE(3) transform taking points from a source frame to a destination
    frame: ``q = rotation @ p + translation``.

    Parameters:
        rotation (ndarray): 3x3 rotation matrix
        translation (ndarray): 3-vector in meters
    """

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=np.float64)
        trans = np.array(self.translation, dtype=np.float64).reshape(-1)
        if rot.shape != (3, 3):
            raise DomainError(f"Rotation must be 3x3, got {rot.shape}")
        if trans.shape != (3,):
            raise DomainError(f"Translation must be a 3-vector, got {trans.shape}")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)

    @classmethod
    def identity(cls) -> "RigidTransform":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_translation(cls, translation: Sequence[float]) -> "RigidTransform":
        return cls(np.eye(3), translation)

    @classmethod
    def from_yaw(
        cls, yaw_deg: float, translation: Sequence[float] = (0.0, 0.0, 0.0)
    ) -> "RigidTransform":
        """Rotation about the camera y axis (y down), right-handed."""
        a = math.radians(yaw_deg)
        c, s = math.cos(a), math.sin(a)
        rot = np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])
        return cls(rot, translation)

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "RigidTransform":
        rt = self.rotation.T
        return RigidTransform(rt, -rt @ self.translation)

    def compose(self, other: "RigidTransform") -> "RigidTransform":
        """``self ∘ other``: apply `other` first, then `self`."""
        return RigidTransform(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def __matmul__(self, other: "RigidTransform") -> "RigidTransform":
        return self.compose(other)

    def apply(self, points: Union[np.ndarray, Sequence[float]]) -> np.ndarray:
        """Transform points shaped (..., 3)."""
        p = np.asarray(points, dtype=np.float64)
        return p @ self.rotation.T + self.translation

    def __repr__(self):
        t = ", ".join(f"{v:.4g}" for v in self.translation)
        return f"<RigidTransform(t=({t}))>"


def stereo_transform(baseline: float) -> RigidTransform:
    """Left-to-right camera transform for a rig whose right camera sits
    `baseline` meters along the left camera's +x axis.
    """
    if baseline <= 0:
        raise DomainError(f"Stereo baseline must be positive, got {baseline}")
    return RigidTransform.from_translation((-baseline, 0.0, 0.0))
