# Standard packages
import logging
from dataclasses import dataclass
from typing import Optional, Union

# Third-party packages
import numpy as np

# Local packages
from depthdistill.core.errors import ConfigurationError, DomainError, EmptyDomainError
from depthdistill.core.grids import LUMA, DepthMap, Image
from depthdistill.core.utils import box_kernel, correlate2d, correlate2d_adjoint

log = logging.getLogger(__name__)

Grid = Union[Image, DepthMap, np.ndarray]


@dataclass(frozen=True)
class SsimConfig(object):
    """Local-statistics SSIM settings.

    Parameters:
        window (int): odd box-window side, >= 3
        c1 (float): mean stabilizer
        c2 (float): variance stabilizer
        padding (str): border handling; only "reflect" is supported
    """

    window: int = 3
    c1: float = 0.01**2
    c2: float = 0.03**2
    padding: str = "reflect"

    def __post_init__(self):
        if self.window < 3 or self.window % 2 == 0:
            raise ConfigurationError(f"SSIM window must be odd and >= 3, got {self.window}")
        if not (self.c1 > 0 and self.c2 > 0):
            raise ConfigurationError("SSIM constants c1 and c2 must be positive")
        if self.padding != "reflect":
            raise ConfigurationError(f"Unsupported SSIM padding {self.padding!r}")


def as_array(grid: Grid) -> np.ndarray:
    if isinstance(grid, (Image, DepthMap)):
        return grid.data
    return np.asarray(grid, dtype=np.float64)


class SsimResult(object):
    """Per-pixel SSIM of (a, b) with a vector-Jacobian product w.r.t. `a`.

    Attributes:
        ssim (ndarray): SSIM values, shaped like the inputs
    """

    def __init__(self, a: np.ndarray, b: np.ndarray, cfg: SsimConfig):
        self._a = a
        self._b = b
        self._kernel = box_kernel(cfg.window)
        blur = lambda x: correlate2d(x, self._kernel)

        mu_a = blur(a)
        mu_b = blur(b)
        sigma_a = blur(a * a) - mu_a**2
        sigma_b = blur(b * b) - mu_b**2
        sigma_ab = blur(a * b) - mu_a * mu_b

        n1 = 2 * mu_a * mu_b + cfg.c1
        n2 = 2 * sigma_ab + cfg.c2
        d1 = mu_a**2 + mu_b**2 + cfg.c1
        d2 = sigma_a + sigma_b + cfg.c2
        self.ssim = (n1 * n2) / (d1 * d2)
        self._parts = (mu_a, mu_b, n1, n2, d1, d2)

    def backward(self, weights: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(weights * ssim)`` with respect to `a`."""
        mu_a, mu_b, n1, n2, d1, d2 = self._parts
        s = self.ssim
        den = d1 * d2
        w = np.broadcast_to(weights, s.shape)

        # derivatives w.r.t. the moment maps E[a], E[a^2], E[ab]
        d_mean = (2 * mu_b * n2 - 2 * mu_b * n1 - s * (2 * mu_a * d2 - 2 * mu_a * d1)) / den
        d_sq = -s / d2
        d_cross = 2 * n1 / den

        g_mean = correlate2d_adjoint(w * d_mean, self._kernel)
        g_sq = correlate2d_adjoint(w * d_sq, self._kernel)
        g_cross = correlate2d_adjoint(w * d_cross, self._kernel)
        return g_mean + 2 * self._a * g_sq + self._b * g_cross


def ssim_map(a: Grid, b: Grid, cfg: Optional[SsimConfig] = None) -> SsimResult:
    """Per-pixel SSIM over a box window with reflect padding.

    Raises:
        DomainError: shapes differ

    Example:

        >>> x = np.random.default_rng(0).random((8, 8))
        >>> bool(np.allclose(ssim_map(x, x).ssim, 1.0))
        True
    """
    cfg = cfg or SsimConfig()
    a = as_array(a)
    b = as_array(b)
    if a.shape != b.shape:
        raise DomainError(f"SSIM inputs differ in shape: {a.shape} vs {b.shape}")
    return SsimResult(a, b, cfg)


class PhotometricResult(object):
    """Photometric error of a prediction against a target.

    Attributes:
        loss_map (ndarray): (H, W) channel-averaged per-pixel error
        value (float): mean of `loss_map` over valid pixels
        ssim_term (float): mean (1 - SSIM) / 2 over valid pixels
        l1_term (float): mean |target - predicted| over valid pixels
        valid (ndarray): (H, W) pixels in the mean
        grad (ndarray): d(value)/d(predicted), shaped like `predicted`
    """

    def __init__(self, target, predicted, kappa, cfg, valid, grayscale):
        self.kappa = kappa
        self.valid = valid
        self._gray = grayscale and predicted.shape[2] == 3
        if self._gray:
            target = (target @ LUMA)[:, :, None]
            predicted = (predicted @ LUMA)[:, :, None]
        channels = predicted.shape[2]

        self._ssim = SsimResult(predicted, target, cfg)
        self._diff = predicted - target
        ssim_part = (1.0 - self._ssim.ssim).mean(axis=2) / 2.0
        l1_part = np.abs(self._diff).mean(axis=2)
        self.loss_map = kappa * ssim_part + (1.0 - kappa) * l1_part
        self._channels = channels

        n = int(valid.sum())
        if n == 0:
            raise EmptyDomainError("Photometric error has no valid pixels")
        self.count = n
        self.ssim_term = float(ssim_part[valid].mean())
        self.l1_term = float(l1_part[valid].mean())
        self.value = float(self.loss_map[valid].mean())
        self.grad = self.backward(valid / n)

    def backward(self, weights: np.ndarray) -> np.ndarray:
        """Gradient of ``sum(weights * loss_map)`` w.r.t. the prediction."""
        w = (weights / self._channels)[:, :, None]
        g = self._ssim.backward(-0.5 * self.kappa * w)
        g = g + (1.0 - self.kappa) * np.sign(self._diff) * w
        if self._gray:
            return g * LUMA
        return g


def pe(
    target: Grid,
    predicted: Grid,
    kappa: float = 0.85,
    cfg: Optional[SsimConfig] = None,
    mask: Optional[np.ndarray] = None,
    grayscale: bool = False,
) -> PhotometricResult:
    """Photometric reconstruction error
    ``kappa * (1 - SSIM) / 2 + (1 - kappa) * |target - predicted|``.

    Computed per channel and averaged; `grayscale` converts both inputs to
    luma first.

    Parameters:
        target (Image or ndarray): reference view
        predicted (Image or ndarray): reconstructed view
        kappa (float): SSIM weight in [0, 1]
        cfg (SsimConfig): SSIM settings
        mask (ndarray): (H, W) pixels to average over (default all)
        grayscale (bool): compare luma instead of channels

    Raises:
        DomainError: shapes differ or kappa outside [0, 1]
        EmptyDomainError: empty mask
    """
    cfg = cfg or SsimConfig()
    if not 0.0 <= kappa <= 1.0:
        raise DomainError(f"kappa must lie in [0, 1], got {kappa}")
    t = as_array(target)
    p = as_array(predicted)
    if t.ndim == 2:
        t = t[:, :, None]
    if p.ndim == 2:
        p = p[:, :, None]
    if t.shape != p.shape:
        raise DomainError(f"Photometric inputs differ in shape: {t.shape} vs {p.shape}")
    if mask is None:
        mask = np.ones(t.shape[:2], dtype=bool)
    elif mask.shape != t.shape[:2]:
        raise DomainError(f"Mask shape {mask.shape} does not match {t.shape[:2]}")
    return PhotometricResult(t, p, kappa, cfg, np.asarray(mask, dtype=bool), grayscale)
