"""
Expert-depth alignment and structure-distillation losses.

The expert is a frozen relative-depth map. It is inverted into depth space,
aligned to the student by a global scale and shift, and compared two ways:
local statistics (depth-domain SSIM) and occluding boundaries (Sobel
magnitude thresholded at a per-map turn-on level). Gradients only ever flow
to the student.
"""

# Standard packages
import concurrent.futures as cf
import logging
import math
import warnings
from dataclasses import dataclass
from typing import NamedTuple, Optional, Tuple, Union

# Third-party packages
import numpy as np
from scipy import ndimage

# Local packages
from depthdistill.core.errors import (
    ConfigurationError,
    DegenerateFitError,
    DomainError,
    EmptyDomainError,
    NoConsensusError,
)
from depthdistill.core.grids import BoundaryMap, DepthMap, GradientMap, RelativeDepthMap
from depthdistill.core.utils import correlate2d, correlate2d_adjoint, quantile_nearest_rank
from depthdistill.losses.photometric import SsimConfig, SsimResult

log = logging.getLogger(__name__)

SOBEL_U = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_V = SOBEL_U.T.copy()

DepthLike = Union[DepthMap, np.ndarray]


@dataclass(frozen=True)
class AlignmentParams(object):
    """Global scale `a_s` (unitless) and shift `a_t` (meters)."""

    a_s: float
    a_t: float

    def __post_init__(self):
        if not (math.isfinite(self.a_s) and math.isfinite(self.a_t)):
            raise DegenerateFitError(f"Alignment is not finite: a_s={self.a_s}, a_t={self.a_t}")

    def apply(self, values: np.ndarray) -> np.ndarray:
        return self.a_s * np.asarray(values, dtype=np.float64) + self.a_t

    def __str__(self):
        return f"a_s={self.a_s:.6g} a_t={self.a_t:.6g}"


class AlignmentFit(NamedTuple):
    params: AlignmentParams
    aligned: DepthMap
    inliers: np.ndarray


@dataclass(frozen=True)
class RansacConfig(object):
    """
    Parameters:
        iterations (int): number of 2-point hypotheses
        inlier_threshold (float): absolute residual bound in meters
        min_inlier_fraction (float): consensus required, in (0, 1]
        seed (int): base seed; hypothesis i draws from the stream (seed, i)
        workers (int): threads used to score hypotheses
    """

    iterations: int = 200
    inlier_threshold: float = 0.05
    min_inlier_fraction: float = 0.3
    seed: int = 0
    workers: int = 4

    def __post_init__(self):
        if self.iterations < 1:
            raise ConfigurationError(f"RANSAC needs at least one iteration, got {self.iterations}")
        if not self.inlier_threshold > 0:
            raise ConfigurationError("RANSAC inlier_threshold must be positive")
        if not 0 < self.min_inlier_fraction <= 1:
            raise ConfigurationError("RANSAC min_inlier_fraction must lie in (0, 1]")
        if self.workers < 1:
            raise ConfigurationError("RANSAC workers must be >= 1")


@dataclass(frozen=True)
class DistillConfig(object):
    """
    Parameters:
        quantile (float): turn-on level quantile of gradient magnitudes
        softsign_sharpness (float): soft-sign slope at the threshold
        stat_weight (float): weight of the statistical loss
        spat_weight (float): weight of the spatial refinement loss
        floor (float): raw expert values at or below this are invalid
    """

    quantile: float = 0.95
    softsign_sharpness: float = 50.0
    stat_weight: float = 1.0
    spat_weight: float = 0.1
    floor: float = 1e-6

    def __post_init__(self):
        if not 0 < self.quantile < 1:
            raise ConfigurationError(f"quantile must lie in (0, 1), got {self.quantile}")
        if not self.softsign_sharpness > 0:
            raise ConfigurationError("softsign_sharpness must be positive")
        if self.stat_weight < 0 or self.spat_weight < 0:
            raise ConfigurationError("distillation weights must be non-negative")
        if not self.floor > 0:
            raise ConfigurationError("floor must be positive")

    def combine(self, l_stat: float, l_spat: float) -> float:
        return self.stat_weight * l_stat + self.spat_weight * l_spat


def _depth(grid: DepthLike) -> DepthMap:
    if isinstance(grid, DepthMap):
        return grid
    return DepthMap(grid)


def invert_expert(raw: Union[RelativeDepthMap, np.ndarray], floor: float = 1e-6) -> DepthMap:
    """Move an inverse-depth-like expert map into depth space.

    Pixels with ``raw <= floor`` (or non-finite raw) are marked invalid.

    Example:

        >>> invert_expert(np.array([[4.0, 0.25]])).data
        array([[0.25, 4.  ]])
    """
    data = raw.data if isinstance(raw, RelativeDepthMap) else np.asarray(raw, dtype=np.float64)
    with np.errstate(invalid="ignore"):
        valid = np.isfinite(data) & (data > floor)
    inverted = 1.0 / np.fmax(np.where(np.isfinite(data), data, floor), floor)
    return DepthMap(inverted, valid)


def _joint(expert: DepthMap, student: DepthMap, mask: Optional[np.ndarray]) -> np.ndarray:
    if expert.shape != student.shape:
        raise DomainError(f"Expert shape {expert.shape} does not match student {student.shape}")
    joint = expert.valid & student.valid
    if mask is not None:
        joint = joint & np.asarray(mask, dtype=bool)
    return joint


def _solve(x: np.ndarray, y: np.ndarray) -> AlignmentParams:
    if x.size < 2:
        raise DegenerateFitError(f"Alignment needs at least 2 points, got {x.size}")
    xm = x.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if np.ptp(x) == 0 or sxx == 0:
        raise DegenerateFitError("Expert values are constant over the valid pixels")
    a_s = float(dx @ (y - y.mean())) / sxx
    return AlignmentParams(a_s, float(y.mean() - a_s * xm))


def apply_alignment(expert: DepthMap, params: AlignmentParams) -> DepthMap:
    """``a_s * expert + a_t`` on valid pixels, 0 elsewhere."""
    return DepthMap(np.where(expert.valid, params.apply(expert.data), 0.0), expert.valid)


def align_least_squares(
    expert: DepthLike, student: DepthLike, mask: Optional[np.ndarray] = None
) -> AlignmentFit:
    """Closed-form scale/shift fit of the expert to the student.

    Minimizes ``sum((a_s * expert + a_t - student)**2)`` over jointly valid
    pixels (optionally restricted by `mask`).

    Returns:
        AlignmentFit: params, aligned expert and the pixels used

    Raises:
        DegenerateFitError: fewer than 2 points or constant expert
    """
    expert, student = _depth(expert), _depth(student)
    joint = _joint(expert, student, mask)
    params = _solve(expert.data[joint], student.data[joint])
    log.debug(f"Least-squares alignment {params} over {int(joint.sum())} pixels")
    return AlignmentFit(params, apply_alignment(expert, params), joint)


def _score_chunk(x, y, iterations, cfg: RansacConfig) -> Tuple[int, int]:
    best = (-1, -1)
    n = x.size
    for i in iterations:
        rng = np.random.default_rng((cfg.seed, i))
        j, k = rng.choice(n, size=2, replace=False)
        if x[j] == x[k]:
            continue
        a_s = (y[k] - y[j]) / (x[k] - x[j])
        a_t = y[j] - a_s * x[j]
        count = int(np.count_nonzero(np.abs(a_s * x + a_t - y) <= cfg.inlier_threshold))
        if count > best[0]:
            best = (count, i)
    return best


def _score_all(pool: cf.Executor, x, y, chunks, cfg: RansacConfig) -> list:
    futures = [pool.submit(_score_chunk, x, y, chunk.tolist(), cfg) for chunk in chunks]
    return [future.result() for future in cf.as_completed(futures)]


def align_ransac(
    expert: DepthLike,
    student: DepthLike,
    cfg: Optional[RansacConfig] = None,
    mask: Optional[np.ndarray] = None,
    executor: Optional[cf.Executor] = None,
) -> AlignmentFit:
    """Robust scale/shift fit: 2-point hypotheses scored by inlier count,
    then a least-squares refit on the best consensus set.

    Deterministic for a fixed seed regardless of thread scheduling: ties in
    inlier count go to the lowest hypothesis index. Hypotheses are scored
    on `executor` when given, otherwise on a pool of `cfg.workers` threads
    opened for this call.

    Raises:
        DegenerateFitError: fewer than 2 points or all expert values equal
        NoConsensusError: best hypothesis below `min_inlier_fraction`
    """
    cfg = cfg or RansacConfig()
    expert, student = _depth(expert), _depth(student)
    joint = _joint(expert, student, mask)
    x = expert.data[joint]
    y = student.data[joint]
    n = x.size
    if n < 2:
        raise DegenerateFitError(f"RANSAC needs at least 2 points, got {n}")
    if np.ptp(x) == 0:
        raise DegenerateFitError("All expert values are identical")

    chunks = np.array_split(np.arange(cfg.iterations), min(cfg.workers, cfg.iterations))
    if executor is None:
        with cf.ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = _score_all(pool, x, y, chunks, cfg)
    else:
        results = _score_all(executor, x, y, chunks, cfg)

    count, best_i = max(results, key=lambda r: (r[0], -r[1]))
    if count < cfg.min_inlier_fraction * n:
        raise NoConsensusError(
            f"Best hypothesis has {max(count, 0)} of {n} inliers, "
            f"below the required fraction {cfg.min_inlier_fraction}"
        )

    rng = np.random.default_rng((cfg.seed, best_i))
    j, k = rng.choice(n, size=2, replace=False)
    a_s = (y[k] - y[j]) / (x[k] - x[j])
    a_t = y[j] - a_s * x[j]
    inliers = np.abs(a_s * x + a_t - y) <= cfg.inlier_threshold
    if inliers.sum() < n / 2:
        warnings.warn(f"RANSAC refit uses only {int(inliers.sum())} of {n} points")
    params = _solve(x[inliers], y[inliers])
    log.info(f"RANSAC consensus {int(inliers.sum())}/{n} (hypothesis {best_i}): {params}")

    full = np.zeros(joint.shape, dtype=bool)
    full[joint] = inliers
    return AlignmentFit(params, apply_alignment(expert, params), full)


class StatResult(NamedTuple):
    value: float
    grad: np.ndarray
    ssim: np.ndarray


def stat_loss(
    aligned_expert: DepthLike, student: DepthLike, cfg: Optional[SsimConfig] = None
) -> StatResult:
    """``1 - mean SSIM(aligned_expert, student)`` over jointly valid pixels.

    Invalid expert pixels take the student's values and invalid student
    pixels the expert's, so SSIM windows stay defined at mask borders.

    Raises:
        EmptyDomainError: no jointly valid pixel
    """
    cfg = cfg or SsimConfig()
    expert, student = _depth(aligned_expert), _depth(student)
    joint = _joint(expert, student, None)
    n = int(joint.sum())
    if n == 0:
        raise EmptyDomainError("Statistical loss has no jointly valid pixels")

    sv, ev = student.valid, expert.valid
    s = np.where(sv, student.data, np.where(ev, expert.data, 0.0))
    e = np.where(ev, expert.data, s)
    forward = SsimResult(s, e, cfg)
    weights = np.where(joint, -1.0 / n, 0.0)
    grad = forward.backward(weights)
    if not ev.all():
        grad = grad + np.where(ev, 0.0, SsimResult(e, s, cfg).backward(weights))
    grad = np.where(sv, grad, 0.0)
    return StatResult(1.0 - float(forward.ssim[joint].mean()), grad, forward.ssim)


def sobel(depth: Union[DepthMap, RelativeDepthMap, np.ndarray]) -> GradientMap:
    """Unnormalized 3x3 Sobel gradients with reflect padding.

    A pixel is valid when its whole 3x3 neighbourhood is valid.

    Raises:
        DomainError: grid smaller than 3x3
    """
    if isinstance(depth, DepthMap):
        data, valid = depth.data, depth.valid
    else:
        data = depth.data if isinstance(depth, RelativeDepthMap) else np.asarray(depth, float)
        valid = np.isfinite(data)
    if data.ndim != 2 or data.shape[0] < 3 or data.shape[1] < 3:
        raise DomainError(f"Sobel needs a grid of at least 3x3, got {data.shape}")

    filled = np.where(valid, data, 0.0)
    gu = correlate2d(filled, SOBEL_U)
    gv = correlate2d(filled, SOBEL_V)
    if not valid.all():
        valid = ndimage.binary_erosion(valid, structure=np.ones((3, 3)), border_value=1)
    return GradientMap.from_components(gu, gv, valid)


def sobel_adjoint(grad_u: np.ndarray, grad_v: np.ndarray) -> np.ndarray:
    """Vector-Jacobian product of `sobel` for upstream (gu, gv) gradients."""
    return correlate2d_adjoint(grad_u, SOBEL_U) + correlate2d_adjoint(grad_v, SOBEL_V)


def turn_on_level(gmap: GradientMap, quantile: float = 0.95) -> float:
    """Nearest-rank quantile of the valid gradient magnitudes.

    Raises:
        EmptyDomainError: no valid magnitude
    """
    return quantile_nearest_rank(gmap.magnitude[gmap.valid], quantile)


def soft_sign(x: np.ndarray, sharpness: float) -> np.ndarray:
    sx = sharpness * np.asarray(x, dtype=np.float64)
    return sx / (1.0 + np.abs(sx))


def soft_sign_derivative(x: np.ndarray, sharpness: float) -> np.ndarray:
    return sharpness / (1.0 + np.abs(sharpness * np.asarray(x, dtype=np.float64))) ** 2


def soft_binarize(
    magnitude: Union[GradientMap, np.ndarray], alpha: float, sharpness: float = 50.0
) -> BoundaryMap:
    """Boundary map ``soft = softsign(magnitude - alpha)``, ``hard = soft > 0``.

    Raises:
        DomainError: sharpness not positive
    """
    if not sharpness > 0:
        raise DomainError(f"Soft-sign sharpness must be positive, got {sharpness}")
    if isinstance(magnitude, GradientMap):
        return BoundaryMap.from_soft(soft_sign(magnitude.magnitude - alpha, sharpness), magnitude.valid)
    return BoundaryMap.from_soft(soft_sign(np.asarray(magnitude, float) - alpha, sharpness))


class SpatialResult(NamedTuple):
    value: float
    hard: float
    grad: np.ndarray


def spatial_loss(expert: BoundaryMap, student: BoundaryMap) -> SpatialResult:
    """Boundary disagreement: ``mean |soft* - soft| / 2`` for optimization,
    ``mean(hard* XOR hard)`` for reporting. Gradient w.r.t. the student's
    soft map.

    Raises:
        DomainError: shape mismatch
        EmptyDomainError: no jointly valid pixel
    """
    if expert.shape != student.shape:
        raise DomainError(f"Boundary maps differ in shape: {expert.shape} vs {student.shape}")
    joint = expert.valid & student.valid
    n = int(joint.sum())
    if n == 0:
        raise EmptyDomainError("Spatial loss has no jointly valid pixels")
    diff = student.soft - expert.soft
    value = float(np.abs(diff)[joint].mean()) / 2.0
    hard = float((expert.hard != student.hard)[joint].mean())
    grad = np.where(joint, np.sign(diff), 0.0) / (2.0 * n)
    return SpatialResult(value, hard, grad)


def edges(
    depth: Union[DepthMap, RelativeDepthMap, np.ndarray],
    quantile: float = 0.95,
    sharpness: float = 50.0,
    alpha: Optional[float] = None,
) -> Tuple[GradientMap, float, BoundaryMap]:
    """Sobel, turn-on level and soft binarization in one call.

    Returns:
        tuple: (GradientMap, alpha, BoundaryMap)
    """
    gmap = sobel(depth)
    if alpha is None:
        alpha = turn_on_level(gmap, quantile)
    return gmap, alpha, soft_binarize(gmap, alpha, sharpness)


@dataclass(frozen=True, eq=False)
class DistillResult(object):
    """Combined distillation loss and its pieces.

    Attributes:
        value (float): ``stat_weight * l_stat + spat_weight * l_spat``
        l_stat (float): statistical loss
        l_spat (float): soft spatial loss
        l_spat_hard (float): XOR boundary disagreement
        grad (ndarray): d(value)/d(student depth)
        alphas (tuple): (expert, student) turn-on levels used
        expert_edges (BoundaryMap)
        student_edges (BoundaryMap)
    """

    value: float
    l_stat: float
    l_spat: float
    l_spat_hard: float
    grad: np.ndarray
    alphas: Tuple[float, float]
    expert_edges: BoundaryMap
    student_edges: BoundaryMap


def dist_loss(
    aligned_expert: DepthLike,
    student: DepthLike,
    cfg: Optional[DistillConfig] = None,
    ssim_cfg: Optional[SsimConfig] = None,
    alphas: Optional[Tuple[float, float]] = None,
) -> DistillResult:
    """Distillation loss with each side thresholded at its own turn-on level.

    Turn-on levels are treated as constants. Pass `alphas` to hold them
    fixed instead of recomputing them from the inputs.
    """
    cfg = cfg or DistillConfig()
    expert, student = _depth(aligned_expert), _depth(student)
    stat = stat_loss(expert, student, ssim_cfg)

    alpha_e, alpha_s = alphas if alphas is not None else (None, None)
    _, alpha_e, expert_edges = edges(expert, cfg.quantile, cfg.softsign_sharpness, alpha_e)
    gmap, alpha_s, student_edges = edges(student, cfg.quantile, cfg.softsign_sharpness, alpha_s)
    spat = spatial_loss(expert_edges, student_edges)

    # soft-sign -> magnitude -> sobel components -> depth
    g_mag = spat.grad * soft_sign_derivative(gmap.magnitude - alpha_s, cfg.softsign_sharpness)
    safe = np.where(gmap.magnitude > 0, gmap.magnitude, 1.0)
    scale = np.where(gmap.magnitude > 0, g_mag / safe, 0.0)
    g_spat = np.where(student.valid, sobel_adjoint(scale * gmap.gu, scale * gmap.gv), 0.0)

    value = cfg.combine(stat.value, spat.value)
    grad = cfg.stat_weight * stat.grad + cfg.spat_weight * g_spat
    log.debug(
        f"dist_loss stat={stat.value:.6g} spat={spat.value:.6g} "
        f"alpha*={alpha_e:.4g} alpha={alpha_s:.4g}"
    )
    return DistillResult(
        value,
        stat.value,
        spat.value,
        spat.hard,
        grad,
        (alpha_e, alpha_s),
        expert_edges,
        student_edges,
    )
