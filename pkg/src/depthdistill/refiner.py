"""
Variational depth refinement.

A per-pixel log-depth field (and optionally one 6-DoF pose per temporal
neighbor) is optimized directly by first-order descent on

    l_total = l_lr + l_temp + dist_weight * l_dist
              + smoothness_weight * l_smooth + supervised_weight * l_sup

where `l_lr` reconstructs the left view from the right one, `l_temp`
reconstructs it from temporal neighbors and `l_dist` distills structure from
a frozen relative-depth expert.

Example:

    >>> from depthdistill.synthscene import preset, render
    >>> sample = render(preset("default-boxes", resolution=48))
    >>> inputs = RefineInputs.from_sample(sample)
    >>> result = refine(inputs, RefineConfig(iterations=0, dist_weight=0.0))
    >>> round(float(result.depth.data.mean()), 9)
    2.0
"""

# Standard packages
import concurrent.futures as cf
import logging
import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Dict, Mapping, Optional, Tuple, Union

# Third-party packages
import numpy as np
from scipy import ndimage

# Local packages
from depthdistill.core.camera import CameraIntrinsics, RigidTransform, stereo_transform
from depthdistill.core.errors import ConfigurationError, DomainError, EmptyDomainError, NumericalFailure
from depthdistill.core.grids import DepthMap, Image, RelativeDepthMap
from depthdistill.geometry import pose_param_to_transform, warp
from depthdistill.losses.distill import (
    AlignmentParams,
    DistillConfig,
    RansacConfig,
    apply_alignment,
    align_least_squares,
    align_ransac,
    dist_loss,
    invert_expert,
)
from depthdistill.losses.photometric import SsimConfig, pe

log = logging.getLogger(__name__)

OPTIMIZERS = ("plain-gradient", "momentum", "adaptive-moments")
SCHEDULES = ("constant", "step-decay")
ALIGNMENTS = ("least-squares", "ransac")


@dataclass(frozen=True)
class RefineConfig(object):
    """Refinement settings.

    Parameters:
        iterations (int): optimizer steps
        learning_rate (float): step size on log-depth
        optimizer (str): "plain-gradient", "momentum" or "adaptive-moments"
        lr_schedule (str): "constant" or "step-decay"
        decay_every (int): steps between decays for "step-decay"
        decay_factor (float): learning-rate multiplier per decay
        momentum (float): heavy-ball coefficient for "momentum"
        beta1 (float): first-moment decay for "adaptive-moments"
        beta2 (float): second-moment decay for "adaptive-moments"
        epsilon (float): denominator guard for "adaptive-moments"
        dist_weight (float): weight of the distillation loss
        temporal_frames (tuple): neighbor offsets used by the temporal term
        smoothness_weight (float): weight of the edge-aware smoothness term
        min_reprojection (bool): per-pixel minimum over photometric sources
            instead of their sum
        seed (int): seed for RANSAC alignment
        init_depth (float): constant initial depth in meters
        kappa (float): SSIM weight of the photometric error
        grayscale (bool): photometric error on luma
        optimize_pose (bool): optimize temporal poses jointly
        pose_learning_rate (float): step size for pose parameters
        pose_warmup (int): stereo-only steps before temporal terms and pose
            updates start when poses are optimized
        blur_sigma (float): Gaussian pre-blur of all views, in pixels
        blur_anneal (int): steps over which the pre-blur decays to 0
            (0 keeps it constant)
        supervised_weight (float): weight of the squared error to ground truth
        alignment (str): "least-squares" or "ransac"
        log_every (int): steps between DEBUG loss records
        distill (DistillConfig): distillation settings
        ssim (SsimConfig): SSIM settings shared by all terms
        ransac (RansacConfig): RANSAC settings when alignment is "ransac"
    """

    iterations: int = 500
    learning_rate: float = 2e-2
    optimizer: str = "adaptive-moments"
    lr_schedule: str = "constant"
    decay_every: int = 500
    decay_factor: float = 0.5
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    dist_weight: float = 0.1
    temporal_frames: Tuple[int, ...] = ()
    smoothness_weight: float = 0.0
    min_reprojection: bool = False
    seed: int = 0
    init_depth: float = 2.0
    kappa: float = 0.85
    grayscale: bool = False
    optimize_pose: bool = False
    pose_learning_rate: float = 1e-3
    pose_warmup: int = 0
    blur_sigma: float = 0.0
    blur_anneal: int = 0
    supervised_weight: float = 0.0
    alignment: str = "least-squares"
    log_every: int = 50
    distill: DistillConfig = field(default_factory=DistillConfig)
    ssim: SsimConfig = field(default_factory=SsimConfig)
    ransac: RansacConfig = field(default_factory=RansacConfig)

    def __post_init__(self):
        if self.iterations < 0:
            raise ConfigurationError(f"iterations must be >= 0, got {self.iterations}")
        if not (self.learning_rate > 0 and self.pose_learning_rate > 0):
            raise ConfigurationError("learning rates must be positive")
        if self.optimizer not in OPTIMIZERS:
            raise ConfigurationError(f"Unknown optimizer {self.optimizer!r}; expected one of {OPTIMIZERS}")
        if self.lr_schedule not in SCHEDULES:
            raise ConfigurationError(f"Unknown lr_schedule {self.lr_schedule!r}; expected one of {SCHEDULES}")
        if self.alignment not in ALIGNMENTS:
            raise ConfigurationError(f"Unknown alignment {self.alignment!r}; expected one of {ALIGNMENTS}")
        weights = (self.dist_weight, self.smoothness_weight, self.supervised_weight)
        if min(weights) < 0:
            raise ConfigurationError("loss weights must be non-negative")
        if self.decay_every < 1 or not 0 < self.decay_factor <= 1:
            raise ConfigurationError("decay_every must be >= 1 and decay_factor in (0, 1]")
        if not (0 <= self.momentum < 1 and 0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigurationError("momentum coefficients must lie in [0, 1)")
        if not self.init_depth > 0:
            raise ConfigurationError("init_depth must be positive")
        if not 0 <= self.kappa <= 1:
            raise ConfigurationError("kappa must lie in [0, 1]")
        if self.blur_sigma < 0 or self.blur_anneal < 0:
            raise ConfigurationError("blur_sigma and blur_anneal must be non-negative")
        if self.pose_warmup < 0:
            raise ConfigurationError(f"pose_warmup must be >= 0, got {self.pose_warmup}")
        if any(int(k) == 0 for k in self.temporal_frames):
            raise ConfigurationError("temporal frame offsets must be non-zero")
        if len(set(self.temporal_frames)) != len(self.temporal_frames):
            raise ConfigurationError("temporal frame offsets must be unique")
        if self.log_every < 1:
            raise ConfigurationError("log_every must be >= 1")

    def learning_rate_at(self, step: int) -> float:
        if self.lr_schedule == "step-decay":
            return self.learning_rate * self.decay_factor ** (step // self.decay_every)
        return self.learning_rate

    def poses_active(self, step: int) -> bool:
        """False while optimized poses are still held in warm-up."""
        return not self.optimize_pose or step >= self.pose_warmup

    def blur_at(self, step: int) -> float:
        if self.blur_anneal == 0:
            return self.blur_sigma
        return self.blur_sigma * max(0.0, 1.0 - step / self.blur_anneal)


@dataclass(frozen=True, eq=False)
class TemporalFrame(object):
    """A temporal neighbor of the left view.

    Parameters:
        offset (int): frame offset k relative to the refined frame
        image (Image): left view of frame t+k
        pose (RigidTransform, optional): transform from the refined camera
            to this neighbor's camera; the starting point when poses are
            optimized, identity if omitted
    """

    offset: int
    image: Image
    pose: Optional[RigidTransform] = None


@dataclass(frozen=True, eq=False)
class RefineInputs(object):
    """Everything one refinement job reads.

    Raises:
        DomainError: grids disagree in shape or baseline is not positive
    """

    left: Image
    right: Image
    K: CameraIntrinsics
    baseline: float = 0.13
    expert: Optional[RelativeDepthMap] = None
    temporal: Tuple[TemporalFrame, ...] = ()
    gt_depth: Optional[DepthMap] = None

    def __post_init__(self):
        if self.baseline <= 0:
            raise DomainError(f"Stereo baseline must be positive, got {self.baseline}")
        shape = self.left.shape
        others = [("right", self.right.shape)]
        others += [(f"temporal {f.offset}", f.image.shape) for f in self.temporal]
        if self.expert is not None:
            others.append(("expert", self.expert.shape))
        if self.gt_depth is not None:
            others.append(("gt_depth", self.gt_depth.shape))
        for name, other in others:
            if other != shape:
                raise DomainError(f"{name} shape {other} does not match left view {shape}")

    @property
    def shape(self) -> tuple:
        return self.left.shape

    def frame(self, offset: int) -> TemporalFrame:
        for f in self.temporal:
            if f.offset == offset:
                return f
        raise ConfigurationError(f"No temporal frame with offset {offset} in the inputs")

    @classmethod
    def from_sample(
        cls,
        sample,
        expert: Optional[RelativeDepthMap] = None,
        neighbors: Optional[Mapping[int, object]] = None,
        with_gt: bool = False,
    ) -> "RefineInputs":
        """Build inputs from a rendered StereoSample and optional neighboring
        samples keyed by offset; neighbor poses come from the trajectory.
        """
        temporal = []
        for offset, other in sorted((neighbors or {}).items()):
            pose = other.left_pose.inverse().compose(sample.left_pose)
            temporal.append(TemporalFrame(offset, other.left, pose))
        return cls(
            sample.left,
            sample.right,
            sample.intrinsics,
            sample.baseline,
            expert,
            tuple(temporal),
            sample.gt_depth if with_gt else None,
        )


@dataclass(frozen=True)
class LossReport(object):
    """Loss terms of one evaluation. All terms are non-negative and
    ``l_total = l_lr + l_temp + dist_weight * l_dist + smoothness_weight *
    l_smooth + supervised_weight * l_sup``.
    """

    step: int
    l_lr: float
    l_temp: float
    l_stat: float
    l_spat: float
    l_spat_hard: float
    l_dist: float
    l_smooth: float
    l_sup: float
    l_total: float
    grad_norm: float
    a_s: Optional[float] = None
    a_t: Optional[float] = None

    def as_record(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class FrozenConstants(object):
    """Per-evaluation constants that are not differentiated: the expert
    alignment and the (expert, student) turn-on levels. Passing them back in
    holds them fixed across evaluations.
    """

    alignment: Optional[AlignmentParams] = None
    alphas: Optional[Tuple[float, float]] = None


@dataclass(frozen=True, eq=False)
class RefinerState(object):
    """Optimization state of one refinement job.

    Attributes:
        log_depth (ndarray): (H, W) log meters
        pose_params (dict): offset -> 6-vector (axis-angle, translation)
            applied on top of the neighbor's starting pose
        step_count (int): steps taken
        loss_history (tuple): one LossReport per step
        moments (dict): optimizer accumulators by parameter name
    """

    log_depth: np.ndarray
    pose_params: Mapping[int, np.ndarray] = field(default_factory=dict)
    step_count: int = 0
    loss_history: Tuple[LossReport, ...] = ()
    moments: Mapping[str, tuple] = field(default_factory=dict)

    @classmethod
    def initial(
        cls,
        inputs: RefineInputs,
        cfg: RefineConfig,
        init: Optional[Union[DepthMap, float]] = None,
    ) -> "RefinerState":
        """Constant depth at `cfg.init_depth`, a constant, or a DepthMap warm
        start (invalid pixels fall back to `cfg.init_depth`).
        """
        h, w = inputs.shape
        if isinstance(init, DepthMap):
            if init.shape != (h, w):
                raise DomainError(f"Initial depth shape {init.shape} does not match {(h, w)}")
            log_depth = np.where(init.valid, np.log(np.where(init.valid, init.data, 1.0)), math.log(cfg.init_depth))
        else:
            value = cfg.init_depth if init is None else float(init)
            if not value > 0:
                raise DomainError(f"Initial depth must be positive, got {value}")
            log_depth = np.full((h, w), math.log(value))
        poses = {int(k): np.zeros(6) for k in cfg.temporal_frames} if cfg.optimize_pose else {}
        return cls(log_depth, poses)

    @property
    def depth(self) -> DepthMap:
        return DepthMap(np.exp(self.log_depth))

    def pose(self, frame: TemporalFrame) -> RigidTransform:
        start = frame.pose or RigidTransform.identity()
        params = self.pose_params.get(frame.offset)
        if params is None:
            return start
        return pose_param_to_transform(params)[0].compose(start)

    def with_log_depth(self, log_depth: np.ndarray) -> "RefinerState":
        return replace(self, log_depth=np.asarray(log_depth, dtype=np.float64))


@dataclass(frozen=True, eq=False)
class Evaluation(object):
    """Result of `total_loss`.

    Attributes:
        report (LossReport)
        grad (ndarray): d(l_total)/d(log_depth)
        pose_grads (dict): offset -> d(l_total)/d(pose params)
        frozen (FrozenConstants): constants used by this evaluation
    """

    report: LossReport
    grad: np.ndarray
    pose_grads: Dict[int, np.ndarray]
    frozen: FrozenConstants


def _blurred(image: Image, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return image.data
    return ndimage.gaussian_filter(image.data, sigma=(sigma, sigma, 0), mode="mirror")


def _finite(term: str, value: float, step: int) -> float:
    if not math.isfinite(value):
        raise NumericalFailure(term, f"non-finite value {value} at step {step}")
    return value


def _smoothness(log_depth: np.ndarray, image: np.ndarray):
    """Edge-aware first-order smoothness of log-depth, down-weighted across
    image edges.
    """
    gray = image.mean(axis=2)
    dx = log_depth[:, 1:] - log_depth[:, :-1]
    dy = log_depth[1:, :] - log_depth[:-1, :]
    wx = np.exp(-np.abs(gray[:, 1:] - gray[:, :-1]))
    wy = np.exp(-np.abs(gray[1:, :] - gray[:-1, :]))
    value = 0.0
    grad = np.zeros_like(log_depth)
    if dx.size:
        value += float(np.mean(np.abs(dx) * wx))
        sx = np.sign(dx) * wx / dx.size
        grad[:, 1:] += sx
        grad[:, :-1] -= sx
    if dy.size:
        value += float(np.mean(np.abs(dy) * wy))
        sy = np.sign(dy) * wy / dy.size
        grad[1:, :] += sy
        grad[:-1, :] -= sy
    return value, grad


def _sources(state: RefinerState, inputs: RefineInputs, cfg: RefineConfig):
    """(key, source image, target->source transform, pose start, pose jacobian)"""
    yield "lr", inputs.right, stereo_transform(inputs.baseline), None, None
    if not cfg.poses_active(state.step_count):
        return
    for offset in cfg.temporal_frames:
        frame = inputs.frame(offset)
        start = frame.pose or RigidTransform.identity()
        if cfg.optimize_pose:
            moved, jac = pose_param_to_transform(state.pose_params[offset])
            yield offset, frame.image, moved.compose(start), start, jac
        else:
            yield offset, frame.image, start, None, None


def _photometric(state, inputs, cfg, depth, sigma, step):
    target = _blurred(inputs.left, sigma)
    grad_depth = np.zeros_like(depth)
    pose_grads = {}
    evaluated = []
    for key, source, T, start, jac in _sources(state, inputs, cfg):
        warped = warp(_blurred(source, sigma), depth, T, inputs.K)
        if not warped.valid.any():
            raise EmptyDomainError(f"No left-view pixel is visible from source {key}")
        predicted = np.where(warped.valid[:, :, None], warped.image.data, target)
        result = pe(target, predicted, cfg.kappa, cfg.ssim, warped.valid, cfg.grayscale)
        evaluated.append((key, warped, result, start, jac))

    if cfg.min_reprojection and len(evaluated) > 1:
        maps = np.stack([np.where(r.valid, r.loss_map, np.inf) for _, _, r, _, _ in evaluated])
        best = np.argmin(maps, axis=0)
        seen = np.isfinite(maps).any(axis=0)
        n = int(seen.sum())
        weights = [((best == i) & seen) / n for i in range(len(evaluated))]
    else:
        weights = [None] * len(evaluated)

    l_lr, l_temp = 0.0, 0.0
    for (key, warped, result, start, jac), weight in zip(evaluated, weights):
        if weight is None:
            share, g_pred = result.value, result.grad
        else:
            share = float(np.sum(np.where(weight > 0, result.loss_map, 0.0) * weight))
            g_pred = result.backward(weight)
        if key == "lr":
            l_lr += share
        else:
            l_temp += share
        grad_depth += np.einsum("hwc,hwc->hw", g_pred, warped.jacobian)
        if jac is not None:
            d_point = np.einsum("hwc,hwck->hwk", g_pred, warped.point_jacobian)
            action = jac.action(start.apply(warped.points))
            pose_grads[key] = np.einsum("hwk,hwkj->j", d_point, action)
    return _finite("l_lr", l_lr, step), _finite("l_temp", l_temp, step), grad_depth, pose_grads


def total_loss(
    state: RefinerState,
    inputs: RefineInputs,
    cfg: RefineConfig,
    frozen: Optional[FrozenConstants] = None,
    executor: Optional[cf.Executor] = None,
) -> Evaluation:
    """Evaluate the full objective and its gradients.

    Parameters:
        state (RefinerState): current depth and poses
        inputs (RefineInputs): views, intrinsics, expert
        cfg (RefineConfig): weights and settings
        frozen (FrozenConstants, optional): alignment and turn-on levels to
            reuse instead of recomputing them
        executor (Executor, optional): pool that scores RANSAC hypotheses

    Returns:
        Evaluation

    Raises:
        ConfigurationError: dist_weight > 0 without an expert map, or
            supervised_weight > 0 without ground truth
        NumericalFailure: a loss term is not finite
    """
    step = state.step_count
    if cfg.dist_weight > 0 and inputs.expert is None:
        raise ConfigurationError("dist_weight > 0 needs an expert map")
    if cfg.supervised_weight > 0 and inputs.gt_depth is None:
        raise ConfigurationError("supervised_weight > 0 needs ground-truth depth")
    frozen = frozen or FrozenConstants()

    depth = np.exp(state.log_depth)
    sigma = cfg.blur_at(step)
    l_lr, l_temp, grad_depth, pose_grads = _photometric(state, inputs, cfg, depth, sigma, step)

    l_stat = l_spat = l_spat_hard = l_dist = 0.0
    used = FrozenConstants()
    params = None
    if cfg.dist_weight > 0:
        student = DepthMap(depth)
        expert = invert_expert(inputs.expert, cfg.distill.floor)
        params = frozen.alignment
        if params is None:
            if cfg.alignment == "ransac":
                ransac = replace(cfg.ransac, seed=cfg.seed)
                params = align_ransac(expert, student, ransac, executor=executor).params
            else:
                params = align_least_squares(expert, student).params
        result = dist_loss(apply_alignment(expert, params), student, cfg.distill, cfg.ssim, frozen.alphas)
        l_stat = _finite("l_stat", result.l_stat, step)
        l_spat = _finite("l_spat", result.l_spat, step)
        l_spat_hard = result.l_spat_hard
        l_dist = _finite("l_dist", result.value, step)
        grad_depth = grad_depth + cfg.dist_weight * result.grad
        used = FrozenConstants(params, result.alphas)

    l_sup = 0.0
    if cfg.supervised_weight > 0:
        gt = inputs.gt_depth
        n = gt.count
        if n == 0:
            raise EmptyDomainError("Ground-truth depth has no valid pixels")
        diff = np.where(gt.valid, depth - np.where(gt.valid, gt.data, 0.0), 0.0)
        l_sup = _finite("l_sup", float(np.sum(diff**2)) / n, step)
        grad_depth = grad_depth + cfg.supervised_weight * 2.0 * diff / n

    # d depth / d log_depth = depth
    grad = grad_depth * depth
    l_smooth = 0.0
    if cfg.smoothness_weight > 0:
        l_smooth, g_smooth = _smoothness(state.log_depth, _blurred(inputs.left, sigma))
        l_smooth = _finite("l_smooth", l_smooth, step)
        grad = grad + cfg.smoothness_weight * g_smooth

    l_total = (
        l_lr
        + l_temp
        + cfg.dist_weight * l_dist
        + cfg.smoothness_weight * l_smooth
        + cfg.supervised_weight * l_sup
    )
    l_total = _finite("l_total", l_total, step)
    squared = float(np.sum(grad**2)) + sum(float(g @ g) for g in pose_grads.values())
    grad_norm = _finite("grad_norm", math.sqrt(squared), step)

    report = LossReport(
        step=step,
        l_lr=l_lr,
        l_temp=l_temp,
        l_stat=l_stat,
        l_spat=l_spat,
        l_spat_hard=l_spat_hard,
        l_dist=l_dist,
        l_smooth=l_smooth,
        l_sup=l_sup,
        l_total=l_total,
        grad_norm=grad_norm,
        a_s=None if params is None else params.a_s,
        a_t=None if params is None else params.a_t,
    )
    return Evaluation(report, grad, pose_grads, used)


def _update(name: str, param: np.ndarray, grad: np.ndarray, moments: dict, lr: float, cfg: RefineConfig):
    if cfg.optimizer == "plain-gradient":
        return param - lr * grad
    if cfg.optimizer == "momentum":
        (velocity,) = moments.get(name, (np.zeros_like(param),))
        velocity = cfg.momentum * velocity + grad
        moments[name] = (velocity,)
        return param - lr * velocity
    # bias correction counts this parameter's own updates
    m, v, t = moments.get(name, (np.zeros_like(param), np.zeros_like(param), 0))
    t += 1
    m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad
    v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad**2
    moments[name] = (m, v, t)
    m_hat = m / (1.0 - cfg.beta1**t)
    v_hat = v / (1.0 - cfg.beta2**t)
    return param - lr * m_hat / (np.sqrt(v_hat) + cfg.epsilon)


def step(
    state: RefinerState,
    inputs: RefineInputs,
    cfg: RefineConfig,
    frozen: Optional[FrozenConstants] = None,
    executor: Optional[cf.Executor] = None,
) -> RefinerState:
    """One optimizer update; the appended LossReport describes the state
    before the update. Optimized poses stay put during `cfg.pose_warmup`.

    Raises:
        NumericalFailure: a loss term or the updated field is not finite
    """
    evaluation = total_loss(state, inputs, cfg, frozen, executor)
    lr = cfg.learning_rate_at(state.step_count)
    moments = dict(state.moments)

    log_depth = _update("log_depth", state.log_depth, evaluation.grad, moments, lr, cfg)
    if not np.all(np.isfinite(log_depth)) or not np.all(np.isfinite(np.exp(log_depth))):
        raise NumericalFailure("log_depth", f"update left non-finite depth at step {state.step_count}")

    poses = dict(state.pose_params)
    if cfg.poses_active(state.step_count):
        for offset, params in state.pose_params.items():
            poses[offset] = _update(
                f"pose{offset}", params, evaluation.pose_grads[offset], moments, cfg.pose_learning_rate, cfg
            )
            if not np.all(np.isfinite(poses[offset])):
                raise NumericalFailure(f"pose{offset}", f"non-finite pose at step {state.step_count}")
    elif state.step_count == cfg.pose_warmup - 1:
        log.info(f"Pose warm-up ends after step {state.step_count}")

    report = evaluation.report
    if report.step % cfg.log_every == 0:
        log.debug(
            f"step {report.step}: total={report.l_total:.6g} lr={report.l_lr:.6g} "
            f"temp={report.l_temp:.6g} dist={report.l_dist:.6g} |g|={report.grad_norm:.3g}"
        )
    return RefinerState(log_depth, poses, state.step_count + 1, state.loss_history + (report,), moments)


@dataclass(frozen=True, eq=False)
class RefineResult(object):
    """Attributes:
    depth (DepthMap): exp of the final log-depth
    poses (dict): offset -> final target-to-neighbor transform
    trace (tuple): LossReport per step
    state (RefinerState): final optimizer state
    """

    depth: DepthMap
    poses: Dict[int, RigidTransform]
    trace: Tuple[LossReport, ...]
    state: RefinerState


def refine(
    inputs: RefineInputs,
    cfg: Optional[RefineConfig] = None,
    init: Optional[Union[DepthMap, float]] = None,
    on_step: Optional[Callable[[LossReport], None]] = None,
) -> RefineResult:
    """Initialize and run `cfg.iterations` steps.

    Parameters:
        inputs (RefineInputs): views and expert
        cfg (RefineConfig): settings
        init (DepthMap or float, optional): warm start
        on_step (callable, optional): receives every LossReport as it is made

    Raises:
        ConfigurationError: temporal offsets missing from the inputs
    """
    cfg = cfg or RefineConfig()
    for offset in cfg.temporal_frames:
        inputs.frame(offset)
    state = RefinerState.initial(inputs, cfg, init)
    log.info(
        f"Refining {inputs.shape[1]}x{inputs.shape[0]} for {cfg.iterations} steps "
        f"({cfg.optimizer}, lr={cfg.learning_rate:g}, dist_weight={cfg.dist_weight:g})"
    )
    pool = None
    if cfg.alignment == "ransac" and cfg.dist_weight > 0 and cfg.iterations > 0:
        pool = cf.ThreadPoolExecutor(max_workers=cfg.ransac.workers)
    try:
        for _ in range(cfg.iterations):
            state = step(state, inputs, cfg, executor=pool)
            if on_step is not None:
                on_step(state.loss_history[-1])
    finally:
        if pool is not None:
            pool.shutdown()

    poses = {f.offset: state.pose(f) for f in inputs.temporal if f.offset in cfg.temporal_frames}
    if state.loss_history:
        first, last = state.loss_history[0], state.loss_history[-1]
        log.info(f"Refinement done: l_total {first.l_total:.6g} -> {last.l_total:.6g}")
    return RefineResult(state.depth, poses, state.loss_history, state)
