# Standard packages
import logging
from dataclasses import asdict, dataclass
from typing import Optional, Tuple, Union

# Third-party packages
import numpy as np

# Local packages
from depthdistill.core.errors import DegenerateFitError, DomainError, EmptyDomainError
from depthdistill.core.grids import DepthMap

log = logging.getLogger(__name__)

DELTA_BASE = 1.25

# (label, attribute, higher is better)
COLUMNS = (
    ("MAE", "mae", False),
    ("AbsRel", "abs_rel", False),
    ("SqRel", "sq_rel", False),
    ("RMSE", "rmse", False),
    ("RMSE_log", "rmse_log", False),
    ("log10", "log10", False),
    ("d1", "delta1", True),
    ("d2", "delta2", True),
    ("d3", "delta3", True),
)


@dataclass(frozen=True)
class DepthMetrics(object):
    """Error and accuracy metrics over jointly valid pixels.

    Accuracies (`delta1`..`delta3`) are fractions in [0, 1].
    """

    mae: float
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    log10: float
    delta1: float
    delta2: float
    delta3: float
    count: int

    def as_record(self) -> dict:
        return asdict(self)

    def format_table(self) -> str:
        header = " ".join(f"{label:>9}" for label, _, _ in COLUMNS)
        row = " ".join(f"{getattr(self, attr):9.4f}" for _, attr, _ in COLUMNS)
        return f"{header}\n{row}"

    def __str__(self):
        return self.format_table()


def _pair(pred: Union[DepthMap, np.ndarray], gt: Union[DepthMap, np.ndarray]):
    pred = pred if isinstance(pred, DepthMap) else DepthMap(pred)
    gt = gt if isinstance(gt, DepthMap) else DepthMap(gt)
    if pred.shape != gt.shape:
        raise DomainError(f"Prediction shape {pred.shape} does not match ground truth {gt.shape}")
    return pred, gt


def joint_mask(pred: DepthMap, gt: DepthMap, cap: Optional[float] = None) -> np.ndarray:
    with np.errstate(invalid="ignore"):
        mask = pred.valid & gt.valid & (gt.data > 0) & (pred.data > 0)
        if cap is not None:
            mask &= gt.data <= cap
    return mask


def depth_metrics(
    pred: Union[DepthMap, np.ndarray],
    gt: Union[DepthMap, np.ndarray],
    cap: Optional[float] = None,
    mask: Optional[np.ndarray] = None,
) -> DepthMetrics:
    """Standard depth error and accuracy metrics.

    Parameters:
        pred (DepthMap): predicted depth in meters
        gt (DepthMap): ground-truth depth in meters
        cap (float, optional): ignore ground truth beyond this depth
        mask (ndarray, optional): further restrict the evaluated pixels

    Returns:
        DepthMetrics

    Raises:
        DomainError: shape mismatch
        EmptyDomainError: no jointly valid pixel

    Example:

        >>> m = depth_metrics(np.array([[2.0]]), np.array([[1.0]]))
        >>> m.abs_rel, m.delta3
        (1.0, 0.0)
    """
    pred, gt = _pair(pred, gt)
    keep = joint_mask(pred, gt, cap)
    if mask is not None:
        keep &= np.asarray(mask, dtype=bool)
    if not keep.any():
        raise EmptyDomainError("No jointly valid pixels to evaluate")

    p = pred.data[keep]
    g = gt.data[keep]
    diff = p - g
    ratio = np.maximum(p / g, g / p)
    return DepthMetrics(
        mae=float(np.mean(np.abs(diff))),
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff**2 / g)),
        rmse=float(np.sqrt(np.mean(diff**2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        log10=float(np.mean(np.abs(np.log10(p) - np.log10(g)))),
        delta1=float(np.mean(ratio < DELTA_BASE)),
        delta2=float(np.mean(ratio < DELTA_BASE**2)),
        delta3=float(np.mean(ratio < DELTA_BASE**3)),
        count=int(keep.sum()),
    )


def median_scale(
    pred: Union[DepthMap, np.ndarray], gt: Union[DepthMap, np.ndarray]
) -> Tuple[DepthMap, float]:
    """Rescale a prediction by ``median(gt) / median(pred)``.

    Raises:
        EmptyDomainError: no jointly valid pixel
        DegenerateFitError: median of the prediction is 0
    """
    pred, gt = _pair(pred, gt)
    keep = pred.valid & gt.valid
    if not keep.any():
        raise EmptyDomainError("No jointly valid pixels for median scaling")
    med_pred = float(np.median(pred.data[keep]))
    if med_pred == 0:
        raise DegenerateFitError("Median of the prediction is zero")
    factor = float(np.median(gt.data[keep])) / med_pred
    log.debug(f"Median scaling factor {factor:.6g}")
    return DepthMap(pred.data * factor, pred.valid), factor


def boundary_disagreement(hard_a: np.ndarray, hard_b: np.ndarray, valid: Optional[np.ndarray] = None) -> float:
    """Fraction of pixels where two hard boundary maps disagree."""
    hard_a = np.asarray(hard_a)
    hard_b = np.asarray(hard_b)
    if hard_a.shape != hard_b.shape:
        raise DomainError(f"Boundary maps differ in shape: {hard_a.shape} vs {hard_b.shape}")
    differ = hard_a != hard_b
    if valid is not None:
        if not np.any(valid):
            raise EmptyDomainError("No valid pixels to compare boundaries over")
        return float(differ[valid].mean())
    return float(differ.mean())
