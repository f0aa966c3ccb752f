# Standard packages
import hashlib
import logging
import math
from pathlib import Path
from typing import Callable, Iterable, Optional, Union

# Third-party packages
import numpy as np
from scipy import ndimage

# Local packages
from depthdistill.core.errors import DomainError, EmptyDomainError

log = logging.getLogger(__name__)


def _reflect_index(n: int, r: int) -> np.ndarray:
    """Source index for every position of an axis padded by `r` on both
    sides, mirroring without repeating the edge sample (numpy "reflect").
    """
    if n <= r:
        raise DomainError(f"Axis of length {n} is too short to reflect-pad by {r}")
    idx = np.abs(np.arange(-r, n + r))
    return np.where(idx > n - 1, 2 * (n - 1) - idx, idx)


def pad_reflect(x: np.ndarray, ry: int, rx: int) -> np.ndarray:
    """Reflect-pad the first two axes of `x`."""
    x = np.take(x, _reflect_index(x.shape[0], ry), axis=0)
    return np.take(x, _reflect_index(x.shape[1], rx), axis=1)


def _fold_axis(g: np.ndarray, idx: np.ndarray, n: int, axis: int) -> np.ndarray:
    gm = np.moveaxis(g, axis, 0)
    out = np.zeros((n,) + gm.shape[1:], dtype=g.dtype)
    np.add.at(out, idx, gm)
    return np.moveaxis(out, 0, axis)


def pad_reflect_adjoint(g: np.ndarray, ry: int, rx: int, shape: tuple) -> np.ndarray:
    """Adjoint of `pad_reflect`: fold padded gradients back onto the
    unpadded grid of `shape`.
    """
    h, w = shape[0], shape[1]
    g = _fold_axis(g, _reflect_index(w, rx), w, axis=1)
    return _fold_axis(g, _reflect_index(h, ry), h, axis=0)


def _kernel_for(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    if x.ndim == 3:
        return kernel[:, :, None]
    return kernel


def correlate2d(x: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Correlate the first two axes of `x` with an odd-sized 2-D kernel
    using reflect padding. Trailing channel axes are filtered independently.

    Parameters:
        x (ndarray): (H, W) or (H, W, C) grid
        kernel (ndarray): (kh, kw) kernel with odd sides

    Returns:
        ndarray: filtered grid, same shape as `x`
    """
    kh, kw = kernel.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise DomainError(f"Kernel sides must be odd, got {kernel.shape}")
    ry, rx = kh // 2, kw // 2
    padded = pad_reflect(np.asarray(x, dtype=np.float64), ry, rx)
    full = ndimage.correlate(padded, _kernel_for(padded, kernel), mode="constant")
    return full[ry : ry + x.shape[0], rx : rx + x.shape[1]]


def correlate2d_adjoint(g: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    """Adjoint (vector-Jacobian product) of `correlate2d` for upstream
    gradient `g`.
    """
    kh, kw = kernel.shape
    ry, rx = kh // 2, kw // 2
    h, w = g.shape[0], g.shape[1]
    embedded = np.zeros((h + 2 * ry, w + 2 * rx) + g.shape[2:], dtype=np.float64)
    embedded[ry : ry + h, rx : rx + w] = g
    spread = ndimage.convolve(embedded, _kernel_for(embedded, kernel), mode="constant")
    return pad_reflect_adjoint(spread, ry, rx, g.shape)


def box_kernel(window: int) -> np.ndarray:
    return np.full((window, window), 1.0 / (window * window))


def quantile_nearest_rank(values: np.ndarray, q: float) -> float:
    """Nearest-rank (ceiling) quantile: the ceil(q*n)-th smallest value.

    Raises:
        DomainError: q outside (0, 1)
        EmptyDomainError: no values
    """
    if not 0.0 < q < 1.0:
        raise DomainError(f"Quantile must lie in (0, 1), got {q}")
    values = np.asarray(values, dtype=np.float64).ravel()
    n = values.size
    if n == 0:
        raise EmptyDomainError("Quantile of an empty set")
    # guard against q*n landing a hair above an integer
    k = min(max(math.ceil(q * n - 1e-9), 1), n)
    return float(np.partition(values, k - 1)[k - 1])


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def central_difference(
    func: Callable[[np.ndarray], float],
    x: np.ndarray,
    eps: Union[float, np.ndarray] = 1e-6,
    indices: Optional[Iterable[int]] = None,
) -> np.ndarray:
    """Central finite-difference gradient of a scalar function.

    Parameters:
        func (callable): maps an array shaped like `x` to a float
        x (ndarray): evaluation point
        eps (float or ndarray): step, scalar or per-element
        indices (iterable): flat indices to differentiate (default: all)

    Returns:
        ndarray: derivatives in the order of `indices`
    """
    x0 = np.array(x, dtype=np.float64)
    if indices is None:
        indices = range(x0.size)
    indices = list(indices)
    steps = np.broadcast_to(np.asarray(eps, dtype=np.float64), x0.shape)
    log.debug(f"Central differences over {len(indices)} coordinates")

    grad = np.zeros(len(indices))
    for j, i in enumerate(indices):
        h = float(steps.flat[i])
        x = x0.copy()
        x.flat[i] = x0.flat[i] + h
        fplus = func(x)
        x.flat[i] = x0.flat[i] - h
        fminus = func(x)
        grad[j] = (fplus - fminus) / (2 * h)
    return grad


def relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-30) -> np.ndarray:
    """Elementwise |a - b| / max(|a|, |b|, floor)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
