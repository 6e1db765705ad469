"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tensor import Tensor

DEFAULT_STEP = 1e-5
DEFAULT_TOLERANCE = 1e-4
# below this magnitude gradients are compared absolutely
ABS_FLOOR = 1e-6


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = ABS_FLOOR,
                   resolution: float = 0.0) -> float:
    """Max over entries of |a - n| / max(|a|, |n|, floor).

    Differences no larger than ``resolution`` (the rounding noise of the
    finite difference itself) count as exact agreement.
    """
    a = np.asarray(analytic, dtype=np.float64)
    n = np.asarray(numeric, dtype=np.float64)
    if a.size == 0:
        return 0.0
    diff = np.abs(a - n)
    diff[diff <= resolution] = 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
    return float(np.max(diff / denom))


def difference_resolution(loss_value: float, h: float = DEFAULT_STEP) -> float:
    """Smallest derivative a central difference can resolve at this loss scale."""
    return 10.0 * np.finfo(np.float64).eps * max(abs(loss_value), 1.0) / h


def numerical_gradient(
    loss_fn: Callable[[], Tensor],
    tensor: Tensor,
    indices: np.ndarray | None = None,
    h: float = DEFAULT_STEP,
) -> np.ndarray:
    """Central differences of ``loss_fn()`` w.r.t. the flat entries ``indices`` of ``tensor``."""
    flat = tensor.data.reshape(-1)
    if indices is None:
        indices = np.arange(flat.size)
    out = np.empty(len(indices))
    for j, i in enumerate(indices):
        orig = flat[i]
        flat[i] = orig + h
        plus = loss_fn().item()
        flat[i] = orig - h
        minus = loss_fn().item()
        flat[i] = orig
        out[j] = (plus - minus) / (2.0 * h)
    return out


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Mapping[str, Tensor],
    h: float = DEFAULT_STEP,
    max_entries: int | None = None,
    seed: int = 0,
) -> dict[str, float]:
    """Compare backprop gradients with central differences.

    Returns the max relative error per named tensor.  When ``max_entries``
    is set, at most that many randomly chosen coordinates of each tensor
    are probed.
    """
    for p in params.values():
        p.grad = None
    loss = loss_fn()
    loss.backward()
    resolution = difference_resolution(loss.item(), h)
    analytic = {name: (p.grad if p.grad is not None else np.zeros(p.shape)).reshape(-1).copy()
                for name, p in params.items()}
    rng = np.random.default_rng(seed)
    errors = {}
    for name, p in params.items():
        n = p.size
        if max_entries is not None and n > max_entries:
            idx = np.sort(rng.choice(n, size=max_entries, replace=False))
        else:
            idx = np.arange(n)
        numeric = numerical_gradient(loss_fn, p, idx, h)
        errors[name] = relative_error(analytic[name][idx], numeric, resolution=resolution)
    return errors
