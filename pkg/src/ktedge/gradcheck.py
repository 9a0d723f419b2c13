"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable

import numpy as np


def finite_diff_check(f: Callable[[np.ndarray], float], analytic: np.ndarray,
                      x: np.ndarray, eps: float = 1e-4) -> float:
    """Max relative error between `analytic` and the central difference of `f`.

    `f` must be a scalar-valued function of `x`; `analytic` is the gradient
    claimed by a backward pass. Error per element is
    |a - n| / max(|a|, |n|, 1e-8). Run in 64-bit for meaningful results.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    x = np.asarray(x, dtype=np.float64)
    numeric = np.empty_like(x)
    flat = x.reshape(-1)
    num_flat = numeric.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = f(x)
        flat[i] = orig - eps
        fm = f(x)
        flat[i] = orig
        num_flat[i] = (fp - fm) / (2.0 * eps)
    a = np.asarray(analytic, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(numeric)), 1e-8)
    return float(np.max(np.abs(a - numeric) / denom))
