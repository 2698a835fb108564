from __future__ import annotations

from typing import Callable

import numpy as np

from ..errors import NonFiniteError


def numeric_gradient(f: Callable[[np.ndarray], float], theta0: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of a scalar function, one coordinate at a time."""
    theta = np.array(theta0, dtype=np.float64)
    out = np.zeros_like(theta)
    flat, gflat = theta.reshape(-1), out.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = float(f(theta))
        flat[i] = orig - h
        fm = float(f(theta))
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"f is not finite around coordinate {i}")
        gflat[i] = (fp - fm) / (2.0 * h)
    return out


def grad_check(f: Callable[[np.ndarray], float], analytic: np.ndarray, theta0: np.ndarray,
               h: float = 1e-5) -> float:
    """Max over coordinates of |a - n| / max(1, |a|, |n|)."""
    numeric = numeric_gradient(f, theta0, h)
    a = np.asarray(analytic, dtype=np.float64).reshape(numeric.shape)
    denom = np.maximum(1.0, np.maximum(np.abs(a), np.abs(numeric)))
    return float(np.max(np.abs(a - numeric) / denom)) if a.size else 0.0
