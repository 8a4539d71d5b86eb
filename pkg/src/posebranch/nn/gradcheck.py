"""Central finite differences for checking backward passes."""
from __future__ import annotations

import numpy as np


def numerical_gradient(f, x: np.ndarray, h: float = 1e-4, indices=None) -> np.ndarray:
    """Central-difference gradient of scalar ``f()`` w.r.t. ``x`` (perturbed in place).

    Only ``indices`` (flat) are evaluated when given; other entries stay zero.
    """
    grad = np.zeros_like(x)
    flat, gflat = x.reshape(-1), grad.reshape(-1)
    for i in range(flat.size) if indices is None else indices:
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * h)
    return grad


def max_relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-3) -> float:
    """max_i |a_i - n_i| / max(|a_i|, |n_i|, floor * max|n|).

    The floor keeps entries whose true gradient is essentially zero from
    dominating through round-off.
    """
    a, n = np.asarray(analytic).ravel(), np.asarray(numeric).ravel()
    scale = max(float(np.abs(n).max(initial=0.0)), float(np.abs(a).max(initial=0.0)))
    if scale == 0.0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor * scale)
    return float(np.max(np.abs(a - n) / denom))
