import numpy as np


def finite_difference(f, params: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f()`` w.r.t. ``params`` (perturbed in place)."""
    grad = np.zeros_like(params)
    for i in range(params.size):
        old = params[i]
        params[i] = old + h
        up = f()
        params[i] = old - h
        down = f()
        params[i] = old
        grad[i] = (up - down) / (2 * h)
    return grad


def max_rel_error(a, b):
    """Largest elementwise ``|a - b| / max(|a|, |b|)``; entries where both are zero count as exact."""
    a, b = np.asarray(a), np.asarray(b)
    floor = np.finfo(float).tiny
    return float(np.max(np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)))
