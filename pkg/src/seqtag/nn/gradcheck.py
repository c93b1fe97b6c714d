"""Central finite differences for checking hand-derived gradients."""
from __future__ import annotations

from typing import Callable

import numpy as np

DEFAULT_STEP = 1e-5
# entries whose gradients are both below this are compared absolutely
DEFAULT_FLOOR = 1e-6


def numerical_gradient(f: Callable[[], float], x: np.ndarray, h: float = DEFAULT_STEP,
                       indices=None) -> np.ndarray:
    """d f / d x by perturbing ``x`` in place; ``f`` must read ``x``.

    ``indices`` restricts the estimate to those index tuples (others stay 0).
    """
    grad = np.zeros_like(x)
    if indices is None:
        indices = np.ndindex(x.shape)
    for idx in indices:
        idx = tuple(int(i) for i in idx)
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = DEFAULT_FLOOR) -> float:
    """Max over entries of |a - n| / max(|a|, |n|, floor)."""
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    if analytic.shape != numeric.shape:
        raise ValueError(f"shape mismatch {analytic.shape} vs {numeric.shape}")
    if analytic.size == 0:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return float(np.max(np.abs(analytic - numeric) / denom))


def sample_indices(shape, n: int, rng: np.random.Generator) -> list[tuple]:
    size = int(np.prod(shape))
    flat = rng.choice(size, size=min(n, size), replace=False)
    return [np.unravel_index(i, shape) for i in flat]


def check_gradients(f: Callable[[], float], params: dict, analytic: dict,
                    h: float = DEFAULT_STEP, max_entries: int | None = None,
                    rng: np.random.Generator | None = None) -> dict:
    """Relative error per named array. ``f`` must close over ``params``.

    With ``max_entries`` only a random sample of that many coordinates per
    array is compared.
    """
    out = {}
    for name in analytic:
        x = params[name]
        if max_entries is None or x.size <= max_entries:
            out[name] = relative_error(analytic[name], numerical_gradient(f, x, h))
            continue
        idx = sample_indices(x.shape, max_entries, rng or np.random.default_rng(0))
        num = numerical_gradient(f, x, h, idx)
        rows = tuple(np.array(idx).T)
        out[name] = relative_error(np.asarray(analytic[name])[rows], num[rows])
    return out
