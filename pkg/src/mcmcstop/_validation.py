"""Input checks shared by the estimators."""
from __future__ import annotations

import numpy as np
from sklearn.utils import check_array

from .traces import MultiChainTrace, ScalarTrace


def check_draws(X, min_draws: int = 1) -> np.ndarray:
    """Return draws as a finite float array of shape ``(n_draws, n_functionals)``."""
    if isinstance(X, ScalarTrace):
        X = X.values
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    X = check_array(X, dtype=float, ensure_all_finite=True, ensure_min_samples=1)
    if X.shape[0] < min_draws:
        raise ValueError(f"need at least {min_draws} draws, got {X.shape[0]}")
    return X


def check_chains(X, min_length: int = 2) -> np.ndarray:
    """Return parallel-chain draws as an array of shape ``(m, length, n_functionals)``.

    Accepts a :class:`MultiChainTrace`, a sequence of those (one per
    functional), or array-likes of shape ``(m, length)`` / ``(m, length, p)``.
    """
    if isinstance(X, MultiChainTrace):
        arr = X.to_array()[:, :, None]
    elif isinstance(X, (list, tuple)) and X and all(isinstance(t, MultiChainTrace) for t in X):
        arr = np.stack([t.to_array() for t in X], axis=-1)
    else:
        arr = np.asarray(X, dtype=float)
        if arr.ndim == 2:
            arr = arr[:, :, None]
    if arr.ndim != 3:
        raise ValueError("chains must have shape (m, length) or (m, length, p)")
    if arr.shape[0] < 2:
        raise ValueError("at least 2 chains are required")
    if arr.shape[1] < min_length:
        raise ValueError(f"chains must have at least {min_length} draws")
    if not np.all(np.isfinite(arr)):
        raise ValueError("chains contain non-finite values")
    return arr
