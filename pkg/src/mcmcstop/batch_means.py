"""Consistent batch means (CBM) standard errors and significant-figure checks.

With ``n`` draws the batch size is ``b = floor(n**theta)`` and the batch count
``a = floor(n / b)``; both grow with the run so the variance estimate is
consistent for the asymptotic variance of the ergodic average.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import check_draws
from .distributions import student_t_quantile

MAX_SIGNIFICANT_FIGURES = 15


@dataclass(frozen=True)
class CbmOptions:
    theta: float = 0.5
    confidence: float = 0.95

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError("theta must lie in (0, 1)")
        if not 0 < self.confidence < 1:
            raise ValueError("confidence must lie in (0, 1)")


@dataclass(frozen=True)
class CbmEstimate:
    n: int
    a: int
    b: int
    sigma2_hat: float
    point: float
    mcse: float
    half_width: float
    confidence: float = 0.95

    @property
    def df(self) -> int:
        return self.a - 1


def batch_layout(n: int, theta: float = 0.5) -> tuple[int, int]:
    """Return ``(a, b)``: batch count and batch size for ``n`` draws."""
    if not 0 < theta < 1:
        raise ValueError("theta must lie in (0, 1)")
    n = int(n)
    if n < 4:
        raise ValueError("insufficient draws for batching")
    if theta == 0.5:
        b = math.isqrt(n)
    else:
        x = n**theta
        b = math.floor(x)
        # n**theta can land just below an exact integer root
        if round(x) > b and round(x) - x < 1e-9 * x:
            b = round(x)
    b = max(b, 1)
    a = n // b
    if a < 2:
        raise ValueError("insufficient draws for batching")
    return a, b


def _t_multiplier(confidence: float, df: int) -> float:
    return student_t_quantile(1.0 - (1.0 - confidence) / 2.0, df)


def _cbm_arrays(X: np.ndarray, theta: float):
    """Vectorised core over the columns of ``X`` (shape ``(n, p)``)."""
    n = X.shape[0]
    a, b = batch_layout(n, theta)
    head = X[: a * b]
    batch_means = head.reshape(a, b, -1).mean(axis=1)
    centre = batch_means.mean(axis=0)
    sigma2 = b / (a - 1) * ((batch_means - centre) ** 2).sum(axis=0)
    point = X.mean(axis=0)
    return a, b, batch_means, sigma2, point


def cbm_variance(trace, opts: CbmOptions | None = None) -> CbmEstimate:
    """Batch means estimate of the asymptotic variance for one functional.

    Batches cover the first ``a*b`` draws and are centred on the mean of those
    draws; the point estimate and ``sqrt(n)`` in the standard error use all
    ``n`` draws.
    """
    opts = opts or CbmOptions()
    X = check_draws(trace)
    if X.shape[1] != 1:
        raise ValueError("cbm_variance expects a single functional")
    a, b, _, sigma2, point = _cbm_arrays(X, opts.theta)
    n = X.shape[0]
    s2 = float(sigma2[0])
    mcse = math.sqrt(s2 / n)
    return CbmEstimate(n=n, a=a, b=b, sigma2_hat=s2, point=float(point[0]), mcse=mcse,
                       half_width=_t_multiplier(opts.confidence, a - 1) * mcse,
                       confidence=opts.confidence)


def half_width(estimate: CbmEstimate, confidence: float | None = None) -> float:
    """``t_{a-1} * sigma_hat / sqrt(n)`` for the estimate's confidence level."""
    if estimate.a < 2:
        raise ValueError("need at least 2 batches")
    conf = estimate.confidence if confidence is None else confidence
    return _t_multiplier(conf, estimate.a - 1) * math.sqrt(estimate.sigma2_hat / estimate.n)


def significant_figures(point: float, half_width: float) -> int:
    """Number of significant figures of ``point`` that the interval supports.

    The interval ``point +/- half_width`` must sit inside the rounding bracket
    of ``point`` at ``k`` figures, e.g. 0.02 +/- h needs [0.015, 0.025] for one
    figure. Zero estimates only earn figures when ``half_width`` is 0.
    """
    if not math.isfinite(point):
        raise ValueError("point must be finite")
    if half_width < 0:
        raise ValueError("half_width must be non-negative")
    if half_width == 0:
        return MAX_SIGNIFICANT_FIGURES
    if point == 0:
        return 0
    lo, hi = point - half_width, point + half_width
    exponent = math.floor(math.log10(abs(point)))
    best = 0
    for k in range(1, MAX_SIGNIFICANT_FIGURES + 1):
        unit = 10.0 ** (exponent - k + 1)
        r = round(point, k - 1 - exponent)
        if r - unit / 2 <= lo and hi <= r + unit / 2:
            best = k
    return best


class BatchMeans(TransformerMixin, BaseEstimator):
    """Estimator wrapper around consistent batch means.

    Parameters
    ----------
    theta : float, default 0.5
        Batch size exponent, ``b = floor(n**theta)``.
    confidence : float, default 0.95
        Confidence level of the reported half-widths.

    Attributes
    ----------
    mean_ : ndarray of shape (n_functionals,)
    sigma2_ : ndarray of shape (n_functionals,)
        Batch means estimate of the asymptotic variance.
    mcse_ : ndarray of shape (n_functionals,)
    half_width_ : ndarray of shape (n_functionals,)
    n_draws_, batch_size_, n_batches_ : int
    """

    def __init__(self, theta: float = 0.5, confidence: float = 0.95):
        self.theta = theta
        self.confidence = confidence

    def fit(self, X, y=None):
        opts = CbmOptions(self.theta, self.confidence)
        X = check_draws(X)
        a, b, _, sigma2, point = _cbm_arrays(X, opts.theta)
        n = X.shape[0]
        self.n_draws_ = n
        self.n_batches_ = a
        self.batch_size_ = b
        self.n_features_in_ = X.shape[1]
        self.mean_ = point
        self.sigma2_ = sigma2
        self.mcse_ = np.sqrt(sigma2 / n)
        self.half_width_ = _t_multiplier(opts.confidence, a - 1) * self.mcse_
        return self

    def transform(self, X):
        """Return the batch means of ``X``, shape ``(a, n_functionals)``."""
        check_is_fitted(self, "mean_")
        X = check_draws(X)
        return _cbm_arrays(X, self.theta)[2]

    def estimates(self) -> list[CbmEstimate]:
        check_is_fitted(self, "mean_")
        return [
            CbmEstimate(n=self.n_draws_, a=self.n_batches_, b=self.batch_size_,
                        sigma2_hat=float(s), point=float(p), mcse=float(m),
                        half_width=float(h), confidence=self.confidence)
            for s, p, m, h in zip(self.sigma2_, self.mean_, self.mcse_, self.half_width_)
        ]

    def significant_figures(self) -> np.ndarray:
        check_is_fitted(self, "mean_")
        return np.array([significant_figures(p, h) for p, h in zip(self.mean_, self.half_width_)])
