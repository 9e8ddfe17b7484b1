"""Corrected potential scale reduction factor and its 97.5% upper bound.

The variance of the pooled estimate ``V_hat`` follows the usual Gelman-Rubin
companion formula (as in R's coda), built from the across-chain sample
variance of the ``s_j**2`` and their sample covariances with the chain means.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ._validation import check_chains
from .distributions import f_quantile
from .traces import MultiChainTrace

# "standard": d = 2 V^2 / var(V). "printed": d = 2 V / var(V).
DF_RULES = ("standard", "printed")
# "plain": w = 2 W^2 / sigma2_W. "coda": w = 2 W^2 / (sigma2_W / m).
W_DF_RULES = ("plain", "coda")


class DegenerateVarianceError(ValueError):
    """Every chain is constant, so the within-chain variance is zero."""


@dataclass(frozen=True)
class PsrfReport:
    m: int
    l: int  # noqa: E741
    B: float
    W: float
    V_hat: float
    var_V_hat: float
    d: float
    R_hat: float
    sigma2_W: float
    w: float
    R_upper: float


def _between_within(arr: np.ndarray):
    m, l = arr.shape
    if m < 2 or l < 2:
        raise ValueError("need m >= 2 chains of length >= 2")
    means = arr.mean(axis=1)
    svars = arr.var(axis=1, ddof=1)
    grand = means.mean()
    B = l / (m - 1) * float(((means - grand) ** 2).sum())
    W = float(svars.mean())
    if W <= 0:
        raise DegenerateVarianceError("degenerate within-chain variance")
    return B, W, means, svars


def between_within(multi):
    """Between-chain ``B``, within-chain ``W``, chain means and chain variances."""
    arr = multi.to_array() if isinstance(multi, MultiChainTrace) else np.asarray(multi, float)
    return _between_within(arr)


def _sample_cov(x: np.ndarray, y: np.ndarray) -> float:
    return float(((x - x.mean()) * (y - y.mean())).sum() / (x.size - 1))


def _correction(d: float) -> float:
    if not math.isfinite(d) or d <= 0:
        return 1.0
    return (d + 3.0) / (d + 1.0)


def _upper(m, l, B, W, d, w, quantile=0.975):
    fq = f_quantile(quantile, m - 1, w)
    return math.sqrt(_correction(d) * ((l - 1) / l + fq * (m + 1) / (m * l) * B / W))


def _psrf_array(arr: np.ndarray, df_rule="standard", w_rule="plain", quantile=0.975) -> PsrfReport:
    m, l = arr.shape
    B, W, means, svars = _between_within(arr)
    grand = means.mean()
    V = (l - 1) / l * W + (m + 1) * B / (m * l)
    sigma2_W = float(((svars - W) ** 2).sum() / (m - 1))
    cov_term = _sample_cov(svars, means**2) - 2.0 * grand * _sample_cov(svars, means)
    var_V = float(((l - 1) / l) ** 2 * sigma2_W / m
                  + ((m + 1) / (m * l)) ** 2 * 2.0 / (m - 1) * B**2
                  + 2.0 * (m + 1) * (l - 1) / (m * l**2) * (l / m) * cov_term)
    if var_V > 0:
        d = 2.0 * V**2 / var_V if df_rule == "standard" else 2.0 * V / var_V
    else:
        d = math.inf
    R_hat = math.sqrt(_correction(d) * V / W)
    if w_rule == "plain":
        w = 2.0 * W**2 / sigma2_W if sigma2_W > 0 else math.inf
    else:
        w = 2.0 * W**2 / (sigma2_W / m) if sigma2_W > 0 else math.inf
    R_upper = _upper(m, l, B, W, d, w, quantile)
    return PsrfReport(m=m, l=l, B=B, W=W, V_hat=V, var_V_hat=var_V, d=d, R_hat=R_hat,
                      sigma2_W=sigma2_W, w=w, R_upper=R_upper)


def psrf(multi, df_rule: str = "standard", w_rule: str = "plain",
         quantile: float = 0.975) -> PsrfReport:
    """Full potential scale reduction report for one functional.

    ``multi`` is a :class:`MultiChainTrace` or an array of shape ``(m, l)``;
    no draws are discarded here.
    """
    if df_rule not in DF_RULES:
        raise ValueError(f"df_rule must be one of {DF_RULES}")
    if w_rule not in W_DF_RULES:
        raise ValueError(f"w_rule must be one of {W_DF_RULES}")
    arr = multi.to_array() if isinstance(multi, MultiChainTrace) else np.asarray(multi, float)
    return _psrf_array(arr, df_rule, w_rule, quantile)


def psrf_upper(report: PsrfReport, quantile: float = 0.975) -> float:
    """Upper bound on R_hat using the F quantile with ``(m-1, w)`` degrees of freedom."""
    return _upper(report.m, report.l, report.B, report.W, report.d, report.w, quantile)


class GelmanRubin(BaseEstimator):
    """Gelman-Rubin diagnostic over parallel chains.

    ``fit`` takes draws shaped ``(m, length)`` or ``(m, length, n_functionals)``.
    With ``discard_first_half`` the first ``ceil(length/2)`` draws of every
    chain are dropped first.

    Attributes
    ----------
    reports_ : list of PsrfReport
    rhat_ : ndarray of shape (n_functionals,)
    rhat_upper_ : ndarray of shape (n_functionals,)
    """

    def __init__(self, discard_first_half: bool = True, quantile: float = 0.975,
                 df_rule: str = "standard", w_rule: str = "plain"):
        self.discard_first_half = discard_first_half
        self.quantile = quantile
        self.df_rule = df_rule
        self.w_rule = w_rule

    def fit(self, X, y=None):
        arr = check_chains(X, min_length=4 if self.discard_first_half else 2)
        if self.discard_first_half:
            L = arr.shape[1]
            arr = arr[:, L - L // 2:, :]
        self.n_features_in_ = arr.shape[2]
        self.reports_ = [psrf(arr[:, :, j], self.df_rule, self.w_rule, self.quantile)
                         for j in range(arr.shape[2])]
        self.rhat_ = np.array([r.R_hat for r in self.reports_])
        self.rhat_upper_ = np.array([r.R_upper for r in self.reports_])
        return self

    def converged(self, delta: float = 1.1) -> np.ndarray:
        check_is_fitted(self, "reports_")
        return self.rhat_upper_ <= delta
