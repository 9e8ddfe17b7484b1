"""Normal model with unknown mean and variance under the prior 1/sqrt(lambda).

The posterior has closed-form means, ``E(mu|y) = ybar`` and
``E(lambda|y) = ss / (K - 4)``, which makes it a convenient ground truth for
stopping-rule studies.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..distributions import InverseGammaParams, RngStream, draw_inverse_gamma, draw_normal


@dataclass(frozen=True)
class ToyData:
    """Sufficient statistics: ``K`` observations, mean ``y_bar``, ``ss = sum (y - ybar)^2``."""

    K: int
    y_bar: float
    ss: float

    def __post_init__(self):
        if self.K < 5:
            raise ValueError("K must be at least 5")
        if not self.ss > 0:
            raise ValueError("ss must be positive")

    @classmethod
    def from_observations(cls, y) -> "ToyData":
        y = np.asarray(y, dtype=float)
        return cls(K=y.size, y_bar=float(y.mean()), ss=float(((y - y.mean()) ** 2).sum()))


# K = 11, ybar = 1, (K-1)s^2 = 14, so E(mu|y) = 1 and E(lambda|y) = 2.
REFERENCE_TOY = ToyData(K=11, y_bar=1.0, ss=14.0)


@dataclass(frozen=True)
class ToyState:
    mu: float
    lam: float

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lambda must be positive")


def toy_true_means(data: ToyData) -> tuple[float, float]:
    if data.K <= 4:
        raise ValueError("posterior mean of lambda requires K > 4")
    return data.y_bar, data.ss / (data.K - 4)


def toy_gibbs_step(state: ToyState, data: ToyData, stream: RngStream) -> ToyState:
    """One scan: lambda given the current mu, then mu given the new lambda."""
    K = data.K
    scale = 0.5 * (data.ss + K * (data.y_bar - state.mu) ** 2)
    lam = float(draw_inverse_gamma(stream, InverseGammaParams(0.5 * (K - 1), scale)))
    mu = float(draw_normal(stream, data.y_bar, lam / K))
    return ToyState(mu=mu, lam=lam)


def toy_exact_draw(data: ToyData, stream: RngStream) -> ToyState:
    """Independent posterior draw: lambda from its marginal, then mu given lambda."""
    lam = float(draw_inverse_gamma(stream, InverseGammaParams(0.5 * (data.K - 2), 0.5 * data.ss)))
    mu = float(draw_normal(stream, data.y_bar, lam / data.K))
    return ToyState(mu=mu, lam=lam)


def toy_gibbs_chain(mu0: float, data: ToyData, stream: RngStream, n: int):
    """Run ``n`` Gibbs scans from ``mu0``; returns arrays ``(mu, lam)`` of the new states.

    Randomness is drawn in two blocks (all gamma variates, then all normal
    variates), so the result differs draw-by-draw from ``n`` calls of
    :func:`toy_gibbs_step` but has the same law.
    """
    K, yb, ss = data.K, data.y_bar, data.ss
    g = stream.standard_gamma(0.5 * (K - 1), n).tolist()
    z = stream.standard_normal(n).tolist()
    mus = [0.0] * n
    lams = [0.0] * n
    mu = float(mu0)
    sqrt_inv_k = 1.0 / math.sqrt(K)
    for i in range(n):
        d = yb - mu
        lam = 0.5 * (ss + K * d * d) / g[i]
        mu = yb + math.sqrt(lam) * sqrt_inv_k * z[i]
        mus[i] = mu
        lams[i] = lam
    return np.array(mus), np.array(lams)


class ToyGibbsChain:
    """Growable Gibbs chain holding its own stream and full history."""

    def __init__(self, data: ToyData, stream: RngStream, mu0: float, lam0: float | None = None):
        self.data = data
        self.stream = stream
        # a start lambda is only recorded when given; the scan never reads it
        self.mu = [float(mu0)] if lam0 is not None else []
        self.lam = [float(lam0)] if lam0 is not None else []
        self._mu_now = float(mu0)

    def __len__(self) -> int:
        return len(self.mu)

    def extend_to(self, n: int) -> None:
        k = n - len(self.mu)
        if k <= 0:
            return
        mus, lams = toy_gibbs_chain(self._mu_now, self.data, self.stream, k)
        self.mu.extend(mus.tolist())
        self.lam.extend(lams.tolist())
        self._mu_now = self.mu[-1]

    def arrays(self) -> np.ndarray:
        """Draws as an array of shape ``(n, 2)`` with columns ``(mu, lambda)``."""
        return np.column_stack([self.mu, self.lam])
