"""Seedable random streams, the samplers built on them, and t/F quantiles.

Streams are keyed by ``(seed, stream_id)`` through :class:`numpy.random.SeedSequence`
spawn keys, so any number of streams can be derived from one master seed
without overlap. Replication ``r`` and chain ``c`` use
``stream_id = r * MAX_CHAINS + c``; ids from ``RESERVED_BASE`` upwards are kept
for auxiliary draws (starting values, synthetic data, pilot runs).
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import optimize, special

MAX_CHAINS = 16
RESERVED_BASE = 2**40
START_STREAM = RESERVED_BASE + 1
DATA_STREAM = RESERVED_BASE + 2
PILOT_STREAM = RESERVED_BASE + 3


def stream_id_for(rep: int, chain: int = 0) -> int:
    if not 0 <= chain < MAX_CHAINS:
        raise ValueError(f"chain index must be in [0, {MAX_CHAINS})")
    if rep < 0:
        raise ValueError("replication id must be non-negative")
    return rep * MAX_CHAINS + chain


class RngStream:
    """One independent random stream, owned by a single worker at a time."""

    def __init__(self, seed: int, stream_id: int = 0):
        if stream_id < 0:
            raise ValueError("stream_id must be >= 0")
        self.seed = int(seed)
        self.stream_id = int(stream_id)
        ss = np.random.SeedSequence(self.seed, spawn_key=(self.stream_id,))
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def uniform(self, size=None):
        return self.generator.random(size)

    def standard_normal(self, size=None):
        return self.generator.standard_normal(size)

    def standard_gamma(self, shape: float, size=None):
        return self.generator.standard_gamma(shape, size)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


@dataclass(frozen=True)
class InverseGammaParams:
    """IG(shape, scale) with density proportional to ``w**-(shape+1) * exp(-scale/w)``."""

    shape: float
    scale: float

    def __post_init__(self):
        if not (self.shape > 0 and self.scale > 0):
            raise ValueError("inverse gamma parameters must be positive")

    def mean(self) -> float:
        if self.shape <= 1:
            return math.inf
        return self.scale / (self.shape - 1)

    def logpdf(self, w):
        w = np.asarray(w, dtype=float)
        a, b = self.shape, self.scale
        with np.errstate(divide="ignore", invalid="ignore"):
            out = a * math.log(b) - special.gammaln(a) - (a + 1) * np.log(w) - b / w
        return np.where(w > 0, out, -np.inf)


def draw_normal(stream: RngStream, mean: float, variance: float, size=None):
    if variance < 0:
        raise ValueError("variance must be non-negative")
    if variance == 0:
        return mean if size is None else np.full(size, float(mean))
    return mean + math.sqrt(variance) * stream.standard_normal(size)


def draw_inverse_gamma(stream: RngStream, params: InverseGammaParams, size=None):
    # Gamma(shape, rate=1) variate in the denominator.
    return params.scale / stream.standard_gamma(params.shape, size)


def draw_log_uniform(stream: RngStream, a: float, b: float, size=None):
    if not (0 < a < b):
        raise ValueError("log-uniform bounds must satisfy 0 < a < b")
    la, lb = math.log(a), math.log(b)
    out = np.exp(la + (lb - la) * stream.uniform(size))
    # exp rounding can land on an endpoint; the support is open
    out = np.clip(out, np.nextafter(a, b), np.nextafter(b, a))
    return float(out) if size is None else out


def draw_mvn(stream: RngStream, mean, covariance):
    mean = np.asarray(mean, dtype=float)
    cov = np.asarray(covariance, dtype=float)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise ValueError("covariance not positive definite") from None
    return mean + chol @ stream.standard_normal(mean.shape[0])


# ---------------------------------------------------------------------------
# Distribution functions and quantiles

def student_t_cdf(q: float, df: float) -> float:
    if q == 0:
        return 0.5
    t2 = q * q
    if t2 < df:
        half = 0.5 * special.betainc(0.5, 0.5 * df, t2 / (df + t2))
        return 0.5 + half if q > 0 else 0.5 - half
    tail = 0.5 * special.betainc(0.5 * df, 0.5, df / (df + t2))
    return 1.0 - tail if q > 0 else tail


def _t_tail(t: float, df: float) -> float:
    """P(T > t) for t >= 0, accurate in both the centre and the tail."""
    t2 = t * t
    if t2 >= df:
        return 0.5 * special.betainc(0.5 * df, 0.5, df / (df + t2))
    return 0.5 - 0.5 * special.betainc(0.5, 0.5 * df, t2 / (df + t2))


def _bracket_root(fn, lo: float, hi: float):
    """Grow ``hi`` geometrically until ``fn`` changes sign on ``[lo, hi]``."""
    flo = fn(lo)
    for _ in range(2000):
        if flo * fn(hi) <= 0:
            return lo, hi
        lo, flo = hi, fn(hi)
        hi *= 2.0
    raise RuntimeError("failed to bracket quantile")


@lru_cache(maxsize=4096)
def student_t_quantile(p: float, df: float) -> float:
    """Quantile of Student's t by bracketed inversion of the incomplete beta CDF."""
    if not (0 < p < 1):
        raise ValueError("p must lie in (0, 1)")
    if not df > 0:
        raise ValueError("degrees of freedom must be positive")
    if p == 0.5:
        return 0.0
    alpha = min(p, 1.0 - p)
    lo, hi = _bracket_root(lambda t: _t_tail(t, df) - alpha, 0.0, 1.0)
    t = optimize.brentq(lambda t: _t_tail(t, df) - alpha, lo, hi,
                        xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)
    return t if p > 0.5 else -t


def f_cdf(q: float, df1: float, df2: float) -> float:
    if q <= 0:
        return 0.0
    if math.isinf(df2):
        return float(special.gammainc(0.5 * df1, 0.5 * df1 * q))
    return float(special.betainc(0.5 * df1, 0.5 * df2, df1 * q / (df1 * q + df2)))


def f_sf(q: float, df1: float, df2: float) -> float:
    if q <= 0:
        return 1.0
    if math.isinf(df2):
        return float(special.gammaincc(0.5 * df1, 0.5 * df1 * q))
    return float(special.betainc(0.5 * df2, 0.5 * df1, df2 / (df2 + df1 * q)))


def f_quantile(p: float, df1: float, df2: float) -> float:
    """Quantile of the F(df1, df2) distribution; ``df2 = inf`` gives chi2(df1)/df1."""
    if not (0 < p < 1):
        raise ValueError("p must lie in (0, 1)")
    if not (df1 > 0 and df2 > 0):
        raise ValueError("degrees of freedom must be positive")
    if p <= 0.5:
        fn = lambda lq: f_cdf(math.exp(lq), df1, df2) - p  # noqa: E731
    else:
        fn = lambda lq: (1.0 - p) - f_sf(math.exp(lq), df1, df2)  # noqa: E731
    # Root in log q; bracket outward from q = 1 in both directions.
    lo, hi = -1.0, 1.0
    while fn(lo) > 0:
        lo *= 2.0
        if lo < -1400:
            raise RuntimeError("failed to bracket F quantile")
    while fn(hi) < 0:
        hi *= 2.0
        if hi > 1400:
            raise RuntimeError("failed to bracket F quantile")
    lq = optimize.brentq(fn, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)
    return math.exp(lq)
