"""Sequential stopping rules: fixed-width CBM and Gelman-Rubin upper bound.

Both rules pad their criterion by the cutoff itself while the run is shorter
than the minimum effort ``n_star``, so neither can stop early.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from .batch_means import _cbm_arrays, _t_multiplier
from .batch_means import batch_layout as _batch_layout
from .gelman_rubin import DegenerateVarianceError, _psrf_array
from .traces import MultiChainTrace, ScalarTrace

logger = logging.getLogger(__name__)

GROWTH_MODES = ("relative", "absolute")
DEFAULT_MAX_DRAWS = 10**7


def next_check_size(current: int, growth: float = 0.10, mode: str = "relative") -> int:
    """Size at which the rule is checked next; always strictly larger.

    ``relative`` grows by ``floor(current * (1 + growth))``; ``absolute``
    adds ``growth`` draws.
    """
    if current < 1:
        raise ValueError("current size must be >= 1")
    if mode == "relative":
        # exact rational growth: floor(400 * 1.1) must be 440 regardless of float rounding
        grown = math.floor(current * (1 + Fraction(repr(float(growth)))))
    elif mode == "absolute":
        grown = current + int(growth)
    else:
        raise ValueError(f"growth mode must be one of {GROWTH_MODES}")
    return max(current + 1, grown)


def check_schedule(start: int, bound: int, growth: float = 0.10, mode: str = "relative"):
    """Yield check sizes from ``start`` until the first one at or above ``bound``."""
    n = start
    while True:
        yield n
        if n >= bound:
            return
        n = next_check_size(n, growth, mode)


@dataclass
class FixedWidthRule:
    """Stop when every functional's CBM half-width is at most its cutoff.

    ``epsilons`` maps functional names to cutoffs (a bare sequence is keyed
    by position).
    """

    epsilons: Mapping[str, float] | Sequence[float]
    n_star: int = 400
    confidence: float = 0.95
    theta: float = 0.5
    growth: float = 0.10
    growth_mode: str = "relative"
    max_draws: int = DEFAULT_MAX_DRAWS

    def __post_init__(self):
        if not isinstance(self.epsilons, Mapping):
            self.epsilons = {str(i): float(e) for i, e in enumerate(self.epsilons)}
        else:
            self.epsilons = {k: float(v) for k, v in self.epsilons.items()}
        if not self.epsilons or any(e <= 0 for e in self.epsilons.values()):
            raise ValueError("all cutoffs must be positive")
        if self.n_star < 4:
            raise ValueError("n_star must be at least 4")
        if self.growth <= 0 or self.growth_mode not in GROWTH_MODES:
            raise ValueError("growth must be positive with a known mode")

    def next_size(self, n: int) -> int:
        return next_check_size(n, self.growth, self.growth_mode)

    def check(self, traces) -> "StopDecision":
        return fixed_width_check(traces, self)


@dataclass
class GrdRule:
    """Stop when every functional's R_hat upper bound is at most ``delta``.

    ``n_star`` counts draws summed over all chains, discarded halves included.
    """

    delta: float = 1.1
    m: int = 2
    n_star: int = 400
    growth: float = 0.10
    growth_mode: str = "relative"
    discard_first_half: bool = True
    max_draws: int = DEFAULT_MAX_DRAWS
    w_rule: str = "plain"
    df_rule: str = "standard"

    def __post_init__(self):
        if self.delta <= 1:
            raise ValueError("delta must exceed 1")
        if self.m < 2:
            raise ValueError("at least 2 chains are required")
        if self.growth <= 0 or self.growth_mode not in GROWTH_MODES:
            raise ValueError("growth must be positive with a known mode")

    @property
    def min_chain_length(self) -> int:
        return max(2, math.ceil(self.n_star / self.m))

    def next_size(self, per_chain: int) -> int:
        return next_check_size(per_chain, self.growth, self.growth_mode)

    def check(self, multi) -> "StopDecision":
        return grd_check(multi, self)


@dataclass
class StopDecision:
    stop: bool
    per_functional: dict = field(default_factory=dict)
    n_at_decision: int = 0

    def rows(self):
        for name, (crit, thr) in self.per_functional.items():
            yield {"n": self.n_at_decision, "functional": name, "criterion": crit,
                   "threshold": thr, "stop": self.stop}


def _named_columns(traces, names) -> dict[str, np.ndarray]:
    if isinstance(traces, Mapping):
        items = traces.items()
    elif isinstance(traces, np.ndarray) and traces.ndim == 2:
        items = zip(names, traces.T)
    else:
        items = zip(names, traces)
    cols = {k: (v.values if isinstance(v, ScalarTrace) else np.asarray(v, float))
            for k, v in items}
    missing = [k for k in names if k not in cols]
    if missing:
        raise ValueError(f"no trace for functionals {missing}")
    return cols


def fixed_width_check(traces, rule: FixedWidthRule) -> StopDecision:
    """Evaluate ``half_width + eps * I(n < n_star) <= eps`` for every functional.

    ``traces`` is a mapping name -> draws, a sequence of traces in cutoff
    order, or an array of shape ``(n, n_functionals)``.
    """
    names = list(rule.epsilons)
    cols = _named_columns(traces, names)
    lengths = {cols[k].shape[0] for k in names}
    if len(lengths) != 1:
        raise ValueError("all traces must share the same length")
    n = lengths.pop()
    X = np.column_stack([cols[k] for k in names])
    if not np.all(np.isfinite(X)):
        raise ValueError("traces contain non-finite values")
    a, b, _, sigma2, _ = _cbm_arrays(X, rule.theta)
    hw = _t_multiplier(rule.confidence, a - 1) * np.sqrt(sigma2 / n)
    per = {}
    stop = True
    for name, h in zip(names, hw):
        eps = rule.epsilons[name]
        crit = float(h) + (eps if n < rule.n_star else 0.0)
        per[name] = (crit, eps)
        stop &= crit <= eps
    return StopDecision(stop=bool(stop), per_functional=per, n_at_decision=n)


def _chain_arrays(multi, names) -> dict[str, np.ndarray]:
    if isinstance(multi, MultiChainTrace):
        return {names[0]: multi.to_array()}
    if isinstance(multi, Mapping):
        return {k: (v.to_array() if isinstance(v, MultiChainTrace) else np.asarray(v, float))
                for k, v in multi.items()}
    arr = np.asarray(multi, dtype=float)
    if arr.ndim == 2:
        return {names[0]: arr}
    if arr.ndim == 3:
        return {names[j] if j < len(names) else str(j): arr[:, :, j] for j in range(arr.shape[2])}
    raise ValueError("chains must be shaped (m, length) or (m, length, p)")


def grd_check(multi, rule: GrdRule, names: Sequence[str] = ("0",)) -> StopDecision:
    """Evaluate ``R_upper + delta * I(n < n_star) <= delta`` for every functional.

    ``n`` is the total number of draws across chains. A functional whose
    chains are all constant gets an infinite criterion and a warning, so it
    never counts as converged.
    """
    chains = _chain_arrays(multi, list(names))
    shapes = {v.shape for v in chains.values()}
    if len(shapes) != 1:
        raise ValueError("all functionals must have the same chain layout")
    m, L = shapes.pop()
    n = m * L
    per = {}
    stop = True
    for name, arr in chains.items():
        work = arr[:, L - L // 2:] if rule.discard_first_half else arr
        try:
            crit = _psrf_array(work, rule.df_rule, rule.w_rule).R_upper
        except DegenerateVarianceError:
            warnings.warn(f"functional {name!r}: degenerate within-chain variance at n={n}; "
                          "continuing", RuntimeWarning, stacklevel=2)
            crit = math.inf
        crit += rule.delta if n < rule.n_star else 0.0
        per[name] = (crit, rule.delta)
        stop &= crit <= rule.delta
    return StopDecision(stop=bool(stop), per_functional=per, n_at_decision=n)


class FixedWidthMonitor:
    """Incremental fixed-width checks for a growing multi-functional trace.

    Keeps running prefix sums so each check costs ``O(a)`` instead of
    ``O(n)``. When a criterion lands within ``1e-9`` (relative) of its cutoff
    the decision is recomputed with :func:`fixed_width_check`, so decisions
    always agree with the direct computation.
    """

    _GUARD = 1e-9

    def __init__(self, rule: FixedWidthRule, capacity: int = 4096):
        self.rule = rule
        self.names = list(rule.epsilons)
        p = len(self.names)
        self._eps = np.array([rule.epsilons[k] for k in self.names])
        self._draws = np.empty((capacity, p))
        self._prefix = np.zeros((capacity + 1, p))
        self.n = 0

    def extend(self, draws) -> None:
        draws = np.asarray(draws, dtype=float)
        if draws.ndim == 1:
            draws = draws[:, None]
        k = draws.shape[0]
        if draws.shape[1] != self._eps.size:
            raise ValueError("draws must have one column per functional")
        if not np.all(np.isfinite(draws)):
            raise ValueError("traces contain non-finite values")
        need = self.n + k
        if need > self._draws.shape[0]:
            cap = max(need, 2 * self._draws.shape[0])
            self._draws = np.resize(self._draws, (cap, self._eps.size))
            prefix = np.zeros((cap + 1, self._eps.size))
            prefix[: self.n + 1] = self._prefix[: self.n + 1]
            self._prefix = prefix
        self._draws[self.n:need] = draws
        self._prefix[self.n + 1:need + 1] = self._prefix[self.n] + np.cumsum(draws, axis=0)
        self.n = need

    @property
    def draws(self) -> np.ndarray:
        return self._draws[: self.n]

    def check(self, n: int | None = None) -> StopDecision:
        """Decision on the first ``n`` draws (default: all of them)."""
        n = self.n if n is None else int(n)
        if not 0 < n <= self.n:
            raise ValueError("n must lie in 1..number of stored draws")
        a, b = _batch_layout(n, self.rule.theta)
        edges = self._prefix[0: a * b + 1: b]
        bm = np.diff(edges, axis=0) / b
        centre = edges[-1] / (a * b)
        sigma2 = b / (a - 1) * ((bm - centre) ** 2).sum(axis=0)
        hw = _t_multiplier(self.rule.confidence, a - 1) * np.sqrt(sigma2 / n)
        pad = self._eps if n < self.rule.n_star else 0.0
        crit = hw + pad
        if np.any(np.abs(crit - self._eps) <= self._GUARD * self._eps):
            return fixed_width_check(self._draws[:n], self.rule)
        per = {k: (float(c), float(e)) for k, c, e in zip(self.names, crit, self._eps)}
        return StopDecision(stop=bool(np.all(crit <= self._eps)), per_functional=per,
                            n_at_decision=n)
