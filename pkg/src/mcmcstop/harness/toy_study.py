"""Replication studies on the normal toy model."""
from __future__ import annotations

import functools

import numpy as np

from ..batch_means import _cbm_arrays
from ..distributions import START_STREAM, RngStream, stream_id_for
from ..models.toy import REFERENCE_TOY, ToyData, ToyGibbsChain, toy_exact_draw, toy_true_means
from ..stopping import FixedWidthMonitor, grd_check
from .config import ExperimentConfig
from .parallel import map_replications
from .records import DecisionLog, ReplicationResult


def toy_truth(data: ToyData = REFERENCE_TOY) -> dict[str, float]:
    mu, lam = toy_true_means(data)
    return {"mu": mu, "lam": lam}


def _toy_cbm_replication(rep: int, config: ExperimentConfig, data: ToyData) -> ReplicationResult:
    rule = config.rule()
    names = list(rule.epsilons)
    chain = ToyGibbsChain(data, RngStream(config.seed, stream_id_for(rep, 0)), mu0=data.y_bar)
    monitor = FixedWidthMonitor(rule)
    decisions = DecisionLog()
    n = rule.n_star
    failed = False
    while True:
        before = len(chain)
        chain.extend_to(n)
        monitor.extend(chain.arrays()[before:])
        decision = monitor.check()
        if config.trace_decisions:
            decisions.add(decision)
        if decision.stop:
            break
        if n >= rule.max_draws:
            failed = True
            break
        n = min(rule.next_size(n), rule.max_draws)
    draws = monitor.draws
    n = draws.shape[0]
    hw = {k: decision.per_functional[k][0] for k in names}
    _, _, _, sigma2, point = _cbm_arrays(draws, rule.theta)
    mcse = np.sqrt(sigma2 / n)
    return ReplicationResult(
        rep_id=rep, n_total=n,
        estimates={k: float(v) for k, v in zip(names, point)},
        errors={k: float(v) for k, v in zip(names, mcse)},
        stopped_at_minimum=n == rule.n_star, failed=failed,
        extra={f"halfwidth_{k}": hw[k] for k in names}, decisions=decisions)


def run_toy_cbm(config: ExperimentConfig, data: ToyData = REFERENCE_TOY) -> list[ReplicationResult]:
    """Fixed-width CBM runs started from ``mu = y_bar``, one chain per replication.

    The rule is checked at ``n_star`` and then at each grown size; the
    estimates are ergodic averages over all draws.
    """
    if (config.model, config.method) != ("toy", "cbm"):
        raise ValueError("config must describe a toy CBM study")
    fn = functools.partial(_toy_cbm_replication, config=config, data=data)
    return map_replications(fn, range(config.replications), config.workers)


def toy_start_set(config: ExperimentConfig, data: ToyData = REFERENCE_TOY):
    """Chain starts shared by every replication, drawn exactly from the posterior."""
    stream = RngStream(config.seed, START_STREAM)
    return [toy_exact_draw(data, stream) for _ in range(config.chains)]


def _toy_grd_replication(rep: int, config: ExperimentConfig, data: ToyData,
                         starts) -> ReplicationResult:
    rule = config.rule()
    names = ("mu", "lam")
    chains = [ToyGibbsChain(data, RngStream(config.seed, stream_id_for(rep, j)),
                            mu0=s.mu, lam0=s.lam) for j, s in enumerate(starts)]
    L = rule.min_chain_length
    decisions = DecisionLog()
    failed = False
    while True:
        for c in chains:
            c.extend_to(L)
        arr = np.stack([c.arrays()[:L] for c in chains])
        decision = grd_check(arr, rule, names=names)
        if config.trace_decisions:
            decisions.add(decision)
        if decision.stop:
            break
        if rule.m * L >= rule.max_draws:
            failed = True
            break
        L = rule.next_size(L)
    kept = arr[:, L - L // 2:] if rule.discard_first_half else arr
    est = kept.reshape(-1, 2).mean(axis=0)
    full = arr.reshape(-1, 2).mean(axis=0)
    extra = {f"full_{k}": float(v) for k, v in zip(names, full)}
    return ReplicationResult(
        rep_id=rep, n_total=rule.m * L,
        estimates={k: float(v) for k, v in zip(names, est)},
        errors={k: decision.per_functional[k][0] for k in names},
        stopped_at_minimum=L == rule.min_chain_length, failed=failed, extra=extra,
        decisions=decisions)


def run_toy_grd(config: ExperimentConfig, data: ToyData = REFERENCE_TOY) -> list[ReplicationResult]:
    """GRD runs with ``config.chains`` chains from one shared set of exact posterior draws.

    Every chain starts at ``n_star / m`` draws (its start state included)
    and grows by the configured step until the R_hat upper bound is below
    ``delta`` for both functionals. Headline estimates pool the retained
    halves (or whole chains without burn-in); whole-chain estimates are
    always kept as ``full_<name>``.
    """
    if (config.model, config.method) != ("toy", "grd"):
        raise ValueError("config must describe a toy GRD study")
    starts = toy_start_set(config, data)
    fn = functools.partial(_toy_grd_replication, config=config, data=data, starts=starts)
    return map_replications(fn, range(config.replications), config.workers)
