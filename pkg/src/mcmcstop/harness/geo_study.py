"""Replication study on a synthetic spatial regression dataset.

The workflow has three stages. :func:`synth_dataset` writes a dataset, and
:func:`run_geo_pilot` makes one long run whose means act as the truth and
whose percentiles give the chain starts. :func:`run_geo_study` then runs the
CBM or GRD arm against that pilot.
"""
from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from ..batch_means import _cbm_arrays
from ..distributions import DATA_STREAM, PILOT_STREAM, RngStream, stream_id_for
from ..models.geo import PARAMS, GeoData, GeoSampler, GeoState, synth_geo_data, write_geo_sidecar
from ..stopping import FixedWidthMonitor, grd_check
from .config import ExperimentConfig
from .parallel import map_replications
from .records import DecisionLog, ReplicationResult

DEFAULT_SITES = 50
DEFAULT_TRUTH = GeoState(tau2=5.0, sigma2=10.0, phi=2.0, beta=2.0)
DEFAULT_REGION = (0.0, 6.0, 0.0, 4.0)
PERCENTILES = (10, 30, 70, 90)
PILOT_BASE_LENGTH = 2_000_000
PILOT_REFERENCE_SITES = 365
PILOT_BURN_IN = 10_000
# draws produced per sampler call while a replication waits for its next check
_BLOCK = 2000
# GRD replications use chain slots 0..3; the CBM chain of the same replication
# id takes slot 4 so the two arms never share a stream
_CBM_SLOT = 4


def sidecar_path(data_path) -> Path:
    return Path(data_path).with_suffix(".json")


def synth_dataset(path, seed: int, n_sites: int = DEFAULT_SITES,
                  true_state: GeoState = DEFAULT_TRUTH, region=DEFAULT_REGION) -> GeoData:
    """Generate a dataset from the reserved data stream and write CSV plus JSON sidecar."""
    data = synth_geo_data(RngStream(seed, DATA_STREAM), n_sites, true_state, region)
    data.to_csv(path)
    write_geo_sidecar(sidecar_path(path), seed=seed, stream_id=DATA_STREAM, N=n_sites,
                      true_state=true_state, region=region)
    return data


def default_pilot_length(n_sites: int) -> int:
    """2,000,000 iterations at 365 sites, lengthened in proportion for fewer sites.

    The pilot means serve as the truth for coverage, so their standard
    errors must be small next to the spread of a single replication's
    estimate. At 50 sites this length puts them near a tenth of it.
    """
    return int(PILOT_BASE_LENGTH * max(1.0, PILOT_REFERENCE_SITES / n_sites))


def data_driven_start(data: GeoData) -> GeoState:
    """Least-squares slope, residual variance split evenly, geometric-mean range."""
    beta = float(data.X @ data.Z / (data.X @ data.X))
    v = float(np.var(data.Z - data.X * beta))
    return GeoState(tau2=v / 2, sigma2=v / 2, phi=math.sqrt(0.6 * 6.0), beta=beta)


@dataclass
class PilotArtifact:
    """Long-run posterior means (with CBM standard errors) and percentile starts."""

    seed: int
    length: int
    burn_in: int
    truth: dict[str, float]
    mcse: dict[str, float]
    percentiles: dict[str, list[float]]
    sigma2_update: str = "slice"

    def start_states(self) -> list[GeoState]:
        """One start per recorded percentile, combining that percentile of every parameter."""
        return [GeoState(*(self.percentiles[p][j] for p in PARAMS))
                for j in range(len(PERCENTILES))]

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "PilotArtifact":
        return cls(**json.loads(Path(path).read_text()))


def run_geo_pilot(data: GeoData, seed: int, length: int | None = None,
                  burn_in: int = PILOT_BURN_IN, start: GeoState | None = None,
                  sigma2_update: str = "slice") -> PilotArtifact:
    """One long chain on the reserved pilot stream.

    ``burn_in`` iterations from ``start`` (default :func:`data_driven_start`)
    are dropped; the remaining ``length`` draws give the truth, its MCSE and
    the percentiles.
    """
    length = default_pilot_length(data.N) if length is None else int(length)
    if length < 4 or burn_in < 0:
        raise ValueError("pilot length must be >= 4 and burn_in >= 0")
    sampler = GeoSampler(data, start or data_driven_start(data), RngStream(seed, PILOT_STREAM),
                         sigma2_update=sigma2_update)
    if burn_in:
        sampler.run(burn_in)
    draws = sampler.run(length)
    _, _, _, sigma2, point = _cbm_arrays(draws, 0.5)
    pct = np.percentile(draws, PERCENTILES, axis=0)
    return PilotArtifact(
        seed=seed, length=length, burn_in=burn_in,
        truth={p: float(v) for p, v in zip(PARAMS, point)},
        mcse={p: float(math.sqrt(s / length)) for p, s in zip(PARAMS, sigma2)},
        percentiles={p: [float(v) for v in pct[:, i]] for i, p in enumerate(PARAMS)},
        sigma2_update=sigma2_update)


def _geo_cbm_replication(rep: int, config: ExperimentConfig, data: GeoData,
                         pilot: PilotArtifact) -> ReplicationResult:
    rule = config.rule()
    starts = pilot.start_states()
    start_index = rep % len(starts)
    sampler = GeoSampler(data, starts[start_index], RngStream(config.seed, stream_id_for(rep, _CBM_SLOT)),
                         sigma2_update=config.sigma2_update)
    monitor = FixedWidthMonitor(rule, capacity=4 * rule.n_star)
    decisions = DecisionLog()
    n = rule.n_star
    failed = False
    while True:
        if monitor.n < n:
            monitor.extend(sampler.run(max(_BLOCK, n - monitor.n)))
        decision = monitor.check(n)
        if config.trace_decisions:
            decisions.add(decision)
        if decision.stop:
            break
        if n >= rule.max_draws:
            failed = True
            break
        n = min(rule.next_size(n), rule.max_draws)
    point = monitor.draws[:n].mean(axis=0)
    extra = {"start_index": start_index}
    for k, p in zip(PARAMS, point):
        hw = decision.per_functional[k][0]
        extra[f"halfwidth_{k}"] = hw
        extra[f"covered_{k}"] = float(abs(p - pilot.truth[k]) <= hw)
    _, _, _, sigma2, _ = _cbm_arrays(monitor.draws[:n], rule.theta)
    errors = {k: float(math.sqrt(s / n)) for k, s in zip(PARAMS, sigma2)}
    return ReplicationResult(rep_id=rep, n_total=n,
                             estimates={k: float(v) for k, v in zip(PARAMS, point)},
                             errors=errors, stopped_at_minimum=n == rule.n_star, failed=failed,
                             extra=extra, decisions=decisions)


def _geo_grd_replication(rep: int, config: ExperimentConfig, data: GeoData,
                         pilot: PilotArtifact) -> ReplicationResult:
    rule = config.rule()
    starts = pilot.start_states()
    if rule.m != len(starts):
        raise ValueError(f"the spatial GRD arm uses one chain per percentile ({len(starts)})")
    samplers = [GeoSampler(data, s, RngStream(config.seed, stream_id_for(rep, j)),
                           sigma2_update=config.sigma2_update) for j, s in enumerate(starts)]
    chains = [np.empty((0, 4)) for _ in samplers]
    L = rule.min_chain_length
    decisions = DecisionLog()
    failed = False
    while True:
        chains = [np.vstack([c, s.run(L - c.shape[0])]) for c, s in zip(chains, samplers)]
        arr = np.stack(chains)
        decision = grd_check(arr, rule, names=PARAMS)
        if config.trace_decisions:
            decisions.add(decision)
        if decision.stop:
            break
        if rule.m * L >= rule.max_draws:
            failed = True
            break
        L = rule.next_size(L)
    kept = arr[:, L - L // 2:] if rule.discard_first_half else arr
    est = kept.reshape(-1, 4).mean(axis=0)
    full = arr.reshape(-1, 4).mean(axis=0)
    return ReplicationResult(
        rep_id=rep, n_total=rule.m * L, estimates={k: float(v) for k, v in zip(PARAMS, est)},
        errors={k: decision.per_functional[k][0] for k in PARAMS},
        stopped_at_minimum=L == rule.min_chain_length, failed=failed,
        extra={f"full_{k}": float(v) for k, v in zip(PARAMS, full)}, decisions=decisions)


def run_geo_study(config: ExperimentConfig, data: GeoData | None = None,
                  pilot: PilotArtifact | None = None) -> list[ReplicationResult]:
    """Run the CBM or GRD arm, chosen by ``config.method``.

    CBM replication ``r`` is a single chain from percentile start ``r % 4``
    and records whether each interval covers the pilot truth. A GRD
    replication runs one chain from each percentile start.
    """
    if config.model != "geo":
        raise ValueError("config must describe a spatial study")
    if data is None:
        if config.data is None:
            raise ValueError("no dataset given")
        data = GeoData.from_csv(config.data)
    if pilot is None:
        if config.pilot is None:
            raise ValueError("the spatial study needs a pilot artifact")
        pilot = PilotArtifact.load(config.pilot)
    target = _geo_cbm_replication if config.method == "cbm" else _geo_grd_replication
    fn = functools.partial(target, config=config, data=data, pilot=pilot)
    return map_replications(fn, range(config.replications), config.workers)
