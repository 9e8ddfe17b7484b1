"""Per-replication records, summary tables, histograms and their CSV forms."""
from __future__ import annotations

import csv
import math
from array import array
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np


class DecisionLog:
    """Compact record of every stopping check made in one replication.

    A fixed-width run with absolute growth can make tens of thousands of
    checks, so values are kept in typed arrays rather than row dicts.
    Iterating yields the same rows as :meth:`StopDecision.rows`.
    """

    def __init__(self):
        self.names: tuple[str, ...] = ()
        self.thresholds: tuple[float, ...] = ()
        self._n = array("q")
        self._criteria = array("d")
        self._stop = array("b")

    def add(self, decision) -> None:
        if not self.names:
            self.names = tuple(decision.per_functional)
            self.thresholds = tuple(t for _, t in decision.per_functional.values())
        self._n.append(decision.n_at_decision)
        self._criteria.extend(decision.per_functional[k][0] for k in self.names)
        self._stop.append(bool(decision.stop))

    def __len__(self) -> int:
        return len(self._n) * len(self.names)

    def __iter__(self):
        p = len(self.names)
        for i, n in enumerate(self._n):
            for j, name in enumerate(self.names):
                yield {"n": n, "functional": name, "criterion": self._criteria[i * p + j],
                       "threshold": self.thresholds[j], "stop": bool(self._stop[i])}


@dataclass
class ReplicationResult:
    """Outcome of one replication.

    ``errors`` holds the CBM Monte Carlo standard error (fixed-width runs) or
    the R_hat upper bound (GRD runs) at the stopping time. ``extra`` carries
    flat numeric side results such as half-widths, coverage indicators
    (``covered_<name>``) or full-chain estimates (``full_<name>``).
    """

    rep_id: int
    n_total: int
    estimates: dict[str, float]
    errors: dict[str, float]
    stopped_at_minimum: bool
    failed: bool = False
    extra: dict[str, float] = field(default_factory=dict)
    decisions: DecisionLog | list[dict] = field(default_factory=list, repr=False,
                                                compare=False)

    def value(self, functional: str, source: str = "est") -> float:
        if source == "est":
            return self.estimates[functional]
        return self.extra[f"{source}_{functional}"]


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def write_replications_csv(path, results: Sequence[ReplicationResult]) -> None:
    """One row per replication; floats are written with ``repr`` so they round-trip exactly."""
    if not results:
        raise ValueError("no results to write")
    names = list(results[0].estimates)
    extra = sorted({k for r in results for k in r.extra})
    header = (["rep_id", "n_total", "stopped_at_minimum", "failed"]
              + [f"est_{k}" for k in names] + [f"err_{k}" for k in names] + extra)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in results:
            w.writerow([_fmt(r.rep_id), _fmt(r.n_total), _fmt(r.stopped_at_minimum),
                        _fmt(r.failed)]
                       + [_fmt(r.estimates.get(k, math.nan)) for k in names]
                       + [_fmt(r.errors.get(k, math.nan)) for k in names]
                       + [_fmt(r.extra.get(k, math.nan)) for k in extra])


def read_replications_csv(path) -> list[ReplicationResult]:
    out = []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            est = {k[4:]: float(v) for k, v in row.items() if k.startswith("est_")}
            err = {k[4:]: float(v) for k, v in row.items() if k.startswith("err_")}
            fixed = {"rep_id", "n_total", "stopped_at_minimum", "failed"}
            extra = {k: float(v) for k, v in row.items()
                     if k not in fixed and not k.startswith(("est_", "err_"))}
            out.append(ReplicationResult(
                rep_id=int(row["rep_id"]), n_total=int(row["n_total"]),
                estimates=est, errors=err, stopped_at_minimum=row["stopped_at_minimum"] == "1",
                failed=row["failed"] == "1", extra=extra))
    return out


def write_decisions_csv(path, results: Sequence[ReplicationResult]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep_id", "n", "functional", "criterion", "threshold", "stop"])
        for r in results:
            for d in r.decisions:
                w.writerow([r.rep_id, d["n"], d["functional"], _fmt(d["criterion"]),
                            _fmt(d["threshold"]), _fmt(d["stop"])])


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    # with a single value the standard error is reported as 0
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else 0.0
    return float(x.mean()), se


def _proportion(flags: np.ndarray) -> tuple[float, float]:
    p = float(flags.mean())
    return p, math.sqrt(p * (1.0 - p) / flags.size)


@dataclass
class SummaryTable:
    functionals: tuple[str, ...]
    mse: dict[str, float]
    mse_se: dict[str, float]
    prop_at_minimum: float
    prop_at_minimum_se: float
    effort_cut: int
    prop_within_effort: float
    prop_within_effort_se: float
    mean_effort: float
    mean_effort_se: float
    n_replications: int
    n_failed: int = 0
    coverage: dict[str, float] | None = None
    coverage_se: dict[str, float] | None = None

    def rows(self, label: str = "") -> list[dict]:
        rows = []
        for k in self.functionals:
            rows.append({
                "setting": label, "functional": k, "mse": self.mse[k], "mse_se": self.mse_se[k],
                "coverage": self.coverage[k] if self.coverage else math.nan,
                "coverage_se": self.coverage_se[k] if self.coverage_se else math.nan,
                "prop_at_minimum": self.prop_at_minimum,
                "prop_at_minimum_se": self.prop_at_minimum_se,
                "effort_cut": self.effort_cut, "prop_within_effort": self.prop_within_effort,
                "prop_within_effort_se": self.prop_within_effort_se,
                "mean_effort": self.mean_effort, "mean_effort_se": self.mean_effort_se,
                "n_replications": self.n_replications, "n_failed": self.n_failed,
            })
        return rows


def summarize(results: Sequence[ReplicationResult], truth: Mapping[str, float],
              source: str = "est", effort_cut: int = 1000) -> SummaryTable:
    """MSE against ``truth``, effort statistics and (if recorded) coverage.

    Failed replications are counted in ``n_failed`` and left out of every
    statistic. ``source`` picks the estimates: ``"est"`` for the headline
    ones, or an ``extra`` prefix such as ``"full"``.
    """
    if not results:
        raise ValueError("no replication results to summarise")
    ok = [r for r in results if not r.failed]
    n_failed = len(results) - len(ok)
    if not ok:
        raise ValueError("every replication failed")
    names = tuple(k for k in results[0].estimates if k in truth)
    if not names:
        raise ValueError("truth shares no functional with the results")
    mse, mse_se = {}, {}
    for k in names:
        sq = np.array([(r.value(k, source) - truth[k]) ** 2 for r in ok])
        mse[k], mse_se[k] = _mean_se(sq)
    n = np.array([r.n_total for r in ok], dtype=float)
    at_min, at_min_se = _proportion(np.array([r.stopped_at_minimum for r in ok], dtype=float))
    within, within_se = _proportion((n <= effort_cut).astype(float))
    mean_n, mean_n_se = _mean_se(n)
    coverage = coverage_se = None
    if all(f"covered_{k}" in r.extra for r in ok for k in names):
        coverage, coverage_se = {}, {}
        for k in names:
            coverage[k], coverage_se[k] = _proportion(
                np.array([r.extra[f"covered_{k}"] for r in ok]))
    return SummaryTable(functionals=names, mse=mse, mse_se=mse_se, prop_at_minimum=at_min,
                        prop_at_minimum_se=at_min_se, effort_cut=effort_cut,
                        prop_within_effort=within, prop_within_effort_se=within_se,
                        mean_effort=mean_n, mean_effort_se=mean_n_se,
                        n_replications=len(ok), n_failed=n_failed,
                        coverage=coverage, coverage_se=coverage_se)


def fraction_within(results: Sequence[ReplicationResult], functional: str, truth: float,
                    tol: float, source: str = "est") -> float:
    """Share of successful replications whose estimate lies within ``tol`` of ``truth``."""
    vals = np.array([r.value(functional, source) for r in results if not r.failed])
    if vals.size == 0:
        raise ValueError("no successful replications")
    return float(np.mean(np.abs(vals - truth) <= tol))


def write_summary_csv(path, tables: Mapping[str, SummaryTable]) -> None:
    rows = [row for label, t in tables.items() for row in t.rows(label)]
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: (_fmt(v) if not isinstance(v, str) else v) for k, v in row.items()})


def emit_histogram(results: Sequence[ReplicationResult], functional: str, bins: int = 20,
                   path=None, source: str = "est"):
    """Fixed-width histogram over the observed range of the estimates.

    Returns ``(edges, counts)`` and, when ``path`` is given, writes
    ``left,right,count`` rows.
    """
    vals = np.array([r.value(functional, source) for r in results if not r.failed])
    if vals.size == 0:
        raise ValueError("no successful replications")
    counts, edges = np.histogram(vals, bins=bins)
    if path is not None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["left", "right", "count"])
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([_fmt(lo), _fmt(hi), int(c)])
    return edges, counts
