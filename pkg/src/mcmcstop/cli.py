"""Command line interface: ``diag``, ``toy`` and ``geo synth|pilot|run``.

Experiment commands also take ``--config FILE``, a JSON object whose keys are
the long flag names (``reps``, ``n_star``, ``no_burn_in``, ...). Flags given
on the command line override the file.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .batch_means import BatchMeans
from .gelman_rubin import DegenerateVarianceError, GelmanRubin
from .harness.config import ExperimentConfig
from .harness.records import (emit_histogram, summarize, write_decisions_csv,
                              write_replications_csv, write_summary_csv)
from .traces import read_trace_csv

logger = logging.getLogger("mcmcstop")

# flags whose config-file key differs from the ExperimentConfig field
_ALIASES = {"reps": "replications"}
# keys that only the geo synth/pilot steps read
_STAGE_KEYS = {"sites", "pilot_length", "pilot_burn_in"}


def _print_table(rows: list[dict], stream=None) -> None:
    if not rows:
        return
    stream = stream or sys.stdout
    cols = list(rows[0])
    cells = [[c for c in cols]] + [[_cell(r[c]) for c in cols] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(cols))]
    for row in cells:
        print("  ".join(v.rjust(w) for v, w in zip(row, widths)), file=stream)


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)


def _write_rows(path, rows: list[dict]) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        w.writerows(rows)


# ---------------------------------------------------------------- diag
def cmd_diag(args) -> int:
    traces = [read_trace_csv(p) for p in args.traces]
    names = list(traces[0])
    if args.columns:
        names = [c.strip() for c in args.columns.split(",")]
    for path, tr in zip(args.traces, traces):
        missing = [c for c in names if c not in tr]
        if missing:
            raise SystemExit(f"{path}: missing columns {missing}")
    rows = []
    for path, tr in zip(args.traces, traces):
        X = np.column_stack([tr[c] for c in names])
        bm = BatchMeans(theta=args.theta, confidence=args.confidence).fit(X)
        for name, est, sf in zip(names, bm.estimates(), bm.significant_figures()):
            rows.append({"file": str(path), "functional": name, "n": est.n, "point": est.point,
                         "mcse": est.mcse, "half_width": est.half_width,
                         "significant_figures": int(sf)})
    _print_table(rows)
    psrf_rows = []
    if len(traces) > 1:
        lengths = {len(tr[names[0]]) for tr in traces}
        if len(lengths) != 1:
            raise SystemExit("chains passed to diag must have equal lengths")
        arr = np.stack([np.column_stack([tr[c] for c in names]) for tr in traces])
        for j, name in enumerate(names):
            gr = GelmanRubin(discard_first_half=not args.no_discard, w_rule=args.w_rule)
            try:
                gr.fit(arr[:, :, j])
                psrf_rows.append({"functional": name, "chains": len(traces),
                                  "R_hat": float(gr.rhat_[0]),
                                  "R_upper_0975": float(gr.rhat_upper_[0])})
            except DegenerateVarianceError:
                psrf_rows.append({"functional": name, "chains": len(traces),
                                  "R_hat": float("nan"), "R_upper_0975": float("nan")})
        print()
        _print_table(psrf_rows)
    if args.out:
        _write_rows(args.out, rows)
        if psrf_rows:
            out = Path(args.out)
            _write_rows(out.with_name(out.stem + "_psrf" + out.suffix), psrf_rows)
    return 0


# ---------------------------------------------------------------- config plumbing
def _merged_options(args, keys) -> dict:
    values = {}
    if getattr(args, "config", None):
        values.update(json.loads(Path(args.config).read_text()))
    for key in keys:
        v = getattr(args, key, None)
        if v is not None and v is not False:
            values[key] = v
    return values


def _experiment_config(values: dict, **fixed) -> ExperimentConfig:
    values = {k.replace("-", "_"): v for k, v in values.items()}
    values = {_ALIASES.get(k, k): v for k, v in values.items() if k not in _STAGE_KEYS}
    if values.pop("no_burn_in", False):
        values["burn_in"] = False
    values.update(fixed)
    return ExperimentConfig.from_mapping(values)


def _emit(results, tables: dict, config: ExperimentConfig, out: Path, bins: int) -> int:
    out.mkdir(parents=True, exist_ok=True)
    write_replications_csv(out / "replications.csv", results)
    if config.trace_decisions:
        write_decisions_csv(out / "decisions.csv", results)
    # with every replication failed there is nothing to summarise
    if tables:
        write_summary_csv(out / "summary.csv", tables)
        for name in config.functionals:
            emit_histogram(results, name, bins, out / f"histogram_{name}.csv")
    rows = [row for label, t in tables.items() for row in t.rows(label)]
    _print_table([{k: r[k] for k in ("setting", "functional", "mse", "mse_se", "coverage",
                                      "prop_at_minimum", "prop_within_effort", "mean_effort",
                                      "mean_effort_se")} for r in rows])
    n_failed = sum(r.failed for r in results)
    if n_failed:
        logger.error("%d of %d replications hit the draw cap", n_failed, len(results))
        return 1
    return 0


_EXPERIMENT_KEYS = ("method", "epsilon", "delta", "chains", "reps", "seed", "no_burn_in",
                    "n_star", "growth", "growth_mode", "max_draws", "workers",
                    "trace_decisions", "out", "w_rule")


# ---------------------------------------------------------------- toy
def cmd_toy(args) -> int:
    from .harness.toy_study import run_toy_cbm, run_toy_grd, toy_truth

    values = _merged_options(args, _EXPERIMENT_KEYS)
    values.setdefault("out", "toy_out")
    config = _experiment_config(values, model="toy")
    results = run_toy_cbm(config) if config.method == "cbm" else run_toy_grd(config)
    truth = toy_truth()
    tables = {}
    if not all(r.failed for r in results):
        tables["headline"] = summarize(results, truth)
        if config.method == "grd":
            tables["whole_chains"] = summarize(results, truth, source="full")
    return _emit(results, tables, config, Path(config.out), args.bins)


# ---------------------------------------------------------------- geo
def cmd_geo_synth(args) -> int:
    from .harness.geo_study import DEFAULT_SITES, synth_dataset

    values = _merged_options(args, ("sites", "seed", "out"))
    out = values.get("out", "geo_data.csv")
    data = synth_dataset(out, seed=int(values.get("seed", 0)),
                         n_sites=int(values.get("sites", DEFAULT_SITES)))
    print(f"wrote {data.N} sites to {out}")
    return 0


def cmd_geo_pilot(args) -> int:
    from .harness.geo_study import PILOT_BURN_IN, run_geo_pilot
    from .models.geo import GeoData

    values = _merged_options(args, ("data", "seed", "pilot_length", "pilot_burn_in", "out",
                                    "sigma2_update"))
    if "data" not in values:
        raise SystemExit("geo pilot needs --data")
    data = GeoData.from_csv(values["data"])
    pilot = run_geo_pilot(data, seed=int(values.get("seed", 0)),
                          length=values.get("pilot_length"),
                          burn_in=int(values.get("pilot_burn_in", PILOT_BURN_IN)),
                          sigma2_update=values.get("sigma2_update", "slice"))
    out = values.get("out", "geo_pilot.json")
    pilot.save(out)
    _print_table([{"parameter": k, "truth": pilot.truth[k], "mcse": pilot.mcse[k],
                   **{f"p{q}": v for q, v in zip((10, 30, 70, 90), pilot.percentiles[k])}}
                  for k in pilot.truth])
    return 0


def cmd_geo_run(args) -> int:
    from .harness.geo_study import PilotArtifact, run_geo_study
    from .models.geo import GeoData

    values = _merged_options(args, _EXPERIMENT_KEYS + ("data", "pilot", "sigma2_update"))
    values.setdefault("out", "geo_out")
    methods = ["cbm", "grd"] if values.get("method", "both") == "both" else [values["method"]]
    values.pop("method", None)
    if "data" not in values or "pilot" not in values:
        raise SystemExit("geo run needs --data and --pilot")
    data = GeoData.from_csv(values["data"])
    pilot = PilotArtifact.load(values["pilot"])
    status = 0
    for method in methods:
        config = _experiment_config(values, model="geo", method=method)
        results = run_geo_study(config, data=data, pilot=pilot)
        tables = ({} if all(r.failed for r in results)
                  else {method: summarize(results, pilot.truth)})
        status |= _emit(results, tables, config, Path(config.out) / method, args.bins)
    return status


# ---------------------------------------------------------------- parser
def _add_experiment_flags(p: argparse.ArgumentParser, methods) -> None:
    p.add_argument("--method", choices=methods)
    p.add_argument("--epsilon", type=float, help="CBM half-width cutoff (all functionals)")
    p.add_argument("--delta", type=float, help="GRD cutoff for the R_hat upper bound")
    p.add_argument("--chains", type=int, help="GRD chain count")
    p.add_argument("--reps", type=int, help="number of replications")
    p.add_argument("--seed", type=int)
    p.add_argument("--no-burn-in", action="store_true",
                   help="GRD: use whole chains in the diagnostic and the estimates")
    p.add_argument("--n-star", type=int, help="minimum total effort")
    p.add_argument("--growth", type=float)
    p.add_argument("--growth-mode", choices=("relative", "absolute"))
    p.add_argument("--max-draws", type=int, help="per-replication cap; hitting it fails the run")
    p.add_argument("--w-rule", choices=("plain", "coda"))
    p.add_argument("--workers", type=int)
    p.add_argument("--trace-decisions", action="store_true",
                   help="write every stopping check to decisions.csv")
    p.add_argument("--out", help="output directory")
    p.add_argument("--bins", type=int, default=20, help="histogram bins")
    p.add_argument("--config", help="JSON file with the same keys as the flags")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mcmcstop", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    d = sub.add_parser("diag", help="MCSE, significant figures and R_hat for trace CSVs")
    d.add_argument("traces", nargs="+", help="one CSV per chain, one column per functional")
    d.add_argument("--theta", type=float, default=0.5)
    d.add_argument("--confidence", type=float, default=0.95)
    d.add_argument("--columns", help="comma-separated subset of columns")
    d.add_argument("--no-discard", action="store_true",
                   help="keep the first half of each chain for R_hat")
    d.add_argument("--w-rule", choices=("plain", "coda"), default="plain")
    d.add_argument("--out", help="CSV report path")
    d.set_defaults(func=cmd_diag)

    t = sub.add_parser("toy", help="replication study on the normal toy model")
    _add_experiment_flags(t, ("cbm", "grd"))
    t.set_defaults(func=cmd_toy)

    g = sub.add_parser("geo", help="synthetic spatial study")
    gsub = g.add_subparsers(dest="stage", required=True)
    gs = gsub.add_parser("synth", help="generate a dataset and its sidecar")
    gs.add_argument("--sites", type=int)
    gs.add_argument("--seed", type=int)
    gs.add_argument("--out", help="dataset CSV path")
    gs.add_argument("--config")
    gs.set_defaults(func=cmd_geo_synth)
    gp = gsub.add_parser("pilot", help="long run giving the truth and percentile starts")
    gp.add_argument("--data")
    gp.add_argument("--seed", type=int)
    gp.add_argument("--pilot-length", type=int)
    gp.add_argument("--pilot-burn-in", type=int)
    gp.add_argument("--sigma2-update", choices=("slice", "rw"))
    gp.add_argument("--out", help="pilot JSON path")
    gp.add_argument("--config")
    gp.set_defaults(func=cmd_geo_pilot)
    gr = gsub.add_parser("run", help="CBM and/or GRD arms against a pilot")
    _add_experiment_flags(gr, ("cbm", "grd", "both"))
    gr.add_argument("--data")
    gr.add_argument("--pilot")
    gr.add_argument("--sigma2-update", choices=("slice", "rw"))
    gr.set_defaults(func=cmd_geo_run)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
