"""Experiment configuration shared by the toy and spatial studies.

A config is a flat mapping whose keys match the CLI flags (with dashes
turned into underscores). Unset values fall back to per-model, per-method
defaults from :data:`DEFAULTS`.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping

from ..stopping import DEFAULT_MAX_DRAWS, FixedWidthRule, GrdRule

TOY_FUNCTIONALS = ("mu", "lam")
GEO_FUNCTIONALS = ("tau2", "sigma2", "phi", "beta")

DEFAULTS: dict[tuple[str, str], dict[str, Any]] = {
    ("toy", "cbm"): dict(epsilon=0.04, n_star=400, growth=0.10, growth_mode="relative",
                         replications=1000, start_policy="fixed-value"),
    ("toy", "grd"): dict(delta=1.1, chains=2, n_star=400, growth=0.10, growth_mode="relative",
                         replications=1000, burn_in=True, start_policy="exact-draw"),
    ("geo", "cbm"): dict(epsilon=[0.5, 0.5, 0.05, 0.05], n_star=1000, growth=10,
                         growth_mode="absolute", replications=400,
                         start_policy="percentile-list"),
    ("geo", "grd"): dict(delta=1.1, chains=4, n_star=1000, growth=0.10, growth_mode="relative",
                         replications=100, burn_in=False, start_policy="percentile-list"),
}
START_POLICIES = ("fixed-value", "exact-draw", "percentile-list")


@dataclass
class ExperimentConfig:
    """All knobs of one replication study.

    ``None`` means "use the default for this model and method". ``burn_in``
    controls whether GRD discards the first half of every chain, both in the
    diagnostic and in the headline estimates.
    """

    model: str = "toy"
    method: str = "cbm"
    replications: int | None = None
    seed: int = 0
    epsilon: float | list | None = None
    delta: float | None = None
    chains: int | None = None
    n_star: int | None = None
    growth: float | None = None
    growth_mode: str | None = None
    theta: float = 0.5
    confidence: float = 0.95
    burn_in: bool | None = None
    max_draws: int = DEFAULT_MAX_DRAWS
    w_rule: str = "plain"
    df_rule: str = "standard"
    start_policy: str | None = None
    workers: int = 1
    out: str | None = None
    trace_decisions: bool = False
    # spatial study only
    data: str | None = None
    pilot: str | None = None
    sigma2_update: str = "slice"

    def __post_init__(self):
        if self.model not in ("toy", "geo"):
            raise ValueError("model must be 'toy' or 'geo'")
        if self.method not in ("cbm", "grd"):
            raise ValueError("method must be 'cbm' or 'grd'")
        for key, value in DEFAULTS[(self.model, self.method)].items():
            if getattr(self, key) is None:
                setattr(self, key, value)
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")
        if self.start_policy not in START_POLICIES:
            raise ValueError(f"start_policy must be one of {START_POLICIES}")
        if self.start_policy == "percentile-list" and self.model != "geo":
            raise ValueError("percentile-list starts need a spatial pilot run")
        if self.model == "geo" and self.start_policy != "percentile-list":
            raise ValueError("the spatial study starts from pilot percentiles")
        if self.method == "grd" and self.model == "toy" and self.chains not in (2, 4):
            raise ValueError("toy GRD uses 2 or 4 chains")
        self.rule()  # validate rule parameters early

    @property
    def functionals(self) -> tuple[str, ...]:
        return TOY_FUNCTIONALS if self.model == "toy" else GEO_FUNCTIONALS

    def rule(self) -> FixedWidthRule | GrdRule:
        names = self.functionals
        if self.method == "cbm":
            eps = self.epsilon
            if isinstance(eps, (int, float)):
                eps = [float(eps)] * len(names)
            if len(eps) != len(names):
                raise ValueError(f"need one epsilon per functional {names}")
            return FixedWidthRule(dict(zip(names, eps)), n_star=self.n_star,
                                  confidence=self.confidence, theta=self.theta,
                                  growth=self.growth, growth_mode=self.growth_mode,
                                  max_draws=self.max_draws)
        return GrdRule(delta=self.delta, m=self.chains, n_star=self.n_star, growth=self.growth,
                       growth_mode=self.growth_mode, discard_first_half=bool(self.burn_in),
                       max_draws=self.max_draws, w_rule=self.w_rule, df_rule=self.df_rule)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any]) -> "ExperimentConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        keys = {k.replace("-", "_"): v for k, v in values.items()}
        unknown = sorted(set(keys) - known)
        if unknown:
            raise ValueError(f"unknown config keys: {unknown}")
        return cls(**keys)

    @classmethod
    def from_json(cls, path, **overrides) -> "ExperimentConfig":
        values = json.loads(Path(path).read_text())
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls.from_mapping(values)
