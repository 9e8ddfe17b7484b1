"""Containers for chain output and the ergodic-average estimator."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np


class ScalarTrace:
    """Append-only record of one real-valued functional along one chain.

    Draws are stored in a growable buffer; ``values`` returns a read-only
    view, so recorded entries cannot be changed through it.
    """

    __slots__ = ("_buf", "_n", "name")

    def __init__(self, values: Iterable[float] = (), name: str | None = None):
        arr = np.array(list(values) if not isinstance(values, np.ndarray) else values,
                       dtype=float).ravel()
        self._buf = np.empty(max(16, arr.size), dtype=float)
        self._buf[: arr.size] = arr
        self._n = arr.size
        self.name = name

    @property
    def n(self) -> int:
        return self._n

    def __len__(self) -> int:
        return self._n

    @property
    def values(self) -> np.ndarray:
        view = self._buf[: self._n]
        view.flags.writeable = False
        return view

    def _reserve(self, extra: int) -> None:
        need = self._n + extra
        if need > self._buf.size:
            cap = max(need, 2 * self._buf.size)
            new = np.empty(cap, dtype=float)
            new[: self._n] = self._buf[: self._n]
            self._buf = new

    def append(self, value: float) -> None:
        self._reserve(1)
        self._buf[self._n] = value
        self._n += 1

    def extend(self, values: Iterable[float]) -> None:
        arr = np.asarray(values, dtype=float).ravel()
        self._reserve(arr.size)
        self._buf[self._n : self._n + arr.size] = arr
        self._n += arr.size

    def __repr__(self) -> str:
        return f"ScalarTrace(n={self._n}, name={self.name!r})"


class MultiChainTrace:
    """``m >= 2`` equal-length traces of one functional from parallel chains."""

    def __init__(self, chains: Sequence[ScalarTrace | Sequence[float] | np.ndarray]):
        traces = [c if isinstance(c, ScalarTrace) else ScalarTrace(c) for c in chains]
        if len(traces) < 2:
            raise ValueError("a multichain trace needs at least 2 chains")
        lengths = {t.n for t in traces}
        if len(lengths) != 1:
            raise ValueError(f"chains have unequal lengths: {sorted(lengths)}")
        self.chains = traces

    @classmethod
    def from_array(cls, arr) -> "MultiChainTrace":
        """Build from an array of shape ``(m, length)``."""
        arr = np.asarray(arr, dtype=float)
        if arr.ndim != 2:
            raise ValueError("expected a 2-d array of shape (chains, draws)")
        return cls([ScalarTrace(row) for row in arr])

    @property
    def m(self) -> int:
        return len(self.chains)

    @property
    def per_chain_length(self) -> int:
        return self.chains[0].n

    def to_array(self) -> np.ndarray:
        return np.vstack([c.values for c in self.chains])

    def __repr__(self) -> str:
        return f"MultiChainTrace(m={self.m}, per_chain_length={self.per_chain_length})"


@dataclass(frozen=True)
class EstimateWithError:
    point: float
    mcse: float
    half_width: float
    confidence: float
    n_used: int


def _as_values(trace) -> np.ndarray:
    if isinstance(trace, ScalarTrace):
        return trace.values
    return np.asarray(trace, dtype=float).ravel()


def ergodic_average(trace) -> float:
    """Mean of all recorded draws, with exactly rounded summation."""
    x = _as_values(trace)
    if x.size == 0:
        raise ValueError("empty trace")
    return math.fsum(x.tolist()) / x.size


def retain_last_half(multi: MultiChainTrace) -> MultiChainTrace:
    """Drop the first ``ceil(L/2)`` draws of every chain, keeping ``floor(L/2)``."""
    length = multi.per_chain_length
    if length < 2:
        raise ValueError("chains must have at least 2 draws to discard half")
    start = length - length // 2
    return MultiChainTrace([ScalarTrace(c.values[start:], name=c.name) for c in multi.chains])


def pooled_mean(multi: MultiChainTrace) -> float:
    arr = multi.to_array()
    if arr.size == 0:
        raise ValueError("empty trace")
    return math.fsum(arr.ravel().tolist()) / arr.size


def read_trace_csv(path) -> dict[str, np.ndarray]:
    """Read a trace CSV: header of functional names, one row per iteration."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise ValueError(f"{path}: empty trace file") from None
        rows = [[float(v) for v in row] for row in reader if row and any(v.strip() for v in row)]
    if not rows:
        raise ValueError(f"{path}: no draws")
    data = np.array(rows, dtype=float)
    if data.shape[1] != len(header):
        raise ValueError(f"{path}: {data.shape[1]} columns but {len(header)} names")
    return {name: data[:, j].copy() for j, name in enumerate(header)}


def write_trace_csv(path, columns: dict[str, Sequence[float]]) -> None:
    names = list(columns)
    arrs = [np.asarray(columns[k], dtype=float) for k in names]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(names)
        for row in zip(*arrs):
            w.writerow([repr(float(v)) for v in row])
