"""Hierarchical spatial regression with an exponential covariance.

    Z = X beta + xi,   xi ~ N(0, tau2 I + sigma2 H(phi)),   H_ij = exp(-|s_i - s_j| / phi)

with priors tau2 ~ IG(2, 30), sigma2 ~ IG(0.1, 30), phi ~ Log-Unif(0.6, 6)
and a flat prior on beta.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import lapack

from ..distributions import InverseGammaParams, RngStream, draw_mvn
from . import _geo_kernel as _k

logger = logging.getLogger(__name__)

TAU2_PRIOR = InverseGammaParams(2.0, 30.0)
SIGMA2_PRIOR = InverseGammaParams(0.1, 30.0)
PHI_BOUNDS = (0.6, 6.0)
PARAMS = ("tau2", "sigma2", "phi", "beta")
_LOG_PHI_NORM = math.log(math.log(PHI_BOUNDS[1] / PHI_BOUNDS[0]))
_LOG_2PI = math.log(2 * math.pi)


@dataclass(frozen=True)
class GeoState:
    tau2: float
    sigma2: float
    phi: float
    beta: float

    def in_support(self) -> bool:
        return self.tau2 > 0 and self.sigma2 > 0 and PHI_BOUNDS[0] < self.phi < PHI_BOUNDS[1]

    def as_array(self) -> np.ndarray:
        return np.array([self.tau2, self.sigma2, self.phi, self.beta])

    @classmethod
    def from_array(cls, v) -> "GeoState":
        return cls(*(float(x) for x in v))


@dataclass
class GeoData:
    """Sites (N x 2), covariate ``X`` (latitude, i.e. the second coordinate) and response ``Z``."""

    sites: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    distances: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.sites = np.asarray(self.sites, dtype=float)
        self.X = np.asarray(self.X, dtype=float).ravel()
        self.Z = np.asarray(self.Z, dtype=float).ravel()
        n = self.sites.shape[0]
        if self.sites.ndim != 2 or self.sites.shape[1] != 2:
            raise ValueError("sites must have shape (N, 2)")
        if n < 3:
            raise ValueError("need at least 3 sites")
        if self.X.size != n or self.Z.size != n:
            raise ValueError("X and Z must have one entry per site")
        diff = self.sites[:, None, :] - self.sites[None, :, :]
        self.distances = np.sqrt((diff**2).sum(axis=-1))
        off = self.distances[~np.eye(n, dtype=bool)]
        if np.any(off <= 0):
            raise ValueError("sites must be distinct")

    @property
    def N(self) -> int:
        return self.sites.shape[0]

    def to_csv(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("x,y,X,Z\n")
            for (x, y), xv, zv in zip(self.sites, self.X, self.Z):
                fh.write(",".join(repr(float(v)) for v in (x, y, xv, zv)) + "\n")

    @classmethod
    def from_csv(cls, path) -> "GeoData":
        arr = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        return cls(sites=arr[:, :2], X=arr[:, 2], Z=arr[:, 3])


def geo_correlation(sites, phi: float) -> np.ndarray:
    """Exponential correlation matrix ``exp(-|s_i - s_j| / phi)`` for N x 2 sites."""
    if phi <= 0:
        raise ValueError("phi must be positive")
    s = np.asarray(sites, dtype=float)
    d = np.sqrt(((s[:, None, :] - s[None, :, :]) ** 2).sum(axis=-1))
    return np.exp(-d / phi)


def _gauss_loglik(cov: np.ndarray, resid: np.ndarray) -> float:
    """log N(resid; 0, cov) through a Cholesky factor; -inf if cov is not PD."""
    chol, info = lapack.dpotrf(cov, lower=1, clean=0, overwrite_a=0)
    if info != 0:
        logger.warning("covariance not positive definite; treating state as rejected")
        return -math.inf
    y, info = lapack.dtrtrs(chol, resid, lower=1)
    logdet = 2.0 * float(np.log(np.diag(chol)).sum())
    return -0.5 * (resid.size * _LOG_2PI + logdet + float(y @ y))


def _ig_logpdf(w: float, prior: InverseGammaParams) -> float:
    a, b = prior.shape, prior.scale
    return a * math.log(b) - math.lgamma(a) - (a + 1) * math.log(w) - b / w


def _log_prior(tau2: float, sigma2: float, phi: float) -> float:
    if not (tau2 > 0 and sigma2 > 0 and PHI_BOUNDS[0] < phi < PHI_BOUNDS[1]):
        return -math.inf
    return (_ig_logpdf(tau2, TAU2_PRIOR) + _ig_logpdf(sigma2, SIGMA2_PRIOR)
            - math.log(phi) - _LOG_PHI_NORM)


def geo_log_posterior(state: GeoState, data: GeoData) -> float:
    """Unnormalised log posterior; ``-inf`` outside the prior support."""
    lp = _log_prior(state.tau2, state.sigma2, state.phi)
    if lp == -math.inf:
        return lp
    cov = state.sigma2 * np.exp(-data.distances / state.phi)
    cov[np.diag_indices_from(cov)] += state.tau2
    return lp + _gauss_loglik(cov, data.Z - data.X * state.beta)


class GeoSampler:
    """Metropolis-within-Gibbs sampler for ``(tau2, sigma2, phi, beta)``.

    Each iteration makes a joint random-walk proposal for ``(tau2, phi, beta)``
    with independent ``N(0, proposal_var)`` increments, then updates
    ``sigma2`` from its full conditional with a slice sampler on
    ``log sigma2`` (or, with ``sigma2_update="rw"``, a random-walk Metropolis
    step on ``log sigma2``).

    The sampler owns ``stream`` and reads it in blocks of ``BUFFER`` uniforms,
    so ``run(a)`` followed by ``run(b)`` gives the same draws as ``run(a + b)``.

    Parameters
    ----------
    slice_width : float, default 3.0
        Initial bracket width on the ``log sigma2`` scale.
    slice_steps : int, default 1
        Stepping-out budget (Neal's ``m``); 1 keeps the initial bracket.
    rw_scale : float, default 0.5
        Proposal standard deviation on ``log sigma2`` for ``sigma2_update="rw"``.
    """

    BUFFER = 8192

    def __init__(self, data: GeoData, state: GeoState, stream: RngStream,
                 proposal_var: float = 0.3, sigma2_update: str = "slice",
                 slice_width: float = 3.0, slice_steps: int = 1, rw_scale: float = 0.5):
        if sigma2_update not in ("slice", "rw"):
            raise ValueError("sigma2_update must be 'slice' or 'rw'")
        if proposal_var < 0:
            raise ValueError("proposal_var must be non-negative")
        if slice_width <= 0 or int(slice_steps) < 1 or rw_scale <= 0:
            raise ValueError("slice_width, slice_steps and rw_scale must be positive")
        if not state.in_support():
            raise ValueError(f"start state outside prior support: {state}")
        self.data = data
        self.stream = stream
        self.proposal_sd = math.sqrt(proposal_var)
        self.sigma2_update = sigma2_update
        self.slice_width = float(slice_width)
        self.slice_steps = int(slice_steps)
        self.rw_scale = float(rw_scale)
        self._theta = state.as_array()
        self._H = np.exp(-data.distances / state.phi)
        self._resid = data.Z - data.X * state.beta
        ll = _gauss_loglik(state.sigma2 * self._H + state.tau2 * np.eye(data.N), self._resid)
        if ll == -math.inf:
            raise ValueError("covariance at the start state is not positive definite")
        self._ll = np.array([ll])
        self._u = np.empty(0)
        self._pos = 0
        self._counters = np.zeros(4, dtype=np.int64)

    @property
    def state(self) -> GeoState:
        return GeoState.from_array(self._theta)

    @property
    def n_steps(self) -> int:
        return int(self._counters[_k.C_STEPS])

    @property
    def n_accepted(self) -> int:
        """Accepted joint ``(tau2, phi, beta)`` moves."""
        return int(self._counters[_k.C_ACCEPTED])

    @property
    def n_loglik_evals(self) -> int:
        return int(self._counters[_k.C_EVALS])

    def run(self, n: int) -> np.ndarray:
        """Advance ``n`` iterations; returns draws of shape ``(n, 4)`` in ``PARAMS`` order."""
        n = int(n)
        out = np.empty((n, 4))
        done = 0
        not_pd = self._counters[_k.C_NOT_PD]
        mode = _k.SIGMA2_SLICE if self.sigma2_update == "slice" else _k.SIGMA2_RW
        while done < n:
            if self._u.size - self._pos < _k.RESERVE:
                self._u = np.concatenate([self._u[self._pos:], self.stream.uniform(self.BUFFER)])
                self._pos = 0
            k, self._pos = _k.run_chain(
                n - done, self.data.distances, self.data.X, self.data.Z, self._theta, self._ll,
                self._H, self._resid, self._u, self._pos, out[done:], self.proposal_sd, mode,
                self.slice_width, self.slice_steps, self.rw_scale, self._counters)
            done += k
        if self._counters[_k.C_NOT_PD] > not_pd:
            logger.warning("covariance not positive definite at %d proposals; treated as rejected",
                           self._counters[_k.C_NOT_PD] - not_pd)
        return out

    def step(self) -> bool:
        """One iteration; returns whether the joint move was accepted."""
        before = self.n_accepted
        self.run(1)
        return self.n_accepted > before


def geo_mh_step(state: GeoState, data: GeoData, stream: RngStream, proposal_var: float = 0.3,
                sigma2_update: str = "slice") -> tuple[GeoState, bool]:
    """One full iteration from ``state``; returns the new state and whether the joint move was accepted.

    A fresh sampler is built on every call and buffers uniforms from
    ``stream``; use :class:`GeoSampler` for runs.
    """
    sampler = GeoSampler(data, state, stream, proposal_var=proposal_var,
                         sigma2_update=sigma2_update)
    accepted = sampler.step()
    return sampler.state, accepted


def synth_geo_data(stream: RngStream, N: int, true_state: GeoState,
                   region: tuple[float, float, float, float] = (0.0, 6.0, 0.0, 4.0)) -> GeoData:
    """Sites uniform on ``region = (xmin, xmax, ymin, ymax)``; ``X`` is the y coordinate."""
    if N < 3:
        raise ValueError("need at least 3 sites")
    xmin, xmax, ymin, ymax = region
    u = stream.uniform((N, 2))
    sites = np.column_stack([xmin + (xmax - xmin) * u[:, 0], ymin + (ymax - ymin) * u[:, 1]])
    X = sites[:, 1].copy()
    cov = true_state.tau2 * np.eye(N) + true_state.sigma2 * geo_correlation(sites, true_state.phi)
    Z = draw_mvn(stream, X * true_state.beta, cov)
    return GeoData(sites=sites, X=X, Z=Z)


def write_geo_sidecar(path, *, seed: int, stream_id: int, N: int, true_state: GeoState,
                      region) -> None:
    with open(path, "w") as fh:
        json.dump({"seed": seed, "stream_id": stream_id, "N": N, "region": list(region),
                   "true_state": asdict(true_state)}, fh, indent=2, sort_keys=True)
        fh.write("\n")
