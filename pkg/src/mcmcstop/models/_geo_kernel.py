"""Compiled inner loop of the spatial sampler.

Each iteration reads its randomness from a buffer of uniforms drawn from the
chain's own stream, so the output does not depend on how a run is split into
calls. Normals come from the Box-Muller transform of buffered uniforms.

Functions that call LAPACK through a ctypes pointer cannot use numba's disk
cache, so they compile on first use in each process (a few seconds).
"""
from __future__ import annotations

import ctypes
import math

import numpy as np
from numba import njit
from numba.extending import get_cython_function_address

_addr = get_cython_function_address("scipy.linalg.cython_lapack", "dpotrf")
_dpotrf = ctypes.CFUNCTYPE(None, ctypes.c_void_p, ctypes.c_void_p, ctypes.c_void_p,
                           ctypes.c_void_p, ctypes.c_void_p)(_addr)

# upper bound on the uniforms one iteration can consume
RESERVE = 256
MAX_SHRINK = 200
_LOG_2PI = math.log(2.0 * math.pi)

TAU2_SHAPE, TAU2_SCALE = 2.0, 30.0
SIGMA2_SHAPE, SIGMA2_SCALE = 0.1, 30.0
PHI_LO, PHI_HI = 0.6, 6.0
_LOG_PHI_NORM = math.log(math.log(PHI_HI / PHI_LO))

SIGMA2_SLICE = 0
SIGMA2_RW = 1

# counters layout
C_STEPS, C_ACCEPTED, C_EVALS, C_NOT_PD = 0, 1, 2, 3


@njit(cache=True)
def fill_correlation(dist, phi, H):
    n = dist.shape[0]
    for i in range(n):
        H[i, i] = 1.0
        for j in range(i):
            v = math.exp(-dist[i, j] / phi)
            H[i, j] = v
            H[j, i] = v


@njit
def gauss_loglik(tau2, sigma2, H, resid, work, y, lapack_args):
    """log N(resid; 0, tau2 I + sigma2 H); ``-inf`` if the matrix is not PD.

    ``lapack_args`` is an int32 array ``[uplo, n, info]``. Only the lower
    triangle of ``work`` (C order) is filled and factorised.
    """
    n = H.shape[0]
    for i in range(n):
        for j in range(i):
            work[i, j] = sigma2 * H[i, j]
        work[i, i] = sigma2 * H[i, i] + tau2
    _dpotrf(lapack_args[0:].ctypes, lapack_args[1:].ctypes, work.ctypes,
            lapack_args[1:].ctypes, lapack_args[2:].ctypes)
    if lapack_args[2] != 0:
        return -np.inf
    quad = 0.0
    logdet = 0.0
    for i in range(n):
        t = resid[i]
        for k in range(i):
            t -= work[i, k] * y[k]
        d = work[i, i]
        y[i] = t / d
        quad += y[i] * y[i]
        logdet += math.log(d)
    return -0.5 * (n * _LOG_2PI + 2.0 * logdet + quad)


@njit(cache=True)
def ig_logpdf(w, shape, scale):
    return shape * math.log(scale) - math.lgamma(shape) - (shape + 1.0) * math.log(w) - scale / w


@njit(cache=True)
def log_prior(tau2, sigma2, phi):
    if not (tau2 > 0.0 and sigma2 > 0.0 and PHI_LO < phi < PHI_HI):
        return -np.inf
    return (ig_logpdf(tau2, TAU2_SHAPE, TAU2_SCALE) + ig_logpdf(sigma2, SIGMA2_SHAPE, SIGMA2_SCALE)
            - math.log(phi) - _LOG_PHI_NORM)


@njit(cache=True)
def _box_muller(u1, u2):
    r = math.sqrt(-2.0 * math.log1p(-u1))
    a = 2.0 * math.pi * u2
    return r * math.cos(a), r * math.sin(a)


@njit
def _log_cond_log_sigma2(s, tau2, H, resid, work, y, lapack_args, ll_out):
    if not -700.0 < s < 700.0:
        ll_out[0] = -np.inf
        return -np.inf
    sigma2 = math.exp(s)
    ll = gauss_loglik(tau2, sigma2, H, resid, work, y, lapack_args)
    ll_out[0] = ll
    if ll == -np.inf:
        return -np.inf
    return ll + ig_logpdf(sigma2, SIGMA2_SHAPE, SIGMA2_SCALE) + s


@njit
def run_chain(n, dist, X, Z, theta, ll_box, H, resid, u, pos, out, proposal_sd, sigma2_mode,
              slice_width, slice_steps, rw_scale, counters):
    """Advance up to ``n`` iterations, writing rows of ``out``.

    Stops early when fewer than ``RESERVE`` uniforms remain in ``u``.
    Returns ``(iterations done, new buffer position)``. ``theta`` holds
    ``(tau2, sigma2, phi, beta)`` and ``ll_box[0]`` the log-likelihood at it;
    both are updated in place together with ``H`` and ``resid``.
    """
    N = dist.shape[0]
    work = np.empty((N, N))
    y = np.empty(N)
    Hp = np.empty((N, N))
    rp = np.empty(N)
    lapack_args = np.array([ord("U"), N, 0], dtype=np.int32)
    ll_tmp = np.empty(1)
    size = u.shape[0]
    done = 0
    while done < n and size - pos >= RESERVE:
        tau2, sigma2, phi, beta = theta[0], theta[1], theta[2], theta[3]
        ll = ll_box[0]

        # joint random-walk move on (tau2, phi, beta)
        z0, z1 = _box_muller(u[pos], u[pos + 1])
        z2, _ = _box_muller(u[pos + 2], u[pos + 3])
        ua = u[pos + 4]
        pos += 5
        tau2p = tau2 + proposal_sd * z0
        phip = phi + proposal_sd * z1
        betap = beta + proposal_sd * z2
        lpp = log_prior(tau2p, sigma2, phip)
        if lpp > -np.inf:
            fill_correlation(dist, phip, Hp)
            for i in range(N):
                rp[i] = Z[i] - X[i] * betap
            llp = gauss_loglik(tau2p, sigma2, Hp, rp, work, y, lapack_args)
            counters[C_EVALS] += 1
            if llp == -np.inf:
                counters[C_NOT_PD] += 1
            else:
                ratio = (llp + lpp) - (ll + log_prior(tau2, sigma2, phi))
                if ratio >= 0.0 or ua < math.exp(ratio):
                    tau2, phi, beta, ll = tau2p, phip, betap, llp
                    H[:, :] = Hp
                    resid[:] = rp
                    counters[C_ACCEPTED] += 1

        # sigma2 given the rest, on the log scale
        s0 = math.log(sigma2)
        f0 = ll + ig_logpdf(sigma2, SIGMA2_SHAPE, SIGMA2_SCALE) + s0
        if sigma2_mode == SIGMA2_SLICE:
            level = f0 + math.log1p(-u[pos])
            left = s0 - slice_width * u[pos + 1]
            right = left + slice_width
            j_left = int(math.floor(slice_steps * u[pos + 2]))
            k_right = slice_steps - 1 - j_left
            pos += 3
            while j_left > 0:
                counters[C_EVALS] += 1
                if _log_cond_log_sigma2(left, tau2, H, resid, work, y, lapack_args,
                                        ll_tmp) <= level:
                    break
                left -= slice_width
                j_left -= 1
            while k_right > 0:
                counters[C_EVALS] += 1
                if _log_cond_log_sigma2(right, tau2, H, resid, work, y, lapack_args,
                                        ll_tmp) <= level:
                    break
                right += slice_width
                k_right -= 1
            for _ in range(MAX_SHRINK):
                s = left + (right - left) * u[pos]
                pos += 1
                counters[C_EVALS] += 1
                f = _log_cond_log_sigma2(s, tau2, H, resid, work, y, lapack_args, ll_tmp)
                if f > level:
                    sigma2 = math.exp(s)
                    ll = ll_tmp[0]
                    break
                if s < s0:
                    left = s
                else:
                    right = s
        else:
            zs, _ = _box_muller(u[pos], u[pos + 1])
            ua = u[pos + 2]
            pos += 3
            s = s0 + rw_scale * zs
            counters[C_EVALS] += 1
            f = _log_cond_log_sigma2(s, tau2, H, resid, work, y, lapack_args, ll_tmp)
            ratio = f - f0
            if f > -np.inf and (ratio >= 0.0 or ua < math.exp(ratio)):
                sigma2 = math.exp(s)
                ll = ll_tmp[0]

        theta[0], theta[1], theta[2], theta[3] = tau2, sigma2, phi, beta
        ll_box[0] = ll
        out[done, 0] = tau2
        out[done, 1] = sigma2
        out[done, 2] = phi
        out[done, 3] = beta
        done += 1
        counters[C_STEPS] += 1
    return done, pos
