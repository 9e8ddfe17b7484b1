import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mcmcstop.distributions import f_quantile
from mcmcstop.gelman_rubin import (DegenerateVarianceError, GelmanRubin, between_within, psrf,
                                   psrf_upper)
from mcmcstop.traces import MultiChainTrace

FIXTURE = MultiChainTrace([[0.0, 2.0], [1.0, 3.0]])

chains = st.tuples(st.integers(2, 6), st.integers(3, 40), st.integers(0, 2**32 - 1))


def random_chains(m, length, seed):
    rng = np.random.default_rng(seed)
    return rng.standard_normal((m, length)) * rng.uniform(0.1, 3, size=(m, 1)) \
        + rng.normal(0, 1, size=(m, 1))


def test_between_within_fixture():
    B, W, means, svars = between_within(FIXTURE)
    assert (B, W) == (1.0, 2.0)
    np.testing.assert_array_equal(means, [1.0, 2.0])
    np.testing.assert_array_equal(svars, [2.0, 2.0])


def test_between_within_shifted_copies(rng):
    base = rng.standard_normal(50)
    c = np.array([0.0, 1.0, -2.0])
    B, W, _, _ = between_within(base[None, :] + c[:, None])
    assert W == pytest.approx(base.var(ddof=1), rel=1e-12)
    assert B == pytest.approx(50 * c.var(ddof=1), rel=1e-12)
    B0, _, _, _ = between_within(np.stack([base, base]))
    assert B0 == 0


def test_degenerate_within_variance():
    with pytest.raises(DegenerateVarianceError, match="degenerate within-chain variance"):
        between_within(np.ones((3, 10)))


def test_psrf_fixture():
    r = psrf(FIXTURE)
    assert r.B == pytest.approx(1.0, abs=1e-12)
    assert r.W == pytest.approx(2.0, abs=1e-12)
    assert r.V_hat == pytest.approx(1.75, abs=1e-12)
    assert r.var_V_hat == pytest.approx(1.125, abs=1e-12)
    assert r.d == pytest.approx(2 * 1.75**2 / 1.125, abs=1e-12)
    d = r.d
    assert r.R_hat == pytest.approx(math.sqrt((d + 3) / (d + 1) * 1.75 / 2), abs=1e-12)
    assert r.sigma2_W == 0 and math.isinf(r.w)
    # sigma2_W = 0 sends w to infinity: F(1, inf) at 0.975 is the chi2_1 quantile 5.0239
    f = f_quantile(0.975, 1, math.inf)
    expected = math.sqrt((d + 3) / (d + 1) * (0.5 + f * 3 / 4 * 0.5))
    assert r.R_upper == pytest.approx(expected, abs=1e-12)
    assert r.R_upper == pytest.approx(1.767429247174211, abs=1e-12)


def test_printed_df_rule():
    r = psrf(FIXTURE, df_rule="printed")
    assert r.d == pytest.approx(2 * 1.75 / 1.125, abs=1e-12)
    with pytest.raises(ValueError):
        psrf(FIXTURE, df_rule="other")
    with pytest.raises(ValueError):
        psrf(FIXTURE, w_rule="other")


def test_identical_chains_rhat():
    c = [0.0, 1.0, 5.0, 2.0]
    r = psrf(MultiChainTrace([c, c]))
    assert r.B == 0
    assert r.R_hat == pytest.approx(math.sqrt(3 / 4), abs=1e-14)
    assert r.R_upper == pytest.approx(r.R_hat, abs=1e-14)


def test_zero_between_kills_f_term(rng):
    base = rng.standard_normal(30)
    arr = np.stack([base, base[::-1]])
    r = psrf(arr)
    assert r.B == pytest.approx(0.0, abs=1e-12)
    corr = (r.d + 3) / (r.d + 1) if math.isfinite(r.d) else 1.0
    assert r.R_upper == pytest.approx(math.sqrt(corr * 29 / 30), abs=1e-9)


def test_psrf_upper_matches_report(rng):
    r = psrf(rng.standard_normal((4, 100)))
    assert psrf_upper(r) == r.R_upper


def test_coda_w_rule_changes_only_w(rng):
    arr = random_chains(4, 100, 5)
    a, b = psrf(arr), psrf(arr, w_rule="coda")
    assert b.w == pytest.approx(4 * a.w, rel=1e-12)
    assert (a.B, a.W, a.R_hat) == (b.B, b.W, b.R_hat)


def test_upper_dominates_on_random_multichains():
    rng = np.random.default_rng(99)
    for _ in range(1000):
        m = int(rng.integers(2, 7))
        length = int(rng.integers(2, 60))
        r = psrf(random_chains(m, length, int(rng.integers(2**32))))
        assert r.R_upper >= r.R_hat


@given(chains, st.floats(-5, 5).filter(lambda c: abs(c) > 1e-3), st.floats(-100, 100))
def test_affine_equivariance(ch, c, k):
    arr = random_chains(*ch)
    r1, r2 = psrf(arr), psrf(c * arr + k)
    assert r2.R_hat == pytest.approx(r1.R_hat, rel=1e-8)
    assert r2.R_upper == pytest.approx(r1.R_upper, rel=1e-8)


@given(chains, st.randoms())
def test_chain_permutation_invariance(ch, rnd):
    arr = random_chains(*ch)
    order = list(range(arr.shape[0]))
    rnd.shuffle(order)
    r1, r2 = psrf(arr), psrf(arr[order])
    for f in ("B", "W", "V_hat", "var_V_hat", "R_hat", "sigma2_W", "R_upper"):
        assert getattr(r2, f) == pytest.approx(getattr(r1, f), rel=1e-9, abs=1e-12)


def test_long_iid_chains_converge(rng):
    r = psrf(rng.standard_normal((2, 10**5)))
    assert abs(r.R_hat - 1) < 0.01


def test_median_rhat_for_iid_chains():
    vals = [psrf(np.random.default_rng(s).standard_normal((3, 10**4))).R_hat for s in range(200)]
    assert 0.99 < np.median(vals) < 1.02


def test_estimator(rng):
    X = rng.standard_normal((3, 41, 2))
    gr = GelmanRubin().fit(X)
    assert gr.get_params()["discard_first_half"] is True
    assert gr.rhat_.shape == (2,) and gr.n_features_in_ == 2
    ref = psrf(X[:, 21:, 1])
    assert gr.reports_[1] == ref
    assert gr.converged(10.0).all()
    full = GelmanRubin(discard_first_half=False).fit(MultiChainTrace.from_array(X[:, :, 0]))
    assert full.reports_[0] == psrf(X[:, :, 0])
