import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from netfactor.netcore import SparseNetwork
from netfactor.varmath import (
    ConditioningError, FactorState, GaussianFactor, Link, ModelConfig, default_prior_mean,
    link_forward, link_inverse, mean_sq_change, mills_ratio, moments_to_natural,
    natural_to_moments, pg_mean, psi_pair, tn_mean, xi_pair,
)

mp.mp.dps = 40


def mp_pg_mean(xi):
    """Mean of PG(1, xi) from its infinite-convolution representation."""
    c2 = mp.mpf(xi) ** 2 / (4 * mp.pi ** 2)
    return mp.nsum(lambda k: 1 / ((k - mp.mpf(1) / 2) ** 2 + c2), [1, mp.inf]) / (2 * mp.pi ** 2)


def mp_pg_mean_laplace(xi):
    """Mean of PG(1, xi) as minus the derivative of its Laplace transform at zero."""
    c = mp.mpf(xi)
    lt = lambda t: mp.cosh(c / 2) / mp.cosh(mp.sqrt((c ** 2 / 2 + t) / 2))
    return -mp.diff(lt, 0)


def mp_mills(x):
    x = mp.mpf(x)
    return mp.npdf(x) / mp.ncdf(x)


def random_spd(rng, H):
    X = rng.standard_normal((H, H))
    return X @ X.T + 0.5 * np.eye(H)


class TestLinks:
    @pytest.mark.parametrize("link", ["logit", "probit"])
    def test_half_at_zero(self, link):
        assert link_inverse(0.0, link) == 0.5

    def test_logit_two(self):
        assert link_inverse(2.0, "logit") == pytest.approx(float(1 / (1 + mp.exp(-2))), abs=1e-15)
        assert round(float(link_inverse(2.0, "logit")), 6) == 0.880797

    def test_probit_matches_mpmath(self):
        for x in (-8.0, -1.3, 0.7, 4.0):
            assert link_inverse(x, "probit") == pytest.approx(float(mp.ncdf(x)), rel=1e-12)

    @given(st.floats(1e-6, 1 - 1e-6))
    def test_forward_inverts(self, p):
        for link in Link:
            assert link_inverse(link_forward(p, link), link) == pytest.approx(p, rel=1e-9)

    def test_saturates(self):
        assert 0.0 <= link_inverse(-800.0, "logit") < 1e-300
        assert link_inverse(40.0, "probit") == 1.0

    def test_parse(self):
        assert Link.parse("PROBIT") is Link.PROBIT
        with pytest.raises(ValueError):
            Link.parse("cloglog")


class TestPolyaGammaMean:
    def test_zero(self):
        assert pg_mean(0.0) == 0.25

    def test_two(self):
        assert pg_mean(2.0) == pytest.approx(math.tanh(1.0) / 4, abs=1e-15)
        assert round(pg_mean(2.0), 6) == 0.190399
        assert pg_mean(2.0) == pytest.approx(float(mp_pg_mean(2)), abs=1e-8)

    @pytest.mark.parametrize("xi", [1e-9, 1e-4, 1e-3, 0.01, 0.5, 3.0, 20.0])
    def test_series_oracle(self, xi):
        assert pg_mean(xi) == pytest.approx(float(mp_pg_mean(xi)), rel=1e-12)

    @pytest.mark.parametrize("xi", [1e-6, 0.3, 5.0, 50.0, 800.0])
    def test_laplace_oracle(self, xi):
        assert pg_mean(xi) == pytest.approx(float(mp_pg_mean_laplace(xi)), rel=1e-12)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            pg_mean(-0.1)
        with pytest.raises(ValueError):
            pg_mean(np.array([0.1, np.nan]))

    @given(st.floats(0, 1e3), st.floats(0, 1e3))
    def test_decreasing_and_bounded(self, a, b):
        lo, hi = sorted((a, b))
        assert 0 < pg_mean(hi) <= pg_mean(lo) <= 0.25

    def test_continuous_at_series_switch(self):
        xs = np.array([1e-3 * (1 - 1e-12), 1e-3, 1e-3 * (1 + 1e-12)])
        v = pg_mean(xs)
        assert np.ptp(v) < 1e-14

    def test_vectorised(self):
        xs = np.array([0.0, 1.0, 3.0])
        assert np.allclose(pg_mean(xs), [0.25, math.tanh(0.5) / 2, math.tanh(1.5) / 6])


class TestTruncatedNormalMean:
    def test_examples(self):
        assert round(tn_mean(0.0, 1), 6) == 0.797885
        assert round(tn_mean(0.0, 0), 6) == -0.797885
        assert round(tn_mean(2.0, 1), 6) == 2.055248

    @pytest.mark.parametrize("g", [-30, -26, -25, -24, -10, -3, -0.5, 0, 1, 3, 10, 30])
    def test_mills_oracle(self, g):
        assert mills_ratio(g) == pytest.approx(float(mp_mills(g)), rel=1e-10)
        assert tn_mean(g, 1) - g == pytest.approx(float(mp_mills(g)), rel=1e-9)

    @given(st.floats(-30, 30))
    def test_truncation_side(self, g):
        # the excess over g is the Mills ratio, which drops below one ulp of g
        # for large g, so the strict ordering is checked on the excess itself
        assert mills_ratio(g) > 0 and mills_ratio(-g) > 0
        assert tn_mean(g, 1) >= g
        assert tn_mean(g, 0) <= g
        if abs(g) < 5:
            assert tn_mean(g, 1) > g > tn_mean(g, 0)
        assert np.isfinite(tn_mean(g, 1)) and np.isfinite(tn_mean(g, 0))

    @given(st.floats(-30, 30))
    def test_reflection(self, g):
        assert tn_mean(g, 0) == pytest.approx(-tn_mean(-g, 1), rel=1e-14, abs=1e-14)


class TestNaturalParameters:
    def test_identity_precision(self):
        mu, Sigma, S = natural_to_moments(np.array([1.0, -2.0]), -0.5 * np.eye(2))
        assert np.allclose(mu, [1, -2]) and np.allclose(Sigma, np.eye(2))
        assert np.allclose(S, np.eye(2) + np.outer(mu, mu))

    def test_diagonal(self):
        mu, Sigma, _ = natural_to_moments(np.array([2.0, 0.0]), -np.eye(2))
        assert np.allclose(mu, [1, 0]) and np.allclose(Sigma, 0.5 * np.eye(2))

    @given(st.integers(0, 10_000), st.integers(1, 8))
    @settings(max_examples=40)
    def test_inverse_oracle_and_round_trip(self, seed, H):
        rng = np.random.default_rng(seed)
        P = random_spd(rng, H)
        l1 = rng.standard_normal(H)
        mu, Sigma, S = natural_to_moments(l1, -0.5 * P)
        inv = np.linalg.inv(P)
        assert np.allclose(Sigma, inv, atol=1e-12, rtol=1e-10)
        assert np.allclose(mu, inv @ l1, atol=1e-12, rtol=1e-10)
        np.linalg.cholesky(S)
        b1, b2 = moments_to_natural(mu, Sigma)
        assert np.allclose(b1, l1, atol=1e-10) and np.allclose(b2, -0.5 * P, atol=1e-10)

    def test_indefinite_names_node(self):
        with pytest.raises(ConditioningError, match="node 7") as exc:
            natural_to_moments(np.zeros(2), np.diag([-0.5, 0.5]), node=7)
        assert exc.value.node == 7

    def test_asymmetric_rejected(self):
        with pytest.raises(ConditioningError):
            natural_to_moments(np.zeros(2), np.array([[-1.0, 0.3], [0.0, -1.0]]))

    def test_gaussian_factor(self):
        f = GaussianFactor.from_natural(np.array([0.5]), np.array([[-1.0]]))
        assert f.mu[0] == pytest.approx(0.25, abs=1e-15)
        assert f.Sigma[0, 0] == pytest.approx(0.5, abs=1e-15)


class TestPairQuantities:
    def test_xi_identity(self):
        assert xi_pair(np.eye(4), np.eye(4)) == 2.0
        assert xi_pair(np.eye(2), np.diag([4.0, 1.0])) == pytest.approx(math.sqrt(5))

    @given(st.integers(0, 10_000), st.integers(1, 6))
    def test_xi_trace_oracle(self, seed, H):
        rng = np.random.default_rng(seed)
        A, B = random_spd(rng, H), random_spd(rng, H)
        assert xi_pair(A, B) == pytest.approx(math.sqrt(np.trace(A @ B)), rel=1e-13)
        assert xi_pair(A, A) == pytest.approx(np.linalg.norm(A, "fro"), rel=1e-13)

    def test_xi_negative_guard(self):
        with pytest.raises(ArithmeticError):
            xi_pair(np.eye(2), -np.eye(2))

    def test_psi(self):
        assert psi_pair([1, 0], [0, 1]) == 0.0
        assert psi_pair([1, 1], [1, 1]) == 2.0
        with pytest.raises(ValueError):
            psi_pair([1, 2], [1, 2, 3])

    @given(st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=10))
    def test_psi_summation_oracle(self, xs):
        a = np.array(xs)
        b = a[::-1].copy()
        assert psi_pair(a, b) == pytest.approx(sum(x * y for x, y in zip(a, b)), rel=1e-12,
                                               abs=1e-9)


class TestPriorMean:
    def path4(self):
        return SparseNetwork.from_edges(4, [0, 1, 2], [1, 2, 3])

    def test_half_density(self):
        cfg = ModelConfig(4)
        assert np.array_equal(default_prior_mean(self.path4(), cfg), np.zeros(4))
        assert np.array_equal(default_prior_mean(self.path4(), ModelConfig(4, link="probit")),
                              np.zeros(4))

    def test_tenth_density(self):
        # 5 nodes, 1 edge out of 10 dyads
        net = SparseNetwork.from_edges(5, [0], [1])
        a0 = default_prior_mean(net, ModelConfig(3))
        assert np.allclose(a0, float(mp.log(mp.mpf(1) / 9)), atol=1e-12)
        assert round(a0[0], 6) == -2.197225

    def test_degenerate_density(self):
        with pytest.raises(ValueError, match="a0"):
            default_prior_mean(SparseNetwork.from_edges(3, [0, 0, 1], [1, 2, 2]), ModelConfig())
        with pytest.raises(ValueError):
            default_prior_mean(SparseNetwork.from_neighbors([[], []]), ModelConfig())

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(0)
        with pytest.raises(ValueError):
            ModelConfig(2, a0=[0.0, np.inf])
        assert np.array_equal(ModelConfig(3, a0=-1.0).a0, [-1.0, -1.0, -1.0])


class TestFactorState:
    def test_from_moments_round_trip(self):
        rng = np.random.default_rng(0)
        Sigma = np.stack([np.linalg.inv(random_spd(rng, 3)) for _ in range(5)])
        mu = rng.standard_normal((5, 3))
        st_ = FactorState.from_moments(mu, Sigma)
        assert np.allclose(st_.mu, mu) and np.allclose(st_.Sigma, Sigma)
        st_.validate()
        assert len(st_) == 5 and st_.H == 3
        f = st_.factor(2)
        assert np.allclose(f.S, Sigma[2] + np.outer(mu[2], mu[2]))

    def test_bad_node_reported(self):
        l2 = np.stack([-0.5 * np.eye(2)] * 3)
        l2[1] = np.diag([-0.5, 0.1])
        with pytest.raises(ConditioningError) as exc:
            FactorState.from_natural(np.zeros((3, 2)), l2)
        assert exc.value.node == 1

    def test_copy_is_deep(self):
        s = FactorState.from_natural(np.zeros((2, 1)), -0.5 * np.ones((2, 1, 1)))
        c = s.copy()
        c.mu[0, 0] = 9.0
        assert s.mu[0, 0] == 0.0

    def test_mean_sq_change(self):
        mu0, mu1 = np.zeros((2, 2)), np.ones((2, 2))
        S0 = np.zeros((2, 2, 2))
        # 4 mean entries changed by 1, 8 covariance entries unchanged
        assert mean_sq_change(mu0, S0, mu1, S0) == pytest.approx(4 / 12)
