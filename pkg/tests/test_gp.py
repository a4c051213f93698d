import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pombo import oracles
from pombo.gp import (
    LAMBDA_MIN,
    ConfigurationError,
    StateError,
    gp_mlm,
    gp_new,
    gp_posterior,
    gp_refit,
    gp_update,
    gp_update_batch,
    weight_draw,
    weight_posterior,
)


def _loglik(X, y, sigma_nar, nu, lam):
    # exact Gaussian log-likelihood with Sigma = lam^2 (X X^T + sigma_nar^2 I)
    s = len(y)
    cov = lam**2 * (X @ X.T + sigma_nar**2 * np.eye(s))
    r = y - nu
    _, logdet = np.linalg.slogdet(cov)
    return -0.5 * (logdet + r @ np.linalg.solve(cov, r))


class TestNew:
    def test_unit_noise(self):
        np.testing.assert_array_equal(gp_new(2, 1.0).psi_inv, np.eye(2))

    def test_small_noise(self):
        st_ = gp_new(3, 0.1, bonus=4.0)
        np.testing.assert_allclose(st_.psi_inv, 100.0 * np.eye(3), rtol=1e-14)
        assert st_.bonus == 4.0 and st_.nu == 0.0 and st_.lam == 1.0
        assert st_.s_11 == 0 and not st_.phi_y.any() and not st_.phi_one.any()

    @pytest.mark.parametrize("kwargs", [dict(d=0), dict(d=-1), dict(d=2, sigma_nar=0.0), dict(d=2, bonus=0.5)])
    def test_rejects(self, kwargs):
        with pytest.raises(ConfigurationError):
            gp_new(**kwargs)


class TestUpdate:
    def test_axis_update(self):
        st_ = gp_update(gp_new(2, 1.0), np.array([1.0, 0.0]), 0.7)
        np.testing.assert_allclose(st_.psi_inv, np.diag([0.5, 1.0]), atol=1e-15)

    def test_matches_direct_inverse(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(50, 8))
        st_ = gp_update_batch(gp_new(8, 0.3), X, rng.normal(size=50))
        direct = np.linalg.inv(X.T @ X + 0.09 * np.eye(8))
        np.testing.assert_allclose(st_.psi_inv, direct, atol=1e-8)

    def test_symmetry_after_many_updates(self):
        rng = np.random.default_rng(1)
        st_ = gp_update_batch(gp_new(6, 0.05), rng.normal(size=(100, 6)), rng.normal(size=100))
        assert np.abs(st_.psi_inv - st_.psi_inv.T).max() < 1e-12
        np.linalg.cholesky(st_.psi_inv)

    def test_statistics(self):
        X, y = np.array([[1.0, 2.0], [0.5, -1.0]]), np.array([3.0, -2.0])
        st_ = gp_update_batch(gp_new(2, 1.0), X, y)
        np.testing.assert_allclose(st_.phi_y, X.T @ y)
        np.testing.assert_allclose(st_.phi_one, X.sum(axis=0))
        assert (st_.s_yy, st_.s_y1, st_.s_11) == (13.0, 1.0, 2.0)

    def test_errors(self):
        st_ = gp_new(2)
        with pytest.raises(ValueError):
            gp_update(st_, np.ones(3), 1.0)
        with pytest.raises(ValueError):
            gp_update(st_, np.ones(2), np.nan)

    def test_constant_state_size(self):
        st_ = gp_update_batch(gp_new(4), np.ones((500, 4)), np.ones(500))
        assert st_.psi_inv.shape == (4, 4) and st_.phi_y.shape == (4,)

    def test_update_time_independent_of_count(self):
        rng = np.random.default_rng(2)
        d = 16
        phis = rng.normal(size=(400, d))

        def per_update(warm):
            st_ = gp_update_batch(gp_new(d), rng.normal(size=(warm, d)), rng.normal(size=warm))
            t0 = time.perf_counter()
            for p in phis:
                gp_update(st_, p, 0.5)
            return (time.perf_counter() - t0) / len(phis)

        few = min(per_update(10) for _ in range(3))
        many = min(per_update(1000) for _ in range(3))
        assert many <= 2.0 * few


class TestPosterior:
    def test_prior_moments(self):
        mom = gp_posterior(gp_new(3, 0.01), np.array([0.6, 0.8, 0.0]))
        assert mom.mu == 0.0
        assert mom.sigma == pytest.approx(1.0, abs=1e-12)

    def test_prior_sigma_scales_with_bonus(self):
        st_ = gp_new(2, 0.01, bonus=4.0)
        st_.lam = 0.5
        assert gp_posterior(st_, np.array([0.0, 1.0])).sigma == pytest.approx(2.0, abs=1e-12)

    def test_one_observation_hand_case(self):
        st_ = gp_update(gp_new(1, 0.1), np.array([1.0]), 1.0)
        mom = gp_posterior(st_, np.array([1.0]))
        # frozen from evaluating the 1x1 kernel formulas at 40 digits
        assert mom.mu == pytest.approx(0.990099009900990099, abs=1e-12)
        assert mom.sigma == pytest.approx(0.0995037190209989136, abs=1e-12)
        ref = oracles.dense_gp_oracle([(np.array([1.0]), 1.0)], lambda x: x, 0.0, 1.0, 0.1, [np.array([1.0])])
        np.testing.assert_allclose([mom.mu, mom.sigma], [ref.mu[0], ref.sigma[0]], atol=1e-12)

    def test_orthogonal_point_keeps_prior(self):
        st_ = gp_update_batch(gp_new(3, 0.01, bonus=2.0), np.array([[1.0, 0, 0], [0, 1.0, 0]]), [1.0, -1.0])
        st_.nu, st_.lam = 0.4, 1.5
        mom = gp_posterior(st_, np.array([0, 0, 0.5]))
        assert mom.mu == pytest.approx(0.4, abs=1e-12)
        assert mom.sigma == pytest.approx(2.0 * 1.5 * 0.5, abs=1e-10)

    def test_bonus_leaves_mean(self):
        rng = np.random.default_rng(3)
        X = rng.normal(size=(20, 4))
        a = gp_update_batch(gp_new(4, 0.1), X, rng.normal(size=20))
        b = a.copy()
        b.bonus = 4.0
        q = rng.normal(size=(5, 4))
        np.testing.assert_array_equal(gp_posterior(a, q).mu, gp_posterior(b, q).mu)
        np.testing.assert_allclose(gp_posterior(b, q).sigma, 4.0 * gp_posterior(a, q).sigma, rtol=1e-14)

    def test_matches_dense_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            d, s = int(rng.integers(1, 9)), int(rng.integers(0, 51))
            X, y, q = rng.normal(size=(s, d)), rng.normal(size=s), rng.normal(size=(7, d))
            st_ = gp_update_batch(gp_new(d, 0.2), X, y) if s else gp_new(d, 0.2)
            st_.nu, st_.lam = 0.3, 1.7
            mom = gp_posterior(st_, q)
            ref = oracles.dense_gp_oracle(list(zip(X, y)), lambda x: x, 0.3, 1.7, 0.2, q)
            np.testing.assert_allclose(mom.mu, ref.mu, atol=1e-8)
            np.testing.assert_allclose(mom.sigma, ref.sigma, atol=1e-8)

    def test_variance_monotone_under_repeats(self):
        st_ = gp_new(3, 0.1)
        x = np.array([0.2, -0.5, 0.8])
        prev = gp_posterior(st_, x).sigma
        for _ in range(20):
            gp_update(st_, x, 1.0)
            cur = gp_posterior(st_, x).sigma
            assert cur <= prev + 1e-10
            prev = cur

    def test_shape_error(self):
        with pytest.raises(ValueError):
            gp_posterior(gp_new(2), np.ones(3))


class TestMlm:
    def test_zero_features(self):
        st_ = gp_update_batch(gp_new(1, 1.0), np.zeros((2, 1)), [1.0, 3.0])
        nu, lam = gp_mlm(st_)
        assert nu == pytest.approx(2.0, abs=1e-12) and lam == pytest.approx(1.0, abs=1e-12)

    def test_constant_observations_floor(self):
        st_ = gp_update_batch(gp_new(1, 1.0), np.zeros((2, 1)), [2.0, 2.0])
        assert gp_mlm(st_) == (pytest.approx(2.0), LAMBDA_MIN)

    def test_needs_observation(self):
        with pytest.raises(StateError):
            gp_mlm(gp_new(2))

    def test_matches_grid_oracle(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(20, 4)) / 2.0
        y = 0.5 + 0.8 * (X @ rng.normal(size=4) + 0.5 * rng.normal(size=20))
        st_ = gp_update_batch(gp_new(4, 0.5), X, y)
        grid = oracles.grid_mlm(list(zip(X, y)), lambda x: x, 0.5, (-2.0, 2.0), (0.01, 3.0), 1e-3)
        np.testing.assert_allclose(gp_mlm(st_), grid, atol=1e-3)

    def test_perturbation_never_improves(self):
        rng = np.random.default_rng(6)
        X = rng.normal(size=(30, 3))
        y = rng.normal(size=30) + 1.0
        st_ = gp_update_batch(gp_new(3, 0.3), X, y)
        nu, lam = gp_mlm(st_)
        best = _loglik(X, y, 0.3, nu, lam)
        for dn in (-0.01, 0.0, 0.01):
            for dl in (-0.01, 0.0, 0.01):
                assert _loglik(X, y, 0.3, nu * (1 + dn), lam * (1 + dl)) <= best + 1e-9

    def test_refit_installs(self):
        st_ = gp_refit(gp_update_batch(gp_new(1, 1.0), np.zeros((2, 1)), [1.0, 3.0]))
        assert (st_.nu, st_.lam) == (pytest.approx(2.0), pytest.approx(1.0))


class TestWeightSpace:
    def test_draw_moments_match_posterior(self):
        rng = np.random.default_rng(7)
        X = rng.normal(size=(6, 3))
        st_ = gp_update_batch(gp_new(3, 0.5, bonus=2.0), X, rng.normal(size=6))
        st_.nu, st_.lam = 0.2, 1.3
        q = rng.normal(size=(4, 3))
        mean, chol = weight_posterior(st_)
        mom = gp_posterior(st_, q)
        np.testing.assert_allclose(st_.nu + q @ mean, mom.mu, atol=1e-10)
        np.testing.assert_allclose(np.sqrt(np.einsum("ij,jk,ik->i", q, chol @ chol.T, q)), mom.sigma, rtol=1e-10)
        draws = np.array([weight_draw(st_, rng) for _ in range(20000)])
        np.testing.assert_allclose(draws.mean(axis=0), mean, atol=4 * np.abs(chol).sum(axis=1).max() / np.sqrt(20000))

    def test_cache_invalidated_by_update(self):
        st_ = gp_new(2, 1.0)
        _, before = weight_posterior(st_)
        gp_update(st_, np.array([1.0, 0.0]), 1.0)
        _, after = weight_posterior(st_)
        assert not np.allclose(before, after)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 6), st.integers(1, 30), st.floats(0.01, 1.0), st.integers(0, 2**31))
def test_smw_consistency_property(d, s, sigma_nar, seed):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(s, d))
    st_ = gp_update_batch(gp_new(d, sigma_nar), X, rng.normal(size=s))
    psi = X.T @ X + sigma_nar**2 * np.eye(d)
    np.testing.assert_allclose(st_.psi_inv @ psi, np.eye(d), atol=1e-7)
