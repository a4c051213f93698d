import numpy as np
import pytest

from pombo import oracles
from pombo.gp import gp_mlm, gp_new, gp_posterior, gp_update_batch
from pombo.oracles import OracleError


class TestMcPom:
    def test_two_iid_arms(self):
        est = oracles.mc_pom(np.zeros(2), np.eye(2), 100_000, np.random.default_rng(0))
        assert np.all(np.abs(est.mean - 0.5) < 4 * est.se)
        assert est.n == 100_000 and est.mean.sum() == pytest.approx(1.0)

    def test_separated_arms(self):
        est = oracles.mc_pom(np.array([10.0, 0.0]), np.eye(2), 10_000, np.random.default_rng(1))
        assert est.mean[0] > 0.999

    def test_three_iid_arms(self):
        est = oracles.mc_pom(np.zeros(3), np.eye(3), 90_000, np.random.default_rng(2))
        assert np.all(np.abs(est.mean - 1 / 3) < 4 * est.se)

    def test_ties_go_to_lowest_index(self):
        est = oracles.mc_pom(np.zeros(3), np.zeros((3, 3)), 10_000, np.random.default_rng(3))
        np.testing.assert_array_equal(est.mean, [1.0, 0.0, 0.0])

    def test_se_formula(self):
        est = oracles.mc_pom(np.array([0.5, 0.0]), np.eye(2), 20_000, np.random.default_rng(4))
        np.testing.assert_allclose(est.se, np.sqrt(est.mean * (1 - est.mean) / 20_000))

    def test_errors(self):
        rng = np.random.default_rng(5)
        with pytest.raises(OracleError):
            oracles.mc_pom(np.zeros(2), np.eye(2), 9_999, rng)
        with pytest.raises(OracleError):
            oracles.mc_pom(np.zeros(2), np.array([[1.0, 2.0], [2.0, 1.0]]), 10_000, rng)
        with pytest.raises(OracleError):
            oracles.mc_pom(np.zeros(3), np.eye(2), 10_000, rng)

    def test_pure_in_rng(self):
        a = oracles.mc_pom(np.zeros(3), np.eye(3), 10_000, np.random.default_rng(6))
        b = oracles.mc_pom(np.zeros(3), np.eye(3), 10_000, np.random.default_rng(6))
        np.testing.assert_array_equal(a.mean, b.mean)


class TestExpectedMax:
    def test_two_iid_normals(self):
        est = oracles.mc_expected_max(np.zeros(2), np.eye(2), 200_000, np.random.default_rng(7))
        assert abs(est.mean - 1 / np.sqrt(np.pi)) < 4 * est.se


class TestDenseGp:
    def test_zero_observations_is_prior(self):
        q = [np.array([0.6, 0.8]), np.array([0.0, 2.0])]
        ref = oracles.dense_gp_oracle([], lambda x: x, 0.4, 1.5, 0.1, q)
        np.testing.assert_allclose(ref.mu, 0.4)
        np.testing.assert_allclose(ref.sigma, [1.5, 3.0])

    def test_matches_gp_posterior(self):
        rng = np.random.default_rng(8)
        for _ in range(50):
            d, s = int(rng.integers(1, 9)), int(rng.integers(1, 51))
            X, y, q = rng.normal(size=(s, d)), rng.normal(size=s), rng.normal(size=(5, d))
            gp = gp_update_batch(gp_new(d, 0.3), X, y)
            gp.nu, gp.lam = -0.2, 0.8
            mom = gp_posterior(gp, q)
            ref = oracles.dense_gp_oracle(list(zip(X, y)), lambda x: x, -0.2, 0.8, 0.3, q)
            np.testing.assert_allclose(mom.mu, ref.mu, atol=1e-8)
            np.testing.assert_allclose(mom.sigma, ref.sigma, atol=1e-8)

    def test_observation_cap(self):
        obs = [(np.zeros(1), 0.0)] * 501
        with pytest.raises(OracleError):
            oracles.dense_gp_oracle(obs, lambda x: x, 0.0, 1.0, 1.0, [np.zeros(1)])


class TestSimplexGrid:
    def test_symmetric_pair(self):
        pi, val = oracles.simplex_grid_vbos(np.zeros(2), np.ones(2))
        np.testing.assert_allclose(pi, [0.5, 0.5], atol=1e-12)
        assert val == pytest.approx(np.sqrt(2 * np.log(2)), abs=1e-12)

    def test_single_entry(self):
        pi, val = oracles.simplex_grid_vbos(np.array([2.5]), np.array([1.0]))
        np.testing.assert_array_equal(pi, [1.0])
        assert val == 2.5

    def test_three_entries_on_simplex(self):
        pi, _ = oracles.simplex_grid_vbos(np.array([0.3, 0.0, -0.4]), np.array([1.0, 0.5, 0.8]))
        assert pi.sum() == pytest.approx(1.0) and np.all(pi >= 0)

    def test_errors(self):
        with pytest.raises(OracleError):
            oracles.simplex_grid_vbos(np.zeros(4), np.ones(4))
        with pytest.raises(OracleError):
            oracles.simplex_grid_vbos(np.zeros(2), np.ones(2), resolution=1e-2)


class TestFiniteDiff:
    def test_quadratic(self):
        A = np.array([[2.0, 0.5], [0.5, 1.0]])
        x = np.array([0.3, -1.2])
        grad = oracles.finite_diff_grad(lambda p: 0.5 * p @ A @ p + p.sum(), x, 1e-4)
        np.testing.assert_allclose(grad, A @ x + 1.0, atol=1e-8)

    def test_softmax_log_gradient(self):
        theta = np.array([0.2, -0.4, 1.1])
        p = np.exp(theta) / np.exp(theta).sum()
        grad = oracles.finite_diff_grad(lambda t: t[1] - np.log(np.exp(t).sum()), theta)
        np.testing.assert_allclose(grad, np.eye(3)[1] - p, atol=1e-6)

    def test_step_must_be_positive(self):
        for step in (0.0, -1e-5):
            with pytest.raises(OracleError):
                oracles.finite_diff_grad(np.sum, np.zeros(2), step)


class TestGridMlm:
    def test_zero_features(self):
        obs = [(np.zeros(1), 1.0), (np.zeros(1), 3.0)]
        nu, lam = oracles.grid_mlm(obs, lambda x: x, 1.0, (0.0, 4.0), (0.1, 3.0))
        assert nu == pytest.approx(2.0, abs=1e-3) and lam == pytest.approx(1.0, abs=1e-3)

    def test_single_observation_hits_lower_boundary(self):
        nu, lam = oracles.grid_mlm([(np.array([0.5]), 0.7)], lambda x: x, 0.1, (0.0, 1.0), (0.05, 2.0))
        assert nu == pytest.approx(0.7, abs=1e-3) and lam == pytest.approx(0.05, abs=1e-12)

    def test_agrees_with_gp_mlm(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            X = rng.normal(size=(15, 3)) / 2.0
            y = rng.normal() + (X @ rng.normal(size=3) + 0.5 * rng.normal(size=15)) * rng.uniform(0.5, 1.5)
            gp = gp_update_batch(gp_new(3, 0.5), X, y)
            nu, lam = gp_mlm(gp)
            grid = oracles.grid_mlm(list(zip(X, y)), lambda x: x, 0.5, (nu - 0.1, nu + 0.1), (0.01, lam + 0.5))
            np.testing.assert_allclose(grid, (nu, lam), atol=1e-3)

    def test_errors(self):
        obs = [(np.zeros(1), 1.0)]
        with pytest.raises(OracleError):
            oracles.grid_mlm(obs, lambda x: x, 1.0, (1.0, 0.0), (0.1, 1.0))
        with pytest.raises(OracleError):
            oracles.grid_mlm(obs, lambda x: x, 1.0, (0.0, 1.0), (0.0, 1.0))
        with pytest.raises(OracleError):
            oracles.grid_mlm([], lambda x: x, 1.0, (0.0, 1.0), (0.1, 1.0))


class TestLinkBisection:
    def test_inverts_link(self):
        for u in (0.01, 0.3, np.exp(-0.5), 0.9):
            assert oracles.v_oracle(oracles.v_inv_bisect(u)) == pytest.approx(u, abs=1e-12)

    def test_midpoint(self):
        assert oracles.v_inv_bisect(np.exp(-0.5)) == pytest.approx(0.0, abs=1e-12)

    def test_domain(self):
        with pytest.raises(OracleError):
            oracles.v_inv_bisect(1.0)
