"""Brute-force reference implementations for tests and acceptance checks.

Nothing here imports from the rest of the package: each oracle rebuilds the
quantity it checks from first principles (dense Gram matrices, exhaustive
grids, plain Monte Carlo), so agreement with the production code is evidence
rather than a tautology.  Speed is not a goal.
"""

from dataclasses import dataclass

import numpy as np


class OracleError(ValueError):
    pass


@dataclass
class McEstimate:
    """Monte-Carlo mean with standard error ``std / sqrt(n)`` (entrywise for vectors)."""

    mean: np.ndarray
    se: np.ndarray
    n: int


@dataclass
class OracleMoment:
    mu: np.ndarray
    sigma: np.ndarray


def _psd_root(cov, tol=1e-10):
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T, atol=1e-12):
        raise OracleError("covariance must be a symmetric square matrix")
    u, s, vt = np.linalg.svd(cov)
    # for a symmetric PSD matrix the left and right singular vectors agree
    signs = np.sum(u * vt.T, axis=0)
    if np.any((signs < 0) & (s > tol * max(1.0, s.max()))):
        raise OracleError("covariance is not positive semidefinite")
    return u * np.sqrt(s)


def mc_pom(mu, cov, n_mc, rng, chunk=10_000):
    """Probability of maximality by sampling ``R ~ N(mu, cov)`` and counting argmaxes.

    Ties go to the lowest index.
    """
    mu = np.asarray(mu, dtype=np.float64)
    if n_mc < 10_000:
        raise OracleError("n_mc must be at least 1e4")
    root = _psd_root(cov)
    if root.shape[0] != mu.size:
        raise OracleError("mean and covariance sizes differ")
    counts = np.zeros(mu.size)
    done = 0
    while done < n_mc:
        k = min(chunk, n_mc - done)
        draws = mu + rng.standard_normal((k, mu.size)) @ root.T
        counts += np.bincount(np.argmax(draws, axis=1), minlength=mu.size)
        done += k
    p = counts / n_mc
    return McEstimate(p, np.sqrt(p * (1.0 - p) / n_mc), int(n_mc))


def mc_expected_max(mu, cov, n_mc, rng):
    """``E[max_x R_x]`` for ``R ~ N(mu, cov)``."""
    mu = np.asarray(mu, dtype=np.float64)
    root = _psd_root(cov)
    best = (mu + rng.standard_normal((int(n_mc), mu.size)) @ root.T).max(axis=1)
    return McEstimate(float(best.mean()), float(best.std(ddof=1) / np.sqrt(n_mc)), int(n_mc))


def dense_gp_oracle(observations, feature_map, nu, lam, sigma_nar, query):
    """Posterior moments from the explicit ``s x s`` kernel matrix.

    ``observations`` is a sequence of ``(x, y)`` pairs; the kernel is
    ``lam^2 phi(x)^T phi(z)`` and the noise variance ``(lam * sigma_nar)^2``.
    Returns unscaled posterior standard deviations (no exploration bonus).
    """
    q = np.atleast_2d(np.array([feature_map(x) for x in query], dtype=np.float64))
    prior_var = lam**2 * np.einsum("ij,ij->i", q, q)
    if len(observations) == 0:
        return OracleMoment(np.full(q.shape[0], float(nu)), np.sqrt(prior_var))
    if len(observations) > 500:
        raise OracleError("the dense oracle is limited to 500 observations")
    phi = np.array([feature_map(x) for x, _ in observations], dtype=np.float64)
    y = np.array([y for _, y in observations], dtype=np.float64)
    gram = lam**2 * (phi @ phi.T) + (lam * sigma_nar) ** 2 * np.eye(len(y))
    cross = lam**2 * (q @ phi.T)
    alpha = np.linalg.solve(gram, y - nu)
    mu = nu + cross @ alpha
    var = prior_var - np.einsum("ij,ji->i", cross, np.linalg.solve(gram, cross.T))
    return OracleMoment(mu, np.sqrt(np.maximum(var, 0.0)))


def vbos_objective(pi, mu, sigma):
    """VBOS objective for each row of ``pi``, with ``0 * sqrt(-2 ln 0) = 0``."""
    with np.errstate(divide="ignore", invalid="ignore"):
        bonus = np.where(pi > 0, pi * np.sqrt(-2.0 * np.log(np.where(pi > 0, pi, 1.0))), 0.0)
    return pi @ mu + bonus @ sigma


def simplex_grid_vbos(mu, sigma, resolution=1e-3):
    """Exhaustive maximization of the VBOS objective on a simplex grid, ``|X| <= 3``."""
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    n = mu.size
    if n > 3:
        raise OracleError("grid search is limited to three entries")
    if resolution > 1e-3:
        raise OracleError("resolution must be at most 1e-3")
    if n == 1:
        return np.ones(1), float(mu[0])
    k = int(round(1.0 / resolution))
    ticks = np.arange(k + 1) / k
    if n == 2:
        grid = np.column_stack([ticks, 1.0 - ticks])
    else:
        i, j = np.meshgrid(np.arange(k + 1), np.arange(k + 1), indexing="ij")
        keep = i + j <= k
        a, b = i[keep] / k, j[keep] / k
        grid = np.column_stack([a, b, np.clip(1.0 - a - b, 0.0, None)])
    vals = vbos_objective(grid, mu, sigma)
    best = int(np.argmax(vals))
    return grid[best], float(vals[best])


def finite_diff_grad(fn, params, step=1e-5):
    """Central-difference gradient of a scalar function."""
    if not step > 0:
        raise OracleError("step must be positive")
    params = np.array(params, dtype=np.float64)
    grad = np.empty_like(params)
    for i in range(params.size):
        hi, lo = params.copy(), params.copy()
        hi.flat[i] += step
        lo.flat[i] -= step
        grad.flat[i] = (fn(hi) - fn(lo)) / (2.0 * step)
    return grad


def grid_mlm(observations, feature_map, sigma_nar, nu_range, lambda_range, resolution=1e-3, chunk=256):
    """Grid maximizer of the marginal likelihood over ``(nu, lambda)``.

    The negative log-likelihood, up to constants, is
    ``s ln lambda^2 + (y - nu 1)^T K^-1 (y - nu 1) / lambda^2`` with
    ``K = Phi Phi^T + sigma_nar^2 I`` formed densely.
    """
    s = len(observations)
    if s == 0 or s > 200:
        raise OracleError("grid_mlm needs between 1 and 200 observations")
    if nu_range[1] < nu_range[0] or lambda_range[1] < lambda_range[0] or lambda_range[0] <= 0:
        raise OracleError("empty or invalid search range")
    phi = np.array([feature_map(x) for x, _ in observations], dtype=np.float64).reshape(s, -1)
    y = np.array([y for _, y in observations], dtype=np.float64)
    kmat = phi @ phi.T + sigma_nar**2 * np.eye(s)
    nus = np.arange(nu_range[0], nu_range[1] + resolution / 2, resolution)
    lams = np.arange(lambda_range[0], lambda_range[1] + resolution / 2, resolution)
    resid = y[None, :] - nus[:, None]
    quad = np.einsum("ij,ij->i", resid, np.linalg.solve(kmat, resid.T).T)
    best = (np.inf, 0.0, 0.0)
    for start in range(0, lams.size, chunk):
        lam2 = lams[start:start + chunk] ** 2
        nll = s * np.log(lam2)[None, :] + quad[:, None] / lam2[None, :]
        i, j = np.unravel_index(np.argmin(nll), nll.shape)
        if nll[i, j] < best[0]:
            best = (nll[i, j], nus[i], lams[start + j])
    return float(best[1]), float(best[2])


def v_oracle(c):
    c = np.asarray(c, dtype=np.float64)
    return np.exp(-((np.sqrt(c * c + 4.0) - c) ** 2) / 8.0)


def v_inv_bisect(u, lo=-1e3, hi=1e3, iters=200):
    """Invert the increasing link ``v`` by bisection."""
    if not 0.0 < u < 1.0:
        raise OracleError("u must lie in (0, 1)")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if v_oracle(mid) < u:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)
