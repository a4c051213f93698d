"""The VBOS objective over a finite support and its exact maximizer.

``V(pi) = sum_x pi_x * (mu_x + sqrt(-2 ln pi_x) * sigma_x)`` is concave on the
simplex.  Its maximizer has the form ``pi_x = v((mu_x - kappa) / sigma_x)``
with the scalar ``kappa`` fixed by normalization, which :func:`vbos_solve`
finds by bisection in O(|X|) per iteration.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from pombo import kernels

PROB_FLOOR = 1e-300
PROB_CEIL = 1.0 - 1e-12
SIMPLEX_TOL = 1e-8
KAPPA_TOL = 1e-12
KAPPA_MAXITER = 400


class DomainError(ValueError):
    pass


@dataclass
class MomentField:
    mu: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        self.mu = np.atleast_1d(np.asarray(self.mu, dtype=np.float64))
        self.sigma = np.atleast_1d(np.asarray(self.sigma, dtype=np.float64))
        if self.mu.ndim != 1 or self.mu.shape != self.sigma.shape or self.mu.size < 1:
            raise ValueError("mu and sigma must be 1-D arrays of equal, nonzero length")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.sigma))):
            raise ValueError("moment field entries must be finite")
        if np.any(self.sigma < 0):
            raise ValueError("sigma must be nonnegative")

    def __len__(self):
        return self.mu.size


@dataclass
class VbosSolution:
    pi: np.ndarray
    kappa_star: float
    defined_kappa: bool
    tie_broken: bool = False


def _scalar_or_array(x, out):
    return float(out) if np.ndim(x) == 0 else out


def v(c):
    """Link ``v(c) = exp(-(sqrt(c^2 + 4) - c)^2 / 8)``, increasing from 0 to 1."""
    return _scalar_or_array(c, kernels.v(np.asarray(c, dtype=np.float64)))


def v_inv(u):
    """Inverse link ``1/sqrt(-2 ln u) - sqrt(-2 ln u)`` on (0, 1)."""
    arr = np.asarray(u, dtype=np.float64)
    if np.any(~(arr > 0.0)) or np.any(~(arr < 1.0)):
        raise DomainError("v_inv is defined on the open interval (0, 1)")
    return _scalar_or_array(u, kernels.v_inv(arr))


def clamp_prob(p):
    return np.clip(p, PROB_FLOOR, PROB_CEIL)


def _check_simplex(pi, n):
    pi = np.asarray(pi, dtype=np.float64)
    if pi.shape != (n,):
        raise ValueError(f"probability vector of shape {pi.shape} does not match support size {n}")
    if np.any(pi < -SIMPLEX_TOL) or abs(pi.sum() - 1.0) > SIMPLEX_TOL:
        raise DomainError("probability vector is not on the simplex")
    return np.clip(pi, 0.0, None)


def _bonus_terms(pi):
    # 0 * sqrt(-2 ln 0) := 0
    out = np.zeros_like(pi)
    pos = pi > 0
    out[pos] = pi[pos] * np.sqrt(np.maximum(-2.0 * np.log(pi[pos]), 0.0))
    return out


def vbos_value(pi, field):
    pi = _check_simplex(pi, len(field))
    return float(pi @ field.mu + _bonus_terms(pi) @ field.sigma)


def _solve_positive(mu, sigma):
    lo = mu.min() - 40.0 * sigma.max() - 1.0
    hi = mu.max() + 40.0 * sigma.max() + 1.0
    return kernels.vbos_kappa(mu, sigma, lo, hi, KAPPA_TOL, KAPPA_MAXITER)


def vbos_solve(field):
    """Exact maximizer of ``V`` over the simplex for the given moments.

    Zero-variance entries are handled as the sigma -> 0 limit of the closed
    form: the best such atom is active only if its mean exceeds the threshold
    solved over the uncertain entries, in which case the threshold moves to
    the atom's mean and the atom takes the remaining mass.  Inactive atoms
    keep a machine-epsilon mass so every entry stays strictly positive.
    """
    mu, sigma = field.mu, field.sigma
    n = mu.size
    if n == 1:
        return VbosSolution(np.ones(1), float("nan"), False)

    pos = sigma > 0
    eps = np.finfo(float).eps
    if pos.all():
        kappa = _solve_positive(mu, sigma)
        # far-below-threshold entries would underflow to 0; keep them positive
        pi = np.maximum(kernels.v((mu - kappa) / sigma), PROB_FLOOR)
        return VbosSolution(pi / pi.sum(), float(kappa), True)

    atoms = np.flatnonzero(~pos)
    top = mu[atoms].max()
    winners = atoms[mu[atoms] == top]
    tie = winners.size > 1
    best = winners[0]
    pi = np.full(n, eps)

    if not pos.any():
        tie = np.sum(mu == mu.max()) > 1
        pi[int(np.argmax(mu))] = 1.0
        return VbosSolution(pi / pi.sum(), float("nan"), False, bool(tie))

    if pos.sum() == 1:
        kappa_sub = -np.inf
    else:
        kappa_sub = _solve_positive(mu[pos], sigma[pos])
    if top > kappa_sub:
        kappa = top
        pi[pos] = np.maximum(kernels.v((mu[pos] - kappa) / sigma[pos]), PROB_FLOOR)
        pi[best] = max(1.0 - pi[pos].sum(), eps)
    else:
        kappa = kappa_sub
        pi[pos] = np.maximum(kernels.v((mu[pos] - kappa) / sigma[pos]), PROB_FLOOR)
    return VbosSolution(pi / pi.sum(), float(kappa), True, bool(tie))


def _f(pi, sigma):
    return -_bonus_terms(pi) @ sigma


def bregman_explicit(pi, solution, field):
    """``f(pi) - f(pi~) - <grad f(pi~), pi - pi~>`` for ``f(p) = -sum p sigma sqrt(-2 ln p)``."""
    pi = _check_simplex(pi, len(field))
    ref = solution.pi
    grad = field.sigma * kernels.v_inv(clamp_prob(ref))
    if solution.defined_kappa:
        # entries floored after underflow use the exact preimage v_inv(v(c)) = c
        lost = ref <= PROB_FLOOR
        grad[lost] = field.mu[lost] - solution.kappa_star
    return float(_f(pi, field.sigma) - _f(ref, field.sigma) - grad @ (pi - ref))


def bregman(pi, solution, field, check=True):
    """Suboptimality gap ``V(pi~) - V(pi)`` of ``pi`` against the exact maximizer."""
    gap = vbos_value(solution.pi, field) - vbos_value(pi, field)
    if check and np.all(field.sigma > 0):
        other = bregman_explicit(pi, solution, field)
        if abs(other - gap) > 1e-6 * max(1.0, abs(gap)):
            warnings.warn(f"Bregman forms disagree: gap={gap!r}, explicit={other!r}", RuntimeWarning)
    return gap


def expected_max_bound_check(field, cov, n_mc, rng):
    """Monte-Carlo ``E[max_x R_x]`` for ``R ~ N(mu, cov)`` and the VBOS bound on it.

    Returns ``(mc_mean, mc_se, bound)``; the bound uses only the diagonal of
    ``cov`` through ``field.sigma``.
    """
    cov = np.asarray(cov, dtype=np.float64)
    n = len(field)
    if cov.shape != (n, n) or not np.allclose(cov, cov.T, atol=1e-12):
        raise ValueError("covariance must be a symmetric matrix matching the field")
    if n_mc < 1000:
        raise ValueError("n_mc must be at least 1000")
    evals, evecs = np.linalg.eigh(cov)
    if evals.min() < -1e-10 * max(1.0, evals.max()):
        raise DomainError("covariance is not positive semidefinite")
    if not np.allclose(np.diag(cov), field.sigma**2, rtol=1e-8, atol=1e-12):
        raise ValueError("covariance diagonal does not match sigma^2")
    root = evecs * np.sqrt(np.clip(evals, 0.0, None))
    draws = field.mu + rng.standard_normal((n_mc, n)) @ root.T
    best = draws.max(axis=1)
    bound = vbos_value(vbos_solve(field).pi, field)
    return float(best.mean()), float(best.std(ddof=1) / np.sqrt(n_mc)), bound
