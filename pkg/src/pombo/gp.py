"""Linear-kernel Gaussian process with observation-count-independent state.

The prior is ``R ~ GP(nu, lambda^2 phi(x)^T phi(z))`` with observation noise of
standard deviation ``lambda * sigma_nar``.  Only ``Psi^-1`` (with
``Psi = Phi Phi^T + sigma_nar^2 I``), ``Phi y``, ``Phi 1`` and three scalar
moments are tracked, so conditioning, posterior queries and marginal
likelihood maximization all cost O(d^2) regardless of how many observations
have been absorbed.
"""

from dataclasses import dataclass, field

import numpy as np

from pombo import kernels

LAMBDA_MIN = 1e-6
DEFAULT_SIGMA_NAR = 0.01


class ConfigurationError(ValueError):
    pass


class StateError(RuntimeError):
    pass


@dataclass
class PosteriorMoment:
    """Posterior mean and (bonus-scaled) standard deviation.

    Fields are floats for a single query and arrays for a batch.
    """

    mu: float
    sigma: float


@dataclass
class GpState:
    psi_inv: np.ndarray
    phi_y: np.ndarray
    phi_one: np.ndarray
    s_yy: float = 0.0
    s_y1: float = 0.0
    s_11: float = 0.0
    nu: float = 0.0
    lam: float = 1.0
    sigma_nar: float = DEFAULT_SIGMA_NAR
    bonus: float = 1.0
    _chol: np.ndarray = field(default=None, repr=False, compare=False)

    @property
    def dim(self):
        return self.phi_y.shape[0]

    @property
    def count(self):
        return int(self.s_11)

    def copy(self):
        return GpState(
            self.psi_inv.copy(), self.phi_y.copy(), self.phi_one.copy(),
            self.s_yy, self.s_y1, self.s_11, self.nu, self.lam,
            self.sigma_nar, self.bonus,
        )


def gp_new(d, sigma_nar=DEFAULT_SIGMA_NAR, bonus=1.0):
    if int(d) != d or d < 1:
        raise ConfigurationError(f"feature dimension must be a positive integer, got {d!r}")
    if not sigma_nar > 0:
        raise ConfigurationError(f"sigma_nar must be positive, got {sigma_nar!r}")
    if not bonus >= 1.0:
        raise ConfigurationError(f"exploration bonus must be >= 1, got {bonus!r}")
    d = int(d)
    return GpState(
        psi_inv=np.eye(d) / sigma_nar**2,
        phi_y=np.zeros(d),
        phi_one=np.zeros(d),
        sigma_nar=float(sigma_nar),
        bonus=float(bonus),
    )


def _as_feature(state, phi):
    phi = np.ascontiguousarray(phi, dtype=np.float64)
    if phi.ndim != 1 or phi.shape[0] != state.dim:
        raise ValueError(f"feature vector of shape {phi.shape} does not match dimension {state.dim}")
    return phi


def gp_update(state, phi_x, y):
    """Condition ``state`` in place on observing ``y`` at features ``phi_x``."""
    phi = _as_feature(state, phi_x)
    y = float(y)
    if not np.isfinite(y):
        raise ValueError(f"observation must be finite, got {y!r}")
    kernels.sm_update(state.psi_inv, phi)
    state.phi_y += y * phi
    state.phi_one += phi
    state.s_yy += y * y
    state.s_y1 += y
    state.s_11 += 1.0
    state._chol = None
    return state


def gp_update_batch(state, features, ys):
    """Batched conditioning as sequential rank-1 updates."""
    for phi, y in zip(np.atleast_2d(features), np.atleast_1d(ys)):
        gp_update(state, phi, y)
    return state


def gp_posterior(state, phi_x):
    """Posterior moments at one feature vector (1-D) or each row of a matrix (2-D)."""
    feats = np.asarray(phi_x, dtype=np.float64)
    single = feats.ndim == 1
    feats = np.atleast_2d(feats)
    if feats.shape[1] != state.dim:
        raise ValueError(f"features of width {feats.shape[1]} do not match dimension {state.dim}")
    centered = state.phi_y - state.nu * state.phi_one
    scale = state.bonus * state.lam * state.sigma_nar
    mu, sigma = kernels.posterior_moments(state.psi_inv, centered, state.nu, scale, feats)
    if single:
        return PosteriorMoment(float(mu[0]), float(sigma[0]))
    return PosteriorMoment(mu, sigma)


def _inverse_forms(state):
    """``a^T Sigma^-1 b`` for a, b in {y, 1}, without forming Sigma."""
    p, yv, ov = state.psi_inv, state.phi_y, state.phi_one
    s2 = state.sigma_nar**2
    yy = (state.s_yy - yv @ p @ yv) / s2
    y1 = (state.s_y1 - yv @ p @ ov) / s2
    one = (state.s_11 - ov @ p @ ov) / s2
    return yy, y1, one


def gp_mlm(state):
    """Closed-form maximizers ``(nu, lambda)`` of the marginal likelihood.

    The amplitude is floored at ``LAMBDA_MIN``; the caller installs the values
    (see :func:`gp_refit`).
    """
    if state.s_11 < 1:
        raise StateError("marginal likelihood maximization needs at least one observation")
    yy, y1, one = _inverse_forms(state)
    nu = y1 / one
    quad = yy - 2.0 * nu * y1 + nu * nu * one
    lam = np.sqrt(max(quad, 0.0) / state.s_11)
    return float(nu), float(max(lam, LAMBDA_MIN))


def gp_refit(state):
    state.nu, state.lam = gp_mlm(state)
    return state


def weight_posterior(state):
    """Mean and Cholesky factor of the weight-space posterior.

    Rewards are ``nu + w^T phi(x)`` with ``w ~ N(mean, L L^T)``; ``L`` already
    carries the bonus-scaled amplitude.
    """
    if state._chol is None:
        state._chol = np.linalg.cholesky(state.psi_inv)
    mean = state.psi_inv @ (state.phi_y - state.nu * state.phi_one)
    scale = state.bonus * state.lam * state.sigma_nar
    return mean, scale * state._chol


def weight_draw(state, rng):
    mean, chol = weight_posterior(state)
    return mean + chol @ rng.standard_normal(state.dim)
