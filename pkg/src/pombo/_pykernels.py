"""Pure-numpy implementations of the hot kernels.

This module is the fallback used when the compiled ``_ckernels`` extension
is unavailable (or when ``POMBO_PURE_PYTHON=1``).  Both backends expose the
same functions with the same argument conventions; ``tests/test_kernels.py``
checks them against each other.
"""

import numpy as np


def v(c):
    c = np.asarray(c, dtype=np.float64)
    root = np.sqrt(c * c + 4.0)
    # sqrt(c^2 + 4) - c cancels for large positive c
    with np.errstate(divide="ignore"):
        gap = np.where(c > 0.0, 4.0 / (root + c), root - c)
    return np.exp(-gap * gap / 8.0)


def v_inv(u):
    u = np.asarray(u, dtype=np.float64)
    a = np.sqrt(-2.0 * np.log(u))
    return 1.0 / a - a


def sm_update(psi_inv, phi):
    """Rank-1 Sherman-Morrison update of ``psi_inv`` in place for ``+ phi phi^T``."""
    u = psi_inv @ phi
    denom = 1.0 + phi @ u
    # outer(u, u) is exactly symmetric, so symmetry of psi_inv is preserved
    psi_inv -= np.outer(u, u) / denom


def posterior_moments(psi_inv, centered, nu, scale, features):
    """Posterior mean and bonus-scaled std for each row of ``features``.

    ``centered`` is ``phi_y - nu * phi_one``; ``scale`` is
    ``bonus * lambda * sigma_nar``.
    """
    features = np.asarray(features, dtype=np.float64)
    proj = features @ psi_inv
    mu = nu + proj @ centered
    quad = np.einsum("ij,ij->i", proj, features)
    sigma = scale * np.sqrt(np.maximum(quad, 0.0))
    return mu, sigma


def vbos_kappa(mu, sigma, lo, hi, tol, maxiter):
    """Bisection for the threshold where ``sum v((mu - k) / sigma) = 1``.

    Requires every ``sigma > 0`` and ``g(lo) > 0 > g(hi)``.
    """
    mu = np.asarray(mu, dtype=np.float64)
    sigma = np.asarray(sigma, dtype=np.float64)
    mid = 0.5 * (lo + hi)
    for _ in range(maxiter):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        g = v((mu - mid) / sigma).sum() - 1.0
        if abs(g) < tol:
            break
        if g > 0.0:
            lo = mid
        else:
            hi = mid
    return mid


def rloo_standardize(pseudo, eps):
    pseudo = np.asarray(pseudo, dtype=np.float64)
    n = pseudo.shape[0]
    loo = (pseudo.sum() - pseudo) / (n - 1)
    adv = pseudo - loo
    scale = np.sqrt(np.mean(adv * adv))
    if scale < eps:
        return np.zeros(n)
    return adv / scale


def ar_sample(w1, b1, w2, b2, length, vocab, uniforms):
    """Ancestral sampling from the prefix-conditioned MLP sequence model.

    ``uniforms`` has shape (count, length); token ``k`` is chosen at step ``t``
    as the first index whose cumulative probability exceeds ``uniforms[:, t]``.
    Columns ``t * vocab + k`` of ``w1`` encode token ``k`` at slot ``t``; the
    trailing ``length`` columns encode the current position.  ``b2`` holds one
    output bias row per position.
    """
    count = uniforms.shape[0]
    tokens = np.empty((count, length), dtype=np.int64)
    pre = np.tile(b1, (count, 1))
    for t in range(length):
        h = np.tanh(pre + w1[:, length * vocab + t])
        logits = h @ w2.T + b2[t]
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        cum = np.cumsum(p, axis=1)
        k = (uniforms[:, t:t + 1] >= cum).sum(axis=1)
        np.minimum(k, vocab - 1, out=k)
        tokens[:, t] = k
        pre += w1[:, t * vocab + k].T
    return tokens
