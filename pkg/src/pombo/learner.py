"""Score-function gradients of the VBOS objective and its actor-critic variants.

For ``V(pi) = E_pi[mu_x + sqrt(-2 ln pi_x) sigma_x]`` the score trick has to
account for the surrogate depending on ``pi`` itself, which yields the
per-sample weight ``mu_x - v_inv(pi_x) sigma_x`` (the pseudo reward).  Any
constant baseline can be subtracted; we use leave-one-out means and then
standardize, which coincides with the group-relative normalization.
"""

from dataclasses import dataclass

import numpy as np

from pombo import kernels
from pombo.gp import gp_posterior
from pombo.vbos import clamp_prob

STD_EPS = 1e-8


@dataclass
class PseudoRewardBatch:
    points: np.ndarray
    logprobs: np.ndarray
    mu: np.ndarray
    sigma: np.ndarray
    pseudo: np.ndarray


def pseudo_from_moments(mu, sigma, logprobs):
    pi = clamp_prob(np.exp(logprobs))
    return mu - kernels.v_inv(pi) * sigma


def pseudo_rewards(points, policy, gp, feature_map):
    logprobs = policy.logprob(points)
    mom = gp_posterior(gp, np.atleast_2d(feature_map(points)))
    pseudo = pseudo_from_moments(mom.mu, mom.sigma, logprobs)
    return PseudoRewardBatch(points, logprobs, mom.mu, mom.sigma, pseudo)


def rloo_advantages(pseudo):
    """Raw leave-one-out advantages along the last axis."""
    pseudo = np.asarray(pseudo, dtype=np.float64)
    n = pseudo.shape[-1]
    if n < 2:
        raise ValueError("leave-one-out baselines need a batch of at least 2")
    loo = (pseudo.sum(axis=-1, keepdims=True) - pseudo) / (n - 1)
    return pseudo - loo


def rloo_standardized(pseudo, eps=STD_EPS):
    """Leave-one-out advantages divided by their root mean square.

    Batches whose advantages have RMS below ``eps`` get all-zero advantages.
    Accepts a 1-D batch or a stack of batches along the last axis.
    """
    pseudo = np.asarray(pseudo, dtype=np.float64)
    if pseudo.shape[-1] < 2:
        raise ValueError("leave-one-out baselines need a batch of at least 2")
    if pseudo.ndim == 1:
        return kernels.rloo_standardize(pseudo, eps)
    adv = rloo_advantages(pseudo)
    scale = np.sqrt(np.mean(adv * adv, axis=-1, keepdims=True))
    safe = np.where(scale < eps, 1.0, scale)
    return np.where(scale < eps, 0.0, adv / safe)


def grpo_advantages(rewards, eps=STD_EPS):
    """Batch-mean-centered rewards over the population standard deviation."""
    rewards = np.asarray(rewards, dtype=np.float64)
    centered = rewards - rewards.mean(axis=-1, keepdims=True)
    scale = np.sqrt(np.mean(centered * centered, axis=-1, keepdims=True))
    safe = np.where(scale < eps, 1.0, scale)
    return np.where(scale < eps, 0.0, centered / safe)


def vbos_weights(mu, sigma, logprobs):
    return pseudo_from_moments(mu, sigma, logprobs)


def ac_weights(mu, sigma, logprobs):
    return np.array(mu, dtype=np.float64)


def sac_weights(alpha):
    if not alpha > 0:
        raise ValueError(f"entropy coefficient must be positive, got {alpha!r}")

    def weights(mu, sigma, logprobs):
        # the -alpha from d(u ln u)/du is a constant; RLOO removes it
        return mu - alpha * logprobs

    return weights


def score_gradient(policy, points, weights, standardize=True):
    """Monte-Carlo gradient ``(1/B) sum_i a_i d ln pi(x_i) / d theta``."""
    n = len(weights)
    adv = rloo_standardized(weights) if standardize else rloo_advantages(weights)
    acc = policy.new_accumulator()
    policy.grad_logprob(points, acc, adv / n)
    return acc.value, adv


def _gradient_step(policy, gp, feature_map, batch_size, lr, rng, weight_fn):
    if batch_size < 2:
        raise ValueError("generation batch size must be at least 2")
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr!r}")
    points = policy.sample(rng, batch_size)
    logprobs = policy.logprob(points)
    mom = gp_posterior(gp, np.atleast_2d(feature_map(points)))
    weights = weight_fn(mom.mu, mom.sigma, logprobs)
    adv = rloo_standardized(weights)
    acc = policy.new_accumulator()
    policy.grad_logprob(points, acc, adv / batch_size)
    policy.step(acc, lr)
    raw = rloo_advantages(weights)
    diagnostics = {
        "points": points,
        "mean_pseudo": float(weights.mean()),
        "advantage_std": float(np.sqrt(np.mean(raw * raw))),
        "mean_logprob": float(logprobs.mean()),
    }
    return policy, diagnostics


def vbos_gradient_step(policy, gp, feature_map, batch_size, lr, rng):
    return _gradient_step(policy, gp, feature_map, batch_size, lr, rng, vbos_weights)


def ac_gradient_step(policy, gp, feature_map, batch_size, lr, rng):
    return _gradient_step(policy, gp, feature_map, batch_size, lr, rng, ac_weights)


def sac_gradient_step(policy, gp, feature_map, batch_size, lr, rng, alpha):
    return _gradient_step(policy, gp, feature_map, batch_size, lr, rng, sac_weights(alpha))


def exact_score_gradient(policy, weight_fn, mu, sigma):
    """Expected score gradient ``sum_x pi_x w_x d ln pi_x / d theta`` by enumeration.

    ``mu`` and ``sigma`` are indexed like ``policy.enumerate_points()``.
    """
    points = policy.enumerate_points()
    logprobs = policy.logprob(points)
    weights = weight_fn(np.asarray(mu, float), np.asarray(sigma, float), logprobs)
    acc = policy.new_accumulator()
    policy.grad_logprob(points, acc, np.exp(logprobs) * weights)
    return acc.value


def exact_vbos_gradient(policy, mu, sigma):
    return exact_score_gradient(policy, vbos_weights, mu, sigma)


def exact_sac_gradient(policy, mu, alpha):
    return exact_score_gradient(policy, sac_weights(alpha), mu, np.zeros(len(mu)))
