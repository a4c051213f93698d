"""Synthetic reward environments, point hashing and policy pre-training.

Rewards are realized once per construction seed; observation noise, if any,
is drawn from a caller-supplied generator.
"""

import csv
from dataclasses import dataclass

import numpy as np

from pombo.policies import AutoregressiveSeqPolicy, TabularSoftmaxPolicy, all_sequences
from pombo.rng import make_rng

ENUMERATION_CAP = 2**20

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


def fnv1a64(data):
    h = _FNV_OFFSET
    for byte in data:
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


class DomainError(ValueError):
    pass


class FiniteGaussianBandit:
    """``n_arms`` arms with unit-sphere features and reward ``offset + w^T phi``."""

    name = "bandit"

    def __init__(self, n_arms=64, dim=8, noise=0.0, offset=0.0, seed=0, features=None, weights=None):
        rng = make_rng(seed, "env")
        if features is None:
            features = rng.standard_normal((n_arms, dim))
            features /= np.linalg.norm(features, axis=1, keepdims=True)
        self._features = np.array(features, dtype=np.float64)
        self.n_arms, self.dim = self._features.shape
        self.weights = rng.standard_normal(self.dim) if weights is None else np.array(weights, float)
        self.offset = float(offset)
        self.noise = float(noise)
        self.seed = seed
        self.rewards = self.offset + self._features @ self.weights

    @property
    def size(self):
        return self.n_arms

    def _check(self, points):
        pts = np.atleast_1d(np.asarray(points))
        if not np.issubdtype(pts.dtype, np.integer) or pts.ndim != 1:
            raise DomainError("bandit points are integer arm indices")
        if pts.size and (pts.min() < 0 or pts.max() >= self.n_arms):
            raise DomainError(f"arm index outside [0, {self.n_arms})")
        return pts

    def features(self, points):
        return self._features[self._check(points)]

    def reward(self, points):
        return self.rewards[self._check(points)]

    def observe(self, points, rng):
        r = self.reward(points)
        if self.noise > 0:
            r = r + self.noise * rng.standard_normal(r.shape)
        return r

    def enumerate_points(self):
        return np.arange(self.n_arms)

    def point_key(self, point):
        return int(point)

    def point_bytes(self, point):
        return int(point).to_bytes(8, "big")

    def point_str(self, point):
        return str(int(point))

    def index_of(self, points):
        return self._check(points)

    def new_policy(self, rng=None):
        return TabularSoftmaxPolicy(self.n_arms)


class SequenceLinearEnv:
    """Binary sequences of fixed length with a linear reward in a +-1 encoding.

    ``phi(x) = (s / sqrt(L), 1) / sqrt(2)`` with ``s_t = 2 x_t - 1``, so every
    feature vector has unit norm and the last entry is a constant bias.
    """

    name = "sequence"

    def __init__(self, length=12, noise=0.0, seed=0, weights=None, vocab=2):
        if vocab != 2:
            raise ValueError("the +-1 feature map is defined for a binary vocabulary")
        self.vocab, self.length = 2, int(length)
        self.dim = self.length + 1
        rng = make_rng(seed, "env")
        self.weights = rng.standard_normal(self.dim) if weights is None else np.array(weights, float)
        self.noise = float(noise)
        self.seed = seed
        self._place = 2 ** np.arange(self.length - 1, -1, -1)

    @property
    def size(self):
        return 2**self.length

    def _check(self, points):
        pts = np.asarray(points)
        if pts.ndim == 1:
            pts = pts[None, :]
        if pts.ndim != 2 or pts.shape[1] != self.length or not np.issubdtype(pts.dtype, np.integer):
            raise DomainError(f"sequence points must be integer arrays of length {self.length}")
        if pts.size and (pts.min() < 0 or pts.max() > 1):
            raise DomainError("tokens must be 0 or 1")
        return pts

    def features(self, points):
        pts = self._check(points)
        signs = 2.0 * pts - 1.0
        out = np.empty((pts.shape[0], self.dim))
        out[:, :-1] = signs / np.sqrt(self.length)
        out[:, -1] = 1.0
        return out / np.sqrt(2.0)

    def reward(self, points):
        return self.features(points) @ self.weights

    def observe(self, points, rng):
        r = self.reward(points)
        if self.noise > 0:
            r = r + self.noise * rng.standard_normal(r.shape)
        return r

    def enumerate_points(self):
        if self.size > ENUMERATION_CAP:
            raise DomainError(f"domain of size {self.size} exceeds the enumeration cap")
        return all_sequences(2, self.length)

    def point_key(self, point):
        return tuple(int(t) for t in point)

    def point_bytes(self, point):
        return b"".join(int(t).to_bytes(4, "big") for t in point)

    def point_str(self, point):
        return "".join(str(int(t)) for t in point)

    def index_of(self, points):
        return self._check(points) @ self._place

    def new_policy(self, rng=None, hidden=32):
        return AutoregressiveSeqPolicy(2, self.length, hidden=hidden, rng=rng)


ENVIRONMENTS = {"bandit": FiniteGaussianBandit, "sequence": SequenceLinearEnv}


def point_hash(env, point):
    return fnv1a64(env.point_bytes(point))


def env_observe(env, x, rng):
    return env.observe(x, rng)


def env_enumerate(env):
    """``(points, features, rewards)`` over the whole domain."""
    if env.size > ENUMERATION_CAP:
        raise DomainError(f"domain of size {env.size} exceeds the enumeration cap")
    points = env.enumerate_points()
    return points, env.features(points), env.reward(points)


def write_enumeration_csv(env, path):
    points, feats, rewards = env_enumerate(env)
    header = ["index", "point", "point_hash", "reward"] + [f"phi_{j}" for j in range(feats.shape[1])]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for i, (p, f, r) in enumerate(zip(points, feats, rewards)):
            w.writerow([i, env.point_str(p), point_hash(env, p), format(r, ".17g")]
                       + [format(x, ".17g") for x in f])


@dataclass
class PriorSpec:
    """Target distribution for pre-training a policy.

    ``uniform``: uniform over the domain.  ``biased``: ``exp(strength * z)``
    where ``z`` is the standardized score along a direction whose cosine with
    the true reward weights is ``alignment``.  ``anti-biased``: the mirror
    image, sharing the off-target component of the direction but with cosine
    ``-alignment``.
    """

    kind: str = "uniform"
    strength: float = 5.0
    alignment: float = 0.2

    def __post_init__(self):
        if self.kind not in ("uniform", "biased", "anti-biased"):
            raise ValueError(f"unknown prior kind {self.kind!r}")
        if not 0.0 <= self.alignment <= 1.0:
            raise ValueError("alignment must lie in [0, 1]")


def _reward_direction(env):
    w = np.array(env.weights, dtype=np.float64)
    if isinstance(env, SequenceLinearEnv):
        w[-1] = 0.0  # the bias entry is constant over the domain
    return w / np.linalg.norm(w)


def prior_target(env, prior):
    """Probability vector over ``env.enumerate_points()``."""
    points = env.enumerate_points()
    if prior.kind == "uniform":
        return np.full(len(points), 1.0 / len(points))
    feats = env.features(points)
    w_hat = _reward_direction(env)
    rng = make_rng(env.seed, "prior")
    other = rng.standard_normal(w_hat.size)
    if isinstance(env, SequenceLinearEnv):
        other[-1] = 0.0
    other -= (other @ w_hat) * w_hat
    other /= np.linalg.norm(other)
    cos = prior.alignment if prior.kind == "biased" else -prior.alignment
    direction = cos * w_hat + np.sqrt(1.0 - cos**2) * other
    score = feats @ direction
    z = (score - score.mean()) / score.std()
    logits = prior.strength * z
    p = np.exp(logits - logits.max())
    return p / p.sum()


def _adam(params, grad, state, lr, b1=0.9, b2=0.999, eps=1e-8):
    state["t"] += 1
    state["m"] = b1 * state["m"] + (1 - b1) * grad
    state["v"] = b2 * state["v"] + (1 - b2) * grad * grad
    mhat = state["m"] / (1 - b1 ** state["t"])
    vhat = state["v"] / (1 - b2 ** state["t"])
    params += lr * mhat / (np.sqrt(vhat) + eps)


def pretrain_policy(policy, prior, env, iters=300, rng=None, lr=0.05, batch=256, tv_target=0.05, target=None):
    """Maximum-likelihood fit of ``policy`` to the prior's target distribution.

    An explicit ``target`` probability vector over ``env.enumerate_points()``
    overrides the one built from ``prior``.  Tabular policies use the exact expected log-likelihood gradient; sequence
    policies use minibatches of target samples.  Returns ``(policy, info)``
    where ``info`` has the final total variation and whether it met
    ``tv_target``; missing the target is reported, not raised.
    """
    points = env.enumerate_points()
    if target is None:
        target = prior_target(env, prior)
    else:
        target = np.asarray(target, dtype=np.float64)
        if target.shape != (len(points),) or np.any(target < 0) or abs(target.sum() - 1.0) > 1e-8:
            raise ValueError("target must be a probability vector over the enumerated domain")
    rng = make_rng(env.seed, "prior") if rng is None else rng
    state = {"t": 0, "m": np.zeros(policy.n_params), "v": np.zeros(policy.n_params)}
    exact = isinstance(policy, TabularSoftmaxPolicy)
    for it in range(iters):
        step_lr = lr if exact else lr * 0.5 * (1.0 + np.cos(np.pi * it / iters))  # cosine decay
        acc = policy.new_accumulator()
        if exact:
            policy.grad_logprob(points, acc, target)
        else:
            idx = rng.choice(len(points), size=batch, p=target)
            policy.grad_logprob(points[idx], acc, 1.0 / batch)
        _adam(policy.params, acc.value, state, step_lr)
    probs = np.exp(policy.logprob(points))
    tv = 0.5 * float(np.abs(probs - target).sum())
    return policy, {"tv": tv, "converged": tv <= tv_target, "target": target}
