"""Bayesian optimization loops over a shared environment/policy interface.

Every loop spends an observation budget of ``T`` rewards, grouped into
iterations of ``b`` observations, and records one row per observation in a
:class:`Trace`.  Random streams are split per seed (see :mod:`pombo.rng`) so
that policy sampling, observation noise and posterior draws never share state.
"""

import math
import time
from dataclasses import dataclass, field

import numpy as np

from pombo.environments import ENUMERATION_CAP, point_hash
from pombo.gp import gp_new, gp_posterior, gp_refit, gp_update_batch, weight_posterior
from pombo.learner import ac_gradient_step, sac_gradient_step, vbos_gradient_step
from pombo.policies import TabularSoftmaxPolicy
from pombo.rng import make_rng
from pombo.vbos import MomentField, bregman, vbos_solve, vbos_value


class ConfigError(ValueError):
    pass


class DomainError(ValueError):
    pass


@dataclass
class RunConfig:
    """Loop hyperparameters.  ``T`` counts observations, not iterations."""

    T: int = 300
    m: int = 16
    c: int = 1
    B: int = 16
    b: int = 1
    lr: float = 0.1
    bonus: float = 4.0
    sigma_nar: float = 0.01
    sac_alpha: float = None
    pool_size: int = 1000
    seed: int = 0
    diagnostics: bool = False

    def validate(self):
        for name in ("T", "m", "c", "B", "b", "pool_size", "seed"):
            val = getattr(self, name)
            if isinstance(val, bool) or int(val) != val:
                raise ConfigError(f"{name} must be an integer, got {val!r}")
        if self.T < 1:
            raise ConfigError("T must be at least 1")
        if self.m < 1:
            raise ConfigError("m must be at least 1")
        if self.c < 0:
            raise ConfigError("c must be nonnegative")
        if self.B < 2:
            raise ConfigError("B must be at least 2")
        if not 1 <= self.b <= self.B:
            raise ConfigError("b must satisfy 1 <= b <= B")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if not self.bonus >= 1.0:
            raise ConfigError("bonus must be at least 1")
        if not self.sigma_nar > 0:
            raise ConfigError("sigma_nar must be positive")
        if self.sac_alpha is not None and not self.sac_alpha > 0:
            raise ConfigError("sac_alpha must be positive")
        if self.pool_size < 1:
            raise ConfigError("pool_size must be at least 1")
        return self


@dataclass
class Trace:
    """Observation records plus per-iteration diagnostics.

    Row ``k`` of the observation arrays is the ``k+1``-th reward observed;
    ``iteration`` is the 0-based BO iteration that queried it (burn-in
    iterations included, ``b`` observations each).
    """

    algorithm: str
    seed: int
    step: np.ndarray
    iteration: np.ndarray
    points: list
    point_hash: np.ndarray
    reward: np.ndarray
    true_reward: np.ndarray
    best_seen: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    policy: object = None

    def __len__(self):
        return self.step.size

    @property
    def n_iterations(self):
        return int(self.iteration[-1]) + 1 if len(self) else 0

    @property
    def final_answer(self):
        """The observed point with the largest observed reward (first on ties)."""
        return self.points[int(np.argmax(self.reward))]


class _Recorder:
    def __init__(self, env, config, name):
        self.env, self.config, self.name = env, config, name
        self.points, self.rewards, self.true, self.iters = [], [], [], []
        self.diag = {"iteration": [], "wall_time": [], "entropy": [], "V": [], "bregman": []}
        self.t0 = time.perf_counter()
        self.iteration = 0

    @property
    def count(self):
        return len(self.rewards)

    @property
    def remaining(self):
        return self.config.T - self.count

    def observe(self, points, rng):
        """Observe up to ``remaining`` of ``points``; returns (points, features, y)."""
        points = points[: self.remaining]
        y = self.env.observe(points, rng)
        self.points.extend(points)
        self.rewards.extend(y.tolist())
        self.true.extend(self.env.reward(points).tolist())
        self.iters.extend([self.iteration] * len(y))
        return points, self.env.features(points), y

    def end_iteration(self, policy=None, gp=None):
        if self.config.diagnostics:
            self.diag["iteration"].append(self.iteration)
            self.diag["wall_time"].append(time.perf_counter() - self.t0)
            self._policy_diagnostics(policy, gp)
        self.iteration += 1

    def _policy_diagnostics(self, policy, gp):
        ent = val = gap = float("nan")
        if isinstance(policy, TabularSoftmaxPolicy):
            ent = policy.entropy()
        if policy is not None and gp is not None and self.env.size <= ENUMERATION_CAP:
            pts = self.env.enumerate_points()
            mom = gp_posterior(gp, self.env.features(pts))
            fld = MomentField(mom.mu, mom.sigma)
            pi = np.exp(policy.logprob(pts))
            pi /= pi.sum()
            val = vbos_value(pi, fld)
            gap = bregman(pi, vbos_solve(fld), fld, check=False)
        self.diag["entropy"].append(ent)
        self.diag["V"].append(val)
        self.diag["bregman"].append(gap)

    def finish(self, policy=None):
        rewards = np.array(self.rewards, dtype=np.float64)
        diag = {k: np.array(v) for k, v in self.diag.items()} if self.config.diagnostics else {}
        return Trace(
            algorithm=self.name,
            seed=self.config.seed,
            step=np.arange(1, rewards.size + 1),
            iteration=np.array(self.iters, dtype=np.int64),
            points=self.points,
            point_hash=np.array([point_hash(self.env, p) for p in self.points], dtype=np.uint64),
            reward=rewards,
            true_reward=np.array(self.true, dtype=np.float64),
            best_seen=np.maximum.accumulate(rewards),
            diagnostics=diag,
            policy=policy,
        )


def _streams(seed):
    return {s: make_rng(seed, s) for s in ("policy", "noise", "select")}


def _burn_in(rec, gp, points, rng_noise, policy=None):
    """Observe burn-in points ``b`` at a time and fit the GP hyperparameters."""
    b = rec.config.b
    for start in range(0, len(points), b):
        if rec.remaining <= 0:
            break
        _, feats, y = rec.observe(points[start:start + b], rng_noise)
        gp_update_batch(gp, feats, y)
        rec.end_iteration(policy, gp)
    if gp.count:
        gp_refit(gp)
    gp.bonus = rec.config.bonus


def _policy_loop(name, env, policy, config, step_fn):
    config.validate()
    rng = _streams(config.seed)
    rec = _Recorder(env, config, name)
    gp = gp_new(env.dim, config.sigma_nar)
    n_burn = min(config.m, config.T)
    _burn_in(rec, gp, policy.sample(rng["policy"], n_burn), rng["noise"], policy)
    while rec.remaining > 0:
        batch = None
        for _ in range(config.c):
            policy, diag = step_fn(policy, gp, env.features, config.B, config.lr, rng["policy"])
            batch = diag["points"]
        if batch is None:
            batch = policy.sample(rng["policy"], config.b)
        _, feats, y = rec.observe(batch[: config.b], rng["noise"])
        gp_update_batch(gp, feats, y)
        gp_refit(gp)
        rec.end_iteration(policy, gp)
    return rec.finish(policy)


def run_tosfit(env, policy, config, step_fn=None):
    """Fine-tune ``policy`` toward the VBOS distribution of the current posterior.

    Burn-in samples ``m`` points from the initial policy.  Afterwards each
    iteration takes ``c`` gradient steps (``B`` fresh samples each) and
    observes the first ``b`` samples of the last batch.  With ``c = 0`` the
    policy is frozen and ``b`` fresh samples are observed per iteration.
    """
    return _policy_loop("tosfit", env, policy, config, step_fn or vbos_gradient_step)


def run_ac(env, policy, config):
    return _policy_loop("ac", env, policy, config, ac_gradient_step)


def run_sac(env, policy, config, alpha=None):
    alpha = config.sac_alpha if alpha is None else alpha
    if alpha is None or not alpha > 0:
        raise ConfigError("SAC needs a positive entropy coefficient")

    def step(policy, gp, fmap, B, lr, rng):
        return sac_gradient_step(policy, gp, fmap, B, lr, rng, alpha)

    return _policy_loop("sac", env, policy, config, step)


def run_unguided(env, policy, config):
    """Sample ``b`` points per iteration from the frozen policy."""
    config.validate()
    rng = _streams(config.seed)
    rec = _Recorder(env, config, "unguided")
    while rec.remaining > 0:
        rec.observe(policy.sample(rng["policy"], config.b), rng["noise"])
        rec.end_iteration(policy)
    return rec.finish(policy)


def _ts_argmax(gp, feats, rng, count):
    """Indices of ``count`` independent Thompson draws over the rows of ``feats``."""
    mean, chol = weight_posterior(gp)
    w = mean[:, None] + chol @ rng.standard_normal((gp.dim, count))
    return np.argmax(feats @ w, axis=0)


def run_pgts(env, policy, config, pool=None):
    """Thompson sampling restricted to a pool drawn once from the frozen policy.

    Burn-in queries the pool uniformly at random.
    """
    config.validate()
    rng = _streams(config.seed)
    if pool is None:
        pool = policy.sample(rng["policy"], config.pool_size)
    if len(pool) < 1:
        raise ConfigError("the candidate pool is empty")
    pool_feats = env.features(pool)
    rec = _Recorder(env, config, "pgts")
    gp = gp_new(env.dim, config.sigma_nar)
    n_burn = min(config.m, config.T)
    _burn_in(rec, gp, pool[rng["select"].integers(0, len(pool), n_burn)], rng["noise"])
    while rec.remaining > 0:
        idx = _ts_argmax(gp, pool_feats, rng["select"], config.b)
        _, feats, y = rec.observe(pool[idx], rng["noise"])
        gp_update_batch(gp, feats, y)
        gp_refit(gp)
        rec.end_iteration()
    return rec.finish()


def _enumerated(env):
    if env.size > ENUMERATION_CAP:
        raise DomainError(f"domain of size {env.size} is not enumerable")
    pts = env.enumerate_points()
    return pts, env.features(pts)


def _exact_loop(name, env, config, gp, choose):
    config.validate()
    rng = _streams(config.seed)
    pts, feats = _enumerated(env)
    rec = _Recorder(env, config, name)
    gp = gp_new(env.dim, config.sigma_nar) if gp is None else gp.copy()
    fresh = gp.count == 0
    # burn-in plays the same rule under the prior hyperparameters
    n_burn = min(config.m, config.T) if fresh else 0
    for _ in range(math.ceil(n_burn / config.b)):
        take = min(config.b, n_burn - rec.count)
        _, f, y = rec.observe(pts[choose(gp, feats, rng["select"], take)], rng["noise"])
        gp_update_batch(gp, f, y)
        rec.end_iteration()
    if fresh:
        if gp.count:
            gp_refit(gp)
        gp.bonus = config.bonus
    while rec.remaining > 0:
        _, f, y = rec.observe(pts[choose(gp, feats, rng["select"], config.b)], rng["noise"])
        gp_update_batch(gp, f, y)
        gp_refit(gp)
        rec.end_iteration()
    return rec.finish()


def run_exact_ts(env, config, gp=None):
    """Thompson sampling over the enumerated domain via weight-space draws.

    A supplied ``gp`` is copied and used as the posterior for the first play,
    hyperparameters and bonus included, and no burn-in is run.
    """
    return _exact_loop("exact_ts", env, config, gp, _ts_argmax)


def _vbos_choice(gp, feats, rng, count):
    mom = gp_posterior(gp, feats)
    pi = vbos_solve(MomentField(mom.mu, mom.sigma)).pi
    cum = np.cumsum(pi)
    return np.minimum(np.searchsorted(cum, rng.random(count) * cum[-1], side="right"), pi.size - 1)


def run_exact_vbos(env, config, gp=None):
    """Sample plays from the exact VBOS distribution of the enumerated posterior."""
    return _exact_loop("exact_vbos", env, config, gp, _vbos_choice)


ALGORITHMS = {
    "tosfit": run_tosfit,
    "unguided": run_unguided,
    "pgts": run_pgts,
    "exact_ts": run_exact_ts,
    "exact_vbos": run_exact_vbos,
    "ac": run_ac,
    "sac": run_sac,
}
