"""Acceptance criteria: oracle equivalences, identities and behavioral orderings.

Each criterion returns a :class:`CriterionResult` carrying the measured value,
the tolerance it is judged against, and its wall time against a budget.  The
``quick`` level runs criteria 1-10 (seconds each); ``full`` adds the 25-seed
benchmark properties 11-14.
"""

import time
from dataclasses import dataclass

import numpy as np

from pombo import oracles
from pombo.algorithms import RunConfig, run_exact_ts, run_exact_vbos, run_pgts, run_tosfit, run_unguided
from pombo.environments import FiniteGaussianBandit, PriorSpec, SequenceLinearEnv, env_enumerate
from pombo.gp import gp_mlm, gp_new, gp_posterior, gp_update_batch
from pombo.harness import pool_without_max, prepare_run
from pombo.learner import exact_vbos_gradient, grpo_advantages, rloo_standardized, score_gradient, vbos_weights
from pombo.policies import TabularSoftmaxPolicy
from pombo.vbos import MomentField, bregman_explicit, v, v_inv, vbos_solve, vbos_value

N_SEEDS = 25
STRONG_PRIOR = PriorSpec("biased", strength=5.0, alignment=0.2)
WEAK_PRIOR = PriorSpec("anti-biased", strength=5.0, alignment=0.2)


@dataclass
class CriterionResult:
    number: int
    name: str
    passed: bool
    measured: str
    tolerance: str
    seconds: float
    budget: float

    @property
    def ok(self):
        return self.passed and self.seconds < self.budget

    def line(self):
        status = "PASS" if self.ok else "FAIL"
        timing = f"{self.seconds:.2f}s/{self.budget:g}s"
        if self.passed and not self.ok:
            timing += " (over budget)"
        return f"[{status}] {self.number:2d} {self.name}: {self.measured} (tol {self.tolerance}) [{timing}]"


def _rng(k):
    return np.random.default_rng([20240917, k])


def _random_field(rng, n, sigma_lo=0.1, sigma_hi=2.0):
    return MomentField(rng.normal(0.0, 1.0, n), rng.uniform(sigma_lo, sigma_hi, n))


def crit_gp_equivalence():
    rng = _rng(1)
    worst_mu = worst_sigma = 0.0
    for _ in range(50):
        d = int(rng.integers(1, 17))
        s = int(rng.integers(0, 201))
        sigma_nar = float(rng.choice([0.01, 0.1, 0.5]))
        nu, lam = float(rng.normal()), float(rng.uniform(0.3, 3.0))
        X = rng.normal(size=(s, d)) / np.sqrt(d)
        y = rng.normal(size=s)
        Q = rng.normal(size=(20, d)) / np.sqrt(d)
        st = gp_new(d, sigma_nar)
        gp_update_batch(st, X, y)
        st.nu, st.lam = nu, lam
        mom = gp_posterior(st, Q)
        ref = oracles.dense_gp_oracle(list(zip(X, y)), lambda x: x, nu, lam, sigma_nar, Q)
        worst_mu = max(worst_mu, float(np.abs(mom.mu - ref.mu).max()))
        worst_sigma = max(worst_sigma, float(np.abs(mom.sigma - ref.sigma).max()))
    worst = max(worst_mu, worst_sigma)
    return worst < 1e-8, f"max|dmu|={worst_mu:.2e}, max|dsigma|={worst_sigma:.2e}", "1e-08"


def crit_mlm():
    rng = _rng(2)
    res = 1e-3
    worst = 0.0
    for _ in range(20):
        d = int(rng.integers(1, 6))
        s = int(rng.integers(2, 61))
        sigma_nar = float(rng.uniform(0.2, 1.0))
        X = rng.normal(size=(s, d)) / np.sqrt(d)
        nu0, lam0 = rng.uniform(-1.0, 1.0), rng.uniform(0.3, 1.5)
        y = nu0 + lam0 * (X @ rng.normal(size=d) + sigma_nar * rng.normal(size=s))
        st = gp_new(d, sigma_nar)
        gp_update_batch(st, X, y)
        nu, lam = gp_mlm(st)
        g_nu, g_lam = oracles.grid_mlm(list(zip(X, y)), lambda x: x, sigma_nar, (-2.5, 2.5), (0.01, 3.0), res)
        worst = max(worst, abs(nu - g_nu), abs(lam - g_lam))
    st = gp_new(1, 1.0)
    gp_update_batch(st, np.zeros((2, 1)), np.array([1.0, 3.0]))
    nu, lam = gp_mlm(st)
    exact = abs(nu - 2.0) < 1e-12 and abs(lam - 1.0) < 1e-12
    return (worst <= res and exact,
            f"max grid gap={worst:.2e}; zero-feature case nu={nu:.15g}, lambda={lam:.15g}",
            "grid 1e-03; exact (2, 1)")


def crit_round_trip():
    c = np.linspace(-8.0, 8.0, 1000)
    err = float(np.abs(v_inv(v(c)) - c).max())
    return err < 1e-9, f"max|v_inv(v(c))-c|={err:.2e}", "1e-09"


def crit_vbos_optimality():
    rng = _rng(4)
    worst_margin = np.inf
    for _ in range(20):
        n = int(rng.integers(2, 9))
        fld = _random_field(rng, n)
        best = vbos_value(vbos_solve(fld).pi, fld)
        cands = rng.dirichlet(np.full(n, 0.5), size=1000)
        vals = np.array([vbos_value(p / p.sum(), fld) for p in cands])
        worst_margin = min(worst_margin, float(best - vals.max()))
    worst_tv = 0.0
    for n in (1, 2, 3, 2, 3, 3):
        fld = _random_field(rng, n, sigma_lo=0.3)
        grid_pi, _ = oracles.simplex_grid_vbos(fld.mu, fld.sigma, 1e-3)
        worst_tv = max(worst_tv, 0.5 * float(np.abs(grid_pi - vbos_solve(fld).pi).sum()))
    big = vbos_solve(_random_field(rng, 100_000))
    mass_err = abs(float(big.pi.sum()) - 1.0)
    ok = worst_margin >= -1e-8 and worst_tv <= 1e-3 and mass_err <= 1e-10
    return (ok, f"min V margin={worst_margin:.2e}, grid TV={worst_tv:.2e}, |sum-1| at 1e5={mass_err:.1e}",
            "-1e-08; 1e-03; 1e-10")


def crit_gradients():
    rng = _rng(5)
    fld = _random_field(rng, 3)
    theta = rng.normal(size=3)
    pol = TabularSoftmaxPolicy(3, theta)
    exact = exact_vbos_gradient(pol, fld.mu, fld.sigma)

    def objective(th):
        z = np.exp(th - th.max())
        return float(oracles.vbos_objective(z / z.sum(), fld.mu, fld.sigma))

    fd = oracles.finite_diff_grad(objective, theta, 1e-5)
    rel = float(np.linalg.norm(exact - fd) / np.linalg.norm(fd))

    # unbiasedness of the raw leave-one-out estimator on four arms
    fld4 = _random_field(rng, 4)
    pol4 = TabularSoftmaxPolicy(4, rng.normal(size=4))
    target = exact_vbos_gradient(pol4, fld4.mu, fld4.sigma)
    logp = pol4.log_probs()
    n_batches, B = 100_000, 8
    draws = np.empty((n_batches, 4))
    srng = _rng(55)
    for i in range(n_batches):
        x = pol4.sample(srng, B)
        w = vbos_weights(fld4.mu[x], fld4.sigma[x], logp[x])
        draws[i], _ = score_gradient(pol4, x, w, standardize=False)
    mean = draws.mean(axis=0)
    se = draws.std(axis=0, ddof=1) / np.sqrt(n_batches)
    z = float(np.max(np.abs(mean - target) / se))
    return rel < 1e-5 and z < 4.0, f"FD rel err={rel:.2e}, max |z|={z:.2f} over 1e5 batches", "1e-05; 4 se"


def crit_grpo():
    rng = _rng(6)
    worst = 0.0
    for _ in range(10_000):
        B = int(rng.integers(2, 33))
        x = rng.normal(size=B) * rng.uniform(0.01, 10.0)
        worst = max(worst, float(np.abs(rloo_standardized(x) - grpo_advantages(x)).max()))
    hand = rloo_standardized(np.array([1.0, 2.0, 3.0]))
    hand_err = float(np.abs(hand - np.array([-1.224745, 0.0, 1.224745])).max())
    return (worst < 1e-9 and hand_err < 1e-6,
            f"max|RLOO-GRPO|={worst:.2e}; (1,2,3)->({hand[0]:.6f}, {hand[1]:.6f}, {hand[2]:.6f})",
            "1e-09; 1e-06")


def crit_bregman():
    rng = _rng(7)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 17))
        fld = _random_field(rng, n)
        sol = vbos_solve(fld)
        pi = rng.dirichlet(np.ones(n))
        gap = vbos_value(sol.pi, fld) - vbos_value(pi, fld)
        worst = max(worst, abs(bregman_explicit(pi, sol, fld) - gap))
    return worst < 1e-8, f"max|explicit-gap|={worst:.2e}", "1e-08"


def crit_expected_max_bound():
    rng = _rng(8)
    cases = [(np.zeros(2), np.eye(2))]
    for _ in range(19):
        n = int(rng.integers(2, 9))
        A = rng.normal(size=(n, n))
        cases.append((rng.normal(size=n), A @ A.T / n + 0.05 * np.eye(n)))
    worst = -np.inf
    two_arm = None
    for mu, cov in cases:
        est = oracles.mc_expected_max(mu, cov, 100_000, rng)
        fld = MomentField(mu, np.sqrt(np.diag(cov)))
        bound = vbos_value(vbos_solve(fld).pi, fld)
        worst = max(worst, est.mean - bound - 3.0 * est.se)
        if two_arm is None:
            two_arm = (est.mean, bound)
    return (worst <= 0.0,
            f"max(MC-bound-3se)={worst:.3f}; two iid arms MC={two_arm[0]:.4f} bound={two_arm[1]:.4f}",
            "<= 0")


def ts_prior_problem():
    """Four arms whose rewards are correlated through two-dimensional features."""
    phi = np.array([[1.0, 0.0], [0.8, 0.6], [0.0, 1.0], [-0.6, 0.8]]) * np.array([[1.0], [0.9], [1.1], [0.7]])
    return FiniteGaussianBandit(features=phi, weights=np.zeros(2))


def crit_ts_pom(n_seeds=100_000):
    env = ts_prior_problem()
    counts = np.zeros(env.n_arms)
    for s in range(n_seeds):
        counts[int(run_exact_ts(env, RunConfig(T=1, seed=s)).points[0])] += 1
    freq = counts / n_seeds
    phi = env.features(env.enumerate_points())
    pom = oracles.mc_pom(np.zeros(env.n_arms), phi @ phi.T, 1_000_000, _rng(9))
    se = np.sqrt(freq * (1 - freq) / n_seeds + pom.se**2)
    z = float(np.max(np.abs(freq - pom.mean) / se))
    return z < 4.0, f"max |z|={z:.2f}; freq={np.round(freq, 4).tolist()} pom={np.round(pom.mean, 4).tolist()}", "4 se"


def crit_ascent():
    rng = _rng(10)
    fld = _random_field(rng, 8, sigma_lo=0.2)
    target = vbos_value(vbos_solve(fld).pi, fld)
    pol = TabularSoftmaxPolicy(8)
    lr = 1.0  # softmax ascent is monotone here up to lr ~ 2; 0.1 needs > 1e4 steps
    prev = vbos_value(pol.probs(), fld)
    worst_drop = 0.0
    steps = 0
    for steps in range(1, 10_001):
        pol.params += lr * exact_vbos_gradient(pol, fld.mu, fld.sigma)
        cur = vbos_value(pol.probs(), fld)
        worst_drop = max(worst_drop, prev - cur)
        prev = cur
        if target - cur < 1e-4:
            break
    gap = target - prev
    return (gap < 1e-4 and worst_drop <= 1e-10,
            f"gap={gap:.2e} after {steps} steps, max per-step decrease={worst_drop:.1e}",
            "1e-04; monotone 1e-10")


def _seq_case(seed, prior):
    return prepare_run("sequence", {"length": 12}, prior, seed)


def crit_plateau(n_seeds=N_SEEDS):
    wins = 0
    pool_hit = 0
    for s in range(n_seeds):
        env, policy, _ = _seq_case(s, STRONG_PRIOR)
        gmax = env_enumerate(env)[2].max()
        cfg = RunConfig(T=500, seed=s)
        pool = pool_without_max(env, policy, cfg.pool_size, s)
        pg = run_pgts(env, policy.copy(), cfg, pool=pool)
        pool_hit += int(pg.best_seen.max() >= gmax)
        tos = run_tosfit(env, policy.copy(), cfg)
        ung = run_unguided(env, policy.copy(), cfg)
        pool_max = env.reward(pool).max()
        wins += int(tos.best_seen[-1] > max(ung.best_seen[-1], pool_max))
    return (pool_hit == 0 and wins >= 20,
            f"PG-TS reached global max in {pool_hit}/{n_seeds}; ToSFiT beat both in {wins}/{n_seeds}",
            "0 hits; >= 20 wins")


def crit_strong_prior(n_seeds=N_SEEDS):
    finals = {"strong": [], "weak": []}
    for s in range(n_seeds):
        for name, prior in (("strong", STRONG_PRIOR), ("weak", WEAK_PRIOR)):
            env, policy, _ = _seq_case(s, prior)
            finals[name].append(run_tosfit(env, policy, RunConfig(T=300, seed=s)).best_seen[-1])
    strong, weak = np.mean(finals["strong"]), np.mean(finals["weak"])
    return strong > weak, f"mean best-seen at T=300 strong={strong:.4f} weak={weak:.4f}", "strong > weak"


def hitting_times(trace, threshold, budget):
    """(observations, iterations) needed to first observe a true reward >= threshold.

    Runs that never reach it are censored at one past the budget.
    """
    hit = np.flatnonzero(trace.true_reward >= threshold)
    if hit.size == 0:
        return budget + 1, trace.n_iterations + 1
    return int(hit[0]) + 1, int(trace.iteration[hit[0]]) + 1


def crit_batched(n_seeds=N_SEEDS, budget=512):
    stats = {1: [], 16: []}
    for s in range(n_seeds):
        env, policy, _ = prepare_run("bandit", {}, PriorSpec("uniform"), s)
        for b in stats:
            tr = run_tosfit(env, policy.copy(), RunConfig(T=budget, b=b, seed=s))
            stats[b].append(hitting_times(tr, env.rewards.max(), budget))
    o1, i1 = np.mean(stats[1], axis=0)
    o16, i16 = np.mean(stats[16], axis=0)
    return (i16 < i1 and o1 < o16,
            f"b=1: {o1:.2f} obs/{i1:.2f} iters; b=16: {o16:.2f} obs/{i16:.2f} iters",
            "iters(b=16) < iters(b=1) and obs(b=1) < obs(b=16)")


def crit_regret(n_seeds=N_SEEDS):
    regret = {"exact_ts": [], "exact_vbos": [], "uniform": []}
    for s in range(n_seeds):
        env = FiniteGaussianBandit(seed=s)
        best = env.rewards.max()
        for name, fn in (("exact_ts", run_exact_ts), ("exact_vbos", run_exact_vbos)):
            tr = fn(env, RunConfig(T=500, seed=s))
            regret[name].append(best - tr.true_reward[450:500].mean())
        regret["uniform"].append(best - env.rewards.mean())
    r = {k: float(np.mean(v)) for k, v in regret.items()}
    ok = r["exact_ts"] < 0.25 * r["uniform"] and r["exact_vbos"] < 0.25 * r["uniform"]
    return (ok, f"TS={r['exact_ts']:.4f}, VBOS={r['exact_vbos']:.4f}, uniform={r['uniform']:.4f}",
            "< 0.25 x uniform")


CRITERIA = [
    (1, "GP posterior vs dense oracle", crit_gp_equivalence, 10),
    (2, "closed-form MLM vs grid", crit_mlm, 30),
    (3, "v/v_inv round trip", crit_round_trip, 1),
    (4, "VBOS solver optimality", crit_vbos_optimality, 60),
    (5, "VBOS gradients", crit_gradients, 120),
    (6, "standardized RLOO equals GRPO", crit_grpo, 5),
    (7, "Bregman identity", crit_bregman, 5),
    (8, "expected-max bound", crit_expected_max_bound, 30),
    (9, "exact-TS probability of maximality", crit_ts_pom, 60),
    (10, "gradient ascent reaches VBOS", crit_ascent, 30),
    (11, "fixed-pool plateau", crit_plateau, 900),
    (12, "strong vs weak prior", crit_strong_prior, 900),
    (13, "batched observation trade-off", crit_batched, 900),
    (14, "regret sanity", crit_regret, 300),
]
QUICK = tuple(range(1, 11))
FULL = tuple(range(1, 15))


def run_criterion(number):
    num, name, fn, budget = next(c for c in CRITERIA if c[0] == number)
    t0 = time.perf_counter()
    try:
        passed, measured, tol = fn()
    except Exception as exc:  # a crash is a failure, reported like any other
        passed, measured, tol = False, f"error: {type(exc).__name__}: {exc}", "-"
    return CriterionResult(num, name, bool(passed), measured, tol, time.perf_counter() - t0, budget)


def verify(level="quick", out=print):
    numbers = QUICK if level == "quick" else FULL
    results = []
    for n in numbers:
        res = run_criterion(n)
        results.append(res)
        if out is not None:
            out(res.line())
    return results
