"""Experiment configuration, multi-seed execution and trace persistence.

A config file has three flat sections::

    [experiment]
    algorithm = tosfit
    seeds = 0-24
    output = runs/tosfit

    [env]
    name = sequence
    length = 12
    prior = biased

    [run]
    T = 300

Every seed builds its own environment realization, initial policy and random
streams, so seeds can run in any order or in parallel with identical output.
"""

import configparser
import csv
import math
import os
import re
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from pombo.algorithms import ALGORITHMS, ConfigError, RunConfig
from pombo.environments import ENVIRONMENTS, PriorSpec, env_enumerate, pretrain_policy
from pombo.rng import make_rng

WORKERS_ENV = "POMBO_WORKERS"

_ENV_PARAMS = {
    "bandit": {"n_arms": int, "dim": int, "noise": float, "offset": float},
    "sequence": {"length": int, "noise": float},
}
_PRIOR_KEYS = {"prior": str, "prior_strength": float, "prior_alignment": float, "pretrain_iters": int}
_RUN_TYPES = {f.name: f.type for f in fields(RunConfig) if f.name != "seed"}
_RUN_EXTRA = {"pool_exclude_max": bool}
_EXPERIMENT_KEYS = {"algorithm", "seeds", "output"}


def _coerce_bool(text):
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


_CASTS = {int: int, float: float, str: str, bool: _coerce_bool}


@dataclass
class ExperimentSpec:
    algorithm: str
    env_name: str
    env_params: dict = field(default_factory=dict)
    prior: PriorSpec = field(default_factory=PriorSpec)
    pretrain_iters: int = 300
    run: RunConfig = field(default_factory=RunConfig)
    pool_exclude_max: bool = False
    seeds: list = field(default_factory=lambda: list(range(25)))
    output: str = "runs/experiment"


def _line_of(text, section, key):
    """1-based line of ``key`` inside ``[section]`` (first match), or None."""
    current = None
    for no, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        head = re.match(r"\[([^\]]+)\]", stripped)
        if head:
            current = head.group(1).strip()
        elif current == section and re.match(rf"{re.escape(key)}\s*[=:]", stripped, re.IGNORECASE):
            return no
    return None


def _where(text, section, key):
    line = _line_of(text, section, key)
    return f"line {line}: [{section}] {key}" if line else f"[{section}] {key}"


def parse_seeds(text):
    """``"0-24"``, ``"0,3,5"`` or a mix like ``"0-4,10"``."""
    seeds = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part:
            lo, hi = part.split("-", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError(f"empty seed range {part!r}")
            seeds.extend(range(lo, hi + 1))
        else:
            seeds.append(int(part))
    if not seeds:
        raise ValueError("the seed list is empty")
    if any(s < 0 for s in seeds):
        raise ValueError("seeds must be nonnegative")
    return seeds


def parse_config(text):
    """Parse and validate a config document; raises :class:`ConfigError`."""
    parser = configparser.ConfigParser(strict=True, interpolation=None, default_section="__none__",
                                       inline_comment_prefixes=(";", "#"))
    parser.optionxform = str
    try:
        parser.read_string(text)
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate key {exc.option!r} in [{exc.section}]") from None
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(f"line {exc.lineno}: duplicate section [{exc.section}]") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None

    for section in parser.sections():
        if section not in ("experiment", "env", "run"):
            raise ConfigError(f"unknown section [{section}]")
    for section in ("experiment", "env"):
        if not parser.has_section(section):
            raise ConfigError(f"missing section [{section}]")

    exp = parser["experiment"]
    for key in exp:
        if key not in _EXPERIMENT_KEYS:
            raise ConfigError(f"{_where(text, 'experiment', key)}: unknown key")
    if "algorithm" not in exp:
        raise ConfigError("[experiment] algorithm is required")
    algorithm = exp["algorithm"].strip()
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"{_where(text, 'experiment', 'algorithm')}: unknown algorithm {algorithm!r}")
    spec = ExperimentSpec(algorithm=algorithm, env_name="")
    if "seeds" in exp:
        try:
            spec.seeds = parse_seeds(exp["seeds"])
        except ValueError as exc:
            raise ConfigError(f"{_where(text, 'experiment', 'seeds')}: {exc}") from None
    if "output" in exp:
        spec.output = exp["output"].strip()

    env = parser["env"]
    if "name" not in env:
        raise ConfigError("[env] name is required")
    spec.env_name = env["name"].strip()
    if spec.env_name not in ENVIRONMENTS:
        raise ConfigError(f"{_where(text, 'env', 'name')}: unknown environment {spec.env_name!r}")
    allowed = {**_ENV_PARAMS[spec.env_name], **_PRIOR_KEYS}
    prior_kw = {}
    for key, raw in env.items():
        if key == "name":
            continue
        if key not in allowed:
            raise ConfigError(f"{_where(text, 'env', key)}: unknown key for environment {spec.env_name!r}")
        try:
            val = _CASTS[allowed[key]](raw)
        except ValueError:
            raise ConfigError(f"{_where(text, 'env', key)}: expected {allowed[key].__name__}, got {raw!r}") from None
        if key == "prior":
            prior_kw["kind"] = val.strip()
        elif key == "prior_strength":
            prior_kw["strength"] = val
        elif key == "prior_alignment":
            prior_kw["alignment"] = val
        elif key == "pretrain_iters":
            spec.pretrain_iters = val
        else:
            spec.env_params[key] = val
    try:
        spec.prior = PriorSpec(**prior_kw)
    except ValueError as exc:
        raise ConfigError(f"[env] prior: {exc}") from None

    run_kw = {}
    if parser.has_section("run"):
        for key, raw in parser["run"].items():
            kind = _RUN_TYPES.get(key) or _RUN_EXTRA.get(key)
            if kind is None:
                raise ConfigError(f"{_where(text, 'run', key)}: unknown key")
            try:
                val = _CASTS[kind](raw)
            except ValueError:
                raise ConfigError(f"{_where(text, 'run', key)}: expected {kind.__name__}, got {raw!r}") from None
            if key == "pool_exclude_max":
                spec.pool_exclude_max = val
            else:
                run_kw[key] = val
    spec.run = RunConfig(**run_kw)
    try:
        spec.run.validate()
    except ConfigError as exc:
        raise ConfigError(f"[run] {exc}") from None
    if spec.algorithm == "sac" and spec.run.sac_alpha is None:
        raise ConfigError("[run] sac_alpha is required for the sac algorithm")
    return spec


def load_config(path):
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config(text)


def make_env(name, seed, **params):
    return ENVIRONMENTS[name](seed=seed, **params)


def prepare_run(env_name, env_params, prior, seed, pretrain_iters=300):
    """Environment realization and initial policy for one seed."""
    env = make_env(env_name, seed, **env_params)
    policy = env.new_policy(rng=make_rng(seed, "init"))
    info = None
    if prior.kind != "uniform":
        policy, info = pretrain_policy(policy, prior, env, iters=pretrain_iters)
    return env, policy, info


def pool_without_max(env, policy, size, seed):
    """``size`` policy samples with every copy of the global maximizer removed."""
    _, _, rewards = env_enumerate(env)
    pool = policy.sample(make_rng(seed, "select"), size)
    keep = env.reward(pool) < rewards.max()
    return pool[keep]


def run_seed(spec, seed):
    """Run one seed of ``spec`` and return its trace."""
    env, policy, _ = prepare_run(spec.env_name, spec.env_params, spec.prior, seed, spec.pretrain_iters)
    cfg = RunConfig(**{**spec.run.__dict__, "seed": seed})
    fn = ALGORITHMS[spec.algorithm]
    if spec.algorithm in ("exact_ts", "exact_vbos"):
        return fn(env, cfg)
    if spec.algorithm == "pgts":
        pool = pool_without_max(env, policy, cfg.pool_size, seed) if spec.pool_exclude_max else None
        return fn(env, policy, cfg, pool=pool)
    return fn(env, policy, cfg)


def _fmt(x):
    return format(float(x), ".17g")


def write_trace_csv(trace, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "step", "point_hash", "reward", "best_seen"])
        for step, h, y, best in zip(trace.step, trace.point_hash, trace.reward, trace.best_seen):
            w.writerow([trace.seed, int(step), int(h), _fmt(y), _fmt(best)])


def aggregate_best_seen(curves):
    """Per-step mean and standard error (sample std / sqrt(n)) over equal-length curves."""
    arr = np.vstack(curves)
    n = arr.shape[0]
    mean = arr.mean(axis=0)
    se = arr.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.full(arr.shape[1], np.nan)
    return mean, se


def write_aggregate_csv(mean, se, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "mean_best_seen", "se"])
        for i, (m, s) in enumerate(zip(mean, se), 1):
            w.writerow([i, _fmt(m), _fmt(s)])


@dataclass
class ExperimentResult:
    seed_files: dict
    aggregate_file: Path
    failures: dict
    best_seen: dict


def _seed_job(args):
    spec, seed, out = args
    try:
        trace = run_seed(spec, seed)
    except Exception as exc:  # recorded per seed; the aggregate uses the rest
        return seed, None, f"{type(exc).__name__}: {exc}"
    path = out / f"seed_{seed:03d}.csv"
    write_trace_csv(trace, path)
    return seed, trace.best_seen, None


def default_workers():
    try:
        return max(1, int(os.environ.get(WORKERS_ENV, "1")))
    except ValueError:
        return 1


def run_experiment(spec, workers=None):
    """Run every seed, write per-seed CSVs and the aggregate CSV."""
    out = Path(spec.output)
    out.mkdir(parents=True, exist_ok=True)
    workers = default_workers() if workers is None else max(1, int(workers))
    jobs = [(spec, s, out) for s in spec.seeds]
    if workers == 1 or len(jobs) == 1:
        results = [_seed_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_seed_job, jobs))
    failures = {s: err for s, _, err in results if err is not None}
    curves = {s: best for s, best, err in results if err is None}
    if not curves:
        raise RuntimeError(f"every seed failed: {failures}")
    if failures:
        warnings.warn(f"{len(failures)} seed(s) failed; aggregating {len(curves)}", RuntimeWarning)
    mean, se = aggregate_best_seen([curves[s] for s in sorted(curves)])
    agg = out / "aggregate.csv"
    write_aggregate_csv(mean, se, agg)
    files = {s: out / f"seed_{s:03d}.csv" for s in curves}
    return ExperimentResult(files, agg, failures, curves)
