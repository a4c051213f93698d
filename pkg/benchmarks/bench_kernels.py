"""Time the compiled kernels against the numpy fallback on representative inputs.

Usage: ``python3 benchmarks/bench_kernels.py [--repeat N]``.  Prints the best
wall time per call for each backend and the speedup; outputs of the two
backends are compared before timing.
"""

import argparse
import timeit

import numpy as np

from pombo.kernels import BACKENDS
from pombo.policies import AutoregressiveSeqPolicy


def cases(rng):
    d = 13
    psi_inv = np.linalg.inv(np.eye(d) * 1e-4 + np.cov(rng.normal(size=(d, 200))))
    phi = rng.normal(size=d)
    feats = rng.normal(size=(1024, d))
    centered = rng.normal(size=d)
    mu, sigma = rng.normal(size=4096), rng.uniform(0.1, 2.0, 4096)
    u = rng.uniform(1e-6, 1 - 1e-6, 4096)
    pseudo = rng.normal(size=16)
    pol = AutoregressiveSeqPolicy(2, 12, rng=rng)
    w1, b1, w2, b2 = (np.ascontiguousarray(w) for w in pol.weights)
    unif = rng.random((16, 12))
    return {
        "v (4096)": lambda k: k.v(mu),
        "v_inv (4096)": lambda k: k.v_inv(u),
        "sm_update (d=13)": lambda k: k.sm_update(psi_inv.copy(), phi),
        "posterior_moments (1024 x 13)": lambda k: k.posterior_moments(psi_inv, centered, 0.1, 0.4, feats),
        "vbos_kappa (4096)": lambda k: k.vbos_kappa(mu, sigma, -50.0, 50.0, 1e-13, 200),
        "rloo_standardize (B=16)": lambda k: k.rloo_standardize(pseudo, 1e-8),
        "ar_sample (16 x L=12)": lambda k: k.ar_sample(w1, b1, w2, b2, 12, 2, unif),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(_same(x, y) for x, y in zip(a, b))
    if a is None:
        return b is None
    return np.allclose(np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64), rtol=1e-10, atol=1e-12)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    if "cython" not in BACKENDS:
        print("compiled extension not built; only the numpy fallback is available")
        return 1
    py, cy = BACKENDS["python"], BACKENDS["cython"]
    print(f"{'kernel':32s} {'python':>12s} {'cython':>12s} {'speedup':>8s}")
    for name, fn in cases(np.random.default_rng(0)).items():
        if not _same(fn(py), fn(cy)):
            raise SystemExit(f"{name}: backends disagree")
        times = []
        for k in (py, cy):
            timer = timeit.Timer(lambda: fn(k))
            n, _ = timer.autorange()
            times.append(min(timer.repeat(args.repeat, n)) / n)
        print(f"{name:32s} {times[0] * 1e6:10.1f}us {times[1] * 1e6:10.1f}us {times[0] / times[1]:7.1f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
