"""Compare the compiled kernels against the pure-Python fallback.

Usage::

    python benchmarks/bench_kernels.py [--repeat 3] [--epochs 20]

Both backends consume the same RNG stream, so the benchmark also checks that
they end at the same iterate.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from seglab import _fallback
from seglab.optimizers import MethodSpec, step_sizes
from seglab.problems import gen_monotone
from seglab.rng import seed_state
from seglab.schedules import Constant

try:
    from seglab import _kernels
except ImportError:  # extension not built
    _kernels = None


def _time(fn, repeat):
    best = float("inf")
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_seg_epochs(mod, problem, method, epochs, repeat):
    alphas, betas = step_sizes(method, Constant(1e-3), problem.n, 0, epochs)

    def go():
        z = np.ones(problem.dim)
        state = seed_state(1)
        mod.seg_epochs(problem.jacobians, problem.offsets, z, state, method.sampling,
                       int(method.anchored), alphas, betas, epochs)
        return z

    return _time(go, repeat)


def bench_phi(mod, n, trials, repeat):
    return _time(lambda: mod.phi_samples(seed_state(2), n, 1.0, trials), repeat)


def bench_words(mod, count, repeat):
    return _time(lambda: mod.raw_words(seed_state(3), count), repeat)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--epochs", type=int, default=20)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not available; build it with `pip install -e .`")
        return 1

    problem = gen_monotone(0, 20, 20, 40)
    rows = []
    for fam in ("SEG-US", "SEG-RR", "SEG-FFA"):
        method = MethodSpec(fam)
        tc, zc = bench_seg_epochs(_kernels, problem, method, args.epochs, args.repeat)
        tp, zp = bench_seg_epochs(_fallback, problem, method, args.epochs, args.repeat)
        rows.append((f"seg_epochs {fam} x{args.epochs}", tc, tp, float(np.max(np.abs(zc - zp)))))
    tc, pc = bench_phi(_kernels, 8, 20000, args.repeat)
    tp, pp = bench_phi(_fallback, 8, 20000, args.repeat)
    rows.append(("phi_samples n=8 x20000", tc, tp, float(np.max(np.abs(pc - pp)))))
    tc, wc = bench_words(_kernels, 10**5, args.repeat)
    tp, wp = bench_words(_fallback, 10**5, args.repeat)
    rows.append(("raw_words x1e5", tc, tp, float(np.any(wc != wp))))

    print(f"{'kernel':32s} {'compiled s':>11s} {'python s':>11s} {'speedup':>9s} {'max diff':>10s}")
    for name, tc, tp, diff in rows:
        print(f"{name:32s} {tc:11.4f} {tp:11.4f} {tp / tc:9.1f} {diff:10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
