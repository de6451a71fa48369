"""Compare the compiled kernels with the numpy fallback.

Times each hot kernel on identical inputs, then one full viscous run on the
8x8 benchmark in a subprocess per backend.

    python3 benchmarks/bench_kernels.py [--nodes N] [--repeat R] [--skip-run]
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from geodamage import _kernels_py as py

try:
    from geodamage import _kernels as compiled
except ImportError:  # pragma: no cover - depends on the build
    compiled = None

RUN_SNIPPET = """
import time
from geodamage import kernels
from geodamage.config import RunConfig
from geodamage.evolution import run_viscous
c = RunConfig()
t0 = time.perf_counter()
run_viscous(c.load(), c.law(), c.fe(), 20, 0.01)
print(kernels.BACKEND, time.perf_counter() - t0)
"""


def kernel_cases(n_nodes: int):
    rng = np.random.default_rng(0)
    Z = np.ascontiguousarray(2.0 * rng.normal(size=(n_nodes, 3)))
    lam = rng.uniform(0.1, 2.0, size=n_nodes)
    C = np.array([[3.0, 1.0, 0.0], [1.0, 3.0, 0.0], [0.0, 0.0, 2.0]])
    eps = rng.normal(size=3)
    for kind, a, b, name in ((0, 0.3, 0.0, "ball"), (1, 0.5, 0.3, "drucker_prager")):
        yield f"support[{name}]", "support_nodes", (Z, kind, a, b, 2)
        yield f"prox[{name}]", "prox_nodes", (Z, lam, kind, a, b, 2)
        yield f"prox_jacobian[{name}]", "prox_jacobian_nodes", (Z, lam, kind, a, b, 2)
        yield f"grid_scan[{name}]", "grid_scan", (np.zeros(3), 0.05, 21, C, eps, 0.5, 1.0, np.zeros(3), kind, a, b, 2)


def best_time(fn, args, repeat: int) -> float:
    timer = timeit.Timer(lambda: fn(*args))
    number, _ = timer.autorange()
    return min(timer.repeat(repeat, number)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nodes", type=int, default=145, help="nodes per kernel call (8x8 crossed mesh: 145)")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-run", action="store_true", help="only time the kernels")
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'kernel':<30s} {'python [us]':>12s} {'compiled [us]':>14s} {'speedup':>8s}")
    for label, name, kargs in kernel_cases(args.nodes):
        tp = best_time(getattr(py, name), kargs, args.repeat)
        tc = best_time(getattr(compiled, name), kargs, args.repeat)
        print(f"{label:<30s} {tp * 1e6:12.1f} {tc * 1e6:14.1f} {tp / tc:8.1f}x")
    if args.skip_run:
        return 0
    print("\nviscous benchmark run, 8x8 mesh, k=20, eps=0.01")
    for flag in ("0", "1"):
        env = dict(os.environ, GEODAMAGE_PURE_PYTHON=flag)
        r = subprocess.run([sys.executable, "-c", RUN_SNIPPET], capture_output=True, text=True, env=env, check=True)
        backend, secs = r.stdout.split()
        print(f"  {backend:<10s} {float(secs):8.2f} s")
    return 0


if __name__ == "__main__":
    sys.exit(main())
