"""Compiled vs pure-numpy time loop on bundled scenarios.

    python3 benchmarks/bench_kernels.py [--scenarios fis braess] [--repeat 3]

Both kernels are timed on identical inputs (the compiled one after a warm-up
call, so JIT time is excluded) and their outputs are compared.
"""

from __future__ import annotations

import argparse
import time
from dataclasses import replace

import numpy as np

from crowdflux import kernels
from crowdflux.config import load_bundled
from crowdflux.scheme import run


def time_kernel(sc, kernel, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = run(sc.scheme, sc.grid, sc.model, sc.datum, kernel=kernel)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--scenarios", nargs="+", default=["fis", "braess", "slowzone_lambda"])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    print(f"{'scenario':<18}{'cells':>7}{'steps':>8}{'numba s':>10}{'numpy s':>10}{'speedup':>9}{'ns/update':>11}{'max |d mass|':>14}")
    for name in args.scenarios:
        sc = replace(load_bundled(name), sweep=None).build()
        run(sc.scheme, sc.grid, sc.model, sc.datum, kernel=kernels._advance_numba)  # compile
        t_nb, a = time_kernel(sc, kernels._advance_numba, args.repeat)
        t_np, b = time_kernel(sc, kernels._advance_numpy, max(1, args.repeat // 2))
        updates = a.n_steps * sc.grid.n_cells
        diff = float(np.abs(a.mass_history - b.mass_history).max())
        same_evac = a.evacuation_time == b.evacuation_time
        print(
            f"{name:<18}{sc.grid.n_cells:>7}{a.n_steps:>8}{t_nb:>10.3f}{t_np:>10.3f}"
            f"{t_np / t_nb:>9.1f}{1e9 * t_nb / updates:>11.2f}{diff:>14.1e}"
            + ("" if same_evac else "  evacuation times differ!")
        )


if __name__ == "__main__":
    main()
