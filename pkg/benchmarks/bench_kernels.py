"""Time the numba kernels against their numpy fallbacks and one solver run.

    python3 benchmarks/bench_kernels.py --n 400 --repeat 5
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from vstar import _kernels as K
from vstar.grid import Grid
from vstar.profiles import vacuum_profile
from vstar.solver import SolverConfig, run


def best_of(fn, repeat: int) -> float:
    fn()  # warm-up (JIT compilation)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=400)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    rng = np.random.default_rng(0)
    g = Grid(args.n)
    f = rng.standard_normal((4, args.n))
    st = g.stencil(1, parity="odd", width=7)
    x, c, F = g.x, g.spacing, rng.standard_normal(args.n)
    print(f"backend in use: {K.backend_name()}, worker cap {K.thread_cap()}, n={args.n}")

    rows = [
        ("stencil_apply", lambda: K.stencil_apply_numpy(st.idx, st.w, f),
         lambda: K.stencil_apply_numba(st.idx, st.w, f)),
        ("gagliardo_sum", lambda: K.gagliardo_sum_numpy(x, c, F, 0.25),
         lambda: K.gagliardo_sum_numba(x, c, F, 0.25)),
    ]
    print(f"{'kernel':<16}{'numpy [ms]':>12}{'numba [ms]':>12}{'speedup':>10}")
    for name, a, b in rows:
        ta, tb = best_of(a, args.repeat), best_of(b, args.repeat)
        print(f"{name:<16}{1e3 * ta:>12.3f}{1e3 * tb:>12.3f}{ta / tb:>10.1f}")

    data = vacuum_profile(g, 2.0, u0=lambda s: 0.05 * s * (1 - s * s))
    cfg = SolverConfig(T_final=0.05)
    t = best_of(lambda: run(data, cfg, diagnostics=False), 1)
    print(f"solver run to T=0.05: {t:.3f} s")


if __name__ == "__main__":
    main()
