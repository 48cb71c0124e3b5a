"""Compare the numba and numpy backends: single-row RHS and a short march.

    python3 benchmarks/bench_kernels.py [--sizes 256 1024 4096] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from gcimmersion import kernels
from gcimmersion._accel import NUMBA_AVAILABLE
from gcimmersion.metric import isothermal_helicoid
from gcimmersion.solver import SolverConfig, march, random_mode_perturbation


def _row(n, rng):
    s = np.linspace(-np.pi, np.pi, n, endpoint=False)
    a = np.arccos(1 / 1.35)
    Wp = a + 0.05 * np.sin(2 * s + 0.3)
    Wm = -a + 0.04 * np.cos(3 * s)
    tilde = tuple(rng.normal(scale=0.3, size=n) for _ in range(6))
    return Wp, Wm, tilde, 2 * np.pi / n


def bench_rows(sizes, repeat, backends):
    rng = np.random.default_rng(0)
    print(f"{'cells':>7} " + " ".join(f"{b + ' [us]':>14}" for b in backends) + f" {'max |diff|':>12}")
    for n in sizes:
        Wp, Wm, tilde, ds = _row(n, rng)
        times, outs = [], []
        for b in backends:
            f = lambda: kernels.row_rhs(Wp, Wm, tilde, 0.05, ds, kernels.ORIENT_X, 1, backend=b)
            outs.append(f())  # warm-up (and numba compile)
            number = max(1, 20000 // n)
            times.append(min(timeit.repeat(f, number=number, repeat=repeat)) / number * 1e6)
        diff = max(np.max(np.abs(outs[0][k] - outs[-1][k])) for k in (0, 1))
        print(f"{n:>7} " + " ".join(f"{t:>14.1f}" for t in times) + f" {diff:>12.2e}")


def bench_march(n, length, backends):
    cfg = SolverConfig(t0=-1.0, length=length, n_space=n, n_out=16, eps=0.05, on_breach="record")
    init = random_mode_perturbation(cfg.region(), n, np.random.default_rng(12345))
    metric = isothermal_helicoid(1.0)
    finals = []
    for b in backends:
        march(SolverConfig(t0=-1.0, length=0.01, n_space=n, n_out=2, eps=0.05), metric, init, backend=b)
        t0 = timeit.default_timer()
        tr = march(cfg, metric, init, backend=b)
        dt = timeit.default_timer() - t0
        finals.append(tr.Wp[-1])
        print(f"march {n} cells, length {length}: {b:>6} {dt:8.3f} s ({tr.steps} steps)")
    if len(finals) == 2:
        print(f"final-row difference between backends: {np.max(np.abs(finals[0] - finals[1])):.2e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[256, 1024, 4096])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--march-cells", type=int, default=256)
    ap.add_argument("--march-length", type=float, default=0.5)
    args = ap.parse_args()
    backends = ["numba", "numpy"] if NUMBA_AVAILABLE else ["numpy"]
    bench_rows(args.sizes, args.repeat, backends)
    bench_march(args.march_cells, args.march_length, backends)


if __name__ == "__main__":
    main()
