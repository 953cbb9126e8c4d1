"""Compare the compiled and numpy kernel backends.

Times forward, backward and nearest-neighbour kernels on a few problem sizes,
checks that both backends agree, and prints one row per (kernel, size).

    python benchmarks/bench_kernels.py [--repeat 5] [--threads 1]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from dnurbs.core import KnotVector, NurbsSurface, ParamGrid, kernels
from dnurbs.core.autodiff import backward_grid, forward_grid, grid_basis


def best_of(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def surface(n, m, rng):
    return NurbsSurface(
        rng.normal(size=(n, m, 3)), rng.uniform(0.5, 2.0, size=(n, m)), KnotVector.uniform(n, 3), KnotVector.uniform(m, 3)
    )


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--threads", type=int, default=kernels.get_num_threads())
    args = ap.parse_args(argv)
    names = kernels.available_backends()
    if "cython" not in names:
        print("compiled backend not built; only timing the numpy fallback")
    rng = np.random.default_rng(0)
    print(f"threads={args.threads} backends={','.join(names)}")
    print(f"{'kernel':<10}{'size':>14}" + "".join(f"{n + ' [ms]':>16}" for n in names) + f"{'speedup':>10}{'agree':>8}")
    for n, res in ((12, 64), (16, 128), (24, 256)):
        s = surface(n, n, rng)
        grid = ParamGrid(res, res)
        basis = grid_basis(s, grid)
        up = rng.normal(size=(res, res, 3))
        rows = {"forward": {}, "backward": {}}
        outs = {"forward": {}, "backward": {}}
        for name in names:
            kernels.set_backend(name)
            S, tape = forward_grid(s, grid, basis=basis, threads=args.threads)
            rows["forward"][name] = best_of(lambda: forward_grid(s, grid, basis=basis, threads=args.threads), args.repeat)
            rows["backward"][name] = best_of(lambda: backward_grid(s, tape, up, threads=args.threads), args.repeat)
            outs["forward"][name] = S
            outs["backward"][name] = backward_grid(s, tape, up, threads=args.threads).d_points
        for kern in ("forward", "backward"):
            _row(kern, f"{n}x{n}@{res}^2", rows[kern], outs[kern], names)
    for nq in (1024, 4096, 16384):
        q = rng.normal(size=(nq, 3))
        r = rng.normal(size=(nq // 2, 3))
        times, outs = {}, {}
        for name in names:
            impl = kernels.get(name)
            times[name] = best_of(lambda: impl.nearest(q, r, args.threads), max(1, args.repeat // 2))
            outs[name] = impl.nearest(q, r, args.threads)[1]
        _row("nearest", f"{nq}x{nq // 2}", times, outs, names)


def _row(kern, size, times, outs, names):
    cells = "".join(f"{1e3 * times[n]:>16.3f}" for n in names)
    speed = f"{times['python'] / times['cython']:>9.1f}x" if "cython" in times else f"{'-':>10}"
    vals = list(outs.values())
    agree = all(np.allclose(v, vals[0], rtol=1e-12, atol=1e-12) for v in vals)
    print(f"{kern:<10}{size:>14}{cells}{speed}{str(agree):>8}")


if __name__ == "__main__":
    main()
