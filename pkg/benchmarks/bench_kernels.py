"""Benchmark the compiled kernels against the pure-numpy fallback.

Times the four hot primitives on the matrix sizes the solvers actually
see, plus an end-to-end equilibrium solve per backend.

Usage: python benchmarks/bench_kernels.py [--repeats 20000] [--dim 3]
"""

import argparse
import time

import numpy as np

from channelgames._kernels import _fallback

try:
    from channelgames._kernels import _core
except ImportError:
    _core = None

from channelgames.channel import BCChannel, ColoredNoise
from channelgames.rates import BroadcastGame
from channelgames.solver import SolveOptions, solve_noe


def _time(fn, args_iter):
    start = time.perf_counter()
    for args in args_iter:
        fn(*args)
    return time.perf_counter() - start


def bench_primitives(repeats, dim, rng):
    mats = []
    for _ in range(64):
        g = rng.normal(size=(dim, dim))
        mats.append(g @ g.T + np.eye(dim))
    vals = rng.uniform(0.0, 5.0, size=256)

    cases = {
        "logdet_pd": [(mats[i % 64],) for i in range(repeats)],
        "inv_pd": [(mats[i % 64],) for i in range(repeats)],
        "eigh_sym": [(mats[i % 64],) for i in range(repeats)],
        "trace_shift": [(vals, 100.0) for _ in range(repeats)],
    }
    print(f"\nprimitives ({repeats} calls, dim={dim}):")
    print(f"{'kernel':<14}{'numpy [s]':>12}{'compiled [s]':>14}{'speedup':>9}")
    for name, args in cases.items():
        t_py = _time(getattr(_fallback, name), args)
        if _core is not None:
            t_c = _time(getattr(_core, name), args)
            print(f"{name:<14}{t_py:>12.4f}{t_c:>14.4f}{t_py / t_c:>9.2f}x")
        else:
            print(f"{name:<14}{t_py:>12.4f}{'n/a':>14}{'':>9}")


def bench_solve(dim, users, rng):
    noises = []
    acc = np.eye(dim) + 0.2 * _wishart(rng, dim)
    for _ in range(users):
        noises.append(acc.copy())
        acc = acc + 0.3 * _wishart(rng, dim)
    channel = BCChannel([np.eye(dim)] * users, ColoredNoise(noises), 10.0)
    game = BroadcastGame(channel)
    weights = sorted(rng.uniform(0.5, 2.0, size=users), reverse=True)

    import channelgames._kernels as kernels

    results = {}
    for label, impl in [("numpy", _fallback)] + ([("compiled", _core)] if _core else []):
        for name in ("logdet_pd", "inv_pd", "eigh_sym", "eigvals_sym", "trace_shift"):
            setattr(kernels, name, getattr(impl, name))
        # kernels are resolved through module attributes at call sites that
        # imported them directly, so patch those too
        import channelgames.conic as conic
        import channelgames.rates as rates
        import channelgames.solver as solver

        conic.eigh_sym = impl.eigh_sym
        conic.eigvals_sym = impl.eigvals_sym
        conic.trace_shift = impl.trace_shift
        rates.logdet_pd = impl.logdet_pd
        rates.inv_pd = impl.inv_pd
        solver.logdet_pd = impl.logdet_pd
        solver.inv_pd = impl.inv_pd
        solver.eigvals_sym = impl.eigvals_sym

        start = time.perf_counter()
        _, cert = solve_noe(game, weights, SolveOptions())
        results[label] = time.perf_counter() - start
        print(
            f"solve_noe ({users} users, dim {dim}) [{label:>8}]: "
            f"{results[label]:.3f} s, max residual {cert.max_residual:.2e}"
        )
    if len(results) == 2:
        print(f"end-to-end speedup: {results['numpy'] / results['compiled']:.2f}x")


def _wishart(rng, dim):
    g = rng.normal(size=(dim, dim))
    return g @ g.T


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20000)
    parser.add_argument("--dim", type=int, default=3)
    parser.add_argument("--users", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    rng = np.random.default_rng(args.seed)
    if _core is None:
        print("compiled backend unavailable; timing the numpy fallback only")
    bench_primitives(args.repeats, args.dim, rng)
    bench_solve(args.dim, args.users, rng)


if __name__ == "__main__":
    main()
