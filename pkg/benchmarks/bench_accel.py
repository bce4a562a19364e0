"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_accel.py [--n 512] [--repeat 5]

Both backends are imported in one process by calling the private
implementations directly; the public dispatch picks one of them according
to YUD_DISABLE_NUMBA.  Results are checked for agreement before timing.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from yudovich import _accel


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def interp_case(n, rng):
    f = rng.standard_normal((n, n))
    p = rng.uniform(0, n - 1, (n, n))
    q = rng.uniform(0, n - 1, (n, n))
    return f, p, q


def partial_case(n, rng, targets=4000, sources=3000):
    G = rng.standard_normal((4, 2 * n, 2 * n))
    si = rng.integers(0, n, sources)
    sj = rng.integers(0, n, sources)
    F = rng.standard_normal((3, sources))
    ti = rng.integers(0, n, targets)
    tj = rng.integers(0, n, targets)
    counts = rng.integers(0, sources + 1, targets)
    return ti, tj, counts, si, sj, G, F


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        print("numba is unavailable or disabled; only the numpy path can be timed")
    rng = np.random.default_rng(args.seed)

    print(f"{'kernel':<28}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, mode in _accel.MODES.items():
        f, p, q = interp_case(args.n, rng)
        t_np = best_of(lambda: _accel._interp_numpy(f, p, q, mode), args.repeat)
        if _accel.HAVE_NUMBA:
            ref = _accel._interp_numpy(f, p, q, mode)
            got = _accel._interp_numba(f, p, q, mode)  # also triggers compilation
            assert np.allclose(ref, got, rtol=0, atol=1e-12), name
            t_nb = best_of(lambda: _accel._interp_numba(f, p, q, mode), args.repeat)
            print(f"{'interpolate/' + name:<28}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}")
        else:
            print(f"{'interpolate/' + name:<28}{t_np:>12.4f}{'-':>12}{'-':>10}")

    case = partial_case(min(args.n, 256), rng)
    n = case[5].shape[1] // 2
    t_np = best_of(lambda: _accel._partial_sum_numpy(*case, n), max(1, args.repeat // 2))
    if _accel.HAVE_NUMBA:
        ref = _accel._partial_sum_numpy(*case, n)
        got = _accel._partial_sum_numba(*case, n)
        assert np.allclose(ref, got, rtol=1e-10, atol=1e-9)
        t_nb = best_of(lambda: _accel._partial_sum_numba(*case, n), args.repeat)
        print(f"{'partial_convolution':<28}{t_np:>12.4f}{t_nb:>12.4f}{t_np / t_nb:>10.1f}")
    else:
        print(f"{'partial_convolution':<28}{t_np:>12.4f}{'-':>12}{'-':>10}")


if __name__ == "__main__":
    main()
