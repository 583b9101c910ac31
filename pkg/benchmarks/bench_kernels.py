"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Both implementations are imported directly from ``taskloss._kernels`` so one
process can compare them; the library itself picks one at import time from
``TASKLOSS_DISABLE_NUMBA``. Results are checked for bit-identity before timing.
"""

import argparse
import time

import numpy as np

from taskloss import _kernels as K


def best_of(fn, args, repeat):
    fn(*args)  # compile / warm caches
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(rng):
    for n, groups in ((64, 4), (2000, 8), (100_000, 40)):
        v = rng.normal(size=n)
        g = rng.integers(0, groups, size=n).astype(np.int64)
        yield f"group_median n={n}", K.group_median_per_sample_np, K.group_median_per_sample_nb, (v, g)

        y = rng.normal(size=n)
        pm = K.group_median_per_sample_np(v, g)
        lm = K.group_median_per_sample_np(y, g)
        yield f"revenue_rewards n={n}", K.revenue_rewards_np, K.revenue_rewards_nb, (v, y, pm, lm, 5.0, 6.11, 2.22)

        p = rng.uniform(size=n)
        profit = rng.normal(scale=300.0, size=n)
        yield f"threshold_scan n={n}", K.threshold_scan_np, K.threshold_scan_nb, (p, profit)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")

    rng = np.random.default_rng(0)
    print(f"{'kernel':<28} {'numpy':>11} {'numba':>11} {'speedup':>8}  identical")
    for name, f_np, f_nb, a in cases(rng):
        same = np.array_equal(np.asarray(f_np(*a)), np.asarray(f_nb(*a)))
        t_np = best_of(f_np, a, args.repeat)
        t_nb = best_of(f_nb, a, args.repeat)
        print(f"{name:<28} {t_np * 1e6:>9.1f}us {t_nb * 1e6:>9.1f}us {t_np / t_nb:>7.1f}x  {same}")


if __name__ == "__main__":
    main()
