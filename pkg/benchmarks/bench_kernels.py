"""Benchmark the compiled distance kernels against the NumPy fallback.

Run from the repo root after an editable install:

    python benchmarks/bench_kernels.py

The assignment kernel dominates k-means runtime, which in turn dominates
the discovery pipeline, so this is the speedup that matters end to end.
"""

import time

import numpy as np

from fccd._kernels import _fallback

try:
    from fccd._kernels import _core
except ImportError:
    _core = None


def _time(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - start)
    return best


def main():
    rng = np.random.default_rng(0)
    shapes = [
        (1_000, 64, 15),
        (5_000, 64, 30),
        (20_000, 128, 50),
        (50_000, 256, 100),
    ]
    print(f"{'n':>8} {'dim':>5} {'k':>5} {'numpy (ms)':>12} {'compiled (ms)':>14} {'speedup':>8}")
    for n, d, k in shapes:
        x = rng.standard_normal((n, d))
        centers = rng.standard_normal((k, d))
        t_py = _time(_fallback.assign_points, x, centers)
        if _core is None:
            print(f"{n:>8} {d:>5} {k:>5} {t_py * 1e3:>12.2f} {'not built':>14} {'-':>8}")
            continue
        t_c = _time(_core.assign_points, x, centers)
        labels_py, _ = _fallback.assign_points(x, centers)
        labels_c, _ = _core.assign_points(x, centers)
        assert np.array_equal(labels_py, labels_c), "backends disagree"
        print(
            f"{n:>8} {d:>5} {k:>5} {t_py * 1e3:>12.2f} {t_c * 1e3:>14.2f} "
            f"{t_py / t_c:>7.2f}x"
        )

    print()
    print("accumulate_centers")
    print(f"{'n':>8} {'dim':>5} {'k':>5} {'numpy (ms)':>12} {'compiled (ms)':>14} {'speedup':>8}")
    for n, d, k in shapes:
        x = rng.standard_normal((n, d))
        labels = rng.integers(0, k, size=n)
        t_py = _time(_fallback.accumulate_centers, x, labels, k)
        if _core is None:
            print(f"{n:>8} {d:>5} {k:>5} {t_py * 1e3:>12.2f} {'not built':>14} {'-':>8}")
            continue
        t_c = _time(_core.accumulate_centers, x, labels, k)
        print(
            f"{n:>8} {d:>5} {k:>5} {t_py * 1e3:>12.2f} {t_c * 1e3:>14.2f} "
            f"{t_py / t_c:>7.2f}x"
        )


if __name__ == "__main__":
    main()
