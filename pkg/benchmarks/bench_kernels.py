"""Time the compiled selection kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--m 2000] [--h 24] [--repeat 5]

Both backends are checked for bit-identical output before timing. The
compiled module must have been built (``pip install -e .``).
"""
import argparse
import timeit

import numpy as np

from horizon_abstain import _kernels_py
from horizon_abstain.calibration import CoverageSpec, SelectionTable, calibrate_lagrange

try:
    from horizon_abstain import _kernels
except ImportError:  # extension not built
    _kernels = None


def _cases(prefix, risks):
    gamma = float(np.median(prefix[:, -1])) / prefix.shape[1]
    return {
        "prefix_sums": lambda k: k.prefix_sums(risks),
        "partial_ends": lambda k: k.partial_ends(prefix, gamma),
        "interval_tables": lambda k: k.interval_tables(prefix),
    }


def _same(a, b):
    if isinstance(a, tuple):
        return all(np.array_equal(x, y) for x, y in zip(a, b))
    return np.array_equal(a, b)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=2000)
    ap.add_argument("--h", type=int, default=24)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if _kernels is None:
        raise SystemExit("compiled kernels not built; run pip install -e . first")

    rng = np.random.default_rng(args.seed)
    risks = rng.gamma(2.0, 1.0, size=(args.m, args.h))
    prefix = _kernels_py.prefix_sums(risks)

    print(f"m={args.m} H={args.h} repeat={args.repeat}")
    print(f"{'kernel':<22}{'python ms':>12}{'cython ms':>12}{'speedup':>10}  identical")
    for name, fn in _cases(prefix, risks).items():
        same = _same(fn(_kernels_py), fn(_kernels))
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        t_cy = min(timeit.repeat(lambda: fn(_kernels), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<22}{t_py:>12.3f}{t_cy:>12.3f}{t_py / t_cy:>10.1f}  {same}")

    # end to end: a full interval calibration, as done once per (strategy, c) cell
    spec = CoverageSpec(0.8, args.h)
    for label, mod in (("python", _kernels_py), ("cython", _kernels)):
        import horizon_abstain.kernels as k

        saved = (k.prefix_sums, k.partial_ends, k.interval_tables, k.interval_lengths)
        k.prefix_sums, k.partial_ends = mod.prefix_sums, mod.partial_ends
        k.interval_tables, k.interval_lengths = mod.interval_tables, mod.interval_lengths
        try:
            t = min(timeit.repeat(
                lambda: calibrate_lagrange(SelectionTable(prefix, "interval"), spec, "interval"),
                number=1, repeat=args.repeat))
        finally:
            k.prefix_sums, k.partial_ends, k.interval_tables, k.interval_lengths = saved
        print(f"calibrate interval c=0.8 [{label}]: {t * 1e3:.3f} ms")


if __name__ == "__main__":
    main()
