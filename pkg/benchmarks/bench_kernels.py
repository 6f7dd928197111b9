"""Benchmark the numba-jitted kernels against the pure-numpy fallback.

Both backends are imported directly (ignoring PIMKIT_BACKEND) so one process
can time them side by side. Results are checked for bit equality before
timing; a speedup column compares medians.

    python3 benchmarks/bench_kernels.py [--repeat N] [--elems N]
"""

import argparse
import random
import statistics
import sys
import time

import numpy as np

from pimkit.kernels import _numpy

try:
    from pimkit.kernels import _numba
except ImportError:
    print("numba backend not importable; nothing to compare", file=sys.stderr)
    raise SystemExit(1)


def bench(fn, args, repeat, inner):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        times.append((time.perf_counter() - t0) / inner)
    return statistics.median(times)


def cases(elems):
    rng = random.Random(0)
    biw, ebytes = 10, 2
    vals = np.array([rng.randint(-512, 511) for _ in range(elems)], np.int64)
    mem = np.zeros(elems * ebytes + 16, np.uint8)
    _numpy.write_elems(mem, 0, vals, ebytes, biw)
    shifts = np.array([rng.randint(0, 40) for _ in range(elems)], np.int64)
    w = np.array([[rng.randint(-128, 127) for _ in range(64)]
                  for _ in range(64)], np.int64)
    x = np.array([rng.randint(-128, 127) for _ in range(64)], np.int64)
    blob = np.frombuffer(rng.randbytes(1 << 20), np.uint8)

    yield ("read_elems", ("read_elems", (mem, 0, elems, ebytes, biw)), 50)
    yield ("write_elems", ("write_elems", (mem.copy(), 0, vals, ebytes, biw)), 50)
    yield ("elementwise add", ("elementwise", (_numpy.ADD, vals, vals, biw)), 50)
    yield ("elementwise sll", ("elementwise", (_numpy.SLL, vals, shifts, biw)), 50)
    yield ("mvmul 64x64", ("mvmul_i64", (w, x, 1, -128, 127)), 200)
    yield ("dot_u64", ("dot_u64", (vals, vals)), 200)
    yield ("act_q tanh", ("act_q", (_numpy.TANH, vals, 6, 6, -512, 511)), 20)
    yield ("fnv1a64 1MiB", ("fnv1a64", (blob,)), 3)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=7)
    ap.add_argument("--elems", type=int, default=4096)
    args = ap.parse_args()

    # first calls compile; keep JIT time out of the table
    for _, (name, fargs), _ in cases(64):
        getattr(_numba, name)(*fargs)

    rows = []
    for label, (name, fargs), inner in cases(args.elems):
        f_np, f_nb = getattr(_numpy, name), getattr(_numba, name)
        args_a = [x.copy() if isinstance(x, np.ndarray) else x for x in fargs]
        args_b = [x.copy() if isinstance(x, np.ndarray) else x for x in fargs]
        a, b = f_np(*args_a), f_nb(*args_b)
        if a is None:  # in-place kernel: compare the mutated buffer instead
            a, b = args_a[0], args_b[0]
        agree = (np.array_equal(a, b) if isinstance(a, np.ndarray)
                 else int(a) == int(b))
        if not agree:
            print(f"{label}: BACKEND MISMATCH", file=sys.stderr)
            raise SystemExit(1)
        t_np = bench(f_np, fargs, args.repeat, inner)
        t_nb = bench(f_nb, fargs, args.repeat, inner)
        rows.append((label, t_np, t_nb, t_np / t_nb))

    width = max(len(r[0]) for r in rows)
    print(f"{'kernel':<{width}}  {'numpy':>12}  {'numba':>12}  {'speedup':>8}")
    for label, t_np, t_nb, speed in rows:
        print(f"{label:<{width}}  {t_np * 1e6:>10.1f}us  {t_nb * 1e6:>10.1f}us"
              f"  {speed:>7.1f}x")


if __name__ == "__main__":
    main()
