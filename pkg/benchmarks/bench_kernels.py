"""Compare the jit-compiled and pure-numpy expression kernels.

The evaluation kernel is the hot path: every inner-optimizer generation
scores a whole population in one call.  This script times both backends
over a few expression depths and batch sizes and reports the speedup.

    python3 benchmarks/bench_kernels.py [--repeats 200]

The numpy path is also what you get with EBG_NUMBA=0, so the numbers
here bound the cost of running without a compiler.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from ebg.expressions import GA_ADVANTAGE_EXAMPLE, parse
from ebg.kernels import (
    HAS_NUMBA,
    compile_program,
    eval_program_numba,
    eval_program_numpy,
)

CASES = [
    ("sphere (5 nodes)", "x[0]**2 + x[1]**2 + x[2]**2 + x[3]**2 + x[4]**2"),
    ("medium (trig mix)", "sin(x[0])*x[1] + sqrt(abs(x[2])) + x[3]**2/(1 + abs(x[4]))"),
    ("deep (showcase)", GA_ADVANTAGE_EXAMPLE),
]

BATCHES = (50, 500, 5000)


def bench(func, program, X, repeats: int) -> float:
    func(program, X)  # warm up (jit compile, cache touch)
    started = time.perf_counter()
    for _ in range(repeats):
        func(program, X)
    return (time.perf_counter() - started) / repeats


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=200)
    args = parser.parse_args()

    if not HAS_NUMBA:
        print("numba path unavailable (EBG_NUMBA=0 or numba missing); numpy only")
    rng = np.random.default_rng(0)
    header = f"{'expression':<20} {'batch':>6} {'numpy':>12} {'numba':>12} {'speedup':>8}"
    print(header)
    print("-" * len(header))
    for label, text in CASES:
        program = compile_program(parse(text, 5))
        for batch in BATCHES:
            X = rng.uniform(-1.0, 1.0, (batch, 5))
            t_numpy = bench(eval_program_numpy, program, X, args.repeats)
            if HAS_NUMBA:
                t_numba = bench(eval_program_numba, program, X, args.repeats)
                ratio = t_numpy / t_numba
                print(
                    f"{label:<20} {batch:>6} {t_numpy * 1e6:>10.1f}us "
                    f"{t_numba * 1e6:>10.1f}us {ratio:>7.1f}x"
                )
            else:
                print(f"{label:<20} {batch:>6} {t_numpy * 1e6:>10.1f}us {'-':>12} {'-':>8}")


if __name__ == "__main__":
    main()
