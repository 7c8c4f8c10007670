"""Wall time of the reduction solver against the full path-space LP oracle as instances grow.

Prints CSV: K, size, paths, solver_seconds, lp_seconds, relative_gap.
"""

import argparse
import csv
import math
import sys
import time

from hjmot.generators import GeneratorSpec, generate
from hjmot.lp_oracle import LP_SIZE_LIMIT, solve_full_lp_oracle
from hjmot.solver import solve_hjmot


def timed(fn, *args):
    start = time.perf_counter()
    out = fn(*args)
    return out, time.perf_counter() - start


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--max-K", type=int, default=4)
    p.add_argument("--max-size", type=int, default=6)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    w = csv.writer(sys.stdout)
    w.writerow(["K", "size", "paths", "solver_seconds", "lp_seconds", "relative_gap"])
    for K in range(1, args.max_K + 1):
        for size in range(2, args.max_size + 1):
            paths = size * size * (size + 1) ** (K - 1)
            if paths > LP_SIZE_LIMIT:
                break
            inst = generate(GeneratorSpec("random_matrix", K, [size] * (K + 1), seed=args.seed, cost_scale=10.0))
            sol, ts = timed(solve_hjmot, inst)
            (value, _), tl = timed(solve_full_lp_oracle, inst)
            gap = abs(sol.M - value) / max(1.0, abs(value))
            w.writerow([K, size, paths, f"{ts:.4f}", f"{tl:.4f}", f"{gap:.2e}"])
            sys.stdout.flush()
            if tl > 60 or not math.isfinite(value):
                break


if __name__ == "__main__":
    main()
