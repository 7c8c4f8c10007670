"""How much mass skips intermediate stages as the intermediate point clouds spread out.

Euclidean instances on the line: endpoints in [0, 1], intermediate points in
[0, spread].  Prints CSV: spread, seed, M, per-stage skipped mass, mean skipped mass.
"""

import argparse
import csv
import sys

import numpy as np

from hjmot.model import line_instance
from hjmot.solver import solve_hjmot


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--size", type=int, default=6)
    p.add_argument("--seeds", type=int, default=10)
    p.add_argument("--spreads", default="1,2,4,8,16")
    args = p.parse_args(argv)
    w = csv.writer(sys.stdout)
    w.writerow(["spread", "seed", "M", "skipped", "mean_skipped"])
    for spread in (float(s) for s in args.spreads.split(",")):
        for seed in range(args.seeds):
            rng = np.random.default_rng(seed)
            xs = [rng.uniform(0, 1, args.size).tolist()]
            xs += [rng.uniform(0, spread, args.size).tolist() for _ in range(args.K - 1)]
            xs += [rng.uniform(0, 1, args.size).tolist()]
            sol = solve_hjmot(line_instance(xs))
            skipped = sol.skipped_mass()
            w.writerow([spread, seed, repr(sol.M), ";".join(f"{m:.6g}" for m in skipped),
                        f"{np.mean(skipped):.6g}"])


if __name__ == "__main__":
    main()
