"""Entropic value and gap to the exact value as epsilon shrinks, on generated instances.

Prints CSV: seed, epsilon, exact, entropic, gap.
"""

import argparse
import csv
import sys

from hjmot.generators import GeneratorSpec, generate
from hjmot.solver import solve_hjmot


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--family", default="euclidean", choices=["random_matrix", "euclidean", "circle"])
    p.add_argument("--K", type=int, default=3)
    p.add_argument("--size", type=int, default=5)
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--eps", default="1,0.3,0.1,0.03,0.01,0.003,0.001")
    args = p.parse_args(argv)
    grid = [float(e) for e in args.eps.split(",")]
    w = csv.writer(sys.stdout)
    w.writerow(["seed", "epsilon", "exact", "entropic", "gap"])
    for seed in range(args.seeds):
        inst = generate(GeneratorSpec(args.family, args.K, [args.size] * (args.K + 1), seed=seed, dimension=2))
        exact = solve_hjmot(inst).M
        for eps in grid:
            ent = solve_hjmot(inst, method="entropic", epsilon=eps).M
            w.writerow([seed, eps, repr(exact), repr(ent), repr(ent - exact)])


if __name__ == "__main__":
    main()
