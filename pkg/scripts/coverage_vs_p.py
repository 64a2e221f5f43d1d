#!/usr/bin/env python3
"""Sweep the constellation size p for one scenario and tabulate coverage.

Reuses the scenario's instance across the sweep (the tensor is p-independent)
so a four-point sweep costs one tensor build plus four solver runs.

Usage:
    python scripts/coverage_vs_p.py scenario.yaml --p 2 3 4 5 --out sweep.csv
"""

import argparse
import csv
import sys
import time

from cislunar_ssa import cli, lagrangean as lg, model


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("scenario")
    parser.add_argument("--p", type=int, nargs="+", default=[2, 3, 4, 5])
    parser.add_argument("--out", default=None, help="optional CSV path")
    args = parser.parse_args(argv)

    config = cli.load_scenario(args.scenario)
    if config.solver.mode != "lm":
        print("sweep requires an lm-mode scenario", file=sys.stderr)
        return 1
    base_instance, timings = cli.build_instance(config)
    print(f"instance: n={base_instance.n}, l={base_instance.tensor.l}, "
          f"q={base_instance.tensor.q}, density={base_instance.tensor.density:.4f} "
          f"(built in {sum(timings.values()):.1f}s)")

    rows = []
    for p in args.p:
        instance = model.Instance(
            tensor=base_instance.tensor, costs=base_instance.costs, p=p,
            demand=base_instance.demand, slots=base_instance.slots,
            geometry=base_instance.geometry)
        tick = time.perf_counter()
        solution, history = lg.run(instance, cli.lm_config(config.solver))
        elapsed = time.perf_counter() - tick
        usage = {}
        for j in solution.slots:
            label = instance.slots[j].label
            usage[label] = usage.get(label, 0) + 1
        rows.append((p, solution.coverage, solution.objective,
                     min(u for u, _ in history), elapsed, usage))
        print(f"p={p}: Theta={solution.coverage:.4f} Z={solution.objective:.2f} "
              f"upper={rows[-1][3]:.2f} [{elapsed:.1f}s] {usage}")

    if args.out:
        with open(args.out, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["p", "coverage", "objective", "best_upper",
                             "solve_s", "orbits"])
            for p, cov, z, upper, elapsed, usage in rows:
                orbits = "; ".join(f"{k} x{v}" for k, v in sorted(usage.items()))
                writer.writerow([p, f"{cov:.6f}", f"{z:.6f}", f"{upper:.6f}",
                                 f"{elapsed:.2f}", orbits])
        print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
