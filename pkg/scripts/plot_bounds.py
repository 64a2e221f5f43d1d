#!/usr/bin/env python3
"""Plot bound convergence and per-step coverage from a result JSON.

Usage:
    python scripts/plot_bounds.py result.json --out bounds.png
"""

import argparse
import sys

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from cislunar_ssa.cli import load_result


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("result")
    parser.add_argument("--out", default="bounds.png")
    args = parser.parse_args(argv)

    result = load_result(args.result)
    history = result.get("bounds_history", [])
    block = result.get("solution")
    if not history and not block:
        print("result contains no solver output to plot", file=sys.stderr)
        return 1

    fig, axes = plt.subplots(1, 2, figsize=(11, 4))
    if history:
        iterations = range(1, len(history) + 1)
        running_upper = []
        best = float("inf")
        for upper, _ in history:
            best = min(best, upper)
            running_upper.append(best)
        axes[0].plot(iterations, running_upper, "o-", label="best upper bound")
        axes[0].plot(iterations, [lo for _, lo in history], "s-",
                     label="best lower bound")
        axes[0].set_xlabel("iteration")
        axes[0].set_ylabel("objective")
        axes[0].legend()
        axes[0].set_title(f"{result.get('label', '')} bound convergence")
    if block:
        steps = range(1, len(block["covered_per_step"]) + 1)
        axes[1].plot(steps, block["demanded_per_step"], label="demanded")
        axes[1].plot(steps, block["covered_per_step"], label="covered")
        axes[1].set_xlabel("time step")
        axes[1].set_ylabel("targets")
        axes[1].legend()
        axes[1].set_title(f"coverage {block['coverage_fraction']:.3f}")
    fig.tight_layout()
    fig.savefig(args.out, dpi=130)
    print(f"wrote {args.out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
