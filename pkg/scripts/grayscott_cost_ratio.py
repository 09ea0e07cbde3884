"""Wall time of the adjoint sweep relative to the forward solve on Gray-Scott."""

import argparse

from adjoint_ts.cli import adjoint_forward_ratio
from adjoint_ts.problems import get_setup


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--grid", type=int, nargs="+", default=[32, 64])
    ap.add_argument("--methods", nargs="+", default=["theta1", "theta0.5", "rk4"])
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()
    print(f"{'grid':>5} {'method':>9} {'adjoint/forward':>16}")
    for n in args.grid:
        for method in args.methods:
            setup = get_setup("grayscott", method=method, grid=n)
            ratio = adjoint_forward_ratio(setup, setup.initial_guess, args.repeats)
            print(f"{n:5d} {method:>9} {ratio:16.2f}")


if __name__ == "__main__":
    main()
