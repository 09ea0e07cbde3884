"""Taylor remainder tables for the aircraft and Gray-Scott gradients.

    python scripts/taylor_tables.py --grid 50
"""

import argparse

import numpy as np

from adjoint_ts.problems import get_setup
from adjoint_ts.reduced import ReducedFunctional, convergence_orders, taylor_remainders


def table(setup, steps, seed=0):
    fun = ReducedFunctional(setup)
    x = setup.initial_guess
    d = np.random.default_rng(seed).normal(size=x.size)
    rows = taylor_remainders(fun, x, d, steps)
    o1 = [np.nan] + convergence_orders(steps, [r[1] for r in rows])
    o2 = [np.nan] + convergence_orders(steps, [r[2] for r in rows])
    print(f"\n{setup.name} ({setup.config.method.label}, {setup.config.num_steps} steps, {x.size} controls)")
    print(f"{'h':>9} {'|dJ|':>12} {'order':>6} {'|dJ - h g.d|':>14} {'order':>6}")
    for (h, r1, r2), a, b in zip(rows, o1, o2):
        print(f"{h:9.1e} {r1:12.4e} {a:6.3f} {r2:14.4e} {b:6.3f}")


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--method", default="rk4")
    ap.add_argument("--grid", type=int, default=50)
    ap.add_argument("--h", type=float, nargs="+", default=[5e-3, 5e-4, 5e-5])
    args = ap.parse_args()
    table(get_setup("aircraft", method=args.method), args.h)
    table(get_setup("grayscott", method=args.method, grid=args.grid), args.h)


if __name__ == "__main__":
    main()
