"""Recomputation counts of optimal schedules when solution-only and
record-carrying checkpoints share one memory budget.

    python scripts/revolve_curves.py --units 12 --stages 2 4 --n-max 60 --out curves.csv
"""

import argparse
import csv
import sys

from adjoint_ts.cli import revolve_curves


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--units", type=int, default=12, help="memory budget in solution-sized slots")
    ap.add_argument("--stages", type=int, nargs="+", default=[2, 4], help="stage vectors per record")
    ap.add_argument("--n-min", type=int, default=1)
    ap.add_argument("--n-max", type=int, default=60)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    rows = revolve_curves(args.n_min, args.n_max, args.units, args.stages)
    fh = open(args.out, "w", newline="") if args.out else sys.stdout
    writer = csv.DictWriter(fh, fieldnames=["N", "capacity", "mode", "recomputations"])
    writer.writeheader()
    writer.writerows(rows)
    if args.out:
        fh.close()


if __name__ == "__main__":
    main()
