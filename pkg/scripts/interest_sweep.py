#!/usr/bin/env python3
"""Interest as a function of lender reputation and of loan amount.

Two CSVs: one sweeping R for a few loan amounts, one sweeping the amount
for a few reputations. Plot them with whatever you like.
"""

import argparse
import csv

import numpy as np

from overdraft.incentives import InterestParams, total_interest


def sweep(path: str, xs, series, make) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["x"] + [f"s={s}" for s in series])
        for x in xs:
            w.writerow([f"{x:.4f}"] + [f"{total_interest(make(x, s)):.6f}" for s in series])


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--days", type=float, default=100.0)
    ap.add_argument("--beta", type=float, default=0.75)
    ap.add_argument("--apr", type=float, default=0.05)
    ap.add_argument("--prefix", default="interest")
    args = ap.parse_args()

    def params(amount, rep):
        return InterestParams(amount, args.beta, args.days, args.apr, rep)

    sweep(f"{args.prefix}_vs_reputation.csv", np.linspace(0, 1, 101), [100, 500, 1000],
          lambda r, a: params(a, r))
    sweep(f"{args.prefix}_vs_amount.csv", np.linspace(0, 1000, 101), [0.25, 0.5, 0.75],
          lambda a, r: params(a, r))


if __name__ == "__main__":
    main()
