#!/usr/bin/env python3
"""Verdict table for the three Sybil strategies over a grid of K, R and epsilon."""

import argparse
import itertools

from overdraft.sybil import AttackKind, ScenarioParams, build_scenario, evaluate_attack, write_attack_csv


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--iterations", type=int, default=2000)
    ap.add_argument("--out", default="attacks.csv")
    args = ap.parse_args()

    reports = []
    for K, R, eps in itertools.product([1, 2, 4, 5, 10], [0.1, 0.5, 0.9], [0.01, 0.1]):
        params = ScenarioParams(K=K, R=R, X=100, epsilon=eps)
        for kind in AttackKind:
            reports.append(evaluate_attack(build_scenario(kind, params), args.iterations))
    with open(args.out, "w") as fh:
        write_attack_csv(reports, fh)
    profitable = sum(r.verdict == "profitable" for r in reports)
    print(f"{len(reports)} scenarios, {profitable} profitable")


if __name__ == "__main__":
    main()
