"""``overdraft`` command line.

Exit codes: 0 on success, 2 on invalid input, 3 when a benchmark finished
with skipped cells.
"""

from __future__ import annotations

import argparse
import csv
import itertools
import json
import logging
import sys
from contextlib import contextmanager
from typing import Iterator, Sequence, TextIO

from . import __version__
from .bench import BenchConfig, generate_random_network, run_benchmark, write_bench_csv
from .confidence import PaymentPolicy, WalkParams, accept_payment, estimate_confidence
from .errors import OverdraftError
from .incentives import (InterestParams, per_block_interest, round_half_up,
                         interest_schedule, total_interest)
from .model import OfflineTransaction, load_network, write_network
from .settlement import Ledger, LedgerConfig, report_payload
from .sybil import AttackKind, ScenarioParams, build_scenario, evaluate_attack, write_attack_csv

EXIT_OK, EXIT_INVALID, EXIT_SKIPPED = 0, 2, 3


@contextmanager
def _output(path: str | None) -> Iterator[TextIO]:
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _bench_config(args, **overrides) -> BenchConfig:
    overrides["seed"] = args.seed
    if args.config:
        return BenchConfig.from_file(args.config, **overrides)
    return BenchConfig(**{k: v for k, v in overrides.items() if v is not None})


def _int_list(text: str) -> list[int]:
    try:
        return [int(float(x)) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def _mint(text: str) -> tuple[str, int]:
    node, sep, amount = text.rpartition("=")
    if not sep or not node:
        raise argparse.ArgumentTypeError("expected NODE=AMOUNT")
    return node, int(amount)


# -- subcommands ---------------------------------------------------------

def cmd_gen_graph(args) -> int:
    cfg = _bench_config(args, out_degree=args.out_degree)
    view = generate_random_network(args.nodes, cfg)
    with _output(args.out) as out:
        write_network(view, out)
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _bench_config(args)
    view = load_network(args.network)
    params = WalkParams(
        decay=cfg.decay if args.decay is None else args.decay,
        max_distance=cfg.max_distance if args.max_distance is None else args.max_distance,
        transaction_amount=args.amount or cfg.transaction_amount,
        rng_seed=cfg.seed,
        enable_min_cap=not args.no_cap,
        enable_early_stop=not args.no_early_stop,
        indexed=cfg.optimized and not args.unoptimized,
    )
    est = estimate_confidence(view, args.payer, params, args.iterations, workers=args.workers)
    summary = {"payer": args.payer, "iterations": est.iterations,
               "transaction_amount": est.transaction_amount, "mean": est.mean,
               "std": est.std, "ci95_width": est.ci95_width}
    if args.threshold is not None:
        policy = PaymentPolicy(args.threshold, args.min_probability, args.min_reputation)
        summary["p_at_threshold"] = est.prob_at_least(args.threshold)
        summary["decision"] = accept_payment(est, policy, view.reputation(args.payer)).value
    print(json.dumps(summary))
    if args.out:
        with _output(args.out) as out:
            w = csv.writer(out, lineterminator="\n")
            w.writerow(["amount", "count"])
            w.writerows(sorted(est.histogram.items()))
    return EXIT_OK


def _open_ledger(args) -> Ledger:
    ledger = Ledger.load(args.ledger, LedgerConfig(hop_fee=args.hop_fee,
                                                   settlement_depth=args.depth))
    for node, amount in args.mint:
        ledger.mint(node, amount)
    return ledger


def _finish_ledger(ledger: Ledger, args, first_event: int) -> None:
    ledger.save(args.out or args.ledger)
    if args.events:
        ledger.write_events(args.events, ledger.events[first_event:])
    if args.reputation_csv:
        with _output(args.reputation_csv) as out:
            w = csv.writer(out, lineterminator="\n")
            w.writerow(["node", "block", "reputation"])
            for node in ledger.accounts:
                w.writerow([node, ledger.height, f"{ledger.reputation_of(node):.6f}"])


def cmd_settle(args) -> int:
    ledger = _open_ledger(args)
    first = len(ledger.events)
    tx_id = args.tx_id or f"tx-{ledger.height}-{args.payer}-{args.payee}-{args.amount}"
    tx = OfflineTransaction(tx_id, args.payer, args.payee, args.amount,
                            agreed_at_view=ledger.height)
    report = ledger.settle_offline_transaction(tx)
    print(json.dumps(report_payload(report)))
    _finish_ledger(ledger, args, first)
    return EXIT_OK


def cmd_advance(args) -> int:
    ledger = _open_ledger(args)
    first = len(ledger.events)
    for _ in range(args.blocks):
        ledger.advance_block()
    print(json.dumps({"height": ledger.height, "events": len(ledger.events) - first}))
    _finish_ledger(ledger, args, first)
    return EXIT_OK


def cmd_interest(args) -> int:
    p = InterestParams(args.amount, args.beta, args.days, args.apr, args.reputation,
                       args.midpoint, args.steepness)
    blocks = args.blocks or max(1, round(args.days * args.blocks_per_day))
    total = total_interest(p)
    print(f"I = {total:.6f}")
    print(f"rounded total = {round_half_up(total)}")
    print(f"per block = {per_block_interest(p, blocks)} over {blocks} blocks")
    runs = [(amount, len(list(grp))) for amount, grp in itertools.groupby(interest_schedule(p, blocks))]
    print("schedule = " + ", ".join(f"{n} x {amount}" for amount, n in runs))
    return EXIT_OK


def cmd_attack(args) -> int:
    kinds = list(AttackKind) if args.kind == "all" else [AttackKind(args.kind)]
    params = ScenarioParams(K=args.K, R=args.R, X=args.X, epsilon=args.epsilon,
                            payer_reputation=args.payer_reputation,
                            attacker_balance=args.attacker_balance, seed=args.seed or 0)
    reports = [evaluate_attack(build_scenario(k, params), args.iterations) for k in kinds]
    with _output(args.out) as out:
        write_attack_csv(reports, out)
    return EXIT_OK


def cmd_bench(args) -> int:
    cfg = _bench_config(args, node_counts=args.nodes, iteration_counts=args.iterations)
    rows = run_benchmark(cfg, both=not args.single, budget_ms=args.budget_ms,
                         repeats=args.repeats)
    with _output(args.out) as out:
        write_bench_csv(rows, out)
    return EXIT_SKIPPED if any(r.skipped for r in rows) else EXIT_OK


# -- parser --------------------------------------------------------------

def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    parser.add_argument("--seed", type=lambda s: int(s, 0), default=d(None),
                        help="RNG seed (default 0, or the config file's)")
    parser.add_argument("--config", default=d(None), help="key=value file with BenchConfig fields")
    parser.add_argument("--out", default=d(None), help="output path (default: stdout)")


def _ledger_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--ledger", required=True, help="ledger dump (a plain network file also works)")
    p.add_argument("--events", help="append emitted events to this JSON-lines file")
    p.add_argument("--reputation-csv", help="write node,block,reputation rows here")
    p.add_argument("--mint", type=_mint, action="append", default=[], metavar="NODE=AMOUNT",
                   help="credit tokens before acting (repeatable)")
    p.add_argument("--hop-fee", type=int, default=0)
    p.add_argument("--depth", type=int, default=9, help="settlement search depth")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="overdraft", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    _global_flags(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name: str, func, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        _global_flags(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = add("gen-graph", cmd_gen_graph, "write a random loan network")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--out-degree", type=int, default=None)

    p = add("estimate", cmd_estimate, "Monte Carlo confidence for a payment")
    p.add_argument("--network", required=True)
    p.add_argument("--payer", default="0")
    p.add_argument("--amount", type=int, default=None)
    p.add_argument("--iterations", type=int, default=10_000)
    p.add_argument("--decay", type=float, default=None)
    p.add_argument("--max-distance", type=int, default=None)
    p.add_argument("--no-cap", action="store_true", help="do not cap a lender's return at its loan")
    p.add_argument("--no-early-stop", action="store_true")
    p.add_argument("--unoptimized", action="store_true", help="scan all edges instead of the index")
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--threshold", type=float, default=None, help="amount the payee needs")
    p.add_argument("--min-probability", type=float, default=0.9)
    p.add_argument("--min-reputation", type=float, default=0.0)

    p = add("settle", cmd_settle, "settle an offline transaction on a ledger")
    _ledger_flags(p)
    p.add_argument("--payer", required=True)
    p.add_argument("--payee", required=True)
    p.add_argument("--amount", type=int, required=True)
    p.add_argument("--tx-id", default=None)

    p = add("advance", cmd_advance, "advance a ledger by some blocks")
    _ledger_flags(p)
    p.add_argument("--blocks", type=int, default=1)

    p = add("interest", cmd_interest, "print total interest and its per-block schedule")
    p.add_argument("--amount", type=float, default=500.0)
    p.add_argument("--beta", type=float, default=0.75)
    p.add_argument("--days", type=float, default=100.0)
    p.add_argument("--apr", type=float, default=0.05)
    p.add_argument("--reputation", type=float, default=0.5)
    p.add_argument("--midpoint", type=float, default=0.5)
    p.add_argument("--steepness", type=float, default=20.0)
    p.add_argument("--blocks", type=int, default=None, help="loan duration in blocks")
    p.add_argument("--blocks-per-day", type=int, default=7200)

    p = add("attack", cmd_attack, "evaluate Sybil attack scenarios (CSV)")
    p.add_argument("--kind", choices=[k.value for k in AttackKind] + ["all"], default="all")
    p.add_argument("--K", type=int, default=2)
    p.add_argument("--R", type=float, default=0.5)
    p.add_argument("--X", type=int, default=100)
    p.add_argument("--epsilon", type=float, default=0.1)
    p.add_argument("--payer-reputation", type=float, default=0.0)
    p.add_argument("--attacker-balance", type=int, default=100)
    p.add_argument("--iterations", type=int, default=10_000)

    p = add("bench", cmd_bench, "runtime and CI-width sweep (CSV)")
    p.add_argument("--nodes", type=_int_list, default=None, help="comma-separated node counts")
    p.add_argument("--iterations", type=_int_list, default=None)
    p.add_argument("--single", action="store_true", help="only the configured optimization setting")
    p.add_argument("--repeats", type=int, default=1, help="report the median of this many timings")
    p.add_argument("--budget-ms", type=float, default=None,
                   help="give up on a cell after this long and mark it skipped")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OverdraftError, ValueError, KeyError, OSError) as exc:
        print(f"overdraft {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
