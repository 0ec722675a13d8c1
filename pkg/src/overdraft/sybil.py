"""Sybil attack scenarios: reputation splitting, coin splitting, loan splitting.

Each scenario pairs an honest baseline with the attacker's variant. The
coin-split variant is played against a real :class:`~overdraft.settlement.Ledger`
so that token locking, not bookkeeping, decides whether the duplicate
loan gets through.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, TextIO

from .confidence import (ConfidenceEstimate, Decision, PaymentPolicy, WalkParams,
                         accept_payment, estimate_confidence)
from .errors import LoanCanceled, ValidationError
from .incentives import no_interest
from .model import LoanAgreement, LoanNetworkView, NodeId
from .reputation import ReputationLedger, SplitVerdict, split_influences
from .settlement import Ledger, LedgerConfig

PAYER = "payer"
HONEST_LENDER = "lender"
MIN_PAYER_REPUTATION = 0.05


class AttackKind(str, enum.Enum):
    REPUTATION_SPLIT = "reputation_split"
    COIN_SPLIT = "coin_split"
    LOAN_SPLIT = "loan_split"


@dataclass(frozen=True)
class ScenarioParams:
    K: int = 2
    R: float = 0.5
    X: int = 100
    epsilon: float = 0.1
    payer_reputation: float = 0.0
    # coin split: attacker funds and the loans it tries to back with them
    attacker_balance: int = 100
    draft_amounts: tuple[int, ...] = (100, 100)
    decay: float = 0.95
    max_distance: int = 9
    seed: int = 0


@dataclass
class AttackScenario:
    kind: AttackKind
    params: ScenarioParams
    baseline: LoanNetworkView
    variant: LoanNetworkView
    attacker_nodes: frozenset[NodeId]
    epsilon: float = 0.0
    ledger: Ledger | None = None
    accepted_drafts: list[int] = field(default_factory=list)
    rejected_drafts: list[int] = field(default_factory=list)

    @property
    def transaction_amount(self) -> int:
        return self.params.X


def _split_views(p: ScenarioParams) -> tuple[LoanNetworkView, LoanNetworkView, frozenset[NodeId]]:
    if not isinstance(p.K, int) or p.K < 1:
        raise ValidationError("K must be a positive integer")
    if p.X <= 0 or p.X % p.K:
        raise ValidationError("X must be a positive multiple of K")
    if not 0.0 <= p.R <= 1.0 or not 0.0 <= p.payer_reputation <= 1.0:
        raise ValidationError("reputations must lie in [0, 1]")
    baseline = LoanNetworkView.simple(
        {PAYER: p.payer_reputation, HONEST_LENDER: p.R}, [(HONEST_LENDER, PAYER, p.X)])
    if p.K == 1:
        return baseline, baseline, frozenset({HONEST_LENDER})
    sybils = [f"sybil{i}" for i in range(p.K)]
    reps = {PAYER: p.payer_reputation, **{s: p.R / p.K for s in sybils}}
    variant = LoanNetworkView.simple(reps, [(s, PAYER, p.X // p.K) for s in sybils])
    return baseline, variant, frozenset(sybils)


def build_scenario(kind: AttackKind | str, params: ScenarioParams | None = None) -> AttackScenario:
    kind = AttackKind(kind)
    p = params or ScenarioParams()
    if kind is AttackKind.COIN_SPLIT:
        return _coin_split(p)
    if kind is AttackKind.REPUTATION_SPLIT and not p.epsilon > 0:
        raise ValidationError("reputation split needs a positive epsilon")
    baseline, variant, attackers = _split_views(p)
    eps = p.epsilon if kind is AttackKind.REPUTATION_SPLIT else 0.0
    return AttackScenario(kind, p, baseline, variant, attackers, eps)


def _coin_split(p: ScenarioParams) -> AttackScenario:
    if p.attacker_balance < 0 or not p.draft_amounts or min(p.draft_amounts) <= 0:
        raise ValidationError("coin split needs a non-negative balance and positive loan amounts")
    attacker = "attacker"
    ledger = Ledger(LedgerConfig(interest=no_interest),
                    ReputationLedger(prior=0.0, base={attacker: p.R, PAYER: p.payer_reputation}))
    ledger.add_account(attacker, p.attacker_balance)
    ledger.add_account(PAYER, 0)
    borrowers = [PAYER] + [f"accomplice{i}" for i in range(1, len(p.draft_amounts))]
    for b in borrowers[1:]:
        ledger.add_account(b, 0)
    accepted, rejected = [], []
    for i, (amount, borrower) in enumerate(zip(p.draft_amounts, borrowers)):
        try:
            ledger.open_loan(LoanAgreement(attacker, borrower, amount, 100))
            accepted.append(i)
        except LoanCanceled:
            rejected.append(i)
    # honest use of the same coins: a single loan of the whole balance
    honest_loans = [(attacker, PAYER, p.attacker_balance)] if p.attacker_balance else []
    honest = LoanNetworkView.simple({PAYER: p.payer_reputation, attacker: p.R}, honest_loans)
    return AttackScenario(AttackKind.COIN_SPLIT, p, honest, ledger.capture_view(),
                          frozenset({attacker}), ledger=ledger,
                          accepted_drafts=accepted, rejected_drafts=rejected)


def influence(view: LoanNetworkView, nodes: Iterable[NodeId]) -> Fraction:
    """Sum of reputation times loaned amount over the edges lent by ``nodes``."""
    idx = {view.node_index(n) for n in nodes if n in view.index}
    total = Fraction(0)
    for lender, amount in zip(view.lenders.tolist(), view.amounts.tolist()):
        if lender in idx:
            total += Fraction(float(view.reputations[lender])) * amount
    return total


@dataclass
class AttackReport:
    kind: AttackKind
    K: int
    R: float
    epsilon: float
    baseline_influence: Fraction
    variant_influence: Fraction
    verdict: str
    baseline_decision: Decision
    variant_decision: Decision
    baseline_estimate: ConfidenceEstimate
    variant_estimate: ConfidenceEstimate
    blocked: bool | None = None

    @property
    def attacker_advantage(self) -> float:
        return float(self.variant_influence - self.baseline_influence)

    @property
    def decision_changed(self) -> bool:
        return self.baseline_decision != self.variant_decision


def evaluate_attack(scenario: AttackScenario, iterations: int = 10_000,
                    policy: PaymentPolicy | None = None) -> AttackReport:
    p = scenario.params
    amount = scenario.transaction_amount
    policy = policy or PaymentPolicy(amount, 0.9, MIN_PAYER_REPUTATION)
    walk = WalkParams(decay=p.decay, max_distance=p.max_distance, transaction_amount=amount,
                      rng_seed=p.seed)
    estimates = [estimate_confidence(v, PAYER, walk, iterations)
                 for v in (scenario.baseline, scenario.variant)]
    decisions = [accept_payment(e, policy, p.payer_reputation) for e in estimates]
    blocked = None
    if scenario.kind is AttackKind.COIN_SPLIT:
        base_inf = influence(scenario.baseline, scenario.attacker_nodes)
        var_inf = influence(scenario.variant, scenario.attacker_nodes)
        blocked = bool(scenario.rejected_drafts)
        verdict = "blocked" if blocked else SplitVerdict.UNPROFITABLE.value
    else:
        base_inf, var_inf = split_influences(p.R, p.X, p.K, scenario.epsilon)
        verdict = (SplitVerdict.PROFITABLE if var_inf > base_inf else SplitVerdict.UNPROFITABLE).value
    return AttackReport(scenario.kind, p.K, p.R, scenario.epsilon, base_inf, var_inf, verdict,
                        decisions[0], decisions[1], estimates[0], estimates[1], blocked)


ATTACK_CSV_FIELDS = ["kind", "K", "R", "epsilon", "baseline_influence", "variant_influence", "verdict"]


def write_attack_csv(reports: Iterable[AttackReport], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(ATTACK_CSV_FIELDS)
    for r in reports:
        w.writerow([r.kind.value, r.K, r.R, r.epsilon, f"{float(r.baseline_influence):.6f}",
                    f"{float(r.variant_influence):.6f}", r.verdict])
