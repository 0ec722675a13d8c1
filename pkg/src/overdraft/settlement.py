"""In-process ledger emulating the loan contract.

The ledger owns balances, locked collateral and the agreement registry.
It opens loans (locking principal plus interest on the lender), ticks blocks
(interest installments, expiries, repayment collection), and settles
offline transactions, falling back on the payer's loan network when the
payer cannot pay.

Every mutation moves tokens between balances, locked amounts and the fee
sink, so their sum only changes through :meth:`Ledger.mint`.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable, Iterable

from .errors import (EarlyClosureError, LoanCanceled, ReplayError, SnapshotError,
                     UnknownPartyError, ValidationError)
from .incentives import InterestConfig, installment, round_half_up
from .model import (Account, BlockClock, LoanAgreement, LoanNetworkView, NodeId,
                    OfflineTransaction, check_node_id, format_reputation, parse_network,
                    validate_agreement, write_network)
from .reputation import Outcome, ReputationLedger
from .rng import hash64, mix64

InterestPolicy = Callable[[int, int, float], float]


@dataclass
class LedgerConfig:
    interest: InterestPolicy = field(default_factory=InterestConfig)
    settlement_depth: int = 9        # same radius as the walk's max distance
    hop_fee: int = 0                 # per loan edge crossed during dispute resolution
    auto_close: bool = True
    credit_borrower_on_open: bool = False  # hand the principal to the borrower instead of locking it
    beacon_seed: int = 0


@dataclass
class LoanState:
    agreement: LoanAgreement
    remaining: int
    interest_total: int
    interest_per_block: int
    interest_paid: int = 0
    consumed: list[tuple[int, int]] = field(default_factory=list)  # (block, amount)
    beneficiary: NodeId | None = None

    @property
    def interest_outstanding(self) -> int:
        return self.interest_total - self.interest_paid

    @property
    def locked_share(self) -> int:
        """Tokens this loan keeps locked on the lender's account."""
        if not self.agreement.active:
            return 0
        return self.remaining + self.interest_outstanding

    def remaining_at(self, block: int) -> int:
        return self.agreement.amount - sum(a for b, a in self.consumed if b <= block)


@dataclass
class RepaymentObligation:
    obligation_id: int
    debtor: NodeId
    creditor: NodeId
    agreement_id: int
    amount: int
    outstanding: int
    due_block: int
    status: str = "open"  # open | repaid | defaulted


@dataclass
class SettlementReport:
    tx_id: str
    amount: int
    paid_total: int
    paid_by_payer: int
    lender_contributions: list[tuple[NodeId, int]]
    shortfall: int
    dispute_fee: int = 0
    reputation_effects: list[tuple[NodeId, Outcome]] = field(default_factory=list)

    @property
    def credited(self) -> int:
        return self.paid_total - self.dispute_fee


@dataclass
class Event:
    block: int
    kind: str
    payload: dict

    def to_json(self) -> str:
        return json.dumps({"block": self.block, "kind": self.kind, "payload": self.payload},
                          sort_keys=True, default=str)


def lender_order(lenders: Iterable[NodeId], block: int, prev_beacon: int, borrower: NodeId) -> list[NodeId]:
    """Deterministic random order in which ``borrower``'s lenders are called upon."""
    order = sorted(lenders)
    random.Random(hash64(block, prev_beacon, borrower)).shuffle(order)
    return order


class Ledger:
    def __init__(self, config: LedgerConfig | None = None,
                 reputation: ReputationLedger | None = None) -> None:
        self.config = config or LedgerConfig()
        self.reputation = reputation if reputation is not None else ReputationLedger()
        self.clock = BlockClock()
        self.accounts: dict[NodeId, Account] = {}
        self.loans: dict[int, LoanState] = {}
        self._active: dict[int, LoanState] = {}
        self._by_borrower: dict[NodeId, dict[int, LoanState]] = {}
        self.loaned_amounts: dict[tuple[NodeId, NodeId], int] = {}
        self.obligations: dict[int, RepaymentObligation] = {}
        self.fee_sink = 0
        self.minted = 0
        self.beacon = mix64(self.config.beacon_seed)
        self.prev_beacon = 0
        self.settled: set[str] = set()
        self.events: list[Event] = []
        self.history_start = 0
        self._next_agreement = 0
        self._next_obligation = 0
        self._created: dict[NodeId, int] = {}

    # -- accounts ------------------------------------------------------
    @property
    def height(self) -> int:
        return self.clock.height

    @property
    def agreements(self) -> dict[int, LoanAgreement]:
        return {aid: st.agreement for aid, st in self.loans.items()}

    def add_account(self, node: NodeId, balance: int = 0) -> Account:
        check_node_id(node)
        if node in self.accounts:
            raise ValidationError(f"account {node!r} already exists")
        self.accounts[node] = Account(node)
        self._created[node] = self.height
        if balance:
            self.mint(node, balance)
        return self.accounts[node]

    def mint(self, node: NodeId, amount: int) -> None:
        if amount < 0:
            raise ValidationError("cannot mint a negative amount")
        self.account(node).balance += amount
        self.minted += amount
        self._emit("mint", node=node, amount=amount)

    def account(self, node: NodeId) -> Account:
        try:
            return self.accounts[node]
        except KeyError:
            raise UnknownPartyError(node) from None

    def reputation_of(self, node: NodeId, at_block: int | None = None) -> float:
        return self.reputation.reputation_of(node, self.height if at_block is None else at_block)

    def total_tokens(self) -> int:
        return sum(a.balance + a.locked for a in self.accounts.values()) + self.fee_sink

    def _emit(self, kind: str, **payload) -> Event:
        ev = Event(self.height, kind, payload)
        self.events.append(ev)
        return ev

    def _record(self, node: NodeId, outcome: Outcome) -> None:
        self.reputation.record_outcome(node, outcome, self.height)

    # -- views ---------------------------------------------------------
    def capture_view(self, at_block: int | None = None, *,
                     include_exhausted: bool = False) -> LoanNetworkView:
        """Loans usable at ``at_block`` and every node's reputation as of that block.

        Loans with nothing left to lend are dropped unless ``include_exhausted``.
        """
        b = self.height if at_block is None else at_block
        if not self.history_start <= b <= self.height:
            raise SnapshotError(f"no ledger state for block {b} (current height {self.height})")
        nodes = {n: self.reputation_of(n, b) for n, created in self._created.items() if created <= b}
        edges = []
        for aid, st in sorted(self.loans.items()):
            ag = st.agreement
            if ag.usable_at(b):
                amount = st.remaining_at(b)
                if amount > 0 or include_exhausted:
                    edges.append((aid, ag.lender, ag.borrower, amount, ag.opening_block,
                                  ag.agreement_duration, ag.opening_fee, ag.closing_fee))
        pos = {n: i for i, n in enumerate(nodes)}
        cols = list(zip(*edges)) if edges else [()] * 8
        return LoanNetworkView(
            b, list(nodes), list(nodes.values()),
            [pos[x] for x in cols[1]], [pos[x] for x in cols[2]], cols[3],
            agreement_ids=cols[0], opening_blocks=cols[4], durations=cols[5],
            opening_fees=cols[6], closing_fees=cols[7],
        )

    # -- loans ---------------------------------------------------------
    def open_loan(self, draft: LoanAgreement) -> int:
        violations = validate_agreement(draft)
        if violations:
            raise ValidationError("invalid agreement: " + ", ".join(violations))
        lender = self.account(draft.lender)
        borrower = self.account(draft.borrower)
        h = self.height
        if h < draft.min_open_time:
            raise ValidationError(f"agreement cannot open before block {draft.min_open_time}")
        lender_rep = self.reputation_of(draft.lender)
        borrower_rep = self.reputation_of(draft.borrower)
        interest = self.config.interest(draft.amount, draft.agreement_duration, lender_rep)
        interest_total = round_half_up(interest)
        per_block = round_half_up(interest / draft.agreement_duration)
        lender_fee = math.ceil(draft.opening_fee / 2)
        borrower_fee = draft.opening_fee - lender_fee
        lender_debit = draft.amount + interest_total + lender_fee
        if lender.balance < lender_debit:
            self._emit("loan_canceled", lender=draft.lender, borrower=draft.borrower,
                       reason="insufficient lender balance")
            raise LoanCanceled(f"{draft.lender} needs {lender_debit} tokens, has {lender.balance}")
        if borrower.balance < borrower_fee:
            self._emit("loan_canceled", lender=draft.lender, borrower=draft.borrower,
                       reason="insufficient borrower fee balance")
            raise LoanCanceled(f"{draft.borrower} cannot pay its opening fee share")

        aid = self._next_agreement
        self._next_agreement += 1
        agreement = replace(draft, agreement_id=aid, opening_block=h, close_time=None,
                            closing_block=None, active=True,
                            reputation_snapshot=(lender_rep, borrower_rep))
        lender.balance -= lender_debit
        borrower.balance -= borrower_fee
        self.fee_sink += draft.opening_fee
        if self.config.credit_borrower_on_open:
            borrower.balance += draft.amount
            remaining = 0
        else:
            remaining = draft.amount
        lender.locked += remaining + interest_total
        st = LoanState(agreement, remaining, interest_total, per_block)
        if remaining < draft.amount:
            st.consumed.append((h, draft.amount - remaining))  # handed out at opening
        self._register(st)
        key = (draft.lender, draft.borrower)
        self.loaned_amounts[key] = self.loaned_amounts.get(key, 0) + remaining
        self._emit("loan_opened", agreement_id=aid, lender=draft.lender, borrower=draft.borrower,
                   amount=draft.amount, interest=interest_total, opening_fee=draft.opening_fee)
        return aid

    def _register(self, st: LoanState) -> None:
        aid = st.agreement.agreement_id
        self.loans[aid] = st
        if st.agreement.active:
            self._active[aid] = st
            self._by_borrower.setdefault(st.agreement.borrower, {})[aid] = st

    def _terminate(self, st: LoanState, block: int, reason: str) -> None:
        ag = st.agreement
        lender = self.accounts[ag.lender]
        release = st.locked_share
        lender.locked -= release
        lender.balance += release
        key = (ag.lender, ag.borrower)
        left = self.loaned_amounts.get(key, 0) - st.remaining
        if left:
            self.loaned_amounts[key] = left
        else:
            self.loaned_amounts.pop(key, None)
        del self._active[ag.agreement_id]
        del self._by_borrower[ag.borrower][ag.agreement_id]
        st.agreement = replace(ag, active=False, closing_block=block, close_time=block)
        fee_unpaid = self._charge_closing_fee(st)
        self._emit("loan_closed", agreement_id=ag.agreement_id, reason=reason, released=release,
                   unused=st.remaining, closing_fee_unpaid=fee_unpaid)

    def _charge_closing_fee(self, st: LoanState) -> int:
        fee = st.agreement.closing_fee
        if st.beneficiary is not None:
            shares = [(st.beneficiary, fee)]
        else:
            lender_share = math.ceil(fee / 2)
            shares = [(st.agreement.lender, lender_share), (st.agreement.borrower, fee - lender_share)]
        unpaid = 0
        for node, share in shares:
            acc = self.accounts[node]
            paid = min(share, acc.balance)
            acc.balance -= paid
            self.fee_sink += paid
            unpaid += share - paid
        return unpaid

    def close_loan(self, agreement_id: int) -> LoanAgreement:
        st = self._loan(agreement_id)
        if not st.agreement.active:
            return st.agreement
        if self.height < st.agreement.end_block:
            raise EarlyClosureError(
                f"agreement {agreement_id} runs until block {st.agreement.end_block}; "
                "loans cannot be closed early")
        self._terminate(st, st.agreement.end_block, "closed")
        return st.agreement

    def _loan(self, agreement_id: int) -> LoanState:
        try:
            return self.loans[agreement_id]
        except KeyError:
            raise ValidationError(f"unknown agreement {agreement_id}") from None

    # -- blocks --------------------------------------------------------
    def advance_block(self) -> list[Event]:
        first = len(self.events)
        h = self.height
        for st in self._active_loans():
            ag = st.agreement
            if not ag.usable_at(h):
                continue
            due = installment(st.interest_total, st.interest_per_block, ag.agreement_duration,
                              h - ag.opening_block)
            if due == 0:
                continue
            borrower = self.accounts[ag.borrower]
            if borrower.balance < due:
                self._emit("interest_delinquent", agreement_id=ag.agreement_id, due=due)
                self._record(ag.borrower, Outcome.DEFAULT)
                self._terminate(st, h + 1, "delinquent")
                continue
            lender = self.accounts[ag.lender]
            borrower.balance -= due
            lender.balance += due
            # the matching slice of the lender's locked interest is released too
            lender.locked -= due
            lender.balance += due
            st.interest_paid += due
            self._emit("interest_paid", agreement_id=ag.agreement_id, amount=due)

        self.clock.tick()
        h = self.height
        self.prev_beacon, self.beacon = self.beacon, mix64(self.beacon ^ mix64(h))
        if self.config.auto_close:
            for st in self._active_loans():
                if st.agreement.end_block <= h:
                    self._terminate(st, st.agreement.end_block, "expired")
        self._collect_repayments()
        return self.events[first:]

    def _active_loans(self) -> list[LoanState]:
        return list(self._active.values())  # ids are issued in increasing order

    def _collect_repayments(self) -> None:
        for ob in self.obligations.values():
            if ob.status != "open":
                continue
            debtor = self.accounts[ob.debtor]
            pay = min(debtor.balance, ob.outstanding)
            if pay:
                debtor.balance -= pay
                self.accounts[ob.creditor].balance += pay
                ob.outstanding -= pay
                self._emit("repayment", obligation_id=ob.obligation_id, amount=pay)
            if ob.outstanding == 0:
                ob.status = "repaid"
                self._record(ob.debtor, Outcome.DIRECT_SUCCESS)
                self._emit("obligation_repaid", obligation_id=ob.obligation_id)
            elif self.height > ob.due_block:
                ob.status = "defaulted"
                self._record(ob.debtor, Outcome.DEFAULT)
                self._emit("obligation_defaulted", obligation_id=ob.obligation_id,
                           outstanding=ob.outstanding)

    # -- offline payments ----------------------------------------------
    def settle_offline_transaction(self, tx: OfflineTransaction) -> SettlementReport:
        if tx.tx_id in self.settled:
            raise ReplayError(f"transaction {tx.tx_id!r} already settled")
        payer = self.account(tx.payer)
        payee = self.account(tx.payee)
        self.settled.add(tx.tx_id)
        h = self.height
        if payer.balance >= tx.amount:
            payer.balance -= tx.amount
            payee.balance += tx.amount
            self._record(tx.payer, Outcome.DIRECT_SUCCESS)
            report = SettlementReport(tx.tx_id, tx.amount, tx.amount, tx.amount, [], 0,
                                      reputation_effects=[(tx.payer, Outcome.DIRECT_SUCCESS)])
            self._emit("settled", **report_payload(report))
            return report

        paid_by_payer = payer.balance
        payer.balance = 0
        shortfall = tx.amount - paid_by_payer
        contributions: dict[NodeId, int] = {}
        used: list[LoanState] = []
        crossed: set[tuple[NodeId, NodeId]] = set()
        frontier = [tx.payer]
        depth = 0
        while shortfall and frontier and depth < self.config.settlement_depth:
            next_frontier: list[NodeId] = []
            for borrower in frontier:
                by_lender: dict[NodeId, list[LoanState]] = {}
                for _, st in sorted(self._by_borrower.get(borrower, {}).items()):
                    ag = st.agreement
                    if ag.lender != tx.payer and st.remaining > 0 \
                            and ag.usable_at(h) and (ag.lender, borrower) not in crossed:
                        by_lender.setdefault(ag.lender, []).append(st)
                for lender_id in lender_order(by_lender, h, self.prev_beacon, borrower):
                    crossed.add((lender_id, borrower))
                    next_frontier.append(lender_id)
                    lender = self.accounts[lender_id]
                    for st in by_lender[lender_id]:
                        take = min(shortfall, st.remaining)
                        st.remaining -= take
                        st.consumed.append((h, take))
                        st.beneficiary = tx.payee
                        lender.locked -= take
                        key = (lender_id, borrower)
                        self.loaned_amounts[key] -= take
                        contributions[lender_id] = contributions.get(lender_id, 0) + take
                        shortfall -= take
                        used.append(st)
                        self._open_obligation(tx.payer, st, take)
                        if not shortfall:
                            break
                    if not shortfall:
                        break
                if not shortfall:
                    break
            frontier = next_frontier
            depth += 1

        contributed = sum(contributions.values())
        paid_total = paid_by_payer + contributed
        fee = min(self.config.hop_fee * len(used), contributed)
        payee.balance += paid_total - fee
        self.fee_sink += fee
        outcome = Outcome.DEFAULT if shortfall else Outcome.LOAN_FALLBACK
        self._record(tx.payer, outcome)
        for st in used:
            if st.agreement.active and st.remaining == 0:
                self._terminate(st, h, "used")
        report = SettlementReport(tx.tx_id, tx.amount, paid_total, paid_by_payer,
                                  list(contributions.items()), shortfall, fee,
                                  [(tx.payer, outcome)])
        self._emit("settled", **report_payload(report))
        return report

    def _open_obligation(self, debtor: NodeId, st: LoanState, amount: int) -> None:
        oid = self._next_obligation
        self._next_obligation += 1
        ag = st.agreement
        self.obligations[oid] = RepaymentObligation(
            oid, debtor, ag.lender, ag.agreement_id, amount, amount, self.height + ag.repayment_time)

    # -- checks --------------------------------------------------------
    def check_invariants(self) -> list[str]:
        problems = []
        if self.total_tokens() != self.minted:
            problems.append(f"conservation: {self.total_tokens()} != minted {self.minted}")
        expected_locked: dict[NodeId, int] = {}
        expected_loaned: dict[tuple[NodeId, NodeId], int] = {}
        for st in self.loans.values():
            ag = st.agreement
            if st.remaining < 0 or st.interest_paid > st.interest_total:
                problems.append(f"agreement {ag.agreement_id}: inconsistent state")
            if ag.active:
                expected_locked[ag.lender] = expected_locked.get(ag.lender, 0) + st.locked_share
                key = (ag.lender, ag.borrower)
                expected_loaned[key] = expected_loaned.get(key, 0) + st.remaining
            elif ag.closing_block is None or ag.closing_block > ag.end_block:
                problems.append(f"agreement {ag.agreement_id}: bad closing block")
        for node, acc in self.accounts.items():
            if acc.balance < 0 or acc.locked < 0:
                problems.append(f"{node}: negative balance or locked amount")
            if acc.locked != expected_locked.get(node, 0):
                problems.append(f"{node}: locked {acc.locked} != {expected_locked.get(node, 0)}")
        live = {k: v for k, v in self.loaned_amounts.items() if v}
        if live != {k: v for k, v in expected_loaned.items() if v}:
            problems.append("loaned_amounts out of sync with agreements")
        return problems

    # -- persistence ---------------------------------------------------
    def dump(self, out) -> None:
        """Write a checkpoint in the network file format plus ledger lines.

        Extra line kinds: ``A <id> <balance> <locked>`` per account,
        ``S`` ledger scalars, ``G`` per-agreement loan state, ``O`` open
        repayment obligations, ``X`` settled transaction ids. Only active
        agreements are kept; reputation histories are folded into the
        dumped scores.

        :meth:`loads` also accepts a bare network file. Loans then carry no
        interest, lenders' collateral is exactly their outstanding principal,
        and all balances start at zero.
        """
        view = self.capture_view(include_exhausted=True)
        extra = [f"A {n} {a.balance} {a.locked}" for n, a in self.accounts.items()]
        extra.append(f"S {self.beacon} {self.prev_beacon} {self.fee_sink} {self.minted} "
                     f"{self._next_agreement} {self._next_obligation}")
        for aid, st in sorted(self.loans.items()):
            ag = st.agreement
            if ag.active and ag.usable_at(self.height):
                extra.append(
                    f"G {aid} {ag.amount} {st.interest_total} {st.interest_per_block} "
                    f"{st.interest_paid} {ag.repayment_time} {ag.min_open_time} "
                    f"{format_reputation(ag.reputation_snapshot[0])} "
                    f"{format_reputation(ag.reputation_snapshot[1])} {st.beneficiary or '-'}")
        for ob in self.obligations.values():
            if ob.status == "open":
                extra.append(f"O {ob.obligation_id} {ob.debtor} {ob.creditor} {ob.agreement_id} "
                             f"{ob.amount} {ob.outstanding} {ob.due_block}")
        extra.extend(f"X {tx}" for tx in sorted(self.settled))
        write_network(view, out, extra)

    def save(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            self.dump(fh)

    @classmethod
    def loads(cls, text: str, config: LedgerConfig | None = None,
              reputation: ReputationLedger | None = None) -> Ledger:
        parsed = parse_network(text, extra_kinds="ASGOX")
        view, extra = parsed.view, parsed.extra
        ledger = cls(config, reputation)
        ledger.clock.height = ledger.history_start = view.as_of_block
        for node, rep in zip(view.node_ids, view.reputations):
            ledger.accounts[node] = Account(node)
            ledger._created[node] = view.as_of_block
            ledger.reputation.base[node] = float(rep)
        state = {int(f[0]): f[1:] for f in extra.get("G", [])}
        for e in view.edges:
            g = state.get(e.agreement_id)
            if g is None:
                g = (e.amount, 0, 0, 0, 0, 0, ledger.reputation.base[e.lender],
                     ledger.reputation.base[e.borrower], "-")
            original, itotal, iper, ipaid, trepay, tmin = (int(x) for x in g[:6])
            ag = LoanAgreement(e.lender, e.borrower, original, e.duration, trepay, tmin,
                               e.opening_fee, e.closing_fee, agreement_id=e.agreement_id,
                               opening_block=e.opening_block,
                               reputation_snapshot=(float(g[6]), float(g[7])))
            st = LoanState(ag, e.amount, itotal, iper, ipaid,
                           beneficiary=None if g[8] == "-" else g[8])
            if original > e.amount:
                st.consumed.append((view.as_of_block, original - e.amount))
            ledger._register(st)
            ledger.accounts[e.lender].locked += st.locked_share
            key = (e.lender, e.borrower)
            ledger.loaned_amounts[key] = ledger.loaned_amounts.get(key, 0) + e.amount
        ledger._next_agreement = max(state.keys() | {int(a) for a in view.agreement_ids},
                                     default=-1) + 1
        for node, balance, locked in extra.get("A", []):
            acc = ledger.account(node)
            acc.balance, acc.locked = int(balance), int(locked)
        for oid, debtor, creditor, aid, amount, outstanding, due in extra.get("O", []):
            ledger.obligations[int(oid)] = RepaymentObligation(
                int(oid), debtor, creditor, int(aid), int(amount), int(outstanding), int(due))
        ledger._next_obligation = max(ledger.obligations, default=-1) + 1
        ledger.minted = ledger.total_tokens()
        for fields in extra.get("S", []):
            (ledger.beacon, ledger.prev_beacon, ledger.fee_sink, ledger.minted,
             ledger._next_agreement, ledger._next_obligation) = (int(x) for x in fields)
        ledger.settled = {f[0] for f in extra.get("X", [])}
        return ledger

    @classmethod
    def load(cls, path: str | Path, config: LedgerConfig | None = None) -> Ledger:
        return cls.loads(Path(path).read_text(), config)

    def write_events(self, path: str | Path, events: Iterable[Event] | None = None) -> None:
        """Append events (default: all) to a JSON-lines log."""
        with open(path, "a") as fh:
            for ev in self.events if events is None else events:
                fh.write(ev.to_json() + "\n")


def report_payload(report: SettlementReport) -> dict:
    payload = asdict(report)
    payload["reputation_effects"] = [[n, o.value] for n, o in report.reputation_effects]
    return payload


# Function forms of the ledger operations.
def capture_view(ledger: Ledger, at_block: int) -> LoanNetworkView:
    return ledger.capture_view(at_block)


def open_loan(ledger: Ledger, draft: LoanAgreement) -> int:
    return ledger.open_loan(draft)


def advance_block(ledger: Ledger) -> list[Event]:
    return ledger.advance_block()


def settle_offline_transaction(ledger: Ledger, tx: OfflineTransaction) -> SettlementReport:
    return ledger.settle_offline_transaction(tx)


def close_loan(ledger: Ledger, agreement_id: int) -> LoanAgreement:
    return ledger.close_loan(agreement_id)
