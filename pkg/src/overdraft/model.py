"""Shared domain types: loan agreements, network views, offline transactions."""

from __future__ import annotations

import io
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .errors import UnknownPartyError, ValidationError

NodeId = str

REPUTATION_DIGITS = 6
NETWORK_HEADER = "overdraft-net v1"
DISPUTE_RANDOM_LENDER = "random-lender"


def check_node_id(node: NodeId) -> NodeId:
    if not isinstance(node, str) or not node or any(c.isspace() for c in node):
        raise ValidationError(f"node id must be a non-empty string without whitespace: {node!r}")
    return node


@dataclass
class Account:
    node: NodeId
    balance: int = 0
    locked: int = 0


@dataclass(frozen=True)
class LoanAgreement:
    """One lending pledge. Drafts leave ``agreement_id`` and ``opening_block`` unset."""

    lender: NodeId
    borrower: NodeId
    amount: int
    agreement_duration: int
    repayment_time: int = 0
    min_open_time: int = 0
    opening_fee: int = 0
    closing_fee: int = 0
    agreement_id: int | None = None
    opening_block: int | None = None
    close_time: int | None = None
    closing_block: int | None = None
    active: bool = True
    reputation_snapshot: tuple[float, float] = (0.0, 0.0)
    dispute_resolution: str = DISPUTE_RANDOM_LENDER
    signed: bool = True

    @property
    def end_block(self) -> int:
        """First block at which the agreement is no longer usable."""
        if self.opening_block is None:
            raise ValidationError("draft agreement has no opening block")
        return self.opening_block + self.agreement_duration

    def usable_at(self, block: int) -> bool:
        if self.opening_block is None:
            return False
        if not self.opening_block <= block < self.end_block:
            return False
        return self.closing_block is None or block < self.closing_block


def validate_agreement(draft: LoanAgreement) -> list[str]:
    """Return every violated invariant of ``draft``; an empty list means ok."""
    violations = []
    if draft.lender == draft.borrower:
        violations.append("self-loan")
    if draft.amount <= 0:
        violations.append("non-positive amount")
    if draft.agreement_duration <= 0:
        violations.append("non-positive duration")
    if draft.opening_fee < 0 or draft.closing_fee < 0:
        violations.append("negative fee")
    if draft.repayment_time < 0 or draft.min_open_time < 0:
        violations.append("negative time parameter")
    if draft.opening_block is not None and draft.opening_block < draft.min_open_time:
        violations.append("opened before min open time")
    if not draft.signed:
        violations.append("missing signature")
    for rep in draft.reputation_snapshot:
        if not 0.0 <= rep <= 1.0:
            violations.append("reputation snapshot out of range")
            break
    return violations


@dataclass(frozen=True)
class OfflineTransaction:
    tx_id: str
    payer: NodeId
    payee: NodeId
    amount: int
    agreed_at_view: int = 0
    submitted_at: int | None = None

    def __post_init__(self) -> None:
        if self.amount <= 0:
            raise ValidationError("offline transaction amount must be positive")
        if self.payer == self.payee:
            raise ValidationError("payer and payee must differ")


@dataclass
class BlockClock:
    height: int = 0

    def tick(self) -> int:
        self.height += 1
        return self.height


@dataclass(frozen=True)
class LoanEdge:
    """A loan as seen in a network view (the fields of a network-file ``L`` line)."""

    agreement_id: int
    lender: NodeId
    borrower: NodeId
    amount: int
    opening_block: int
    duration: int
    opening_fee: int = 0
    closing_fee: int = 0


def _frozen(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


class LoanNetworkView:
    """Immutable snapshot of the active loan graph at ``as_of_block``.

    Storage is columnar so that generated networks with millions of edges
    stay compact. Nodes are addressed internally by index; edges keep their
    insertion order, which is also the order a walk iterates a borrower's
    lenders in.
    """

    def __init__(
        self,
        as_of_block: int,
        node_ids: Iterable[NodeId],
        reputations: Iterable[float] | np.ndarray,
        lenders: Iterable[int] | np.ndarray = (),
        borrowers: Iterable[int] | np.ndarray = (),
        amounts: Iterable[int] | np.ndarray = (),
        agreement_ids: Iterable[int] | np.ndarray | None = None,
        opening_blocks: Iterable[int] | np.ndarray | None = None,
        durations: Iterable[int] | np.ndarray | None = None,
        opening_fees: Iterable[int] | np.ndarray | None = None,
        closing_fees: Iterable[int] | np.ndarray | None = None,
        *,
        check: bool = True,
    ) -> None:
        self.as_of_block = int(as_of_block)
        self.node_ids: tuple[NodeId, ...] = tuple(node_ids)
        n = len(self.node_ids)
        reps = np.round(np.asarray(reputations, dtype=np.float64), REPUTATION_DIGITS)
        if reps.shape != (n,):
            raise ValidationError("one reputation per node required")
        lenders = np.asarray(lenders, dtype=np.int32)
        borrowers = np.asarray(borrowers, dtype=np.int32)
        m = len(lenders)
        index_dtype = np.int32 if m < 2**31 else np.int64

        def column(values, default):
            if values is None:
                return np.full(m, default, dtype=np.int64)
            return np.asarray(values, dtype=np.int64)

        self.reputations = _frozen(reps)
        self.lenders = _frozen(lenders)
        self.borrowers = _frozen(borrowers)
        self.amounts = _frozen(column(amounts, 0))
        self.agreement_ids = _frozen(
            np.arange(m, dtype=np.int64) if agreement_ids is None else column(agreement_ids, 0)
        )
        self.opening_blocks = _frozen(column(opening_blocks, self.as_of_block))
        self.durations = _frozen(column(durations, 1))
        self.opening_fees = _frozen(column(opening_fees, 0))
        self.closing_fees = _frozen(column(closing_fees, 0))
        self._index_dtype = index_dtype
        if check:
            self._check()

    def _check(self) -> None:
        n = len(self.node_ids)
        m = self.num_edges
        for col in (self.borrowers, self.amounts, self.agreement_ids, self.opening_blocks,
                    self.durations, self.opening_fees, self.closing_fees):
            if len(col) != m:
                raise ValidationError("edge columns must have equal length")
        if len(set(self.node_ids)) != n:
            raise ValidationError("duplicate node id")
        if n and (self.reputations.min() < 0.0 or self.reputations.max() > 1.0):
            raise ValidationError("reputation outside [0, 1]")
        if m:
            if min(self.lenders.min(), self.borrowers.min()) < 0 or max(
                self.lenders.max(), self.borrowers.max()
            ) >= n:
                raise ValidationError("edge endpoint is not a node of the view")
            if np.any(self.lenders == self.borrowers):
                raise ValidationError("self-loan in view")
            if np.any(self.amounts < 0):
                raise ValidationError("negative edge amount")
            if np.any(self.opening_blocks > self.as_of_block) or np.any(
                self.as_of_block >= self.opening_blocks + self.durations
            ):
                raise ValidationError("edge not active at the view's block")
            if len(np.unique(self.agreement_ids)) != m:
                raise ValidationError("duplicate agreement id")

    @classmethod
    def from_edges(
        cls,
        as_of_block: int,
        nodes: Mapping[NodeId, float],
        edges: Iterable[LoanEdge] = (),
    ) -> LoanNetworkView:
        ids = [check_node_id(n) for n in nodes]
        pos = {node: i for i, node in enumerate(ids)}
        edges = list(edges)
        try:
            lenders = [pos[e.lender] for e in edges]
            borrowers = [pos[e.borrower] for e in edges]
        except KeyError as exc:
            raise ValidationError(f"edge endpoint {exc.args[0]!r} is not a node") from None
        return cls(
            as_of_block,
            ids,
            [nodes[i] for i in ids],
            lenders,
            borrowers,
            [e.amount for e in edges],
            agreement_ids=[e.agreement_id for e in edges],
            opening_blocks=[e.opening_block for e in edges],
            durations=[e.duration for e in edges],
            opening_fees=[e.opening_fee for e in edges],
            closing_fees=[e.closing_fee for e in edges],
        )

    @classmethod
    def simple(
        cls,
        reputations: Mapping[NodeId, float],
        loans: Iterable[tuple[NodeId, NodeId, int]] = (),
        as_of_block: int = 0,
    ) -> LoanNetworkView:
        """Build a view from ``(lender, borrower, amount)`` triples, open forever."""
        edges = [
            LoanEdge(i, lender, borrower, amount, as_of_block, 2**40)
            for i, (lender, borrower, amount) in enumerate(loans)
        ]
        return cls.from_edges(as_of_block, reputations, edges)

    @property
    def num_nodes(self) -> int:
        return len(self.node_ids)

    @property
    def num_edges(self) -> int:
        return len(self.lenders)

    @cached_property
    def index(self) -> dict[NodeId, int]:
        return {node: i for i, node in enumerate(self.node_ids)}

    def node_index(self, node: NodeId) -> int:
        try:
            return self.index[node]
        except KeyError:
            raise UnknownPartyError(node) from None

    def reputation(self, node: NodeId) -> float:
        return float(self.reputations[self.node_index(node)])

    @cached_property
    def in_order(self) -> np.ndarray:
        """Edge indices grouped by borrower, insertion order kept inside each group."""
        return _frozen(np.argsort(self.borrowers, kind="stable").astype(self._index_dtype))

    @cached_property
    def in_indptr(self) -> np.ndarray:
        counts = np.bincount(self.borrowers, minlength=self.num_nodes)
        indptr = np.zeros(self.num_nodes + 1, dtype=np.int64)
        np.cumsum(counts, out=indptr[1:])
        return _frozen(indptr)

    def incoming(self, node: int) -> np.ndarray:
        """Indices of the edges lending to node index ``node`` (pre-indexed)."""
        return self.in_order[self.in_indptr[node]:self.in_indptr[node + 1]]

    def incoming_scan(self, node: int) -> np.ndarray:
        """Same as :meth:`incoming` but found by scanning the whole edge list."""
        return np.flatnonzero(self.borrowers == node)

    @property
    def edges(self) -> tuple[LoanEdge, ...]:
        ids = self.node_ids
        return tuple(
            LoanEdge(int(a), ids[l], ids[b], int(x), int(o), int(d), int(fo), int(fc))
            for a, l, b, x, o, d, fo, fc in zip(
                self.agreement_ids, self.lenders, self.borrowers, self.amounts,
                self.opening_blocks, self.durations, self.opening_fees, self.closing_fees,
            )
        )

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, LoanNetworkView):
            return NotImplemented
        return (
            self.as_of_block == other.as_of_block
            and self.node_ids == other.node_ids
            and np.array_equal(self.reputations, other.reputations)
            and all(
                np.array_equal(getattr(self, c), getattr(other, c))
                for c in ("lenders", "borrowers", "amounts", "agreement_ids",
                          "opening_blocks", "durations", "opening_fees", "closing_fees")
            )
        )

    __hash__ = None  # type: ignore[assignment]

    def __repr__(self) -> str:
        return (f"LoanNetworkView(as_of_block={self.as_of_block}, "
                f"nodes={self.num_nodes}, edges={self.num_edges})")


def format_reputation(rep: float) -> str:
    text = f"{rep:.{REPUTATION_DIGITS}f}".rstrip("0")
    return text + "0" if text.endswith(".") else text


def write_network(view: LoanNetworkView, out: io.TextIOBase, extra_lines: Iterable[str] = ()) -> None:
    out.write(f"{NETWORK_HEADER} as_of={view.as_of_block}\n")
    for node, rep in zip(view.node_ids, view.reputations):
        out.write(f"N {node} {format_reputation(float(rep))}\n")
    for e in view.edges:
        out.write(
            f"L {e.agreement_id} {e.lender} {e.borrower} {e.amount} "
            f"{e.opening_block} {e.duration} {e.opening_fee} {e.closing_fee}\n"
        )
    for line in extra_lines:
        out.write(line.rstrip("\n") + "\n")


def dumps_network(view: LoanNetworkView) -> str:
    buf = io.StringIO()
    write_network(view, buf)
    return buf.getvalue()


@dataclass
class ParsedNetwork:
    view: LoanNetworkView
    extra: dict[str, list[list[str]]] = field(default_factory=dict)


def parse_network(text: str, *, extra_kinds: Iterable[str] = ()) -> ParsedNetwork:
    """Parse the line-oriented network format.

    Lines whose kind is listed in ``extra_kinds`` are returned split into
    fields instead of being rejected; the ledger dump uses this for its
    account lines.
    """
    lines = [ln.strip() for ln in text.splitlines()]
    lines = [ln for ln in lines if ln and not ln.startswith("#")]
    if not lines:
        raise ValidationError("empty network file")
    header = lines[0].split()
    if len(header) != 3 or " ".join(header[:2]) != NETWORK_HEADER or not header[2].startswith("as_of="):
        raise ValidationError(f"bad header: {lines[0]!r}")
    try:
        as_of = int(header[2][len("as_of="):])
    except ValueError:
        raise ValidationError(f"bad header block: {lines[0]!r}") from None
    extra_kinds = set(extra_kinds)
    nodes: dict[NodeId, float] = {}
    edges: list[LoanEdge] = []
    extra: dict[str, list[list[str]]] = {}
    for lineno, line in enumerate(lines[1:], start=2):
        parts = line.split()
        kind = parts[0]
        try:
            if kind == "N" and len(parts) == 3:
                if parts[1] in nodes:
                    raise ValidationError(f"line {lineno}: duplicate node {parts[1]!r}")
                nodes[parts[1]] = float(parts[2])
            elif kind == "L" and len(parts) == 9:
                aid, lender, borrower = int(parts[1]), parts[2], parts[3]
                amount, opening, duration, fo, fc = (int(p) for p in parts[4:])
                edges.append(LoanEdge(aid, lender, borrower, amount, opening, duration, fo, fc))
            elif kind in extra_kinds:
                extra.setdefault(kind, []).append(parts[1:])
            else:
                raise ValidationError(f"line {lineno}: unrecognised line {line!r}")
        except ValueError as exc:
            if isinstance(exc, ValidationError):
                raise
            raise ValidationError(f"line {lineno}: {exc}") from None
    return ParsedNetwork(LoanNetworkView.from_edges(as_of, nodes, edges), extra)


def loads_network(text: str) -> LoanNetworkView:
    return parse_network(text).view


def save_network(view: LoanNetworkView, path: str | Path) -> None:
    with open(path, "w") as fh:
        write_network(view, fh)


def load_network(path: str | Path) -> LoanNetworkView:
    return loads_network(Path(path).read_text())
