"""Payee-side confidence in an offline payment.

A walk starts at the payer and asks whether it pays; a node that does not
pay is replaced by the lenders that vouched for it, recursively. Each node
pays with probability ``reputation * decay**distance``; every loan edge is
crossed at most once per walk, nodes may be revisited. Repeating the walk
gives the empirical distribution of the amount the payee will eventually
settle.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Mapping

import numpy as np

from ._kernel import walk_batch
from .errors import UnknownPartyError, ValidationError
from .model import LoanNetworkView, NodeId
from .rng import SplitMix64, stream_base, walk_key

Z95 = 1.96
EXACT_MAX_EDGES = 20


@dataclass(frozen=True)
class WalkParams:
    """Walk configuration.

    ``enable_early_stop`` stops scanning a node's lenders once the amount
    collected reaches the transaction amount; with ``enable_min_cap`` also on,
    the stop threshold is tightened to the loaned amount of the edge being
    resolved, since the capped result cannot grow past it. ``indexed`` picks
    the pre-built borrower index over a full edge scan; it changes run time
    only, never the result.
    """

    decay: float = 0.95
    max_distance: int = 9
    transaction_amount: int = 100
    rng_seed: int = 0
    enable_min_cap: bool = True
    enable_early_stop: bool = True
    indexed: bool = True

    def __post_init__(self) -> None:
        if not 0.0 <= self.decay <= 1.0:
            raise ValidationError("decay must lie in [0, 1]")
        if self.max_distance < 0:
            raise ValidationError("max_distance must be non-negative")
        if self.transaction_amount <= 0:
            raise ValidationError("transaction amount must be positive")

    def decay_powers(self, upto: int) -> np.ndarray:
        return np.array([self.decay ** d for d in range(upto + 1)], dtype=np.float64)


def decayed_reputation(reputation: float, decay: float, distance: int) -> float:
    """Probability that a node ``distance`` hops from the payer pays."""
    return reputation * decay ** distance


def _stop_target(params: WalkParams, loaned: int) -> int:
    if params.enable_min_cap:
        return min(params.transaction_amount, loaned)
    return params.transaction_amount


def random_walk(
    view: LoanNetworkView,
    node: NodeId,
    loaned_amount: int,
    visited_edges: set[int],
    path: list[NodeId],
    params: WalkParams,
    root: NodeId,
    rng: SplitMix64,
    *,
    step_counter: list[int] | None = None,
) -> int:
    """One recursive walk step, written for readability.

    ``visited_edges`` holds edge indices of ``view`` and is mutated.
    ``step_counter[0]`` (if given) is incremented per edge crossed.
    """
    if loaned_amount <= 0:
        raise ValidationError("loaned amount must be positive")
    i = view.node_index(node)
    root_i = view.node_index(root)
    path_idx = [view.node_index(p) for p in path]
    steps = step_counter if step_counter is not None else [0]
    return _walk(view, i, int(loaned_amount), visited_edges, path_idx, params, root_i, rng, steps)


def _walk(view, node, loaned, visited, path, params, root, rng, steps) -> int:
    current_path = path + [node]
    if node == root and len(current_path) > 1:
        return 0
    distance = len(current_path) - 1
    p = float(view.reputations[node]) * params.decay ** distance
    if rng.uniform() < p:
        return loaned
    amount = 0
    target = _stop_target(params, loaned)
    incoming = view.incoming(node) if params.indexed else view.incoming_scan(node)
    edges = [int(e) for e in incoming if int(e) not in visited]
    for e in edges:
        if (params.enable_early_stop and amount >= target) or distance >= params.max_distance:
            break
        visited.add(e)
        pred = int(view.lenders[e])
        if pred == root:
            break
        steps[0] += 1
        amount += _walk(view, pred, int(view.amounts[e]), visited, current_path, params, root, rng, steps)
    if params.enable_min_cap:
        amount = min(amount, loaned)
    return amount


def reference_walks(view: LoanNetworkView, payer: NodeId, params: WalkParams,
                    start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    """Pure-Python equivalent of :func:`run_walks`, for cross-checking."""
    values = np.empty(stop - start, dtype=np.int64)
    steps = np.empty(stop - start, dtype=np.int64)
    for w in range(start, stop):
        counter = [0]
        values[w - start] = random_walk(
            view, payer, params.transaction_amount, set(), [], params, payer,
            SplitMix64(walk_key(params.rng_seed, w)), step_counter=counter,
        )
        steps[w - start] = counter[0]
    return values, steps


def run_walks(view: LoanNetworkView, payer: NodeId, params: WalkParams,
              start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    """Settled value and edge-crossing count of walks ``start..stop-1``."""
    root = view.node_index(payer)
    values = np.empty(stop - start, dtype=np.int64)
    steps = np.empty(stop - start, dtype=np.int64)
    depth = min(params.max_distance, view.num_edges) + 2
    walk_batch(
        view.in_indptr, view.in_order, view.lenders, view.borrowers, view.amounts,
        view.reputations, params.decay_powers(depth), root, params.transaction_amount,
        params.max_distance, params.enable_min_cap, params.enable_early_stop, params.indexed,
        np.uint64(stream_base(params.rng_seed)), start, stop, values, steps,
    )
    return values, steps


def histogram(values: Iterable[int] | np.ndarray) -> dict[int, int]:
    amounts, counts = np.unique(np.asarray(values, dtype=np.int64), return_counts=True)
    return dict(zip(amounts.tolist(), counts.tolist()))


def merge_histograms(parts: Iterable[Mapping[int, int]]) -> dict[int, int]:
    merged: dict[int, int] = {}
    for part in parts:
        for amount, count in part.items():
            merged[amount] = merged.get(amount, 0) + count
    return dict(sorted(merged.items()))


@dataclass(frozen=True)
class ConfidenceEstimate:
    iterations: int
    transaction_amount: int
    samples: tuple[tuple[int, int], ...]  # (amount, count), sorted by amount
    mean: float
    std: float
    ci95_width: float

    @classmethod
    def from_histogram(cls, hist: Mapping[int, int], transaction_amount: int) -> ConfidenceEstimate:
        k = sum(hist.values())
        if k < 1:
            raise ValidationError("empty histogram")
        s1 = sum(a * c for a, c in hist.items())
        s2 = sum(a * a * c for a, c in hist.items())
        mean = s1 / k
        # integer numerator keeps merged and sequential estimates bit-identical
        var = (k * s2 - s1 * s1) / (k * (k - 1)) if k > 1 else 0.0
        std = math.sqrt(max(var, 0.0))
        return cls(k, transaction_amount, tuple(sorted(hist.items())), mean, std,
                   2 * Z95 * std / math.sqrt(k))

    @property
    def histogram(self) -> dict[int, int]:
        return dict(self.samples)

    def prob_at_least(self, threshold: float) -> float:
        return sum(c for a, c in self.samples if a >= threshold) / self.iterations


def _walk_chunk(args) -> dict[int, int]:
    view, payer, params, start, stop = args
    values, _ = run_walks(view, payer, params, start, stop)
    return histogram(values)


def estimate_confidence(view: LoanNetworkView, payer: NodeId, params: WalkParams,
                        iterations: int, *, workers: int = 1) -> ConfidenceEstimate:
    """Run ``iterations`` independent walks from ``payer``.

    Walk ``i`` draws from the substream keyed by ``(rng_seed, i)``, so the
    result does not depend on ``workers``.
    """
    if iterations < 1:
        raise ValidationError("iterations must be at least 1")
    view.node_index(payer)
    if workers <= 1:
        values, _ = run_walks(view, payer, params, 0, iterations)
        return ConfidenceEstimate.from_histogram(histogram(values), params.transaction_amount)
    bounds = np.linspace(0, iterations, workers + 1).astype(int)
    chunks = [(view, payer, params, int(a), int(b)) for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        parts = list(pool.map(_walk_chunk, chunks))
    return ConfidenceEstimate.from_histogram(merge_histograms(parts), params.transaction_amount)


def exact_expectation(view: LoanNetworkView, payer: NodeId, params: WalkParams) -> float:
    """Exact mean of the walk value, by enumerating the walk's random branches.

    The walk shares one visited-edge set across the whole recursion, so a
    branch's value depends on which edges its earlier siblings crossed. The
    enumeration therefore carries, per branch, the probability mass of each
    reachable visited set together with the expected value accumulated on
    it. On trees this reduces to E = p*amt + (1-p) * sum over lenders.
    Exponential in the edge count; guarded to small views.
    """
    if params.enable_early_stop or params.enable_min_cap:
        raise ValidationError("exact expectation needs early stop and min cap disabled")
    if view.num_edges > EXACT_MAX_EDGES:
        raise ValidationError(f"exact expectation is limited to {EXACT_MAX_EDGES} edges")
    root = view.node_index(payer)
    reps = [float(r) for r in view.reputations]
    incoming = [[int(e) for e in view.incoming(v)] for v in range(view.num_nodes)]
    lenders = [int(x) for x in view.lenders]
    amounts = [int(x) for x in view.amounts]
    memo: dict = {}

    def expand(node: int, loaned: int, dist: int, visited: frozenset) -> dict[frozenset, tuple[float, float]]:
        # -> {final visited set: (probability, E[value * 1{final set}])}
        key = (node, loaned, dist, visited)
        if key in memo:
            return memo[key]
        if node == root and dist > 0:
            out = {visited: (1.0, 0.0)}
            memo[key] = out
            return out
        p = reps[node] * params.decay ** dist
        states: dict[frozenset, tuple[float, float]] = {visited: (1.0 - p, 0.0)}
        if dist < params.max_distance:
            for e in [e for e in incoming[node] if e not in visited]:
                pred = lenders[e]
                nxt: dict[frozenset, tuple[float, float]] = {}
                for vis, (mass, vmass) in states.items():
                    vis = vis | {e}
                    if pred == root:
                        sub = {vis: (1.0, 0.0)}
                    else:
                        sub = expand(pred, amounts[e], dist + 1, vis)
                    for vis2, (m2, v2) in sub.items():
                        om, ov = nxt.get(vis2, (0.0, 0.0))
                        nxt[vis2] = (om + mass * m2, ov + vmass * m2 + mass * v2)
                states = nxt
                if pred == root:
                    break
        om, ov = states.get(visited, (0.0, 0.0))
        states = dict(states)
        states[visited] = (om + p, ov + p * loaned)
        memo[key] = states
        return states

    return sum(v for _, v in expand(root, params.transaction_amount, 0, frozenset()).values())


class Decision(str, enum.Enum):
    ACCEPT = "accept"
    DENY = "deny"


@dataclass(frozen=True)
class PaymentPolicy:
    threshold: float
    min_probability: float
    min_reputation: float = 0.0


def accept_payment(estimate: ConfidenceEstimate, policy: PaymentPolicy,
                   payer_reputation: float | None = None) -> Decision:
    if policy.threshold > estimate.transaction_amount:
        raise ValidationError("threshold exceeds the transaction amount")
    if payer_reputation is not None and payer_reputation < policy.min_reputation:
        return Decision.DENY
    if estimate.prob_at_least(policy.threshold) >= policy.min_probability:
        return Decision.ACCEPT
    return Decision.DENY
