"""Outcome-driven reputation scores with epoch decay, plus the split-penalty check.

:class:`ReputationLedger` is a stand-in for an external Sybil-tolerant
reputation service; anything exposing ``reputation_of(node, at_block)`` can
replace it (see :class:`ReputationProvider`).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Protocol

from .errors import ValidationError
from .model import NodeId


class Outcome(str, enum.Enum):
    DIRECT_SUCCESS = "direct_success"
    LOAN_FALLBACK = "loan_fallback"
    DEFAULT = "default"


class ReputationProvider(Protocol):
    def reputation_of(self, node: NodeId, at_block: int) -> float: ...


@dataclass
class StaticReputation:
    """Fixed scores, e.g. for hand-built scenarios."""

    scores: Mapping[NodeId, float]
    default: float = 0.0

    def reputation_of(self, node: NodeId, at_block: int) -> float:
        return self.scores.get(node, self.default)


def _clamp(x: float) -> float:
    return min(1.0, max(0.0, x))


@dataclass
class ReputationLedger:
    prior: float = 0.2
    reward: float = 0.01
    fallback_penalty: float = -0.05
    default_penalty: float = -0.10
    epoch_length: int = 100
    decay_per_epoch: float = 0.9
    history: dict[NodeId, list[tuple[int, Outcome]]] = field(default_factory=dict)
    # per-node starting score replacing the prior (checkpoint restore)
    base: dict[NodeId, float] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not 0.0 <= self.prior <= 1.0:
            raise ValidationError("prior must lie in [0, 1]")
        if self.epoch_length <= 0:
            raise ValidationError("epoch_length must be positive")
        if not 0.0 < self.decay_per_epoch <= 1.0:
            raise ValidationError("decay_per_epoch must lie in (0, 1]")
        if self.reward < 0 or self.fallback_penalty > 0 or self.default_penalty > 0:
            raise ValidationError("reward must be >= 0 and penalties <= 0")

    def delta(self, outcome: Outcome) -> float:
        return {
            Outcome.DIRECT_SUCCESS: self.reward,
            Outcome.LOAN_FALLBACK: self.fallback_penalty,
            Outcome.DEFAULT: self.default_penalty,
        }[Outcome(outcome)]

    def epochs_between(self, earlier: int, later: int) -> int:
        return later // self.epoch_length - earlier // self.epoch_length

    def contribution(self, outcome: Outcome, at: int, query_block: int) -> float:
        """Signed, decayed weight of one outcome when queried at ``query_block``."""
        return self.delta(outcome) * self.decay_per_epoch ** self.epochs_between(at, query_block)

    def reputation_of(self, node: NodeId, at_block: int) -> float:
        score = self.base.get(node, self.prior)
        for block, outcome in self.history.get(node, ()):
            if block <= at_block:
                score += self.contribution(outcome, block, at_block)
        return _clamp(score)

    def record_outcome(self, node: NodeId, outcome: Outcome | str, at_block: int) -> ReputationLedger:
        try:
            outcome = Outcome(outcome)
        except ValueError:
            raise ValidationError(f"unknown outcome {outcome!r}") from None
        self.history.setdefault(node, []).append((at_block, outcome))
        return self

    def snapshot(self, nodes, at_block: int) -> dict[NodeId, float]:
        return {node: self.reputation_of(node, at_block) for node in nodes}


class SplitVerdict(str, enum.Enum):
    PROFITABLE = "profitable"
    UNPROFITABLE = "unprofitable"


def _check_split_args(R: float, K: int, epsilon: float) -> None:
    if not 0.0 <= R <= 1.0:
        raise ValidationError("R must lie in [0, 1]")
    if not isinstance(K, int) or K < 1:
        raise ValidationError("K must be a positive integer")
    if not epsilon > 0:
        raise ValidationError("epsilon must be positive")


def split_influences(R: float, X: float, K: int, epsilon: float = 0.0) -> tuple[Fraction, Fraction]:
    """Exact (honest, split) influence for an even K-way split of reputation R and amount X.

    Each Sybil holds reputation R/K and lends X/K, so the split influence is
    K * (R/K) * (X/K) = R*X/K, reduced by the split penalty epsilon*X when
    K > 1. Returned as fractions so equalities hold exactly.
    """
    if epsilon < 0:
        raise ValidationError("epsilon must be non-negative")
    _check_split_args(R, K, epsilon or 1.0)
    r, x, eps = Fraction(R), Fraction(X), Fraction(epsilon)
    honest = r * x
    split = K * (r / K) * (x / K)
    if K > 1:
        split -= eps * x
    return honest, split


def split_threshold_exceeded(R: float, K: int, epsilon: float) -> bool:
    """True when R > K*epsilon, i.e. the Sybils' gross gain R*X/K outweighs the penalty."""
    _check_split_args(R, K, epsilon)
    return Fraction(R) > K * Fraction(epsilon)


def sybil_split_profitability(R: float, K: int, epsilon: float) -> SplitVerdict:
    """Whether splitting one lender into K Sybils raises its net influence.

    Profitable only if R*X/K - epsilon*X > R*X; never true for K >= 1, R in
    [0, 1] and epsilon > 0. :func:`split_threshold_exceeded` tells which side
    of R = K*epsilon a configuration is on.
    """
    _check_split_args(R, K, epsilon)
    if K == 1:
        return SplitVerdict.UNPROFITABLE
    honest, split = split_influences(R, 1, K, epsilon)
    return SplitVerdict.PROFITABLE if split > honest else SplitVerdict.UNPROFITABLE
