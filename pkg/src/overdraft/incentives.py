"""Loan interest: total owed over a loan's life and its per-block installments."""

from __future__ import annotations

import math
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal

from .errors import ValidationError

DAYS_PER_YEAR = 365
BLOCKS_PER_DAY = 7200  # 12 s blocks


def round_half_up(x: float) -> int:
    return int(Decimal(x).quantize(Decimal(1), rounding=ROUND_HALF_UP))


def sigmoid(x: float) -> float:
    if x >= 0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@dataclass(frozen=True)
class InterestParams:
    loan_amount: float                 # alpha, tokens
    loaned_percentage_rate: float      # beta, exponent in (0, 1]
    loan_duration_days: float          # gamma
    annual_percentage_rate: float      # delta, as a fraction
    lender_reputation: float           # R
    midpoint: float = 0.5              # R0
    steepness: float = 20.0            # zeta

    def __post_init__(self) -> None:
        if self.loan_amount < 0 or self.loan_duration_days < 0 or self.annual_percentage_rate < 0:
            raise ValidationError("amount, duration and annual rate must be non-negative")
        if not 0.0 < self.loaned_percentage_rate <= 1.0:
            raise ValidationError("loaned percentage rate must lie in (0, 1]")
        if not (0.0 <= self.lender_reputation <= 1.0 and 0.0 <= self.midpoint <= 1.0):
            raise ValidationError("reputation and midpoint must lie in [0, 1]")
        if not self.steepness > 0:
            raise ValidationError("steepness must be positive")

    def reputation_factor(self) -> float:
        return sigmoid(self.steepness * (self.lender_reputation - self.midpoint))


def total_interest(p: InterestParams) -> float:
    """Interest owed over the whole loan, in (real) tokens."""
    amount_term = p.loan_amount ** p.loaned_percentage_rate * p.reputation_factor()
    time_term = p.loan_duration_days / DAYS_PER_YEAR * p.annual_percentage_rate
    return max(0.0, amount_term + time_term)


def per_block_interest(p: InterestParams, duration_blocks: int) -> int:
    if duration_blocks <= 0:
        raise ValidationError("duration must be at least one block")
    return round_half_up(total_interest(p) / duration_blocks)


def installment(total: int, per_block: int, duration_blocks: int, k: int) -> int:
    """Tokens due in block ``k`` (0-based) of a loan paying ``total`` over ``duration_blocks``.

    Every block pays ``per_block`` until the total is reached; the last block
    pays whatever is left, so the installments always sum to ``total``.
    """
    if not 0 <= k < duration_blocks:
        raise ValidationError("installment index outside the loan duration")
    paid_before = min(total, per_block * k)
    if k == duration_blocks - 1:
        return total - paid_before
    return min(per_block, total - paid_before)


def interest_schedule(p: InterestParams, duration_blocks: int) -> list[int]:
    per = per_block_interest(p, duration_blocks)
    total = round_half_up(total_interest(p))
    return [installment(total, per, duration_blocks, k) for k in range(duration_blocks)]


@dataclass(frozen=True)
class InterestConfig:
    """Ledger-wide interest terms; the loan supplies amount, duration and lender reputation."""

    loaned_percentage_rate: float = 0.75
    annual_percentage_rate: float = 0.05
    midpoint: float = 0.5
    steepness: float = 20.0
    blocks_per_day: int = BLOCKS_PER_DAY

    def params(self, amount: float, duration_blocks: int, lender_reputation: float) -> InterestParams:
        return InterestParams(
            loan_amount=amount,
            loaned_percentage_rate=self.loaned_percentage_rate,
            loan_duration_days=duration_blocks / self.blocks_per_day,
            annual_percentage_rate=self.annual_percentage_rate,
            lender_reputation=lender_reputation,
            midpoint=self.midpoint,
            steepness=self.steepness,
        )

    def __call__(self, amount: int, duration_blocks: int, lender_reputation: float) -> float:
        return total_interest(self.params(amount, duration_blocks, lender_reputation))


def no_interest(amount: int, duration_blocks: int, lender_reputation: float) -> float:
    return 0.0
