"""Random loan networks and the runtime / accuracy sweep over (nodes, iterations)."""

from __future__ import annotations

import csv
import dataclasses
import logging
import statistics
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .confidence import ConfidenceEstimate, WalkParams, histogram, run_walks
from .errors import ValidationError
from .model import LoanNetworkView

log = logging.getLogger(__name__)

ROOT = "0"
OPEN_FOREVER = 2**40


@dataclass
class BenchConfig:
    node_counts: list[int] = field(default_factory=lambda: [10, 10**2, 10**3, 10**4, 10**5, 10**6])
    iteration_counts: list[int] = field(default_factory=lambda: [10**2, 10**3, 10**4, 10**5])
    out_degree: int = 9
    max_distance: int = 9
    decay: float = 0.95
    loan_capacities: list[int] = field(default_factory=lambda: [0, 10, 20])
    root_reputation: float = 0.2
    transaction_amount: int = 100
    seed: int = 0
    optimized: bool = True

    def __post_init__(self) -> None:
        if not self.node_counts or min(self.node_counts) < 1:
            raise ValidationError("node counts must be positive")
        if not self.iteration_counts or min(self.iteration_counts) < 1:
            raise ValidationError("iteration counts must be positive")
        if self.out_degree < 0 or self.max_distance < 0 or self.transaction_amount <= 0:
            raise ValidationError("degree, distance and amount must be non-negative/positive")
        if not 0.0 <= self.decay <= 1.0 or not 0.0 <= self.root_reputation <= 1.0:
            raise ValidationError("decay and root reputation must lie in [0, 1]")
        if not self.loan_capacities or min(self.loan_capacities) < 0:
            raise ValidationError("loan capacities must be non-negative")

    def walk_params(self, optimized: bool | None = None) -> WalkParams:
        return WalkParams(decay=self.decay, max_distance=self.max_distance,
                          transaction_amount=self.transaction_amount, rng_seed=self.seed,
                          indexed=self.optimized if optimized is None else optimized)

    @classmethod
    def from_text(cls, text: str, **overrides) -> BenchConfig:
        """Parse a flat ``key=value`` file; list fields take comma-separated values."""
        types = {f.name: f for f in dataclasses.fields(cls)}
        values: dict = {}
        for lineno, raw in enumerate(text.splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            key, sep, value = (s.strip() for s in line.partition("="))
            if not sep or key not in types:
                raise ValidationError(f"config line {lineno}: unknown or malformed entry {raw!r}")
            values[key] = _parse_value(types[key], value, lineno)
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    @classmethod
    def from_file(cls, path: str | Path, **overrides) -> BenchConfig:
        return cls.from_text(Path(path).read_text(), **overrides)


def _parse_value(f: dataclasses.Field, value: str, lineno: int):
    kind = str(f.type)
    try:
        if kind.startswith("list"):
            return [int(float(v)) for v in value.split(",") if v.strip()]
        if kind == "bool":
            if value.lower() not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(value)
            return value.lower() in ("true", "1", "yes")
        if kind == "float":
            return float(value)
        return int(float(value)) if "e" in value.lower() else int(value, 0)
    except ValueError:
        raise ValidationError(f"config line {lineno}: bad value for {f.name}: {value!r}") from None


def generate_random_network(n: int, config: BenchConfig | None = None) -> LoanNetworkView:
    """Random loan graph: every node borrows from ``out_degree`` distinct other nodes.

    Node ``"0"`` is the payer/root. Reputations are uniform in [0, 1] (rounded
    to 6 digits), edge capacities are drawn from ``loan_capacities``. The
    stream is keyed by ``(seed, n)``.
    """
    cfg = config or BenchConfig()
    if n < 1:
        raise ValidationError("a network needs at least one node")
    rng = np.random.default_rng([cfg.seed & 0xFFFFFFFFFFFFFFFF, n])
    reps = np.round(rng.random(n), 6)
    reps[0] = cfg.root_reputation
    deg = min(cfg.out_degree, n - 1)
    borrowers = np.repeat(np.arange(n, dtype=np.int32), deg)
    if deg == 0:
        lenders = np.empty(0, dtype=np.int32)
    elif n - 1 <= 4 * deg:
        lenders = np.concatenate([
            (c := rng.choice(n - 1, deg, replace=False)) + (c >= b) for b in range(n)
        ]).astype(np.int32)
    else:
        draws = rng.integers(0, n - 1, size=(n, deg))
        while True:
            s = np.sort(draws, axis=1)
            dup = np.flatnonzero(np.any(s[:, 1:] == s[:, :-1], axis=1))
            if not len(dup):
                break
            draws[dup] = rng.integers(0, n - 1, size=(len(dup), deg))
        lenders = (draws + (draws >= np.arange(n)[:, None])).astype(np.int32).ravel()
    m = len(lenders)
    amounts = rng.choice(np.asarray(cfg.loan_capacities, dtype=np.int64), size=m)
    return LoanNetworkView(
        0, map(str, range(n)), reps, lenders, borrowers, amounts,
        durations=np.full(m, OPEN_FOREVER, dtype=np.int64), check=False,
    )


@dataclass
class BenchRow:
    nodes: int
    iterations: int
    optimized: bool
    wall_ms: float
    mean: float | None
    ci95_width: float | None

    @property
    def skipped(self) -> bool:
        return self.mean is None


BENCH_CSV_FIELDS = ["nodes", "iterations", "optimized", "wall_ms", "mean", "ci95_width"]


def time_estimate(view: LoanNetworkView, params: WalkParams, iterations: int,
                  budget_ms: float | None = None) -> tuple[float, ConfidenceEstimate | None]:
    """Wall time (ms) of a full estimate from the root; ``None`` if the budget ran out.

    Without a budget the walks run in one batch. With one, a single walk is
    timed first; if the projected total fits, the rest runs in one batch,
    otherwise chunks double in size until the budget is exceeded, in which
    case the returned time is a lower bound.
    """
    start = time.perf_counter()
    if budget_ms is None:
        values, _ = run_walks(view, ROOT, params, 0, iterations)
        est = ConfidenceEstimate.from_histogram(histogram(values), params.transaction_amount)
        return (time.perf_counter() - start) * 1e3, est
    parts, done, chunk = [], 0, 1
    while done < iterations:
        elapsed = (time.perf_counter() - start) * 1e3
        if done:
            if elapsed > budget_ms:
                return elapsed, None
            if elapsed / done * iterations <= budget_ms:
                chunk = iterations - done
        stop = min(iterations, done + chunk)
        parts.append(run_walks(view, ROOT, params, done, stop)[0])
        done, chunk = stop, chunk * 2
    est = ConfidenceEstimate.from_histogram(histogram(np.concatenate(parts)), params.transaction_amount)
    return (time.perf_counter() - start) * 1e3, est


def warm_up() -> None:
    """Trigger kernel compilation outside any timed region."""
    view = LoanNetworkView.simple({"0": 0.5, "1": 0.5}, [("1", "0", 10)])
    run_walks(view, "0", WalkParams(), 0, 2)


def run_benchmark(config: BenchConfig, *, both: bool = True,
                  budget_ms: float | None = None, repeats: int = 1) -> list[BenchRow]:
    """One row per (nodes, iterations, optimization setting).

    With ``repeats > 1`` each cell reports its median wall time; the
    statistical columns do not depend on it.
    """
    warm_up()
    settings = [True, False] if both else [config.optimized]
    rows: list[BenchRow] = []
    for n in config.node_counts:
        try:
            view = generate_random_network(n, config)
            view.in_order  # build the index outside the timed region
        except MemoryError:
            log.warning("skipping %d nodes: out of memory", n)
            rows.extend(BenchRow(n, k, opt, 0.0, None, None)
                        for k in config.iteration_counts for opt in settings)
            continue
        for k in config.iteration_counts:
            for opt in settings:
                try:
                    runs = []
                    for _ in range(max(1, repeats)):
                        runs.append(time_estimate(view, config.walk_params(opt), k, budget_ms))
                        if runs[-1][1] is None:
                            break
                    wall, est = runs[-1] if runs[-1][1] is None else \
                        (statistics.median(w for w, _ in runs), runs[0][1])
                except MemoryError:
                    wall, est = 0.0, None
                rows.append(BenchRow(n, k, opt, wall, est and est.mean, est and est.ci95_width))
                log.info("n=%d K=%d optimized=%s %.2f ms", n, k, opt, wall)
        del view
    return rows


def write_bench_csv(rows: Iterable[BenchRow], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(BENCH_CSV_FIELDS)
    for r in rows:
        w.writerow([r.nodes, r.iterations, str(r.optimized).lower(), f"{r.wall_ms:.3f}",
                    "skipped" if r.skipped else f"{r.mean:.6f}",
                    "skipped" if r.skipped else f"{r.ci95_width:.6f}"])
