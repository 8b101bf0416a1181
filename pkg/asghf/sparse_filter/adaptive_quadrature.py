"""
Dimension-adaptive sparse-grid quadrature.

The admissible index set grows greedily: the active index with the largest
local error indicator moves to the old set and its admissible forward
neighbours become active, until the global error estimate (sum of active
indicators) drops to the tolerance. Every point/weight touched on the way
is compiled into a reusable grid.
"""
from __future__ import annotations
from dataclasses import dataclass, field, asdict, replace
from typing import Callable, Dict, Iterable, List, Optional, Tuple
import json
import logging
import math
from pathlib import Path

import numpy as np

from asghf.sparse_filter.cache import EvaluationCache
from asghf.sparse_filter.errors import InvalidArgumentError
from asghf.sparse_filter.tensor_smolyak import (
    MultiIndex, WeightedGrid, combine_increments, difference_increment,
)

logger = logging.getLogger(__name__)

WORK_MEASURES = ("increment", "tensor")
ZERO_REFERENCE_POLICIES = ("unit", "drop")
ZERO_REFERENCE_THRESHOLD = 1e-300


# -----------------------------------------------------------
# Configuration
# -----------------------------------------------------------

@dataclass(frozen=True)
class AdaptConfig:
    """
    psi: error weighting parameter ψ ∈ [0, 1]
    tol: tolerance on the global error estimate
    work: ϖ_λ convention: "increment" counts every evaluation of the signed
           tensor expansion of Δ_λ, "tensor" counts Π(2λ_j - 1)
    zero_reference: what to do when ‖Δ_I1 f‖₁ vanishes: "unit" normalizes
           by 1 (absolute increments), "drop" zeroes the ratio term

    psi=1 drops the cost term, so g_λ = 0 wherever Δ_λ f vanishes. An
    integrand whose first increments all vanish (odd in every direction,
    e.g. ξ1·ξ2) then stops after one iteration with ℧ = 0; use psi < 1 to
    keep refining such integrands.
    """
    psi: float = 0.5
    tol: float = 0.5
    max_indices: int = 10_000
    max_evals: int = 1_000_000
    work: str = "increment"
    zero_reference: str = "unit"

    def __post_init__(self):
        if not (0.0 <= self.psi <= 1.0):
            raise InvalidArgumentError(f"psi must lie in [0, 1], got {self.psi}")
        if not (self.tol > 0.0):
            raise InvalidArgumentError(f"tol must be positive, got {self.tol}")
        if self.max_indices < 1 or self.max_evals < 1:
            raise InvalidArgumentError("Budgets must be positive")
        if self.work not in WORK_MEASURES:
            raise InvalidArgumentError(f"Unknown work measure {self.work!r}")
        if self.zero_reference not in ZERO_REFERENCE_POLICIES:
            raise InvalidArgumentError(f"Unknown zero_reference policy {self.zero_reference!r}")

    def to_dict(self) -> dict:
        return asdict(self)


# -----------------------------------------------------------
# Index-set helpers
# -----------------------------------------------------------

def forward_indices(index: MultiIndex) -> List[MultiIndex]:
    return [index.shifted(j, 1) for j in range(index.dimension)]


def backward_indices(index: MultiIndex) -> List[MultiIndex]:
    return [index.shifted(j, -1) for j in range(index.dimension) if index[j] > 1]


def is_admissible_insertion(old: Iterable[MultiIndex], index: MultiIndex) -> bool:
    """True iff every backward index of `index` is already in `old`."""
    old = old if isinstance(old, (set, frozenset)) else set(old)
    return all(b in old for b in backward_indices(index))


def is_admissible_set(indices: Iterable[MultiIndex]) -> bool:
    """Downward-closed check on a whole index set."""
    members = set(indices)
    return all(is_admissible_insertion(members, index) for index in members)


def work_of(index: MultiIndex, measure: str = "increment") -> int:
    if measure == "increment":
        return index.increment_size()
    if measure == "tensor":
        return index.tensor_size()
    raise InvalidArgumentError(f"Unknown work measure {measure!r}")


def local_error_indicator(index: MultiIndex, increment: np.ndarray, reference: np.ndarray,
                          work: int, psi: float, zero_reference: str = "unit") -> float:
    """
    g_λ = max(ψ ‖Δ_λ f‖₁ / ‖Δ_I1 f‖₁, (1 - ψ) ϖ_I1 / ϖ_λ), ϖ_I1 = 1.
    """
    if not (0.0 <= psi <= 1.0):
        raise InvalidArgumentError(f"psi must lie in [0, 1], got {psi}")
    if work < 1:
        raise InvalidArgumentError(f"Work count must be >= 1 for {index}, got {work}")
    numerator = float(np.sum(np.abs(increment)))
    denominator = float(np.sum(np.abs(reference)))
    if denominator < ZERO_REFERENCE_THRESHOLD:
        if zero_reference == "drop":
            ratio_term = 0.0
        else:
            ratio_term = psi * numerator
    else:
        ratio_term = psi * numerator / denominator
    cost_term = (1.0 - psi) / work
    return max(ratio_term, cost_term)


# -----------------------------------------------------------
# State / report / compiled grid
# -----------------------------------------------------------

@dataclass
class IndexSetState:
    dimension: int
    active: List[MultiIndex] = field(default_factory=list)
    old: List[MultiIndex] = field(default_factory=list)
    increments: Dict[MultiIndex, np.ndarray] = field(default_factory=dict)
    indicators: Dict[MultiIndex, float] = field(default_factory=dict)
    global_error: float = math.inf
    running_integral: Optional[np.ndarray] = None
    eval_count: int = 0

    def union(self) -> List[MultiIndex]:
        return list(self.old) + list(self.active)

    def active_error_sum(self) -> float:
        return math.fsum(self.indicators[index] for index in self.active)


@dataclass
class TraceStep:
    iteration: int
    selected: MultiIndex
    added: List[MultiIndex]
    global_error: float


@dataclass
class AdaptationReport:
    index_count: int
    point_count: int
    eval_count: int
    final_global_error: float
    budget_exhausted: bool
    iterations: int
    warnings: List[str] = field(default_factory=list)
    trace: List[TraceStep] = field(default_factory=list)

    def summary(self) -> dict:
        return {
            "index_count": self.index_count,
            "point_count": self.point_count,
            "eval_count": self.eval_count,
            "final_global_error": self.final_global_error,
            "budget_exhausted": self.budget_exhausted,
            "iterations": self.iterations,
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True, eq=False)
class CompiledGrid:
    grid: WeightedGrid
    indices: Tuple[MultiIndex, ...]
    metadata: dict = field(default_factory=dict)

    @property
    def dimension(self) -> int:
        return self.grid.dimension

    @property
    def size(self) -> int:
        return self.grid.size

    def sidecar(self) -> dict:
        data = {
            "dimension": self.dimension,
            "point_count": self.size,
            "index_count": len(self.indices),
            "indices": [list(index.levels) for index in self.indices],
        }
        data.update(self.metadata)
        return data

    def save(self, prefix) -> Tuple[Path, Path]:
        """Writes <prefix>.csv (grid dump) and <prefix>.json (sidecar)."""
        prefix = Path(prefix)
        csv_path = self.grid.to_csv(prefix.with_suffix(".csv"))
        json_path = prefix.with_suffix(".json")
        with open(json_path, "w", encoding="utf-8") as fh:
            json.dump(self.sidecar(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        return csv_path, json_path

    @classmethod
    def load(cls, prefix) -> "CompiledGrid":
        prefix = Path(prefix)
        grid = WeightedGrid.from_csv(prefix.with_suffix(".csv"))
        with open(prefix.with_suffix(".json"), "r", encoding="utf-8") as fh:
            data = json.load(fh)
        indices = tuple(MultiIndex(tuple(levels)) for levels in data.pop("indices", []))
        for key in ("dimension", "point_count", "index_count"):
            data.pop(key, None)
        return cls(grid=grid, indices=indices, metadata=data)


def compile_grid(state: IndexSetState) -> CompiledGrid:
    """Merge the expansions of Δ_λ over old ∪ active into one grid."""
    indices = tuple(sorted(state.union()))
    return CompiledGrid(grid=combine_increments(indices), indices=indices)


# -----------------------------------------------------------
# Adaptation loop
# -----------------------------------------------------------

def _increment_value(index: MultiIndex, cache: EvaluationCache) -> np.ndarray:
    grid = difference_increment(index)
    values = cache.evaluate(grid.points)
    return grid.weights @ values


def adapt(f: Callable[[np.ndarray], np.ndarray], n: int, cfg: AdaptConfig,
          on_step: Optional[Callable[[IndexSetState], None]] = None,
          ) -> Tuple[CompiledGrid, IndexSetState, AdaptationReport]:
    """
    Greedy dimension-adaptive integration of f against N(0, I_n).

    f gets an (N, n) batch of standard-normal points and returns (N,) or
    (N, d). Ties between equal indicators go to the index that entered the
    active set first. Exhausted budgets end the loop with
    report.budget_exhausted set.
    """
    if n < 1:
        raise InvalidArgumentError(f"Dimension must be >= 1, got {n}")

    cache = EvaluationCache(f)
    warnings: List[str] = []
    trace: List[TraceStep] = []

    first = MultiIndex.ones(n)
    reference = _increment_value(first, cache)
    if float(np.sum(np.abs(reference))) < ZERO_REFERENCE_THRESHOLD:
        message = (
            f"Reference increment vanishes (f at the origin is 0); "
            f"zero_reference={cfg.zero_reference!r}"
        )
        logger.warning(message)
        warnings.append(message)

    def indicator(index: MultiIndex, increment: np.ndarray) -> float:
        return local_error_indicator(index, increment, reference, work_of(index, cfg.work),
                                     cfg.psi, cfg.zero_reference)

    state = IndexSetState(dimension=n)
    state.active.append(first)
    state.increments[first] = reference
    state.indicators[first] = indicator(first, reference)
    state.running_integral = reference.copy()
    state.eval_count = len(cache)
    # ℧ = +inf: перша ітерація виконується завжди
    state.global_error = math.inf

    old_members = set()
    exhausted = False
    iteration = 0

    while state.global_error > cfg.tol and state.active:
        if len(old_members) + len(state.active) >= cfg.max_indices or len(cache) >= cfg.max_evals:
            exhausted = True
            break
        iteration += 1

        # max() віддає перший із рівних, тобто найраніше доданий в A
        selected = max(state.active, key=lambda index: state.indicators[index])
        state.active.remove(selected)
        state.old.append(selected)
        old_members.add(selected)

        added = []
        for candidate in forward_indices(selected):
            if candidate in state.increments:
                continue
            if not is_admissible_insertion(old_members, candidate):
                continue
            increment = _increment_value(candidate, cache)
            state.increments[candidate] = increment
            state.indicators[candidate] = indicator(candidate, increment)
            state.running_integral = state.running_integral + increment
            state.active.append(candidate)
            added.append(candidate)

        state.global_error = state.active_error_sum()
        state.eval_count = len(cache)
        trace.append(TraceStep(iteration, selected, added, state.global_error))
        logger.debug("iter %d: selected %r, added %r, error %.6g",
                     iteration, selected, added, state.global_error)
        if on_step is not None:
            on_step(state)

    # ℧ = Σ g по A і тоді, коли бюджет зупинив цикл до першої ітерації
    state.global_error = state.active_error_sum() if state.active else 0.0

    compiled = compile_grid(state)
    report = AdaptationReport(
        index_count=len(state.old) + len(state.active),
        point_count=compiled.size,
        eval_count=state.eval_count,
        final_global_error=state.global_error,
        budget_exhausted=exhausted,
        iterations=iteration,
        warnings=warnings,
        trace=trace,
    )
    compiled = replace(compiled, metadata={
        "psi": cfg.psi,
        "tol": cfg.tol,
        "work": cfg.work,
        "final_global_error": report.final_global_error,
        "budget_exhausted": report.budget_exhausted,
    })
    logger.info("adapt(n=%d, psi=%g, tol=%g): %d indices, %d points, error %.6g%s",
                n, cfg.psi, cfg.tol, report.index_count, report.point_count,
                report.final_global_error, " (budget exhausted)" if exhausted else "")
    return compiled, state, report
