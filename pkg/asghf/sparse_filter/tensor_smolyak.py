from __future__ import annotations
from dataclasses import dataclass
from typing import Callable, Iterable, Iterator, List, Sequence, Tuple
import csv
import itertools
from pathlib import Path

import numpy as np

from asghf.sparse_filter.cache import quantize_points
from asghf.sparse_filter.errors import InvalidArgumentError, NumericalEvaluationError
from asghf.sparse_filter.gh_univariate import Rule1D, gauss_hermite_rule, rule_for_level
from asghf.sparse_filter.utils import format_float

CANCELLATION_TOLERANCE = 1e-13


# -----------------------------------------------------------
# MultiIndex
# -----------------------------------------------------------

@dataclass(frozen=True, order=True)
class MultiIndex:
    """Вектор рівнів (λ1, ..., λn), кожен рівень >= 1."""
    levels: Tuple[int, ...]

    def __post_init__(self):
        levels = tuple(int(l) for l in self.levels)
        if len(levels) < 1:
            raise InvalidArgumentError("MultiIndex needs at least one dimension")
        if any(l < 1 for l in levels):
            raise InvalidArgumentError(f"MultiIndex levels must be >= 1, got {levels}")
        object.__setattr__(self, "levels", levels)

    @classmethod
    def of(cls, *levels: int) -> "MultiIndex":
        return cls(tuple(levels))

    @classmethod
    def ones(cls, dimension: int) -> "MultiIndex":
        return cls((1,) * dimension)

    @property
    def dimension(self) -> int:
        return len(self.levels)

    def __len__(self) -> int:
        return len(self.levels)

    def __iter__(self) -> Iterator[int]:
        return iter(self.levels)

    def __getitem__(self, j: int) -> int:
        return self.levels[j]

    def __repr__(self) -> str:
        return "(" + ",".join(str(l) for l in self.levels) + ")"

    def total(self) -> int:
        return sum(self.levels)

    def shifted(self, j: int, delta: int) -> "MultiIndex":
        levels = list(self.levels)
        levels[j] += delta
        return MultiIndex(tuple(levels))

    def tensor_size(self) -> int:
        """Кількість точок тензорного правила I_λ1 ⊗ ... ⊗ I_λn."""
        return int(np.prod([2 * l - 1 for l in self.levels]))

    def increment_size(self) -> int:
        """Total evaluations of the signed tensor expansion of Δ_λ (no merging)."""
        work = 1
        for l in self.levels:
            work *= (2 * l - 1) + (2 * l - 3 if l > 1 else 0)
        return work


# -----------------------------------------------------------
# WeightedGrid
# -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class WeightedGrid:
    """
    Points in standard-normal space with (possibly negative) weights.
    Arrays are made read-only on construction.
    """
    points: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        points = np.array(self.points, dtype=float, copy=True)
        weights = np.array(self.weights, dtype=float, copy=True).reshape(-1)
        if points.ndim != 2:
            raise InvalidArgumentError(f"Grid points must be 2-D, got shape {points.shape}")
        if points.shape[0] != weights.shape[0]:
            raise InvalidArgumentError(
                f"{points.shape[0]} points but {weights.shape[0]} weights"
            )
        points.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "points", points)
        object.__setattr__(self, "weights", weights)

    @property
    def dimension(self) -> int:
        return self.points.shape[1]

    @property
    def size(self) -> int:
        return self.points.shape[0]

    def __len__(self) -> int:
        return self.size

    def weight_sum(self) -> float:
        return float(np.sum(self.weights))

    def merged(self) -> "WeightedGrid":
        points, weights = merge_entries(self.points, self.weights)
        return WeightedGrid(points, weights)

    @classmethod
    def concatenate(cls, grids: Sequence["WeightedGrid"], signs: Sequence[float] = None) -> "WeightedGrid":
        if not grids:
            raise InvalidArgumentError("Nothing to concatenate")
        if signs is None:
            signs = [1.0] * len(grids)
        points = np.vstack([g.points for g in grids])
        weights = np.concatenate([s * g.weights for g, s in zip(grids, signs)])
        return cls(points, weights)

    # -------------------------------------------------------
    # CSV dump: x1,...,xn,weight
    # -------------------------------------------------------
    def to_csv(self, path) -> Path:
        path = Path(path)
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([f"x{j + 1}" for j in range(self.dimension)] + ["weight"])
            for point, weight in zip(self.points, self.weights):
                writer.writerow([format_float(v) for v in point] + [format_float(weight)])
        return path

    @classmethod
    def from_csv(cls, path) -> "WeightedGrid":
        with open(path, "r", encoding="utf-8", newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[-1] != "weight":
                raise InvalidArgumentError(f"Not a grid dump: {path}")
            rows = [[float(v) for v in row] for row in reader if row]
        data = np.array(rows, dtype=float).reshape(-1, len(header))
        return cls(data[:, :-1], data[:, -1])


def merge_entries(points: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Зливає точки, що збігаються (по координатах з точністю 1e-12),
    сумуючи ваги. Порядок результату лексикографічний.

    Points whose contributions cancel (|Σw| <= 1e-13 · Σ|w|) are dropped:
    telescoping leaves lower-level nodes of non-nested rules with zero weight.
    """
    if len(points) == 0:
        return points, weights
    keys = quantize_points(points)
    _, first, inverse = np.unique(keys, axis=0, return_index=True, return_inverse=True)
    inverse = inverse.reshape(-1)
    merged_weights = np.bincount(inverse, weights=weights, minlength=len(first))
    magnitude = np.bincount(inverse, weights=np.abs(weights), minlength=len(first))
    keep = np.abs(merged_weights) > CANCELLATION_TOLERANCE * magnitude
    return points[first][keep], merged_weights[keep]


# -----------------------------------------------------------
# Tensor rules
# -----------------------------------------------------------

def product_rule(rules: Sequence[Rule1D]) -> WeightedGrid:
    """Cartesian product of univariate rules, first dimension slowest."""
    if not rules:
        raise InvalidArgumentError("Product of zero rules")
    node_axes = np.meshgrid(*[r.nodes_array() for r in rules], indexing="ij")
    weight_axes = np.meshgrid(*[r.weights_array() for r in rules], indexing="ij")
    points = np.stack([axis.reshape(-1) for axis in node_axes], axis=1)
    weights = np.prod(np.stack([axis.reshape(-1) for axis in weight_axes], axis=1), axis=1)
    return WeightedGrid(points, weights)


def tensor_rule(index: MultiIndex) -> WeightedGrid:
    return product_rule([rule_for_level(l) for l in index])


def full_tensor_grid(dimension: int, points_per_dim: int) -> WeightedGrid:
    """GH_t: t-point Gauss-Hermite rule in every dimension (t^n points)."""
    if dimension < 1:
        raise InvalidArgumentError(f"Dimension must be >= 1, got {dimension}")
    rule = gauss_hermite_rule(points_per_dim)
    return product_rule([rule] * dimension)


# -----------------------------------------------------------
# Difference increments Δ_λ
# -----------------------------------------------------------

def expand_increment(index: MultiIndex) -> List[Tuple[float, MultiIndex]]:
    """
    Signed tensor terms of Δ_λ = ⊗_j (I_λj - I_λj-1), I_0 = 0.
    2^c terms, c = number of components above 1.
    """
    choices = []
    for l in index:
        if l > 1:
            choices.append(((l, 1.0), (l - 1, -1.0)))
        else:
            choices.append(((1, 1.0),))
    terms = []
    for combo in itertools.product(*choices):
        sign = float(np.prod([s for _, s in combo]))
        terms.append((sign, MultiIndex(tuple(l for l, _ in combo))))
    return terms


def unmerged_increment(index: MultiIndex) -> WeightedGrid:
    terms = expand_increment(index)
    return WeightedGrid.concatenate(
        [tensor_rule(term) for _, term in terms],
        [sign for sign, _ in terms],
    )


def difference_increment(index: MultiIndex) -> WeightedGrid:
    return unmerged_increment(index).merged()


# -----------------------------------------------------------
# Smolyak
# -----------------------------------------------------------

def _compositions(total: int, parts: int) -> Iterator[Tuple[int, ...]]:
    # усі розбиття total на parts доданків >= 1, у лексикографічному порядку
    if parts == 1:
        yield (total,)
        return
    for first in range(1, total - parts + 2):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def enumerate_Nqn(n: int, q: int) -> List[MultiIndex]:
    """All λ with |λ| = n + q (empty for q < 0), lexicographic order."""
    if n < 1:
        raise InvalidArgumentError(f"Dimension must be >= 1, got {n}")
    if q < 0:
        return []
    return [MultiIndex(c) for c in _compositions(n + q, n)]


def smolyak_indices(n: int, level: int) -> List[MultiIndex]:
    """Index set {λ : |λ| <= n + L - 1} of the Smolyak rule of accuracy level L."""
    if level < 1:
        raise InvalidArgumentError(f"Accuracy level must be >= 1, got {level}")
    indices: List[MultiIndex] = []
    for q in range(0, level):
        indices.extend(enumerate_Nqn(n, q))
    return indices


def combine_increments(indices: Iterable[MultiIndex]) -> WeightedGrid:
    """Σ_λ Δ_λ over an index set, merged into one deduplicated grid."""
    parts = [unmerged_increment(index) for index in indices]
    return WeightedGrid.concatenate(parts).merged()


def smolyak_grid(n: int, level: int) -> WeightedGrid:
    return combine_increments(smolyak_indices(n, level))


# -----------------------------------------------------------
# Integration
# -----------------------------------------------------------

def evaluate_integrand(f: Callable[[np.ndarray], np.ndarray], points: np.ndarray) -> np.ndarray:
    """f on a batch of points -> (N, d) array; rejects non-finite rows."""
    values = np.asarray(f(points), dtype=float).reshape(points.shape[0], -1)
    bad = ~np.all(np.isfinite(values), axis=1)
    if np.any(bad):
        point = points[int(np.argmax(bad))]
        raise NumericalEvaluationError(
            f"Non-finite integrand value at point {point.tolist()}", point=point
        )
    return values


def apply_grid(grid: WeightedGrid, f: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    """
    Σ w_i f(ξ_i). f receives all grid points at once as an (N, n) array
    and returns (N,) or (N, d); the result is a d-vector.
    """
    values = evaluate_integrand(f, grid.points)
    return grid.weights @ values
