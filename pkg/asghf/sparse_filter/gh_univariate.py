"""
Univariate Gauss-Hermite rules for the standard normal weight N(0, 1).

Nodes are eigenvalues of the Jacobi matrix of the probabilists' Hermite
polynomials, weights are squared first components of the normalized
eigenvectors (Golub-Welsch). Level l of the sparse-grid construction
uses the (2l - 1)-point rule.
"""
from __future__ import annotations
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.linalg import eigh_tridiagonal

from asghf.sparse_filter.cache import RuleCache
from asghf.sparse_filter.errors import InvalidArgumentError


# -----------------------------------------------------------
# Rule1D
# -----------------------------------------------------------

@dataclass(frozen=True)
class Rule1D:
    nodes: Tuple[float, ...]
    weights: Tuple[float, ...]
    level: Optional[int] = None

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def size(self) -> int:
        return len(self.nodes)

    def nodes_array(self) -> np.ndarray:
        return np.array(self.nodes, dtype=float)

    def weights_array(self) -> np.ndarray:
        return np.array(self.weights, dtype=float)

    def integrate(self, f) -> float:
        """Σ w_j f(x_j); f must accept a 1-D array of nodes."""
        return float(np.dot(self.weights_array(), f(self.nodes_array())))


# -----------------------------------------------------------
# Golub-Welsch
# -----------------------------------------------------------

def gauss_hermite_rule(m: int) -> Rule1D:
    """
    m-point Gauss-Hermite rule, exact for polynomials up to degree 2m-1
    against N(0, 1). The returned rule has no level attached.
    """
    if m < 1:
        raise InvalidArgumentError(f"Point count must be >= 1, got {m}")
    if m == 1:
        return Rule1D(nodes=(0.0,), weights=(1.0,))

    diagonal = np.zeros(m)
    off_diagonal = np.sqrt(np.arange(1, m, dtype=float))
    nodes, vectors = eigh_tridiagonal(diagonal, off_diagonal)
    weights = vectors[0, :] ** 2

    order = np.argsort(nodes)
    nodes = nodes[order]
    weights = weights[order]

    # x_j та -x_{m+1-j} усереднюємо, щоб непарні моменти були рівно нулем
    nodes = 0.5 * (nodes - nodes[::-1])
    weights = 0.5 * (weights + weights[::-1])
    weights = weights / weights.sum()

    return Rule1D(nodes=tuple(nodes.tolist()), weights=tuple(weights.tolist()))


# -----------------------------------------------------------
# Level -> rule
# -----------------------------------------------------------

_LEVEL_CACHE = RuleCache()


def points_for_level(level: int) -> int:
    return 2 * level - 1


def _build_level_rule(level: int) -> Rule1D:
    base = gauss_hermite_rule(points_for_level(level))
    return Rule1D(nodes=base.nodes, weights=base.weights, level=level)


def rule_for_level(level: int) -> Rule1D:
    """Cached (2l - 1)-point rule tagged with level l."""
    if level < 1:
        raise InvalidArgumentError(f"Level must be >= 1, got {level}")
    return _LEVEL_CACHE.get_or_build(level, lambda: _build_level_rule(level))


def level_cache_stats() -> dict:
    return _LEVEL_CACHE.stats()
