"""
Quadrature-driven Gaussian filter.

One predict/update recursion, parameterized by where the unit-Gaussian
grid comes from:

  FullTensorSource(points=t)  -> GHF   (t^n points)
  SmolyakSource(level=L)      -> SGHF
  AdaptiveSource(...)         -> ASGHF (grids compiled offline by adapt())
  FixedGridSource(grid)       -> any pre-built grid

Sparse grids carry negative weights, so weighted sample covariances can
come out indefinite. They are projected back onto the PSD cone
(project_psd) before they enter the recursion; all sources share that path.
"""
from __future__ import annotations
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple
import logging

import numpy as np
from scipy.linalg import LinAlgError, cho_solve, cholesky, eigh

from asghf.sparse_filter.adaptive_quadrature import AdaptConfig, AdaptationReport, adapt
from asghf.sparse_filter.cache import get_grid_cache
from asghf.sparse_filter.errors import (
    FilterError, InvalidArgumentError, NonPSDCovarianceError, SingularInnovationError,
)
from asghf.sparse_filter.tensor_smolyak import WeightedGrid, full_tensor_grid, smolyak_grid
from asghf.sparse_filter.utils import symmetrize, wrap_angle

logger = logging.getLogger(__name__)

JITTER_SCALE = 1e-9
JITTER_RETRIES = 3
# власні числа нижче -PSD_TOLERANCE·max|λ| вважаються справжньою індефінітністю
PSD_TOLERANCE = 1e-10
POSTERIOR_FLOOR = 1e-12

ModelFunction = Callable[[np.ndarray, int], np.ndarray]

_repaired: Set[str] = set()


# -----------------------------------------------------------
# Belief / model
# -----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GaussianBelief:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float).reshape(-1)
        cov = np.array(self.cov, dtype=float)
        if cov.shape != (mean.size, mean.size):
            raise InvalidArgumentError(
                f"Covariance shape {cov.shape} does not match mean of size {mean.size}"
            )
        cov = symmetrize(cov)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @classmethod
    def trusted(cls, mean: np.ndarray, cov: np.ndarray) -> "GaussianBelief":
        """Wraps freshly computed filter arrays (1-D mean, symmetric cov) without copying."""
        belief = object.__new__(cls)
        mean.setflags(write=False)
        cov.setflags(write=False)
        object.__setattr__(belief, "mean", mean)
        object.__setattr__(belief, "cov", cov)
        return belief

    @property
    def dimension(self) -> int:
        return self.mean.size

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.mean)) and np.all(np.isfinite(self.cov)))


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """
    x_k = φ(x_{k-1}) + w_k,  y_k = γ(x_k) + v_k,  w ~ N(0, Q), v ~ N(0, R).

    process / measurement take an (N, n) batch and the 1-based step k.
    angular flags measurement components whose residuals wrap to (-π, π];
    their predicted mean is taken on the circle.
    """
    state_dim: int
    meas_dim: int
    process: ModelFunction
    measurement: ModelFunction
    Q: np.ndarray
    R: np.ndarray
    angular: Tuple[bool, ...] = ()
    name: str = "model"

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        R = np.array(self.R, dtype=float)
        if Q.shape != (self.state_dim, self.state_dim):
            raise InvalidArgumentError(f"Q must be {self.state_dim}x{self.state_dim}, got {Q.shape}")
        if R.shape != (self.meas_dim, self.meas_dim):
            raise InvalidArgumentError(f"R must be {self.meas_dim}x{self.meas_dim}, got {R.shape}")
        if not np.allclose(Q, Q.T, atol=1e-12) or not np.allclose(R, R.T, atol=1e-12):
            raise InvalidArgumentError("Q and R must be symmetric")
        angular = tuple(bool(a) for a in self.angular) or (False,) * self.meas_dim
        if len(angular) != self.meas_dim:
            raise InvalidArgumentError("angular flags must match the measurement dimension")
        Q.setflags(write=False)
        R.setflags(write=False)
        object.__setattr__(self, "Q", Q)
        object.__setattr__(self, "R", R)
        object.__setattr__(self, "angular", angular)

    def propagate(self, states: np.ndarray, k: int) -> np.ndarray:
        out = np.asarray(self.process(np.atleast_2d(states), k), dtype=float)
        return out.reshape(-1, self.state_dim)

    def measure(self, states: np.ndarray, k: int) -> np.ndarray:
        out = np.asarray(self.measurement(np.atleast_2d(states), k), dtype=float)
        return out.reshape(-1, self.meas_dim)

    def wrap_residual(self, residual: np.ndarray) -> np.ndarray:
        if not any(self.angular):
            return residual
        residual = np.array(residual, dtype=float, copy=True)
        mask = np.array(self.angular)
        residual[..., mask] = wrap_angle(residual[..., mask])
        return residual

    def measurement_mean(self, weights: np.ndarray, predicted: np.ndarray) -> np.ndarray:
        """Σ w γ(χ); angular components use atan2(Σ w sin, Σ w cos)."""
        mean = weights @ predicted
        if any(self.angular):
            mask = np.array(self.angular)
            angles = predicted[:, mask]
            mean[mask] = np.arctan2(weights @ np.sin(angles), weights @ np.cos(angles))
        return mean


# -----------------------------------------------------------
# Square-root factor with jitter ladder
# -----------------------------------------------------------

def _factor_with_jitter(matrix: np.ndarray, error_cls, what: str) -> np.ndarray:
    matrix = symmetrize(np.asarray(matrix, dtype=float))
    try:
        return cholesky(matrix, lower=True, check_finite=False)
    except LinAlgError:
        pass

    n = matrix.shape[0]
    scale = np.trace(matrix) / n
    epsilon = JITTER_SCALE * (scale if scale > 0 else 1.0)
    for attempt in range(JITTER_RETRIES + 1):
        log = logger.debug if attempt == 0 else logger.warning
        log("%s not positive definite, retrying with jitter %.3g", what, epsilon)
        try:
            return cholesky(matrix + epsilon * np.eye(n), lower=True, check_finite=False)
        except LinAlgError:
            epsilon *= 10.0
    raise error_cls(f"{what} is not positive semi-definite", matrix=matrix)


def sqrt_factor(cov: np.ndarray) -> np.ndarray:
    """Lower-triangular S with S Sᵀ = cov (jitter ε·I, ε = 1e-9·tr/n, ×10 up to 3 times)."""
    return _factor_with_jitter(cov, NonPSDCovarianceError, "Covariance")


def project_psd(matrix: np.ndarray, what: str = "Covariance", floor: float = 0.0) -> np.ndarray:
    """
    Symmetric part of `matrix`, with eigenvalues below -PSD_TOLERANCE·max|λ|
    lifted to floor·max|λ|. Matrices that are PSD up to round-off come back
    unchanged; non-finite input is passed through for the caller to reject.
    """
    matrix = symmetrize(matrix)
    if not np.all(np.isfinite(matrix)):
        return matrix
    values, vectors = eigh(matrix, check_finite=False)
    scale = float(np.max(np.abs(values)))
    if values[0] >= -PSD_TOLERANCE * scale:
        return matrix
    if what in _repaired:
        logger.debug("%s indefinite (min eigenvalue %.3g), clipped", what, values[0])
    else:
        _repaired.add(what)
        logger.warning("%s indefinite (min eigenvalue %.3g of %.3g), clipping to the PSD cone",
                       what, values[0], scale)
    clipped = np.maximum(values, floor * scale)
    return symmetrize((vectors * clipped) @ vectors.T)


def standardized(f: ModelFunction, mean: np.ndarray, factor: np.ndarray,
                 k: int = 1) -> Callable[[np.ndarray], np.ndarray]:
    """ξ ↦ f(m + S ξ, k), the pull-back of f to unit-Gaussian coordinates."""
    mean = np.asarray(mean, dtype=float)
    factor = np.asarray(factor, dtype=float)

    def pulled_back(xi: np.ndarray) -> np.ndarray:
        return f(mean + np.atleast_2d(xi) @ factor.T, k)

    return pulled_back


# -----------------------------------------------------------
# Predict / update
# -----------------------------------------------------------

def _sigma_points(belief: GaussianBelief, grid: WeightedGrid) -> np.ndarray:
    if grid.dimension != belief.dimension:
        raise InvalidArgumentError(
            f"Grid dimension {grid.dimension} does not match state dimension {belief.dimension}"
        )
    factor = sqrt_factor(belief.cov)
    return belief.mean + grid.points @ factor.T


def _weighted_cov(a: np.ndarray, b: np.ndarray, weights: np.ndarray) -> np.ndarray:
    return (a * weights[:, None]).T @ b


def predict(belief: GaussianBelief, model: StateSpaceModel, grid: WeightedGrid,
            k: int = 1) -> GaussianBelief:
    chi = _sigma_points(belief, grid)
    propagated = model.propagate(chi, k)
    weights = grid.weights
    mean = weights @ propagated
    deviation = propagated - mean
    spread = project_psd(_weighted_cov(deviation, deviation, weights), "Predicted sample covariance")
    return GaussianBelief.trusted(mean, spread + model.Q)


def update(pred: GaussianBelief, y: np.ndarray, model: StateSpaceModel, grid: WeightedGrid,
           k: int = 1) -> GaussianBelief:
    """
    Measurement update. The joint sample covariance of (x, y) is projected
    as one block, so the posterior is a Schur complement of a PSD matrix.
    """
    chi = _sigma_points(pred, grid)
    predicted_y = model.measure(chi, k)
    weights = grid.weights

    y_hat = model.measurement_mean(weights, predicted_y)
    dy = model.wrap_residual(predicted_y - y_hat)
    dx = chi - pred.mean
    n = pred.dimension
    joint = np.empty((n + model.meas_dim, n + model.meas_dim))
    joint[:n, :n] = pred.cov
    joint[:n, n:] = _weighted_cov(dx, dy, weights)
    joint[n:, :n] = joint[:n, n:].T
    joint[n:, n:] = _weighted_cov(dy, dy, weights)
    joint = project_psd(joint, "Joint predicted covariance")
    P_xx, P_xy = joint[:n, :n], joint[:n, n:]
    P_yy = joint[n:, n:] + model.R

    factor = _factor_with_jitter(P_yy, SingularInnovationError, "Innovation covariance")
    gain = cho_solve((factor, True), P_xy.T, check_finite=False).T

    innovation = model.wrap_residual(np.asarray(y, dtype=float).reshape(-1) - y_hat)
    mean = pred.mean + gain @ innovation
    cov = project_psd(P_xx - gain @ P_xy.T, "Posterior covariance", floor=POSTERIOR_FLOOR)
    return GaussianBelief.trusted(mean, cov)


# -----------------------------------------------------------
# Grid sources
# -----------------------------------------------------------

@dataclass
class FilterGrids:
    process: WeightedGrid
    measurement: WeightedGrid
    reports: Dict[str, AdaptationReport] = field(default_factory=dict)

    def point_counts(self) -> Dict[str, int]:
        return {
            "process": self.process.size,
            "measurement": self.measurement.size,
            "per_step": self.process.size + self.measurement.size,
        }


class GridSource:
    label = "grid"

    def build(self, model: StateSpaceModel, belief: GaussianBelief, k: int) -> FilterGrids:
        raise NotImplementedError

    def refresh_due(self, k: int) -> bool:
        return False

    def describe(self) -> dict:
        return {"source": self.label}


@dataclass
class FullTensorSource(GridSource):
    points: int = 3
    label = "ghf"

    def build(self, model, belief, k):
        grid = get_grid_cache().get_or_build(
            "tensor", model.state_dim, self.points,
            lambda: full_tensor_grid(model.state_dim, self.points),
        )
        return FilterGrids(grid, grid)

    def describe(self):
        return {"source": self.label, "points": self.points}


@dataclass
class SmolyakSource(GridSource):
    level: int = 3
    label = "sghf"

    def build(self, model, belief, k):
        grid = get_grid_cache().get_or_build(
            "smolyak", model.state_dim, self.level,
            lambda: smolyak_grid(model.state_dim, self.level),
        )
        return FilterGrids(grid, grid)

    def describe(self):
        return {"source": self.label, "level": self.level}


@dataclass
class FixedGridSource(GridSource):
    process_grid: WeightedGrid = None
    measurement_grid: Optional[WeightedGrid] = None
    label = "fixed"

    def build(self, model, belief, k):
        return FilterGrids(self.process_grid, self.measurement_grid or self.process_grid)

    def describe(self):
        return {"source": self.label, "points": self.process_grid.size}


@dataclass
class AdaptiveSource(GridSource):
    """
    Adapts on ξ ↦ φ(m + Sξ) and ξ ↦ γ(m + Sξ) at the prior and keeps the
    compiled grids. readapt_every=K rebuilds them every K steps at the
    current belief (None: never).
    """
    process: AdaptConfig = field(default_factory=AdaptConfig)
    measurement: AdaptConfig = field(default_factory=AdaptConfig)
    readapt_every: Optional[int] = None
    label = "asghf"

    def __post_init__(self):
        if self.readapt_every is not None and self.readapt_every < 1:
            raise InvalidArgumentError("readapt_every must be >= 1 or None")

    def build(self, model, belief, k):
        factor = sqrt_factor(belief.cov)
        process_grid, _, process_report = adapt(
            standardized(model.propagate, belief.mean, factor, k), model.state_dim, self.process
        )
        measurement_grid, _, measurement_report = adapt(
            standardized(model.measure, belief.mean, factor, k), model.state_dim, self.measurement
        )
        return FilterGrids(
            process_grid.grid, measurement_grid.grid,
            reports={"process": process_report, "measurement": measurement_report},
        )

    def refresh_due(self, k: int) -> bool:
        return self.readapt_every is not None and k > 1 and (k - 1) % self.readapt_every == 0

    def describe(self):
        return {
            "source": self.label,
            "process": self.process.to_dict(),
            "measurement": self.measurement.to_dict(),
            "readapt_every": self.readapt_every,
        }


# -----------------------------------------------------------
# Filter
# -----------------------------------------------------------

class GaussianFilter:
    def __init__(self, model: StateSpaceModel, source: GridSource):
        self.model = model
        self.source = source
        self.grids: Optional[FilterGrids] = None

    def initialize(self, prior: GaussianBelief) -> FilterGrids:
        self.grids = self.source.build(self.model, prior, 1)
        return self.grids

    def step(self, belief: GaussianBelief, y: np.ndarray, k: int) -> GaussianBelief:
        if self.grids is None:
            self.initialize(belief)
        elif self.source.refresh_due(k):
            self.grids = self.source.build(self.model, belief, k)
        predicted = predict(belief, self.model, self.grids.process, k)
        posterior = update(predicted, y, self.model, self.grids.measurement, k)
        if not posterior.is_finite():
            raise FilterError(f"Non-finite estimate at step {k}")
        return posterior

    def run(self, measurements: Sequence[np.ndarray], prior: GaussianBelief) -> List[GaussianBelief]:
        self.initialize(prior)
        belief = prior
        history = []
        for k, y in enumerate(measurements, start=1):
            belief = self.step(belief, y, k)
            history.append(belief)
        return history


def run_filter(model: StateSpaceModel, y_sequence: Sequence[np.ndarray], prior: GaussianBelief,
               source: GridSource) -> List[GaussianBelief]:
    return GaussianFilter(model, source).run(y_sequence, prior)


# -----------------------------------------------------------
# Linear-Gaussian reference
# -----------------------------------------------------------

def kalman_filter(F: np.ndarray, H: np.ndarray, Q: np.ndarray, R: np.ndarray,
                  y_sequence: Sequence[np.ndarray], prior: GaussianBelief,
                  offset: Optional[np.ndarray] = None) -> List[GaussianBelief]:
    """Classical Kalman filter for x_k = F x_{k-1} + b + w, y = H x + v."""
    F = np.asarray(F, dtype=float)
    H = np.asarray(H, dtype=float)
    b = np.zeros(F.shape[0]) if offset is None else np.asarray(offset, dtype=float)
    mean, cov = prior.mean, prior.cov
    history = []
    for y in y_sequence:
        mean = F @ mean + b
        cov = symmetrize(F @ cov @ F.T + Q)
        S = symmetrize(H @ cov @ H.T + R)
        gain = np.linalg.solve(S, H @ cov).T
        mean = mean + gain @ (np.asarray(y, dtype=float) - H @ mean)
        cov = symmetrize(cov - gain @ S @ gain.T)
        history.append(GaussianBelief(mean, cov))
    return history
