"""
Benchmark problems:

  problem 1: Gaussian integral of Σ x_i^{2i} (exact value Σ (2i-1)!!)
  sinusoids: frequencies/amplitudes of superimposed sinusoids (n=6, p=2)
  tracking: coordinated-turn target, range/bearing radar (n=5, p=2)

All model functions are vectorized: they take an (N, n) batch of states
and the 1-based step k.
"""
from __future__ import annotations
from dataclasses import dataclass, asdict
from typing import Any, Dict, Tuple
import json
import logging
import math
from pathlib import Path

import numpy as np
from scipy.special import factorial2

from asghf.sparse_filter.errors import ConfigError, UndefinedBearingError
from asghf.sparse_filter.gaussian_filtering import GaussianBelief, StateSpaceModel

SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"
SCENARIO_VERSION = 1
STUDIED_TURN_RATES_DEG = (3.0, 4.5)

logger = logging.getLogger(__name__)


# -----------------------------------------------------------
# Problem 1
# -----------------------------------------------------------

def problem1_integrand(x: np.ndarray):
    """Σ_i x_i^{2i}; a single n-vector gives a float, an (N, n) batch gives (N,)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    batch = np.atleast_2d(x)
    powers = 2 * np.arange(1, batch.shape[1] + 1)
    values = np.sum(batch ** powers, axis=1)
    return float(values[0]) if single else values


def problem1_exact(n: int) -> float:
    """∫ Σ x_i^{2i} N(x; 0, I) dx = Σ_{i=1..n} (2i - 1)!!"""
    return float(sum(int(factorial2(2 * i - 1, exact=True)) for i in range(1, n + 1)))


# -----------------------------------------------------------
# Scenario files
# -----------------------------------------------------------

def load_scenario(name: str) -> Dict[str, Any]:
    path = Path(name)
    if not path.suffix:
        path = SCENARIO_DIR / f"{name}.json"
    if not path.exists():
        raise ConfigError(f"Scenario file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Malformed scenario file {path}: {e}") from e
    if data.get("version") != SCENARIO_VERSION:
        raise ConfigError(f"Unsupported scenario version in {path}: {data.get('version')!r}")
    return data


def _pick(data: Dict[str, Any], cls) -> Dict[str, Any]:
    names = set(cls.__dataclass_fields__)
    return {k: v for k, v in data.items() if k in names}


# -----------------------------------------------------------
# Sinusoids
# -----------------------------------------------------------

@dataclass(frozen=True)
class SinusoidParams:
    # сирі числа; одиниці μHz²/ms² з опису задачі не перераховуємо
    T: float = 1.667e-4
    sigma_f2: float = 151.0
    sigma_a2: float = 80.0
    sigma_n2: float = 0.09
    truth: Tuple[float, ...] = (200.0, 1000.0, 2000.0, 5.0, 4.0, 3.0)
    estimate: Tuple[float, ...] = (150.0, 900.0, 1800.0, 4.0, 4.0, 2.0)
    P0_diag: Tuple[float, ...] = (400.0, 400.0, 400.0, 0.05, 0.05, 0.05)

    def __post_init__(self):
        object.__setattr__(self, "truth", tuple(float(v) for v in self.truth))
        object.__setattr__(self, "estimate", tuple(float(v) for v in self.estimate))
        object.__setattr__(self, "P0_diag", tuple(float(v) for v in self.P0_diag))
        if self.T <= 0:
            raise ConfigError(f"Sampling time must be positive, got {self.T}")
        if min(self.sigma_f2, self.sigma_a2, self.sigma_n2) <= 0:
            raise ConfigError("Noise variances must be positive")
        n = len(self.truth)
        if n % 2 or len(self.estimate) != n or len(self.P0_diag) != n:
            raise ConfigError("truth/estimate/P0_diag must have the same even length")

    @property
    def num_sinusoids(self) -> int:
        return len(self.truth) // 2

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "SinusoidParams":
        return cls(**_pick(data, cls))

    def to_dict(self) -> dict:
        return asdict(self)

    def prior(self) -> GaussianBelief:
        return GaussianBelief(np.array(self.estimate), np.diag(self.P0_diag))


def sinusoid_measurement(states: np.ndarray, k: int, T: float) -> np.ndarray:
    states = np.atleast_2d(states)
    m = states.shape[1] // 2
    freqs, amps = states[:, :m], states[:, m:]
    phase = 2.0 * math.pi * freqs * (k * T)
    return np.stack([
        np.sum(amps * np.cos(phase), axis=1),
        np.sum(amps * np.sin(phase), axis=1),
    ], axis=1)


def sinusoid_model(params: SinusoidParams) -> StateSpaceModel:
    m = params.num_sinusoids
    Q = np.diag([params.sigma_f2] * m + [params.sigma_a2] * m)
    R = np.diag([params.sigma_n2, params.sigma_n2])
    return StateSpaceModel(
        state_dim=2 * m,
        meas_dim=2,
        process=lambda X, k: np.array(X, dtype=float, copy=True),
        measurement=lambda X, k: sinusoid_measurement(X, k, params.T),
        Q=Q,
        R=R,
        name="sinusoids",
    )


# -----------------------------------------------------------
# Coordinated turn
# -----------------------------------------------------------

@dataclass(frozen=True)
class CTParams:
    """State [x, ẋ, y, ẏ, ω]; ω is rad/s internally, omega_deg is the scenario knob."""
    T: float = 0.5
    q: float = 0.1
    sigma_r: float = 120.0
    sigma_t2: float = 70e-6
    omega_deg: float = 3.0
    position: Tuple[float, float] = (1000.0, 1000.0)
    velocity: Tuple[float, float] = (30.0, 0.0)
    P0_diag: Tuple[float, ...] = (200.0, 20.0, 200.0, 20.0, 100e-6)

    def __post_init__(self):
        object.__setattr__(self, "position", tuple(float(v) for v in self.position))
        object.__setattr__(self, "velocity", tuple(float(v) for v in self.velocity))
        object.__setattr__(self, "P0_diag", tuple(float(v) for v in self.P0_diag))
        if self.T <= 0 or self.q <= 0:
            raise ConfigError("T and q must be positive")
        if self.sigma_r <= 0 or self.sigma_t2 <= 0:
            raise ConfigError("Measurement noise must be positive")
        if len(self.P0_diag) != 5:
            raise ConfigError("P0_diag must have 5 entries")
        if self.omega_deg not in STUDIED_TURN_RATES_DEG:
            logger.warning("turn rate %.3f deg/s is outside the studied set %s",
                           self.omega_deg, STUDIED_TURN_RATES_DEG)

    @property
    def omega(self) -> float:
        return math.radians(self.omega_deg)

    @property
    def x0(self) -> np.ndarray:
        return np.array([self.position[0], self.velocity[0],
                         self.position[1], self.velocity[1], self.omega])

    @property
    def P0(self) -> np.ndarray:
        return np.diag(self.P0_diag)

    @property
    def R(self) -> np.ndarray:
        return np.diag([self.sigma_r ** 2, self.sigma_t2])

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "CTParams":
        return cls(**_pick(data, cls))

    def to_dict(self) -> dict:
        return asdict(self)


def ct_transition(states: np.ndarray, T: float) -> np.ndarray:
    """
    F(ω)x for a batch of states. sin(ωT)/ω and (1 - cos ωT)/ω are written
    through np.sinc, so ω = 0 gives the constant-velocity limit without a branch.
    """
    states = np.asarray(states, dtype=float)
    single = states.ndim == 1
    X = np.atleast_2d(states)
    px, vx, py, vy, omega = X.T
    wT = omega * T
    s_over_w = T * np.sinc(wT / math.pi)
    c_over_w = 0.5 * omega * T * T * np.sinc(wT / (2.0 * math.pi)) ** 2
    cos_wT, sin_wT = np.cos(wT), np.sin(wT)
    out = np.stack([
        px + s_over_w * vx - c_over_w * vy,
        cos_wT * vx - sin_wT * vy,
        py + c_over_w * vx + s_over_w * vy,
        sin_wT * vx + cos_wT * vy,
        omega,
    ], axis=1)
    return out[0] if single else out


def ct_measurement(states: np.ndarray) -> np.ndarray:
    """[range, bearing] with bearing = atan2(y, x)."""
    states = np.asarray(states, dtype=float)
    single = states.ndim == 1
    X = np.atleast_2d(states)
    px, py = X[:, 0], X[:, 2]
    rng = np.hypot(px, py)
    if np.any(rng == 0.0):
        raise UndefinedBearingError("Bearing is undefined at the sensor origin")
    out = np.stack([rng, np.arctan2(py, px)], axis=1)
    return out[0] if single else out


def ct_process_noise(T: float, q: float) -> np.ndarray:
    block = np.array([[T ** 3 / 3.0, T ** 2 / 2.0],
                      [T ** 2 / 2.0, T]])
    Q = np.zeros((5, 5))
    Q[0:2, 0:2] = block
    Q[2:4, 2:4] = block
    Q[4, 4] = 0.009 * T
    return q * Q


def ct_model(params: CTParams) -> StateSpaceModel:
    return StateSpaceModel(
        state_dim=5,
        meas_dim=2,
        process=lambda X, k: ct_transition(X, params.T),
        measurement=lambda X, k: ct_measurement(X),
        Q=ct_process_noise(params.T, params.q),
        R=params.R,
        angular=(False, True),
        name="tracking",
    )


# -----------------------------------------------------------
# Truth simulation
# -----------------------------------------------------------

def noise_factor(cov: np.ndarray) -> np.ndarray:
    """A with A Aᵀ = cov for PSD (also singular or zero) covariances."""
    values, vectors = np.linalg.eigh(np.asarray(cov, dtype=float))
    return vectors * np.sqrt(np.clip(values, 0.0, None))


def run_rng(seed: int, run_index: int = 0, stream: int = 0) -> np.random.Generator:
    """Independent stream per (seed, run_index, stream); stream 0 drives the truth."""
    return np.random.default_rng([int(seed), int(run_index), int(stream)])


def simulate_truth(model: StateSpaceModel, x0: np.ndarray, steps: int, rng_seed: int,
                   run_index: int = 0, with_noise: bool = True,
                   ) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns (states, measurements) of shapes (steps, n) and (steps, p);
    row k-1 holds x_k and y_k = γ(x_k, k) + v_k.
    """
    if steps < 1:
        raise ConfigError(f"steps must be >= 1, got {steps}")
    rng = run_rng(rng_seed, run_index)
    process_factor = noise_factor(model.Q)
    measurement_factor = noise_factor(model.R)

    states = np.empty((steps, model.state_dim))
    measurements = np.empty((steps, model.meas_dim))
    x = np.asarray(x0, dtype=float).reshape(-1)
    for k in range(1, steps + 1):
        w = process_factor @ rng.standard_normal(model.state_dim)
        v = measurement_factor @ rng.standard_normal(model.meas_dim)
        if not with_noise:
            w, v = np.zeros_like(w), np.zeros_like(v)
        x = model.propagate(x, k)[0] + w
        states[k - 1] = x
        measurements[k - 1] = model.measure(x, k)[0] + v
    return states, measurements
