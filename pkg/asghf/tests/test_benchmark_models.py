import json
import math

import numpy as np
import pytest

from asghf.sparse_filter.benchmark_models import (
    CTParams, SinusoidParams, ct_measurement, ct_model, ct_process_noise, ct_transition,
    load_scenario, problem1_exact, problem1_integrand, simulate_truth, sinusoid_measurement,
    sinusoid_model,
)
from asghf.sparse_filter.errors import ConfigError, UndefinedBearingError
from asghf.sparse_filter.gaussian_filtering import StateSpaceModel


# -----------------------------------------------------------
# Problem 1
# -----------------------------------------------------------

def test_problem1_integrand_examples():
    assert problem1_integrand(np.array([1.0, 1.0])) == 2.0
    assert problem1_integrand(np.array([2.0, 1.0])) == 5.0
    assert problem1_integrand(np.array([0.0, 2.0])) == 16.0


def test_problem1_integrand_batch():
    values = problem1_integrand(np.array([[1.0, 1.0], [2.0, 1.0]]))
    assert values.tolist() == [2.0, 5.0]


@pytest.mark.parametrize("n, expected", [(1, 1.0), (2, 4.0), (3, 19.0), (6, 11464.0)])
def test_problem1_exact(n, expected):
    assert problem1_exact(n) == expected


# -----------------------------------------------------------
# Sinusoids
# -----------------------------------------------------------

def test_sinusoid_measurement_at_time_zero():
    params = SinusoidParams()
    y = sinusoid_measurement(np.array(params.truth), 0, params.T)
    assert y.tolist() == [[12.0, 0.0]]


def test_sinusoid_measurement_amplitude_bound():
    rng = np.random.default_rng(0)
    states = np.hstack([rng.uniform(0, 3000, size=(200, 3)), rng.uniform(0, 10, size=(200, 3))])
    y = sinusoid_measurement(states, 17, 1.667e-4)
    bound = np.sum(states[:, 3:], axis=1) ** 2
    assert np.all(np.sum(y ** 2, axis=1) <= bound + 1e-9)


def test_sinusoid_model_shapes():
    params = SinusoidParams()
    model = sinusoid_model(params)
    assert model.state_dim == 6 and model.meas_dim == 2
    assert np.diag(model.Q).tolist() == [151.0] * 3 + [80.0] * 3
    assert np.diag(model.R).tolist() == [0.09, 0.09]
    states = np.ones((4, 6))
    assert np.array_equal(model.propagate(states, 3), states)


def test_sinusoid_params_validation():
    with pytest.raises(ConfigError):
        SinusoidParams(truth=(1.0, 2.0, 3.0))
    with pytest.raises(ConfigError):
        SinusoidParams(sigma_n2=0.0)


# -----------------------------------------------------------
# Coordinated turn
# -----------------------------------------------------------

def test_ct_transition_straight_line():
    out = ct_transition(np.array([0.0, 30.0, 0.0, 0.0, 0.0]), 0.5)
    assert out.tolist() == [15.0, 30.0, 0.0, 0.0, 0.0]


def test_ct_transition_quarter_turn():
    x = np.array([0.0, 1.0, 0.0, 0.0, math.pi])
    out = ct_transition(x, 0.5)
    # velocity rotates by +90 degrees
    assert out[1] == pytest.approx(0.0, abs=1e-12)
    assert out[3] == pytest.approx(1.0, abs=1e-12)
    assert out[0] == pytest.approx(1.0 / math.pi, abs=1e-12)
    assert out[2] == pytest.approx(1.0 / math.pi, abs=1e-12)


def test_ct_transition_full_period_returns_to_start():
    x = np.array([5.0, 3.0, -2.0, 4.0, 4.0 * math.pi])
    out = ct_transition(x, 0.5)
    assert out == pytest.approx(x, abs=1e-12)


def test_ct_transition_preserves_speed():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(100, 5)) * [100.0, 30.0, 100.0, 30.0, 0.5]
    out = ct_transition(X, 0.5)
    assert np.allclose(np.hypot(out[:, 1], out[:, 3]), np.hypot(X[:, 1], X[:, 3]), rtol=1e-12)


def test_ct_transition_continuous_at_zero_turn_rate():
    rng = np.random.default_rng(2)
    for _ in range(20):
        x = rng.normal(size=5)
        x /= np.linalg.norm(x[:4])
        eps = rng.uniform(-1e-6, 1e-6)
        a = ct_transition(np.r_[x[:4], eps], 0.5)
        b = ct_transition(np.r_[x[:4], 0.0], 0.5)
        assert np.max(np.abs(a[:4] - b[:4])) <= abs(eps) + 1e-15


def test_ct_measurement_examples():
    y = ct_measurement(np.array([1000.0, 0.0, 1000.0, 0.0, 0.0]))
    assert y[0] == pytest.approx(1000.0 * math.sqrt(2.0))
    assert y[1] == pytest.approx(math.pi / 4)
    y = ct_measurement(np.array([-1.0, 0.0, -1.0, 0.0, 0.0]))
    assert y[1] == pytest.approx(-3.0 * math.pi / 4)


def test_ct_measurement_undefined_at_origin():
    with pytest.raises(UndefinedBearingError):
        ct_measurement(np.array([0.0, 1.0, 0.0, 1.0, 0.0]))


def test_ct_process_noise_entries():
    Q = ct_process_noise(0.5, 0.1)
    assert Q[0, 0] == pytest.approx(0.1 * 0.125 / 3.0)
    assert Q[0, 1] == pytest.approx(0.1 * 0.125)
    assert Q[1, 1] == pytest.approx(0.05)
    assert Q[4, 4] == pytest.approx(0.1 * 0.009 * 0.5)
    assert Q[0, 2] == 0.0
    assert np.all(np.linalg.eigvalsh(Q) > 0)


def test_ct_params_initial_state():
    params = CTParams(omega_deg=-3.0)
    assert params.x0.tolist() == [1000.0, 30.0, 1000.0, 0.0, math.radians(-3.0)]
    assert np.diag(params.R).tolist() == [14400.0, 70e-6]
    model = ct_model(params)
    assert model.angular == (False, True)


def test_ct_params_warns_on_unstudied_turn_rate(caplog):
    with caplog.at_level("WARNING", logger="asghf.sparse_filter.benchmark_models"):
        CTParams(omega_deg=4.5)
        assert not caplog.records
        CTParams(omega_deg=7.0)
    assert "outside the studied set" in caplog.text


# -----------------------------------------------------------
# Truth simulation
# -----------------------------------------------------------

def test_simulate_truth_same_seed_same_output():
    model = ct_model(CTParams())
    x0 = CTParams().x0
    a = simulate_truth(model, x0, 20, rng_seed=5)
    b = simulate_truth(model, x0, 20, rng_seed=5)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])
    c = simulate_truth(model, x0, 20, rng_seed=5, run_index=1)
    assert not np.array_equal(a[0], c[0])


def test_simulate_truth_without_noise_is_deterministic_path():
    params = CTParams()
    model = ct_model(params)
    states, ys = simulate_truth(model, params.x0, 3, rng_seed=0, with_noise=False)
    expected = ct_transition(ct_transition(ct_transition(params.x0, 0.5), 0.5), 0.5)
    assert states[-1] == pytest.approx(expected, abs=1e-9)
    assert ys[-1] == pytest.approx(ct_measurement(expected), abs=1e-12)


@pytest.mark.slow
def test_simulate_truth_process_noise_covariance():
    Q = np.array([[2.0, 0.5], [0.5, 1.0]])
    model = StateSpaceModel(2, 1, lambda X, k: X, lambda X, k: X[:, :1], Q, np.eye(1))
    states, _ = simulate_truth(model, np.zeros(2), 100_000, rng_seed=9)
    increments = np.diff(np.vstack([np.zeros(2), states]), axis=0)
    empirical = np.cov(increments.T)
    assert np.max(np.abs(empirical - Q)) <= 0.02 * np.max(np.diag(Q))


def test_simulate_truth_rejects_zero_steps():
    with pytest.raises(ConfigError):
        simulate_truth(ct_model(CTParams()), CTParams().x0, 0, rng_seed=0)


# -----------------------------------------------------------
# Scenario files
# -----------------------------------------------------------

@pytest.mark.parametrize("name", [
    "sinusoids_scenario1", "sinusoids_scenario2", "tracking_scenario1", "tracking_scenario2",
])
def test_bundled_scenarios_load(name):
    data = load_scenario(name)
    assert data["version"] == 1
    assert set(data["asghf"]) >= {"process", "measurement"}


def test_missing_scenario():
    with pytest.raises(ConfigError):
        load_scenario("no_such_scenario")


def test_scenario_with_wrong_version(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"version": 99}), encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(str(path))


def test_malformed_scenario(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_scenario(str(path))
