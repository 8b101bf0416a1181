import math

import numpy as np
from hypothesis import assume, given, settings, strategies as st

from asghf.sparse_filter.adaptive_quadrature import AdaptConfig, adapt, is_admissible_set
from asghf.sparse_filter.gaussian_filtering import sqrt_factor
from asghf.sparse_filter.tensor_smolyak import (
    MultiIndex, apply_grid, difference_increment, tensor_rule,
)

# ============================================================
# Hypothesis strategies
# ============================================================

multi_indices = st.lists(st.integers(min_value=1, max_value=4), min_size=1, max_size=6).map(
    lambda levels: MultiIndex(tuple(levels))
)

coefficients = st.lists(
    st.floats(min_value=-0.5, max_value=0.5, allow_nan=False), min_size=1, max_size=3
)


# ============================================================
# TEST 1: tensor rules integrate constants exactly
# ============================================================

@settings(max_examples=200, deadline=None)
@given(multi_indices)
def test_tensor_weights_sum_to_one(index):
    assume(index.tensor_size() <= 5000)
    assert abs(tensor_rule(index).weight_sum() - 1.0) <= 1e-12


# ============================================================
# TEST 2: every increment above the first annihilates constants
# ============================================================

@settings(max_examples=200, deadline=None)
@given(multi_indices)
def test_increment_weights_sum_to_zero(index):
    assume(index.increment_size() <= 5000)
    assume(index != MultiIndex.ones(index.dimension))
    grid = difference_increment(index)
    assert abs(grid.weight_sum()) <= 1e-12


# ============================================================
# TEST 3: the adaptive index set stays admissible
# ============================================================

@settings(max_examples=20, deadline=None)
@given(coefficients,
       st.floats(min_value=0.3, max_value=0.9),
       st.floats(min_value=0.05, max_value=0.5))
def test_adaptive_sets_stay_admissible(coefs, psi, tol):
    c = np.array(coefs)
    f = lambda xi: np.exp(xi @ c)

    def check(state):
        assert not set(state.old) & set(state.active)
        assert is_admissible_set(state.union())
        assert state.global_error == math.fsum(state.indicators[i] for i in state.active)

    compiled, state, _ = adapt(f, len(c), AdaptConfig(psi=psi, tol=tol, max_indices=60), on_step=check)
    value = apply_grid(compiled.grid, f)
    assert np.allclose(value, state.running_integral, rtol=1e-9, atol=1e-10)


# ============================================================
# TEST 4: square-root factors reproduce covariances
# ============================================================

@settings(max_examples=100, deadline=None)
@given(st.integers(min_value=1, max_value=4).flatmap(
    lambda n: st.lists(st.floats(min_value=-2.0, max_value=2.0, allow_nan=False),
                       min_size=n * n, max_size=n * n)))
def test_sqrt_factor_reconstructs(entries):
    n = int(round(math.sqrt(len(entries))))
    A = np.array(entries).reshape(n, n)
    cov = A @ A.T + 0.1 * np.eye(n)
    S = sqrt_factor(cov)
    assert np.allclose(S @ S.T, cov, atol=1e-10 * max(1.0, np.trace(cov)))
    assert np.allclose(S, np.tril(S))
