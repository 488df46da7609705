import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import minimize_scalar

from gwdual.ot_exact import solve_ot
from gwdual.sinkhorn import (
    SinkhornConvergenceWarning,
    eot_dual_objective,
    epsilon_schedule,
    kl_divergence,
    solve_eot,
)


def primal(plan, cost, a, b, eps):
    return float(np.sum(plan * cost)) + eps * kl_divergence(plan, a, b)


def test_two_by_two_against_scalar_search():
    cost = np.array([[0.0, 1.0], [1.0, 0.0]])
    w = np.array([0.5, 0.5])

    def f(t):
        return primal(np.array([[t, 0.5 - t], [0.5 - t, t]]), cost, w, w, 1.0)

    ref = minimize_scalar(f, bounds=(1e-12, 0.5 - 1e-12), method="bounded", options={"xatol": 1e-12})
    sol = solve_eot(cost, w, w, 1.0)
    assert sol.value == pytest.approx(ref.fun, abs=1e-9)
    assert sol.plan[0, 0] == pytest.approx(ref.x, abs=1e-6)
    # closed form: t = e / (2 (1 + e))
    assert sol.plan[0, 0] == pytest.approx(np.e / (2 * (1 + np.e)), abs=1e-12)


def test_kl_of_diagonal_coupling():
    n = 5
    w = np.full(n, 1 / n)
    assert kl_divergence(np.eye(n) / n, w, w) == pytest.approx(np.log(n))
    assert kl_divergence(np.outer(w, w), w, w) == pytest.approx(0.0, abs=1e-15)


def test_kl_infinite_off_support():
    assert kl_divergence(np.array([[0.5, 0.5]]), np.array([1.0]), np.array([1.0, 0.0])) == np.inf


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.sampled_from([1.0, 0.1, 0.01]), st.integers(0, 10_000))
def test_schrodinger_system_and_duality(n, m, eps, seed):
    rng = np.random.default_rng(seed)
    cost = rng.normal(size=(n, m))
    a = rng.uniform(0.2, 1, n)
    b = rng.uniform(0.2, 1, m)
    a, b = a / a.sum(), b / b.sum()
    sol = solve_eot(cost, a, b, eps, trace=True)
    assert sol.converged
    assert max(sol.schrodinger) <= 1e-9
    assert abs(sol.primal_value - sol.value) <= 1e-6 * (1 + abs(sol.value))
    assert sol.value == pytest.approx(eot_dual_objective(sol.potentials.phi, sol.potentials.psi, cost, a, b, eps))
    tr = np.array(sol.trace)
    assert np.all(np.diff(tr) >= -1e-10 * (1 + np.abs(tr[1:])))


def test_small_epsilon_approaches_exact_ot():
    rng = np.random.default_rng(4)
    cost = rng.normal(size=(6, 6)) * 3
    w = np.full(6, 1 / 6)
    exact = solve_ot(cost, w, w).value
    gaps = [solve_eot(cost, w, w, eps).value - exact for eps in (1.0, 0.1, 0.01, 1e-3)]
    assert all(g >= -1e-9 for g in gaps)
    assert gaps[-1] < 0.02 and np.all(np.diff(gaps) <= 1e-9)


def test_tiny_epsilon_stays_finite():
    rng = np.random.default_rng(5)
    cost = rng.uniform(0, 100, size=(10, 12))
    sol = solve_eot(cost, np.full(10, 0.1), np.full(12, 1 / 12), 1e-4)
    assert np.all(np.isfinite(sol.plan)) and np.isfinite(sol.value)
    assert sol.residual <= 1e-8


def test_warm_start_reaches_same_solution():
    rng = np.random.default_rng(6)
    cost = rng.normal(size=(7, 7))
    w = np.full(7, 1 / 7)
    cold = solve_eot(cost, w, w, 0.05)
    warm = solve_eot(cost + 0.01 * rng.normal(size=(7, 7)), w, w, 0.05, init=cold.potentials)
    ref = solve_eot(cost + 0.0, w, w, 0.05)
    assert ref.value == pytest.approx(cold.value, abs=1e-12)
    assert warm.converged


def test_iteration_cap_warns_and_flags():
    rng = np.random.default_rng(7)
    cost = rng.normal(size=(5, 5))
    w = np.full(5, 0.2)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        sol = solve_eot(cost, w, w, 0.01, max_iter=2)
    assert not sol.converged
    assert any(issubclass(c.category, SinkhornConvergenceWarning) for c in caught)


def test_epsilon_schedule_geometric():
    stages = epsilon_schedule(1e-3, 10.0)
    assert stages[0] == 10.0
    assert all(s1 / s2 == pytest.approx(4.0) for s1, s2 in zip(stages, stages[1:]))
    assert stages[-1] > 4e-3
    assert epsilon_schedule(1.0, 10.0) == []


@pytest.mark.parametrize("eps", [0.0, -1.0])
def test_nonpositive_epsilon_rejected(eps):
    with pytest.raises(ValueError):
        solve_eot(np.zeros((2, 2)), [0.5, 0.5], [0.5, 0.5], eps)
