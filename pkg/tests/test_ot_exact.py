import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gwdual.ot_exact import (
    DualPotentials,
    InfeasiblePotentialsError,
    c_transform,
    cbar_transform,
    duality_gap,
    solve_ot,
)


def enumerate_assignment(cost):
    n = cost.shape[0]
    return min(sum(cost[i, s[i]] for i in range(n)) / n for s in itertools.permutations(range(n)))


def test_c_a_cost_on_small_uniform_instance():
    x = np.array([0.0, 1.0, 3.0])
    y = np.array([0.0, 1.0, 2.0])
    cost = -4.0 * np.outer(x * x, y * y)
    w = np.full(3, 1 / 3)
    r = solve_ot(cost, w, w)
    assert r.value == pytest.approx(enumerate_assignment(cost), abs=1e-12)
    # sorted pairing: -4 (0 + 1 + 36) / 3
    assert r.value == pytest.approx(-148 / 3)


def test_single_atom_plan_is_product():
    r = solve_ot(np.array([[1.0, 2.0, 3.0]]), [1.0], [0.2, 0.3, 0.5])
    assert np.allclose(r.plan, [[0.2, 0.3, 0.5]])
    assert r.value == pytest.approx(0.2 + 0.6 + 1.5)


def replicate(cost, a, b, k):
    # expand atoms with mass j/k into j unit atoms
    ra = np.repeat(np.arange(a.size), np.rint(a * k).astype(int))
    rb = np.repeat(np.arange(b.size), np.rint(b * k).astype(int))
    return cost[np.ix_(ra, rb)]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_lp_matches_expanded_assignment(seed):
    rng = np.random.default_rng(seed)
    k = 6
    n, m = rng.integers(2, 5, size=2)
    a = rng.multinomial(k - n, np.ones(n) / n) + 1
    b = rng.multinomial(k - m, np.ones(m) / m) + 1
    a, b = a / k, b / k
    cost = rng.normal(size=(n, m))
    r = solve_ot(cost, a, b)
    from scipy.optimize import linear_sum_assignment

    big = replicate(cost, a, b, k)
    i, j = linear_sum_assignment(big)
    assert r.value == pytest.approx(big[i, j].sum() / k, abs=1e-10)
    assert duality_gap(r.plan, r.potentials, cost, a, b) == pytest.approx(0.0, abs=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 7), st.integers(0, 10_000))
def test_assignment_potentials_certify_optimality(n, seed):
    rng = np.random.default_rng(seed)
    cost = rng.normal(size=(n, n))
    w = np.full(n, 1 / n)
    r = solve_ot(cost, w, w)
    assert r.value == pytest.approx(enumerate_assignment(cost), abs=1e-12)
    assert np.all(r.potentials.phi[:, None] + r.potentials.psi[None, :] <= cost + 1e-9)
    assert duality_gap(r.plan, r.potentials, cost, w, w) == pytest.approx(0.0, abs=1e-9)


def test_transforms_are_feasible_and_improve():
    rng = np.random.default_rng(1)
    cost = rng.normal(size=(4, 5))
    phi = rng.normal(size=4)
    psi = c_transform(phi, cost)
    assert np.all(phi[:, None] + psi[None, :] <= cost + 1e-12)
    phi2 = cbar_transform(psi, cost)
    assert np.all(phi2 >= phi - 1e-12)


def test_perturbed_potentials_widen_the_gap():
    rng = np.random.default_rng(2)
    cost = rng.normal(size=(4, 4))
    w = np.full(4, 0.25)
    r = solve_ot(cost, w, w)
    worse = DualPotentials(r.potentials.phi - 0.1, r.potentials.psi)
    assert duality_gap(r.plan, worse, cost, w, w) > duality_gap(r.plan, r.potentials, cost, w, w) + 0.09


def test_infeasible_potentials_raise():
    cost = np.zeros((2, 2))
    w = np.full(2, 0.5)
    with pytest.raises(InfeasiblePotentialsError):
        duality_gap(np.eye(2) / 2, DualPotentials(np.ones(2), np.ones(2)), cost, w, w)


@pytest.mark.parametrize(
    "cost, a, b",
    [
        (np.zeros((2, 2)), [0.5, 0.5], [1.0]),
        (np.zeros((2, 2)), [0.5, 0.6], [0.5, 0.5]),
        (np.array([[0.0, np.inf], [0.0, 0.0]]), [0.5, 0.5], [0.5, 0.5]),
    ],
)
def test_bad_inputs(cost, a, b):
    with pytest.raises(ValueError):
        solve_ot(cost, a, b)
