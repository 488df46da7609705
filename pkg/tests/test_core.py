import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.stats import ortho_group

from gwdual.core import (
    NotCenteredError,
    cost_table_cA,
    dual_objective,
    egw,
    gw,
    half_width,
    s1,
    solve_s2,
)
from gwdual.measures import DiscreteMeasure, center, make_rng, random_measure
from gwdual.oracle import brute_force_gw_uniform, egw_objective, quad_objective

from conftest import centered_pair


def test_s1_on_two_points(unif_pm1):
    # E|x-x'|^4 = 8 for each marginal, M2 = 1
    assert s1(unif_pm1, unif_pm1) == pytest.approx(12.0)


def test_dual_objective_on_two_points(unif_pm1):
    assert dual_objective(unif_pm1, unif_pm1, [[0.5]]) == pytest.approx(-12.0)
    assert dual_objective(unif_pm1, unif_pm1, [[0.0]]) == pytest.approx(-4.0)


def test_gw_two_points_is_zero(unif_pm1):
    sol = gw(unif_pm1, unif_pm1)
    assert sol.s2 == pytest.approx(-12.0)
    assert abs(sol.a_star.a[0, 0]) == pytest.approx(0.5)
    assert sol.total_value == pytest.approx(0.0, abs=1e-12)


def test_gw_matches_oracle_on_small_1d(unif_013, unif_012):
    sol = gw(unif_013, unif_012)
    assert sol.total_value == pytest.approx(brute_force_gw_uniform(unif_013, unif_012).value, abs=1e-10)


def test_gw_frozen_four_point_instance():
    # 41.5 from a plain loop over all 24 permutations
    x = DiscreteMeasure([[0.0, 0.0], [1.0, 0.0], [0.0, 2.0], [1.0, 1.0]])
    y = DiscreteMeasure([[0.0, 0.0], [2.0, 0.0], [0.0, 1.0], [3.0, 3.0]])
    assert gw(x, y).total_value == pytest.approx(41.5, abs=1e-9)


def test_two_point_closed_form():
    # (a^2 - b^2)^2 / 2 for Unif{0, a} against Unif{0, b}
    mu = DiscreteMeasure([0.0, 2.0])
    nu = DiscreteMeasure([[0.0, 0.0], [0.0, 3.0]])
    assert gw(mu, nu).total_value == pytest.approx((4 - 9) ** 2 / 2)


def test_dirac_gives_zero_half_width():
    delta = DiscreteMeasure([[0.0, 0.0]])
    nu = center(DiscreteMeasure([[1.0], [2.0], [4.0]]))[0]
    assert half_width(delta, nu) == 0.0
    sol = gw(delta, nu)
    assert np.all(sol.a_star.a == 0)
    # D(delta, nu)^2 = E|y - y'|^4
    assert sol.total_value == pytest.approx(float(np.mean((nu.points - nu.points.T) ** 4)))


def test_s2_requires_centered(unif_013):
    with pytest.raises(NotCenteredError):
        solve_s2(unif_013, unif_013)


def test_unknown_strategy_rejected(unif_pm1):
    with pytest.raises(ValueError):
        solve_s2(unif_pm1, unif_pm1, strategy="newton")
    with pytest.raises(ValueError):
        solve_s2(unif_pm1, unif_pm1, 0.0, strategy="lbfgs")


def test_egw_rejects_zero_epsilon(unif_pm1):
    with pytest.raises(ValueError):
        egw(unif_pm1, unif_pm1, 0.0)


def test_cost_table_shape_checked(unif_pm1):
    with pytest.raises(ValueError):
        cost_table_cA(unif_pm1, unif_pm1, np.zeros((2, 2)))


@settings(max_examples=25, deadline=None)
@given(st.integers(2, 6), st.integers(1, 3), st.integers(1, 3), st.integers(0, 10_000))
def test_gw_equals_permutation_oracle(n, dx, dy, seed):
    rng = make_rng(seed, 0)
    mu, nu = random_measure(n, dx, rng), random_measure(n, dy, rng)
    sol = gw(mu, nu)
    ref = brute_force_gw_uniform(mu, nu).value
    assert sol.total_value == pytest.approx(ref, abs=1e-8 * (1 + ref))
    # the reported coupling attains the value
    assert quad_objective(mu, nu, sol.coupling) == pytest.approx(sol.total_value, abs=1e-8 * (1 + ref))


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 10_000))
def test_dual_objective_is_an_upper_bound(seed):
    mu, nu = centered_pair(seed, n=5, dx=2, dy=1)
    s2 = brute_force_gw_uniform(mu, nu).value - s1(mu, nu)
    rng = np.random.default_rng(seed)
    hw = half_width(mu, nu)
    for _ in range(5):
        a = rng.uniform(-hw, hw, size=(2, 1))
        assert dual_objective(mu, nu, a) >= s2 - 1e-10


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 10_000))
def test_non_uniform_weights_sandwich(seed):
    mu, nu = centered_pair(seed, n=4, m=5, uniform=False)
    sol = gw(mu, nu)
    assert quad_objective(mu, nu, sol.coupling) == pytest.approx(sol.total_value, abs=1e-8 * (1 + sol.total_value))
    # any other coupling is no better, in particular the product coupling
    assert quad_objective(mu, nu, np.outer(mu.weights, nu.weights)) >= sol.total_value - 1e-9


def test_fixed_point_and_report_fields():
    mu, nu = centered_pair(11, n=6)
    sol = gw(mu, nu)
    assert sol.fixed_point_residual <= 1e-8
    assert sol.total_value == pytest.approx(sol.s1 + sol.s2)
    assert sol.multistart_log[0][0] == "zero"
    assert sol.converged


def test_uncentered_inputs_are_centered_and_recorded():
    mu = DiscreteMeasure([[1.0, 1.0], [2.0, 1.0], [1.0, 3.0]])
    nu = DiscreteMeasure([[5.0], [6.0], [8.0]])
    sol = gw(mu, nu)
    assert sol.translations[0].vector == pytest.approx(mu.mean)
    assert sol.translations[1].vector == pytest.approx(nu.mean)


def test_egw_dominates_gw_and_matches_its_coupling():
    mu, nu = centered_pair(3, n=5)
    base = gw(mu, nu).total_value
    prev = np.inf
    for eps in (1.0, 0.1, 0.01):
        s = egw(mu, nu, eps, n_starts=8)
        assert s.converged
        assert s.total_value >= base - 1e-8
        assert s.total_value <= prev + 1e-8
        assert egw_objective(mu, nu, s.coupling, eps) == pytest.approx(s.total_value, rel=1e-7)
        prev = s.total_value


def test_alternate_and_quasi_newton_agree():
    mu, nu = centered_pair(5, n=6)
    a = solve_s2(mu, nu, 0.1, strategy="alternate", n_starts=8)
    b = solve_s2(mu, nu, 0.1, strategy="lbfgs", n_starts=8)
    assert a.value == pytest.approx(b.value, abs=1e-7)


def test_threaded_multistart_is_deterministic():
    mu, nu = centered_pair(8, n=6)
    one = solve_s2(mu, nu, 0.0, n_starts=6)
    many = solve_s2(mu, nu, 0.0, n_starts=6, workers=3)
    assert one.value == many.value
    assert one.multistart_log == many.multistart_log


@settings(max_examples=8, deadline=None)
@given(st.integers(0, 10_000))
def test_invariance_rotation_translation_padding(seed):
    rng = make_rng(seed, 1)
    mu, nu = random_measure(5, 2, rng), random_measure(5, 2, rng)
    ref = gw(mu, nu).total_value
    rot = ortho_group.rvs(2, random_state=np.random.default_rng(seed))
    moved = nu.map_points(lambda p: p @ rot.T + np.array([3.0, -2.0]))
    assert gw(mu, moved).total_value == pytest.approx(ref, rel=1e-8, abs=1e-10)
    assert gw(mu.pad(3), nu).total_value == pytest.approx(ref, rel=1e-8, abs=1e-10)
