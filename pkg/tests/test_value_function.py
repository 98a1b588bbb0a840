import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from hjb_portfolio.errors import ValidationError
from hjb_portfolio.market_data import Discrete, DriftProfile, Simplex, in_simplex, make_asset_stats
from hjb_portfolio.value_function import (ProfiledAlpha, alpha_at_zero_limit, alpha_discrete, alpha_second_derivative, build_alpha_table,
                                          evaluate_alpha, locate_minimizer_switch,
                                          solve_simplex_qp)

from conftest import random_universe
from oracles import grid_search_alpha, two_asset_closed_form

phi_st = st.floats(0.05, 500.0)
seed_st = st.integers(0, 10_000)
n_st = st.integers(1, 6)


def test_hand_derived_point(two_asset):
    ev = solve_simplex_qp(two_asset, 5.0)
    np.testing.assert_allclose(ev.theta_hat, [0.4, 0.6], atol=1e-10)
    assert ev.alpha == pytest.approx(-0.045, abs=1e-10)
    assert ev.alpha_prime == pytest.approx(0.005, abs=1e-10)
    assert ev.active_support == (0, 1)


@pytest.mark.parametrize("phi", [0.1, 0.5, 1.0, 1.25, 1.3, 2.0, 5.0, 20.0, 100.0, 1000.0])
def test_two_asset_closed_form(two_asset, phi):
    theta, alpha, prime = two_asset_closed_form(two_asset.mu, (0.04, 0.01), phi)
    ev = solve_simplex_qp(two_asset, phi)
    np.testing.assert_allclose(ev.theta_hat, theta, atol=1e-12)
    assert ev.alpha == pytest.approx(alpha, abs=1e-14)
    assert ev.alpha_prime == pytest.approx(prime, abs=1e-14)


@pytest.mark.parametrize("phi", [0.3, 2.0, 7.5, 60.0])
def test_second_derivative_matches_differences(three_asset, phi):
    h = 1e-5 * phi
    lo, ev, hi = (solve_simplex_qp(three_asset, p) for p in (phi - h, phi, phi + h))
    assert lo.active_support == hi.active_support
    fd = (hi.alpha_prime - lo.alpha_prime) / (2 * h)
    exact = alpha_second_derivative(three_asset, ev.active_support, phi)
    assert exact <= 0
    assert exact == pytest.approx(fd, rel=1e-5, abs=1e-12)


def test_large_phi_approaches_minimum_variance(two_asset):
    ev = solve_simplex_qp(two_asset, 1e6)
    np.testing.assert_allclose(ev.theta_hat, [0.2, 0.8], atol=1e-5)


def test_grid_search_three_assets(three_asset):
    phis = np.geomspace(0.1, 100, 7)
    ref = grid_search_alpha(three_asset.mu, three_asset.sigma, phis, 2e-3)
    got = np.array([solve_simplex_qp(three_asset, p).alpha for p in phis])
    assert np.all(got <= ref + 1e-14)
    assert np.max(ref - got) < 1e-4


@settings(max_examples=150, deadline=None)
@given(n=n_st, seed=seed_st, phi=phi_st)
def test_kkt_conditions_hold(n, seed, phi):
    stats = random_universe(n, seed)
    ev = solve_simplex_qp(stats, phi)
    theta = ev.theta_hat
    assert in_simplex(theta, 1e-12)
    grad = -stats.mu + phi * stats.sigma @ theta
    on = theta > 0
    level = grad[on].mean()
    scale = max(1.0, np.abs(grad).max())
    assert np.all(np.abs(grad[on] - level) <= 1e-9 * scale)
    assert np.all(grad[~on] >= level - 1e-9 * scale)


@settings(max_examples=100, deadline=None)
@given(n=n_st, seed=seed_st, phi=phi_st)
def test_envelope_derivative_identity(n, seed, phi):
    stats = random_universe(n, seed)
    ev = solve_simplex_qp(stats, phi)
    t = ev.theta_hat
    assert ev.alpha_prime == pytest.approx(0.5 * t @ stats.sigma @ t, rel=1e-14)
    assert ev.alpha == pytest.approx(-stats.mu @ t + phi * ev.alpha_prime, rel=1e-12, abs=1e-15)


@settings(max_examples=100, deadline=None)
@given(n=n_st, seed=seed_st, a=phi_st, b=phi_st, w=st.floats(0.0, 1.0))
def test_concave_and_monotone(n, seed, a, b, w):
    stats = random_universe(n, seed)
    lo, hi = sorted((a, b))
    mid = w * lo + (1 - w) * hi
    e_lo, e_mid, e_hi = (solve_simplex_qp(stats, p) for p in (lo, mid, hi))
    tol = 1e-12
    assert e_lo.alpha <= e_mid.alpha + tol <= e_hi.alpha + 2 * tol
    assert e_mid.alpha >= w * e_lo.alpha + (1 - w) * e_hi.alpha - tol
    assert e_lo.alpha_prime >= e_hi.alpha_prime - tol >= -tol


@settings(max_examples=60, deadline=None)
@given(n=n_st, seed=seed_st, phi=phi_st, c=st.floats(0.1, 10.0))
def test_scaling_identities(n, seed, phi, c):
    stats = random_universe(n, seed)
    base = solve_simplex_qp(stats, phi / c)
    scaled_mu = solve_simplex_qp(stats.scaled_mu(c), phi)
    assert scaled_mu.alpha == pytest.approx(c * base.alpha, rel=1e-9, abs=1e-14)
    scaled_sigma = make_asset_stats(stats.names, stats.mu, c * stats.sigma)
    direct = solve_simplex_qp(stats, c * phi)
    assert solve_simplex_qp(scaled_sigma, phi).alpha == pytest.approx(direct.alpha, rel=1e-9, abs=1e-14)


def test_minimizer_path_trades_return_for_variance(synthetic30):
    phis = np.geomspace(0.1, 100, 120)
    evs = [solve_simplex_qp(synthetic30, p) for p in phis]
    ret = np.array([synthetic30.mu @ e.theta_hat for e in evs])
    var = np.array([e.alpha_prime for e in evs])
    assert np.all(np.diff(ret) <= 1e-14)
    assert np.all(np.diff(var) <= 1e-16)


def test_support_grows_along_fixture_path(two_asset):
    sizes = [solve_simplex_qp(two_asset, p).support_size for p in np.geomspace(0.5, 50, 400)]
    assert np.all(np.diff(sizes) >= 0)
    assert sizes[0] == 1 and sizes[-1] == 2


def test_alpha_prime_is_continuous_across_support_change(two_asset):
    phi_star = locate_minimizer_switch(two_asset, Simplex(2), 0.5, 2.0)
    below = solve_simplex_qp(two_asset, phi_star * (1 - 1e-9))
    above = solve_simplex_qp(two_asset, phi_star * (1 + 1e-9))
    assert below.support_size == 1 and above.support_size == 2
    assert abs(above.alpha_prime - below.alpha_prime) < 1e-9


def test_discrete_breakpoint_has_one_sided_slopes(two_asset):
    d = Discrete([[1, 0], [0, 1]])
    left = alpha_discrete(d, two_asset, 10 / 3 - 1e-9)
    right = alpha_discrete(d, two_asset, 10 / 3 + 1e-9)
    assert left.alpha_prime == pytest.approx(0.02) and right.alpha_prime == pytest.approx(0.005)
    assert abs(left.alpha - right.alpha) < 1e-10


def test_zero_phi_is_linear_program_limit():
    s = make_asset_stats(["a", "b", "c"], [0.05, 0.1, 0.1], np.eye(3) * 0.02)
    ev = evaluate_alpha(s, Simplex(3), 0.0)
    np.testing.assert_array_equal(ev.theta_hat, [0.0, 1.0, 0.0])
    assert ev.alpha == -0.1
    tie = alpha_at_zero_limit(make_asset_stats(["a", "b"], [0.05, 0.05], np.eye(2)))
    np.testing.assert_array_equal(tie.theta_hat, [1.0, 0.0])
    neg = alpha_at_zero_limit(make_asset_stats(["a", "b"], [-0.02, -0.01], np.eye(2)))
    assert neg.alpha == 0.01
    np.testing.assert_array_equal(neg.theta_hat, [0.0, 1.0])
    near = evaluate_alpha(s, Simplex(3), 1e-9)
    assert near.alpha == pytest.approx(-0.1, abs=1e-9)


def test_nonpositive_phi_rejected(two_asset):
    for phi in (-1.0, 0.0, np.nan):
        with pytest.raises(ValidationError):
            solve_simplex_qp(two_asset, phi)
    with pytest.raises(ValidationError):
        evaluate_alpha(two_asset, Simplex(2), -0.5)


def test_single_asset_example():
    s = make_asset_stats(["X"], [0.1], [[0.04]])
    ev = solve_simplex_qp(s, 2.0)
    np.testing.assert_array_equal(ev.theta_hat, [1.0])
    assert ev.alpha == pytest.approx(-0.06, abs=1e-15)
    assert ev.alpha_prime == pytest.approx(0.02, abs=1e-15)


def test_single_asset_is_affine():
    s = make_asset_stats(["X"], [0.1], [[0.04]])
    for phi in (0.3, 3.0, 30.0):
        ev = evaluate_alpha(s, Simplex(1), phi)
        assert ev.alpha == pytest.approx(-0.1 + 0.02 * phi, abs=1e-15)
        assert ev.alpha_prime == pytest.approx(0.02, abs=1e-15)


def test_discrete_two_vertices_cross_at_ten_thirds(two_asset):
    d = Discrete([[1, 0], [0, 1]])
    np.testing.assert_array_equal(alpha_discrete(d, two_asset, 3.0).theta_hat, [1, 0])
    np.testing.assert_array_equal(alpha_discrete(d, two_asset, 3.5).theta_hat, [0, 1])
    phi_star = locate_minimizer_switch(two_asset, d, 1.0, 10.0, rtol=1e-15)
    assert abs(phi_star - 10.0 / 3.0) <= 1e-12


def test_discrete_three_way_example(two_asset):
    d = Discrete([[1, 0], [0, 1], [0.5, 0.5]])
    ev = alpha_discrete(d, two_asset, 5.0)
    np.testing.assert_array_equal(ev.theta_hat, [0.5, 0.5])
    assert ev.alpha == pytest.approx(-0.04375, abs=1e-15)
    assert ev.alpha_prime == pytest.approx(0.00625, abs=1e-15)


def test_discrete_ties_pick_lowest_index():
    s = make_asset_stats(["a", "b"], [0.1, 0.1], np.eye(2) * 0.03)
    ev = alpha_discrete(Discrete([[0, 1], [1, 0]]), s, 2.0)
    np.testing.assert_array_equal(ev.theta_hat, [0, 1])


def test_discrete_dimension_mismatch(two_asset):
    with pytest.raises(ValidationError):
        alpha_discrete(Discrete([[1, 0, 0]]), two_asset, 1.0)


def test_switch_locator_requires_a_change(two_asset):
    with pytest.raises(ValidationError):
        locate_minimizer_switch(two_asset, Simplex(2), 2.0, 50.0)


@pytest.mark.parametrize("universe", ["two", "three", "thirty"])
def test_table_accuracy_off_knots(universe, two_asset, three_asset, synthetic30):
    stats = {"two": two_asset, "three": three_asset, "thirty": synthetic30}[universe]
    table = build_alpha_table(stats, Simplex(stats.n), 0.1, 100.0, 200)
    rng = np.random.default_rng(3)
    phis = np.exp(rng.uniform(np.log(0.1), np.log(100.0), 1000))
    exact = np.array([solve_simplex_qp(stats, p).alpha for p in phis])
    assert np.max(np.abs(table.value(phis) - exact)) <= 1e-6
    exact_d = np.array([solve_simplex_qp(stats, p).alpha_prime for p in phis])
    assert np.max(np.abs(table.derivative(phis) - exact_d)) <= 1e-7
    dense = np.geomspace(0.1, 100.0, 20000)
    assert np.all(np.diff(table.value(dense)) >= -1e-15)
    assert np.all(np.diff(table.derivative(dense)) <= 1e-15)
    assert np.all(table.derivative(dense) >= 0)


def test_table_support_change_knots(two_asset):
    table = build_alpha_table(two_asset, Simplex(2), 0.1, 100.0, 20)
    # support grows from {A} to {A, B} at phi = 1.25; the dual tolerance of
    # the active-set test shifts the detected switch by about 1e-10 / 0.04
    assert np.min(np.abs(table.phi_knots - 1.25)) < 1e-8


def test_discrete_table_is_exact(two_asset):
    d = Discrete([[1, 0], [0, 1], [0.5, 0.5]])
    table = build_alpha_table(two_asset, d, 0.1, 100.0, 50)
    assert table.rule == "piecewise-affine"
    phis = np.geomspace(0.1, 100.0, 777)
    exact = np.array([alpha_discrete(d, two_asset, p).alpha for p in phis])
    np.testing.assert_array_equal(table.value(phis), exact)


def test_two_knot_single_asset_table_is_exact():
    s = make_asset_stats(["X"], [0.1], [[0.04]])
    table = build_alpha_table(s, Simplex(1), 0.5, 50.0, 2)
    phis = np.linspace(0.01, 200.0, 301)
    np.testing.assert_allclose(table.value(phis), -0.1 + 0.02 * phis, rtol=0, atol=1e-15)
    np.testing.assert_allclose(table.derivative(phis), 0.02, rtol=0, atol=1e-17)


def test_table_extrapolation_is_flagged(two_asset):
    table = build_alpha_table(two_asset, Simplex(2), 1.0, 10.0, 30)
    _, _, clamped = table.lookup(np.array([2.0, 5.0]))
    assert not clamped
    a, d, clamped = table.lookup(np.array([20.0]))
    assert clamped
    top = solve_simplex_qp(two_asset, 10.0)
    assert a[0] == pytest.approx(top.alpha + 10.0 * top.alpha_prime, abs=1e-15)
    assert d[0] == pytest.approx(top.alpha_prime, abs=1e-15)


def test_table_rejects_bad_range(two_asset):
    with pytest.raises(ValidationError):
        build_alpha_table(two_asset, Simplex(2), 0.0, 10.0, 30)
    with pytest.raises(ValidationError):
        build_alpha_table(two_asset, Simplex(2), 1.0, 10.0, 1)


@settings(max_examples=40, deadline=None)
@given(x=st.floats(-4, 4), phi=st.floats(0.5, 40.0))
def test_profiled_alpha_matches_scaled_drift(x, phi):
    two_asset = make_asset_stats(["A", "B"], [0.1, 0.05], np.diag([0.04, 0.01]))
    drift = DriftProfile("tanh", level=1.5, amplitude=1.0)
    g = float(drift.g(np.array([x]))[0])
    assume(phi / g < 100.0 and phi / g > 0.1)
    table = build_alpha_table(two_asset, Simplex(2), 0.1, 100.0, 200)
    prof = ProfiledAlpha(table, drift)
    exact = solve_simplex_qp(two_asset.scaled_mu(g), phi)
    assert prof.value(np.array([phi]), np.array([x]))[0] == pytest.approx(exact.alpha, abs=2e-6)
    assert prof.derivative(np.array([phi]), np.array([x]))[0] == pytest.approx(exact.alpha_prime, abs=1e-5)


def test_profiled_alpha_requires_positive_drift(two_asset):
    table = build_alpha_table(two_asset, Simplex(2), 0.1, 100.0, 20)
    prof = ProfiledAlpha(table, DriftProfile("tanh", level=0.5, amplitude=1.0))
    with pytest.raises(ValidationError):
        prof.value(np.array([1.0]), np.array([-3.0]))
