from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growthlab import registry
from growthlab.drivers import Potential, argmin_potential, heat_phi, kpz_phi, max_neighbor, median_driver, rsos_driver
from growthlab.operators import (
    CFLError,
    F_crystalline,
    F_median,
    F_weighted,
    H_max,
    H_pospart,
    Hamiltonian,
    OperatorKind,
    Orientation,
    SingularGradientError,
    SmoothAH,
    classify_partition,
    crystalline_operator,
    envelopes_weighted,
    fd_cross_solver,
    hopf_lax_oracle,
    limit_operator_for,
    median_operator,
    separable_heat_oracle,
    smooth_limit_operator,
    weighted_fractional_operator,
    weighted_power_operator,
)

ALPHA, BETA = 0.7, -1.3
X2 = np.diag([ALPHA, BETA])


def test_first_order_hamiltonians():
    assert H_max([1.0, -3.0, 2.0]) == 3.0
    # each axis contributes (p_i)_+ + (-p_i)_+ = |p_i|
    assert H_pospart([2.0, -2.0]) == 1.0
    assert H_pospart([0.5]) == 0.25


def test_kpz_limit_matches_hand_expansion():
    # Phi on v_+- = +-h p + h^2 X / 2 is h^2 (X / 4 + p^2 / 2)
    op = smooth_limit_operator(kpz_phi(1))
    assert op.A == pytest.approx(np.array([[0.25]]))
    assert op.M == pytest.approx(np.array([[0.5]]))
    assert op.F([[0.8]], [0.6]) == pytest.approx(0.8 / 4 + 0.36 / 2)


def test_heat_limit_is_pure_diffusion():
    op = smooth_limit_operator(heat_phi(2))
    assert op.A == pytest.approx(0.25 * np.eye(2))
    assert not op.M.any()


def test_weighted_examples():
    assert F_weighted(X2, [1.0, 2.0], 2) == pytest.approx((ALPHA + 4 * BETA) / 10)
    r2 = np.sqrt(2)
    assert F_weighted(X2, [1.0, 2.0], 0.5) == pytest.approx((ALPHA + r2 * BETA) / (2 * (1 + r2)))
    assert weighted_power_operator(4).F(X2, [1.0, -2.0]) == pytest.approx((ALPHA + 4 * BETA) / 10)


def test_weighted_singular_at_zero():
    with pytest.raises(SingularGradientError):
        F_weighted(X2, [0.0, 0.0], 2)
    op = weighted_fractional_operator(0.5)
    assert op.is_singular([0.0, 0.0])
    assert op.envelopes(X2, [0.0, 0.0]) == envelopes_weighted(X2) == (ALPHA / 2, BETA / 2)
    with pytest.raises(SingularGradientError):
        op.F(X2, [0.0, 0.0])


def test_partition_orientations():
    X = np.diag([1.0, 2.0, 3.0])
    assert F_median(X, [1.0, 3.0, 2.0]) == 0.5
    assert F_crystalline(X, [1.0, 0.0, 0.0]) == 0.5
    assert F_crystalline(X, [1.0, 3.0, 2.0]) == 1.0
    assert classify_partition([-2.0, 2.0, 5.0], Orientation.MIN_COORDINATES).coords == {0, 1}
    assert classify_partition([-2.0, 2.0, 5.0], Orientation.MAX_COORDINATES).singleton == 2


def test_median_example_in_two_dimensions():
    X = np.array([[0.9, 0.4], [0.4, -0.2]])
    assert median_operator().F(X, [1.0, 3.0]) == pytest.approx(0.45)


def test_tie_envelopes():
    X = np.diag([1.0, -2.0, 4.0])
    assert F_median(X, [1.0, -1.0, 3.0]) == (0.5, -1.0)
    assert F_crystalline(X, [1.0, 3.0, -3.0]) == (2.0, -1.0)
    op = crystalline_operator()
    assert op.is_singular([0.0, 0.0, 0.0])
    assert op.upper(X, [0, 0, 0]) == 2.0 and op.lower(X, [0, 0, 0]) == -1.0
    with pytest.raises(SingularGradientError):
        median_operator().F(X, [1.0, 1.0, 3.0])


@pytest.mark.parametrize(
    "drv, kind",
    [
        (max_neighbor(), OperatorKind.HJ_MAX),
        (argmin_potential(Potential.power(6)), OperatorKind.WEIGHTED_POWER),
        (argmin_potential(Potential.fractional(0.25)), OperatorKind.WEIGHTED_FRACTIONAL),
        (argmin_potential(Potential.absolute()), OperatorKind.MEDIAN),
        (argmin_potential(Potential.flat_well(1.0)), OperatorKind.CRYSTALLINE),
        (median_driver(), OperatorKind.MEDIAN),
        (rsos_driver(), OperatorKind.CRYSTALLINE),
    ],
    ids=lambda v: getattr(v, "name", ""),
)
def test_limit_operator_for(drv, kind):
    assert limit_operator_for(drv).kind is kind


def test_custom_potential_has_no_known_operator():
    pot = Potential.custom(lambda y: np.cosh(y), lambda y: np.sinh(y))
    assert limit_operator_for(argmin_potential(pot)) is None


def test_hopf_lax_tent_values():
    tent = registry.initial_data("tent")
    assert hopf_lax_oracle("hj_max", tent, [0.5], 0.25) == pytest.approx(0.75, abs=1e-12)
    # the l1 ball about (1/2, 1/2) reaches the origin's nearest point (3/8, 3/8)
    assert hopf_lax_oracle("hj_max", tent, [0.5, 0.5], 0.25) == pytest.approx(1 - 0.375 * np.sqrt(2), abs=1e-12)
    # the cube of half-width t / 4 has nearest corner (7/16, 7/16)
    assert hopf_lax_oracle(Hamiltonian.HJ_POSPART, tent, [0.5, 0.5], 0.25) == pytest.approx(
        1 - 0.4375 * np.sqrt(2), abs=1e-12
    )
    assert hopf_lax_oracle("hj_max", tent, [0.1, -0.2], 0.5) == pytest.approx(1.0, abs=1e-12)


def test_hopf_lax_initial_time_and_vector_input():
    bump = registry.initial_data("bump")
    pts = np.array([[0.3, 0.1], [-1.0, 2.0]])
    assert np.array_equal(hopf_lax_oracle("hj_max", bump, pts, 0.0), bump(pts))
    many = hopf_lax_oracle("hj_max", bump, pts, 0.3)
    assert many[1] == hopf_lax_oracle("hj_max", bump, pts[1], 0.3)
    with pytest.raises(ValueError):
        hopf_lax_oracle("hj_max", bump, pts, -1.0)


def test_hopf_lax_against_dense_brute_force():
    bump = registry.initial_data("bump")
    x, t = np.array([1.1]), 0.4
    ys = np.linspace(x[0] - t, x[0] + t, 400_001)
    assert hopf_lax_oracle("hj_max", bump, x, t) == pytest.approx(bump(ys[:, None]).max(), abs=1e-10)


def test_separable_heat():
    cos = registry.initial_data("cos")
    assert separable_heat_oracle(cos, 0.5, 0.0, 2.0) == pytest.approx(np.exp(-1.0))
    got = separable_heat_oracle([(1, 1.0), (3, 0.5)], 0.25, np.array([0.0, np.pi]), 1.0)
    want = np.exp(-0.25) * np.cos([0, np.pi]) + 0.5 * np.exp(-2.25) * np.cos([0, 3 * np.pi])
    assert got == pytest.approx(want)
    with pytest.raises(ValueError):
        separable_heat_oracle(registry.initial_data("bump"), 0.5, 0.0, 1.0)


def test_fd_solver_reproduces_heat():
    op = SmoothAH(np.diag([0.25]), np.zeros((1, 1)))
    cos = registry.initial_data("cos")
    sol = fd_cross_solver(op, cos, [(-np.pi, np.pi)], 0.5, 2 * np.pi / 128)
    xs = np.linspace(-np.pi, np.pi, 41)
    err = np.max(np.abs(sol(xs[:, None], 0.5) - separable_heat_oracle(cos, 0.25, xs, 0.5)))
    assert err <= 1e-3


def test_fd_solver_two_dimensions_separable():
    op = SmoothAH(np.diag([0.25, 0.25]), np.zeros((2, 2)))
    cos = registry.initial_data("cos")
    sol = fd_cross_solver(op, cos, [(-1, 1), (-1, 1)], 0.25, 0.05, times=[0.125])
    pts = np.array([[0.0, 0.0], [0.5, -0.3]])
    assert sol(pts, 0.125) == pytest.approx(separable_heat_oracle(cos, 0.25, pts[:, 0], 0.125), abs=1e-3)
    with pytest.raises(ValueError):
        sol(pts, 0.2)


def test_fd_solver_cfl_guard():
    op = SmoothAH(np.diag([0.25]), np.zeros((1, 1)))
    # bound is dx^2 / (2 * 0.25) = 0.02 at dx = 0.1
    with pytest.raises(CFLError):
        fd_cross_solver(op, registry.initial_data("cos"), [(-1, 1)], 0.1, 0.1, dt=0.03)
    fd_cross_solver(op, registry.initial_data("cos"), [(-1, 1)], 0.1, 0.1, dt=0.02)


@settings(max_examples=100, deadline=None)
@given(
    p=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    diag=st.lists(st.floats(-3, 3), min_size=2, max_size=2),
    bump=st.lists(st.floats(0, 2), min_size=2, max_size=2),
    which=st.sampled_from(["power4", "frac", "median", "crystalline"]),
)
def test_degenerate_ellipticity(p, diag, bump, which):
    op = {
        "power4": weighted_power_operator(4),
        "frac": weighted_fractional_operator(0.5),
        "median": median_operator(),
        "crystalline": crystalline_operator(),
    }[which]
    X, Y = np.diag(diag), np.diag(np.add(diag, bump))
    up_x, lo_x = op.envelopes(X, p)
    up_y, lo_y = op.envelopes(Y, p)
    assert up_y >= up_x - 1e-12 and lo_y >= lo_x - 1e-12


def test_weighted_survives_subnormal_gradient():
    assert F_weighted(X2, [0.0, 5e-324], 2) == pytest.approx(BETA / 2)
    assert F_weighted(X2, [1e-300, 2e-300], 2) == pytest.approx((ALPHA + 4 * BETA) / 10)
