from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from growthlab.drivers import (
    Driver,
    DriverKind,
    MonotonicityMode,
    Potential,
    ScalingMode,
    SmoothPhiSpec,
    argmin_fracpower,
    argmin_potential,
    argmin_power,
    check_monotonicity,
    detect_scaling,
    generic_convex_argmin,
    heat_phi,
    kpz_phi,
    linear_increment,
    max_neighbor,
    median_driver,
    median_midpoint,
    pospart_average,
    rsos_driver,
    rsos_midpoint,
    smooth_phi,
)

# Root of y^3 + (y-1)^3 + (y-2)^3 + (y-5)^3, from numpy's companion-matrix polynomial roots.
K4_ROOT_0125 = 2.4214424777194785
# Root of sum sign(y-c)|y-c|^1.5 for c = (0, 1, 2, 5), from scipy brentq at xtol 1e-15.
FRAC_ROOT_0125 = 2.2025797085260677

tuples = st.lists(st.floats(-5, 5, allow_nan=False), min_size=4, max_size=4)


def test_power_argmin_against_polynomial_root():
    assert argmin_power(4, [0, 1, 2, 5]) == pytest.approx(K4_ROOT_0125, abs=1e-11)


def test_power_argmin_against_grid_search():
    ys = np.linspace(0, 5, 5_000_001)
    c = np.array([0, 1, 2, 5.0])
    brute = ys[np.argmin(((ys[:, None] - c) ** 4).sum(1))]
    assert argmin_power(4, c) == pytest.approx(brute, abs=1e-6)


def test_quadratic_power_is_the_mean():
    assert argmin_power(2, [1.0, 2.0, 6.0, -1.0]) == pytest.approx(2.0)


def test_fractional_argmin_against_brentq():
    assert argmin_fracpower(0.5, [0, 1, 2, 5]) == pytest.approx(FRAC_ROOT_0125, abs=1e-11)


def test_median_midpoint_examples():
    assert median_midpoint([0, 0, 4, 10]) == 2.0
    assert median_midpoint([3, -1, 7, 2, 2, 9]) == 2.5
    with pytest.raises(ValueError):
        median_midpoint([1, 2, 3])


def test_rsos_midpoint():
    assert rsos_midpoint([0.3, -0.1, 0.2, 0.0]) == pytest.approx(0.1)


def test_vectorised_argmins_match_scalar_calls():
    rng = np.random.default_rng(4)
    c = rng.normal(size=(4, 50))
    vec = argmin_power(4, c)
    for j in range(50):
        assert vec[j] == argmin_power(4, c[:, j])


@pytest.mark.parametrize("bad", [lambda: Potential.power(3), lambda: Potential.power(0),
                                 lambda: Potential.fractional(1.0), lambda: Potential.flat_well(0.0)])
def test_potential_parameter_validation(bad):
    with pytest.raises(ValueError):
        bad()


def test_potential_check_catches_asymmetry():
    Potential.power(4).check()
    Potential.flat_well(0.5).check()
    lop = Potential.custom(lambda y: np.maximum(np.asarray(y), 0) ** 2, lambda y: 2 * np.maximum(np.asarray(y), 0))
    with pytest.raises(ValueError, match="symmetric"):
        lop.check()


def test_generic_abs_matches_median():
    rng = np.random.default_rng(0)
    c = rng.uniform(-3, 3, (4, 1000))
    absv = Potential.custom(lambda y: np.abs(y), Potential.absolute().d_left, Potential.absolute().d_right)
    got = generic_convex_argmin(absv, c)
    assert np.max(np.abs(got - median_midpoint(c))) <= 1e-9


def test_generic_flat_well_is_rsos_inside_the_well():
    rng = np.random.default_rng(1)
    c = rng.uniform(-0.4, 0.4, (4, 500))
    got = generic_convex_argmin(Potential.flat_well(0.5), c)
    assert np.max(np.abs(got - rsos_midpoint(c))) <= 1e-9


def test_generic_power_matches_bisection():
    rng = np.random.default_rng(2)
    c = rng.normal(size=(4, 200))
    assert np.max(np.abs(generic_convex_argmin(Potential.power(4), c) - argmin_power(4, c))) <= 1e-9


def test_generic_argmin_rejects_unbounded_objective():
    lin = Potential.custom(lambda y: -np.asarray(y), lambda y: -np.ones_like(np.asarray(y, float)))
    with pytest.raises(ValueError, match="no finite minimiser"):
        generic_convex_argmin(lin, [0.0, 1.0])


def test_kpz_spec():
    spec = kpz_phi(1)
    assert spec.gradient_at_zero() == pytest.approx([0.25, 0.25])
    v = np.array([0.3, -0.1])
    assert spec.Phi(v) == pytest.approx(0.25 * 0.2 + 0.125 * 0.16)


def test_asymmetric_smooth_phi_rejected():
    spec = SmoothPhiSpec("lopsided", 1, lambda v: 0.3 * v[0] + 0.1 * v[1])
    with pytest.raises(ValueError, match="differs"):
        smooth_phi(spec)


def test_monotonicity_certificates():
    assert check_monotonicity(heat_phi(2)).condition is MonotonicityMode.GLOBAL
    cert = check_monotonicity(kpz_phi(1))
    assert cert.condition is MonotonicityMode.AT_ZERO and cert.margin == pytest.approx(0.25)  # min(1 - 1/2, 1/4)
    steep = SmoothPhiSpec("steep", 1, lambda v: 0.8 * (v[0] + v[1]))
    bad = check_monotonicity(steep)
    assert not bad.holds and bad.violation["condition"].startswith("1 - div")


@pytest.mark.parametrize(
    "drv, mode",
    [
        (max_neighbor(), ScalingMode.HYPERBOLIC),
        (pospart_average(), ScalingMode.HYPERBOLIC),
        (smooth_phi(kpz_phi(1)), ScalingMode.PARABOLIC),
        (smooth_phi(heat_phi(2)), ScalingMode.PARABOLIC),
        (argmin_potential(Potential.power(4)), ScalingMode.PARABOLIC),
        (argmin_potential(Potential.fractional(0.5)), ScalingMode.PARABOLIC),
        (argmin_potential(Potential.flat_well(0.5)), ScalingMode.PARABOLIC),
        (median_driver(), ScalingMode.PARABOLIC),
        (rsos_driver(), ScalingMode.PARABOLIC),
    ],
    ids=lambda v: getattr(v, "name", getattr(v, "value", "")),
)
def test_detect_scaling(drv, mode):
    assert detect_scaling(drv) is mode


def test_linear_increment_of_max():
    assert linear_increment(max_neighbor(), [1.0, -2.0]) == 2.0
    assert linear_increment(pospart_average(), [2.0, -2.0]) == 1.0


def test_custom_driver_is_usable():
    drv = Driver(DriverKind.MAX_NEIGHBOR, "custom", lambda c: np.zeros(c.shape[1:]))
    assert drv.phi(np.array([1.0]), np.zeros((2, 1)))[0] == 1.0


@settings(max_examples=200, deadline=None)
@given(c=tuples, kappa=st.floats(-50, 50))
def test_argmins_are_translation_equivariant(c, kappa):
    c = np.array(c)
    for f in (lambda v: argmin_power(4, v), lambda v: argmin_fracpower(0.5, v), median_midpoint):
        assert f(c + kappa) == pytest.approx(f(c) + kappa, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(c=tuples, i=st.integers(0, 3), bump=st.floats(0, 3))
def test_argmins_are_monotone(c, i, bump):
    c = np.array(c)
    raised = c.copy()
    raised[i] += bump
    for f in (lambda v: argmin_power(4, v), lambda v: argmin_fracpower(0.5, v), median_midpoint, rsos_midpoint):
        assert f(raised) >= f(c) - 1e-11


@settings(max_examples=100, deadline=None)
@given(c=tuples, y=st.floats(-5, 5))
def test_power_argmin_is_optimal(c, y):
    c = np.array(c)
    star = argmin_power(4, c)
    assert np.sum((star - c) ** 4) <= np.sum((y - c) ** 4) + 1e-9
