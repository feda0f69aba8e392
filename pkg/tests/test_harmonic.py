from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from quasiwalk.group import FreeAbelianGroup
from quasiwalk.harmonic import (
    CoverageError,
    biharmonic_approx,
    distortion,
    psi,
    psi_recursion_gap,
    residual_identity_gap,
    residuals,
    tameness_check,
)
from quasiwalk.measure import FiniteMeasure, convolution_powers
from quasiwalk.quasimorphism import BrooksQuasimorphism, Homomorphism, homogenize

from conftest import F2

Z = FreeAbelianGroup(["t"])
BIASED = FiniteMeasure(Z, {(1,): Fraction(7, 10), (-1,): Fraction(3, 10)}, exact=True)
ID = Homomorphism(Z, [1])


@pytest.fixture(scope="module")
def small_exact():
    mu = FiniteMeasure.simple_random_walk(F2)
    phi = BrooksQuasimorphism(F2, F2.parse("a b"))
    return biharmonic_approx(phi, mu, 3, F2.enumerate_ball(1), "exact")


def test_distortion_of_homomorphism_is_exact():
    d = distortion(ID, BIASED, 6)
    assert d.a == pytest.approx([0.4 * n for n in range(7)])
    assert d.ell == pytest.approx(0.4) and d.error == 0


def test_distortion_monte_carlo_agrees():
    d = distortion(ID, BIASED, 20, "monte-carlo", samples=4000, seed=2)
    assert abs(d.ell - 0.4) <= d.error


def test_subadditivity(srw, phi_ab):
    hat, _ = homogenize(phi_ab, 6)
    d = distortion(hat, srw, 6)
    assert d.subadditivity_gap() <= hat.defect_bound + 1e-9


def test_psi_zero_at_step_zero(srw, phi_ab):
    hat, _ = homogenize(phi_ab, 6)
    for g in F2.enumerate_ball(2):
        assert psi(hat, srw, 0, g)[0] == 0


def test_psi_vanishes_for_homomorphisms(srw):
    h = Homomorphism(F2, [1, 3])
    pw = convolution_powers(srw, 3)
    for g in F2.enumerate_ball(1):
        assert psi(h, srw, 3, g, powers=pw)[0] == pytest.approx(0, abs=1e-12)


def test_psi_recursion(srw, phi_ab):
    hat, _ = homogenize(phi_ab, 6)
    pw = convolution_powers(srw, 3)
    for g in F2.enumerate_ball(1):
        assert psi_recursion_gap(hat, srw, 2, g, pw) <= 1e-12


def test_exact_residual_identity(small_exact):
    ap = small_exact
    assert ap.values[()] == 0
    assert residual_identity_gap(ap) <= 1e-9
    rep = residuals(ap)
    assert rep.max_right() <= ap.residual_slack


def test_two_routes_agree(small_exact):
    ap = small_exact
    nu = ap.cesaro_sample(None)
    for g in ap.eval_set:
        assert ap.value_with(g, nu) == pytest.approx(ap.values[g], abs=1e-12)


def test_homomorphism_is_harmonic(srw):
    h = Homomorphism(F2, [1, -1])
    ap = biharmonic_approx(h, srw, 2, F2.enumerate_ball(1), "exact")
    for g in ap.eval_set:
        assert ap.values[g] == pytest.approx(h(g), abs=1e-12)
    assert residuals(ap).max_right() <= 1e-12


def test_monte_carlo_matches_exact(small_exact, srw, phi_ab):
    mc = biharmonic_approx(phi_ab, srw, 3, F2.enumerate_ball(1), "monte-carlo", samples=400, seed=5)
    for g in mc.eval_set:
        se = mc.value_se[g] + mc.value_se[()]
        assert abs(mc.values[g] - small_exact.values[g]) <= 4 * se + 1e-12


def test_coverage_error(small_exact):
    ap = small_exact
    saved = ap.eval_set
    ap.eval_set = saved + [F2.parse("a b a b")]
    try:
        with pytest.raises(CoverageError):
            residuals(ap)
    finally:
        ap.eval_set = saved


def test_tame_scenario():
    mu = FiniteMeasure.uniform(F2, [F2.parse("a"), F2.parse("a^-1")])
    phi_b = BrooksQuasimorphism(F2, F2.parse("b"))
    v = tameness_check(phi_b, mu, 32)
    assert v.tame and v.constant == 0


def test_integer_walk_not_tame():
    mu = FiniteMeasure.simple_random_walk(Z)
    v = tameness_check(ID, mu, 64)
    assert not v.tame
    assert v.witness[2] == 64


@settings(max_examples=15)
@given(st.integers(1, 6))
def test_tameness_curve_lower_bounds_are_attained(n):
    # every reported extremal value is realized by an element of supp mu^{*n}
    mu = FiniteMeasure.simple_random_walk(F2)
    phi = BrooksQuasimorphism(F2, F2.parse("a b"))
    v = tameness_check(phi, mu, n)
    support = convolution_powers(mu, n)[n]
    assert v.curve[n] == max(abs(phi(g)) for g in support.weights)
