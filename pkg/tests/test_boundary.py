import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from quasiwalk.boundary import (
    ModeError,
    TranslatedRay,
    UnsupportedGroupError,
    boundary_variance,
    cocycle,
    cocycle_identity_check,
    cylinder_frequencies,
    cylinder_measure,
    cylinders,
    homomorphism_boundary_variance,
    kernel_weights,
    random_triples,
    rn_derivative,
    rn_kernel_check,
    sample_rays,
    stationarity_check,
)
from quasiwalk.group import free_mul
from quasiwalk.harmonic import monte_carlo_approx
from quasiwalk.measure import FiniteMeasure
from quasiwalk.quasimorphism import BrooksQuasimorphism, Homomorphism
from quasiwalk.rng import stream

from conftest import F2, Z1, free_words

SRW = FiniteMeasure.simple_random_walk(F2)
HOM = Homomorphism(F2, [2, -1])


@pytest.fixture(scope="module")
def rays():
    return sample_rays(SRW, 400, seed=5)


@pytest.fixture(scope="module")
def brooks_approx():
    return monte_carlo_approx(BrooksQuasimorphism(F2, F2.parse("a b")), SRW, 64, seed=1)


def test_prefixes_are_reduced_and_deterministic():
    a = sample_rays(SRW, 20, seed=3)
    b = sample_rays(SRW, 20, seed=3)
    for x, y in zip(a, b):
        p = x.prefix(50)
        assert len(p) == 50 and F2.reduce(p) == p
        assert y.prefix(10) == p[:10]
        assert y.prefix(50) == p


def test_cylinder_measure_values():
    assert cylinder_measure(2, ()) == 1
    assert cylinder_measure(2, (1,)) == Fraction(1, 4)
    assert cylinder_measure(2, (1, 2)) == Fraction(1, 12)
    for n in (1, 2, 3):
        assert sum(cylinder_measure(2, w) for w in cylinders(2, n) if len(w) == n) == 1


def test_translated_ray_prefix(rays):
    h = F2.parse("b a^-1")
    t = TranslatedRay(h, rays[0])
    assert t.prefix(30) == free_mul(h, rays[0].prefix(30))


def test_homomorphism_cocycle_is_phi(rays):
    approx = monte_carlo_approx(HOM, SRW, 32, seed=0)
    for g in F2.enumerate_ball(2):
        for r in rays[:5]:
            c = cocycle(approx, g, r, 40)
            assert c.value == pytest.approx(HOM(g), abs=1e-9)
            assert c.gap == pytest.approx(0, abs=1e-9)


def test_cocycle_at_identity_vanishes(brooks_approx, rays):
    for r in rays[:20]:
        assert cocycle(brooks_approx, (), r, 64).value == 0


@settings(max_examples=25)
@given(free_words(F2, 4), st.integers(0, 399))
def test_cocycle_inverse(brooks_approx, rays, g, i):
    r = rays[i]
    L = 64
    sample = brooks_approx.cesaro_sample(stream(0, "inverse", i))
    fwd = cocycle(brooks_approx, g, r, L, sample)
    back = cocycle(brooks_approx, F2.inv(g), TranslatedRay(g, r), L, sample)
    assert abs(fwd.value + back.value) <= 2 * (fwd.gap + back.gap) + 1e-9


def test_cocycle_identity_within_gaps(brooks_approx, rays):
    triples = random_triples(F2, rays[:40], 2, seed=2)
    rep = cocycle_identity_check(brooks_approx, triples, 64, seed=2)
    assert rep.within_gaps()


def test_exact_stationarity():
    rows = stationarity_check(SRW, 3)
    assert max(r.residual for r in rows) == 0.0


def test_monte_carlo_stationarity():
    rays = sample_rays(SRW, 4000, seed=11)
    words = [w for w in cylinders(2, 3)][::5][:10]
    for row in stationarity_check(SRW, rays=rays, words=words):
        assert row.residual <= 3 * row.se + 1e-12


def test_cylinder_frequencies(rays):
    assert all(f.within(3.5) for f in cylinder_frequencies(rays, 2))


def test_trajectory_limit_agrees_with_hitting():
    traj = sample_rays(SRW, 3000, "trajectory-limit", seed=4)
    freqs = cylinder_frequencies(traj, 1)
    assert all(f.within(3.5) for f in freqs)


def test_homomorphism_boundary_variance(rays):
    approx = monte_carlo_approx(HOM, SRW, 16, seed=0)
    bv = boundary_variance(approx, rays, 32, seed=1)
    exact = homomorphism_boundary_variance(HOM, SRW)
    assert exact == pytest.approx((4 + 4 + 1 + 1) / 4)
    assert abs(bv.sigma2 - exact) <= 3 * bv.se + 1e-9


def test_kernel_weights_sum_to_one():
    for K in (1, 4, 16):
        c = kernel_weights(K)
        assert c.sum() == pytest.approx(1.0)
        assert all(c[i] >= c[i + 1] for i in range(K - 1))


def test_rn_derivative_values(rays):
    a = F2.parse("a")
    for r in rays[:50]:
        rho = rn_derivative(a, r, 20, 2)
        assert rho in (1 / 3, 3.0)
        assert (rho == 3.0) == (r.prefix(1) == a)


def test_rn_kernel_identity_is_zero(brooks_approx):
    chk = rn_kernel_check(brooks_approx, (), 50, K=4, L=32)
    assert chk.reconstruction == 0 and chk.passes()


def test_rn_kernel_homomorphism():
    approx = monte_carlo_approx(HOM, SRW, 16, seed=0)
    g = F2.parse("a")
    chk = rn_kernel_check(approx, g, 400, K=8, L=32, reference_samples=200)
    assert chk.passes()


def test_errors():
    with pytest.raises(UnsupportedGroupError):
        sample_rays(FiniteMeasure.simple_random_walk(Z1), 1)
    lazy = FiniteMeasure.uniform(F2, [F2.parse("a"), F2.parse("a^-1")])
    with pytest.raises(ModeError):
        sample_rays(lazy, 1, "trajectory-limit")
    with pytest.raises(ModeError):
        stationarity_check(lazy)
