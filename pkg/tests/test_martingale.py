import pytest

from quasiwalk.harmonic import biharmonic_approx, monte_carlo_approx
from quasiwalk.martingale import increments_table, martingale_sandwich, martingale_sigma
from quasiwalk.measure import FiniteMeasure
from quasiwalk.quasimorphism import BoundedNoise, BrooksQuasimorphism, Homomorphism, combine

from conftest import F2, Z1


def test_integer_walk_sigma_is_one():
    mu = FiniteMeasure.simple_random_walk(Z1)
    approx = biharmonic_approx(Homomorphism(Z1, [1]), mu, 16, [()])
    rep = martingale_sigma(approx, 8, 2000, seed=1)
    assert rep.sigma == pytest.approx(1.0, abs=0.02)
    assert rep.gap_max == 0


def test_tame_sigma_is_zero():
    a = F2.parse("a")
    mu = FiniteMeasure(F2, {a: 1})
    phi = combine([(1.0, Homomorphism(F2, [1, 0])), (1.0, BoundedNoise(F2, 0.5, seed=3))])
    approx = biharmonic_approx(phi, mu, 8, [()])
    rep = martingale_sigma(approx, 8, 200, seed=0, ell=1.0)
    assert rep.sigma == 0.0


def test_brooks_increments_are_centered(srw, phi_ab):
    approx = monte_carlo_approx(phi_ab, srw, 64, seed=2)
    rep = martingale_sigma(approx, 32, 800, seed=4, keep=True)
    assert rep.centered()
    assert 0.2 < rep.sigma < 0.45
    rows = increments_table(rep)
    assert len(rows) == 800 and rows[0][0] == 0


def test_sandwich_holds(srw, phi_ab):
    approx = monte_carlo_approx(phi_ab, srw, 64, seed=2)
    rep = martingale_sandwich(phi_ab, approx, 24, 10, K=16, seed=1)
    assert rep.ok
    assert rep.defect == phi_ab.defect_bound


def test_argument_checks(srw, phi_ab):
    approx = monte_carlo_approx(phi_ab, srw, 16)
    with pytest.raises(ValueError):
        martingale_sigma(approx, 0, 10)
