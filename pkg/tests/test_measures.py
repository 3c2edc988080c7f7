import math

import numpy as np
import pytest
from hypothesis import example, given, strategies as st

from artifact import measures as ms
from artifact.measures import EmpiricalMeasure


def test_measure_validation():
    with pytest.raises(ValueError):
        EmpiricalMeasure([])
    with pytest.raises(ValueError):
        EmpiricalMeasure([1.0, -2.0])
    with pytest.raises(ValueError):
        EmpiricalMeasure([1.0, 2.0], [0.5, 0.6])
    mu = EmpiricalMeasure([1.0, 3.0])
    assert np.allclose(mu.weights, 0.5)
    back = EmpiricalMeasure.from_dict(mu.to_dict())
    assert np.array_equal(back.atoms, mu.atoms) and np.array_equal(back.weights, mu.weights)


def test_cumulants_two_atom(two_atom):
    k = ms.cumulants(two_atom)
    assert k.kappa1 == pytest.approx(1.25)
    assert k.kappa2 == pytest.approx(0.5625)
    assert k.kappa2 / k.kappa1 ** 2 == pytest.approx(0.36)


def test_psi_closed_values():
    mu = EmpiricalMeasure([1.0, 2.0])
    # psi(-1) = (-1/2 - 2/3)/2
    assert ms.psi_eval(mu, -1.0) == pytest.approx(-7 / 12, abs=1e-15)
    assert ms.psi_inverse(mu, -7 / 12) == pytest.approx(-1.0, abs=1e-13)
    assert ms.s_transform(mu, 0.0) == pytest.approx(2 / 3)
    assert ms.s_transform(mu, -1.0) == pytest.approx(0.75)
    assert ms.s_derivs_at_zero(mu)[1] == pytest.approx(-2 / 27)


def test_degenerate_measure():
    mu = EmpiricalMeasure([3.0, 3.0])
    assert mu.degenerate
    assert ms.s_transform(mu, -0.4) == pytest.approx(1 / 3)
    assert ms.h_eval(mu, -0.5) == pytest.approx(-0.5 * math.log(3.0))
    assert ms.cauchy_ratio(mu, [-0.2], [-0.3]) == 1.0
    assert ms.psi_inverse(mu, -0.5) == pytest.approx(-0.5 / (3.0 * 0.5))


def test_errors(two_atom):
    with pytest.raises(ms.DomainError):
        ms.psi_inverse(two_atom, 0.5)
    with pytest.raises(ms.DomainError):
        ms.psi_inverse(two_atom, -0.5 + 0.3j)
    with pytest.raises(ms.PoleError):
        ms.psi_eval(two_atom, 0.5)


def test_centering_prefix_sums(two_atom):
    prof = ms.centering([two_atom] * 90, 60)
    assert prof.V_N[90] == pytest.approx(0.54, abs=1e-12)
    assert prof.E_N[90] == pytest.approx(90 * math.log(1.25), rel=1e-13)
    assert prof.E_N[0] == 0 and prof.V_N[0] == 0


def test_h_prime_matches_log_s(two_atom):
    for u in (-0.8, -0.5, -0.1, 0.05):
        h = 1e-4
        fd = (ms.h_eval(two_atom, u + h) - ms.h_eval(two_atom, u - h)) / (2 * h)
        assert fd == pytest.approx(ms.h_prime(two_atom, u), abs=1e-8)


def test_cauchy_ratio_equal_points(two_atom):
    assert ms.cauchy_ratio(two_atom, [-0.3, -0.6], [-0.3, -0.6]) == pytest.approx(1.0)


atoms = st.lists(st.floats(0.1, 10.0), min_size=1, max_size=6)


@given(atoms, st.floats(-0.95, 0.05))
def test_psi_round_trip(x, u):
    mu = EmpiricalMeasure(x)
    z = ms.psi_inverse(mu, u)
    assert ms.psi_eval(mu, z) == pytest.approx(u, abs=1e-10)


@given(atoms, st.floats(-0.9, 0.0), st.floats(-0.09, 0.09))
@example([1.0, 2.0], -0.8956353568716781, 0.0625)
def test_psi_round_trip_complex(x, a, b):
    mu = EmpiricalMeasure(x)
    u = complex(a, b)
    z = ms.psi_inverse(mu, u)
    assert abs(ms.psi_eval(mu, z) - u) <= 1e-10


@pytest.mark.parametrize("x, u", [
    ([6.01589402, 0.19928275], complex(-0.9989421952706624, 0.05719648653963577)),
    ([0.07576844, 5.15187485], complex(-0.9995672658605611, -0.0772727951538355)),
])
def test_psi_inverse_near_minus_one(x, u):
    # real starting point is in the thousands; the root is far off the axis
    mu = EmpiricalMeasure(x)
    z = ms.psi_inverse(mu, u)
    assert abs(ms.psi_eval(mu, z) - u) <= 1e-12
    assert abs(z.imag) > 40


@given(atoms)
def test_s_positive_and_decreasing(x):
    mu = EmpiricalMeasure(x)
    vals = [ms.s_transform(mu, u) for u in np.linspace(-0.9, 0.05, 12)]
    assert all(v > 0 for v in vals)
    assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
