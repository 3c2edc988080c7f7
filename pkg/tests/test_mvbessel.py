import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from artifact import mvbessel as mb
from artifact.measures import EmpiricalMeasure


def test_two_by_two_closed_form():
    # z = (2, 0): the integral of the top-left entry of U diag(x) U*
    assert mb.bessel_normalized([1.0, math.e ** 2], [2, 0]) == pytest.approx((1 + math.e ** 2) / 2, rel=1e-14)


def test_rho_gives_one():
    for N in (1, 2, 5, 9):
        x = np.linspace(0.3, 4.0, N)
        assert mb.bessel_normalized(x, np.arange(N - 1, -1, -1)) == pytest.approx(1.0, rel=1e-14)


def test_one_dimensional():
    assert mb.bessel_normalized([3.0], [0.7 + 0.2j]) == pytest.approx(3.0 ** (0.7 + 0.2j), rel=1e-14)


def test_confluent_limits_continuous():
    x = [1.0, 1.0, 2.0]
    near = [1.0, 1.0 + 1e-7, 2.0]
    a = mb.bessel_normalized(x, [3.0, 1.0, 0.0])
    b = mb.bessel_normalized(near, [3.0, 1.0, 0.0])
    assert a == pytest.approx(4 / 3, rel=1e-14)
    assert b == pytest.approx(a, rel=1e-6)
    z_conf = mb.bessel_normalized([0.5, 1.5, 2.5], [2.0, 2.0, 0.0])
    z_near = mb.bessel_normalized([0.5, 1.5, 2.5], [2.0, 2.0 + 1e-6, 0.0])
    assert z_near == pytest.approx(z_conf, rel=1e-5)
    # fully degenerate spectrum: B = c^{sum z - sum rho}
    assert mb.bessel_normalized([2.0] * 3, [3.5, 1.0, 0.2]) == pytest.approx(2.0 ** (4.7 - 3), rel=1e-13)


@given(st.permutations(range(4)), st.permutations(range(4)))
def test_symmetric(px, pz):
    x = np.array([0.4, 1.1, 2.0, 3.3])
    z = np.array([3.2, 1.7, 1.1, -0.4])
    base = mb.bessel_normalized(x, z)
    assert mb.bessel_normalized(x[list(px)], z[list(pz)]) == pytest.approx(base, rel=1e-13)


def test_overflow_guard():
    with pytest.raises(mb.OverflowGuardError):
        mb.bessel_normalized([1e300, 1.0], [1e4, 0.0])


@given(st.integers(1, 6), st.sampled_from([0.3, 1.0, 1.7]), st.integers(0, 2 ** 31))
def test_eigenrelation(N, c, seed):
    g = np.random.default_rng(seed)
    x = g.uniform(0.2, 5.0, N)
    z = np.sort(g.uniform(-1.0, N + 1.0, N))[::-1] + 1j * g.uniform(-0.5, 0.5, N) * (N > 1)
    if N > 1 and np.min(np.abs(z[:, None] - z[None, :]) + np.eye(N)) <= 1e-3:
        return
    assert mb.eigenrelation_check(x, z, c) <= 1e-10


def test_eigenrelation_conditioning():
    with pytest.raises(mb.ConditioningError):
        mb.eigenrelation_check([1.0, 2.0], [1.0, 1.0 + 1e-8], 0.5)


@pytest.mark.parametrize("x,z", [([1.0, math.e ** 2], [2.0, 0.0]),
                                 ([0.5, 1.0, 2.0], [2.5, 1.0, 0.2]),
                                 ([0.5, 1.0, 2.0], [2.3 + 0.4j, 1.0, -0.2j])])
def test_gelfand_naimark_monte_carlo(x, z):
    est, se = mb.gn_integral_mc(x, z, 40000, seed=3)
    assert abs(est - mb.bessel_normalized(x, z)) < 4 * se


def test_gn_workers_invariant():
    a = mb.gn_integral_mc([0.5, 2.0, 3.0], [2.2, 0.9, 0.1], 5000, seed=1, workers=1)
    b = mb.gn_integral_mc([0.5, 2.0, 3.0], [2.2, 0.9, 0.1], 5000, seed=1, workers=2)
    assert a == b


def test_shift_calculus_examples():
    assert mb.rational_prefactor(mb.ShiftSpec(), 1, 0.5, 2) == pytest.approx(1.5)
    f = mb.BesselFactor([1.0, 2.0])
    assert mb.apply_shift_product([f], mb.ShiftSpec((1,), (1.0,))) == pytest.approx(1.5)
    assert mb.GaussianFactor(0.7, 4).log_at(mb.ShiftSpec().point(4)) == pytest.approx(0.0)
    g = mb.GaussianFactor(0.7, 2)
    assert mb.apply_shift_product([f, (g, 2)], mb.ShiftSpec(), N=2) == pytest.approx(1.0)


def test_observable_single_size():
    # N = 1: y(M) is the product of the atoms
    sp = [[2.0], [0.5], [3.0]]
    v = mb.observable_deterministic(sp, [3, 1], [0.3, 0.4], 1)
    assert v == pytest.approx(3.0 ** 0.3 * 2.0 ** 0.4, rel=1e-13)


def test_observable_guards():
    with pytest.raises(ValueError):
        mb.observable_deterministic([[1.0, 2.0]], [1], [0.7, 0.5], 2)
    with pytest.raises(mb.CostGuardError):
        mb.observable_deterministic([[1.0] * 9], [1], [0.5], 9)


def test_observable_c_one_identity():
    # sum over i of the prefactors times the Bessel shifts is the mean trace
    sp = [[0.5, 2.0, 1.0]] * 2
    # c must lie in (0,1); use the eigenrelation instead at c = 1
    f = mb.BesselFactor(sp[0])
    tot = sum(mb.rational_prefactor(mb.ShiftSpec(), i, 1.0, 3) *
              mb.apply_shift_product([(f, 2)], mb.ShiftSpec((i,), (1.0,))) for i in (1, 2, 3))
    assert tot.real == pytest.approx(3 * np.mean(sp[0]) ** 2, rel=1e-12)


def test_asymptotic_trivial_and_trend():
    mu = EmpiricalMeasure([0.5, 2.0])
    assert mb.bessel_asymptotic(mb.AsymptoticInput(mu, (-0.3,), (-0.3,))) == 1
    errs = []
    for N in (10, 20, 40):
        x = np.array([0.5] * (N // 2) + [2.0] * (N // 2))
        m = EmpiricalMeasure(x)
        exact = mb.bessel_lattice(x, [0.0], [-1 / N])
        approx = mb.bessel_asymptotic(mb.AsymptoticInput(m, (0.0,), (-1 / N,)))
        errs.append(abs(exact - approx) / abs(exact))
    assert errs[0] > errs[1] > errs[2]


def test_lattice_validation():
    with pytest.raises(ValueError):
        mb.bessel_lattice([1.0, 2.0], [0.0], [-0.3])


def test_sigma_tau_single_index():
    N = 24
    x = [0.5] * 12 + [2.0] * 12
    rows = mb.sigma_tau_diagnostic([x] * N, N, 1, [0.5], [N])
    assert [r[0] for r in rows] == [(1,), (2,)]
    assert all(0.8 <= r[3] <= 1.25 for r in rows)
    assert rows[0][2] > rows[1][2]
