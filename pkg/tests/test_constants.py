import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodalfield.constants import (
    StructuredHessianLaw, betti_constant, betti_prefactor, expected_det, involution_sum,
    radial_moment, sample_M, signed_det_moments, universal_c, universal_constants,
    verify_integral_identities, wick_expected_det,
)
from nodalfield.errors import CapacityError, ParameterError
from nodalfield.torus_spectrum import sphere_area


def test_radial_moments():
    assert radial_moment(1) == 1.0
    assert radial_moment(3) == 2.0
    assert radial_moment(0) == pytest.approx(math.sqrt(math.pi / 2))
    assert radial_moment(4) == pytest.approx(3 * math.sqrt(math.pi / 2))
    with pytest.raises(ParameterError):
        radial_moment(-1)


@given(st.integers(0, 30))
def test_radial_recurrence(k):
    assert radial_moment(k + 2) == pytest.approx((k + 1) * radial_moment(k), rel=1e-14)


def test_radial_moment_by_quadrature():
    from scipy.integrate import quad
    for k in range(7):
        val, _ = quad(lambda t: t**k * math.exp(-t * t / 2), 0, math.inf)
        assert radial_moment(k) == pytest.approx(val, rel=1e-10)


def test_c_values():
    assert universal_c(2) == pytest.approx(1 / (4 * math.pi))
    assert universal_c(3) == pytest.approx(1 / ((2 * math.pi) ** 1.5 * 3 * math.sqrt(math.pi / 2)))
    for n in range(2, 7):
        assert n * universal_c(n) == pytest.approx(sphere_area(n) / (2 * math.pi) ** n)


def test_C_n():
    assert betti_prefactor(2) == pytest.approx(1 / (8 * math.pi**1.5))
    assert betti_prefactor(2) == pytest.approx(0.022446, abs=1e-5)
    for n in range(2, 6):
        assert betti_prefactor(n) ** -2 == pytest.approx(
            math.pi ** (n + 1) * 2 ** (2 * n - 1) * n * (n + 2) ** (n - 1))


@pytest.mark.parametrize("n", [2, 3, 4])
def test_integral_identities(n):
    for row in verify_integral_identities(n):
        assert row["rel_err"] < 1e-6, row


def test_scalar_law():
    x = sample_M(StructuredHessianLaw(1, 3.0), seed=4, size=100_000)[:, 0, 0]
    assert x.var() == pytest.approx(3.0, rel=0.03)


def test_three_by_three_covariances():
    mats = sample_M(StructuredHessianLaw(3, 3.0), seed=2, size=200_000)
    n = len(mats)
    for (a, b), target in ((((0, 0), (1, 1)), 1.0), (((0, 1), (0, 2)), 0.0), (((0, 1), (0, 1)), 1.0),
                           (((0, 0), (0, 0)), 3.0), (((0, 0), (0, 1)), 0.0)):
        prod = mats[:, a[0], a[1]] * mats[:, b[0], b[1]]
        assert abs(prod.mean() - target) < 4 * prod.std() / math.sqrt(n)
    assert np.array_equal(mats, np.swapaxes(mats, 1, 2))


def test_degenerate_diagonal():
    mats = sample_M(StructuredHessianLaw(2, 1.0), seed=1, size=100)
    assert np.array_equal(mats[:, 0, 0], mats[:, 1, 1])
    with pytest.raises(ParameterError):
        StructuredHessianLaw(2, 0.5)


def test_sampling_is_deterministic():
    law = StructuredHessianLaw(2, 3.0)
    assert np.array_equal(sample_M(law, 5, size=10), sample_M(law, 5, size=10))
    assert not np.array_equal(sample_M(law, 5, size=10), sample_M(law, 6, size=10))


@pytest.mark.parametrize("m", range(1, 7))
@pytest.mark.parametrize("a", [1, 3, 5])
def test_wick_is_zero(m, a):
    assert wick_expected_det(StructuredHessianLaw(m, a)) == 0


def test_wick_m2_by_hand():
    # E[M11 M22] - E[M12^2] = 1 - 1
    assert wick_expected_det(StructuredHessianLaw(2, 3)) == Fraction(0)
    assert involution_sum(2) == 0
    assert all(involution_sum(m) == 0 for m in range(1, 13))


def test_wick_capacity():
    with pytest.raises(CapacityError):
        wick_expected_det(StructuredHessianLaw(7, 3))


def test_wick_detects_nonzero_law():
    # sanity of the oracle itself: a plain GOE-like law with unit off-diagonal and no shared Y
    law = StructuredHessianLaw(2, 3)
    cov = lambda e1, e2: 1 if sorted(e1) == sorted(e2) else 0  # noqa: E731
    from nodalfield.constants import _isserlis
    assert _isserlis([(0, 0), (1, 1)], cov) == 0
    assert _isserlis([(0, 1), (1, 0)], cov) == 1
    assert law.entry_covariance((0, 0), (1, 1)) == 1


@pytest.mark.parametrize("m", [1, 2, 3, 4])
@pytest.mark.parametrize("a", [1.0, 3.0, 5.0])
def test_monte_carlo_det_matches_wick(m, a):
    est = expected_det(StructuredHessianLaw(m, a), samples=200_000, seed=m)
    assert est.within(float(wick_expected_det(StructuredHessianLaw(m, a))))


def test_signed_moments_m1():
    mom = signed_det_moments(StructuredHessianLaw(1, 3.0), samples=400_000, seed=3)
    target = math.sqrt(6 / math.pi) / 2
    assert mom[0].within(target) and mom[1].within(target)


@pytest.mark.parametrize("m", [2, 3])
def test_sign_symmetry_and_alternating_sum(m):
    law = StructuredHessianLaw(m, 3.0)
    mom = signed_det_moments(law, samples=300_000, seed=8)
    for i in range(m + 1):
        diff = mom[i].mean - mom[m - i].mean
        assert abs(diff) <= 3 * math.hypot(mom[i].stderr, mom[m - i].stderr)
    alt = sum((-1) ** i * e.mean for i, e in enumerate(mom))
    assert abs(alt) <= 3 * math.sqrt(sum(e.stderr**2 for e in mom))


def test_betti_constants_n2():
    a0 = betti_constant(2, 0, samples=400_000, seed=1)
    assert a0.within(betti_prefactor(2) * math.sqrt(6 / math.pi) / 2)
    assert a0.mean == pytest.approx(0.01551, abs=1e-4)
    uc = universal_constants(2, samples=400_000, seed=1)
    assert abs(uc.A[0] - uc.A[1]) < 3 * math.hypot(*uc.A_stderr)
    with pytest.raises(ParameterError):
        betti_constant(2, 2)


def test_betti_symmetry_n3():
    uc = universal_constants(3, samples=300_000, seed=2)
    assert len(uc.A) == 3
    assert abs(uc.A[0] - uc.A[2]) < 3 * math.hypot(uc.A_stderr[0], uc.A_stderr[2])
    assert [r["i"] for r in uc.rows()] == [0, 1, 2]


def test_permutation_invariance():
    law = StructuredHessianLaw(3, 3.0)
    mats = sample_M(law, seed=6, size=200_000)
    perm = np.eye(3)[[2, 0, 1]]
    d0 = np.linalg.det(mats)
    d1 = np.linalg.det(perm @ mats @ perm.T)
    assert np.allclose(d0, d1)
    fresh = np.linalg.det(sample_M(law, seed=7, size=200_000))
    se = math.sqrt(d0.var() / len(d0) + fresh.var() / len(fresh))
    assert abs(np.mean(d0**2) - np.mean(fresh**2)) < 4 * math.sqrt(2) * np.std(d0**2) / math.sqrt(len(d0))
    assert abs(d1.mean() - fresh.mean()) < 4 * se


def test_workers_do_not_change_estimates():
    law = StructuredHessianLaw(3, 3.0)
    a = expected_det(law, samples=300_000, seed=9, workers=1)
    b = expected_det(law, samples=300_000, seed=9, workers=4)
    assert a == b
