import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from nodalfield.errors import ParameterError, PreconditionError, RegimeError, ResolutionError
from nodalfield.gaussian_tools import (
    BallWindow, BarrierParams, SupTailParams, ThresholdEvent, barrier_probability, ball_window,
    check_covariance, detect_barrier, fkg_check, flood_fill_barrier, orthant_probability,
    random_fkg_instance, stationary_1d_field, sup_tail_bound, sup_tail_check, torus_ball_field,
    zero_field,
)
from nodalfield.field_sampler import derive_seeds
from nodalfield.torus_spectrum import FieldParams


# -------------------------------------------------------------- FKG

@pytest.mark.parametrize("rho", [0.0, 0.3, 0.8])
def test_bivariate_orthant_closed_form(rho):
    cov = np.array([[1.0, rho], [rho, 1.0]])
    r = fkg_check(cov, ThresholdEvent.orthant([0]), ThresholdEvent.orthant([1]), samples=400_000, seed=3)
    se_ab = math.sqrt(r.p_ab * (1 - r.p_ab) / r.samples)
    assert abs(r.p_ab - orthant_probability(rho)) <= 3 * se_ab
    assert r.passed


def test_orthant_probability_values():
    assert orthant_probability(0.0) == 0.25
    assert orthant_probability(1.0) == pytest.approx(0.5)
    assert orthant_probability(0.5) == pytest.approx(1 / 3)


def test_shared_coordinate_gives_positive_gap():
    r = fkg_check(np.eye(3), ThresholdEvent.orthant([0, 1]), ThresholdEvent.orthant([1, 2]),
                  samples=200_000, seed=1)
    assert r.gap > 0


def test_disjoint_independent_events_have_zero_gap():
    r = fkg_check(np.eye(2), ThresholdEvent.orthant([0]), ThresholdEvent.orthant([1]), samples=200_000, seed=2)
    assert abs(r.gap) <= 4 * r.stderr
    assert r.verdict == "PASS"


def test_fkg_deterministic_and_thread_independent():
    cov = np.array([[1.0, 0.4], [0.4, 2.0]])
    a, b = ThresholdEvent.orthant([0], 0.3), ThresholdEvent.orthant([1], -0.2)
    r1 = fkg_check(cov, a, b, samples=150_000, seed=9)
    r8 = fkg_check(cov, a, b, samples=150_000, seed=9, workers=8)
    assert r1 == r8


def test_covariance_validation():
    with pytest.raises(ParameterError):
        check_covariance([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(ParameterError):
        check_covariance([[1.0, 2.0], [2.0, 1.0]])
    with pytest.raises(PreconditionError):
        check_covariance([[1.0, -0.5], [-0.5, 1.0]])
    with pytest.raises(ParameterError):
        fkg_check(np.eye(2), ThresholdEvent.orthant([2]), ThresholdEvent.orthant([0]), samples=10)
    with pytest.raises(ParameterError):
        ThresholdEvent((0, 1), (0.0,))


def test_singular_covariance_accepted():
    cov = np.ones((3, 3))
    r = fkg_check(cov, ThresholdEvent.orthant([0]), ThresholdEvent.orthant([2]), samples=50_000)
    assert r.p_ab == pytest.approx(r.p_a)


def test_random_instances_pass():
    rng = np.random.default_rng(2024)
    for k in range(50):
        cov, a, b = random_fkg_instance(rng)
        assert np.all(cov >= 0)
        assert fkg_check(cov, a, b, samples=100_000, seed=k).passed


@given(seed=st.integers(0, 2**32 - 1))
def test_random_instance_is_valid_nonnegative_psd(seed):
    cov, a, b = random_fkg_instance(np.random.default_rng(seed))
    check_covariance(cov)
    assert max(a.indices + b.indices) < cov.shape[0]


# ---------------------------------------------------------- sup tail

def test_sup_tail_params_validation():
    ok = SupTailParams(1.0, 2.0, 1.0, 0.5, 1.0)
    assert ok.level == pytest.approx(2.0)
    assert ok.bound == pytest.approx(2 * math.exp(-0.5))
    for bad in [(0.0, 1, 1, 1, 1), (1, 0.0, 1, 1, 1), (1, 1, 2.5, 1, 1), (1, 1, 0.0, 1, 1),
                (1, 1, 1, -1, 1), (1, 1, 1, 1, 0.0)]:
        with pytest.raises(ParameterError):
            SupTailParams(*bad)


def test_sup_tail_bound_values():
    assert sup_tail_bound(0.0, 1.0) == 2.0
    assert sup_tail_bound(2.0, 4.0) == pytest.approx(2 * math.exp(-0.5))


def test_zero_field_has_zero_tail():
    curve = sup_tail_check(zero_field(), [0.5, 1.0], samples=1000)
    assert np.all(curve.empirical == 0)
    assert curve.holds


def test_stationary_field_tail_below_bound():
    curve = sup_tail_check(stationary_1d_field(), np.linspace(0.25, 3.0, 12), samples=100_000, seed=5)
    assert curve.holds
    assert curve.sigma2 == pytest.approx(1.0)
    assert curve.C * curve.D == pytest.approx(curve.mean_sup)


def test_torus_ball_field_tail_below_bound():
    field = torus_ball_field(400.0, points_across=9)
    assert field.sigma2 == pytest.approx(field.cov[0, 0])
    curve = sup_tail_check(field, np.linspace(0.5, 4.0, 8), samples=40_000, seed=1)
    assert curve.holds


def test_holder_constant_dominates_increments():
    field = stationary_1d_field(points=41)
    var = np.diag(field.cov)
    incr = var[:, None] + var[None, :] - 2 * field.cov
    dist = np.abs(field.points[:, 0][:, None] - field.points[:, 0][None, :])
    assert np.all(incr <= field.D**2 * dist**field.alpha + 1e-12)


# ----------------------------------------------------------- barrier

def test_barrier_params_validation():
    BarrierParams()
    with pytest.raises(ParameterError):
        BarrierParams(rho=0.0)
    with pytest.raises(ParameterError):
        BarrierParams(alpha=3.0)


def test_ball_window_resolution_error():
    p = FieldParams(2, 1, 1e4)
    with pytest.raises(ResolutionError):
        ball_window(p, 0, rho=0.5, oversampling=2.0)


def test_ball_window_matches_full_field():
    from nodalfield.field_sampler import GridSpec, sample_field

    p = FieldParams(2, 1, 400)
    win = ball_window(p, 7, rho=12.0)
    full = sample_field(p, GridSpec.for_params(p, 8.0), 7).values
    idx = (np.arange(win.values.shape[0]) - win.half) % full.shape[0]
    np.testing.assert_allclose(win.values, full[np.ix_(idx, idx)], atol=1e-10)


def synthetic_window(f, size=61, radius=1.0):
    half = size // 2
    h = 1.2 * radius / half
    x = (np.arange(size) - half) * h
    X, Y = np.meshgrid(x, x, indexing="ij")
    return BallWindow(f(X, Y), h, half, radius)


def test_tent_detected_for_small_negative_well():
    win = synthetic_window(lambda x, y: x * x + y * y - 0.25)
    out = detect_barrier(win)
    assert out.any_sign and out.tent and out.f0 < 0
    assert flood_fill_barrier(win) == out


def test_positive_bump_is_component_but_not_tent():
    win = synthetic_window(lambda x, y: 0.25 - (x - 0.2) ** 2 - y * y)
    out = detect_barrier(win)
    assert out.any_sign and not out.tent
    assert flood_fill_barrier(win) == out


def test_large_circle_is_not_inside_ball():
    win = synthetic_window(lambda x, y: x * x + y * y - 1.1)
    out = detect_barrier(win)
    assert not out.any_sign and not out.tent
    assert flood_fill_barrier(win) == out


def test_offset_well_not_enclosing_x0():
    win = synthetic_window(lambda x, y: np.minimum((x - 0.5) ** 2 + y * y - 0.04, 0.3 - x * x - y * y))
    out = detect_barrier(win)
    assert out.any_sign and not out.tent


def test_flood_fill_audit_agrees_on_random_windows():
    for L in (1e3, 1e4):
        p = FieldParams(2, 1, L)
        for seed in derive_seeds(0, L, 10):
            win = ball_window(p, seed, 12.0)
            assert detect_barrier(win) == flood_fill_barrier(win)


def test_barrier_probability_rows():
    rows = barrier_probability(FieldParams(2, 1, 1), [1e3], rho=12.0, seeds=60, workers=4)
    (r,) = rows
    assert 0 <= r.q_tent <= r.q <= 1
    assert r.q_tent <= 0.5
    assert r.q_normalized == pytest.approx(r.q * math.sqrt(math.log(math.sqrt(1e3))))
    assert abs(r.sub_event - r.sub_event_predicted) < 4 * math.sqrt(0.25 / 60)
    again = barrier_probability(FieldParams(2, 1, 1), [1e3], rho=12.0, seeds=60)
    assert again == rows


def test_barrier_requires_critical_regime():
    with pytest.raises(RegimeError):
        barrier_probability(FieldParams(2, 0.5, 1), [1e3], seeds=2)
