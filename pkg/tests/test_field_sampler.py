import math

import numpy as np
import pytest
import scipy.fft
from hypothesis import given, strategies as st
from scipy import stats

from nodalfield.errors import ParameterError, PreconditionError
from nodalfield.field_sampler import (
    GridSpec, covariance, derive_seeds, evaluate_direct, mode_coefficients, pointwise_variance,
    read_sample, sample_field, sample_window, standard_normals, write_sample,
)
from nodalfield.torus_spectrum import FieldParams, mode_table


def fourier_interpolate(values, points):
    """Evaluate the trigonometric interpolant of a periodic grid function."""
    m = values.shape[0]
    n = values.ndim
    coef = np.fft.fftn(values) / m**n
    freqs = np.fft.fftfreq(m, 1.0 / m)
    grids = np.stack(np.meshgrid(*([freqs] * n), indexing="ij"), axis=-1).reshape(-1, n)
    return np.real(np.exp(1j * points @ grids.T) @ coef.ravel())


def test_degree_one_field_interpolates_exactly():
    p = FieldParams(2, 1, 1)
    smp = sample_field(p, GridSpec.for_params(p), seed=5)
    pts = np.random.default_rng(0).uniform(0, 2 * math.pi, (10, 2))
    assert np.max(np.abs(fourier_interpolate(smp.values, pts) - evaluate_direct(p, 5, pts))) < 1e-12


@given(n=st.integers(1, 3), L=st.integers(1, 50), s=st.floats(-1, 2), seed=st.integers(0, 2**64 - 1))
def test_fft_matches_direct_sum(n, L, s, seed):
    p = FieldParams(n, s, L)
    grid = GridSpec.for_params(p, oversampling=4 if n == 3 else 8)
    smp = sample_field(p, grid, seed)
    idx = np.random.default_rng(seed % 1000).integers(0, grid.points_per_axis, (40, n))
    direct = evaluate_direct(p, seed, idx * grid.spacing)
    fft = smp.values[tuple(idx.T)]
    assert np.max(np.abs(fft - direct)) <= 1e-9 * np.max(np.abs(smp.values))


def test_grid_variance_matches_lattice_sum():
    p = FieldParams(2, 1, 10_000)
    grid = GridSpec.for_params(p)
    emp = np.mean([np.mean(sample_field(p, grid, s).values ** 2) for s in range(40)])
    exact = np.sum(mode_table(p).eigenvalue ** -1.0) * 2 / (2 * math.pi) ** 2
    assert pointwise_variance(p) == pytest.approx(exact)
    assert emp == pytest.approx(exact, rel=0.05)


def test_thread_count_does_not_change_values():
    p = FieldParams(2, 1, 3000)
    grid = GridSpec.for_params(p)
    a = sample_field(p, grid, 11, workers=1).values
    b = sample_field(p, grid, 11, workers=8).values
    assert a.tobytes() == b.tobytes()


def test_coefficients_nest_across_cutoffs():
    small, big = mode_table(FieldParams(2, 1, 50)), mode_table(FieldParams(2, 1, 500))
    ac, as_ = mode_coefficients(small, 3)
    bc, bs = mode_coefficients(big, 3)
    assert np.array_equal(ac, bc[: small.n_pairs]) and np.array_equal(as_, bs[: small.n_pairs])


@given(start=st.integers(0, 400), count=st.integers(1, 50))
def test_normal_stream_offsets(start, count):
    full = standard_normals(9, start + count)
    assert np.array_equal(standard_normals(9, count, start), full[start:])


def test_normals_are_standard():
    z = standard_normals(123, 200_000)
    assert abs(z.mean()) < 4 / math.sqrt(len(z))
    assert abs(z.var() - 1) < 4 * math.sqrt(2 / len(z))


def test_variance_hand_sum():
    assert covariance(FieldParams(2, 1, 2), [0.3, 1.0], [0.3, 1.0]) == pytest.approx(6 / (4 * math.pi**2))


@given(st.lists(st.floats(0, 2 * math.pi), min_size=4, max_size=4))
def test_covariance_symmetry_and_translation(v):
    p = FieldParams(2, 0.7, 30)
    x, y = np.array(v[:2]), np.array(v[2:])
    k = covariance(p, x, y)
    assert k == pytest.approx(covariance(p, y, x), abs=1e-12)
    assert k == pytest.approx(covariance(p, (x - y) % (2 * math.pi), [0.0, 0.0]), abs=1e-12)


def test_empirical_covariance_over_seeds():
    p = FieldParams(2, 1, 20)
    pts = np.array([[0.1, 0.2], [0.5, 0.2]])
    vals = np.array([evaluate_direct(p, s, pts) for s in range(2000)])
    prod = vals[:, 0] * vals[:, 1]
    se = prod.std(ddof=1) / math.sqrt(len(prod))
    assert abs(prod.mean() - covariance(p, pts[0], pts[1])) < 4 * se
    assert np.linalg.eigvalsh(np.cov(vals.T)).min() > -1e-12


def test_pointwise_law_is_gaussian():
    p = FieldParams(2, 1, 10)
    vals = np.array([evaluate_direct(p, s, [[1.0, 2.0]])[0] for s in range(10_000)])
    n = len(vals)
    assert abs(stats.skew(vals)) < 4 * math.sqrt(6 / n)
    assert abs(stats.kurtosis(vals)) < 4 * math.sqrt(24 / n)


def test_grid_precondition_and_parameters():
    p = FieldParams(2, 1, 400)
    with pytest.raises(PreconditionError):
        sample_field(p, GridSpec(2, 100), 0)
    with pytest.raises(PreconditionError):
        sample_field(p, GridSpec(3, 200), 0)
    with pytest.raises(ParameterError):
        GridSpec(2, 100, oversampling=1.5)
    with pytest.raises(ParameterError):
        standard_normals(-1, 3)
    g = GridSpec.for_params(p)
    assert g.points_per_axis >= 160
    assert scipy.fft.next_fast_len(g.points_per_axis, real=True) == g.points_per_axis


def test_dump_round_trip(tmp_path):
    p = FieldParams(2, 0.5, 40)
    smp = sample_field(p, GridSpec.for_params(p), 77)
    path = tmp_path / "f.bin"
    write_sample(smp, path)
    raw = path.read_bytes()
    assert raw[:4] == b"CFGF"
    back = read_sample(path)
    assert back.params == p and back.seed == 77
    assert back.values.tobytes() == smp.values.tobytes()
    (tmp_path / "bad.bin").write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(ParameterError):
        read_sample(tmp_path / "bad.bin")


def test_window_matches_full_grid():
    p = FieldParams(2, 1, 900)
    grid = GridSpec.for_params(p)
    full = sample_field(p, grid, 4).values
    m = grid.points_per_axis
    win = sample_window(p, m, 4, (-5, 7), 12)
    block = np.roll(full, (5, -7), axis=(0, 1))[:12, :12]
    assert np.max(np.abs(win - block)) < 1e-12


def test_derived_seeds():
    a = derive_seeds(1, 400.0, 5)
    assert a == derive_seeds(1, 400.0, 5)
    assert a[:3] == derive_seeds(1, 400.0, 3)
    assert set(a).isdisjoint(derive_seeds(1, 1600.0, 5))
    assert set(a).isdisjoint(derive_seeds(2, 400.0, 5))
