"""Realizations of the cut-off fractional Gaussian field and its exact kernel.

A realization is ``f(x) = sum_j w_j A xi_j e_j(x)`` over the canonical modes of
:mod:`nodalfield.torus_spectrum`. The coefficient ``xi_j`` of mode index ``j``
is a function of ``(seed, j)`` only: the ``j``-th 64-bit output word of a
Philox4x64 stream keyed by ``seed``, mapped to a standard normal by the
inverse CDF. Grids nest across cutoffs: raising ``L`` appends modes and
leaves the coefficients of the existing ones unchanged.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.fft
from scipy.special import ndtri

from .errors import ParameterError, PreconditionError
from .torus_spectrum import DEFAULT_MAX_MODES, FieldParams, ModeTable, mode_table

DEFAULT_OVERSAMPLING = 8.0
TWO_PI = 2.0 * math.pi

_DUMP_MAGIC = b"CFGF"
_DUMP_VERSION = 1
_DUMP_HEADER = struct.Struct("<4sIIddIQ")


@dataclass(frozen=True)
class GridSpec:
    """Periodic grid x_i = 2 pi j / m, j = 0..m-1 on each axis."""

    n: int
    points_per_axis: int
    oversampling: float = DEFAULT_OVERSAMPLING

    def __post_init__(self):
        if self.oversampling < 2:
            raise ParameterError(f"oversampling must be >= 2, got {self.oversampling}")
        if self.points_per_axis < 2:
            raise ParameterError("need at least 2 points per axis")

    @classmethod
    def for_params(cls, params: FieldParams, oversampling: float = DEFAULT_OVERSAMPLING) -> GridSpec:
        """Smallest FFT-friendly grid meeting the oversampling requirement."""
        m = minimal_points(params.L, oversampling)
        return cls(params.n, scipy.fft.next_fast_len(m, real=True), float(oversampling))

    @property
    def spacing(self) -> float:
        return TWO_PI / self.points_per_axis

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.points_per_axis,) * self.n

    def axis(self) -> np.ndarray:
        return np.arange(self.points_per_axis) * self.spacing

    def check(self, params: FieldParams) -> None:
        if self.n != params.n:
            raise PreconditionError(f"grid dimension {self.n} != field dimension {params.n}")
        need = minimal_points(params.L, self.oversampling)
        if self.points_per_axis < need:
            raise PreconditionError(
                f"grid too coarse: {self.points_per_axis} points per axis, "
                f"need >= {need} for L={params.L} at oversampling {self.oversampling}"
            )

    def doubled(self) -> GridSpec:
        return GridSpec(self.n, 2 * self.points_per_axis, self.oversampling)


def minimal_points(L: float, oversampling: float) -> int:
    # second term keeps +-k from aliasing onto each other
    return max(math.ceil(oversampling * math.sqrt(L)), 2 * math.isqrt(math.floor(L)) + 1)


@dataclass(frozen=True, eq=False)
class FieldSample:
    params: FieldParams
    grid: GridSpec
    seed: int
    values: np.ndarray

    @property
    def rms(self) -> float:
        return float(np.sqrt(np.mean(self.values**2)))

    def coordinates(self, index) -> np.ndarray:
        return np.asarray(index, dtype=np.float64) * self.grid.spacing


def standard_normals(seed: int, count: int, start: int = 0) -> np.ndarray:
    """Normals for mode indices start..start+count-1 under ``seed``."""
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ParameterError(f"seed must be an unsigned 64-bit integer, got {seed}")
    bitgen = np.random.Philox(key=seed)
    if start:
        bitgen.advance(start // 4)
        skip = start % 4
    else:
        skip = 0
    raw = bitgen.random_raw(count + skip)[skip:]
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def derive_seeds(master: int, L: float, count: int, stream: int = 0) -> list[int]:
    """``count`` field seeds for one cutoff, independent across ``L`` and ``stream``."""
    bits = struct.unpack("<Q", struct.pack("<d", float(L)))[0]
    ss = np.random.SeedSequence([int(master), bits & 0xFFFFFFFF, bits >> 32, int(stream)])
    return [int(v) for v in ss.generate_state(count, dtype=np.uint64)]


def mode_coefficients(table: ModeTable, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Scaled (cos, sin) coefficients ``w A xi`` for each canonical pair."""
    xi = standard_normals(seed, table.n_modes)
    scale = table.weight * table.amplitude
    return scale * xi[0::2], scale * xi[1::2]


def _half_spectrum(table: ModeTable, a_cos: np.ndarray, a_sin: np.ndarray, m: int) -> np.ndarray:
    n = table.n
    c = 0.5 * (a_cos - 1j * a_sin)
    k = table.k
    spec = np.zeros((m,) * (n - 1) + (m // 2 + 1,), dtype=np.complex128)
    last = k[:, -1]
    pos, neg, zero = last > 0, last < 0, last == 0
    spec[tuple((k[pos] % m).T)] = c[pos]
    spec[tuple(((-k[neg]) % m).T)] = np.conj(c[neg])
    spec[tuple((k[zero] % m).T)] = c[zero]
    spec[tuple(((-k[zero]) % m).T)] = np.conj(c[zero])
    return spec


def sample_field(
    params: FieldParams,
    grid: GridSpec,
    seed: int,
    workers: int | None = None,
    max_modes: int = DEFAULT_MAX_MODES,
) -> FieldSample:
    """Synthesize one realization on ``grid`` with a single inverse real FFT."""
    grid.check(params)
    table = mode_table(params, max_modes)
    a_cos, a_sin = mode_coefficients(table, seed)
    m = grid.points_per_axis
    spec = _half_spectrum(table, a_cos, a_sin, m)
    values = scipy.fft.irfftn(spec, s=grid.shape, norm="forward", workers=workers)
    values.setflags(write=False)
    return FieldSample(params, grid, int(seed), values)


def sample_gradient(params: FieldParams, grid: GridSpec, seed: int, workers: int | None = None,
                    max_modes: int = DEFAULT_MAX_MODES) -> np.ndarray:
    """Spectrally exact gradient of the realization on ``grid``, shape (n, m, ..., m)."""
    grid.check(params)
    table = mode_table(params, max_modes)
    a_cos, a_sin = mode_coefficients(table, seed)
    m = grid.points_per_axis
    spec = _half_spectrum(table, a_cos, a_sin, m)
    freqs = [scipy.fft.fftfreq(m, 1.0 / m)] * (params.n - 1) + [scipy.fft.rfftfreq(m, 1.0 / m)]
    out = []
    for ax in range(params.n):
        shape = [1] * params.n
        shape[ax] = -1
        k = freqs[ax].reshape(shape)
        if ax < params.n - 1:
            k = np.where(np.abs(k) == m / 2, 0.0, k)  # Nyquist row carries no mode
        out.append(scipy.fft.irfftn(1j * k * spec, s=grid.shape, norm="forward", workers=workers))
    return np.stack(out)


def evaluate_direct(params: FieldParams, seed: int, points, max_modes: int = DEFAULT_MAX_MODES) -> np.ndarray:
    """Direct trigonometric summation at arbitrary points, shape (npoints,)."""
    pts = np.atleast_2d(np.asarray(points, dtype=np.float64))
    if pts.shape[1] != params.n:
        raise ParameterError(f"points must have {params.n} coordinates")
    table = mode_table(params, max_modes)
    a_cos, a_sin = mode_coefficients(table, seed)
    out = np.empty(len(pts))
    for start in range(0, len(pts), 256):
        phase = pts[start:start + 256] @ table.k.T.astype(np.float64)
        out[start:start + 256] = np.cos(phase) @ a_cos + np.sin(phase) @ a_sin
    return out


def sample_window(
    params: FieldParams,
    m: int,
    seed: int,
    start: tuple[int, int],
    size: int,
    max_modes: int = DEFAULT_MAX_MODES,
) -> np.ndarray:
    """Values of the n=2 realization on the (size x size) block of the m-grid
    whose lower corner has index ``start`` (indices taken mod m).

    Same function as :func:`sample_field`, evaluated by a separable partial
    DFT, so only the block is paid for.
    """
    if params.n != 2:
        raise ParameterError("sample_window is implemented for n = 2")
    table = mode_table(params, max_modes)
    a_cos, a_sin = mode_coefficients(table, seed)
    r = math.isqrt(params.max_eigenvalue)
    width = 2 * r + 1
    coef = np.zeros((width, width), dtype=np.complex128)
    c = 0.5 * (a_cos - 1j * a_sin)
    k0, k1 = table.k[:, 0] + r, table.k[:, 1] + r
    coef[k0, k1] = c
    coef[2 * r - k0, 2 * r - k1] = np.conj(c)
    freqs = np.arange(-r, r + 1)
    idx0 = (start[0] + np.arange(size)) % m
    idx1 = (start[1] + np.arange(size)) % m
    e0 = np.exp(1j * TWO_PI / m * np.outer(idx0, freqs))
    e1 = np.exp(1j * TWO_PI / m * np.outer(idx1, freqs))
    return (e0 @ coef @ e1.T).real


def kernel_derivative(params: FieldParams, d, alpha=None, beta=None, max_modes: int = DEFAULT_MAX_MODES) -> np.ndarray:
    """Exact ``d^alpha_x d^beta_y K(x, y)`` at separations ``d = x - y``.

    Each lattice point contributes ``lam^-s (ik)^alpha (-ik)^beta e^{ik.d} / (2pi)^n``;
    derivatives are taken mode by mode. ``d`` has shape (..., n).
    """
    n = params.n
    alpha = np.zeros(n, dtype=int) if alpha is None else np.asarray(alpha, dtype=int)
    beta = np.zeros(n, dtype=int) if beta is None else np.asarray(beta, dtype=int)
    d = np.asarray(d, dtype=np.float64)
    flat = d.reshape(-1, n)
    table = mode_table(params, max_modes)
    k = table.k.astype(np.float64)
    lam_s = table.eigenvalue.astype(np.float64) ** (-params.s)
    poly = lam_s * np.prod(k ** (alpha + beta), axis=1)
    # (i)^|alpha| (-i)^|beta| = i^(|alpha| + 3|beta|)
    unit = 1j ** int((alpha.sum() + 3 * beta.sum()) % 4)
    # pair {k, -k}: polynomial has parity (-1)^(|alpha|+|beta|)
    odd = int(alpha.sum() + beta.sum()) % 2
    out = np.empty(len(flat))
    for start in range(0, len(flat), 512):
        phase = flat[start:start + 512] @ k.T
        trig = np.sin(phase) if odd else np.cos(phase)
        # e^{i t} + (-1)^odd e^{-i t} = 2cos t or 2i sin t
        factor = (2j if odd else 2.0) * unit
        out[start:start + 512] = (factor * (trig @ poly)).real
    return out.reshape(d.shape[:-1]) / (TWO_PI**n)


def covariance(params: FieldParams, x, y) -> np.ndarray | float:
    """K_L^s(x, y) as an exact finite sum; x, y broadcast over leading axes."""
    d = np.asarray(x, dtype=np.float64) - np.asarray(y, dtype=np.float64)
    out = kernel_derivative(params, d)
    return float(out) if out.ndim == 0 else out


def pointwise_variance(params: FieldParams) -> float:
    """K(x, x) = sum over lattice points of |k|^{-2s} / (2pi)^n."""
    table = mode_table(params)
    return float(2.0 * np.sum(table.eigenvalue.astype(np.float64) ** (-params.s)) / TWO_PI**params.n)


def write_sample(sample: FieldSample, path) -> None:
    """Binary dump: header then little-endian float64 values in row-major order."""
    header = _DUMP_HEADER.pack(
        _DUMP_MAGIC, _DUMP_VERSION, sample.params.n, sample.params.s, sample.params.L,
        sample.grid.points_per_axis, sample.seed,
    )
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(np.ascontiguousarray(sample.values, dtype="<f8").tobytes())


def read_sample(path, oversampling: float = DEFAULT_OVERSAMPLING) -> FieldSample:
    data = Path(path).read_bytes()
    magic, version, n, s, L, m, seed = _DUMP_HEADER.unpack_from(data)
    if magic != _DUMP_MAGIC or version != _DUMP_VERSION:
        raise ParameterError(f"{path}: not a version-{_DUMP_VERSION} field dump")
    values = np.frombuffer(data, dtype="<f8", offset=_DUMP_HEADER.size).reshape((m,) * n)
    return FieldSample(FieldParams(n, s, L), GridSpec(n, m, oversampling), seed, values.astype(np.float64))
