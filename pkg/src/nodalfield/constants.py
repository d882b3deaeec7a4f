"""Universal constants c_n, C_n, A_n^i and the structured Hessian law.

The Hessian law is the centered Gaussian on symmetric m x m matrices with
Var(M_ii) = a, Cov(M_ii, M_jj) = Var(M_ij) = 1 for i != j and every other
covariance zero. It is realized as M_ii = Y_i + Y with Y_i ~ N(0, a - 1) and
a shared Y ~ N(0, 1), which requires a >= 1.
"""
from __future__ import annotations

import itertools
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy.special import roots_legendre

from .errors import CapacityError, ParameterError

CHUNK = 1 << 16
DEFAULT_SAMPLES = 1_000_000
DEGENERACY_TOL = 1e-12
WICK_MAX_M = 6


def radial_moment(k: int) -> float:
    """J_k = int_0^inf t^k exp(-t^2/2) dt."""
    if k < 0 or int(k) != k:
        raise ParameterError(f"k must be a nonnegative integer, got {k}")
    k = int(k)
    if k % 2:
        return float(2 ** ((k - 1) // 2) * math.factorial((k - 1) // 2))
    return float(odd_double_factorial(k - 1)) * math.sqrt(math.pi / 2)


def odd_double_factorial(j: int) -> int:
    """j!! for odd j, with (-1)!! = 1."""
    out = 1
    while j > 1:
        out *= j
        j -= 2
    return out


def universal_c(n: int) -> float:
    """c_n = 1 / ((2pi)^{n/2} J_{n+1}), so that n c_n = |S^{n-1}| / (2pi)^n."""
    if n < 2:
        raise ParameterError("c_n is defined for n >= 2")
    return 1.0 / ((2 * math.pi) ** (n / 2) * radial_moment(n + 1))


def betti_prefactor(n: int) -> float:
    """C_n = (pi^{n+1} 2^{2n-1} n (n+2)^{n-1})^{-1/2}."""
    return 1.0 / math.sqrt(math.pi ** (n + 1) * 2.0 ** (2 * n - 1) * n * (n + 2) ** (n - 1))


# ---------------------------------------------------------------- quadrature

def _sphere_rule(n: int, order: int):
    """Tensor Gauss-Legendre rule on S^{n-1} in hyperspherical angles.

    Returns (points (q, n), weights (q,)) with weights summing to |S^{n-1}|.
    """
    if n == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    x, w = roots_legendre(order)
    polar = 0.5 * np.pi * (x + 1)
    polar_w = 0.5 * np.pi * w
    azim = np.pi * (x + 1)
    azim_w = np.pi * w
    grids = [polar] * (n - 2) + [azim]
    wgrids = [polar_w] * (n - 2) + [azim_w]
    angles = np.stack([g.ravel() for g in np.meshgrid(*grids, indexing="ij")], axis=1)
    weights = np.prod(np.stack([g.ravel() for g in np.meshgrid(*wgrids, indexing="ij")], axis=1), axis=1)
    pts = np.empty((len(angles), n))
    sin_prod = np.ones(len(angles))
    for j in range(n - 1):
        phi = angles[:, j]
        pts[:, j] = sin_prod * np.cos(phi)
        if j < n - 2:
            weights = weights * np.sin(phi) ** (n - 2 - j)
        sin_prod = sin_prod * np.sin(phi)
    pts[:, n - 1] = sin_prod
    return pts, weights


def ball_monomial_integral(n: int, powers, radial_power: float, order: int = 24) -> float:
    """(2pi)^{-n} int_{B^n} prod xi_i^{p_i} |xi|^{radial_power} dxi by polar quadrature."""
    powers = np.asarray(powers, dtype=int)
    radial_exp = powers.sum() + radial_power + n - 1
    if radial_exp <= -1:
        raise ParameterError("radial integrand is not integrable at the origin")
    rx, rw = roots_legendre(order)
    r = 0.5 * (rx + 1)
    radial = float(np.sum(0.5 * rw * r**radial_exp))
    pts, w = _sphere_rule(n, order)
    angular = float(np.sum(w * np.prod(pts**powers, axis=1)))
    return radial * angular / (2 * math.pi) ** n


def verify_integral_identities(n: int, order: int = 24) -> list[dict]:
    """Quadrature of the four ball integrals against their multiples of c_n."""
    c = universal_c(n)
    e = lambda *idx: [1 if j in idx else 0 for j in range(n)]  # noqa: E731
    two = lambda *idx: [2 * v for v in e(*idx)]  # noqa: E731
    pts, w = _sphere_rule(n, order)
    cases = [
        ("sphere_area", float(w.sum()) / (2 * math.pi) ** n, n * c),
        ("xi_i^2/|xi|^n", ball_monomial_integral(n, two(0), -n, order), c / 2),
        ("xi_i^2 xi_j^2/|xi|^n", ball_monomial_integral(n, two(0, 1), -n, order), c / (4 * (n + 2))),
        ("xi_i^4/|xi|^n", ball_monomial_integral(n, [4] + [0] * (n - 1), -n, order), 3 * c / (4 * (n + 2))),
    ]
    return [
        {"identity": name, "quadrature": q, "expected": ex, "rel_err": abs(q - ex) / abs(ex)}
        for name, q, ex in cases
    ]


# ------------------------------------------------------------ Hessian law

@dataclass(frozen=True)
class StructuredHessianLaw:
    m: int
    a: float = 3.0

    def __post_init__(self):
        if self.m < 1:
            raise ParameterError("matrix size must be >= 1")
        if self.a < 1:
            raise ParameterError(f"diagonal variance a must be >= 1, got {self.a}")

    def entries(self) -> list[tuple[int, int]]:
        return [(i, j) for i in range(self.m) for j in range(i, self.m)]

    def entry_covariance(self, e1, e2):
        (i, j), (k, l) = sorted(e1), sorted(e2)
        if i == j and k == l:
            return self.a if i == k else 1
        return 1 if (i, j) == (k, l) else 0

    def covariance_matrix(self) -> np.ndarray:
        """Covariance of the upper-triangular entries, in :meth:`entries` order."""
        ent = self.entries()
        return np.array([[float(self.entry_covariance(p, q)) for q in ent] for p in ent])


def _draw(law: StructuredHessianLaw, rng: np.random.Generator, size: int) -> np.ndarray:
    m = law.m
    off = rng.standard_normal((size, m, m))
    upper = np.triu(off, 1)
    mats = upper + np.swapaxes(upper, 1, 2)
    diag = math.sqrt(law.a - 1.0) * rng.standard_normal((size, m)) + rng.standard_normal((size, 1))
    idx = np.arange(m)
    mats[:, idx, idx] = diag
    return mats


def _chunk_rng(seed: int, chunk: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed), spawn_key=(chunk,))))


def sample_M(law: StructuredHessianLaw, seed: int, size: int | None = None) -> np.ndarray:
    """One symmetric matrix (or ``size`` of them) from the law; stream keyed by seed."""
    count = 1 if size is None else int(size)
    out = np.concatenate(
        [_draw(law, _chunk_rng(seed, c), min(CHUNK, count - c * CHUNK)) for c in range(-(-count // CHUNK))]
    )
    return out[0] if size is None else out


@dataclass(frozen=True)
class MonteCarloEstimate:
    mean: float
    stderr: float
    samples: int
    discarded: int = 0

    def within(self, target: float, k: float = 3.0) -> bool:
        return abs(self.mean - target) <= k * self.stderr


def _chunked(law, samples, seed, stat, workers):
    """Run ``stat(matrices) -> (sums, sumsq, kept)`` over fixed chunks and merge."""
    n_chunks = -(-samples // CHUNK)

    def job(c):
        size = min(CHUNK, samples - c * CHUNK)
        return stat(_draw(law, _chunk_rng(seed, c), size))

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(job, range(n_chunks)))
    else:
        parts = [job(c) for c in range(n_chunks)]
    width = len(parts[0][0])
    sums = [math.fsum(p[0][i] for p in parts) for i in range(width)]
    sumsq = [math.fsum(p[1][i] for p in parts) for i in range(width)]
    kept = sum(p[2] for p in parts)
    return sums, sumsq, kept


def _estimate(total, total_sq, count, discarded=0) -> MonteCarloEstimate:
    mean = total / count
    var = max(total_sq / count - mean * mean, 0.0) * count / max(count - 1, 1)
    return MonteCarloEstimate(mean, math.sqrt(var / count), count, discarded)


def expected_det(law: StructuredHessianLaw, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                 workers: int | None = None) -> MonteCarloEstimate:
    def stat(mats):
        det = np.linalg.det(mats)
        return [math.fsum(det)], [math.fsum(det * det)], len(det)

    sums, sumsq, kept = _chunked(law, samples, seed, stat, workers)
    return _estimate(sums[0], sumsq[0], kept)


def signed_det_moments(law: StructuredHessianLaw, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                       workers: int | None = None) -> list[MonteCarloEstimate]:
    """E[|det M| 1(M has exactly i negative eigenvalues)] for i = 0..m."""
    m = law.m

    def stat(mats):
        eig = np.linalg.eigvalsh(mats)
        scale = np.abs(eig).max(axis=1)
        ok = np.all(np.abs(eig) > DEGENERACY_TOL * scale[:, None], axis=1)
        eig = eig[ok]
        absdet = np.abs(np.prod(eig, axis=1))
        neg = np.sum(eig < 0, axis=1)
        vals = [np.where(neg == i, absdet, 0.0) for i in range(m + 1)]
        return [math.fsum(v) for v in vals], [math.fsum(v * v) for v in vals], int(ok.sum())

    sums, sumsq, kept = _chunked(law, samples, seed, stat, workers)
    return [_estimate(sums[i], sumsq[i], kept, samples - kept) for i in range(m + 1)]


def signed_det_moment(law: StructuredHessianLaw, i: int, samples: int = DEFAULT_SAMPLES,
                      seed: int = 0, workers: int | None = None) -> MonteCarloEstimate:
    if not 0 <= i <= law.m:
        raise ParameterError(f"index {i} outside 0..{law.m}")
    return signed_det_moments(law, samples, seed, workers)[i]


def _isserlis(factors, cov) -> Fraction:
    """E[prod of centered jointly Gaussian factors], summing over pairings."""
    if not factors:
        return Fraction(1)
    if len(factors) % 2:
        return Fraction(0)
    first, rest = factors[0], factors[1:]
    total = Fraction(0)
    for idx, other in enumerate(rest):
        c = cov(first, other)
        if c:
            total += c * _isserlis(rest[:idx] + rest[idx + 1:], cov)
    return total


def _perm_sign(perm) -> int:
    sign, seen = 1, [False] * len(perm)
    for i in range(len(perm)):
        if not seen[i]:
            j, length = i, 0
            while not seen[j]:
                seen[j] = True
                j = perm[j]
                length += 1
            sign *= (-1) ** (length - 1)
    return sign


def wick_expected_det(law: StructuredHessianLaw) -> Fraction:
    """Exact E[det M] from the Leibniz expansion with Isserlis moments."""
    if law.m > WICK_MAX_M:
        raise CapacityError(f"exact expansion limited to m <= {WICK_MAX_M}, got {law.m}")
    exact = StructuredHessianLaw(law.m, Fraction(law.a).limit_denominator(10**9))
    total = Fraction(0)
    for perm in itertools.permutations(range(law.m)):
        factors = [(i, perm[i]) for i in range(law.m)]
        total += _perm_sign(perm) * _isserlis(factors, exact.entry_covariance)
    return total


def involution_sum(m: int) -> int:
    """E[det M] as the alternating sum over involutions with k two-cycles.

    Uses (2j)!! in the odd-product sense, (2j - 1)(2j - 3)...1, for both the
    number of perfect matchings and the moment E[Y^{2j}].
    """
    if m % 2:
        return 0
    q = m // 2
    return sum(
        (-1) ** k * math.comb(2 * q, 2 * k) * odd_double_factorial(2 * k - 1) * odd_double_factorial(2 * (q - k) - 1)
        for k in range(q + 1)
    )


def betti_constant(n: int, i: int, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                   workers: int | None = None) -> MonteCarloEstimate:
    """A_n^i = C_n E[|det M| 1(sgn M = i)] with M of size n-1, a = 3."""
    if n < 2 or not 0 <= i <= n - 1:
        raise ParameterError(f"need n >= 2 and 0 <= i <= n-1, got n={n}, i={i}")
    est = signed_det_moment(StructuredHessianLaw(n - 1, 3.0), i, samples, seed, workers)
    cn = betti_prefactor(n)
    return MonteCarloEstimate(cn * est.mean, cn * est.stderr, est.samples, est.discarded)


@dataclass
class UniversalConstants:
    n: int
    c_n: float
    C_n: float
    J: dict[int, float]
    A: list[float] = field(default_factory=list)
    A_stderr: list[float] = field(default_factory=list)
    samples: int = 0

    def rows(self) -> list[dict]:
        return [
            {"n": self.n, "i": i, "C_n": self.C_n, "A_n_i": a, "stderr": se, "samples": self.samples}
            for i, (a, se) in enumerate(zip(self.A, self.A_stderr))
        ]


def universal_constants(n: int, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                        workers: int | None = None) -> UniversalConstants:
    moments = signed_det_moments(StructuredHessianLaw(n - 1, 3.0), samples, seed, workers)
    cn = betti_prefactor(n)
    return UniversalConstants(
        n=n,
        c_n=universal_c(n),
        C_n=cn,
        J={k: radial_moment(k) for k in range(n + 4)},
        A=[cn * e.mean for e in moments[:n]],
        A_stderr=[cn * e.stderr for e in moments[:n]],
        samples=moments[0].samples,
    )
