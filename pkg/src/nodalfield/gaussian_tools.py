"""Probabilistic checks: positive association, supremum tails, barrier events."""
from __future__ import annotations

import math
from collections import deque
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .constants import CHUNK, _chunk_rng
from .errors import ParameterError, PreconditionError, RegimeError, ResolutionError
from .field_sampler import (
    TWO_PI, GridSpec, derive_seeds, kernel_derivative, pointwise_variance, sample_window,
)
from .nodal_topology import trace_contours
from .torus_spectrum import FieldParams

PSD_TOL = 1e-10
MIN_CELLS_ACROSS = 16


def _map(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def _gaussian_factor(cov: np.ndarray) -> np.ndarray:
    """F with F F^T = cov, valid for singular PSD matrices."""
    vals, vecs = np.linalg.eigh(cov)
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


# ------------------------------------------------------------------ FKG

@dataclass(frozen=True)
class ThresholdEvent:
    """{X_i >= t_i for every i in indices}; increasing in X."""

    indices: tuple[int, ...]
    thresholds: tuple[float, ...]

    def __post_init__(self):
        if len(self.indices) != len(self.thresholds) or not self.indices:
            raise ParameterError("event needs matching, nonempty indices and thresholds")

    @classmethod
    def orthant(cls, indices, level: float = 0.0) -> ThresholdEvent:
        idx = tuple(int(i) for i in indices)
        return cls(idx, (float(level),) * len(idx))

    def occurs(self, x: np.ndarray) -> np.ndarray:
        return np.all(x[:, list(self.indices)] >= np.asarray(self.thresholds), axis=1)


@dataclass(frozen=True)
class FKGResult:
    p_ab: float
    p_a: float
    p_b: float
    stderr: float      # of p_ab - p_a p_b
    samples: int

    @property
    def gap(self) -> float:
        return self.p_ab - self.p_a * self.p_b

    @property
    def passed(self) -> bool:
        return self.gap >= -3.0 * self.stderr

    @property
    def verdict(self) -> str:
        return "PASS" if self.passed else "FAIL"


def check_covariance(cov) -> np.ndarray:
    cov = np.asarray(cov, dtype=np.float64)
    if cov.ndim != 2 or cov.shape[0] != cov.shape[1] or not np.allclose(cov, cov.T):
        raise ParameterError("covariance must be a symmetric square matrix")
    scale = max(float(np.abs(cov).max()), 1e-300)
    if np.linalg.eigvalsh(cov).min() < -PSD_TOL * scale:
        raise ParameterError("covariance is not positive semidefinite")
    if np.any(cov < 0):
        raise PreconditionError("positive association needs nonnegative covariances")
    return cov


def fkg_check(cov, event_a: ThresholdEvent, event_b: ThresholdEvent, samples: int = 1_000_000,
              seed: int = 0, workers: int | None = None) -> FKGResult:
    """Monte Carlo P[A and B] against P[A] P[B] for a centred Gaussian vector."""
    cov = check_covariance(cov)
    d = cov.shape[0]
    for ev in (event_a, event_b):
        if max(ev.indices) >= d or min(ev.indices) < 0:
            raise ParameterError("event index outside the vector")
    factor = _gaussian_factor(cov)
    n_chunks = -(-samples // CHUNK)

    def job(c):
        size = min(CHUNK, samples - c * CHUNK)
        x = _chunk_rng(seed, c).standard_normal((size, d)) @ factor.T
        a, b = event_a.occurs(x), event_b.occurs(x)
        return int(a.sum()), int(b.sum()), int((a & b).sum())

    parts = _map(job, range(n_chunks), workers)
    na, nb, nab = (sum(p[i] for p in parts) for i in range(3))
    pa, pb, pab = na / samples, nb / samples, nab / samples
    # delta method on 1_AB - p_B 1_A - p_A 1_B
    var = (pab + pb * pb * pa + pa * pa * pb - 2 * pb * pab - 2 * pa * pab + 2 * pa * pb * pab
           - (pab - 2 * pa * pb) ** 2)
    return FKGResult(pab, pa, pb, math.sqrt(max(var, 0.0) / samples), samples)


def orthant_probability(rho: float) -> float:
    """P[X1 >= 0, X2 >= 0] for a standard bivariate normal with correlation rho."""
    return 0.25 + math.asin(rho) / TWO_PI


def random_fkg_instance(rng: np.random.Generator, max_dim: int = 8):
    """Nonnegative PSD covariance (B B^T + D, B >= 0) and two random orthant-type events."""
    d = int(rng.integers(2, max_dim + 1))
    b = rng.uniform(0.0, 1.0, size=(d, d)) * (rng.uniform(size=(d, d)) < 0.6)
    cov = b @ b.T + np.diag(rng.uniform(0.1, 1.0, size=d))

    def event():
        k = int(rng.integers(1, d + 1))
        idx = tuple(sorted(rng.choice(d, size=k, replace=False).tolist()))
        return ThresholdEvent(idx, tuple(rng.normal(0.0, 0.7, size=k).tolist()))

    return cov, event(), event()


# ------------------------------------------------------------- sup tails

@dataclass(frozen=True)
class SupTailParams:
    sigma2: float
    D: float
    alpha: float
    C: float
    u: float

    def __post_init__(self):
        if not (self.sigma2 > 0 and self.D > 0 and self.u > 0 and self.C >= 0):
            raise ParameterError("need sigma^2 > 0, D > 0, C >= 0 and u > 0")
        if not 0 < self.alpha <= 2:
            raise ParameterError(f"Hoelder exponent must lie in (0, 2], got {self.alpha}")

    @property
    def level(self) -> float:
        return self.C * self.D + self.u

    @property
    def bound(self) -> float:
        return sup_tail_bound(self.u, self.sigma2)


def sup_tail_bound(u, sigma2: float):
    """2 exp(-u^2 / (2 sigma^2))."""
    u = np.asarray(u, dtype=np.float64)
    return 2.0 * np.exp(-u * u / (2.0 * sigma2))


@dataclass(frozen=True, eq=False)
class GridGaussianField:
    """Centred Gaussian vector indexed by points of B(0, 1), with its regularity data.

    ``D`` and ``alpha`` satisfy E[(g(x) - g(y))^2] <= D^2 |x - y|^alpha.
    """

    points: np.ndarray
    cov: np.ndarray
    D: float
    alpha: float

    @property
    def sigma2(self) -> float:
        return float(np.max(np.diag(self.cov)))

    def sups(self, samples: int, seed: int = 0) -> np.ndarray:
        factor = _gaussian_factor(self.cov)
        out = []
        for c in range(-(-samples // CHUNK)):
            size = min(CHUNK, samples - c * CHUNK)
            z = _chunk_rng(seed, c).standard_normal((size, factor.shape[1]))
            out.append(np.max(z @ factor.T, axis=1))
        return np.concatenate(out) if out else np.zeros(0)


def stationary_1d_field(points: int = 101, length: float = 0.25, sigma: float = 1.0) -> GridGaussianField:
    """sigma^2 exp(-t^2 / (2 length^2)) on a grid of [0, 1].

    2 sigma^2 (1 - exp(-t^2/2l^2)) <= sigma^2 t^2 / l^2, so D = sigma / l and alpha = 2.
    """
    x = np.linspace(0.0, 1.0, points)
    t = x[:, None] - x[None, :]
    cov = sigma**2 * np.exp(-t * t / (2 * length**2))
    return GridGaussianField(x[:, None], cov, sigma / length, 2.0)


def zero_field(points: int = 11) -> GridGaussianField:
    x = np.linspace(0.0, 1.0, points)
    return GridGaussianField(x[:, None], np.zeros((points, points)), 0.0, 2.0)


def torus_ball_field(L: float, points_across: int = 15, max_modes: int = 10_000_000) -> GridGaussianField:
    """Critical n = 2 field at w + y / sqrt(L), y in a grid of B(0, 1).

    1 - cos t <= t^2 / 2 gives E[(f(x) - f(y))^2] <= d^T H d with H the
    gradient covariance, so D^2 is the top eigenvalue of H / L (alpha = 2).
    """
    params = FieldParams(2, 1.0, L)
    lam = math.sqrt(L)
    g = np.linspace(-1.0, 1.0, points_across)
    y = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
    y = y[np.einsum("ij,ij->i", y, y) <= 1.0 + 1e-12]
    diff = (y[:, None, :] - y[None, :, :]) / lam
    cov = kernel_derivative(params, diff, max_modes=max_modes)
    e = np.eye(2, dtype=int)
    hess = np.array([[float(kernel_derivative(params, np.zeros(2), e[i], e[j])) for j in range(2)] for i in range(2)])
    D = math.sqrt(np.linalg.eigvalsh(hess / L).max())
    return GridGaussianField(y, cov, D, 2.0)


@dataclass(frozen=True, eq=False)
class SupTailCurve:
    u: np.ndarray
    empirical: np.ndarray      # P[M >= C D + u]
    bound: np.ndarray
    C: float
    D: float
    sigma2: float
    mean_sup: float
    samples: int

    @property
    def holds(self) -> bool:
        return bool(np.all(self.empirical <= self.bound))

    def rows(self) -> list[dict]:
        return [
            {"u": float(u), "empirical": float(e), "bound": float(b), "C": self.C, "D": self.D}
            for u, e, b in zip(self.u, self.empirical, self.bound)
        ]


def sup_tail_check(field: GridGaussianField, u_grid, samples: int = 100_000, seed: int = 0) -> SupTailCurve:
    """Empirical tail of the supremum against the Borell-TIS-type bound, C = E[sup] / D."""
    u = np.asarray(u_grid, dtype=np.float64)
    sups = field.sups(samples, seed)
    mean_sup = float(np.mean(sups))
    sigma2 = field.sigma2
    C = mean_sup / field.D if field.D > 0 else 0.0
    level = C * field.D + u
    empirical = np.mean(sups[:, None] >= level[None, :], axis=0)
    bound = sup_tail_bound(u, sigma2) if sigma2 > 0 else np.zeros_like(u)
    return SupTailCurve(u, empirical, bound, C, field.D, sigma2, mean_sup, samples)


# --------------------------------------------------------------- barrier

@dataclass(frozen=True)
class BarrierParams:
    a: float = 1.0
    b: float = 1.0
    alpha: float = 2.0
    rho: float = 12.0
    kappa: float = 1.0
    lambda0: float = 1.0

    def __post_init__(self):
        if min(self.a, self.b, self.rho, self.kappa, self.lambda0) <= 0:
            raise ParameterError("barrier constants must be positive")
        if not 0 < self.alpha <= 2:
            raise ParameterError(f"Hoelder exponent must lie in (0, 2], got {self.alpha}")


@dataclass(frozen=True, eq=False)
class BallWindow:
    """Square block of the global grid around x0 = (0, 0) covering B(x0, radius)."""

    values: np.ndarray
    spacing: float
    half: int                  # x0 sits at index (half, half)
    radius: float

    def offsets(self, idx) -> np.ndarray:
        return (np.asarray(idx, dtype=np.float64) - self.half) * self.spacing


def ball_window(params: FieldParams, seed: int, rho: float, oversampling: float = 8.0) -> BallWindow:
    m = GridSpec.for_params(params, oversampling).points_per_axis
    h = TWO_PI / m
    radius = rho / math.sqrt(params.L)
    if 2 * radius / h < MIN_CELLS_ACROSS:
        raise ResolutionError(
            f"ball of radius {radius:.4g} spans {2 * radius / h:.1f} cells, need {MIN_CELLS_ACROSS}"
        )
    if radius >= math.pi:
        raise ParameterError("ball must be smaller than the torus")
    half = math.ceil(radius / h) + 2
    size = 2 * half + 1
    values = sample_window(params, m, seed, (-half, -half), size)
    return BallWindow(values, h, half, radius)


@dataclass(frozen=True)
class BarrierOutcome:
    any_sign: bool     # some nodal component lies inside the open ball
    tent: bool         # f(x0) < 0 and x0 is enclosed by such a component
    f0: float


def _inside_ball_components(win: BallWindow):
    values = win.values
    size = values.shape[0]
    graph = trace_contours(values)
    # trace_contours treats the block as periodic; only components far from the seam are used
    idx = graph.points / (TWO_PI / size)
    rel = (idx - win.half) * win.spacing
    inside_pt = np.einsum("ij,ij->i", rel, rel) < win.radius**2
    outside = np.bincount(graph.labels[~inside_pt], minlength=graph.n_components) > 0
    return graph, rel, ~outside


def detect_barrier(win: BallWindow) -> BarrierOutcome:
    graph, rel, inside = _inside_ball_components(win)
    f0 = float(win.values[win.half, win.half])
    tent = False
    if f0 < 0 and inside.any():
        # crossing number of the ray from x0 along +x2 against inside-ball polygons
        a, b = rel[graph.edges[:, 0]], rel[graph.edges[:, 1]]
        keep = inside[graph.labels[graph.edges[:, 0]]]
        a, b = a[keep], b[keep]
        lab = graph.labels[graph.edges[keep, 0]]
        straddle = (a[:, 0] > 0) != (b[:, 0] > 0)
        with np.errstate(divide="ignore", invalid="ignore"):
            x2 = a[:, 1] + (0 - a[:, 0]) * (b[:, 1] - a[:, 1]) / (b[:, 0] - a[:, 0])
        hits = straddle & (x2 > 0)
        tent = bool(np.any(np.bincount(lab[hits], minlength=graph.n_components) % 2))
    return BarrierOutcome(bool(inside.any()), tent, f0)


def flood_fill_barrier(win: BallWindow) -> BarrierOutcome:
    """Same events from sign clusters of grid vertices, by breadth-first search.

    Vertices of one sign are joined along grid edges and, in cells whose
    diagonals both carry equal signs, along the diagonal whose sign matches
    the cell centre. A cluster is enclosed when it avoids the block border and
    every sign change on its boundary edges is strictly inside the ball.
    """
    v = win.values.tolist()
    size = len(v)
    r2 = win.radius**2
    label = [[-1] * size for _ in range(size)]
    f0 = v[win.half][win.half]

    def crossing_inside(i, j, k, l):
        t = v[i][j] / (v[i][j] - v[k][l])
        x = (i + t * (k - i) - win.half) * win.spacing
        y = (j + t * (l - j) - win.half) * win.spacing
        return x * x + y * y < r2

    def neighbours(i, j):
        for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
            yield i + di, j + dj
        for ci, cj in ((i - 1, j - 1), (i - 1, j), (i, j - 1), (i, j)):
            if not (0 <= ci < size - 1 and 0 <= cj < size - 1):
                continue
            c = [v[ci][cj], v[ci + 1][cj], v[ci + 1][cj + 1], v[ci][cj + 1]]
            pos = [x > 0 for x in c]
            if pos[0] != pos[2] or pos[1] != pos[3] or pos[0] == pos[1]:
                continue
            centre_pos = sum(c) / 4 > 0
            for (ai, aj), (bi, bj) in (((ci, cj), (ci + 1, cj + 1)), ((ci + 1, cj), (ci, cj + 1))):
                if (v[ai][aj] > 0) == centre_pos:
                    if (ai, aj) == (i, j):
                        yield bi, bj
                    elif (bi, bj) == (i, j):
                        yield ai, aj

    enclosed_any = False
    tent = False
    for si in range(size):
        for sj in range(size):
            if label[si][sj] >= 0:
                continue
            sign = v[si][sj] > 0
            label[si][sj] = 1
            queue = deque([(si, sj)])
            ok = True
            has_x0 = False
            while queue:
                i, j = queue.popleft()
                if (i, j) == (win.half, win.half):
                    has_x0 = True
                if i in (0, size - 1) or j in (0, size - 1):
                    ok = False
                for k, l in neighbours(i, j):
                    if not (0 <= k < size and 0 <= l < size):
                        continue
                    same = (v[k][l] > 0) == sign
                    if same:
                        if label[k][l] < 0:
                            label[k][l] = 1
                            queue.append((k, l))
                    elif abs(k - i) + abs(l - j) == 1 and not crossing_inside(i, j, k, l):
                        ok = False
            if ok:
                enclosed_any = True
                if has_x0 and not sign:
                    tent = True
    return BarrierOutcome(enclosed_any, tent, f0)


@dataclass(frozen=True)
class BarrierRow:
    L: float
    lam: float
    rho: float
    seeds: int
    q: float
    stderr: float
    q_tent: float
    stderr_tent: float
    sub_event: float            # P[-1 <= f(x0) < 0]
    sub_event_predicted: float  # Gaussian value with the exact variance

    @property
    def q_normalized(self) -> float:
        return self.q * math.sqrt(math.log(self.lam))

    @property
    def q_tent_normalized(self) -> float:
        return self.q_tent * math.sqrt(math.log(self.lam))

    def row(self) -> dict:
        return {
            "L": self.L, "lambda": self.lam, "rho": self.rho, "seeds": self.seeds, "q": self.q,
            "stderr": self.stderr, "q_normalized": self.q_normalized, "q_tent": self.q_tent,
            "stderr_tent": self.stderr_tent, "q_tent_normalized": self.q_tent_normalized,
            "sub_event": self.sub_event, "sub_event_predicted": self.sub_event_predicted,
        }


def _proportion(hits: int, total: int) -> tuple[float, float]:
    q = hits / total
    return q, math.sqrt(q * (1 - q) / total)


def barrier_probability(params: FieldParams, L_grid, rho: float = 12.0, seeds: int = 4000,
                        master_seed: int = 0, oversampling: float = 8.0,
                        workers: int | None = None) -> list[BarrierRow]:
    """Frequency of a nodal component inside B(x0, rho / sqrt(L)) for each L."""
    params.require_regime("critical")
    if params.n != 2:
        raise RegimeError("the barrier experiment is implemented for n = 2")
    rows = []
    for L in L_grid:
        p = FieldParams(2, params.s, L)
        seed_list = derive_seeds(master_seed, L, seeds)
        outcomes = _map(lambda sd: detect_barrier(ball_window(p, sd, rho, oversampling)), seed_list, workers)
        q, se = _proportion(sum(o.any_sign for o in outcomes), seeds)
        qt, set_ = _proportion(sum(o.tent for o in outcomes), seeds)
        sub = sum(-1.0 <= o.f0 < 0 for o in outcomes) / seeds
        sigma = math.sqrt(pointwise_variance(p))
        rows.append(BarrierRow(float(L), math.sqrt(L), float(rho), seeds, q, se, qt, set_, sub,
                               float(ndtr(0.0) - ndtr(-1.0 / sigma))))
    return rows
