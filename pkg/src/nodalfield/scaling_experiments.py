"""Monte Carlo nodal-count studies across a grid of cutoffs."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ParameterError
from .field_sampler import DEFAULT_OVERSAMPLING, GridSpec, derive_seeds, sample_field
from .nodal_topology import NodalReport, component_diameters, count_components_2d, count_components_nd
from .torus_spectrum import FieldParams

RESOLUTION_TOL = 0.02


def log_scale(L: float) -> float:
    """ln(L^{1/2}), kept in this form on purpose."""
    return math.log(math.sqrt(L))


def geometric_grid(start: float, stop: float, steps: int) -> list[float]:
    if steps < 1 or start <= 0 or stop < start:
        raise ParameterError("geometric grid needs 0 < start <= stop and steps >= 1")
    if steps == 1:
        return [float(start)]
    return [float(v) for v in np.geomspace(start, stop, steps)]


def count_sample(params: FieldParams, seed: int, oversampling: float = DEFAULT_OVERSAMPLING,
                 rho: float | None = None, grid: GridSpec | None = None) -> NodalReport:
    """Contour trace for n = 2, sign clusters for n = 3."""
    grid = GridSpec.for_params(params, oversampling) if grid is None else grid
    sample = sample_field(params, grid, seed)
    report = count_components_2d(sample) if params.n == 2 else count_components_nd(sample)
    return component_diameters(report, params, rho) if rho is not None else report


@dataclass(frozen=True)
class ScalingRow:
    n: int
    s: float
    L: float
    seeds: int
    mean_N: float
    stderr: float
    normalized: float
    cv: float                    # per-seed standard deviation / mean
    mean_N_rho: float | None = None
    stderr_rho: float | None = None
    normalized_rho: float | None = None

    @property
    def small_fraction(self) -> float | None:
        return None if self.mean_N_rho is None else self.mean_N_rho / self.mean_N

    def row(self) -> dict:
        return asdict(self)


def _normalizer(params: FieldParams) -> float:
    scale = params.L ** (params.n / 2)
    if params.regime == "critical":
        return math.sqrt(log_scale(params.L)) / scale
    return 1.0 / scale


def _mean_se(values: np.ndarray) -> tuple[float, float]:
    mean = float(np.mean(values))
    se = float(np.std(values, ddof=1) / math.sqrt(len(values))) if len(values) > 1 else float("nan")
    return mean, se


def scaling_row(params: FieldParams, seed_list, oversampling: float = DEFAULT_OVERSAMPLING,
                rho: float | None = None, workers: int | None = None) -> ScalingRow:
    grid = GridSpec.for_params(params, oversampling)

    def one(seed):
        return count_sample(params, seed, oversampling, rho, grid)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            reports = list(pool.map(one, seed_list))
    else:
        reports = [one(s) for s in seed_list]
    N = np.array([r.N for r in reports], dtype=np.float64)
    mean, se = _mean_se(N)
    norm = _normalizer(params)
    extra = {}
    if rho is not None:
        Nr = np.array([r.N_rho for r in reports], dtype=np.float64)
        m_r, se_r = _mean_se(Nr)
        extra = {"mean_N_rho": m_r, "stderr_rho": se_r, "normalized_rho": m_r * norm}
    cv = float(np.std(N, ddof=1) / mean) if len(N) > 1 and mean > 0 else float("nan")
    return ScalingRow(params.n, params.s, params.L, len(N), mean, se, mean * norm, cv, **extra)


def _study(n, s, L_grid, seeds, master_seed, oversampling, rho, workers):
    rows = []
    for L in L_grid:
        params = FieldParams(n, s, L)
        rows.append(scaling_row(params, derive_seeds(master_seed, L, seeds), oversampling, rho, workers))
    return rows


def subcritical_study(n: int, s: float, L_grid, seeds: int, master_seed: int = 0,
                      oversampling: float = DEFAULT_OVERSAMPLING, rho: float | None = None,
                      workers: int | None = None) -> list[ScalingRow]:
    """Rows normalized by L^{n/2}. Seeds depend on (master_seed, L) only, so
    studies at different s share them."""
    FieldParams(n, s, 1.0).require_regime("subcritical")
    return _study(n, s, L_grid, seeds, master_seed, oversampling, rho, workers)


def critical_study(n: int, L_grid, seeds: int, rho: float | None = 20.0, master_seed: int = 0,
                   oversampling: float = DEFAULT_OVERSAMPLING, workers: int | None = None) -> list[ScalingRow]:
    """Rows at s = n/2 normalized by sqrt(ln sqrt(L)) / L^{n/2}."""
    return _study(n, n / 2, L_grid, seeds, master_seed, oversampling, rho, workers)


def successive_changes(rows: list[ScalingRow]) -> list[float]:
    """|x_{k+1} - x_k| / x_k for the normalized sequence."""
    x = [r.normalized for r in rows]
    return [abs(b - a) / a for a, b in zip(x, x[1:])]


def spread(values) -> float:
    """max / min of a positive sequence."""
    v = np.asarray(list(values), dtype=np.float64)
    return float(v.max() / v.min())


def depletion_ratios(critical: list[ScalingRow], subcritical: list[ScalingRow]) -> list[float]:
    """(critical mean / s = 0 mean) * sqrt(ln sqrt(L)) at matching L."""
    by_L = {r.L: r for r in subcritical}
    out = []
    for r in critical:
        if r.L not in by_L:
            raise ParameterError(f"no subcritical row at L={r.L}")
        out.append(r.mean_N / by_L[r.L].mean_N * math.sqrt(log_scale(r.L)))
    return out


@dataclass(frozen=True)
class ResolutionCheck:
    coarse: np.ndarray
    fine: np.ndarray

    @property
    def mean_relative_change(self) -> float:
        return float(np.mean(np.abs(self.fine - self.coarse) / self.coarse))

    @property
    def resolved(self) -> bool:
        return self.mean_relative_change <= RESOLUTION_TOL


def resolution_check(params: FieldParams, seed_list, oversampling: float = DEFAULT_OVERSAMPLING) -> ResolutionCheck:
    """Component counts on the default grid and on the grid with twice the points per axis."""
    grid = GridSpec.for_params(params, oversampling)
    coarse = [count_sample(params, s, grid=grid).N for s in seed_list]
    fine = [count_sample(params, s, grid=grid.doubled()).N for s in seed_list]
    return ResolutionCheck(np.array(coarse, dtype=np.float64), np.array(fine, dtype=np.float64))
