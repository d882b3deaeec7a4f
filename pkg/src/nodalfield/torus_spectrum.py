"""Laplace eigenbasis of the flat torus T^n = [0, 2pi)^n.

Eigenfunctions are sqrt(2/(2pi)^n) cos(k.x) and sqrt(2/(2pi)^n) sin(k.x) for
k in Z^n \\ {0}, one pair per antipodal class {k, -k}, with eigenvalue |k|^2.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Literal

import numpy as np

from .errors import CapacityError, ParameterError, RegimeError

DEFAULT_MAX_MODES = 10_000_000

Regime = Literal["subcritical", "critical", "supercritical"]


@dataclass(frozen=True)
class FieldParams:
    """Ensemble definition: dimension ``n``, exponent ``s``, cutoff ``L``."""

    n: int
    s: float
    L: float

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ParameterError(f"dimension must be a positive integer, got {self.n!r}")
        if not (self.L > 0) or not math.isfinite(self.L):
            raise ParameterError(f"cutoff L must be positive and finite, got {self.L!r}")
        if not math.isfinite(self.s):
            raise ParameterError(f"exponent s must be finite, got {self.s!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "s", float(self.s))
        object.__setattr__(self, "L", float(self.L))

    @property
    def regime(self) -> Regime:
        # n/2 is exact in binary floating point, so equality is meaningful
        if 2.0 * self.s == self.n:
            return "critical"
        return "subcritical" if 2.0 * self.s < self.n else "supercritical"

    @property
    def max_eigenvalue(self) -> int:
        """Largest admissible integer eigenvalue, floor(L)."""
        return int(math.floor(self.L))

    def require_regime(self, *allowed: Regime) -> None:
        if self.regime not in allowed:
            raise RegimeError(
                f"regime {self.regime} (n={self.n}, s={self.s}) not in {', '.join(allowed)}"
            )


@dataclass(frozen=True)
class SpectralMode:
    k: tuple[int, ...]
    parity: Literal["cos", "sin"]
    eigenvalue: int
    weight: float
    amplitude: float


@dataclass(frozen=True)
class ModeTable:
    """Array form of the canonical mode pairs, in canonical order.

    Row ``p`` describes the antipodal pair with representative ``k[p]``; it
    carries mode index ``2p`` (cosine) and ``2p + 1`` (sine).
    """

    n: int
    s: float
    k: np.ndarray            # (P, n) int64
    eigenvalue: np.ndarray   # (P,) int64
    weight: np.ndarray       # (P,) float64, eigenvalue ** (-s/2)
    amplitude: float

    @property
    def n_pairs(self) -> int:
        return int(self.k.shape[0])

    @property
    def n_modes(self) -> int:
        return 2 * self.n_pairs


def mode_amplitude(n: int) -> float:
    return math.sqrt(2.0 / (2.0 * math.pi) ** n)


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


def sphere_area(n: int) -> float:
    """|S^{n-1}|, the area of the unit sphere in R^n."""
    return n * unit_ball_volume(n)


def mode_count_asymptotics(params: FieldParams) -> float:
    """Leading-order count Vol(B^n) L^{n/2} of lattice points with 0 < |k|^2 <= L."""
    return unit_ball_volume(params.n) * params.L ** (params.n / 2)


def _check_budget(n: int, L: float, max_modes: int) -> None:
    estimate = unit_ball_volume(n) * (math.sqrt(L) + math.sqrt(n)) ** n
    if estimate > max_modes:
        raise CapacityError(
            f"cutoff L={L} in dimension {n} needs ~{estimate:.3g} modes, budget is {max_modes}"
        )


@lru_cache(maxsize=32)
def _lattice_pairs(n: int, lmax: int) -> tuple[np.ndarray, np.ndarray]:
    r = math.isqrt(lmax)
    axis = np.arange(-r, r + 1, dtype=np.int64)
    grids = np.meshgrid(*([axis] * n), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=1)
    norm2 = np.einsum("ij,ij->i", pts, pts)
    keep = (norm2 > 0) & (norm2 <= lmax)
    pts, norm2 = pts[keep], norm2[keep]
    # canonical representative: first nonzero coordinate positive
    nz = pts != 0
    first = np.argmax(nz, axis=1)
    positive = pts[np.arange(len(pts)), first] > 0
    pts, norm2 = pts[positive], norm2[positive]
    order = np.lexsort(tuple(pts[:, j] for j in range(n - 1, -1, -1)) + (norm2,))
    pts, norm2 = pts[order], norm2[order]
    pts.setflags(write=False)
    norm2.setflags(write=False)
    return pts, norm2


def mode_table(params: FieldParams, max_modes: int = DEFAULT_MAX_MODES) -> ModeTable:
    _check_budget(params.n, params.L, max_modes)
    k, lam = _lattice_pairs(params.n, params.max_eigenvalue)
    if 2 * len(k) > max_modes:
        raise CapacityError(f"{2 * len(k)} modes exceed budget {max_modes}")
    weight = lam.astype(np.float64) ** (-params.s / 2.0)
    return ModeTable(params.n, params.s, k, lam, weight, mode_amplitude(params.n))


def enumerate_modes(params: FieldParams, max_modes: int = DEFAULT_MAX_MODES) -> list[SpectralMode]:
    """All modes with 0 < |k|^2 <= L, ordered by eigenvalue, then k, cosine first."""
    table = mode_table(params, max_modes)
    out = []
    for kk, lam, w in zip(table.k.tolist(), table.eigenvalue.tolist(), table.weight.tolist()):
        for parity in ("cos", "sin"):
            out.append(SpectralMode(tuple(kk), parity, lam, w, table.amplitude))
    return out


def eval_modes(modes: list[SpectralMode], x: np.ndarray) -> np.ndarray:
    """Values e_j(x) for each mode, shape (len(modes), npoints)."""
    x = np.atleast_2d(np.asarray(x, dtype=np.float64))
    k = np.array([m.k for m in modes], dtype=np.float64)
    phase = k @ x.T
    amp = np.array([m.amplitude for m in modes])[:, None]
    is_cos = np.array([m.parity == "cos" for m in modes])[:, None]
    return amp * np.where(is_cos, np.cos(phase), np.sin(phase))
