"""Exact kernel evaluations against the covariance asymptotics.

Two checks:

* critical profile (s = n/2): K_L(x, y) against
  ``|S^{n-1}|/(2pi)^n (ln sqrt(L) - ln_+(sqrt(L) |x - y|))``; the residual
  must stay bounded in L.
* rescaled limit (s < n/2, or derivatives on the diagonal at s = n/2):
  ``L^{s-n/2} d^a_x d^b_y K_L(w + x/sqrt(L), w + y/sqrt(L))`` against
  ``(2pi)^{-n} int_{|xi|<=1} e^{i<xi, x-y>} (i xi)^a (-i xi)^b |xi|^{-2s} dxi``.

On the torus K_L is translation invariant, so ``w`` drops out of the finite-L
side; it is accepted for interface symmetry.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import roots_jacobi

from .constants import _sphere_rule
from .errors import ParameterError, PreconditionError, RegimeError
from .field_sampler import TWO_PI, kernel_derivative
from .torus_spectrum import FieldParams, sphere_area


def ln_plus(t):
    """ln(t) v 0, with ln_+(0) = 0."""
    t = np.asarray(t, dtype=np.float64)
    with np.errstate(divide="ignore"):
        return np.where(t > 1.0, np.log(np.maximum(t, 1.0)), 0.0)


def log_profile_prediction(n: int, L: float, r) -> np.ndarray:
    lam = math.sqrt(L)
    return sphere_area(n) / TWO_PI**n * (math.log(lam) - ln_plus(lam * np.asarray(r, dtype=np.float64)))


@dataclass(frozen=True, eq=False)
class KernelProfile:
    params: FieldParams
    separations: np.ndarray     # (R,)
    L_grid: np.ndarray          # (G,)
    kernel: np.ndarray          # (G, R)
    predicted: np.ndarray       # (G, R)

    @property
    def residuals(self) -> np.ndarray:
        return self.kernel - self.predicted

    @property
    def max_abs_residual(self) -> float:
        return float(np.max(np.abs(self.residuals)))

    def row_max(self) -> np.ndarray:
        """max_r |residual| for each L."""
        return np.max(np.abs(self.residuals), axis=1)

    def growth_ratio(self) -> float:
        """Max |residual| over the last third of the L grid divided by the first third's."""
        per_L = self.row_max()
        third = max(1, len(per_L) // 3)
        return float(per_L[-third:].max() / per_L[:third].max())

    def rows(self) -> list[dict]:
        out = []
        for i, L in enumerate(self.L_grid):
            for j, r in enumerate(self.separations):
                out.append({
                    "L": float(L), "r": float(r), "kernel": float(self.kernel[i, j]),
                    "predicted": float(self.predicted[i, j]), "residual": float(self.residuals[i, j]),
                })
        return out


def critical_log_profile(params: FieldParams, L_grid, separations, direction=None) -> KernelProfile:
    """K_L at separations ``r * direction`` for each L in ``L_grid``; ``params.L`` is ignored."""
    params.require_regime("critical")
    n = params.n
    direction = np.eye(n)[0] if direction is None else np.asarray(direction, dtype=np.float64)
    if direction.shape != (n,) or not math.isclose(np.linalg.norm(direction), 1.0):
        raise ParameterError("direction must be a unit vector in R^n")
    L_grid = np.asarray(L_grid, dtype=np.float64)
    seps = np.asarray(separations, dtype=np.float64)
    if np.any(seps < 0):
        raise ParameterError("separations must be nonnegative")
    d = seps[:, None] * direction[None, :]
    kernel = np.stack([kernel_derivative(FieldParams(n, params.s, L), d) for L in L_grid])
    predicted = np.stack([log_profile_prediction(n, L, seps) for L in L_grid])
    return KernelProfile(params, seps, L_grid, kernel, predicted)


def _multi_index(alpha, n: int) -> np.ndarray:
    a = np.zeros(n, dtype=int) if alpha is None else np.asarray(alpha, dtype=int)
    if a.shape != (n,) or np.any(a < 0):
        raise ParameterError(f"derivative order must be {n} nonnegative integers")
    return a


def _radial_exponent(n: int, s: float, alpha: np.ndarray, beta: np.ndarray) -> float:
    p = n - 1 + alpha.sum() + beta.sum() - 2.0 * s
    if p <= -1:
        raise RegimeError(f"|xi|^(-2s) with s={s}, |alpha|+|beta|={alpha.sum() + beta.sum()} is not integrable on B^{n}")
    return p


def rescaled_kernel_limit(params: FieldParams, w=None, x=None, y=None, alpha=None, beta=None,
                          order: int = 48) -> float:
    """Limit of the rescaled kernel derivative, by quadrature over the unit ball.

    Polar coordinates with Gauss-Jacobi in the radius (weight r^p absorbs the
    radial power exactly) and a tensor Gauss-Legendre rule on the sphere.
    """
    n, s = params.n, params.s
    if params.regime == "supercritical":
        raise RegimeError(f"no rescaled limit for s={s} > n/2={n / 2}")
    a, b = _multi_index(alpha, n), _multi_index(beta, n)
    p = _radial_exponent(n, s, a, b)
    x = np.zeros(n) if x is None else np.asarray(x, dtype=np.float64)
    y = np.zeros(n) if y is None else np.asarray(y, dtype=np.float64)
    d = x - y
    # Jacobi weight (1 - t)^0 (1 + t)^p on [-1, 1]; r = (1 + t)/2
    t, wt = roots_jacobi(order, 0.0, p)
    r = 0.5 * (1.0 + t)
    wr = wt / 2.0 ** (p + 1)
    omega, w_sph = _sphere_rule(n, order)
    poly = np.prod(omega ** (a + b), axis=1)
    phase = np.outer(omega @ d, r)                  # (q, R)
    unit = 1j ** int((a.sum() + 3 * b.sum()) % 4)    # i^|a| (-i)^|b|
    total = unit * np.sum((w_sph * poly)[:, None] * np.exp(1j * phase) * wr[None, :])
    return float(total.real) / TWO_PI**n


def rescaled_kernel_finite(params: FieldParams, w=None, x=None, y=None, alpha=None, beta=None) -> float:
    """``L^{s-n/2} d^a_x d^b_y K_L(w + x/sqrt(L), w + y/sqrt(L))`` by exact lattice sums.

    Derivatives are in the rescaled variables, so each order contributes an
    extra ``L^{-1/2}`` over the derivative in torus coordinates.
    """
    n, L = params.n, params.L
    a, b = _multi_index(alpha, n), _multi_index(beta, n)
    x = np.zeros(n) if x is None else np.asarray(x, dtype=np.float64)
    y = np.zeros(n) if y is None else np.asarray(y, dtype=np.float64)
    if params.regime == "critical" and (a.sum() + b.sum() == 0 or np.any(x != y)):
        raise PreconditionError("at s = n/2 the limit exists only for derivatives on the diagonal")
    scale = L ** (params.s - n / 2 - (a.sum() + b.sum()) / 2)
    d = (x - y) / math.sqrt(L)
    return scale * float(kernel_derivative(params, d, a, b))


def odd_parity(alpha, beta) -> bool:
    """True when alpha + beta has an odd component (the ball integral then vanishes)."""
    return bool(np.any((np.asarray(alpha) + np.asarray(beta)) % 2))
