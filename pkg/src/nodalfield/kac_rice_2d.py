"""Critical points of a fixed Morse function restricted to nodal curves (n = 2).

Each traced nodal curve is a closed polygon through edge crossings, and
p(x) = cos x1 + 2 cos x2 is followed around it. Two counting rules:

* ``"gradient"`` (default): the derivative of p along the curve is
  grad p . T with T = (-d2 f, d1 f), evaluated from the spectrally exact
  gradient of f at every crossing. A sign change across a polygon edge is one
  critical point. Changes alternate between minima and maxima around a closed
  curve, so each curve gets half its changes of each index; the per-edge
  travel direction is kept only as a consistency diagnostic.
* ``"sequence"``: strict local minima and maxima of the cyclic sequence of p
  values at the crossings, after merging near-ties. Crossing points scatter
  O(h^2) about the true curve, which is as large as the change of p between
  neighbours near an extremum, so this rule picks up spurious pairs that do
  not go away under grid refinement.

Minima and maxima alternate around a cycle, so the two counts agree on every
component.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.sparse.csgraph import connected_components

from .constants import DEFAULT_SAMPLES, universal_constants
from .errors import NodalFieldError, ParameterError
from .field_sampler import TWO_PI, FieldSample, GridSpec, sample_field, sample_gradient
from .nodal_topology import ContourGraph, _fine_values, trace_contours
from .torus_spectrum import FieldParams

PLATEAU_TOL = 1e-10
FLAG_TOL = 1e-2          # in grid spacings
P_CRITICAL = np.array([[0.0, 0.0], [0.0, math.pi], [math.pi, 0.0], [math.pi, math.pi]])
P_RANGE = 6.0            # max p - min p


def morse_p(points: np.ndarray) -> np.ndarray:
    return np.cos(points[:, 0]) + 2.0 * np.cos(points[:, 1])


def morse_p_gradient(points: np.ndarray) -> np.ndarray:
    return np.stack([-np.sin(points[:, 0]), -2.0 * np.sin(points[:, 1])], axis=1)


@dataclass(frozen=True, eq=False)
class RestrictedCritical:
    m0: int
    m1: int
    per_component: np.ndarray   # (N, 2) minima, maxima of each curve
    flagged: bool
    orientation_conflicts: int = 0   # curves whose per-edge directions disagree with alternation

    @property
    def euler(self) -> int:
        return self.m0 - self.m1


def _wrap(d: np.ndarray) -> np.ndarray:
    return (d + math.pi) % TWO_PI - math.pi


def _near_critical(points: np.ndarray, edges: np.ndarray, tol: float) -> bool:
    """Does some polygon segment pass within ``tol`` of a critical point of p?"""
    a = points[edges[:, 0]]
    seg = _wrap(points[edges[:, 1]] - a)
    length2 = np.einsum("ij,ij->i", seg, seg)
    for c in P_CRITICAL:
        rel = _wrap(c - a)
        t = np.clip(np.einsum("ij,ij->i", rel, seg) / np.maximum(length2, 1e-300), 0.0, 1.0)
        gap = rel - t[:, None] * seg
        if np.any(np.einsum("ij,ij->i", gap, gap) < tol * tol):
            return True
    return False


def extrema_on_cycles(values: np.ndarray, edges: np.ndarray, labels: np.ndarray, n_comp: int,
                      tol: float) -> np.ndarray:
    """(n_comp, 2) counts of strict minima and maxima of ``values`` on each cycle.

    ``edges`` lists each cycle edge once and every vertex has degree two.
    Runs of vertices joined by edges with |difference| < ``tol`` are
    contracted to one vertex first.
    """
    P = len(values)
    out = np.zeros((n_comp, 2), dtype=np.int64)
    if P == 0:
        return out
    diff = values[edges[:, 1]] - values[edges[:, 0]]
    tie = np.abs(diff) < tol
    tie_graph = sparse.coo_matrix(
        (np.ones(int(tie.sum()), dtype=np.int8), (edges[tie, 0], edges[tie, 1])), shape=(P, P)
    )
    _, plateau = connected_components(tie_graph, directed=False)
    ext = edges[~tie]
    d = diff[~tie]
    # each remaining edge, seen from both ends: +1 if the far end is higher
    ends = np.concatenate([ext[:, 0], ext[:, 1]])
    up = np.concatenate([d > 0, d < 0])
    node = plateau[ends]
    n_plateau = int(plateau.max()) + 1
    n_up = np.bincount(node, weights=up, minlength=n_plateau)
    n_ext = np.bincount(node, minlength=n_plateau)
    if np.any((n_ext != 2) & (n_ext != 0)):
        raise NodalFieldError("plateau contraction left a vertex of degree other than two")
    comp = np.zeros(n_plateau, dtype=np.int64)
    comp[plateau] = labels
    is_min = (n_ext == 2) & (n_up == 2)
    is_max = (n_ext == 2) & (n_up == 0)
    out[:, 0] = np.bincount(comp[is_min], minlength=n_comp)
    out[:, 1] = np.bincount(comp[is_max], minlength=n_comp)
    return out


def extrema_from_gradient(graph: ContourGraph, grad_f: np.ndarray) -> tuple[np.ndarray, int]:
    """(n_comp, 2) minima and maxima of p on each cycle from sign changes of dp/ds.

    ``grad_f`` holds the field gradient at the crossing points, shape (P, 2).
    Also returns the number of cycles where classifying each change by its own
    edge direction would not alternate.
    """
    out = np.zeros((graph.n_components, 2), dtype=np.int64)
    if len(graph.points) == 0:
        return out, 0
    tangent = np.stack([-grad_f[:, 1], grad_f[:, 0]], axis=1)
    q = np.einsum("ij,ij->i", morse_p_gradient(graph.points), tangent)
    u, v = graph.edges[:, 0], graph.edges[:, 1]
    change = (q[u] > 0) != (q[v] > 0)
    comp = graph.labels[u]
    changes = np.bincount(comp[change], minlength=graph.n_components)
    out[:, 0] = out[:, 1] = changes // 2
    step = _wrap(graph.points[v] - graph.points[u])
    # +1 when walking u -> v follows T
    along = np.sign(np.einsum("ij,ij->i", step, tangent[u] + tangent[v]))
    rising_first = along * (q[u] - q[v]) > 0
    maxima = np.bincount(comp[change & rising_first], minlength=graph.n_components)
    return out, int(np.count_nonzero(2 * maxima != changes))


def restricted_critical_points_values(values: np.ndarray, fine: np.ndarray | None = None,
                                      gradient: np.ndarray | None = None) -> RestrictedCritical:
    """Counts for a sampled field; ``gradient`` (2, m, m) selects the gradient rule."""
    graph = trace_contours(values, fine)
    conflicts = 0
    if gradient is None:
        p = morse_p(graph.points)
        per = extrema_on_cycles(p, graph.edges, graph.labels, graph.n_components, PLATEAU_TOL * P_RANGE)
    else:
        per, conflicts = extrema_from_gradient(graph, graph.interpolate(gradient).T)
    flagged = _near_critical(graph.points, graph.edges, FLAG_TOL * graph.spacing) if len(graph.points) else False
    return RestrictedCritical(int(per[:, 0].sum()), int(per[:, 1].sum()), per, flagged, conflicts)


def restricted_critical_points(sample: FieldSample, refine: bool = True, method: str = "gradient") -> RestrictedCritical:
    """Index-0 and index-1 critical points of p on the nodal curves of ``sample``.

    With ``refine`` each crossing is bisected once using the field on the
    doubled grid.
    """
    if sample.params.n != 2:
        raise ParameterError("restricted critical points are implemented for n = 2")
    if method not in ("gradient", "sequence"):
        raise ParameterError(f"unknown method {method!r}")
    fine = _fine_values(sample) if refine else None
    grad = sample_gradient(sample.params, sample.grid, sample.seed) if method == "gradient" else None
    return restricted_critical_points_values(sample.values, fine, grad)


def euler_characteristic_check(results) -> float:
    """Mean of m0 - m1 over unflagged results; zero whenever the tracer is consistent."""
    kept = [r.euler for r in results if not r.flagged]
    return float(np.mean(kept)) if kept else 0.0


def kac_rice_prediction(L: float, samples: int = DEFAULT_SAMPLES, seed: int = 0,
                        workers: int | None = None) -> tuple[float, float]:
    """Predicted (index 0, index 1) counts on T^2: A_2^i Vol(T^2) L / sqrt(ln sqrt(L))."""
    scale = TWO_PI**2 * L / math.sqrt(math.log(math.sqrt(L)))
    A = universal_constants(2, samples, seed, workers).A
    return A[0] * scale, A[1] * scale


@dataclass(frozen=True)
class MorseRestrictionReport:
    L: float
    seeds: int
    flagged: int
    m0_mean: float
    m1_mean: float
    stderr: float                # of the per-seed total m0 + m1
    predicted_per_index: tuple[float, float]
    euler_mean: float
    unbalanced: int = 0              # kept seeds with m0 != m1 on some curve
    orientation_conflicts: int = 0   # summed over kept seeds

    @property
    def predicted(self) -> float:
        return float(sum(self.predicted_per_index))

    @property
    def ratio(self) -> float:
        return (self.m0_mean + self.m1_mean) / self.predicted

    def row(self) -> dict:
        return {
            "L": self.L, "seeds": self.seeds, "m0_mean": self.m0_mean, "m1_mean": self.m1_mean,
            "predicted": self.predicted, "ratio": self.ratio, "flagged": self.flagged,
            "unbalanced": self.unbalanced, "orientation_conflicts": self.orientation_conflicts,
        }


def morse_restriction_study(L: float, seeds, oversampling: float = 8.0, refine: bool = True,
                            workers: int | None = None, constant_samples: int = DEFAULT_SAMPLES,
                            constant_seed: int = 0, method: str = "gradient") -> MorseRestrictionReport:
    """Mean restricted critical-point counts over ``seeds`` at cutoff L, critical n = 2."""
    params = FieldParams(2, 1.0, L)
    grid = GridSpec.for_params(params, oversampling)
    seeds = [int(s) for s in seeds]

    def one(seed):
        return restricted_critical_points(sample_field(params, grid, seed), refine, method)

    if workers and workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(one, seeds))
    else:
        results = [one(s) for s in seeds]
    kept = [r for r in results if not r.flagged]
    if not kept:
        raise NodalFieldError("every sample was flagged")
    m0 = np.array([r.m0 for r in kept], dtype=np.float64)
    m1 = np.array([r.m1 for r in kept], dtype=np.float64)
    total = m0 + m1
    stderr = float(np.std(total, ddof=1) / math.sqrt(len(total))) if len(total) > 1 else float("nan")
    return MorseRestrictionReport(
        L=float(L), seeds=len(kept), flagged=len(results) - len(kept),
        m0_mean=float(m0.mean()), m1_mean=float(m1.mean()), stderr=stderr,
        predicted_per_index=kac_rice_prediction(L, constant_samples, constant_seed),
        euler_mean=euler_characteristic_check(kept),
        unbalanced=sum(not np.array_equal(r.per_component[:, 0], r.per_component[:, 1]) for r in kept),
        orientation_conflicts=sum(r.orientation_conflicts for r in kept),
    )
