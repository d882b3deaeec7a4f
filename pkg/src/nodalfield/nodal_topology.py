"""Nodal components of sampled fields on the periodic grid.

Two counting methods:

* contour trace (n = 2): marching squares. Every grid edge whose endpoints
  differ in sign holds one crossing point (linear interpolation). Each cell
  joins its crossed edges in pairs, saddle cells by the sign of the cell
  centre, so every crossing has degree two and components are closed
  polygons.
* sign cluster (n = 2, 3): cells whose 2^n corners do not share one sign.
  By default two such cells are joined only through a shared face on which
  the sign also changes; plain face adjacency merges distinct nearby
  sheets far too often at moderate oversampling and is kept as an option.

Periodic wraparound is honoured by both. A component's diameter is the
diagonal of its periodic bounding box.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage, sparse
from scipy.sparse.csgraph import connected_components

from .errors import NodalFieldError, ParameterError
from .field_sampler import TWO_PI, FieldSample, sample_field
from .torus_spectrum import FieldParams

ZERO_NUDGE = 1e-14


@dataclass(frozen=True, eq=False)
class NodalReport:
    N: int
    sizes: np.ndarray          # cells per component
    diameters: np.ndarray
    bbox_lo: np.ndarray        # (N, n) lower corner, radians in [0, 2pi)
    bbox_extent: np.ndarray    # (N, n) side lengths
    method: str
    rho: float | None = None
    N_rho: int | None = None

    @property
    def components(self) -> list[dict]:
        return [
            {"size": int(s), "diameter": float(d), "bbox_lo": tuple(lo), "bbox_extent": tuple(ext)}
            for s, d, lo, ext in zip(self.sizes, self.diameters, self.bbox_lo.tolist(), self.bbox_extent.tolist())
        ]

    def count_within(self, max_diameter: float) -> int:
        return int(np.count_nonzero(self.diameters <= max_diameter))


@dataclass(frozen=True, eq=False)
class ContourGraph:
    """Crossing points of the zero set with grid edges, joined cell by cell."""

    m: int
    spacing: float
    points: np.ndarray     # (P, 2) crossing coordinates in [0, 2pi)
    edges: np.ndarray      # (E, 2) pairs of point indices, one or two per crossed cell
    labels: np.ndarray     # (P,) component label
    n_components: int
    origin: np.ndarray     # (P, 2) grid vertex at the start of each crossed edge
    axis: np.ndarray       # (P,) direction of that edge
    t: np.ndarray          # (P,) crossing position along the edge, in [0, 1]

    def interpolate(self, grid_values: np.ndarray) -> np.ndarray:
        """Linear interpolation of a periodic grid function at the crossing points."""
        i, j = self.origin.T
        i1 = np.where(self.axis == 0, (i + 1) % self.m, i)
        j1 = np.where(self.axis == 1, (j + 1) % self.m, j)
        return (1 - self.t) * grid_values[..., i, j] + self.t * grid_values[..., i1, j1]

    def neighbours(self) -> np.ndarray:
        """(P, 2) the two polygon neighbours of each point."""
        order = np.argsort(np.concatenate([self.edges[:, 0], self.edges[:, 1]]), kind="stable")
        other = np.concatenate([self.edges[:, 1], self.edges[:, 0]])[order]
        if len(other) != 2 * len(self.points):
            raise NodalFieldError("contour graph is not 2-regular")
        return other.reshape(-1, 2)


def nudge_zeros(values: np.ndarray) -> np.ndarray:
    """Replace near-zero values by a tiny positive one so every vertex has a sign."""
    rms = float(np.sqrt(np.mean(values**2)))
    eps = ZERO_NUDGE * (rms if rms > 0 else 1.0)
    out = np.where(np.abs(values) < eps, eps, values)
    if np.any(out == 0):
        raise NodalFieldError("exact zero survived the nudge")
    return out


def _crossing_fraction(v0, v1, mid=None):
    """Position in [0, 1] of the sign change on an edge; one bisection step if ``mid`` given."""
    if mid is None:
        return v0 / (v0 - v1)
    first = (v0 > 0) != (mid > 0)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_first = 0.5 * v0 / (v0 - mid)
        t_second = 0.5 + 0.5 * mid / (mid - v1)
    return np.where(first, t_first, t_second)


def trace_contours(values: np.ndarray, fine: np.ndarray | None = None) -> ContourGraph:
    """Marching-squares graph of the zero set of a periodic 2-d grid function.

    ``fine`` optionally holds the same function on the doubled grid
    (``fine[::2, ::2]`` matching ``values``); edge midpoints are then used to
    bisect each crossing once before interpolating.
    """
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        raise ParameterError("trace_contours needs a square 2-d array")
    m = values.shape[0]
    h = TWO_PI / m
    v = nudge_zeros(np.asarray(values, dtype=np.float64))
    s = v > 0
    v_up0 = np.roll(v, -1, axis=0)   # value at (i+1, j)
    v_up1 = np.roll(v, -1, axis=1)   # value at (i, j+1)
    cross0 = s != (v_up0 > 0)
    cross1 = s != (v_up1 > 0)
    n0 = int(cross0.sum())
    id0 = np.full((m, m), -1, dtype=np.int64)
    id1 = np.full((m, m), -1, dtype=np.int64)
    id0[cross0] = np.arange(n0)
    id1[cross1] = n0 + np.arange(int(cross1.sum()))

    i0, j0 = np.nonzero(cross0)
    i1, j1 = np.nonzero(cross1)
    if fine is not None:
        fine = nudge_zeros(np.asarray(fine, dtype=np.float64))
        mid0 = fine[2 * i0 + 1, 2 * j0]
        mid1 = fine[2 * i1, 2 * j1 + 1]
    else:
        mid0 = mid1 = None
    t0 = _crossing_fraction(v[i0, j0], v_up0[i0, j0], mid0)
    t1 = _crossing_fraction(v[i1, j1], v_up1[i1, j1], mid1)
    points = np.concatenate([
        np.stack([(i0 + t0) * h, j0 * h], axis=1),
        np.stack([i1 * h, (j1 + t1) * h], axis=1),
    ]) % TWO_PI

    # cell (i, j): bottom/top are axis-0 edges at j and j+1, left/right axis-1 edges at i and i+1
    bottom = id0
    top = np.roll(id0, -1, axis=1)
    left = id1
    right = np.roll(id1, -1, axis=0)
    sides = np.stack([bottom, right, top, left], axis=-1).reshape(-1, 4)
    ncross = np.count_nonzero(sides >= 0, axis=1)

    simple = sides[ncross == 2]
    simple = np.sort(simple, axis=1)[:, 2:]

    saddle_cells = np.flatnonzero(ncross == 4)
    sd = sides[saddle_cells]
    si, sj = np.divmod(saddle_cells, m)
    centre = 0.25 * (v[si, sj] + v_up0[si, sj] + v_up1[si, sj] + np.roll(v_up0, -1, axis=1)[si, sj])
    joined = (centre > 0) == s[si, sj]
    # corners (i,j),(i+1,j+1) joined through the centre: cut off (i+1,j) by bottom+right and (i,j+1) by top+left
    pair_a = np.where(joined[:, None], sd[:, [0, 1]], sd[:, [0, 3]])
    pair_b = np.where(joined[:, None], sd[:, [2, 3]], sd[:, [1, 2]])
    edges = np.concatenate([simple, pair_a, pair_b]).astype(np.int64)

    n_points = len(points)
    if n_points:
        graph = sparse.coo_matrix(
            (np.ones(len(edges), dtype=np.int8), (edges[:, 0], edges[:, 1])), shape=(n_points, n_points)
        )
        n_comp, labels = connected_components(graph, directed=False)
    else:
        n_comp, labels = 0, np.zeros(0, dtype=np.int32)
    origin = np.concatenate([np.stack([i0, j0], axis=1), np.stack([i1, j1], axis=1)])
    axis = np.concatenate([np.zeros(len(i0), dtype=np.int8), np.ones(len(i1), dtype=np.int8)])
    return ContourGraph(m, h, points, edges, labels, int(n_comp), origin, axis, np.concatenate([t0, t1]))


def periodic_extent(labels: np.ndarray, coord: np.ndarray, n_labels: int, period: float = TWO_PI):
    """Smallest covering arc of each label's coordinates on a circle.

    Returns (lower end, arc length) per label, from the largest gap between
    consecutive sorted coordinates (including the wrap-around gap).
    """
    lo = np.zeros(n_labels)
    extent = np.zeros(n_labels)
    if len(labels) == 0:
        return lo, extent
    order = np.lexsort((coord, labels))
    lab = labels[order]
    c = coord[order]
    starts = np.flatnonzero(np.r_[True, lab[1:] != lab[:-1]])
    ends = np.r_[starts[1:], len(lab)] - 1
    # gap[k] is the gap *before* sorted element k inside its group; group start gets the wrap gap
    gap = np.empty_like(c)
    gap[1:] = c[1:] - c[:-1]
    gap[starts] = c[starts] + period - c[ends]
    max_gap = np.maximum.reduceat(gap, starts)
    group_of = np.repeat(np.arange(len(starts)), ends - starts + 1)
    hit = np.flatnonzero(gap == max_gap[group_of])
    first_hit = hit[np.unique(group_of[hit], return_index=True)[1]]
    g = lab[starts]
    lo[g] = c[first_hit]
    extent[g] = period - max_gap
    return lo, extent


def _report_from_points(labels, coords, n_comp, sizes, method, pad=0.0) -> NodalReport:
    n = coords.shape[1]
    lo = np.zeros((n_comp, n))
    ext = np.zeros((n_comp, n))
    for ax in range(n):
        lo[:, ax], ext[:, ax] = periodic_extent(labels, coords[:, ax], n_comp)
    if pad:
        lo = (lo - pad / 2) % TWO_PI
        ext = np.minimum(ext + pad, TWO_PI)
    diam = np.sqrt(np.sum(ext**2, axis=1))
    return NodalReport(n_comp, np.asarray(sizes, dtype=np.int64), diam, lo, ext, method)


def contour_report(graph: ContourGraph) -> NodalReport:
    sizes = np.bincount(graph.labels, minlength=graph.n_components)
    return _report_from_points(graph.labels, graph.points, graph.n_components, sizes, "contour-trace")


def _fine_values(sample: FieldSample) -> np.ndarray:
    return sample_field(sample.params, sample.grid.doubled(), sample.seed).values


def count_components_2d(sample: FieldSample, refine: bool = False) -> NodalReport:
    """Contour-trace count of nodal components for n = 2."""
    if sample.params.n != 2:
        raise ParameterError("contour tracing is implemented for n = 2")
    fine = _fine_values(sample) if refine else None
    return contour_report(trace_contours(sample.values, fine))


def count_components_2d_values(values: np.ndarray) -> NodalReport:
    return contour_report(trace_contours(values))


def _mixed(s: np.ndarray, axes) -> np.ndarray:
    """True where the 2^len(axes) corners spanned from each vertex along ``axes`` disagree."""
    all_pos = np.ones_like(s)
    all_neg = np.ones_like(s)
    for bits in itertools.product((0, 1), repeat=len(axes)):
        shift = [0] * s.ndim
        for ax, b in zip(axes, bits):
            shift[ax] = -b
        corner = np.roll(s, shift, axis=tuple(range(s.ndim)))
        all_pos &= corner
        all_neg &= ~corner
    return ~(all_pos | all_neg)


def zero_cells(values: np.ndarray) -> np.ndarray:
    """Cells (indexed by lower corner) whose corners are not all of one sign."""
    s = nudge_zeros(values) > 0
    return _mixed(s, tuple(range(s.ndim)))


def label_periodic(mask: np.ndarray) -> tuple[np.ndarray, int]:
    """Face-connected labels of a boolean array on the torus (0 = background)."""
    lab, count = ndimage.label(mask)
    if count == 0:
        return lab, 0
    pairs = []
    for ax in range(mask.ndim):
        a = np.take(lab, 0, axis=ax)
        b = np.take(lab, -1, axis=ax)
        both = (a > 0) & (b > 0)
        pairs.append(np.stack([a[both], b[both]], axis=1))
    pairs = np.concatenate(pairs) - 1
    graph = sparse.coo_matrix(
        (np.ones(len(pairs), dtype=np.int8), (pairs[:, 0], pairs[:, 1])), shape=(count, count)
    )
    n_comp, merged = connected_components(graph, directed=False)
    remap = np.r_[0, merged + 1]
    return remap[lab], int(n_comp)


def label_crossed_faces(values: np.ndarray) -> tuple[np.ndarray, int]:
    """Zero cells joined only through shared faces that themselves change sign."""
    s = nudge_zeros(values) > 0
    nd = s.ndim
    cells = _mixed(s, tuple(range(nd)))
    ids = np.full(s.shape, -1, dtype=np.int64)
    n_cells = int(cells.sum())
    ids[cells] = np.arange(n_cells)
    rows, cols = [], []
    for ax in range(nd):
        # face between cell c and c + e_ax sits at vertex c + e_ax, spanning the other axes
        face = np.roll(_mixed(s, tuple(a for a in range(nd) if a != ax)), -1, axis=ax)
        nbr = np.roll(ids, -1, axis=ax)
        rows.append(ids[face])
        cols.append(nbr[face])
    rows, cols = np.concatenate(rows), np.concatenate(cols)
    lab = np.zeros(s.shape, dtype=np.int64)
    if n_cells == 0:
        return lab, 0
    graph = sparse.coo_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n_cells, n_cells))
    n_comp, merged = connected_components(graph, directed=False)
    lab[cells] = merged + 1
    return lab, int(n_comp)


def count_components_nd_values(values: np.ndarray, adjacency: str = "crossed-face") -> NodalReport:
    """Sign-cluster count. ``adjacency`` is ``"crossed-face"`` (cells joined
    through a face the zero set crosses) or ``"face"`` (any shared face)."""
    if values.ndim not in (2, 3):
        raise ParameterError("sign-cluster counting supports n = 2 or 3")
    m = values.shape[0]
    h = TWO_PI / m
    if adjacency == "crossed-face":
        lab, n_comp = label_crossed_faces(values)
    elif adjacency == "face":
        lab, n_comp = label_periodic(zero_cells(values))
    else:
        raise ParameterError(f"unknown adjacency {adjacency!r}")
    idx = np.nonzero(lab)
    labels = lab[idx] - 1
    coords = (np.stack(idx, axis=1) + 0.5) * h
    sizes = np.bincount(labels, minlength=n_comp)
    return _report_from_points(labels, coords, n_comp, sizes, "sign-cluster", pad=h)


def count_components_nd(sample: FieldSample, adjacency: str = "crossed-face") -> NodalReport:
    """Sign-cluster approximation of the nodal component count, n in {2, 3}."""
    return count_components_nd_values(sample.values, adjacency)


def component_diameters(report: NodalReport, params: FieldParams, rho: float) -> NodalReport:
    """Fill N_rho: components with (box) diameter at most rho L^{-1/2}."""
    if rho < 0:
        raise ParameterError("rho must be nonnegative")
    limit = rho / math.sqrt(params.L) if math.isfinite(rho) else math.inf
    return replace(report, rho=float(rho), N_rho=report.count_within(limit))
