"""Exact polytope engine: facet-vertex incidence matrices over tracked vertices.

A tracked set carries one linear-region polytope of the input space (its
vertices plus the facet-vertex incidence matrix) together with the images of
those vertices at the current point of propagation. Hyperplane splits operate
on the incidence structure directly, so no LP solving is ever needed.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np

logger = logging.getLogger(__name__)

# Vertices with |value| at or below this are treated as lying on a split
# hyperplane and are shared by both children.
ON_PLANE_TOL = 1e-9


class DegenerateSetError(ValueError):
    """Polytope has too few vertices to be full-dimensional."""


@dataclass(frozen=True)
class TrackedSet:
    """One input-space linear-region polytope plus its current-layer image.

    fvim: bool matrix (num_facets, num_vertices); entry (f, v) marks that
        facet f contains vertex v.
    input_vertices: (num_vertices, input_dim) vertices of the input region.
    current_vertices: (num_vertices, current_dim) images of the same rows at
        the current point of propagation; the map between the two is affine
        on the region.
    layer_cursor: index of the next network layer to process.
    """

    fvim: np.ndarray
    input_vertices: np.ndarray
    current_vertices: np.ndarray
    layer_cursor: int = 0

    @property
    def num_vertices(self):
        return self.input_vertices.shape[0]

    @property
    def input_dim(self):
        return self.input_vertices.shape[1]

    @property
    def current_dim(self):
        return self.current_vertices.shape[1]

    def validate(self):
        """Check incidence-structure invariants; raises AssertionError on failure."""
        d = self.input_dim
        nf, nv = self.fvim.shape
        assert self.fvim.dtype == bool
        assert nv == self.num_vertices == self.current_vertices.shape[0]
        col_counts = self.fvim.sum(axis=0)
        assert (col_counts >= d).all(), "every vertex must lie on at least d facets"
        if d >= 2:
            row_counts = self.fvim.sum(axis=1)
            assert (row_counts >= d).all(), "every facet must contain at least d vertices"
        rows = {self.fvim[r].tobytes() for r in range(nf)}
        assert len(rows) == nf, "duplicate facet rows"
        return True


def box_polytope(lb, ub):
    """Build the tracked set of an axis-aligned box: 2^d vertices, 2d facets."""
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    if lb.ndim != 1 or lb.shape != ub.shape:
        raise ValueError("lb and ub must be vectors of equal length")
    d = lb.shape[0]
    if d == 0:
        raise ValueError("box dimension must be at least 1")
    if d > 20:
        raise ValueError(f"box dimension {d} too large for vertex enumeration")
    if not (lb < ub).all():
        bad = int(np.argmax(lb >= ub))
        raise ValueError(f"lb[{bad}]={lb[bad]} is not below ub[{bad}]={ub[bad]}")

    nv = 1 << d
    idx = np.arange(nv)
    bits = (idx[:, None] >> np.arange(d)[None, :]) & 1  # (nv, d)
    vertices = np.where(bits == 1, ub, lb).astype(float)

    fvim = np.zeros((2 * d, nv), dtype=bool)
    for i in range(d):
        fvim[2 * i] = bits[:, i] == 0  # facet x_i = lb_i
        fvim[2 * i + 1] = bits[:, i] == 1  # facet x_i = ub_i
    return TrackedSet(fvim, vertices, vertices.copy(), layer_cursor=0)


def affine_map(s, w, b):
    """Map the current vertices by y = W x + b; incidence and inputs unchanged."""
    w = np.asarray(w, float)
    b = np.asarray(b, float)
    if w.shape[1] != s.current_dim:
        raise ValueError(f"W has {w.shape[1]} columns, set is {s.current_dim}-dimensional")
    return replace(s, current_vertices=s.current_vertices @ w.T + b)


def dim_bounds(s, i):
    """Exact (min, max) of current coordinate i, read off the vertices."""
    col = s.current_vertices[:, i]
    return float(col.min()), float(col.max())


def _dedupe_rows(mat):
    """Drop duplicate rows, keeping first occurrences in order."""
    seen = {}
    keep = []
    for r in range(mat.shape[0]):
        key = mat[r].tobytes()
        if key not in seen:
            seen[key] = True
            keep.append(r)
    return mat[keep] if len(keep) < mat.shape[0] else mat


def _make_child(s, keep_idx, on_keep, new_incidence, new_inputs, new_currents):
    """Assemble one side of a split: restricted columns + interpolated vertices
    + the split-hyperplane facet row; under-incident facet rows are dropped."""
    d = s.input_dim
    n_new = len(new_inputs)
    cols = s.fvim[:, keep_idx]
    if n_new:
        cols = np.hstack([cols, np.stack(new_incidence, axis=1)])
        inputs = np.vstack([s.input_vertices[keep_idx], new_inputs])
        currents = np.vstack([s.current_vertices[keep_idx], new_currents])
    else:
        inputs = s.input_vertices[keep_idx].copy()
        currents = s.current_vertices[keep_idx].copy()
    split_row = np.concatenate([on_keep, np.ones(n_new, dtype=bool)])
    fvim = np.vstack([cols, split_row])

    fvim = fvim[fvim.sum(axis=1) >= max(d, 1)]
    fvim = _dedupe_rows(fvim)

    if inputs.shape[0] < d + 1:
        logger.warning("discarding degenerate split child with %d vertices in %d-d", inputs.shape[0], d)
        return None
    return TrackedSet(fvim, inputs, currents, s.layer_cursor)


def _split(s, values):
    """Split a tracked set by the hyperplane {values = 0}.

    `values` holds one scalar per vertex (an affine function of the current
    vertices). Vertices within ON_PLANE_TOL of zero are shared by both
    children. Returns (negative_child, positive_child); either may be None
    when degenerate. Callers guarantee both strict sides are populated.
    """
    neg = values < -ON_PLANE_TOL
    pos = values > ON_PLANE_TOL
    on = ~neg & ~pos
    d = s.input_dim

    shared = s.fvim.T.astype(np.int32) @ s.fvim.astype(np.int32)
    neg_idx = np.where(neg)[0]
    pos_idx = np.where(pos)[0]

    new_incidence = []
    new_inputs = []
    new_currents = []
    for p in neg_idx:
        for q in pos_idx:
            # vertex pair is an edge iff the columns share >= d-1 facets
            if shared[p, q] < d - 1:
                continue
            t = values[p] / (values[p] - values[q])
            new_inputs.append(s.input_vertices[p] + t * (s.input_vertices[q] - s.input_vertices[p]))
            new_currents.append(s.current_vertices[p] + t * (s.current_vertices[q] - s.current_vertices[p]))
            new_incidence.append(s.fvim[:, p] & s.fvim[:, q])

    neg_keep = np.where(neg | on)[0]
    pos_keep = np.where(pos | on)[0]
    neg_child = _make_child(s, neg_keep, on[neg_keep], new_incidence, new_inputs, new_currents)
    pos_child = _make_child(s, pos_keep, on[pos_keep], new_incidence, new_inputs, new_currents)
    return neg_child, pos_child


def _zero_column(s, i):
    cur = s.current_vertices.copy()
    cur[:, i] = 0.0
    return replace(s, current_vertices=cur)


def split_by_neuron(s, i):
    """Process ReLU neuron i: one set if its input range has a single sign,
    otherwise split by the hyperplane x_i = 0 and zero the negative child.

    Returns the resulting tracked sets (one or two).
    """
    if s.num_vertices < s.input_dim + 1:
        raise DegenerateSetError(
            f"set has {s.num_vertices} vertices, below the {s.input_dim + 1} needed"
        )
    col = s.current_vertices[:, i]
    lo, hi = col.min(), col.max()
    if hi <= ON_PLANE_TOL:
        return [_zero_column(s, i)]
    if lo >= -ON_PLANE_TOL:
        # clamp sub-tolerance negatives exactly as ReLU would
        if lo < 0.0:
            cur = s.current_vertices.copy()
            cur[:, i] = np.maximum(cur[:, i], 0.0)
            return [replace(s, current_vertices=cur)]
        return [s]
    neg_child, pos_child = _split(s, col)
    out = []
    if neg_child is not None:
        out.append(_zero_column(neg_child, i))
    if pos_child is not None:
        out.append(pos_child)
    return out


def keep_leq(s, alpha, beta):
    """Restrict a tracked set to the halfspace alpha . current + beta <= 0.

    Returns the restricted tracked set, or None when the intersection has no
    interior. Used to pull output-space constraints back to input regions.
    """
    alpha = np.asarray(alpha, float)
    values = s.current_vertices @ alpha + beta
    if values.max() <= ON_PLANE_TOL:
        return s
    if values.min() >= -ON_PLANE_TOL:
        return None
    neg_child, _ = _split(s, values)
    return neg_child


def facet_halfspaces(s):
    """Derive the bounding halfspaces A x + b <= 0 of the input region.

    Each incidence row spans a supporting hyperplane of the input polytope;
    the normal is fit by SVD through the facet's vertices and oriented so the
    vertex centroid satisfies the inequality.
    """
    pts_all = s.input_vertices
    centroid = pts_all.mean(axis=0)
    rows_a = []
    rows_b = []
    for r in range(s.fvim.shape[0]):
        pts = pts_all[s.fvim[r]]
        c = pts.mean(axis=0)
        _, _, vt = np.linalg.svd(pts - c, full_matrices=True)
        normal = vt[-1]
        offset = -float(normal @ c)
        side = float(normal @ centroid) + offset
        if side > 0:
            normal, offset = -normal, -offset
        rows_a.append(normal)
        rows_b.append(offset)
    return np.array(rows_a), np.array(rows_b)


def contains(halfspaces, points, tol=ON_PLANE_TOL):
    """Membership mask of points against (A, b) halfspaces A x + b <= tol."""
    a, b = halfspaces
    points = np.atleast_2d(np.asarray(points, float))
    return (points @ a.T + b <= tol).all(axis=1)
