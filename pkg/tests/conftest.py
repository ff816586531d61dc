"""Shared oracles and generators for the test suite.

The helpers here are deliberately independent of the library paths they
check: brute-force vertex enumeration, straight-line forward evaluation,
least-squares affine fits.
"""

import itertools

import numpy as np
import pytest

from relurepair.fvim import TrackedSet
from relurepair.model import RELU
from relurepair import fixtures as fx
from relurepair.reach import SafetyProperty, UnsafeDomain


def triangle_tracked(vertices):
    """TrackedSet of a 2-d triangle given its three vertices."""
    verts = np.asarray(vertices, float)
    assert verts.shape == (3, 2)
    incidence = np.array([[1, 1, 0], [0, 1, 1], [1, 0, 1]], dtype=bool)
    return TrackedSet(incidence, verts, verts.copy(), layer_cursor=0)


def enum_vzono_vertices(z):
    """All m * 2^n encoded vertices, materialized. Oracle only; n <= 20."""
    c = z.base_vertices
    v = z.base_vectors
    n = v.shape[0]
    assert n <= 20, "oracle would materialize too many vertices"
    if n == 0:
        return c.copy()
    out = []
    for signs in itertools.product((-1.0, 1.0), repeat=n):
        out.append(c + np.asarray(signs) @ v)
    return np.vstack(out)


def straight_forward(net, x):
    """Independent straight-line evaluation with explicit loops."""
    vec = [float(t) for t in x]
    for ly in net.layers:
        w, b = ly.weights, ly.bias
        nxt = []
        for r in range(w.shape[0]):
            acc = float(b[r])
            for c in range(w.shape[1]):
                acc += float(w[r, c]) * vec[c]
            if ly.activation == RELU and acc < 0.0:
                acc = 0.0
            nxt.append(acc)
        vec = nxt
    return np.array(vec)


def forward_from_layer(net, pts, from_layer):
    """Propagate current-space points through layers from_layer..end."""
    x = np.atleast_2d(np.asarray(pts, float))
    for k in range(from_layer, net.num_layers):
        ly = net.layers[k]
        x = x @ ly.weights.T + ly.bias
        if ly.activation == RELU:
            x = np.maximum(x, 0.0)
    return x


def region_points(rng, vertices, count):
    """Random points of a polytope as Dirichlet convex combinations."""
    w = rng.dirichlet(np.ones(vertices.shape[0]), size=count)
    return w @ vertices


def fit_affine(inputs, outputs):
    """Least-squares affine fit outputs ~ A inputs + c; returns (A, c, max residual)."""
    n = inputs.shape[0]
    design = np.hstack([inputs, np.ones((n, 1))])
    coef, *_ = np.linalg.lstsq(design, outputs, rcond=None)
    resid = design @ coef - outputs
    return coef[:-1].T, coef[-1], float(np.abs(resid).max())


def acceptance_networks():
    """The 20 fixed random networks shared by the randomized acceptance
    criteria: 3-4 layers, at most 8 neurons per layer, at most 4 inputs,
    each with a random single-constraint unsafe domain over the unit box."""
    cases = []
    for trial in range(20):
        seed = 100 + trial
        g = np.random.default_rng(seed)
        n_hidden = int(g.integers(2, 4))
        sizes = (
            [int(g.integers(2, 5))]
            + [int(g.integers(2, 9)) for _ in range(n_hidden)]
            + [2]
        )
        net = fx.random_network(sizes, seed=seed)
        alpha = g.normal(size=2)
        beta = float(g.normal() * 0.3)
        prop = SafetyProperty(
            f"rand-{trial}",
            -np.ones(sizes[0]),
            np.ones(sizes[0]),
            UnsafeDomain([(alpha, beta)]),
        )
        cases.append((net, prop))
    return cases


@pytest.fixture(scope="session")
def acceptance_cases():
    return acceptance_networks()
