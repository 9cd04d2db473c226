"""Degree-19 quadrature on triangles and segments."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

DEGREE = 19
_N = 10  # Gauss points per direction: exact to degree 2*10 - 1 = 19


@dataclass(frozen=True)
class TriangleRule:
    """Rule on the reference triangle (0,0), (1,0), (0,1).

    ``points`` are barycentric triples (nq, 3); ``weights`` sum to 1/2.
    """

    points: np.ndarray
    weights: np.ndarray

    @property
    def xy(self) -> np.ndarray:
        return self.points[:, 1:]


@dataclass(frozen=True)
class SegmentRule:
    """Rule on [0, 1]; ``weights`` sum to 1."""

    points: np.ndarray
    weights: np.ndarray


@lru_cache(maxsize=None)
def triangle_rule() -> TriangleRule:
    """Collapsed tensor Gauss rule with 100 positive weights.

    The Duffy map ``x = s, y = t (1 - s)`` has Jacobian ``1 - s``; Gauss-Jacobi
    in ``s`` absorbs that factor so monomials of total degree 19 stay exact.
    """
    xs, ws = roots_jacobi(_N, 1.0, 0.0)  # weight (1 - x) on [-1, 1]
    s = 0.5 * (xs + 1.0)
    ws = 0.25 * ws
    xt, wt = roots_legendre(_N)
    t = 0.5 * (xt + 1.0)
    wt = 0.5 * wt
    S, T = np.meshgrid(s, t, indexing="ij")
    W = np.outer(ws, wt)
    x = S.ravel()
    y = (T * (1.0 - S)).ravel()
    bary = np.column_stack([1.0 - x - y, x, y])
    bary.setflags(write=False)
    w = W.ravel()
    w.setflags(write=False)
    return TriangleRule(bary, w)


@lru_cache(maxsize=None)
def segment_rule() -> SegmentRule:
    x, w = roots_legendre(_N)
    p = 0.5 * (x + 1.0)
    w = 0.5 * w
    p.setflags(write=False)
    w.setflags(write=False)
    return SegmentRule(p, w)


def map_points(vertices: np.ndarray, rule: TriangleRule | None = None) -> np.ndarray:
    """Physical quadrature points of triangles ``vertices`` (..., 3, 2)."""
    rule = rule or triangle_rule()
    return np.matmul(rule.points, vertices)


def integrate_triangles(vertices: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Integrals over triangles given integrand values at the mapped points.

    ``vertices`` is (m, 3, 2) and ``values`` is (m, nq).
    """
    v = vertices
    d1 = v[:, 1] - v[:, 0]
    d2 = v[:, 2] - v[:, 0]
    jac = np.abs(d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])
    return jac * (values @ triangle_rule().weights)


def integrate_on_element(mesh, t: int, integrand) -> float:
    """Integrate ``integrand(points) -> values`` over triangle ``t``."""
    verts = mesh.points[mesh.triangles[t]]
    x = map_points(verts)
    vals = np.asarray(integrand(x), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        q = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(f"non-finite integrand at {tuple(x[q])} in triangle {t}")
    return float(2.0 * mesh.areas[t] * (vals @ triangle_rule().weights))


def integrate_on_edge(mesh, e: int, integrand) -> float:
    """Integrate ``integrand(points) -> values`` along edge ``e``."""
    a, b = mesh.points[mesh.edge_table.edges[e]]
    rule = segment_rule()
    x = a[None, :] + rule.points[:, None] * (b - a)[None, :]
    vals = np.asarray(integrand(x), dtype=float)
    bad = ~np.isfinite(vals)
    if bad.any():
        q = int(np.flatnonzero(bad)[0])
        raise FloatingPointError(f"non-finite integrand at {tuple(x[q])} on edge {e}")
    return float(np.linalg.norm(b - a) * (vals @ rule.weights))
