"""Residual indicators for the state and adjoint equations, and marking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import fem
from .fem import FeFunction
from .mesh import Mesh
from .ocp import Control, ProblemSpec, barycentric, control_pieces
from .quadrature import integrate_triangles, map_points

DIM = 2
# element weights: h^(4 - d) in the squared state indicator, h^(2 - d/2) in the adjoint one
STATE_ELEMENT_POWER = 4
ADJOINT_ELEMENT_POWER = 2 - DIM / 2


@dataclass
class IndicatorField:
    eta_st_sq: np.ndarray
    eta_adj: np.ndarray
    eta_ocp: np.ndarray


@dataclass(frozen=True)
class GlobalEstimate:
    eta_st: float
    eta_adj: float
    eta_ocp: float
    iota: float


def _check_mesh(mesh, *fields):
    for f in fields:
        if f.mesh is not mesh:
            raise ValueError("field lives on a different mesh")


def _max_interior_jump(mesh: Mesh, jumps: np.ndarray) -> np.ndarray:
    te = mesh.triangle_edges
    j = np.where(mesh.edge_table.interior[te], np.abs(jumps[te]), 0.0)
    return j.max(axis=1)


def state_indicators(mesh: Mesh, y: FeFunction, control: Control,
                     spec: ProblemSpec) -> np.ndarray:
    """Squared state indicators.

    ``h^4 ||forcing + u - f(., y)||_T^2 + sum_e h^3 ||[grad y . n]||_e^2``, with
    the integral split along the control's switching line.
    """
    _check_mesh(mesh, y)
    pieces, values = control_pieces(mesh, control)
    residual_sq = np.zeros(mesh.n_triangles)
    f = spec.nonlinearity.f
    nt = len(pieces)
    for start in range(0, nt, fem.CHUNK):
        sl = slice(start, min(start + fem.CHUNK, nt))
        verts, cells = pieces.verts[sl], pieces.cell[sl]
        x = map_points(verts)
        lam = barycentric(mesh, cells, x)
        yq = np.einsum("mqi,mi->mq", lam, y.values[mesh.triangles[cells]])
        r = spec.forcing(x) + values[sl, None] - f(x, yq)
        residual_sq += np.bincount(cells, weights=integrate_triangles(verts, r * r),
                                   minlength=mesh.n_triangles)
    h = mesh.diameters
    jumps = fem.edge_jumps(y)
    edge_sq = jumps ** 2 * mesh.edge_lengths
    edge_term = edge_sq[mesh.triangle_edges].sum(axis=1)  # boundary edges carry 0
    return h ** STATE_ELEMENT_POWER * residual_sq + h ** 3 * edge_term


def adjoint_indicators(mesh: Mesh, y: FeFunction, p: FeFunction,
                       spec: ProblemSpec) -> np.ndarray:
    """``h^(2-d/2) ||y - y_d - f'(y) p||_T + h max_e |[grad p . n]|``."""
    _check_mesh(mesh, y, p)
    df = spec.nonlinearity.df_dy

    def residual_sq(x, cells):
        yq = y.at_quadrature(cells)
        r = yq - spec.desired_state(x) - df(x, yq) * p.at_quadrature(cells)
        return r * r

    norm = np.sqrt(fem.integrate(mesh, fem.quadrature_values(mesh, residual_sq)))
    h = mesh.diameters
    return h ** ADJOINT_ELEMENT_POWER * norm + h * _max_interior_jump(mesh, fem.edge_jumps(p))


def combine(st_sq, adj, gamma: float) -> np.ndarray:
    """``((eta_st^2)^gamma + eta_adj^(2 gamma))^(1/2)``."""
    if not 0.0 < gamma <= 1.0:
        raise ValueError(f"gamma must lie in (0, 1], got {gamma}")
    st_sq = np.asarray(st_sq, dtype=float)
    adj = np.asarray(adj, dtype=float)
    if st_sq.shape != adj.shape:
        raise ValueError("indicator arrays differ in length")
    return np.sqrt(st_sq ** gamma + adj ** (2.0 * gamma))


def indicators(mesh, y, p, control, spec) -> IndicatorField:
    st = state_indicators(mesh, y, control, spec)
    adj = adjoint_indicators(mesh, y, p, spec)
    return IndicatorField(st, adj, combine(st, adj, spec.gamma))


def global_estimate(field: IndicatorField, mesh: Mesh) -> GlobalEstimate:
    eta_st = float(np.sqrt(np.sum(field.eta_st_sq)))
    eta_adj = float(np.max(field.eta_adj))
    iota = abs(float(np.log(np.max(1.0 / mesh.diameters))))
    return GlobalEstimate(eta_st, eta_adj, eta_st + eta_adj, iota)


def mark(eta_ocp, theta: float = 0.5) -> set[int]:
    """Elements whose indicator strictly exceeds ``theta`` times the maximum."""
    eta = np.asarray(eta_ocp, dtype=float)
    if eta.size == 0:
        return set()
    top = eta.max()
    if top <= 0.0:
        return set()
    return {int(t) for t in np.flatnonzero(eta > theta * top)}
