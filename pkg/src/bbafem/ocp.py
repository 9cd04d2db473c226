"""Semidiscrete bang-bang optimal control: state, adjoint and fixed point.

The control is never discretized.  A bang-bang control is represented by the
discrete adjoint that induces it, and every integral involving it is computed
by splitting elements along the adjoint's zero line.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

from . import fem
from .fem import FeFunction
from .mesh import Mesh

PointFunction = Callable[[np.ndarray], np.ndarray]


class NewtonError(RuntimeError):
    def __init__(self, message, history):
        super().__init__(message)
        self.history = history


# ---------------------------------------------------------------- problem data

@dataclass(frozen=True)
class Nonlinearity:
    """Monotone nonlinearity ``f(x, y)`` with derivative ``df_dy(x, y) >= 0``."""

    name: str
    f: Callable[[np.ndarray, np.ndarray], np.ndarray]
    df_dy: Callable[[np.ndarray, np.ndarray], np.ndarray]


def cube() -> Nonlinearity:
    return Nonlinearity("cube", lambda x, y: y ** 3, lambda x, y: 3.0 * y ** 2)


def arctan() -> Nonlinearity:
    return Nonlinearity("arctan", lambda x, y: np.arctan(y), lambda x, y: 1.0 / (1.0 + y ** 2))


def zero_nonlinearity() -> Nonlinearity:
    return Nonlinearity("custom", lambda x, y: np.zeros_like(y), lambda x, y: np.zeros_like(y))


def _zero(x):
    return np.zeros(np.shape(x)[:-1])


@dataclass(frozen=True)
class ProblemSpec:
    """Data of one control problem.

    The state equation is ``-Δy + f(x, y) = forcing + u`` with ``y = 0`` on the
    boundary, and the tracking target is ``desired_state``.  Exact solutions are
    optional closed-form point functions.
    """

    domain: str
    nonlinearity: Nonlinearity
    a: float = -1.0
    b: float = 1.0
    forcing: PointFunction = _zero
    desired_state: PointFunction = _zero
    gamma: float = 1.0
    exact_state: Optional[PointFunction] = None
    exact_adjoint: Optional[PointFunction] = None
    exact_control: Optional[PointFunction] = None
    name: str = "custom"

    def __post_init__(self):
        if self.a > self.b:
            raise ValueError(f"bounds must satisfy a <= b, got a={self.a}, b={self.b}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")

    @property
    def has_exact(self) -> bool:
        return None not in (self.exact_state, self.exact_adjoint, self.exact_control)


# ---------------------------------------------------------------- controls

@dataclass(frozen=True)
class Constant:
    value: float


@dataclass(frozen=True, eq=False)
class BangBang:
    """``a`` where the adjoint exceeds ``zero_tol``, ``b`` below ``-zero_tol``,
    the midpoint on the band in between."""

    adjoint: FeFunction
    a: float
    b: float
    zero_tol: float = 0.0

    @property
    def mesh(self) -> Mesh:
        return self.adjoint.mesh

    def value_of_sign(self, s):
        return np.where(s > 0, self.a, np.where(s < 0, self.b, 0.5 * (self.a + self.b)))


Control = Union[Constant, BangBang]


def control_update(p: FeFunction, a: float, b: float, zero_tol: float = 0.0) -> BangBang:
    if a > b:
        raise ValueError("a must not exceed b")
    return BangBang(p, float(a), float(b), float(zero_tol))


def barycentric(mesh: Mesh, cells: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Barycentric coordinates of points ``x`` (m, k, 2) in triangles ``cells`` (m,)."""
    p0 = mesh.points[mesh.triangles[cells, 0]]
    G = mesh.barycentric_gradients[cells]
    lam = np.einsum("mid,mkd->mki", G, x - p0[:, None, :])
    lam[..., 0] += 1.0
    return lam


def evaluate_control(control: Control, mesh: Mesh, cells, bary) -> np.ndarray:
    """Control values at barycentric points ``bary`` (m, 3) of ``cells`` (m,)."""
    cells = np.asarray(cells)
    bary = np.asarray(bary, dtype=float)
    if isinstance(control, Constant):
        return np.full(len(cells), float(control.value))
    pv = np.einsum("mi,mi->m", bary, control.adjoint.values[mesh.triangles[cells]])
    s = np.where(pv > control.zero_tol, 1, np.where(pv < -control.zero_tol, -1, 0))
    return control.value_of_sign(s)


# ---------------------------------------------------------------- clipping

def _split_polygons(P, v):
    """Split a triangle with linear values ``v`` into its v>=0 and v<=0 parts."""
    pos, neg = [], []
    for i in range(3):
        j = (i + 1) % 3
        if v[i] >= 0:
            pos.append((P[i], v[i]))
        if v[i] <= 0:
            neg.append((P[i], v[i]))
        if (v[i] > 0 > v[j]) or (v[i] < 0 < v[j]):
            s = v[i] / (v[i] - v[j])
            q = P[i] + s * (P[j] - P[i])
            pos.append((q, 0.0))
            neg.append((q, 0.0))
    return pos, neg


def _fan(poly):
    return [(poly[0], poly[k], poly[k + 1]) for k in range(1, len(poly) - 1)]


@dataclass
class Pieces:
    """Triangles ``verts`` (m, 3, 2) inside parent elements ``cell`` (m,).

    ``vals`` are values of the last splitting function at the vertices,
    ``sign`` the side (+1, 0, -1) each piece lies on, and ``tag`` the index of
    the piece it was split from.
    """

    verts: np.ndarray
    cell: np.ndarray
    vals: Optional[np.ndarray] = None
    sign: Optional[np.ndarray] = None
    tag: Optional[np.ndarray] = None

    def __len__(self):
        return len(self.cell)

    @property
    def areas(self) -> np.ndarray:
        d1 = self.verts[:, 1] - self.verts[:, 0]
        d2 = self.verts[:, 2] - self.verts[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @staticmethod
    def concat(parts):
        return Pieces(np.concatenate([p.verts for p in parts]),
                      np.concatenate([p.cell for p in parts]),
                      np.concatenate([p.vals for p in parts]),
                      np.concatenate([p.sign for p in parts]),
                      np.concatenate([p.tag for p in parts]))


def split_at_level(pieces: Pieces, vals: np.ndarray, level: float):
    """Split triangles along the line where the linear ``vals`` equal ``level``.

    Returns the pieces above, on, and below the level; "on" collects
    triangles on which the function is identically ``level``.  The ``tag`` of
    each output piece is the index of its source triangle.
    """
    d = vals - level
    hasp = (d > 0).any(axis=1)
    hasn = (d < 0).any(axis=1)
    groups = {}
    for key, mask in (("above", hasp & ~hasn), ("on", ~hasp & ~hasn), ("below", hasn & ~hasp)):
        idx = np.flatnonzero(mask)
        groups[key] = [(pieces.verts[idx], idx, vals[idx])]
    cut = np.flatnonzero(hasp & hasn)
    if cut.size:
        tri = {"above": [], "below": []}
        for i in cut:
            pos, neg = _split_polygons(pieces.verts[i], d[i])
            for key, poly in (("above", pos), ("below", neg)):
                for t in _fan(poly):
                    tri[key].append((i, [q for q, _ in t], [w + level for _, w in t]))
        for key, items in tri.items():
            if items:
                groups[key].append((np.array([v for _, v, _ in items]),
                                    np.array([i for i, _, _ in items]),
                                    np.array([w for _, _, w in items])))
    out = []
    for key in ("above", "on", "below"):
        verts, src, vs = (np.concatenate(z) for z in zip(*groups[key]))
        src = src.astype(np.int64)
        out.append(Pieces(verts.reshape(-1, 3, 2), pieces.cell[src], vs.reshape(-1, 3),
                          None, src))
    return out


def _linear_at(mesh, p: FeFunction, pieces: Pieces) -> np.ndarray:
    lam = barycentric(mesh, pieces.cell, pieces.verts)
    return np.einsum("mki,mi->mk", lam, p.values[mesh.triangles[pieces.cell]])


def split_by_control(mesh: Mesh, pieces: Pieces, control: Control) -> Pieces:
    """Refine ``pieces`` so that ``control`` is constant on each; set ``sign``.

    ``tag`` of the result indexes into the input pieces.
    """
    n = len(pieces)
    if isinstance(control, Constant):
        return Pieces(pieces.verts, pieces.cell, pieces.vals,
                      np.zeros(n, dtype=np.int64), np.arange(n))
    if control.adjoint.mesh is not mesh:
        raise ValueError("control adjoint lives on a different mesh")
    vals = _linear_at(mesh, control.adjoint, pieces)
    tol = control.zero_tol
    above, on, below = split_at_level(pieces, vals, tol)
    if tol == 0.0:
        parts = [(above, 1), (on, 0), (below, -1)]
    else:
        b_above, b_on, b_below = split_at_level(below, below.vals, -tol)
        for q in (b_above, b_on, b_below):
            q.tag = below.tag[q.tag]
        parts = [(above, 1), (on, 0), (b_above, 0), (b_on, 0), (b_below, -1)]
    for piece, s in parts:
        piece.sign = np.full(len(piece), s, dtype=np.int64)
    return Pieces.concat([p for p, _ in parts])


def element_pieces(mesh: Mesh) -> Pieces:
    nt = mesh.n_triangles
    return Pieces(mesh.points[mesh.triangles], np.arange(nt), np.zeros((nt, 3)),
                  np.zeros(nt, dtype=np.int64), np.arange(nt))


def control_values(control: Control, sign: np.ndarray) -> np.ndarray:
    if isinstance(control, Constant):
        return np.full(len(sign), float(control.value))
    return control.value_of_sign(sign)


def control_pieces(mesh: Mesh, control: Control):
    """Sub-triangulation on which ``control`` is constant, with its values."""
    pieces = split_by_control(mesh, element_pieces(mesh), control)
    return pieces, control_values(control, pieces.sign)


def clip_element_by_adjoint(mesh: Mesh, t: int, p: FeFunction):
    """Split triangle ``t`` along the zero line of ``p``.

    Returns a list of ``(polygon, sign)`` with convex polygons of at most four
    vertices; a single entry (the triangle) when ``p`` does not change sign.
    """
    P = mesh.points[mesh.triangles[t]]
    v = p.values[mesh.triangles[t]]
    if (v > 0).any() and (v < 0).any():
        pos, neg = _split_polygons(P, v)
        return [(np.array([q for q, _ in pos]), 1), (np.array([q for q, _ in neg]), -1)]
    s = 1 if (v > 0).any() else (-1 if (v < 0).any() else 0)
    return [(P.copy(), s)]


def polygon_area(poly: np.ndarray) -> float:
    x, y = poly[:, 0], poly[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def control_load(mesh: Mesh, control: Control, full: bool = False) -> np.ndarray:
    """Exact load vector ``int u phi_i``.

    On each piece the control is constant and ``phi_i`` is linear, so the
    integral is area times the basis value at the piece centroid.
    """
    if isinstance(control, Constant):
        loc = np.repeat((control.value * mesh.areas / 3.0)[:, None], 3, axis=1)
        return fem.scatter_local_vector(mesh, loc, full)
    pieces, values = control_pieces(mesh, control)
    centroid = pieces.verts.mean(axis=1)[:, None, :]
    lam = barycentric(mesh, pieces.cell, centroid)[:, 0, :]
    contrib = (values * pieces.areas)[:, None] * lam
    loc = np.zeros((mesh.n_triangles, 3))
    np.add.at(loc, pieces.cell, contrib)
    return fem.scatter_local_vector(mesh, loc, full)


def _same_control(c1, c2):
    if c1 is c2:
        return True
    if isinstance(c1, Constant) and isinstance(c2, Constant):
        return c1.value == c2.value
    if isinstance(c1, BangBang) and isinstance(c2, BangBang):
        return (c1.adjoint.mesh is c2.adjoint.mesh and c1.a == c2.a and c1.b == c2.b
                and c1.zero_tol == c2.zero_tol
                and np.array_equal(c1.adjoint.values, c2.adjoint.values))
    return False


def control_l1_distance(mesh: Mesh, c1: Control, c2: Control) -> float:
    """``int |c1 - c2|`` with both controls' switching lines resolved exactly."""
    if _same_control(c1, c2):
        return 0.0
    first = split_by_control(mesh, element_pieces(mesh), c1)
    v1 = control_values(c1, first.sign)
    second = split_by_control(mesh, first, c2)
    v2 = control_values(c2, second.sign)
    return float(np.sum(np.abs(v1[second.tag] - v2) * second.areas))


# ---------------------------------------------------------------- solvers

class _System:
    """Per-mesh cache of the parts of the discrete equations that do not change."""

    def __init__(self, mesh: Mesh, spec: ProblemSpec):
        if spec.domain != mesh.domain:
            raise ValueError(f"problem domain {spec.domain!r} does not match mesh {mesh.domain!r}")
        self.mesh = mesh
        self.spec = spec
        self.K = fem.assemble_stiffness(mesh)
        self.forcing_load = fem.assemble_load(mesh, spec.forcing)
        self.desired_q = fem.quadrature_values(mesh, lambda x, c: spec.desired_state(x))
        self.dm = fem.dof_map(mesh)

    def _nonlinear(self, fn, y: FeFunction):
        return fem.quadrature_values(self.mesh, lambda x, c: fn(x, y.at_quadrature(c)))

    def state_residual(self, y: FeFunction, rhs):
        fq = self._nonlinear(self.spec.nonlinearity.f, y)
        return self.K @ y.dofs + fem.assemble_load(self.mesh, fq) - rhs

    def jacobian(self, y: FeFunction):
        w = self._nonlinear(self.spec.nonlinearity.df_dy, y)
        return self.K + fem.assemble_weighted_mass(self.mesh, w)

    def newton(self, control, y_init=None, newton_tol=1e-10, max_newton=25):
        mesh = self.mesh
        rhs = self.forcing_load + control_load(mesh, control)
        y = FeFunction.zeros(mesh) if y_init is None else FeFunction(mesh, y_init.values.copy())
        y.values[mesh.boundary] = 0.0
        R = self.state_residual(y, rhs)
        rnorm = np.linalg.norm(R)
        target = newton_tol * (1.0 + np.linalg.norm(rhs))
        history = [rnorm]
        for it in range(1, max_newton + 1):
            delta = fem.solve_spd(self.jacobian(y), -R)
            step = 1.0
            for _ in range(11):
                trial = FeFunction.from_dofs(mesh, y.dofs + step * delta)
                Rt = self.state_residual(trial, rhs)
                tnorm = np.linalg.norm(Rt)
                if tnorm < rnorm or tnorm <= target:
                    break
                step *= 0.5
            y, R, rnorm = trial, Rt, tnorm
            history.append(rnorm)
            if rnorm <= target:
                return y, it, history
        raise NewtonError(f"Newton did not converge in {max_newton} iterations "
                          f"(residual {rnorm:.3e}, target {target:.3e})", history)

    def adjoint(self, y: FeFunction) -> FeFunction:
        yq = y.at_quadrature()
        rhs = fem.assemble_load(self.mesh, yq - self.desired_q)
        return FeFunction.from_dofs(self.mesh, fem.solve_spd(self.jacobian(y), rhs))


def solve_state(mesh: Mesh, spec: ProblemSpec, control: Control, y_init=None,
                newton_tol: float = 1e-10, max_newton: int = 25) -> FeFunction:
    """Damped Newton solve of the discrete state equation for a fixed control."""
    y, _, _ = _System(mesh, spec).newton(control, y_init, newton_tol, max_newton)
    return y


def solve_adjoint(mesh: Mesh, spec: ProblemSpec, y: FeFunction) -> FeFunction:
    if y.mesh is not mesh:
        raise ValueError("state lives on a different mesh")
    return _System(mesh, spec).adjoint(y)


@dataclass
class FixedPointReport:
    iterations: int
    final_change: float
    newton_iterations: list
    converged: bool
    history: list = field(default_factory=list)


def fixed_point(mesh: Mesh, spec: ProblemSpec, u0: Control | None = None,
                fp_tol: float = 1e-10, max_fp: int = 100, y_init: FeFunction | None = None,
                newton_tol: float = 1e-10, max_newton: int = 25):
    """Iterate control -> state -> adjoint -> control until the control settles.

    Stops when the L1 change of the control is at most ``fp_tol * |Ω_h|``.
    Returns ``(y, p, control, report)`` where ``control`` is the sign
    characterization of ``p``.
    """
    system = _System(mesh, spec)
    u = Constant(0.5 * (spec.a + spec.b)) if u0 is None else u0
    y = y_init
    area = mesh.total_area
    newton_counts, history = [], []
    change = np.inf
    for k in range(1, max_fp + 1):
        y, its, _ = system.newton(u, y, newton_tol, max_newton)
        newton_counts.append(its)
        p = system.adjoint(y)
        u_new = control_update(p, spec.a, spec.b)
        change = control_l1_distance(mesh, u, u_new)
        history.append(change)
        u = u_new
        if change <= fp_tol * area:
            return y, p, u, FixedPointReport(k, change, newton_counts, True, history)
    return y, p, u, FixedPointReport(max_fp, change, newton_counts, False, history)
