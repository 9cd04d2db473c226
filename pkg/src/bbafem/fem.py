"""P1 finite elements with homogeneous Dirichlet conditions."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh
from .quadrature import map_points, triangle_rule

CHUNK = 8192


class LinearSolverError(RuntimeError):
    pass


class DofMap:
    """Interior vertices numbered contiguously from 0; boundary vertices get -1."""

    def __init__(self, mesh: Mesh):
        self.vertices = np.flatnonzero(~mesh.boundary)
        self.vertex_to_dof = np.full(mesh.n_vertices, -1, dtype=np.int64)
        self.vertex_to_dof[self.vertices] = np.arange(len(self.vertices))

    @property
    def n_dofs(self) -> int:
        return len(self.vertices)


def dof_map(mesh: Mesh) -> DofMap:
    dm = mesh.__dict__.get("_dofmap")
    if dm is None:
        dm = mesh.__dict__["_dofmap"] = DofMap(mesh)
    return dm


class FeFunction:
    """Continuous P1 field given by its nodal values on ``mesh``."""

    def __init__(self, mesh: Mesh, values):
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_vertices,):
            raise ValueError(f"expected {mesh.n_vertices} nodal values, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise FloatingPointError("non-finite nodal values")
        self.mesh = mesh
        self.values = values

    @classmethod
    def zeros(cls, mesh):
        return cls(mesh, np.zeros(mesh.n_vertices))

    @classmethod
    def from_dofs(cls, mesh, x):
        v = np.zeros(mesh.n_vertices)
        v[dof_map(mesh).vertices] = x
        return cls(mesh, v)

    @classmethod
    def interpolate(cls, mesh, g):
        return cls(mesh, g(mesh.points))

    @property
    def dofs(self) -> np.ndarray:
        return self.values[dof_map(self.mesh).vertices]

    def element_values(self) -> np.ndarray:
        """(nt, 3) nodal values per triangle."""
        return self.values[self.mesh.triangles]

    def evaluate(self, t: int, bary) -> float:
        return float(np.dot(bary, self.values[self.mesh.triangles[t]]))

    def gradient(self, t: int) -> np.ndarray:
        return self.values[self.mesh.triangles[t]] @ self.mesh.barycentric_gradients[t]

    def gradients(self) -> np.ndarray:
        """(nt, 2) elementwise constant gradients."""
        return np.einsum("ti,tid->td", self.element_values(), self.mesh.barycentric_gradients)

    def at_quadrature(self, cells=slice(None)) -> np.ndarray:
        """Values at the degree-19 quadrature points of ``cells``, shape (n, nq)."""
        return self.element_values()[cells] @ triangle_rule().points.T


# ---------------------------------------------------------------- quadrature data

def quadrature_values(mesh: Mesh, fn) -> np.ndarray:
    """Evaluate ``fn(x, cells)`` at every element quadrature point.

    ``x`` has shape (n, nq, 2) for a chunk of element ids ``cells``.
    Returns an (nt, nq) array.
    """
    nq = len(triangle_rule().weights)
    out = np.empty((mesh.n_triangles, nq))
    for start in range(0, mesh.n_triangles, CHUNK):
        cells = np.arange(start, min(start + CHUNK, mesh.n_triangles))
        x = map_points(mesh.points[mesh.triangles[cells]])
        out[cells] = fn(x, cells)
    return out


def _as_quadrature_values(mesh, data, what):
    if callable(data):
        vals = quadrature_values(mesh, lambda x, cells: data(x))
    else:
        vals = np.broadcast_to(np.asarray(data, dtype=float),
                               (mesh.n_triangles, len(triangle_rule().weights)))
    if not np.all(np.isfinite(vals)):
        t, q = np.argwhere(~np.isfinite(vals))[0]
        x = map_points(mesh.points[mesh.triangles[t]])[q]
        raise FloatingPointError(f"non-finite {what} at {tuple(x)}")
    return vals


def integrate(mesh: Mesh, data) -> np.ndarray:
    """Per-element integrals of a point function or (nt, nq) values."""
    vals = _as_quadrature_values(mesh, data, "integrand")
    return 2.0 * mesh.areas * (vals @ triangle_rule().weights)


# ---------------------------------------------------------------- assembly

def _assemble(mesh, local, full):
    tris = mesh.triangles
    if full:
        idx = tris
        n = mesh.n_vertices
    else:
        dm = dof_map(mesh)
        idx = dm.vertex_to_dof[tris]
        n = dm.n_dofs
    rows = np.broadcast_to(idx[:, :, None], local.shape)
    cols = np.broadcast_to(idx[:, None, :], local.shape)
    keep = (rows >= 0) & (cols >= 0)
    A = sp.coo_matrix((local[keep], (rows[keep], cols[keep])), shape=(n, n))
    return A.tocsr()


def local_stiffness(mesh: Mesh) -> np.ndarray:
    G = mesh.barycentric_gradients
    return mesh.areas[:, None, None] * np.einsum("tid,tjd->tij", G, G)


def assemble_stiffness(mesh: Mesh, full: bool = False) -> sp.csr_matrix:
    """Stiffness matrix on interior dofs, or on all vertices when ``full``."""
    mesh.check_geometry()
    return _assemble(mesh, local_stiffness(mesh), full)


def local_weighted_mass(mesh: Mesh, weight) -> np.ndarray:
    vals = _as_quadrature_values(mesh, weight, "weight")
    if np.any(vals < 0):
        t, q = np.argwhere(vals < 0)[0]
        raise ValueError(f"negative mass weight {vals[t, q]:.3e} in triangle {t}")
    rule = triangle_rule()
    lam = rule.points
    prod = (lam[:, :, None] * lam[:, None, :]).reshape(len(lam), 9)
    loc = (vals * rule.weights) @ prod
    return (2.0 * mesh.areas)[:, None, None] * loc.reshape(-1, 3, 3)


def assemble_weighted_mass(mesh: Mesh, weight, full: bool = False) -> sp.csr_matrix:
    """Mass matrix with pointwise weight ``weight >= 0`` (callable or (nt, nq))."""
    return _assemble(mesh, local_weighted_mass(mesh, weight), full)


def assemble_load(mesh: Mesh, density, full: bool = False) -> np.ndarray:
    """Load vector ``int density phi_i`` (callable or (nt, nq) values)."""
    vals = _as_quadrature_values(mesh, density, "density")
    rule = triangle_rule()
    loc = (2.0 * mesh.areas)[:, None] * ((vals * rule.weights) @ rule.points)
    return scatter_local_vector(mesh, loc, full)


def scatter_local_vector(mesh: Mesh, loc: np.ndarray, full: bool = False) -> np.ndarray:
    """Sum (nt, 3) element contributions into a dof (or vertex) vector."""
    v = np.bincount(mesh.triangles.ravel(), weights=loc.ravel(), minlength=mesh.n_vertices)
    if full:
        return v
    return v[dof_map(mesh).vertices]


def solve_spd(A, b, rel_tol: float = 1e-12, max_refinements: int = 3) -> np.ndarray:
    """Direct sparse solve with residual check and iterative refinement.

    Accepts ``|b - A x| <= rel_tol |b|``, or a residual at the rounding
    floor ``n eps |A| |x|`` when ``b`` itself is tiny.
    """
    b = np.asarray(b, dtype=float)
    if A.shape[0] == 0:
        return np.zeros(0)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return np.zeros_like(b)
    A = sp.csc_matrix(A)
    try:
        lu = spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:
        raise LinearSolverError(f"factorization failed: {exc}") from exc
    norm_a = abs(A).sum(axis=0).max()

    def tol(x):
        floor = 16 * np.sqrt(A.shape[0]) * np.finfo(float).eps * norm_a * np.linalg.norm(x)
        return max(rel_tol * nb, floor)

    x = lu.solve(b)
    res = np.linalg.norm(b - A @ x)
    for _ in range(max_refinements):
        if res <= tol(x):
            break
        x = x + lu.solve(b - A @ x)
        res = np.linalg.norm(b - A @ x)
    if not np.isfinite(res) or res > tol(x):
        raise LinearSolverError(f"residual {res:.3e} exceeds {rel_tol:.1e} * |b| = {rel_tol * nb:.3e}")
    return x


# ---------------------------------------------------------------- jumps

def _local_edge_index(mesh, tris, edges):
    te = mesh.triangle_edges[tris]
    return np.argmax(te == edges[:, None], axis=1)


def edge_jumps(f: FeFunction) -> np.ndarray:
    """Normal-derivative jump on every edge; 0 on boundary edges."""
    mesh = f.mesh
    et = mesh.edge_table
    out = np.zeros(len(et))
    e = np.flatnonzero(et.interior)
    tp, tm = et.triangles[e, 0], et.triangles[e, 1]
    kp = _local_edge_index(mesh, tp, e)
    km = _local_edge_index(mesh, tm, e)
    g = f.gradients()
    n = mesh.normals
    out[e] = (np.einsum("ed,ed->e", n[tp, kp], g[tp])
              + np.einsum("ed,ed->e", n[tm, km], g[tm]))
    return out


def edge_jump(f: FeFunction, e: int) -> float:
    """``n+ . grad f|T+  +  n- . grad f|T-`` on interior edge ``e``."""
    et = f.mesh.edge_table
    if not et.interior[e]:
        raise ValueError(f"edge {e} is a boundary edge")
    tp, tm = et.triangles[e]
    total = 0.0
    for t in (tp, tm):
        k = int(np.flatnonzero(f.mesh.triangle_edges[t] == e)[0])
        total += float(f.mesh.normals[t, k] @ f.gradient(t))
    return total
