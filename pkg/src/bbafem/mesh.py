"""Conforming triangulations and longest-edge bisection.

Meshes are stored array-wise: ``points`` is ``(nv, 2)`` and ``triangles`` is
``(nt, 3)`` with counterclockwise vertex order.  Local edge ``i`` of a triangle
is the edge opposite vertex ``i``, running from vertex ``(i+1) % 3`` to vertex
``(i+2) % 3``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

DOMAINS = ("unit_square", "l_shape", "disk")

# Initial resolutions giving meshes with a few hundred Ndofs.
DEFAULT_RESOLUTION = {"unit_square": 12, "l_shape": 8, "disk": 8}

DOMAIN_AREA = {"unit_square": 1.0, "l_shape": 3.0, "disk": np.pi}

_NEXT = np.array([1, 2, 0])
_PREV = np.array([2, 0, 1])


class GeometryError(ValueError):
    """Raised for degenerate or inconsistent mesh geometry."""


@dataclass(frozen=True)
class EdgeTable:
    """Unique mesh edges with their adjacent triangles.

    ``triangles[e, 1]`` is ``-1`` on boundary edges.
    """

    edges: np.ndarray
    triangles: np.ndarray
    interior: np.ndarray

    def __len__(self):
        return len(self.edges)


def _edge_structure(tris: np.ndarray, nv: int):
    a = tris[:, _NEXT]
    b = tris[:, _PREV]
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    codes = lo * nv + hi
    uniq, inv = np.unique(codes.ravel(), return_inverse=True)
    inv = inv.reshape(-1, 3)
    edges = np.column_stack([uniq // nv, uniq % nv])
    counts = np.bincount(inv.ravel(), minlength=len(uniq))
    if counts.max(initial=0) > 2:
        raise GeometryError("edge shared by more than two triangles")
    order = np.argsort(inv.ravel(), kind="stable")
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    adj = np.full((len(uniq), 2), -1, dtype=np.int64)
    adj[:, 0] = order[starts] // 3
    two = counts == 2
    adj[two, 1] = order[starts[two] + 1] // 3
    return edges, inv, adj, codes


def _signed_areas(points, tris):
    p0, p1, p2 = points[tris[:, 0]], points[tris[:, 1]], points[tris[:, 2]]
    d1 = p1 - p0
    d2 = p2 - p0
    return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])


class Mesh:
    """Conforming triangulation of one of the benchmark domains.

    A mesh is treated as immutable once built; derived quantities are cached.

    Attributes
    ----------
    points : (nv, 2) float array
    triangles : (nt, 3) int array, counterclockwise
    domain : str
    generation : int
        Number of refinement calls since the initial mesh.
    parent : (nt,) int array or None
        Index of the triangle of the previous mesh each triangle descends from.
    vertex_parents : (nv - nv_prev, 2) int array or None
        Edge endpoints of each vertex created by the last refinement, in
        creation order.  Used for nodal transfer.
    """

    def __init__(self, points, triangles, domain, generation=0, parent=None,
                 vertex_parents=None):
        if domain not in DOMAINS:
            raise ValueError(f"unknown domain {domain!r}")
        self.points = np.ascontiguousarray(points, dtype=float)
        self.triangles = np.ascontiguousarray(triangles, dtype=np.int64)
        self.domain = domain
        self.generation = generation
        self.parent = parent
        self.vertex_parents = vertex_parents
        for arr in (self.points, self.triangles):
            arr.setflags(write=False)
        if not np.all(np.isfinite(self.points)):
            raise GeometryError("non-finite vertex coordinates")

    def __repr__(self):
        return (f"Mesh(domain={self.domain!r}, vertices={self.n_vertices}, "
                f"triangles={self.n_triangles}, generation={self.generation})")

    @property
    def n_vertices(self) -> int:
        return len(self.points)

    @property
    def n_triangles(self) -> int:
        return len(self.triangles)

    def copy(self) -> "Mesh":
        return Mesh(self.points.copy(), self.triangles.copy(), self.domain,
                    self.generation, None if self.parent is None else self.parent.copy(),
                    None if self.vertex_parents is None else self.vertex_parents.copy())

    @cached_property
    def _edges(self):
        return _edge_structure(self.triangles, self.n_vertices)

    @cached_property
    def edge_table(self) -> EdgeTable:
        edges, _, adj, _ = self._edges
        return EdgeTable(edges, adj, adj[:, 1] >= 0)

    @cached_property
    def triangle_edges(self) -> np.ndarray:
        """(nt, 3) global edge id of each local edge."""
        return self._edges[1]

    @cached_property
    def edge_lengths(self) -> np.ndarray:
        e = self.edge_table.edges
        return np.linalg.norm(self.points[e[:, 0]] - self.points[e[:, 1]], axis=1)

    @cached_property
    def areas(self) -> np.ndarray:
        return _signed_areas(self.points, self.triangles)

    @cached_property
    def diameters(self) -> np.ndarray:
        """h_T, the longest edge length of each triangle."""
        return self.edge_lengths[self.triangle_edges].max(axis=1)

    @cached_property
    def refinement_edge(self) -> np.ndarray:
        """Local index of the longest edge; ties go to the smallest index."""
        return np.argmax(self.edge_lengths[self.triangle_edges], axis=1)

    @cached_property
    def boundary(self) -> np.ndarray:
        """Boolean vertex flag, true on vertices of boundary edges."""
        et = self.edge_table
        flag = np.zeros(self.n_vertices, dtype=bool)
        flag[et.edges[~et.interior].ravel()] = True
        return flag

    @cached_property
    def normals(self) -> np.ndarray:
        """(nt, 3, 2) outward unit normals of the local edges."""
        p = self.points[self.triangles]
        t = p[:, _PREV] - p[:, _NEXT]
        n = np.stack([t[..., 1], -t[..., 0]], axis=-1)
        return n / np.linalg.norm(n, axis=-1, keepdims=True)

    @cached_property
    def barycentric_gradients(self) -> np.ndarray:
        """(nt, 3, 2) constant gradients of the three barycentric coordinates."""
        p = self.points[self.triangles]
        # grad lambda_i = -|e_i| n_i / (2 |T|) with e_i the edge opposite vertex i
        t = p[:, _PREV] - p[:, _NEXT]
        rot = np.stack([-t[..., 1], t[..., 0]], axis=-1)
        return rot / (2.0 * self.areas[:, None, None])

    @property
    def total_area(self) -> float:
        return float(self.areas.sum())

    def check_geometry(self):
        """Raise GeometryError on degenerate or clockwise triangles."""
        bad = self.areas <= 1e-14 * self.diameters ** 2
        if bad.any():
            t = int(np.flatnonzero(bad)[0])
            raise GeometryError(
                f"degenerate triangle {t}: area {self.areas[t]:.3e}, h {self.diameters[t]:.3e}")

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in radians."""
        p = self.points[self.triangles]
        ang = []
        for i in range(3):
            u = p[:, (i + 1) % 3] - p[:, i]
            v = p[:, (i + 2) % 3] - p[:, i]
            c = np.einsum("ij,ij->i", u, v) / (
                np.linalg.norm(u, axis=1) * np.linalg.norm(v, axis=1))
            ang.append(np.arccos(np.clip(c, -1.0, 1.0)))
        return float(np.min(ang))


def element_geometry(mesh: Mesh, t: int):
    """Area, diameter, outward unit normals and edge lengths of triangle ``t``."""
    area = float(mesh.areas[t])
    h = float(mesh.diameters[t])
    if area <= 1e-14 * h * h:
        raise GeometryError(f"degenerate triangle {t}: area {area:.3e}, h {h:.3e}")
    lengths = mesh.edge_lengths[mesh.triangle_edges[t]]
    return area, h, mesh.normals[t].copy(), lengths.copy()


def star(mesh: Mesh, t: int) -> set[int]:
    """Triangles sharing an edge with ``t``, including ``t`` itself."""
    adj = mesh.edge_table.triangles[mesh.triangle_edges[t]]
    return {int(s) for s in adj.ravel() if s >= 0} | {int(t)}


def on_domain_boundary(domain: str, x: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    """Geometric predicate for points lying on the boundary of ``domain``."""
    x = np.atleast_2d(x)
    px, py = x[:, 0], x[:, 1]
    if domain == "unit_square":
        return ((np.abs(px) < tol) | (np.abs(px - 1) < tol)
                | (np.abs(py) < tol) | (np.abs(py - 1) < tol))
    if domain == "l_shape":
        return ((np.abs(np.abs(px) - 1) < tol) | (np.abs(np.abs(py) - 1) < tol)
                | ((np.abs(px) < tol) & (py <= tol))
                | ((np.abs(py) < tol) & (px >= -tol)))
    if domain == "disk":
        return np.abs(np.hypot(px, py) - 1) < tol
    raise ValueError(f"unknown domain {domain!r}")


def is_conforming(mesh: Mesh) -> bool:
    """True when every boundary edge lies on the domain boundary.

    An edge with a single neighbour inside the domain means a hanging node.
    """
    try:
        et = EdgeTable(*_rebuild_edges(mesh))
    except GeometryError:
        return False
    e = et.edges[~et.interior]
    a, b = mesh.points[e[:, 0]], mesh.points[e[:, 1]]
    if mesh.domain == "disk":
        ok = on_domain_boundary("disk", a) & on_domain_boundary("disk", b)
    else:
        ok = (on_domain_boundary(mesh.domain, a) & on_domain_boundary(mesh.domain, b)
              & on_domain_boundary(mesh.domain, 0.5 * (a + b)))
    return bool(ok.all())


def _rebuild_edges(mesh):
    edges, _, adj, _ = _edge_structure(mesh.triangles, mesh.n_vertices)
    return edges, adj, adj[:, 1] >= 0


# ---------------------------------------------------------------- initial meshes

def _square_grid(x0, y0, n, h, index):
    tris = []
    for j in range(n):
        for i in range(n):
            v00 = index(x0 + i, y0 + j)
            v10 = index(x0 + i + 1, y0 + j)
            v11 = index(x0 + i + 1, y0 + j + 1)
            v01 = index(x0 + i, y0 + j + 1)
            tris.append((v00, v10, v11))
            tris.append((v00, v11, v01))
    return tris


def _unit_square(n):
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(xs, xs)
    points = np.column_stack([X.ravel(), Y.ravel()])
    tris = _square_grid(0, 0, n, 1.0 / n, lambda i, j: i + j * (n + 1))
    return points, np.array(tris)


def _l_shape(n):
    # grid on [-1,1]^2 with spacing 1/n, dropping the square [0,1]x[-1,0]
    m = 2 * n + 1
    ids = {}
    points = []
    for j in range(m):
        for i in range(m):
            x, y = -1.0 + i / n, -1.0 + j / n
            if i > n and j < n:
                continue
            ids[(i, j)] = len(points)
            points.append((x, y))
    tris = []
    for j in range(2 * n):
        for i in range(2 * n):
            if i >= n and j < n:
                continue
            tris.extend(_square_grid(i, j, 1, 1.0 / n, lambda a, b: ids[(a, b)]))
    return np.array(points), np.array(tris)


def _disk(n):
    points = [(0.0, 0.0)]
    rings = [[0]]
    for k in range(1, n + 1):
        r = k / n
        ring = []
        for j in range(6 * k):
            phi = 2.0 * np.pi * j / (6 * k)
            ring.append(len(points))
            points.append((r * np.cos(phi), r * np.sin(phi)))
        rings.append(ring)
    tris = []
    for j in range(6):
        tris.append((0, rings[1][j], rings[1][(j + 1) % 6]))
    for k in range(2, n + 1):
        inner, outer = rings[k - 1], rings[k]
        ni, no = len(inner), len(outer)
        i = j = 0
        while i < ni or j < no:
            # compare angles (i+1)/ni and (j+1)/no exactly
            advance_outer = i >= ni or (j < no and (j + 1) * ni <= (i + 1) * no)
            if advance_outer:
                tris.append((inner[i % ni], outer[j % no], outer[(j + 1) % no]))
                j += 1
            else:
                tris.append((inner[i % ni], outer[j % no], inner[(i + 1) % ni]))
                i += 1
    points = np.array(points)
    # snap boundary ring exactly onto the circle
    b = rings[n]
    points[b] /= np.hypot(points[b, 0], points[b, 1])[:, None]
    return points, np.array(tris)


def _flip_boundary_triangles(points, tris, domain):
    """Flip the interior edge of triangles whose vertices all lie on the boundary.

    Such elements carry no interior dof, so any P1 field with zero boundary
    values vanishes on them identically.
    """
    onb = on_domain_boundary(domain, points, 1e-12)
    for t in np.flatnonzero(onb[tris].all(axis=1)):
        _, tri_edges, adj, _ = _edge_structure(tris, len(points))
        shared = [e for e in tri_edges[t] if adj[e, 1] >= 0]
        if len(shared) != 1:
            continue
        e = shared[0]
        t2 = adj[e, 0] if adj[e, 1] == t else adj[e, 1]
        a, b = (v for v in tris[t] if v in tris[t2])
        c = next(v for v in tris[t] if v not in (a, b))
        d = next(v for v in tris[t2] if v not in (a, b))
        if onb[d]:
            continue  # flipping would not create an interior vertex
        tris[t], tris[t2] = (c, a, d), (c, d, b)
    return tris


def build_initial_mesh(domain: str, resolution: int | None = None) -> Mesh:
    """Structured initial triangulation of a benchmark domain.

    ``unit_square`` and ``l_shape`` use ``resolution`` subdivisions per unit
    length, each square cut along its rising diagonal (flipped in corner
    cells so that no element has all vertices on the boundary).  ``disk`` uses
    ``resolution`` concentric rings of ``6k`` vertices, the outer ring on the
    unit circle.
    """
    if domain not in DOMAINS:
        raise ValueError(f"unknown domain {domain!r}")
    if resolution is None:
        resolution = DEFAULT_RESOLUTION[domain]
    if resolution < 1:
        raise ValueError("resolution must be >= 1")
    builder = {"unit_square": _unit_square, "l_shape": _l_shape, "disk": _disk}[domain]
    points, tris = builder(int(resolution))
    tris = _flip_boundary_triangles(points, tris, domain)
    flip = _signed_areas(points, tris) < 0
    tris[flip] = tris[flip][:, [0, 2, 1]]
    mesh = Mesh(points, tris, domain)
    mesh.check_geometry()
    return mesh


# ---------------------------------------------------------------- refinement

_CODE = np.int64(1) << 31


def _codes(a, b):
    lo = np.minimum(a, b).astype(np.int64)
    hi = np.maximum(a, b).astype(np.int64)
    return lo * _CODE + hi


def refine(mesh: Mesh, marked) -> Mesh:
    """Longest-edge bisection of the marked triangles with conformity closure.

    Each round bisects every triangle that owns a pending edge along its own
    longest edge; closure adds the longest edge of any triangle touching a
    pending edge.  Edges left with a hanging midpoint become pending for the
    next round, so the loop ends with a conforming mesh.  On the disk, new
    boundary vertices are projected radially onto the unit circle.
    """
    marked = np.unique(np.fromiter((int(t) for t in marked), dtype=np.int64))
    if marked.size == 0:
        return mesh.copy()
    if marked[0] < 0 or marked[-1] >= mesh.n_triangles:
        raise IndexError("marked triangle id out of range")

    nv0 = mesh.n_vertices
    points = [mesh.points]
    tris = mesh.triangles.copy()
    parent = np.arange(mesh.n_triangles)
    vparents = []
    nv = nv0
    # midpoints created in this call: sorted edge codes -> vertex id
    mid_codes = np.empty(0, dtype=np.int64)
    mid_ids = np.empty(0, dtype=np.int64)
    to_split = marked
    # boundary edges are tracked by code: mid-round edge counts are unreliable
    et = mesh.edge_table
    be = et.edges[~et.interior]
    bnd_codes = np.sort(_codes(be[:, 0], be[:, 1]))

    while True:
        pts = np.concatenate(points) if len(points) > 1 else points[0]
        points = [pts]
        a = tris[:, _NEXT]
        b = tris[:, _PREV]
        codes = _codes(a, b)
        uniq, inv = np.unique(codes.ravel(), return_inverse=True)
        tri_edges = inv.reshape(-1, 3)
        ea, eb = uniq // _CODE, uniq % _CODE
        elen = np.linalg.norm(pts[ea] - pts[eb], axis=1)
        longest = np.argmax(elen[tri_edges], axis=1)
        rows = np.arange(len(tris))
        lid = tri_edges[rows, longest]

        flagged = np.zeros(len(uniq), dtype=bool)
        flagged[lid[to_split]] = True
        if mid_codes.size:
            pos = np.searchsorted(uniq, mid_codes)
            pos = np.minimum(pos, len(uniq) - 1)
            hit = uniq[pos] == mid_codes
            flagged[pos[hit]] = True
        while True:
            touch = flagged[tri_edges].any(axis=1) & ~flagged[lid]
            if not touch.any():
                break
            flagged[lid[touch]] = True
        split = flagged[lid]
        if not split.any():
            break

        # midpoints of the edges bisected in this round
        bis = np.unique(lid[split])
        bis_codes = uniq[bis]
        vid = np.full(len(bis), -1, dtype=np.int64)
        if mid_codes.size:
            pos = np.minimum(np.searchsorted(mid_codes, bis_codes), len(mid_codes) - 1)
            known = mid_codes[pos] == bis_codes
            vid[known] = mid_ids[pos[known]]
        new = vid < 0
        nnew = int(new.sum())
        if nnew:
            na, nb = ea[bis[new]], eb[bis[new]]
            mp = 0.5 * (pts[na] + pts[nb])
            vid[new] = np.arange(nv, nv + nnew)
            onb = np.isin(bis_codes[new], bnd_codes)
            if mesh.domain == "disk":
                mp[onb] /= np.hypot(mp[onb, 0], mp[onb, 1])[:, None]
            if onb.any():
                halves = np.concatenate([_codes(na[onb], vid[new][onb]), _codes(vid[new][onb], nb[onb])])
                bnd_codes = np.sort(np.concatenate([bnd_codes, halves]))
            nv += nnew
            points.append(mp)
            vparents.append(np.column_stack([na, nb]))
        all_codes = np.concatenate([mid_codes, bis_codes[new]])
        all_ids = np.concatenate([mid_ids, vid[new]])
        order = np.argsort(all_codes)
        mid_codes, mid_ids = all_codes[order], all_ids[order]

        s = np.flatnonzero(split)
        k = longest[s]
        t = tris[s]
        vi = t[np.arange(len(s)), k]
        vj = t[np.arange(len(s)), _NEXT[k]]
        vl = t[np.arange(len(s)), _PREV[k]]
        m = vid[np.searchsorted(bis_codes, codes[s, k])]
        child1 = np.column_stack([vi, vj, m])
        child2 = np.column_stack([vi, m, vl])
        keep = ~split
        tris = np.concatenate([tris[keep], child1, child2])
        parent = np.concatenate([parent[keep], parent[s], parent[s]])

        # pending: known midpoints whose edge exists unsplit.  All midpoints
        # are kept, since a later bisection may recreate an edge that a
        # neighbour has already split.
        cur = np.unique(_codes(tris[:, _NEXT], tris[:, _PREV]).ravel())
        pos = np.minimum(np.searchsorted(cur, mid_codes), len(cur) - 1)
        to_split = np.empty(0, dtype=np.int64)
        if not (cur[pos] == mid_codes).any():
            break

    pts = np.concatenate(points) if len(points) > 1 else points[0]
    vp = np.concatenate(vparents) if vparents else np.empty((0, 2), dtype=np.int64)
    return Mesh(pts, tris, mesh.domain, mesh.generation + 1, parent, vp)


def transfer_nodal(old: Mesh, new: Mesh, values: np.ndarray) -> np.ndarray:
    """Extend nodal values to the vertices created by ``refine``.

    New vertices get the mean of their edge endpoints, which is exact for
    continuous P1 fields.
    """
    out = np.empty(new.n_vertices)
    out[:old.n_vertices] = values
    vp = new.vertex_parents
    # vertices are created in rounds; parents always precede children
    for i, (a, b) in enumerate(vp):
        out[old.n_vertices + i] = 0.5 * (out[a] + out[b])
    return out
