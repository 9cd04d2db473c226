"""File output: legacy VTK, control/mesh SVG and convergence plots."""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .mesh import Mesh
from .ocp import BangBang, Control, control_pieces, evaluate_control

# two-colour bang-bang map: lower bound blue, upper bound red
LOWER_COLOR = "#3b6fb6"
UPPER_COLOR = "#c8413b"
MIDDLE_COLOR = "#dddddd"


def _scalars(name, values):
    lines = [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    lines += [f"{v:.16e}" for v in np.asarray(values, dtype=float)]
    return lines


def control_at_centroids(mesh: Mesh, control: Control) -> np.ndarray:
    cells = np.arange(mesh.n_triangles)
    bary = np.full((mesh.n_triangles, 3), 1.0 / 3.0)
    return evaluate_control(control, mesh, cells, bary)


def write_vtk(path, mesh: Mesh, point_data: dict | None = None,
              cell_data: dict | None = None, title: str = "bbafem") -> Path:
    """Legacy ASCII unstructured grid with triangle cells."""
    path = Path(path)
    nv, nt = mesh.n_vertices, mesh.n_triangles
    lines = ["# vtk DataFile Version 3.0", title[:255], "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {nv} double"]
    lines += [f"{x:.16e} {y:.16e} 0.0" for x, y in mesh.points]
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt  # VTK_TRIANGLE
    if point_data:
        lines.append(f"POINT_DATA {nv}")
        for name, vals in point_data.items():
            if len(vals) != nv:
                raise ValueError(f"point field {name!r} has {len(vals)} values, expected {nv}")
            lines += _scalars(name, vals)
    if cell_data:
        lines.append(f"CELL_DATA {nt}")
        for name, vals in cell_data.items():
            if len(vals) != nt:
                raise ValueError(f"cell field {name!r} has {len(vals)} values, expected {nt}")
            lines += _scalars(name, vals)
    path.write_text("\n".join(lines) + "\n")
    return path


def write_snapshot_vtk(path, snap) -> Path:
    return write_vtk(path, snap.mesh,
                     point_data={"y": snap.y.values, "p": snap.p.values},
                     cell_data={"eta_ocp": snap.field.eta_ocp,
                                "control": control_at_centroids(snap.mesh, snap.control)},
                     title=f"iteration {snap.iteration}")


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def plot_control(path, mesh: Mesh, control: Control, exact_switch=None, title: str | None = None):
    """Mesh wireframe over the control, split exactly along the switching line.

    ``exact_switch`` optionally gives a point function whose zero level is
    drawn on top (the continuous switching set).
    """
    plt = _pyplot()
    from matplotlib.collections import LineCollection, PolyCollection
    from matplotlib.tri import Triangulation, UniformTriRefiner

    pieces, values = control_pieces(mesh, control)
    colors = np.full(len(values), MIDDLE_COLOR, dtype=object)
    if isinstance(control, BangBang) and control.a < control.b:
        colors[values == control.b] = UPPER_COLOR
        colors[values == control.a] = LOWER_COLOR
    fig, ax = plt.subplots(figsize=(5, 5))
    # matching edge colour closes anti-aliasing seams between pieces
    ax.add_collection(PolyCollection(pieces.verts, facecolors=colors, edgecolors=colors,
                                     linewidths=0.2))
    et = mesh.edge_table
    ax.add_collection(LineCollection(mesh.points[et.edges], colors="k", linewidths=0.15))
    lo, hi = mesh.points.min(axis=0), mesh.points.max(axis=0)
    if exact_switch is not None:
        tri = Triangulation(mesh.points[:, 0], mesh.points[:, 1], mesh.triangles)
        fine, g = UniformTriRefiner(tri).refine_field(exact_switch(mesh.points), subdiv=2)
        g = exact_switch(np.column_stack([fine.x, fine.y]))
        ax.tricontour(fine, g, levels=[0.0], colors="yellow", linewidths=1.0)
    ax.set_xlim(lo[0], hi[0])
    ax.set_ylim(lo[1], hi[1])
    ax.set_aspect("equal")
    ax.set_axis_off()
    if title:
        ax.set_title(title, fontsize=9)
    fig.savefig(path, bbox_inches="tight")
    plt.close(fig)
    return Path(path)


def plot_convergence(path, record) -> Path:
    """Errors and estimators against Ndofs (log-log) plus the effectivity index."""
    plt = _pyplot()
    n = record.column("ndofs")
    fig, (ax1, ax2, ax3) = plt.subplots(1, 3, figsize=(13, 4))
    for name, label in (("error_y", r"$\|\bar y - y_\ell\|_{L^2}$"),
                        ("error_p", r"$\|\bar p - p_\ell\|_{L^\infty}$"),
                        ("error_u", r"$\|\bar u - u_\ell\|_{L^1}$")):
        ax1.loglog(n, record.column(name), "o-", ms=3, label=label)
    for name, label in (("est_y", r"$\eta_{st}$"), ("est_p_inf", r"$\eta_{adj}$")):
        ax2.loglog(n, record.column(name), "s-", ms=3, label=label)
    # reference slope -1
    if len(n) > 1:
        ref = record.column("error_y")[0] * (n / n[0]) ** -1.0
        ax1.loglog(n, ref, "k--", lw=0.8, label="slope -1")
    ax3.semilogx(n, record.column("eff_index"), "d-", ms=3)
    ax1.set_title("errors")
    ax2.set_title("estimators")
    ax3.set_title("effectivity index")
    for ax in (ax1, ax2, ax3):
        ax.set_xlabel("Ndofs")
        ax.grid(True, which="major", alpha=0.4)
    ax1.legend(fontsize=8)
    ax2.legend(fontsize=8)
    fig.suptitle(record.config.tag)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return Path(path)
