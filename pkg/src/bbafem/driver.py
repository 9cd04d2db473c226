"""Adaptive loop, error norms and convergence tables."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import fem
from .estimator import GlobalEstimate, IndicatorField, global_estimate, indicators, mark
from .fem import FeFunction
from .mesh import Mesh, build_initial_mesh, refine, transfer_nodal
from .ocp import Constant, Control, ProblemSpec, control_pieces, fixed_point
from .problems import PROBLEM_IDS, problem_catalog
from .quadrature import integrate_triangles, map_points

TABLE_HEADER = "dofs error_y error_p error_u est_y est_p_inf eff_index"
REFINE_MODES = ("uniform", "adaptive")
SNAPSHOT_ITERATIONS = (5, 10)
MAX_FP_FAILURES = 3


@dataclass
class RunConfig:
    problem: str
    refine: str = "adaptive"
    gamma: float = 1.0
    theta: float = 0.5
    max_dofs: int = 100_000
    max_iterations: int = 60
    newton_tol: float = 1e-10
    fp_tol: float = 1e-10
    max_fp: int = 100
    resolution: int | None = None
    out: Path | None = None
    export_vtk: bool = False
    export_svg: bool = False
    uniform_sweeps: int = 2  # bisection sweeps per uniform step: h halves

    def __post_init__(self):
        if self.problem not in PROBLEM_IDS:
            raise ValueError(f"unknown problem {self.problem!r}")
        if self.refine not in REFINE_MODES:
            raise ValueError(f"refine mode must be one of {REFINE_MODES}")
        if not 0.0 < self.theta < 1.0:
            raise ValueError(f"theta must lie in (0, 1), got {self.theta}")
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if self.uniform_sweeps < 1:
            raise ValueError("uniform_sweeps must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be positive")
        if self.out is not None:
            self.out = Path(self.out)

    @property
    def tag(self) -> str:
        g = f"{self.gamma:g}".replace(".", "")
        return f"{self.problem}_{self.refine}_g{g}"


@dataclass
class Row:
    ndofs: int
    error_y: float
    error_p: float
    error_u: float
    est_y: float
    est_p_inf: float
    eff_index: float | None
    fp_iterations: int
    fp_converged: bool
    wall_time: float
    n_triangles: int = 0
    n_marked: int = 0
    iota: float = 0.0
    interior_fraction: float = 0.0  # |{a < u < b}| / |Ω_h|


@dataclass
class RunRecord:
    config: RunConfig
    rows: list[Row] = field(default_factory=list)
    status: str = "running"
    meshes: dict[int, Mesh] = field(default_factory=dict, repr=False)
    final: "Snapshot | None" = field(default=None, repr=False)
    table_path: Path | None = None

    def column(self, name) -> np.ndarray:
        return np.array([np.nan if getattr(r, name) is None else getattr(r, name)
                         for r in self.rows], dtype=float)


@dataclass
class Snapshot:
    iteration: int
    mesh: Mesh
    y: FeFunction
    p: FeFunction
    control: Control
    field: IndicatorField


def n_dofs(mesh: Mesh) -> int:
    """Twice the number of interior vertices (state plus adjoint unknowns)."""
    return 2 * fem.dof_map(mesh).n_dofs


# ---------------------------------------------------------------- errors

def error_norms(mesh: Mesh, y: FeFunction, p: FeFunction, control: Control,
                spec: ProblemSpec) -> tuple[float, float, float]:
    """``(||ybar - y||_L2, max |pbar - p|, ||ubar - u||_L1)``.

    The sup norm samples quadrature points and vertices. The control error
    splits each element along the discrete switching line first.
    """
    if not spec.has_exact:
        raise ValueError(f"problem {spec.name!r} has no exact solution")

    def sq(x, cells):
        d = spec.exact_state(x) - y.at_quadrature(cells)
        return d * d

    err_y = math.sqrt(float(np.sum(fem.integrate(mesh, fem.quadrature_values(mesh, sq)))))

    dp = fem.quadrature_values(mesh, lambda x, cells: spec.exact_adjoint(x) - p.at_quadrature(cells))
    err_p = max(float(np.max(np.abs(dp))),
                float(np.max(np.abs(spec.exact_adjoint(mesh.points) - p.values))))

    pieces, values = control_pieces(mesh, control)
    err_u = 0.0
    for start in range(0, len(pieces), fem.CHUNK):
        sl = slice(start, min(start + fem.CHUNK, len(pieces)))
        x = map_points(pieces.verts[sl])
        d = np.abs(spec.exact_control(x) - values[sl, None])
        err_u += float(np.sum(integrate_triangles(pieces.verts[sl], d)))
    return err_y, err_p, err_u


def interior_control_area(mesh: Mesh, control: Control, a: float, b: float) -> float:
    """Measure of the set where the control lies strictly between the bounds."""
    pieces, values = control_pieces(mesh, control)
    inside = (values > a) & (values < b)
    return float(np.sum(pieces.areas[inside]))


def effectivity(estimate, errors) -> float | None:
    """``eta_ocp / sqrt(e_u^2 + e_y^2 + e_p^2)``; None when the error vanishes.

    ``estimate`` is a GlobalEstimate or a bare float.
    """
    eta = estimate.eta_ocp if isinstance(estimate, GlobalEstimate) else float(estimate)
    total = math.sqrt(sum(float(e) ** 2 for e in errors))
    if total == 0.0:
        return None
    return eta / total


def fitted_slope(ndofs, errors, last: int = 4) -> float:
    """Least-squares slope of log(error) against log(ndofs) over the last rows."""
    n = np.asarray(ndofs, dtype=float)[-last:]
    e = np.asarray(errors, dtype=float)[-last:]
    if len(n) < 2:
        raise ValueError("need at least two rows for a slope")
    return float(np.polyfit(np.log(n), np.log(e), 1)[0])


# ---------------------------------------------------------------- loop

def refine_marked(mesh: Mesh, marked, sweeps: int = 1, values=None):
    """Bisect ``marked``, then the children of marked elements, ``sweeps`` times.

    Nodal ``values`` are carried along by transfer. Returns (mesh, values).
    """
    current = np.fromiter(marked, dtype=np.int64)
    for _ in range(sweeps):
        new = refine(mesh, current)
        if values is not None:
            values = transfer_nodal(mesh, new, values)
        current = np.flatnonzero(np.isin(new.parent, current))
        mesh = new
    return mesh, values


def adaptive_loop(config: RunConfig, callback: Callable[[int, Row, Snapshot], None] | None = None,
                  spec: ProblemSpec | None = None, mesh: Mesh | None = None) -> RunRecord:
    """Solve, estimate, mark, refine until the dof budget is exhausted."""
    spec = spec or problem_catalog(config.problem, config.gamma)
    mesh = mesh or build_initial_mesh(spec.domain, config.resolution)
    if n_dofs(mesh) > config.max_dofs:
        raise ValueError(f"max_dofs {config.max_dofs} is below the initial {n_dofs(mesh)} dofs")
    record = RunRecord(config)
    y_init = None
    failures = 0
    for it in range(config.max_iterations):
        t0 = time.perf_counter()
        u0 = Constant(0.5 * (spec.a + spec.b))
        y, p, u, report = fixed_point(mesh, spec, u0=u0, fp_tol=config.fp_tol,
                                      max_fp=config.max_fp, y_init=y_init,
                                      newton_tol=config.newton_tol)
        field_ = indicators(mesh, y, p, u, spec)
        est = global_estimate(field_, mesh)
        if spec.has_exact:
            errs = error_norms(mesh, y, p, u, spec)
            eff = effectivity(est, errs)
        else:
            errs, eff = (math.nan,) * 3, None
        if config.refine == "uniform":
            marked = set(range(mesh.n_triangles))
        else:
            marked = mark(field_.eta_ocp, config.theta)
        row = Row(n_dofs(mesh), *errs, est.eta_st, est.eta_adj, eff, report.iterations,
                  report.converged, time.perf_counter() - t0, mesh.n_triangles,
                  len(marked), est.iota,
                  interior_control_area(mesh, u, spec.a, spec.b) / mesh.total_area)
        record.rows.append(row)
        snap = Snapshot(it, mesh, y, p, u, field_)
        record.final = snap
        if it in SNAPSHOT_ITERATIONS:
            record.meshes[it] = mesh
        if callback is not None:
            callback(it, row, snap)

        failures = 0 if report.converged else failures + 1
        if failures >= MAX_FP_FAILURES:
            record.status = "fixed_point_failed"
            break
        if not marked:
            record.status = "converged"
            break
        sweeps = config.uniform_sweeps if config.refine == "uniform" else 1
        new, yv = refine_marked(mesh, marked, sweeps, y.values)
        if n_dofs(new) > config.max_dofs:
            record.status = "budget"
            break
        y_init = FeFunction(new, yv)
        mesh = new
    else:
        record.status = "max_iterations"
    return record


# ---------------------------------------------------------------- tables

def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.5e}"


def format_row(row: Row) -> str:
    vals = (row.error_y, row.error_p, row.error_u, row.est_y, row.est_p_inf, row.eff_index)
    return " ".join([str(row.ndofs)] + [_fmt(v) for v in vals])


def write_table(record: RunRecord, path) -> Path:
    if not record.rows:
        raise ValueError("cannot write an empty record")
    path = Path(path)
    lines = [TABLE_HEADER] + [format_row(r) for r in record.rows]
    path.write_text("\n".join(lines) + "\n")
    return path


def read_table(path) -> dict[str, np.ndarray]:
    lines = Path(path).read_text().splitlines()
    names = lines[0].split()
    data = np.array([[float(v) for v in ln.split()] for ln in lines[1:] if ln.strip()], ndmin=2)
    return {n: data[:, i] for i, n in enumerate(names)}
