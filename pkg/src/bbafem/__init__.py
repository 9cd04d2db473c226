"""Adaptive finite elements for semilinear elliptic bang-bang optimal control."""
from .driver import RunConfig, RunRecord, adaptive_loop, error_norms, effectivity, write_table
from .estimator import global_estimate, indicators, mark
from .fem import FeFunction, assemble_stiffness, solve_spd
from .mesh import Mesh, build_initial_mesh, refine
from .ocp import BangBang, Constant, ProblemSpec, fixed_point, solve_adjoint, solve_state
from .problems import problem_catalog

__version__ = "0.1.0"

__all__ = [
    "BangBang", "Constant", "FeFunction", "Mesh", "ProblemSpec", "RunConfig", "RunRecord",
    "adaptive_loop", "assemble_stiffness", "build_initial_mesh", "effectivity", "error_norms",
    "fixed_point", "global_estimate", "indicators", "mark", "problem_catalog", "refine",
    "solve_adjoint", "solve_spd", "solve_state", "write_table",
]
