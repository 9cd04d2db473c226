"""Benchmark problems with closed-form optimal state, adjoint and control.

The forcing and desired state are derived symbolically from the strong forms

    forcing       = -Δy + f(y) - u
    desired_state = y + Δp - f'(y) p

so that the given triple solves the first-order system exactly.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
import sympy as sp

from .ocp import ProblemSpec, arctan, cube

PROBLEM_IDS = ("ex1_atan", "ex1_y3", "ex2", "ex3")
DOMAIN_OF = {"ex1_atan": "unit_square", "ex1_y3": "unit_square", "ex2": "l_shape", "ex3": "disk"}

_x, _y = sp.symbols("x y", real=True)
_r, _w = sp.symbols("r w", positive=True)


def _cartesian(expr):
    fn = sp.lambdify((_x, _y), expr, "numpy")

    def g(pts):
        pts = np.asarray(pts, dtype=float)
        return np.broadcast_to(fn(pts[..., 0], pts[..., 1]), pts.shape[:-1]).astype(float)

    return g


def _polar_angle(pts):
    # angle in [0, 2π); the L-shape occupies [0, 3π/2]
    return np.mod(np.arctan2(pts[..., 1], pts[..., 0]), 2.0 * np.pi)


def _polar(expr):
    fn = sp.lambdify((_r, _w), expr, "numpy")

    def g(pts):
        pts = np.asarray(pts, dtype=float)
        r = np.hypot(pts[..., 0], pts[..., 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            out = fn(r, _polar_angle(pts))
        return np.broadcast_to(out, pts.shape[:-1]).astype(float)

    return g


def _laplacian_xy(e):
    return sp.diff(e, _x, 2) + sp.diff(e, _y, 2)


def _laplacian_polar(e):
    return sp.diff(e, _r, 2) + sp.diff(e, _r) / _r + sp.diff(e, _w, 2) / _r ** 2


def _sign_control(adjoint):
    def u(pts):
        return -np.sign(adjoint(pts))

    return u


def _with_control(smooth, adjoint, shift):
    """``smooth + shift * u`` with u = -sign(adjoint)."""
    def g(pts):
        return smooth(pts) + shift * (-np.sign(adjoint(pts)))

    return g


def _ex1(nonlin):
    ybar = 16 * _x * _y * (1 - _x) * (1 - _y)
    pbar = -sp.sin(2 * sp.pi * _x) * sp.sin(2 * sp.pi * _y)
    s = sp.Symbol("s")
    f = sp.atan(s) if nonlin == "arctan" else s ** 3
    fy = f.subs(s, ybar)
    dfy = sp.diff(f, s).subs(s, ybar)
    smooth = -_laplacian_xy(ybar) + fy
    desired = ybar + _laplacian_xy(pbar) - dfy * pbar
    p = _cartesian(pbar)
    return dict(
        domain="unit_square",
        nonlinearity=arctan() if nonlin == "arctan" else cube(),
        forcing=_with_control(_cartesian(smooth), p, -1.0),
        desired_state=_cartesian(desired),
        exact_state=_cartesian(ybar),
        exact_adjoint=p,
        exact_control=_sign_control(p),
    )


def _ex2():
    ybar = (sp.sin(sp.pi * (_r * sp.sin(_w) + 1) / 2) * sp.sin(sp.pi * (_r * sp.cos(_w) + 1) / 2)
            * _r ** sp.Rational(2, 3) * sp.sin(2 * _w / 3))
    pbar = (sp.Rational(1, 2) - _r) * ybar
    smooth = -_laplacian_polar(ybar) + ybar ** 3
    desired = ybar + _laplacian_polar(pbar) - 3 * ybar ** 2 * pbar
    p = _polar(pbar)
    return dict(
        domain="l_shape",
        nonlinearity=cube(),
        forcing=_with_control(_polar(sp.simplify(smooth)), p, -1.0),
        desired_state=_polar(desired),
        exact_state=_polar(ybar),
        exact_adjoint=p,
        exact_control=_sign_control(p),
    )


def _ex3():
    ybar = sp.Rational(1, 2) * (1 - _x ** 2 - _y ** 2)
    s1 = sp.Rational(1, 12) - _x
    s2 = sp.Rational(1, 12) - _y
    pbar = 2 * ybar * (s1 * sp.Abs(s1) + s2 * sp.Abs(s2))
    smooth = -_laplacian_xy(ybar) + ybar ** 3
    # s|s| is C^1 with piecewise constant second derivative: derive the
    # adjoint data on each sign quadrant of (s1, s2)
    branches = {}
    for a in (1, -1):
        for b in (1, -1):
            pb = 2 * ybar * (a * s1 ** 2 + b * s2 ** 2)
            branches[(a, b)] = _cartesian(ybar + _laplacian_xy(pb) - 3 * ybar ** 2 * pb)

    def desired(pts):
        pts = np.asarray(pts, dtype=float)
        a = np.where(1.0 / 12.0 - pts[..., 0] >= 0, 1, -1)
        b = np.where(1.0 / 12.0 - pts[..., 1] >= 0, 1, -1)
        out = np.zeros(pts.shape[:-1])
        for (sa, sb), fn in branches.items():
            m = (a == sa) & (b == sb)
            if np.any(m):
                out[m] = fn(pts[m])
        return out

    p = _cartesian(pbar)
    return dict(
        domain="disk",
        nonlinearity=cube(),
        forcing=_with_control(_cartesian(smooth), p, -1.0),
        desired_state=desired,
        exact_state=_cartesian(ybar),
        exact_adjoint=p,
        exact_control=_sign_control(p),
    )


@lru_cache(maxsize=None)
def _problem_data(problem_id):
    if problem_id == "ex1_atan":
        return _ex1("arctan")
    if problem_id == "ex1_y3":
        return _ex1("cube")
    if problem_id == "ex2":
        return _ex2()
    if problem_id == "ex3":
        return _ex3()
    raise ValueError(f"unknown problem {problem_id!r}; choose from {', '.join(PROBLEM_IDS)}")


def problem_catalog(problem_id: str, gamma: float = 1.0) -> ProblemSpec:
    """Benchmark problem ``problem_id`` with bounds a = -1, b = 1."""
    data = _problem_data(problem_id)
    return ProblemSpec(a=-1.0, b=1.0, gamma=gamma, name=problem_id, **data)
