"""End-to-end convergence studies, one test per acceptance criterion.

Each test prints a single ``PASS``/``FAIL`` line with the measured numbers.
The studies are expensive (about ten minutes in total on one core), so each
configuration runs once per session and is shared between criteria.  Run just
this module with ``pytest tests/test_acceptance.py -s``, or as a script.
"""
import sys

import numpy as np
import pytest

from bbafem.driver import RunConfig, adaptive_loop, fitted_slope

from conftest import ACCEPTANCE_LINES

pytestmark = pytest.mark.acceptance

BUDGET = 100_000
ERRORS = ("error_y", "error_p", "error_u")
OPTIMAL = (-1.2, -0.8)

_cache = {}


def study(problem, refine="adaptive", gamma=1.0):
    key = (problem, refine, gamma)
    if key not in _cache:
        _cache[key] = adaptive_loop(RunConfig(problem, refine, gamma, max_dofs=BUDGET))
    return _cache[key]


def slopes(rec, names=ERRORS):
    n = rec.column("ndofs")
    return {k: fitted_slope(n, rec.column(k)) for k in names}


def inside(v, band):
    return band[0] <= v <= band[1]


def report(criterion, ok, detail):
    line = f"criterion {criterion}: {'PASS' if ok else 'FAIL'}  {detail}"
    print(line)
    sys.stdout.flush()
    ACCEPTANCE_LINES.append(line)
    return ok


def fmt(d):
    return " ".join(f"{k}={v:+.3f}" for k, v in d.items())


# ---------------------------------------------------------------- 7: property suites first

def test_criterion_7_property_suites():
    import test_driver
    import test_fem
    import test_mesh
    import test_ocp
    import test_problems
    import test_quadrature

    checks = {
        "quadrature sweep": lambda: ([test_quadrature.test_monomial_exactness_reference(i, j)
                                      for i, j in test_quadrature.MONOMIALS],
                                     test_quadrature.test_random_degree_19_polynomial()),
        "refinement rounds": lambda: [test_mesh.test_random_refinement_rounds(d)
                                      for d in ("unit_square", "l_shape", "disk")],
        "stiffness kernel": lambda: [test_fem.test_constants_in_kernel(d)
                                     for d in ("unit_square", "l_shape", "disk")],
        "dense solve": lambda: test_fem.test_solve_matches_dense_oracle(test_fem.square_with_center),
        "dense adjoint": lambda: test_ocp.test_adjoint_dense_oracle(test_ocp.square_with_center),
        "clipping vs Monte Carlo": test_ocp.test_clip_area_vs_monte_carlo,
        "control load vs subtriangulation": lambda: [
            test_ocp.test_control_load_vs_subtriangulation(d, np.random.default_rng(5))
            for d in ("unit_square", "disk")],
        "fixed-point idempotence": test_ocp.test_fixed_point_idempotent,
        "manufactured consistency": lambda: [
            (test_problems.test_state_equation_consistency(p),
             test_problems.test_adjoint_equation_consistency(p))
            for p in test_problems.PROBLEM_IDS],
        "uniform step": test_driver.test_refine_marked_all_twice_is_uniform_step,
    }
    failed = []
    for name, fn in checks.items():
        try:
            fn()
        except AssertionError as exc:
            failed.append(f"{name}: {exc}")
    assert report(7, not failed, f"{len(checks) - len(failed)}/{len(checks)} suites"), failed


# ---------------------------------------------------------------- 1: square

@pytest.mark.parametrize("problem", ["ex1_atan", "ex1_y3"])
@pytest.mark.parametrize("mode", ["uniform", "adaptive"])
def test_criterion_1_square_rates(problem, mode):
    s = slopes(study(problem, mode))
    ok = all(inside(v, OPTIMAL) for v in s.values())
    assert report(1, ok, f"{problem} {mode}: {fmt(s)} (band {OPTIMAL})")


# ---------------------------------------------------------------- 2, 3, 5: L-shape

def test_criterion_2_lshape_uniform_rates():
    s = slopes(study("ex2", "uniform"))
    third = any(inside(v, (-0.45, -0.2)) for v in s.values())
    two_thirds = any(inside(v, (-0.8, -0.55)) for v in s.values())
    assert report(2, third and two_thirds, f"ex2 uniform: {fmt(s)}")


def test_criterion_2_lshape_adaptive_rates():
    s = slopes(study("ex2", "adaptive"))
    ok = all(inside(v, OPTIMAL) for v in s.values())
    assert report(2, ok, f"ex2 adaptive: {fmt(s)} (band {OPTIMAL})")


def test_criterion_3_lshape_effectivity():
    eff = study("ex2", "adaptive").column("eff_index")
    tail = eff[-5:]
    ok = bool(np.all((tail >= 1.0) & (tail <= 4.0)) and 1.3 <= tail[-1] <= 3.0)
    assert report(3, ok, "ex2 adaptive I_eff tail: " + " ".join(f"{v:.3f}" for v in tail))


def corner_ratio(mesh):
    """min h_T over elements within 0.1 of the origin, over the median h_T."""
    dist = np.hypot(mesh.points[:, 0], mesh.points[:, 1])[mesh.triangles].min(axis=1)
    h = mesh.diameters
    return h[dist <= 0.1].min() / np.median(h)


def test_criterion_5_corner_refinement():
    rec = study("ex2", "adaptive")
    ratio = corner_ratio(rec.meshes[10])
    assert report(5, ratio <= 0.1, f"ex2 iteration 10: min h near corner / median h = {ratio:.4f} "
                                   f"(final mesh: {corner_ratio(rec.final.mesh):.4f})")


# ---------------------------------------------------------------- 4: disk

def test_criterion_4_disk_gamma_half():
    s = slopes(study("ex3", "adaptive", 0.5), ("error_u",))
    ok = inside(s["error_u"], (-0.85, -0.5))
    assert report(4, ok, f"ex3 gamma=0.5: {fmt(s)} (band (-0.85, -0.5))")


def test_criterion_4_disk_gamma_one():
    s = slopes(study("ex3", "adaptive", 1.0), ("error_u",))
    ok = inside(s["error_u"], OPTIMAL)
    assert report(4, ok, f"ex3 gamma=1: {fmt(s)} (band {OPTIMAL})")


# ---------------------------------------------------------------- 6: bang-bang structure

def test_criterion_6_bang_bang_structure():
    worst = 0.0
    rows = 0
    for rec in _cache.values():
        for r in rec.rows:
            if r.fp_converged:
                rows += 1
                worst = max(worst, r.interior_fraction)
    if not rows:
        pytest.skip("no studies ran in this session")
    assert report(6, worst <= 1e-6,
                  f"max interior-value area fraction {worst:.2e} over {rows} converged rows "
                  f"in {len(_cache)} runs")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-s", "-q", "-p", "no:cacheprovider"]))
