import numpy as np
import pytest
from hypothesis import given, strategies as st

from bbafem import ocp
from bbafem.driver import RunConfig, adaptive_loop
from bbafem.estimator import (IndicatorField, adjoint_indicators, combine, global_estimate,
                              indicators, mark, state_indicators)
from bbafem.fem import FeFunction
from bbafem.mesh import build_initial_mesh
from bbafem.ocp import Constant, Nonlinearity, ProblemSpec, control_update

from conftest import single_triangle

positive = st.floats(0.0, 1e6, allow_nan=False, allow_subnormal=False)


def zero_spec(domain="unit_square", **kw):
    return ProblemSpec(domain, ocp.zero_nonlinearity(), **kw)


def test_combine_examples():
    assert combine([9.0], [4.0], 1.0)[0] == pytest.approx(5.0)
    assert combine([9.0], [4.0], 0.5)[0] == pytest.approx(np.sqrt(7.0))
    assert combine([0.0], [0.0], 0.7)[0] == 0.0
    with pytest.raises(ValueError):
        combine([1.0], [1.0], 1.5)
    with pytest.raises(ValueError):
        combine([1.0, 2.0], [1.0], 1.0)


def test_global_estimate_examples():
    m = single_triangle()
    est = global_estimate(IndicatorField(np.array([4.0]), np.array([3.0]), np.array([5.0])), m)
    assert (est.eta_st, est.eta_adj, est.eta_ocp) == pytest.approx((2.0, 3.0, 5.0))
    m2 = build_initial_mesh("unit_square", 1)
    est = global_estimate(IndicatorField(np.array([1.0, 4.0]), np.array([5.0, 2.0]),
                                         np.zeros(2)), m2)
    assert (est.eta_st, est.eta_adj) == pytest.approx((np.sqrt(5.0), 5.0))


def test_iota_uniform_h():
    s = 1 / 8
    m = single_triangle(((0.0, 0.0), (s, 0.0), (s / 2, s * np.sqrt(3) / 2)))
    est = global_estimate(IndicatorField(np.zeros(1), np.zeros(1), np.zeros(1)), m)
    assert est.iota == pytest.approx(np.log(8.0))


def test_mark_examples():
    assert mark([10.0, 6.0, 4.0, 1.0]) == {0, 1}
    assert mark([2.0, 2.0, 2.0]) == {0, 1, 2}
    assert mark([0.0, 0.0]) == set()
    assert mark([]) == set()


@given(st.lists(positive, min_size=1, max_size=30), st.floats(1e-3, 1e3))
def test_mark_scale_invariant(vals, c):
    vals = np.array(vals)
    assert mark(vals) == mark(c * vals)
    if vals.max() > 0:
        assert int(np.argmax(vals)) in mark(vals)


@given(st.lists(st.tuples(positive, positive), min_size=1, max_size=20), st.floats(0.05, 1.0))
def test_combine_non_negative_and_monotone(pairs, gamma):
    st_sq, adj = map(np.array, zip(*pairs))
    eta = combine(st_sq, adj, gamma)
    assert np.all(eta >= 0)
    assert np.all(combine(st_sq + 1.0, adj, gamma) >= eta)


def test_zero_data_zero_indicators():
    m = build_initial_mesh("l_shape", 3)
    y = FeFunction.zeros(m)
    assert np.all(state_indicators(m, y, Constant(0.0), zero_spec("l_shape")) == 0)
    assert np.all(adjoint_indicators(m, y, FeFunction.zeros(m), zero_spec("l_shape")) == 0)


def test_linear_adjoint_has_no_edge_part():
    m = build_initial_mesh("unit_square", 4)
    spec = zero_spec()
    y = FeFunction.zeros(m)
    p = FeFunction.interpolate(m, lambda x: 3 * x[:, 0] - x[:, 1])
    eta = adjoint_indicators(m, y, p, spec)
    # no edge part, and the element residual vanishes with y = y_d = 0 and f' = 0
    assert np.max(eta) < 1e-12


def test_zero_residual_detection():
    m = build_initial_mesh("disk", 3)
    const = Nonlinearity("custom", lambda x, y: 2.0 + 0 * y, lambda x, y: 0 * y)
    spec = ProblemSpec("disk", const, a=-3.0, b=3.0,
                       desired_state=lambda x: 1 + x[..., 0] - 2 * x[..., 1])
    y = FeFunction.interpolate(m, lambda x: 1 + x[:, 0] - 2 * x[:, 1])
    p = FeFunction.interpolate(m, lambda x: 0.5 - x[:, 1])
    f = indicators(m, y, p, Constant(2.0), spec)
    for arr in (f.eta_st_sq, f.eta_adj, f.eta_ocp):
        assert np.all(arr >= 0) and np.max(arr) <= 1e-12


def test_indicators_non_negative(rng):
    m = build_initial_mesh("unit_square", 4)
    spec = ProblemSpec("unit_square", ocp.cube(), desired_state=lambda x: np.sin(5 * x[..., 0]))
    y = FeFunction(m, rng.normal(size=m.n_vertices))
    p = FeFunction(m, rng.normal(size=m.n_vertices))
    f = indicators(m, y, p, control_update(p, -1.0, 1.0), spec)
    assert np.all(f.eta_st_sq >= 0) and np.all(f.eta_adj >= 0) and np.all(f.eta_ocp >= 0)


def test_state_indicator_on_cut_element_vs_monte_carlo():
    m = single_triangle(((0.0, 0.0), (1.0, 0.0), (0.2, 0.9)))
    p = FeFunction(m, [0.7, -0.4, 0.3])
    a, b = -1.0, 2.0
    eta_sq = state_indicators(m, FeFunction.zeros(m), control_update(p, a, b), zero_spec())[0]
    lam = np.random.default_rng(3).dirichlet(np.ones(3), 400_000)
    u = np.where(lam @ p.values > 0, a, b)
    mc = m.total_area * np.mean(u ** 2)
    h = m.diameters[0]
    assert eta_sq / h ** 4 == pytest.approx(mc, rel=5e-3)


def test_indicators_reject_foreign_fields():
    m = build_initial_mesh("unit_square", 2)
    other = build_initial_mesh("unit_square", 2)
    with pytest.raises(ValueError):
        adjoint_indicators(m, FeFunction.zeros(other), FeFunction.zeros(m), zero_spec())


def test_estimators_decay_along_adaptive_loop():
    rec = adaptive_loop(RunConfig("ex1_atan", "adaptive", max_dofs=15_000))
    for name in ("est_y", "est_p_inf"):
        v = rec.column(name)[3:]
        assert len(v) >= 4
        assert np.all(v[1:] <= 1.05 * v[:-1]), (name, v)
        assert v[-1] < v[0]
