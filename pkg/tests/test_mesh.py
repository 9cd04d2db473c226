import numpy as np
import pytest
from hypothesis import given, strategies as st

from bbafem.mesh import (DOMAIN_AREA, DOMAINS, GeometryError, Mesh, build_initial_mesh,
                         element_geometry, is_conforming, on_domain_boundary, refine, star,
                         transfer_nodal)

from conftest import single_triangle, two_triangle_square


def interior_edge_count(mesh):
    return int(mesh.edge_table.interior.sum())


def test_unit_square_resolution_one():
    m = build_initial_mesh("unit_square", 1)
    assert (m.n_vertices, m.n_triangles, interior_edge_count(m)) == (4, 2, 1)


def test_l_shape_resolution_one():
    m = build_initial_mesh("l_shape", 1)
    assert (m.n_vertices, m.n_triangles) == (8, 6)
    assert m.total_area == pytest.approx(3.0, abs=1e-14)


def test_disk_boundary_on_circle():
    m = build_initial_mesh("disk", 2)
    r = np.hypot(*m.points[m.boundary].T)
    assert np.max(np.abs(r - 1.0)) < 1e-12


@pytest.mark.parametrize("domain", DOMAINS)
def test_initial_meshes_valid(domain):
    m = build_initial_mesh(domain)
    m.check_geometry()
    assert np.all(m.areas > 0)
    assert is_conforming(m)
    if domain != "disk":
        assert m.total_area == pytest.approx(DOMAIN_AREA[domain], rel=1e-13)


@pytest.mark.parametrize("domain", DOMAINS)
@pytest.mark.parametrize("res", [2, 3, 5])
def test_no_element_has_only_boundary_vertices(domain, res):
    # such elements carry a vanishing discrete adjoint and hence no control information
    m = build_initial_mesh(domain, res)
    assert not np.any(m.boundary[m.triangles].all(axis=1))


def test_bad_domain_and_resolution():
    with pytest.raises(ValueError):
        build_initial_mesh("torus", 2)
    with pytest.raises(ValueError):
        build_initial_mesh("unit_square", 0)


def test_refine_single_triangle():
    m = single_triangle()
    r = refine(m, {0})
    assert r.n_triangles == 2
    # both children contain the midpoint of the hypotenuse
    mid = np.flatnonzero(np.all(np.isclose(r.points, [0.5, 0.5]), axis=1))
    assert mid.size == 1
    assert np.all((r.triangles == mid[0]).any(axis=1))
    assert r.total_area == pytest.approx(0.5)


def test_refine_closure_two_triangles():
    m = two_triangle_square()
    r = refine(m, {0})
    assert r.n_triangles == 4
    assert is_conforming(r)


def test_refine_all_halves_areas():
    m = build_initial_mesh("unit_square", 4)
    r = refine(m, range(m.n_triangles))
    assert r.n_triangles == 2 * m.n_triangles
    np.testing.assert_allclose(r.areas, m.areas[r.parent] / 2, rtol=1e-14)


def test_refine_empty_is_copy():
    m = build_initial_mesh("l_shape", 2)
    r = refine(m, set())
    assert r is not m
    np.testing.assert_array_equal(r.points, m.points)
    np.testing.assert_array_equal(r.triangles, m.triangles)


def test_refine_rejects_bad_ids():
    m = two_triangle_square()
    with pytest.raises(IndexError):
        refine(m, {5})


@pytest.mark.parametrize("domain", DOMAINS)
def test_random_refinement_rounds(domain):
    rng = np.random.default_rng(7)
    m = build_initial_mesh(domain, 2)
    angle0 = m.min_angle()
    for _ in range(20):
        k = max(1, m.n_triangles // 10)
        marked = rng.choice(m.n_triangles, size=k, replace=False)
        new = refine(m, marked)
        assert is_conforming(new)
        assert np.all(new.areas > 0)
        # each marked triangle was bisected
        assert np.all(np.bincount(new.parent, minlength=m.n_triangles)[marked] >= 2)
        # children partition their parents (the disk gains area by projection)
        if domain != "disk":
            np.testing.assert_allclose(np.bincount(new.parent, weights=new.areas, minlength=m.n_triangles),
                                       m.areas, rtol=1e-12, atol=1e-15)
        m = new
    assert m.min_angle() >= angle0 / 2 - 1e-12
    if domain == "disk":
        r = np.hypot(*m.points[m.boundary].T)
        assert np.max(np.abs(r - 1)) < 1e-12
    else:
        assert m.total_area == pytest.approx(DOMAIN_AREA[domain], rel=1e-12)


@given(st.sampled_from(DOMAINS), st.lists(st.integers(0, 10_000), min_size=1, max_size=12),
       st.integers(1, 6))
def test_refinement_conforming_property(domain, picks, rounds):
    m = build_initial_mesh(domain, 1)
    for i in range(rounds):
        marked = {p % m.n_triangles for p in picks[i::rounds] or picks}
        m = refine(m, marked)
        assert is_conforming(m)
        assert np.all(m.areas > 0)
    if domain != "disk":
        assert m.total_area == pytest.approx(DOMAIN_AREA[domain], rel=1e-13)


def test_repeated_local_refinement_conforming():
    # deep grading towards one point stresses the closure
    for domain, target in (("disk", (0.05, 0.04)), ("l_shape", (0.0, 0.0))):
        m = build_initial_mesh(domain, 2)
        for _ in range(25):
            c = m.points[m.triangles].mean(axis=1)
            d = np.linalg.norm(c - target, axis=1)
            m = refine(m, np.flatnonzero(d <= np.sort(d)[3]))
            assert is_conforming(m)


def test_generation_and_vertex_parents():
    m = build_initial_mesh("unit_square", 2)
    r = refine(m, {0, 3})
    assert r.generation == m.generation + 1
    assert len(r.vertex_parents) == r.n_vertices - m.n_vertices
    # every new vertex is the midpoint of its recorded parents (square: no projection)
    a, b = r.vertex_parents.T
    np.testing.assert_allclose(r.points[m.n_vertices:], 0.5 * (r.points[a] + r.points[b]))


def test_transfer_exact_for_linear_fields(rng):
    m = build_initial_mesh("unit_square", 3)
    g = lambda x: 2.0 - 3.0 * x[:, 0] + 0.5 * x[:, 1]
    vals = g(m.points)
    for _ in range(3):
        r = refine(m, rng.choice(m.n_triangles, size=4, replace=False))
        vals = transfer_nodal(m, r, vals)
        m = r
    np.testing.assert_allclose(vals, g(m.points), atol=1e-14)


def test_element_geometry():
    area, h, normals, lengths = element_geometry(single_triangle(), 0)
    assert area == pytest.approx(0.5)
    assert h == pytest.approx(np.sqrt(2))
    np.testing.assert_allclose(np.linalg.norm(normals, axis=1), 1.0)
    np.testing.assert_allclose(sorted(lengths), [1, 1, np.sqrt(2)])
    area, h, _, _ = element_geometry(single_triangle(((0, 0), (2, 0), (0, 2))), 0)
    assert (area, h) == pytest.approx((2.0, 2 * np.sqrt(2)))


def test_outward_normals():
    m = single_triangle()
    _, _, n, _ = element_geometry(m, 0)
    centroid = m.points.mean(axis=0)
    for i in range(3):
        mid = 0.5 * (m.points[(i + 1) % 3] + m.points[(i + 2) % 3])
        assert np.dot(n[i], mid - centroid) > 0


def test_degenerate_triangle_raises():
    m = single_triangle(((0, 0), (1, 0), (2, 1e-16)))
    with pytest.raises(GeometryError):
        element_geometry(m, 0)
    with pytest.raises(GeometryError):
        m.check_geometry()


def test_star():
    assert star(single_triangle(), 0) == {0}
    assert star(two_triangle_square(), 0) == {0, 1}
    m = build_initial_mesh("unit_square", 6)
    centroid = m.points[m.triangles].mean(axis=1)
    t = int(np.argmin(np.linalg.norm(centroid - 0.5, axis=1)))
    assert len(star(m, t)) == 4


def test_star_matches_adjacency_oracle():
    m = build_initial_mesh("l_shape", 3)
    sets = [set(map(int, tri)) for tri in m.triangles]
    for t in range(m.n_triangles):
        oracle = {s for s in range(m.n_triangles) if len(sets[t] & sets[s]) >= 2}
        assert star(m, t) == oracle


def test_on_domain_boundary():
    pts = np.array([[0.0, -0.5], [0.5, 0.0], [-0.5, 0.0], [0.3, 0.3], [-1, 0.2]])
    np.testing.assert_array_equal(on_domain_boundary("l_shape", pts),
                                  [True, True, False, False, True])


def test_mesh_is_immutable():
    m = two_triangle_square()
    with pytest.raises(ValueError):
        m.points[0, 0] = 3.0


def test_bad_mesh_domain():
    with pytest.raises(ValueError):
        Mesh(np.zeros((3, 2)), np.array([[0, 1, 2]]), "sphere")
