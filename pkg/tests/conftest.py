import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from bbafem.mesh import Mesh

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def single_triangle(verts=((0.0, 0.0), (1.0, 0.0), (0.0, 1.0)), domain="unit_square"):
    return Mesh(np.array(verts, dtype=float), np.array([[0, 1, 2]]), domain)


def two_triangle_square():
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
    return Mesh(pts, np.array([[0, 1, 2], [0, 2, 3]]), "unit_square")


def square_with_center():
    """Unit square split into four triangles around the centre: one dof."""
    pts = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0], [0.5, 0.5]])
    tris = np.array([[0, 1, 4], [1, 2, 4], [2, 3, 4], [3, 0, 4]])
    return Mesh(pts, tris, "unit_square")


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
