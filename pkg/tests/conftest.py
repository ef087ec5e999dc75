import numpy as np
import pytest

from slitspiral import meshgen
from slitspiral.mesh import TriMesh


@pytest.fixture(scope="session")
def square():
    return meshgen.unit_square()


@pytest.fixture(scope="session")
def grid():
    return meshgen.grid_square(12, 1.0)


@pytest.fixture(scope="session")
def flat_annulus():
    return meshgen.annulus(0.5, 1.0, h=0.05)


@pytest.fixture(scope="session")
def polar_annulus():
    return meshgen.polar_annulus(0.5, 1.0, n_rad=8, n_ang=64)


@pytest.fixture(scope="session")
def small_three_hole():
    return meshgen.three_hole_disk(h=6.0)


@pytest.fixture(scope="session")
def ico():
    v, f = meshgen.icosphere(3, 1.0)
    return TriMesh(v, f, validate=False)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for n in sorted(lines):
            terminalreporter.write_line(lines[n])
