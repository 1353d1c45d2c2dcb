import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from mcsvortex.elliptic import Background, mcs_newton, topological_init
from mcsvortex.green import TorusLattice, VortexSet
from mcsvortex.radial import shoot
from mcsvortex.spectral import Grid

settings.register_profile(
    "repo", max_examples=25, deadline=None,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.function_scoped_fixture],
)
settings.load_profile("repo")

# topological setting: side-8 cell, three unit vortices
TOPO_SIDE = 8.0
TOPO_POINTS = [(0.2, 0.3), (0.55, 0.7), (0.75, 0.2)]

# regular bubble setting: side-6 cell, clustered vortices, q* a maximum of u0
BUBBLE_SIDE = 6.0
BUBBLE_POINTS = [(0.45, 0.5), (0.58, 0.42), (0.52, 0.62)]
Q_STAR = (0.019342642936731075, 0.01045592135526471)
S_BETA6 = -0.0851301033057989

# vortex-point bubble setting
VORTEX_POINTS = [(0.25, 0.25), (0.75, 0.75), (0.75, 0.25), (0.25, 0.75)]
VORTEX_MULT = [1, 2, 1, 1]
S_BETA10_M1 = -2.4509608373917


@pytest.fixture(scope="session")
def topo_lattice():
    return TorusLattice.square(TOPO_SIDE)


@pytest.fixture(scope="session")
def topo_vortices():
    return VortexSet(TOPO_POINTS, [1, 1, 1])


@pytest.fixture(scope="session")
def topo_background(topo_lattice, topo_vortices):
    return Background(Grid(topo_lattice, 128), topo_vortices)


@pytest.fixture(scope="session")
def topo_state(topo_background):
    """Converged topological state at lam=4, mu=400 on a 128 grid."""
    lam, mu = 4.0, 400.0
    return mcs_newton(lam, mu, topo_background, topological_init(lam, mu, topo_background))


@pytest.fixture(scope="session")
def bubble_background():
    lat = TorusLattice.square(BUBBLE_SIDE)
    return Background(Grid(lat, 256), VortexSet(BUBBLE_POINTS, [1, 1, 1]))


@pytest.fixture(scope="session")
def profile_beta6():
    return shoot(S_BETA6, 0)


def mu_regular(lam):
    return lam**3 * math.log(lam)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE_LINES):
        terminalreporter.write_line(ACCEPTANCE_LINES[k])
