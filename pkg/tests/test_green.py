import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mcsvortex.errors import PoleCollision
from mcsvortex.green import (GreenTable, TorusLattice, VortexSet, critical_points, gamma_eval,
                             gamma_grad, green_eval, green_grid, u0_eval, u0_grad, u0_hess)
from mcsvortex.spectral import Grid

G_HALF = -0.05515890003816291     # G at separation (1/2, 1/2), unit square
GAMMA_DIAG = -0.2085777932435013  # gamma(y, y), unit square

UNIT = TorusLattice.square()
OBLIQUE = TorusLattice((1.0, 0.0), (0.3, 0.9))
coord = st.floats(0.0, 1.0, exclude_max=True)


def lattice_sum_half(K=500):
    """Direct Fourier sum of G at (1/2, 1/2), square partial sums with edge weights."""
    k = np.arange(-K, K + 1)
    K1, K2 = np.meshgrid(k, k, indexing="ij")
    k2 = (K1**2 + K2**2).astype(float)
    k2[K, K] = 1.0
    t = (-1.0) ** (K1 + K2) / (4 * math.pi**2 * k2)
    t[K, K] = 0.0
    w = np.ones_like(t)
    edge = (np.abs(K1) == K) | (np.abs(K2) == K)
    w[edge] = 0.5
    w[(np.abs(K1) == K) & (np.abs(K2) == K)] = 0.25
    return float(np.sum(t * w))


def test_golden_half_period_two_routes():
    ewald = float(green_eval(UNIT, np.array([0.5, 0.5]), np.array([0.0, 0.0])))
    assert ewald == pytest.approx(G_HALF, abs=1e-12)
    direct = lattice_sum_half(500)
    assert abs(direct - ewald) < 1e-8
    assert abs(lattice_sum_half(1000) - ewald) < 1e-8


def test_golden_robin_constant():
    y = np.array([0.3, 0.7])
    assert float(gamma_eval(UNIT, y, y)) == pytest.approx(GAMMA_DIAG, abs=1e-12)


def test_pole_collision():
    with pytest.raises(PoleCollision):
        green_eval(UNIT, np.array([0.2, 0.2]), np.array([1.2, -0.8]))


@pytest.mark.parametrize("lat", [UNIT, OBLIQUE, TorusLattice.square(3.0)])
def test_symmetry_random_pairs(lat, rng):
    x = rng.random((100, 2))
    y = rng.random((100, 2))
    assert np.max(np.abs(green_eval(lat, x, y) - green_eval(lat, y, x))) < 1e-10


@pytest.mark.parametrize("lat", [UNIT, OBLIQUE])
def test_zero_cell_mean(lat):
    t = GreenTable(lat, 128, (0.31, 0.62))
    c = t.coefficients()
    assert c[0, 0] == 0
    # spectral cell average of gamma + log part equals that of G: test via
    # the smooth field G + ln(r)/2pi - ln(r)/2pi on an offset grid
    grid = Grid(lat, 128)
    pts = (grid.points + 0.5 / 128) % 1.0
    vals = green_eval(lat, pts, np.array(t.pole))
    # midpoint rule on a log singularity converges like h^2 ln h
    assert abs(np.mean(vals)) < 2e-4


def test_spectral_laplacian_of_regular_part():
    """-Lap G = -1/|Omega| away from the pole; check through gamma on a patch."""
    lat = OBLIQUE
    y = np.array([0.5, 0.5])
    x = np.array([0.1, 0.15])
    h = 1e-3
    X = lat.to_physical(x)
    lap = 0.0
    for e in (np.array([h, 0.0]), np.array([0.0, h])):
        tp = lat.to_lattice(X + e)
        tm = lat.to_lattice(X - e)
        lap += (float(green_eval(lat, tp, y)) - 2 * float(green_eval(lat, x, y))
                + float(green_eval(lat, tm, y))) / h**2
    assert lap == pytest.approx(1.0 / lat.area, abs=1e-5)


def test_translation_invariance_and_flat_diagonal(rng):
    for _ in range(20):
        x, y, h = rng.random(2), rng.random(2), rng.random(2)
        assert abs(gamma_eval(UNIT, x + h, y + h) - gamma_eval(UNIT, x, y)) < 1e-10
        assert abs(gamma_eval(UNIT, y, y) - GAMMA_DIAG) < 1e-10


def test_gamma_gradient_vanishes_on_diagonal(rng):
    for lat in (UNIT, OBLIQUE):
        q = rng.random(2)
        assert np.max(np.abs(gamma_grad(lat, q, q))) < 1e-10


def test_u0_derivatives_against_differences(rng):
    lat = TorusLattice.square(2.0)
    vs = VortexSet([(0.2, 0.3), (0.7, 0.6)], [1, 2])
    h = 1e-5
    for _ in range(50):
        t = rng.random(2)
        if np.min(lat.distance(t[None, :], vs.as_array())) < 0.1:
            continue
        X = lat.to_physical(t)
        fd = np.empty(2)
        fdh = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = h
            tp, tm = lat.to_lattice(X + e), lat.to_lattice(X - e)
            fd[j] = (u0_eval(lat, vs, tp) - u0_eval(lat, vs, tm)) / (2 * h)
            fdh[:, j] = (u0_grad(lat, vs, tp) - u0_grad(lat, vs, tm)) / (2 * h)
        assert np.max(np.abs(u0_grad(lat, vs, t) - fd)) < 1e-6
        assert np.max(np.abs(u0_hess(lat, vs, t) - fdh)) < 1e-5


def test_u0_log_behaviour_near_vortex():
    vs = VortexSet([(0.5, 0.5)], [1])
    p = np.array([0.5, 0.5])
    vals = []
    for r in (1e-2, 1e-3, 1e-4):
        x = p + np.array([r, 0.0])
        vals.append(float(u0_eval(UNIT, vs, x)) - 2 * math.log(r))
    assert max(vals) - min(vals) < 1e-3


def test_grid_table_matches_pointwise():
    lat = OBLIQUE
    pole = (0.37, 0.11)
    gam, r = green_grid(lat, 32, pole)
    grid = Grid(lat, 32)
    ref = gamma_eval(lat, grid.points, np.array(pole))
    assert np.max(np.abs(gam - ref)) < 1e-10


def test_half_period_critical_points():
    vs = VortexSet([(0.5, 0.5)], [1])
    found, _ = critical_points(UNIT, vs)
    qs = {(round(c.q[0], 6) % 1.0, round(c.q[1], 6) % 1.0) for c in found}
    assert {(0.0, 0.0), (0.5, 0.0), (0.0, 0.5)} <= qs
    for c in found:
        assert np.max(np.abs(u0_grad(UNIT, vs, np.array(c.q)))) < 1e-9


def test_critical_points_swap_equivariance():
    vs = VortexSet([(0.3, 0.5), (0.7, 0.5)], [1, 1])
    found, _ = critical_points(UNIT, vs)
    qs = [np.array(c.q) for c in found]
    for q in qs:
        mirror = np.array([1.0 - q[0], q[1]]) % 1.0
        assert any(np.max(np.abs((mirror - p + 0.5) % 1.0 - 0.5)) < 1e-6 for p in qs)


@given(coord, coord, coord, coord)
def test_property_symmetry(a, b, c, d):
    x, y = np.array([a, b]), np.array([c, d])
    if UNIT.distance(x, y) < 1e-3:
        return
    assert abs(green_eval(OBLIQUE, x, y) - green_eval(OBLIQUE, y, x)) < 1e-10


@given(coord, coord, st.integers(-3, 3), st.integers(-3, 3))
def test_property_periodicity(a, b, i, j):
    x = np.array([a, b])
    y = np.array([0.1, 0.2])
    if UNIT.distance(x, y) < 1e-3:
        return
    shifted = x + np.array([i, j])
    assert abs(green_eval(OBLIQUE, shifted, y) - green_eval(OBLIQUE, x, y)) < 1e-10
