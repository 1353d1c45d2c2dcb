import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import TOPO_POINTS
from mcsvortex.diagnostics import (balance_residual, classify, cs_deviation, find_peaks,
                                   gradient_bound, local_mass, mass_total, pohozaev_residual,
                                   reconstruct_gauge)
from mcsvortex.elliptic import McsState, mcs_newton, topological_init
from mcsvortex.spectral import Grid


@pytest.fixture(scope="module")
def topo_family(topo_state):
    """Topological states at lam = 4, 5, 6 with mu = 100 lam."""
    bg = topo_state.background
    out = [topo_state]
    for lam in (5.0, 6.0):
        out.append(mcs_newton(lam, 100 * lam, bg, topological_init(lam, 100 * lam, bg)))
    return out


def manufactured(bg, lam, v):
    eu = np.exp(v) * bg.expu0
    return McsState(v=v, N=lam * eu, lam=lam, mu=100 * lam, background=bg)


def test_cs_deviation_zero_on_manufactured(topo_background):
    s = manufactured(topo_background, 5.0, np.full((128, 128), -0.3))
    assert cs_deviation(s) < 1e-14


def test_whole_torus_local_mass(topo_state):
    big = 10 * math.sqrt(topo_state.grid.area)
    assert local_mass(topo_state, (0.5, 0.5), big) == pytest.approx(mass_total(topo_state),
                                                                   rel=1e-14)


@given(st.floats(0.1, 3.0), st.floats(0.1, 3.0))
def test_property_local_mass_monotone(topo_state, r1, r2):
    a, b = sorted((r1, r2))
    assert local_mass(topo_state, TOPO_POINTS[0], a) <= local_mass(topo_state, TOPO_POINTS[0], b) + 1e-12


def test_gradient_bound_and_balance(topo_state):
    assert 0 < gradient_bound(topo_state) < 10
    assert balance_residual(topo_state) < 1e-6


def test_classify_topological_family(topo_family):
    rep = classify(topo_family)
    assert rep.verdict == "I"
    ev = rep.evidence
    assert ev["far_sup_abs_u"][-1] < 0.05
    assert ev["lambda"] == [4.0, 5.0, 6.0]


def test_classify_bounded_family(topo_background):
    """u + 2 ln lam held at a fixed bounded profile gives alternative II."""
    g = topo_background.grid
    t = g.points
    bump = 0.5 * np.cos(2 * math.pi * t[..., 0]) * np.sin(2 * math.pi * t[..., 1])
    states = []
    for lam in (5.0, 10.0, 20.0):
        with np.errstate(invalid="ignore"):
            v = bump - 2 * math.log(lam) - topo_background.u0
        v[~np.isfinite(v)] = 0.0
        states.append(manufactured(topo_background, lam, v))
    assert classify(states).verdict == "II"


def test_classify_verdict_stable_under_extension(topo_family, topo_state):
    base = classify(topo_family).verdict
    bg = topo_state.background
    extra = mcs_newton(6.5, 650.0, bg, topological_init(6.5, 650.0, bg))
    assert classify(topo_family + [extra]).verdict == base


def test_classify_rejects_bad_input(topo_family):
    with pytest.raises(ValueError):
        classify(topo_family[:2])
    with pytest.raises(ValueError):
        classify(topo_family[::-1])


def test_find_peaks_on_bubble():
    from conftest import BUBBLE_SIDE
    from mcsvortex.elliptic import Background
    from mcsvortex.green import TorusLattice, VortexSet
    bg = Background(Grid(TorusLattice.square(BUBBLE_SIDE), 64), VortexSet([(0.5, 0.5)], [1]))
    g = bg.grid
    r = g.lattice.distance(g.points, np.array([0.125, 0.25]))
    lam = 10.0
    u = -2 * np.log1p(lam**2 * r**2 / 8) - 1.0
    v = u - bg.u0
    v[~np.isfinite(v)] = 0.0
    s = manufactured(bg, lam, v)
    peaks = find_peaks(s, 0.0, 1.0)
    assert len(peaks) == 1
    assert np.allclose(peaks[0], (0.125, 0.25))


def test_pohozaev_solution_vs_random(topo_state, rng):
    c = TOPO_POINTS[0]
    good = pohozaev_residual(topo_state, c, 1.0)
    assert good < 1e-3
    g = topo_state.grid
    noise = Grid(g.lattice, 16).resample(rng.normal(size=(16, 16)), g.n)
    pert = topo_state.copy(v=topo_state.v + 0.05 * noise)
    assert pohozaev_residual(pert, c, 1.0) > 10 * good


def test_pohozaev_regular_centre(topo_state):
    res, det = pohozaev_residual(topo_state, (0.4, 0.5), 0.6, detail=True)
    assert det["multiplicity"] == 0
    assert res < 1e-3


def test_pohozaev_radius_validation(topo_state):
    with pytest.raises(ValueError):
        pohozaev_residual(topo_state, TOPO_POINTS[0], 5.0)


def test_gauge_reconstruction(topo_state):
    f = reconstruct_gauge(topo_state)
    assert f["flux"] == pytest.approx(-2 * math.pi * 3, rel=1e-6)
    fin = np.isfinite(topo_state.u)
    assert np.all((f["phi_sq"] >= 0) & (f["phi_sq"] < 1))
    assert np.all((f["n"] > 0) & (f["n"] < topo_state.lam / 2))
    assert np.allclose(f["A0"], f["q_squared"] / topo_state.mu - f["n"])
    assert fin.any()


def test_gauge_round_trip(topo_state):
    f = reconstruct_gauge(topo_state)
    u_back = np.log(f["phi_sq"][np.isfinite(topo_state.u)])
    assert np.allclose(u_back, topo_state.u[np.isfinite(topo_state.u)], atol=1e-12)
    assert np.allclose(2 * f["n"], topo_state.N)
