import math

import numpy as np
import pytest

from mcsvortex.diagnostics import balance_residual, mass_total, reconstruct_gauge
from mcsvortex.elliptic import (Background, SolverParams, check_invariants, continuation,
                                cs_newton, cs_residual, mcs_newton, mcs_residual,
                                topological_init)
from mcsvortex.errors import InvariantViolation, PathStuck
from mcsvortex.green import VortexSet
from mcsvortex.spectral import Grid


def test_solver_params_validated():
    with pytest.raises(ValueError):
        SolverParams(newton_tol=0.0)
    with pytest.raises(ValueError):
        SolverParams(damping=1.5)


def test_background_source_and_mean(topo_background):
    bg = topo_background
    assert bg.source == pytest.approx(4 * math.pi * 3 / 64.0)
    assert bg.total == 3


def test_state_residual_below_tolerance(topo_state):
    s = topo_state
    r1, r2 = mcs_residual(s.lam, s.mu, s.background, s.v, s.N)
    assert max(np.max(np.abs(r1)), np.max(np.abs(r2))) < 1e-9
    assert s.residual_norm < 1e-9


def test_mass_and_balance(topo_state):
    assert mass_total(topo_state) == pytest.approx(12 * math.pi, rel=1e-6)
    assert balance_residual(topo_state) < 1e-6


def test_sign_bounds(topo_state):
    check_invariants(topo_state)
    assert topo_state.info["max_u"] < 0
    assert 0 < topo_state.info["min_N"] and topo_state.info["max_N"] < topo_state.lam


def test_check_invariants_flags_bad_state(topo_state):
    bad = topo_state.copy(N=topo_state.N + topo_state.lam)
    with pytest.raises(InvariantViolation):
        check_invariants(bad)


def test_flux_quantization(topo_state):
    flux = reconstruct_gauge(topo_state)["flux"]
    assert flux == pytest.approx(-2 * math.pi * 3, rel=1e-6)


def test_resolution_check(topo_lattice, topo_vortices, topo_state):
    """Doubling the grid changes the state by far less than its size."""
    bg2 = Background(Grid(topo_lattice, 256), topo_vortices)
    g = topo_state.grid
    init = (g.resample(topo_state.v, 256), g.resample(topo_state.N, 256))
    fine = mcs_newton(topo_state.lam, topo_state.mu, bg2, init)
    coarse_v = bg2.grid.resample(fine.v, 128)
    assert np.max(np.abs(coarse_v - topo_state.v)) < 1e-4
    assert abs(mass_total(fine) - 12 * math.pi) < 1e-6 * 12 * math.pi


def test_cs_newton(topo_background):
    bg = topo_background
    lam = 4.0
    v0, _ = topological_init(lam, 1e9, bg)
    v, info = cs_newton(lam, bg, v0)
    assert np.max(np.abs(cs_residual(lam, bg, v))) < 1e-9
    eu = np.exp(v) * bg.expu0
    assert bg.grid.integrate(lam**2 * eu * (1 - eu)) == pytest.approx(12 * math.pi, rel=1e-6)


def test_cs_limit_approached(topo_background, topo_state):
    """The MCS Higgs field approaches the CS one as mu grows."""
    bg = topo_background
    v_cs, _ = cs_newton(4.0, bg, topo_state.v)
    far = mcs_newton(4.0, 4000.0, bg, (topo_state.v, topo_state.N))
    d_near = np.max(np.abs(topo_state.v - v_cs))
    d_far = np.max(np.abs(far.v - v_cs))
    assert d_far < d_near


def test_continuation_constant_path(topo_state):
    s = topo_state
    states = continuation([(s.lam, s.mu)] * 3, s.background, init=(s.v, s.N))
    assert len(states) == 3
    for t in states:
        assert np.max(np.abs(t.v - s.v)) < 1e-8


def test_continuation_reversible(topo_state):
    s = topo_state
    path = [(4.0, 400.0), (4.4, 440.0), (4.0, 400.0)]
    states = continuation(path, s.background, init=(s.v, s.N))
    assert np.max(np.abs(states[-1].v - s.v)) < 1e-7
    assert np.max(np.abs(states[-1].N - s.N)) < 1e-7


def test_continuation_empty_path(topo_background):
    with pytest.raises(ValueError):
        continuation([], topo_background)


def test_continuation_unreachable_start():
    """A unit cell with three vortices has no solution at lam=4."""
    from mcsvortex.green import TorusLattice
    bg = Background(Grid(TorusLattice.square(), 32),
                    VortexSet([(0.2, 0.3), (0.55, 0.7), (0.75, 0.2)], [1, 1, 1]))
    with pytest.raises(PathStuck):
        continuation([(4.0, 400.0)], bg, SolverParams(max_iters=15))
