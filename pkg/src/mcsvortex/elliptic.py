"""Newton-Krylov solvers for the Chern-Simons and Maxwell-Chern-Simons systems.

With ``u = v + u0`` the coupled system is solved for ``(v, N)``::

    Delta v + Delta N / mu + lam^2 e^u (1 - N/lam) - 4 pi M / |Omega| = 0,
    Delta N - mu (mu + lam e^u) N + lam mu (lam + mu) e^u = 0,

the second row being scaled by ``1/mu^2`` inside the solver.  The single
Chern-Simons equation ``Delta v + lam^2 e^u (1 - e^u) - 4 pi M/|Omega| = 0``
is its ``mu -> infinity`` limit.

Each Newton step solves the linearization with preconditioned GMRES.  For
the coupled system ``dN`` is eliminated exactly by an inner conjugate
gradient solve (its block is a small perturbation of ``1 - Delta/mu^2``),
leaving a Schur complement in ``dv`` that behaves like ``Delta + lam^2 f(u)``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg, gmres

from .errors import (InvariantViolation, LinearSolveFailure, MaxIters,
                     NewtonStalled, PathStuck)
from .green import TorusLattice, VortexSet, _h, green_grid
from .spectral import Grid

log = logging.getLogger(__name__)

__all__ = [
    "SolverParams", "Background", "McsState", "poisson_solve", "helmholtz_solve",
    "cs_residual", "mcs_residual", "cs_newton", "mcs_newton", "topological_init",
    "continuation",
]


@dataclass(frozen=True)
class SolverParams:
    """Newton controls.

    ``newton_tol`` bounds the sup norm of both residual rows (the second
    one divided by ``mu^2``).
    """

    newton_tol: float = 1e-9
    max_iters: int = 60
    damping: float = 1.0
    continuation_steps: int = 6
    gmres_rtol: float = 1e-7
    gmres_restart: int = 80
    gmres_maxiter: int = 40
    min_step: float = 2.0**-10
    check_invariants: bool = True

    def __post_init__(self):
        if self.newton_tol <= 0:
            raise ValueError("newton_tol must be positive")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")


class Background:
    """Grid samples of the vortex background ``u0`` for a vortex set.

    ``expu0`` is assembled in factored form
    ``prod |x - p_i|^{2 m_i} exp(-4 pi sum m_i gamma(x, p_i))`` so that it
    vanishes cleanly at the poles.
    """

    def __init__(self, grid: Grid, vortices: VortexSet):
        self.grid = grid
        self.vortices = vortices
        n = grid.n
        smooth = np.zeros((n, n))
        logdist = np.zeros((n, n))
        dists = []
        for p, m in zip(vortices.points, vortices.multiplicities):
            g, r = green_grid(grid.lattice, n, p)
            smooth -= 4 * math.pi * m * g
            with np.errstate(divide="ignore"):
                logdist += 2 * m * np.log(r)
            dists.append(r)
        self.u0_smooth = smooth
        self.distances = np.array(dists)
        with np.errstate(divide="ignore"):
            self.u0 = smooth + logdist
        self.expu0 = np.exp(smooth)
        for r, m in zip(dists, vortices.multiplicities):
            self.expu0 *= r ** (2 * m)

    @property
    def lattice(self) -> TorusLattice:
        return self.grid.lattice

    @property
    def total(self) -> int:
        return self.vortices.total

    @property
    def source(self) -> float:
        """Constant ``4 pi M / |Omega|``."""
        return 4 * math.pi * self.vortices.total / self.grid.area

    def min_distance(self) -> np.ndarray:
        return np.min(self.distances, axis=0)


@dataclass
class McsState:
    """Solution ``(v, N)`` of the coupled system with its metadata."""

    v: np.ndarray
    N: np.ndarray
    lam: float
    mu: float
    background: Background = field(repr=False)
    residual_norm: float = math.nan
    newton_iters: int = 0
    info: dict = field(default_factory=dict)

    @property
    def grid(self) -> Grid:
        return self.background.grid

    @property
    def vortices(self) -> VortexSet:
        return self.background.vortices

    @property
    def eu(self) -> np.ndarray:
        """``e^u`` (exactly zero at grid nodes sitting on a vortex)."""
        return np.exp(self.v) * self.background.expu0

    @property
    def u(self) -> np.ndarray:
        with np.errstate(divide="ignore"):
            return self.v + self.background.u0

    @property
    def density(self) -> np.ndarray:
        """``lam^2 e^u (1 - N/lam)``."""
        return self.lam**2 * self.eu * (1 - self.N / self.lam)

    def copy(self, **kw) -> "McsState":
        d = dict(v=self.v.copy(), N=self.N.copy(), info=dict(self.info))
        d.update(kw)
        return replace(self, **d)


# ---------------------------------------------------------------------------
# constant-coefficient solves

def poisson_solve(grid: Grid, f):
    """Mean-zero solution of ``Delta phi = f``; raises NonZeroMean otherwise."""
    return grid.poisson_solve(f)


def helmholtz_solve(grid: Grid, mu: float, g):
    """``S`` with ``Delta S - mu^2 S = g`` and the measured estimate ratios."""
    return grid.helmholtz_solve(mu, g, report=True)


# ---------------------------------------------------------------------------
# residuals

def cs_residual(lam, bg: Background, v):
    eu = np.exp(v) * bg.expu0
    return bg.grid.laplacian(v) + lam**2 * eu * (1 - eu) - bg.source


def mcs_residual(lam, mu, bg: Background, v, N):
    """Both residual rows; the second already divided by ``mu^2``."""
    g = bg.grid
    eu = np.exp(v) * bg.expu0
    lapN = g.laplacian(N)
    r1 = g.laplacian(v) + lapN / mu + lam**2 * eu * (1 - N / lam) - bg.source
    r2 = lapN / mu**2 - (1 + lam / mu * eu) * N + lam * (1 + lam / mu) * eu
    return r1, r2


# ---------------------------------------------------------------------------
# Newton machinery

def _gmres(op, rhs, precond, params, n):
    """Right-preconditioned GMRES; returns the correction."""
    size = n * n
    A = LinearOperator((size, size), dtype=float,
                       matvec=lambda y: op(precond(y.reshape(n, n))).ravel())
    y, info = gmres(A, rhs.ravel(), rtol=params.gmres_rtol, atol=0.0,
                    restart=params.gmres_restart, maxiter=params.gmres_maxiter)
    dx = precond(y.reshape(n, n))
    if info != 0:
        res = np.linalg.norm(op(dx).ravel() - rhs.ravel()) / max(np.linalg.norm(rhs), 1e-300)
        if res > 1e-2:
            raise LinearSolveFailure(f"GMRES stopped at relative residual {res:.2e}")
    return dx


def _shift(potential, grid):
    # positive shift matching the mean restoring force; never below the
    # first nonzero eigenvalue scale of the cell
    floor = (2 * math.pi) ** 2 / grid.area
    return max(float(-np.mean(potential)), floor)


def _newton(x0, residual, solve_step, params, norm_fn, label):
    """Damped Newton with backtracking on the residual 2-norm."""
    x = x0
    R = residual(x)
    rn = norm_fn(R)
    r2 = math.sqrt(sum(float(np.sum(r * r)) for r in R))
    history = [rn]
    for it in range(1, params.max_iters + 1):
        if rn < params.newton_tol:
            return x, rn, it - 1, history
        dx = solve_step(x, R)
        step = params.damping
        while True:
            xt = tuple(a + step * b for a, b in zip(x, dx))
            with np.errstate(over="ignore", invalid="ignore"):
                Rt = residual(xt)
            ok = all(np.all(np.isfinite(r)) for r in Rt)
            r2t = math.sqrt(sum(float(np.sum(r * r)) for r in Rt)) if ok else math.inf
            if r2t < (1 - 1e-4 * step) * r2:
                break
            step *= 0.5
            if step < params.min_step:
                raise NewtonStalled(f"{label}: line search failed at residual {rn:.3e} (iter {it})")
        x, R, r2 = xt, Rt, r2t
        rn = norm_fn(R)
        history.append(rn)
        log.debug("%s iter %d residual %.3e step %.3g", label, it, rn, step)
    if rn < params.newton_tol:
        return x, rn, params.max_iters, history
    raise MaxIters(f"{label}: residual {rn:.3e} after {params.max_iters} iterations")


def cs_newton(lam: float, bg: Background, init, params: SolverParams = SolverParams()):
    """Solve the Chern-Simons equation for the regular part ``v``.

    Returns
    -------
    v : ndarray
    info : dict with ``residual_norm``, ``newton_iters``, ``history``
    """
    g = bg.grid
    n = g.n

    def residual(x):
        return (cs_residual(lam, bg, x[0]),)

    def step(x, R):
        eu = np.exp(x[0]) * bg.expu0
        pot = lam**2 * eu * (1 - 2 * eu)
        sigma = _shift(pot, g)
        dv = _gmres(lambda d: g.laplacian(d) + pot * d, -R[0],
                    lambda y: g.shifted_solve(sigma, y), params, n)
        return (dv,)

    x, rn, its, hist = _newton((np.asarray(init, dtype=float),), residual, step, params,
                               lambda R: float(np.max(np.abs(R[0]))), "cs")
    v = x[0]
    if params.check_invariants:
        u = v + bg.u0
        if np.max(u[np.isfinite(u)]) >= 0:
            raise InvariantViolation(f"max u = {np.max(u[np.isfinite(u)]):.3e} is not negative")
    return v, {"residual_norm": rn, "newton_iters": its, "history": hist}


def _inner_cg(op, rhs, precond, n, rtol=1e-13):
    size = n * n
    A = LinearOperator((size, size), dtype=float, matvec=lambda y: op(y.reshape(n, n)).ravel())
    M = LinearOperator((size, size), dtype=float, matvec=lambda y: precond(y.reshape(n, n)).ravel())
    x, info = cg(A, rhs.ravel(), rtol=rtol, atol=0.0, maxiter=200, M=M)
    if info != 0:
        raise LinearSolveFailure("inner CG for the N block did not converge")
    return x.reshape(n, n)


def mcs_newton(lam: float, mu: float, bg: Background, init, params: SolverParams = SolverParams(),
               check: bool | None = None) -> McsState:
    """Solve the coupled system from the seed ``init = (v, N)``.

    Raises
    ------
    NewtonStalled, MaxIters
        Newton failure.
    InvariantViolation
        Converged state breaks ``u < 0`` or ``0 < N < lam``.
    """
    g = bg.grid
    n = g.n
    if mu <= lam:
        log.warning("mu=%g <= lam=%g lies outside the regime of interest", mu, lam)

    def residual(x):
        return mcs_residual(lam, mu, bg, x[0], x[1])

    def step(x, R):
        v, N = x
        eu = np.exp(v) * bg.expu0
        a = lam**2 * eu * (1 - N / lam)
        b = lam * eu
        c = lam * eu * (1 + (lam - N) / mu)
        dpos = 1 + lam / mu * eu  # -D = dpos - Delta/mu^2

        def neg_D(y):
            return dpos * y - g.laplacian(y) / mu**2

        def pre_D(y):
            return g.shifted_solve(mu**2, -mu**2 * y)  # (1 - Delta/mu^2)^{-1}

        def Dinv(y):
            return -_inner_cg(neg_D, y, pre_D, n)

        def schur(dv):
            w = Dinv(c * dv)
            return g.laplacian(dv) + a * dv - (g.laplacian(w) / mu - b * w)

        DR2 = Dinv(R[1])
        rhs = -R[0] + g.laplacian(DR2) / mu - b * DR2
        sigma = _shift(a - b * c, g)
        dv = _gmres(schur, rhs, lambda y: g.shifted_solve(sigma, y), params, n)
        dN = Dinv(-R[1] - c * dv)
        return dv, dN

    def norm(R):
        return max(float(np.max(np.abs(R[0]))), float(np.max(np.abs(R[1]))))

    v0, N0 = init
    x, rn, its, hist = _newton((np.asarray(v0, dtype=float), np.asarray(N0, dtype=float)),
                               residual, step, params, norm, "mcs")
    state = McsState(v=x[0], N=x[1], lam=float(lam), mu=float(mu), background=bg,
                     residual_norm=rn, newton_iters=its, info={"history": hist})
    if params.check_invariants if check is None else check:
        check_invariants(state)
    return state


def check_invariants(state: McsState):
    """Raise InvariantViolation unless ``u < 0`` and ``0 < N < lam`` on the grid."""
    u = state.u
    fin = np.isfinite(u)
    umax = float(np.max(u[fin]))
    nmin = float(np.min(state.N))
    nmax = float(np.max(state.N))
    state.info.update(max_u=umax, min_N=nmin, max_N=nmax)
    if umax >= 0:
        raise InvariantViolation(f"max u = {umax:.3e} is not negative")
    if nmin <= 0 or nmax >= state.lam:
        raise InvariantViolation(f"N range [{nmin:.3e}, {nmax:.3e}] not inside (0, {state.lam})")


def topological_init(lam: float, mu: float, bg: Background, kappa: float = 0.125):
    """Seed on the topological branch.

    ``e^u`` is modelled as ``prod (1 - exp(-kappa lam^2 |x - p_i|^2))^{m_i}``,
    which vanishes like ``|x - p_i|^{2 m_i}`` at each vortex and tends to 1
    away from them; ``kappa = 1/8`` gives each unit vortex its full share
    ``4 pi`` of mass.  ``N = lam e^u``.
    """
    g = bg.grid
    v = np.zeros((g.n, g.n))
    for p, m, r in zip(bg.vortices.points, bg.vortices.multiplicities, bg.distances):
        x = kappa * lam**2 * r**2
        h, _ = _h(x)
        v += m * (math.log(kappa * lam**2) + np.log(h))
    # v = u_seed - u0 with the logarithms cancelled analytically
    v -= bg.u0_smooth
    N = lam * np.exp(v) * bg.expu0
    return v, N


def continuation(path, bg: Background, params: SolverParams = SolverParams(), init=None,
                 max_bisect: int | None = None):
    """Solve along ``path = [(lam, mu), ...]`` warm-starting each point.

    A failed step is retried from the last good state through intermediate
    parameters (geometric midpoints), halving up to ``max_bisect`` times.
    """
    max_bisect = params.continuation_steps if max_bisect is None else max_bisect
    path = [(float(a), float(b)) for a, b in path]
    if not path:
        raise ValueError("empty continuation path")
    for (l0, m0), (l1, m1) in zip(path, path[1:]):
        if abs(l1 / l0 - 1) > 0.25 + 1e-12 or abs(m1 / m0 - 1) > 0.25 + 1e-12:
            log.warning("continuation jump (%g,%g)->(%g,%g) exceeds 25%%", l0, m0, l1, m1)
    states = []
    lam, mu = path[0]
    seed = init if init is not None else topological_init(lam, mu, bg)
    try:
        last = mcs_newton(lam, mu, bg, seed, params)
    except Exception as exc:
        raise PathStuck(f"first point ({lam}, {mu}) failed: {exc}", None, states) from exc
    states.append(last)
    for lam1, mu1 in path[1:]:
        last = _advance(last, lam1, mu1, bg, params, max_bisect, states)
        states.append(last)
    return states


def _advance(state, lam1, mu1, bg, params, depth, states):
    try:
        return mcs_newton(lam1, mu1, bg, (state.v, state.N), params)
    except (NewtonStalled, MaxIters, LinearSolveFailure, InvariantViolation) as exc:
        if depth <= 0:
            raise PathStuck(f"could not reach ({lam1}, {mu1}): {exc}", state, states) from exc
    lm = math.sqrt(state.lam * lam1)
    mm = math.sqrt(state.mu * mu1)
    mid = _advance(state, lm, mm, bg, params, depth - 1, states)
    return _advance(mid, lam1, mu1, bg, params, depth - 1, states)
