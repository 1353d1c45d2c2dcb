"""Entire radial profiles of the Chern-Simons vortex equation.

The profile equation for multiplicity ``m`` is written for the regularized
variable ``V = w - 2m ln r``::

    V'' + V'/r + r^{2m} e^V (1 - r^{2m} e^V) = 0,   V(0) = s,  V'(0) = 0.

For ``m = 0`` this is the profile ``w`` itself.  Integration is carried out
in the logarithmic variable ``t = ln r``, where the equation reads::

    d2V/dt2 = -exp((2m+2) t + V) (1 - exp(2m t + V)),

and ``W = dV/dt = r V'`` satisfies ``-W(R) = int_0^R F r dr`` with
``F = e^w (1 - e^w)``.  The decay rate ``beta`` stored on a profile is
``(1/2pi) int F dx``, i.e. the coefficient in ``V ~ -beta ln r``.  The
integral identities are expressed in the decay rate of the singular
``w``, which is ``beta - 2m``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np
from scipy.integrate import simpson, solve_ivp
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .errors import (BracketFailure, IllConditionedFit, IntegrationDiverged,
                     MethodMismatch, NotApplicable, TruncationTooSmall)

__all__ = [
    "ShootingConfig", "RadialProfile", "IdentityReport", "shoot",
    "beta_of_profile", "check_integral_identities", "solve_for_beta",
    "fit_asymptotics", "core_radius",
]

W_FLOOR = -1.0e6


@dataclass(frozen=True)
class ShootingConfig:
    """Integration and fitting controls for :func:`shoot`.

    Radii are absolute.  :meth:`for_profile` rescales the defaults by the
    core radius of the requested profile, which is what :func:`shoot` uses
    when no configuration is given.
    """

    r_max: float = 200.0
    fit_window: tuple[float, float] = (50.0, 150.0)
    abs_tol: float = 1e-13
    rel_tol: float = 1e-12
    max_step: float = 0.05
    table_step: float = 0.005
    fit_tol: float = 1e-4
    beta_tol: float = 1e-4

    def validate(self) -> "ShootingConfig":
        lo, hi = self.fit_window
        if not (self.r_max > hi > lo > 1.0):
            raise ValueError("need r_max > fit_window[1] > fit_window[0] > 1")
        if min(self.abs_tol, self.rel_tol, self.max_step, self.table_step) <= 0:
            raise ValueError("tolerances and steps must be positive")
        return self

    def scaled(self, factor: float) -> "ShootingConfig":
        lo, hi = self.fit_window
        return replace(self, r_max=self.r_max * factor,
                       fit_window=(lo * factor, hi * factor))

    @classmethod
    def for_profile(cls, s: float, m: int, reach: float = 10.0, **kw) -> "ShootingConfig":
        """Default radii scaled by ``reach`` times the core radius.

        The extra reach pushes the second-order asymptotic remainder on the
        fit window below 1e-9, which is what resolves ``beta - 4`` for very
        negative ``s``.
        """
        return cls(**kw).scaled(reach * core_radius(s, m))


def core_radius(s: float, m: int) -> float:
    """Length scale on which ``r^{2m+2} e^s`` becomes order one (at least 1)."""
    return math.exp(max(0.0, -s) / (2 * m + 2))


@dataclass(frozen=True)
class RadialProfile:
    """Tabulated radial profile with its asymptotic constants.

    ``w`` and ``w_prime`` hold the regularized variable ``V`` (identical to
    ``w`` when ``m = 0``).  Far from the origin
    ``V = -beta ln r + I1 - a1 r^{-p}`` with ``p = beta - 2m - 2``.
    """

    m: int
    s: float
    r_grid: np.ndarray
    w: np.ndarray
    w_prime: np.ndarray
    beta: float
    a1: float
    I1: float
    r_max: float
    fit_window: tuple[float, float] = (50.0, 150.0)
    fit_residual: float = 0.0
    beta_slope: float = float("nan")
    integrator: str = "adaptive"
    config: ShootingConfig = field(default_factory=ShootingConfig, repr=False)

    @property
    def trivial(self) -> bool:
        return self.s == 0.0

    @property
    def decay_exponent(self) -> float:
        """Exponent ``p`` of the subleading term ``a1 r^{-p}``."""
        return self.beta - 2 * self.m - 2

    @property
    def singular_beta(self) -> float:
        """Decay rate of the singular profile ``w = V + 2m ln r``."""
        return self.beta - 2 * self.m

    # evaluation ------------------------------------------------------
    @cached_property
    def _splines(self):
        t = np.log(self.r_grid[1:])
        V = self.w[1:]
        W = self.r_grid[1:] * self.w_prime[1:]
        dW = -np.exp((2 * self.m + 2) * t + V) * (1 - np.exp(2 * self.m * t + V))
        return CubicHermiteSpline(t, V, W), CubicHermiteSpline(t, W, dW)

    def _taylor(self):
        k = 2 * self.m + 2
        es = math.exp(self.s)
        amp = es * (1 - es) if self.m == 0 else es
        return k, -amp / k**2

    def __call__(self, r):
        """Regularized profile ``V(r)``; accepts arrays."""
        r = np.asarray(r, dtype=float)
        if self.trivial:
            return np.zeros_like(r)
        out = np.empty_like(r)
        r_lo = self.r_grid[1]
        lo = r < r_lo
        hi = r > self.r_max
        mid = ~(lo | hi)
        k, c = self._taylor()
        out[lo] = self.s + c * r[lo] ** k
        out[hi] = -self.beta * np.log(r[hi]) + self.I1 - self.a1 * r[hi] ** (-self.decay_exponent)
        out[mid] = self._splines[0](np.log(r[mid]))
        return out

    def deriv(self, r):
        """Radial derivative ``V'(r)``."""
        r = np.asarray(r, dtype=float)
        if self.trivial:
            return np.zeros_like(r)
        out = np.empty_like(r)
        r_lo = self.r_grid[1]
        lo = r < r_lo
        hi = r > self.r_max
        mid = ~(lo | hi)
        k, c = self._taylor()
        out[lo] = k * c * r[lo] ** (k - 1)
        p = self.decay_exponent
        out[hi] = -self.beta / r[hi] + self.a1 * p * r[hi] ** (-p - 1)
        out[mid] = self._splines[1](np.log(r[mid])) / r[mid]
        return out

    def singular(self, r):
        """Singular profile ``w = V + 2m ln r`` (``-inf`` at the origin if m>0)."""
        r = np.asarray(r, dtype=float)
        with np.errstate(divide="ignore"):
            return self(r) + 2 * self.m * np.log(r)

    def source(self, r):
        """``r^{2m} e^V (1 - r^{2m} e^V)``, i.e. ``F(w)``."""
        e = self.density(r)
        return e * (1 - e)

    def density(self, r):
        """``e^w = r^{2m} e^V``."""
        r = np.asarray(r, dtype=float)
        return r ** (2 * self.m) * np.exp(self(r))

    def second_deriv(self, r):
        """``V''`` from the equation itself."""
        r = np.asarray(r, dtype=float)
        dv = self.deriv(r)
        with np.errstate(invalid="ignore", divide="ignore"):
            ratio = np.where(r > 0, dv / np.where(r > 0, r, 1.0), 0.0)
        k, c = self._taylor()
        small = r < self.r_grid[1]
        ratio[small] = k * c * r[small] ** (k - 2) if k > 2 else k * c
        return -ratio - self.source(r)


@dataclass(frozen=True)
class IdentityReport:
    """Measured versus closed-form values of the two profile integrals."""

    applicable: bool
    beta: float
    int_e2w: float = float("nan")
    int_ew: float = float("nan")
    expected_e2w: float = float("nan")
    expected_ew: float = float("nan")
    dev_e2w: float = float("nan")
    dev_ew: float = float("nan")

    @property
    def max_deviation(self) -> float:
        return max(self.dev_e2w, self.dev_ew)


# ---------------------------------------------------------------------------
# integration

def _rhs(m):
    k = 2 * m + 2

    def f(t, y):
        V, W = y
        return [W, -math.exp(k * t + V) * (1 - math.exp(2 * m * t + V))]
    return f


def _start(s, m, r0):
    k = 2 * m + 2
    es = math.exp(s)
    amp = es * (1 - es) if m == 0 else es
    c = -amp / k**2
    return s + c * r0**k, k * c * r0**k


def _integrate_adaptive(s, m, cfg, t0, t_tab):
    def crossed(t, y):
        return 2 * m * t + y[0]
    crossed.terminal = True
    crossed.direction = 1

    def floor(t, y):
        return y[0] - W_FLOOR
    floor.terminal = True

    y0 = _start(s, m, math.exp(t0))
    sol = solve_ivp(_rhs(m), (t0, t_tab[-1]), y0, method="DOP853",
                    t_eval=t_tab, rtol=cfg.rel_tol, atol=cfg.abs_tol,
                    max_step=cfg.max_step, events=(crossed, floor))
    if sol.status == -1:
        raise IntegrationDiverged(f"step control failed: {sol.message}")
    if sol.status == 1:
        which = "e^w reached 1" if len(sol.t_events[0]) else "w below floor"
        raise IntegrationDiverged(f"s={s}, m={m}: {which} before r_max")
    return sol.y[0], sol.y[1]


def _integrate_rk4(s, m, cfg, t0, t_tab, substeps=4):
    """Classical fixed-step RK4 on the same log-radius system."""
    f = _rhs(m)
    y = np.array(_start(s, m, math.exp(t0)))
    h = (t_tab[1] - t_tab[0]) / substeps
    V = np.empty_like(t_tab)
    W = np.empty_like(t_tab)
    V[0], W[0] = y
    t = t0
    for i in range(1, len(t_tab)):
        for _ in range(substeps):
            k1 = np.array(f(t, y))
            k2 = np.array(f(t + h / 2, y + h / 2 * k1))
            k3 = np.array(f(t + h / 2, y + h / 2 * k2))
            k4 = np.array(f(t + h, y + h * k3))
            y = y + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            t += h
        t = t_tab[i]
        if 2 * m * t + y[0] >= 0:
            raise IntegrationDiverged(f"s={s}, m={m}: e^w reached 1 before r_max")
        if y[0] < W_FLOOR or not np.all(np.isfinite(y)):
            raise IntegrationDiverged(f"s={s}, m={m}: w below floor")
        V[i], W[i] = y
    return V, W


def _fit(r, y, p, r_ref):
    """Least squares ``y = c0 - c1 (r/r_ref)^{-p}``; returns (c0, c1, residual)."""
    A = np.column_stack([np.ones_like(r), -(r / r_ref) ** (-p)])
    cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > 1e10:
        raise IllConditionedFit(f"design matrix condition {cond:.3g}")
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    return coef[0], coef[1], float(np.max(np.abs(A @ coef - y)))


def _asymptotics(r, V, W, m, window, head_mass, max_iter=50):
    """Self-consistent beta (quadrature + tail), I1, a1 and slope-fit beta."""
    t = np.log(r)
    k = 2 * m + 2
    ew = np.exp(V + 2 * m * t)
    integrand = np.exp(V + k * t) * (1 - ew)
    Q = head_mass + simpson(integrand, x=t)
    R = r[-1]
    sel = (r >= window[0]) & (r <= window[1])
    if sel.sum() < 8:
        raise TruncationTooSmall("fit window holds too few samples")
    lo = window[0]
    beta = -W[-1]
    I1 = a1 = resid = float("nan")
    for _ in range(max_iter):
        p = beta - k
        if p <= 0:
            raise TruncationTooSmall(f"decay rate {beta:.6g} not above 2m+2 on the window")
        I1, c1, resid = _fit(r[sel], V[sel] + beta * np.log(r[sel]), p, lo)
        a1 = c1 * lo**p
        e1 = math.exp(I1)
        tail = (e1 * R ** (-p) / p - a1 * e1 * R ** (-2 * p) / (2 * p)
                - e1**2 * R ** (2 * (2 * m - beta) + 2) / (2 * beta - 4 * m - 2))
        new = Q + tail
        if abs(new - beta) <= 1e-15 * abs(new):
            beta = new
            break
        beta = new
    p = beta - k
    c0, _, _ = _fit(r[sel], W[sel], p, lo)
    beta_slope = -c0
    return beta, I1, a1, resid, beta_slope


def _build(s, m, cfg, integrator):
    t0 = math.log(min(1.0, core_radius(s, m)) * 1e-3)
    t_end = math.log(cfg.r_max)
    n = int(math.ceil((t_end - t0) / cfg.table_step))
    t_tab = np.linspace(t0, t_end, n + 1)
    if integrator == "adaptive":
        V, W = _integrate_adaptive(s, m, cfg, t0, t_tab)
    elif integrator == "rk4":
        V, W = _integrate_rk4(s, m, cfg, t0, t_tab)
    else:
        raise ValueError(f"unknown integrator {integrator!r}")
    r = np.exp(t_tab)
    k = 2 * m + 2
    es = math.exp(s)
    head = (es * (1 - es) if m == 0 else es) * r[0] ** k / k
    beta, I1, a1, resid, beta_slope = _asymptotics(r, V, W, m, cfg.fit_window, head)
    if resid > cfg.fit_tol:
        raise TruncationTooSmall(
            f"asymptotic fit residual {resid:.3g} exceeds {cfg.fit_tol:.1g}; increase r_max")
    return RadialProfile(
        m=m, s=s, r_grid=np.concatenate([[0.0], r]), w=np.concatenate([[s], V]),
        w_prime=np.concatenate([[0.0], W / r]), beta=float(beta), a1=float(a1),
        I1=float(I1), r_max=float(r[-1]), fit_window=tuple(cfg.fit_window),
        fit_residual=resid, beta_slope=float(beta_slope), integrator=integrator,
        config=cfg)


def shoot(s: float, m: int = 0, cfg: ShootingConfig | None = None,
          integrator: str = "adaptive") -> RadialProfile:
    """Integrate the entire radial profile with center value ``s``.

    Parameters
    ----------
    s : float
        Value of the regularized profile at the origin, ``s <= 0``.
    m : int
        Vortex multiplicity at the origin.
    cfg : ShootingConfig, optional
        Defaults to :meth:`ShootingConfig.for_profile`, i.e. the standard
        window rescaled by ten core radii.
    integrator : {"adaptive", "rk4"}
        Adaptive embedded 8(5,3) pair or classical fixed-step RK4.

    Returns
    -------
    RadialProfile

    Raises
    ------
    IntegrationDiverged
        If ``e^w`` reaches 1 (no entire decaying solution for this ``s``)
        or the step controller fails.
    TruncationTooSmall
        If the profile is not asymptotic on the fit window.
    MethodMismatch
        If quadrature and slope estimates of ``beta`` disagree.
    """
    if s > 0:
        raise ValueError("shooting value must be non-positive")
    if m < 0 or int(m) != m:
        raise ValueError("multiplicity must be a non-negative integer")
    m = int(m)
    cfg = (cfg or ShootingConfig.for_profile(s, m)).validate()
    if s == 0.0:
        if m != 0:
            raise IntegrationDiverged("s=0 with m>0 has no entire decaying solution")
        r = np.concatenate([[0.0], np.geomspace(1e-3, cfg.r_max, 64)])
        z = np.zeros_like(r)
        return RadialProfile(m=0, s=0.0, r_grid=r, w=z, w_prime=z.copy(), beta=0.0,
                             a1=float("nan"), I1=float("nan"), r_max=cfg.r_max,
                             fit_window=tuple(cfg.fit_window), config=cfg)
    prof = _build(s, m, cfg, integrator)
    beta_of_profile(prof)
    return prof


def beta_of_profile(p: RadialProfile) -> float:
    """Decay rate by quadrature with tail continuation, checked by a slope fit.

    Method (a) integrates ``F r`` over the table and adds the analytic tail
    implied by the fitted asymptotics; method (b) fits ``r V' = -beta +
    a1 p r^{-p}`` on the fit window.  Returns (a).
    """
    if p.trivial:
        return 0.0
    r = p.r_grid[1:]
    k = 2 * p.m + 2
    es = math.exp(p.s)
    head = (es * (1 - es) if p.m == 0 else es) * r[0] ** k / k
    beta, _, _, _, slope = _asymptotics(r, p.w[1:], r * p.w_prime[1:], p.m,
                                        p.fit_window, head)
    if abs(beta - slope) > p.config.beta_tol * abs(beta):
        raise MethodMismatch(f"quadrature beta {beta:.10g} vs slope beta {slope:.10g}")
    return float(beta)


def fit_asymptotics(p: RadialProfile, window: tuple[float, float] | None = None):
    """Fit ``V + beta ln r = I1 - a1 r^{-p}`` on a window.

    Returns
    -------
    a1, I1, residual : float
    """
    if p.trivial:
        raise NotApplicable("trivial profile has no decay")
    lo, hi = window or p.fit_window
    r = p.r_grid[1:]
    sel = (r >= lo) & (r <= hi)
    if sel.sum() < 8:
        raise TruncationTooSmall("fit window outside the tabulated range")
    q = p.decay_exponent
    I1, c1, resid = _fit(r[sel], p.w[1:][sel] + p.beta * np.log(r[sel]), q, lo)
    return float(c1 * lo**q), float(I1), resid


def check_integral_identities(p: RadialProfile) -> IdentityReport:
    """Compare ``int e^{2w}`` and ``int e^w`` with their closed forms.

    The closed forms are ``pi (b^2 - 4b - 4m^2 - 8m)`` and
    ``pi (b^2 - 2b - 4m^2 - 4m)`` with ``b = beta - 2m`` the decay rate of
    the singular profile.
    """
    if p.trivial:
        return IdentityReport(applicable=False, beta=0.0)
    m = p.m
    r = p.r_grid[1:]
    t = np.log(r)
    V = p.w[1:]
    k = 2 * m + 2
    R = r[-1]
    es = math.exp(p.s)
    e1 = math.exp(p.I1)
    q = p.decay_exponent
    # int e^w dx = 2 pi int e^{V + (2m+2) t} dt, similarly for e^{2w}
    ew = simpson(np.exp(V + k * t), x=t) + es * r[0] ** k / k
    ew += e1 * R ** (-q) / q - p.a1 * e1 * R ** (-2 * q) / (2 * q)
    k2 = 4 * m + 2
    e2w = simpson(np.exp(2 * V + k2 * t), x=t) + es**2 * r[0] ** (k2) / k2
    e2w += e1**2 * R ** (k2 - 2 * p.beta) / (2 * p.beta - k2)
    ew *= 2 * math.pi
    e2w *= 2 * math.pi
    b = p.singular_beta
    exp_e2w = math.pi * (b * b - 4 * b - 4 * m * m - 8 * m)
    exp_ew = math.pi * (b * b - 2 * b - 4 * m * m - 4 * m)
    return IdentityReport(
        applicable=True, beta=p.beta, int_e2w=float(e2w), int_ew=float(ew),
        expected_e2w=exp_e2w, expected_ew=exp_ew,
        dev_e2w=abs(e2w - exp_e2w) / abs(exp_e2w), dev_ew=abs(ew - exp_ew) / abs(exp_ew))


def _beta_or_inf(s, m, cfg):
    try:
        return shoot(s, m, cfg).beta
    except IntegrationDiverged:
        # beyond the last entire solution beta has already run off to infinity
        return math.inf


def solve_for_beta(target_beta: float, m: int = 0, cfg: ShootingConfig | None = None,
                   bracket: tuple[float, float] = (-80.0, -1e-6), rtol: float = 1e-6) -> float:
    """Shooting value ``s`` whose profile decays at rate ``target_beta``.

    Uses monotonicity of ``beta(s)``: bisection until both bracket ends hold
    entire solutions, then Brent's method.  For ``m >= 1`` shooting values
    past the last entire solution are treated as ``beta = +inf``.
    """
    if target_beta <= 2 * m + 4:
        raise BracketFailure(f"target {target_beta} is not above 4 + 2m")
    lo, hi = bracket

    def g(s):
        return _beta_or_inf(s, m, cfg) - target_beta

    g_lo, g_hi = g(lo), g(hi)
    if not (g_lo < 0 < g_hi):
        raise BracketFailure(f"beta-target at bracket ends: {g_lo:.4g}, {g_hi:.4g}")
    while not math.isfinite(g_hi) or hi - lo > 1.0:
        mid = 0.5 * (lo + hi)
        g_mid = g(mid)
        if g_mid < 0:
            lo, g_lo = mid, g_mid
        else:
            hi, g_hi = mid, g_mid
    s = brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
    if abs(g(s)) > rtol * target_beta:
        raise BracketFailure(f"Brent iteration ended with beta error {g(s):.3g}")
    return float(s)
