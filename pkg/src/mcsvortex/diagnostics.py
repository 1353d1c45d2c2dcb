"""Checks on computed states: mass, Chern-Simons deviation, concentration
classification, Pohozaev closure and the physical fields."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .blowup import cutoff
from .elliptic import McsState

__all__ = [
    "AlternativeReport", "ClassifyThresholds", "mass_total", "cs_deviation",
    "balance_residual", "gradient_bound", "local_mass", "find_peaks", "classify", "pohozaev_residual", "reconstruct_gauge",
]


def mass_total(state: McsState) -> float:
    """``int lam^2 e^u (1 - N/lam)`` by grid quadrature."""
    return state.grid.integrate(state.density)


def cs_deviation(state: McsState) -> float:
    """``max |e^u - N/lam|`` over the grid."""
    return float(np.max(np.abs(state.eu - state.N / state.lam)))


def balance_residual(state: McsState) -> float:
    """Relative gap in ``int (1 + lam e^u/mu) N/lam = int (1 + lam/mu) e^u``.

    This is the integrated second equation; the gap is normalized by the
    right-hand side.
    """
    g = state.grid
    lam, mu = state.lam, state.mu
    eu = state.eu
    lhs = g.integrate((1 + lam / mu * eu) * state.N / lam)
    rhs = g.integrate((1 + lam / mu) * eu)
    return abs(lhs - rhs) / abs(rhs)


def gradient_bound(state: McsState) -> float:
    """``max |grad(u - u0 + N/mu)| / lam``, a smooth quantity on the grid."""
    gx, gy = state.grid.gradient(state.v + state.N / state.mu)
    return float(np.max(np.hypot(gx, gy))) / state.lam


def local_mass(state: McsState, center, radius: float) -> float:
    """Density integrated over the metric ball ``B_radius(center)``."""
    g = state.grid
    r = g.lattice.distance(g.points, np.asarray(center, dtype=float))
    return g.integrate(np.where(r < radius, state.density, 0.0))


# ---------------------------------------------------------------------------
# classification

@dataclass(frozen=True)
class ClassifyThresholds:
    """Decision thresholds; radii are fractions of ``sqrt(|Omega|)``."""

    vanish: float = 0.05
    high: float = 5.0
    low: float = -5.0
    far_fraction: float = 0.25
    peak_fraction: float = 0.1
    mass_tol: float = 0.05


@dataclass
class AlternativeReport:
    verdict: str  # "I" | "II" | "III" | "Undetermined"
    evidence: dict = field(default_factory=dict)


def find_peaks(state: McsState, level: float, merge: float):
    """Grid local maxima of ``u + 2 ln lam`` above ``level``, merged within ``merge``.

    Returns lattice coordinates sorted by decreasing height.
    """
    g = state.grid
    u = state.u + 2 * math.log(state.lam)
    u = np.where(np.isfinite(u), u, -np.inf)
    is_max = u > level
    for s1 in (-1, 0, 1):
        for s2 in (-1, 0, 1):
            if s1 or s2:
                is_max &= u >= np.roll(np.roll(u, s1, 0), s2, 1)
    idx = np.argwhere(is_max)
    order = np.argsort(-u[is_max], kind="stable")
    peaks = []
    for i, j in idx[order]:
        t = g.points[i, j]
        if all(g.lattice.distance(t, np.array(p)) > merge for p in peaks):
            peaks.append(tuple(float(v) for v in t))
    return peaks


def _masks(state, centers, radius):
    g = state.grid
    keep = np.ones((g.n, g.n), dtype=bool)
    for c in centers:
        keep &= g.lattice.distance(g.points, np.asarray(c, dtype=float)) > radius
    return keep


def classify(states, thresholds: ClassifyThresholds = ClassifyThresholds()) -> AlternativeReport:
    """Decide which concentration alternative a solution family follows.

    ``states`` are ordered by increasing ``lam``.  The far set is the grid
    region farther than ``far_fraction * sqrt(|Omega|)`` from every vortex
    and every peak of the last state.

    * I: ``sup |u|`` on the far set has not grown and ends below ``vanish``;
    * III: the peak height of ``u + 2 ln lam`` grows past ``high`` while its
      sup on the far set falls below ``low``, each peak carrying local mass
      at least ``8 pi`` (up to ``mass_tol`` relative);
    * II: ``u + 2 ln lam`` stays within ``[low, high]`` away from vortices.
    """
    states = list(states)
    if len(states) < 3:
        raise ValueError("classification needs at least three states")
    lams = [s.lam for s in states]
    if any(b <= a for a, b in zip(lams, lams[1:])):
        raise ValueError("states must be ordered by increasing lambda")
    th = thresholds
    last = states[-1]
    side = math.sqrt(last.grid.area)
    far_r = th.far_fraction * side
    peak_r = th.peak_fraction * side
    vort = list(last.vortices.points)
    peaks = find_peaks(last, th.high, far_r)
    alphas = [local_mass(last, p, peak_r) for p in peaks]

    sup_abs, peak_h, far_max, lo_all, hi_all = [], [], [], [], []
    for s in states:
        shift = 2 * math.log(s.lam)
        u = s.u
        far = _masks(s, vort + peaks, far_r)
        away = _masks(s, vort, far_r)
        fin = np.isfinite(u)
        sup_abs.append(float(np.max(np.abs(u[far]))) if far.any() else math.nan)
        peak_h.append(float(np.max(u[fin])) + shift)
        far_max.append(float(np.max(u[far])) + shift if far.any() else math.nan)
        lo_all.append(float(np.min(u[away])) + shift)
        hi_all.append(float(np.max(u[away])) + shift)

    evidence = {
        "lambda": lams, "far_sup_abs_u": sup_abs, "peak_height": peak_h,
        "far_max_shifted": far_max, "peaks": peaks, "alphas": alphas,
        "far_radius": far_r, "peak_radius": peak_r,
    }
    if math.isfinite(sup_abs[-1]) and sup_abs[-1] < th.vanish and sup_abs[-1] <= sup_abs[0]:
        return AlternativeReport("I", evidence)
    if (peaks and peak_h[-1] > th.high and peak_h[-1] > peak_h[0]
            and math.isfinite(far_max[-1]) and far_max[-1] < th.low and far_max[-1] < far_max[0]):
        if all(a >= 8 * math.pi * (1 - th.mass_tol) for a in alphas):
            return AlternativeReport("III", evidence)
        return AlternativeReport("Undetermined", evidence)
    if min(lo_all) >= th.low and max(hi_all) <= th.high:
        return AlternativeReport("II", evidence)
    return AlternativeReport("Undetermined", evidence)


# ---------------------------------------------------------------------------
# Pohozaev identity

def _polar_nodes(grid, center, radius, nr, nt):
    x, wx = np.polynomial.legendre.leggauss(nr)
    r = 0.5 * radius * (x + 1)
    wr = 0.5 * radius * wx * r
    th = 2 * math.pi * np.arange(nt) / nt
    R, T = np.meshgrid(r, th, indexing="ij")
    disp = np.stack([R * np.cos(T), R * np.sin(T)], -1)
    pts = grid.lattice.to_lattice(grid.lattice.to_physical(np.asarray(center, float)) + disp) % 1.0
    w = wr[:, None] * np.full(nt, 2 * math.pi / nt)[None, :]
    return pts, w


def pohozaev_residual(state: McsState, center, radius: float, nr: int = 96, nt: int = 64,
                      detail: bool = False):
    """Closure of the Pohozaev identity on ``B_radius(center)``.

    With ``x`` measured from ``center``, ``m`` the multiplicity there and
    ``psi = u + N/mu - 2m ln|x|`` and ``D = lam^2 e^u (1 - N/lam)``, the
    equation reads ``Lap psi = -D`` on the ball and solutions satisfy::

        int_{|x|=r} [r (d_r psi)^2 - r |grad psi|^2 / 2 + r D]
          = (2 + 2m) int D - int lam^2 e^u [x.grad N / lam + (1 - N/lam) x.grad N / mu]

    (interior integrals over the ball).  Returns ``|lhs - rhs|`` divided by
    the largest single term.  The ball must not reach another vortex within
    twice its radius.
    """
    g = state.grid
    lat = g.lattice
    if not 0 < 2 * radius < lat.injectivity_radius:
        raise ValueError("radius must lie below half the injectivity radius")
    c = np.asarray(center, dtype=float)
    lam, mu = state.lam, state.mu
    vs = state.vortices
    m = 0
    rho = lat.displacement(g.points, c)
    r = np.hypot(rho[..., 0], rho[..., 1])
    chi = cutoff(r, radius)[0]
    # u0 - 2m ln|x| near the centre, smooth on the support of chi
    smooth = state.background.u0_smooth.copy()
    for p, mi, dist in zip(vs.points, vs.multiplicities, state.background.distances):
        if float(lat.distance(c, np.array(p))) < 1e-12:
            m = mi
            continue
        if np.any(dist[chi > 0] < 1e-12):
            raise ValueError("another vortex lies within twice the radius")
        with np.errstate(divide="ignore"):
            smooth = smooth + 2 * mi * np.where(chi > 0, np.log(np.where(dist > 0, dist, 1.0)), 0.0)
    psi = chi * (state.v + smooth) + state.N / mu
    px, py = g.gradient(psi)
    Nx, Ny = g.gradient(state.N)
    eu = state.eu
    D = state.density
    xdN = rho[..., 0] * Nx + rho[..., 1] * Ny
    fields_in = [
        chi * (2 + 2 * m) * D,
        -chi * lam**2 * eu * (xdN / lam + (1 - state.N / lam) * xdN / mu),
    ]
    pts, w = _polar_nodes(g, c, radius, nr, nt)
    interior = [float(np.sum(g.interpolate(f, pts) * w)) for f in fields_in]

    th = 2 * math.pi * np.arange(4 * nt) / (4 * nt)
    ring = lat.to_lattice(lat.to_physical(c) + radius * np.stack([np.cos(th), np.sin(th)], -1)) % 1.0
    gx = g.interpolate(px, ring)
    gy = g.interpolate(py, ring)
    Dr = g.interpolate(D, ring)
    dr = gx * np.cos(th) + gy * np.sin(th)
    ds = radius * 2 * math.pi / len(th)
    boundary = [
        float(np.sum(radius * dr**2) * ds),
        float(np.sum(-radius * (gx**2 + gy**2) / 2) * ds),
        float(np.sum(radius * Dr) * ds),
    ]
    lhs = sum(boundary)
    rhs = sum(interior)
    scale = max(abs(t) for t in boundary + interior)
    res = abs(lhs - rhs) / scale if scale > 0 else 0.0
    if detail:
        return res, {"boundary": boundary, "interior": interior, "multiplicity": m}
    return res


# ---------------------------------------------------------------------------
# physical fields

def reconstruct_gauge(state: McsState, q_squared: float | None = None) -> dict:
    """Physical fields from ``(u, N)`` with ``lam = 2 q^2 / mu`` and ``N = 2 n``.

    Returns ``phi_sq = e^u``, ``n = N/2``, ``F12 = q^2 e^u - mu N / 2``,
    ``A0 = q^2/mu - n`` and the flux ``int F12``.
    """
    lam, mu = state.lam, state.mu
    q2 = lam * mu / 2 if q_squared is None else float(q_squared)
    eu = state.eu
    n = state.N / 2
    F12 = q2 * eu - mu * n
    A0 = q2 / mu - n
    # the flux integrand is q^2 (e^u - N/lam) once q^2 = lam mu / 2
    flux = state.grid.integrate(F12)
    return {"phi_sq": eu, "n": n, "F12": F12, "A0": A0, "flux": flux, "q_squared": q2}
