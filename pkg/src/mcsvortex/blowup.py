"""Approximate blow-up solutions and their Lyapunov-Schmidt correction.

Two families are built from an entire radial profile:

* ``"regular"``: a bubble centred at a point ``q`` free of vortices, glued
  to ``4 pi M (1 - theta)`` times the Green's function outside ``B_d(q)``;
* ``"vortex"``: a bubble sitting on a vortex ``p1`` built from the
  regularized profile ``V`` of multiplicity ``m1``.

The unknowns are written as ``u + N/mu = U + phi`` together with
``N/lam = e^{U+u0}(1 + phi) + S`` (regular) or ``N/lam = e^{U+u0+phi} + S``
(vortex), and ``(phi, S)`` is obtained as the fixed point of the map
``Psi`` that solves the Helmholtz equation for ``S`` and the (projected)
linearized bubble equation for ``phi``.  Here ``u`` is the regular part
(the full Higgs density is ``e^{u+u0}``).

Physical lengths are used throughout; the constant source is
``4 pi M / |Omega|``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.sparse.linalg import LinearOperator, minres

from .elliptic import Background, McsState, SolverParams, mcs_newton
from .errors import (BallExit, LinearSolveFailure, MatchFailure, NoConvergence,
                     NotApplicable, ProfileMismatch, SingularGram)
from .green import (gamma_eval, gamma_grad, green_eval, green_grid, u0_eval,
                    u0_grad)
from .radial import RadialProfile, check_integral_identities
from .spectral import Grid

log = logging.getLogger(__name__)

__all__ = [
    "ApproxSolution", "CorrectionPair", "WeightedNorm", "KernelElements",
    "FixedPointResult", "build_approx", "weighted_norms", "residuals",
    "kernel_elements", "project_Q", "fixed_point_step", "fixed_point",
    "contraction_factor", "reduced_gradient", "reassemble", "polish", "cutoff",
    "ReducedSolution", "solve_reduced",
]

REGULAR = "regular"
VORTEX = "vortex"


def cutoff(r, d):
    """Quintic cutoff: 1 on ``r <= d``, 0 on ``r >= 2d``, C^2 in between.

    Returns ``(chi, chi', chi'')`` as functions of ``r``.
    """
    r = np.asarray(r, dtype=float)
    s = np.clip((r - d) / d, 0.0, 1.0)
    P = s**3 * (10 - 15 * s + 6 * s**2)
    dP = 30 * s**2 * (1 - s) ** 2
    ddP = 60 * s * (1 - s) * (1 - 2 * s)
    return 1 - P, -dP / d, -ddP / d**2


def _over_r(profile: RadialProfile, z):
    """``V'(z)/z`` with the finite limit at the origin."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    k = 2 * profile.m + 2
    c = profile._taylor()[1]
    small = z < profile.r_grid[1]
    out[small] = k * c * z[small] ** (k - 2)
    out[~small] = profile.deriv(z[~small]) / z[~small]
    return out


# ---------------------------------------------------------------------------
# ansatz

@dataclass
class ApproxSolution:
    """Two-piece ansatz ``U`` sampled on the grid.

    ``theta`` is the matched constant; ``theta_asymptotic`` the leading
    far-field prediction ``a1 p / (2 M (lam d)^p)``.  ``gradU`` and ``lapU``
    are the exact piecewise derivatives; the residuals use the collocation
    Laplacian ``lap_discrete`` so that a converged correction reassembles
    into a solution of the discrete system.
    """

    kind: str
    q: tuple
    lam: float
    mu: float
    d: float
    theta: float
    theta_asymptotic: float
    c_lambda: float
    profile: RadialProfile = field(repr=False)
    background: Background = field(repr=False)
    U: np.ndarray = field(repr=False)
    gradU: np.ndarray = field(repr=False)
    lapU: np.ndarray = field(repr=False)
    r: np.ndarray = field(repr=False)
    rho: np.ndarray = field(repr=False)
    interface_jump: float = math.nan

    @property
    def grid(self) -> Grid:
        return self.background.grid

    @property
    def total(self) -> int:
        return self.background.total

    @property
    def inner(self) -> np.ndarray:
        return self.r < self.d

    @cached_property
    def potential(self) -> np.ndarray:
        """``lam^2 f(w(lam |y - q|)) 1_{B_2d}`` with ``f(t) = e^t (1 - 2 e^t)``."""
        z = self.lam * self.r
        e = self.profile.density(z)
        return np.where(self.r < 2 * self.d, self.lam**2 * e * (1 - 2 * e), 0.0)

    @cached_property
    def lap_discrete(self) -> np.ndarray:
        """Collocation Laplacian of ``U``, the operator the solvers see."""
        return self.grid.laplacian(self.U)

    @cached_property
    def expU(self) -> np.ndarray:
        return np.exp(self.U)

    @cached_property
    def E(self) -> np.ndarray:
        """``e^{U + u0}``."""
        return self.expU * self.background.expu0

    @property
    def source(self) -> float:
        return self.background.source

    def ball_radius(self) -> float:
        L = math.log(self.lam)
        return L**2 / self.lam if self.kind == REGULAR else L**-3

    def pair_norm(self, phi, S, wn: "WeightedNorm | None" = None) -> float:
        """Norm defining the admissible ball of the fixed-point map."""
        wn = wn or WeightedNorm.for_approx(self)
        g = self.grid
        L = math.log(self.lam)
        mu = self.mu
        s_part = mu**2 * g.l2(S) + mu * float(np.max(np.abs(S))) + g.w22(S)
        if self.kind == REGULAR:
            w = L**2 / mu**2
        else:
            w = self.lam / (mu**2 * L**3)
        return float(np.max(np.abs(phi))) + wn.X(phi) + w * s_part


def build_approx(kind: str, lam: float, mu: float, q, d: float, profile: RadialProfile,
                 background: Background, n_interface: int = 64,
                 match_tol: float = 1e-8) -> ApproxSolution:
    """Assemble the glued ansatz ``U`` on the background grid.

    Parameters
    ----------
    kind : {"regular", "vortex"}
    q : pair
        Lattice coordinates of the bubble centre; for ``"vortex"`` it must be
        one of the vortices and ``profile.m`` its multiplicity.
    d : float
        Gluing radius; ``2 d`` must stay below the injectivity radius.
    profile : RadialProfile
        Profile whose decay rate equals ``2 M``.

    Raises
    ------
    ProfileMismatch
        ``|beta - 2M| > 1e-4`` or wrong multiplicity.
    MatchFailure
        Interface jumps of ``U`` or ``d_r U`` exceed ``match_tol``.
    """
    if kind not in (REGULAR, VORTEX):
        raise ValueError(f"unknown kind {kind!r}")
    grid = background.grid
    lat = grid.lattice
    vs = background.vortices
    M = vs.total
    q = tuple(float(v) % 1.0 for v in q)
    if kind == REGULAR and M <= 2:
        raise NotApplicable("a regular-point bubble needs total multiplicity > 2")
    if kind == VORTEX and M <= 4:
        raise NotApplicable("a vortex-point bubble needs total multiplicity > 4")
    if abs(profile.beta - 2 * M) > 1e-4:
        raise ProfileMismatch(f"profile decay {profile.beta:.6g} differs from 2M = {2 * M}")
    if not 0 < 2 * d < lat.injectivity_radius:
        raise ValueError("gluing radius must satisfy 0 < 2d < injectivity radius")

    others = []
    m1 = 0
    for p, m in zip(vs.points, vs.multiplicities):
        dist = float(lat.distance(np.array(q), np.array(p)))
        if dist < 1e-12:
            m1 = m
        else:
            others.append((p, m, dist))
    if kind == REGULAR:
        if m1 or profile.m != 0:
            raise ProfileMismatch("a regular-point bubble uses the m = 0 profile away from vortices")
    else:
        if not m1:
            raise ValueError("vortex-point bubble must sit on a vortex")
        if profile.m != m1:
            raise ProfileMismatch(f"profile multiplicity {profile.m} differs from vortex multiplicity {m1}")
    if any(dist <= 2 * d for _, _, dist in others):
        raise ValueError("B_2d(q) must not contain other vortices")

    gam, r, ggam = green_grid(lat, grid.n, q, order=1)
    rho = lat.displacement(grid.points, np.array(q))
    gqq = float(gamma_eval(lat, np.array(q), np.array(q)))
    Vd = float(profile(np.array([lam * d]))[0])
    Vpd = float(profile.deriv(np.array([lam * d]))[0])
    if kind == REGULAR:
        shift = -float(u0_eval(lat, vs, np.array(q)))
        c_lam = 0.0
    else:
        c_lam = 2 * math.log(lam) + 4 * math.pi * (
            gqq + sum(m * float(green_eval(lat, np.array(q), np.array(p))) for p, m, _ in others))
        shift = c_lam

    # interface nodes and the affine dependence of the slope jump on theta
    ang = 2 * math.pi * np.arange(n_interface) / n_interface
    nodes_phys = lat.to_physical(np.array(q)) + d * np.stack([np.cos(ang), np.sin(ang)], -1)
    nodes = lat.to_lattice(nodes_phys) % 1.0
    gg = gamma_grad(lat, nodes, np.array(q))
    nrm = np.stack([np.cos(ang), np.sin(ang)], -1)
    dgam = np.sum(gg * nrm, axis=-1)
    gam_nodes = gamma_eval(lat, nodes, np.array(q))
    c0 = 4 * math.pi * M

    def pieces(theta):
        inner_val = Vd + shift + c0 * (gam_nodes - gqq) * (1 - theta)
        # G(y, q) + ln d / 2pi equals gamma(y, q) on the circle |y - q| = d
        G_nodes = gam_nodes - math.log(d) / (2 * math.pi)
        outer_val = Vd + shift + c0 * (G_nodes - gqq + math.log(d) / (2 * math.pi)) * (1 - theta)
        inner_dr = lam * Vpd + c0 * (1 - theta) * dgam
        outer_dr = c0 * (1 - theta) * (dgam - 1 / (2 * math.pi * d))
        return inner_val - outer_val, inner_dr - outer_dr

    _, J0 = pieces(0.0)
    _, J1 = pieces(1.0)
    dJ = J1 - J0
    theta = float(-np.dot(J0, dJ) / np.dot(dJ, dJ))
    jv, jd = pieces(theta)
    jump = float(np.max(np.abs(jv)) + np.max(np.abs(jd)))
    if not np.isfinite(jump) or jump > match_tol:
        raise MatchFailure(f"interface jump {jump:.3e} exceeds {match_tol:g}")
    p = profile.decay_exponent
    theta_asym = profile.a1 * p / (2 * M * (lam * d) ** p)

    inner = r < d
    z = lam * r
    with np.errstate(divide="ignore"):
        G = gam - np.log(r) / (2 * math.pi)
    U_in = profile(z) + shift + c0 * (1 - theta) * (gam - gqq)
    U_out = Vd + shift + c0 * (1 - theta) * (G - gqq + math.log(d) / (2 * math.pi))
    U = np.where(inner, U_in, U_out)

    dV_over_r = _over_r(profile, z) * lam * lam  # lam V'(lam r) / r
    with np.errstate(divide="ignore", invalid="ignore"):
        sing = rho / (2 * math.pi * np.where(r > 0, r, 1.0)[..., None] ** 2)
    g_in = dV_over_r[..., None] * rho + c0 * (1 - theta) * ggam
    g_out = c0 * (1 - theta) * (ggam - sing)
    gradU = np.where(inner[..., None], g_in, g_out)
    gradU = np.moveaxis(gradU, -1, 0)
    const = c0 * (1 - theta) / grid.area
    lapU = np.where(inner, -lam**2 * profile.source(z) + const, const)

    return ApproxSolution(kind=kind, q=q, lam=float(lam), mu=float(mu), d=float(d),
                          theta=theta, theta_asymptotic=float(theta_asym),
                          c_lambda=float(c_lam), profile=profile, background=background,
                          U=U, gradU=gradU, lapU=lapU, r=r, rho=rho, interface_jump=jump)


# ---------------------------------------------------------------------------
# weighted norms

class WeightedNorm:
    """Weighted norms centred at ``q`` on the scale ``1/lam``.

    With ``z = lam (y - q)``, ``rho = (1+|z|)^{1+alpha/2}`` and
    ``rho_bar = 1/((1+|z|) ln(2+|z|)^{1+alpha/2})``::

        |f|_X^2 = lam^-2 int_{B_2d} (Lap f)^2 rho^2 + lam^2 int_{B_2d} f^2 rho_bar^2
                  + int_{outside B_d} (Lap f)^2 + f^2
        |f|_Y^2 = lam^-2 int_{B_2d} f^2 rho^2 + int_{outside B_d} f^2

    These are the scaled-variable integrals written in ``y``.
    """

    def __init__(self, grid: Grid, q, lam: float, d: float, alpha: float = 0.25):
        if not 0 < alpha < 0.5:
            raise ValueError("alpha must lie in (0, 1/2)")
        self.grid = grid
        self.q = tuple(float(v) for v in q)
        self.lam = float(lam)
        self.d = float(d)
        self.alpha = float(alpha)
        r = grid.lattice.distance(grid.points, np.array(self.q))
        z = self.lam * r
        self.near = r < 2 * d
        self.far = r >= d
        self.rho2 = self.rho(z) ** 2
        self.rho_bar2 = self.rho_bar(z) ** 2

    @classmethod
    def for_approx(cls, approx: ApproxSolution, alpha: float = 0.25) -> "WeightedNorm":
        key = ("_wn", alpha)
        cache = approx.__dict__.setdefault("_wn_cache", {})
        if key not in cache:
            cache[key] = cls(approx.grid, approx.q, approx.lam, approx.d, alpha)
        return cache[key]

    def rho(self, z):
        return (1 + np.asarray(z)) ** (1 + self.alpha / 2)

    def rho_bar(self, z):
        z = np.asarray(z)
        return 1.0 / ((1 + z) * np.log(2 + z) ** (1 + self.alpha / 2))

    def _int(self, f, mask):
        return self.grid.integrate(np.where(mask, f, 0.0))

    def X(self, f, lap=None) -> float:
        lap = self.grid.laplacian(f) if lap is None else lap
        lam = self.lam
        t1 = self._int(lap**2 * self.rho2, self.near) / lam**2
        t2 = lam**2 * self._int(f**2 * self.rho_bar2, self.near)
        t3 = self._int(lap**2 + f**2, self.far)
        return math.sqrt(t1 + t2 + t3)

    def Y(self, f) -> float:
        t1 = self._int(f**2 * self.rho2, self.near) / self.lam**2
        t2 = self._int(f**2, self.far)
        return math.sqrt(t1 + t2)


def weighted_norms(f, grid: Grid, q, lam: float, d: float, alpha: float = 0.25) -> dict:
    """``{"X_alpha": ..., "Y_alpha": ...}`` for a grid field ``f``."""
    wn = WeightedNorm(grid, q, lam, d, alpha)
    return {"X_alpha": wn.X(f), "Y_alpha": wn.Y(f)}


# ---------------------------------------------------------------------------
# residuals

def residuals(approx: ApproxSolution, phi=None, S=None, wn: WeightedNorm | None = None) -> dict:
    """Right-hand sides ``g1, g2`` of the correction system at ``(phi, S)``.

    For the regular kind::

        g1 = -Lap U - lam^2 E X (1 - h) + 4 pi M/|Omega| + lam^2 f(w) 1_{B_2d} phi
        g2 = -Lap{E (1+phi)} + mu^2 E (1 + phi - X) + lam mu E X (h - 1)

    with ``E = e^{U+u0}``, ``h = E (1+phi) + S``, ``X = e^{phi - lam h/mu}``.
    For the vortex kind ``E`` is replaced by ``e^{U+u0+phi}``, ``h = E + S``
    and the factor ``1 + phi`` disappears.  All Laplacians are collocation
    Laplacians.
    """
    g = approx.grid
    n = g.n
    phi = np.zeros((n, n)) if phi is None else phi
    S = np.zeros((n, n)) if S is None else S
    lam, mu = approx.lam, approx.mu
    P = approx.background.expu0
    lU = approx.lap_discrete
    if approx.kind == REGULAR:
        E = approx.E
        h = E * (1 + phi) + S
        a = phi - lam / mu * h
        X = np.exp(a)
        g1 = -lU - lam**2 * E * X * (1 - h) + approx.source + approx.potential * phi
        # 1 + phi - X computed without cancellation
        defect = lam / mu * h - (np.expm1(a) - a)
        g2 = -g.laplacian(E * (1 + phi)) + mu**2 * E * defect + lam * mu * E * X * (h - 1)
    else:
        E = np.exp(approx.U + phi) * P
        h = E + S
        Xt = E * np.exp(-lam / mu * h)
        g1 = -lU + approx.potential * phi + approx.source - lam**2 * Xt * (1 - h)
        g2 = -g.laplacian(E) - mu**2 * E * np.expm1(-lam / mu * h) + lam * mu * Xt * (h - 1)
    wn = wn or WeightedNorm.for_approx(approx)
    return {"g1": g1, "g2": g2, "g1_Y_alpha": wn.Y(g1), "g2_L2": g.l2(g2)}


# ---------------------------------------------------------------------------
# kernel elements and projection

@dataclass
class KernelElements:
    W: np.ndarray
    Z: np.ndarray
    gram: np.ndarray  # gram[i, j] = int W_i Z_j
    grid: Grid = field(repr=False)


def kernel_elements(approx: ApproxSolution) -> KernelElements:
    """Cut-off translation modes ``W_j = chi d_{q_j} w`` and ``Z_j = -Lap W_j + lam^2 e^w W_j``."""
    lam, d = approx.lam, approx.d
    prof = approx.profile
    r, rho = approx.r, approx.rho
    z = lam * r
    chi, dchi, ddchi = cutoff(r, d)
    a = _over_r(prof, z)  # V'(z)/z
    Vpp = prof.second_deriv(z)
    e = prof.density(z)
    fw = e * (1 - 2 * e)
    with np.errstate(divide="ignore", invalid="ignore"):
        rs = np.where(r > 0, r, 1.0)
    lap_chi = ddchi + np.where(r > 0, dchi / rs, 0.0)
    zhat = np.where(r[..., None] > 0, rho / rs[..., None], 0.0)
    W, Z = [], []
    for j in range(2):
        psi = -lam**2 * a * rho[..., j]  # -lam V'(lam r) rho_j / r
        lap_psi = -lam**2 * fw * psi
        # grad psi_i = -lam^2 [V'' zh_i zh_j + (V'/z)(delta_ij - zh_i zh_j)]
        grad_dot = 0.0
        for i in range(2):
            dij = 1.0 if i == j else 0.0
            gpsi = -lam**2 * (Vpp * zhat[..., i] * zhat[..., j]
                              + a * (dij - zhat[..., i] * zhat[..., j]))
            grad_dot = grad_dot + dchi * zhat[..., i] * gpsi
        Wj = chi * psi
        lapW = chi * lap_psi + 2 * grad_dot + psi * lap_chi
        W.append(Wj)
        Z.append(-lapW + lam**2 * e * Wj)
    W = np.array(W)
    Z = np.array(Z)
    g = approx.grid
    gram = np.array([[g.integrate(W[i] * Z[j]) for j in range(2)] for i in range(2)])
    return KernelElements(W=W, Z=Z, gram=gram, grid=g)


def project_Q(f, kernel: KernelElements, cond_max: float = 1e12):
    """``Q f = f - sum c_j Z_j`` with ``int W_i Q f = 0``.

    Returns ``(projected, c)``.
    """
    G = kernel.gram
    if not np.all(np.isfinite(G)) or np.linalg.cond(G) > cond_max:
        raise SingularGram("W-Z Gram matrix is singular")
    rhs = np.array([kernel.grid.integrate(kernel.W[i] * f) for i in range(2)])
    c = np.linalg.solve(G, rhs)
    return f - np.tensordot(c, kernel.Z, axes=1), c


# ---------------------------------------------------------------------------
# linear solves

def _l1_solve(approx: ApproxSolution, g1, kernel: KernelElements | None,
              rtol: float = 1e-13, maxiter: int = 2000, x0=None):
    """Solve ``L1 phi = g1 + sum c_j Z_j`` subject to ``int Z_j phi = 0``.

    ``L1 = Lap + lam^2 f(w) 1_{B_2d}`` is symmetric on the grid, so the
    bordered system ``[[L1, Z], [Z^T, 0]]`` is solved with MINRES under the
    positive preconditioner ``blockdiag((sigma - Lap)^-1, I)``.  Without a
    kernel the plain equation ``L1 phi = g1`` is solved.
    """
    g = approx.grid
    n = g.n
    N = n * n
    pot = approx.potential
    sigma = max(float(-np.mean(pot)), (2 * math.pi) ** 2 / g.area)
    nk = 0 if kernel is None else 2
    if nk:
        znorm = np.sqrt(np.sum(kernel.Z**2, axis=(1, 2)))
        Zh = kernel.Z / znorm[:, None, None]

    def op(x):
        phi = x[:N].reshape(n, n)
        out = np.empty(N + nk)
        r = g.laplacian(phi) + pot * phi
        if nk:
            r = r + np.tensordot(x[N:], Zh, axes=1)
            out[N:] = np.sum(Zh * phi, axis=(1, 2))
        out[:N] = r.ravel()
        return out

    def pre(y):
        x = y.copy()
        x[:N] = -g.shifted_solve(sigma, y[:N].reshape(n, n)).ravel()
        return x

    size = N + nk
    A = LinearOperator((size, size), dtype=float, matvec=op)
    M = LinearOperator((size, size), dtype=float, matvec=pre)
    b = np.zeros(size)
    b[:N] = g1.ravel()
    start = None
    if x0 is not None:
        start = np.zeros(size)
        start[:N] = x0[0].ravel()
        if nk:
            start[N:] = -x0[1] * znorm
    counter = [0]

    def count(_):
        counter[0] += 1

    x, info = minres(A, b, x0=start, M=M, rtol=rtol, maxiter=maxiter, callback=count)
    res = np.linalg.norm(op(x) - b) / max(np.linalg.norm(b), 1e-300)
    if res > 1e-8:
        raise LinearSolveFailure(f"projected linear solve stopped at relative residual {res:.2e}")
    log.debug("projected solve: %d iterations, residual %.2e", counter[0], res)
    phi = x[:N].reshape(n, n)
    # L1 phi - g1 = -sum x_j Zh_j = sum c_j Z_j
    c = -x[N:] / znorm if nk else np.zeros(2)
    return phi, c, res


# ---------------------------------------------------------------------------
# fixed point

@dataclass
class CorrectionPair:
    phi: np.ndarray
    S: np.ndarray
    norms: dict = field(default_factory=dict)
    alpha: float = 0.25
    c: np.ndarray = field(default_factory=lambda: np.zeros(2))

    @classmethod
    def zero(cls, approx: ApproxSolution, alpha: float = 0.25) -> "CorrectionPair":
        n = approx.grid.n
        return cls(np.zeros((n, n)), np.zeros((n, n)), alpha=alpha)


def _pair_norms(approx, phi, S, wn):
    g = approx.grid
    return {
        "phi_sup": float(np.max(np.abs(phi))),
        "phi_X_alpha": wn.X(phi),
        "S_L2": g.l2(S),
        "S_sup": float(np.max(np.abs(S))),
        "S_W22": g.w22(S),
        "total": approx.pair_norm(phi, S, wn),
    }


def fixed_point_step(approx: ApproxSolution, pair: CorrectionPair,
                     kernel: KernelElements | None = None, check_ball: bool = False,
                     rtol: float = 1e-12) -> CorrectionPair:
    """One application of the correction map ``Psi``.

    ``S_hat`` solves ``Lap S - mu^2 S = g2(phi, S)``; the new ``phi`` solves the
    linearized bubble equation with right-hand side ``g1(phi, S_hat)``,
    projected off the translation modes for the regular kind.
    """
    wn = WeightedNorm.for_approx(approx, pair.alpha)
    g = approx.grid
    if approx.kind == REGULAR and kernel is None:
        kernel = kernel_elements(approx)
    r0 = residuals(approx, pair.phi, pair.S, wn)
    S_hat = g.helmholtz_solve(approx.mu, r0["g2"])
    r1 = residuals(approx, pair.phi, S_hat, wn)
    phi, c, res = _l1_solve(approx, r1["g1"], kernel if approx.kind == REGULAR else None,
                            rtol=rtol, x0=(pair.phi, pair.c))
    norms = _pair_norms(approx, phi, S_hat, wn)
    norms["linear_residual"] = res
    if check_ball and norms["total"] > approx.ball_radius():
        raise BallExit(f"image norm {norms['total']:.3e} exceeds ball radius "
                       f"{approx.ball_radius():.3e}", norms)
    return CorrectionPair(phi, S_hat, norms, pair.alpha, c)


@dataclass
class FixedPointResult:
    pair: CorrectionPair
    converged: bool
    iterations: int
    changes: list
    contraction: float


def fixed_point(approx: ApproxSolution, tol: float = 1e-10, max_iter: int = 100,
                alpha: float = 0.25, init: CorrectionPair | None = None,
                check_ball: bool = False) -> FixedPointResult:
    """Iterate ``Psi`` from zero until the step change in the pair norm is below ``tol``.

    ``contraction`` is the largest ratio of successive step changes observed
    once the iteration has left its first step.
    """
    kernel = kernel_elements(approx) if approx.kind == REGULAR else None
    pair = init or CorrectionPair.zero(approx, alpha)
    wn = WeightedNorm.for_approx(approx, alpha)
    changes = []
    for it in range(1, max_iter + 1):
        new = fixed_point_step(approx, pair, kernel, check_ball=check_ball)
        dn = approx.pair_norm(new.phi - pair.phi, new.S - pair.S, wn)
        changes.append(dn)
        log.debug("fixed point iter %d change %.3e", it, dn)
        pair = new
        if dn < tol:
            break
    ratios = [b / a for a, b in zip(changes, changes[1:]) if a > 0]
    contraction = max(ratios[:3]) if ratios else 0.0
    return FixedPointResult(pair, changes[-1] < tol, len(changes), changes, contraction)


def contraction_factor(approx: ApproxSolution, x: CorrectionPair, y: CorrectionPair) -> float:
    """``|Psi(x) - Psi(y)| / |x - y|`` in the pair norm."""
    kernel = kernel_elements(approx) if approx.kind == REGULAR else None
    wn = WeightedNorm.for_approx(approx, x.alpha)
    px = fixed_point_step(approx, x, kernel)
    py = fixed_point_step(approx, y, kernel)
    num = approx.pair_norm(px.phi - py.phi, px.S - py.S, wn)
    den = approx.pair_norm(x.phi - y.phi, x.S - y.S, wn)
    return num / den


def reduced_gradient(approx: ApproxSolution, pair: CorrectionPair,
                     kernel: KernelElements | None = None) -> dict:
    """Reduced equation ``int (L1 phi - g1(phi, S)) W_j`` and its leading-order model.

    Returns ``{"gradient", "model", "a0", "a0_quadrature"}`` where
    ``model = a0 grad u0(q)`` with ``a0 = 2 pi beta``.
    """
    if approx.kind != REGULAR:
        raise NotApplicable("the reduced equation is defined for regular-point bubbles")
    kernel = kernel or kernel_elements(approx)
    g = approx.grid
    r = residuals(approx, pair.phi, pair.S)
    L1 = g.laplacian(pair.phi) + approx.potential * pair.phi - r["g1"]
    grad = np.array([g.integrate(L1 * kernel.W[j]) for j in range(2)])
    a0 = 2 * math.pi * approx.profile.beta
    rep = check_integral_identities(approx.profile)
    a0_quad = rep.int_ew - rep.int_e2w
    model = a0 * u0_grad(approx.grid.lattice, approx.background.vortices, np.array(approx.q))
    return {"gradient": grad, "model": model, "a0": a0, "a0_quadrature": float(a0_quad)}


@dataclass
class ReducedSolution:
    """Bubble centre ``q_lam`` where the kernel coefficients vanish."""

    q: tuple
    approx: ApproxSolution
    result: FixedPointResult
    history: list  # (q, |c|) per Newton step
    converged: bool
    initial: tuple = ()  # (approx, result) at the starting centre


def solve_reduced(lam: float, mu: float, q0, d: float, profile: RadialProfile,
                  background: Background, tol: float = 1e-12, max_iter: int = 6,
                  step: float = 1e-4, fp_tol: float = 1e-10, alpha: float = 0.25) -> ReducedSolution:
    """Move the regular bubble centre until ``c(q) = 0``.

    The fixed point at ``q`` solves the projected problem, leaving
    ``sum c_j(q) Z_j``; a Newton iteration on ``q`` with a forward-difference
    Jacobian (step in lattice coordinates) removes it, which turns the
    reassembled state into a solution of the full discrete system.
    Stops once ``|c| < tol``.
    """
    def solve(q):
        A = build_approx(REGULAR, lam, mu, tuple(q), d, profile, background)
        fp = fixed_point(A, tol=fp_tol, alpha=alpha)
        if not fp.converged:
            raise NoConvergence(f"fixed point did not converge at q={tuple(q)}")
        return A, fp, fp.pair.c.copy()

    q = np.asarray(q0, dtype=float) % 1.0
    A, fp, c = solve(q)
    initial = (A, fp)
    history = [(tuple(float(v) for v in q), float(np.hypot(*c)))]
    for _ in range(max_iter):
        if np.hypot(*c) < tol:
            break
        J = np.empty((2, 2))
        for j in range(2):
            e = np.zeros(2)
            e[j] = step
            J[:, j] = (solve(q + e)[2] - c) / step
        try:
            dq = np.linalg.solve(J, -c)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence("singular Jacobian of the reduced equation") from exc
        q = (q + dq) % 1.0
        A, fp, c = solve(q)
        history.append((tuple(float(v) for v in q), float(np.hypot(*c))))
        log.debug("reduced equation |c| = %.3e", history[-1][1])
    ok = bool(np.hypot(*c) < tol)
    return ReducedSolution(tuple(float(v) for v in q), A, fp, history, ok, initial)


def reassemble(approx: ApproxSolution, pair: CorrectionPair) -> McsState:
    """Recover ``(v, N)`` from ``U + phi`` and the correction pair.

    For the regular kind the state solves the discrete system up to the
    kernel term ``sum c_j Z_j``; see :func:`polish`.
    """
    lam, mu = approx.lam, approx.mu
    if approx.kind == REGULAR:
        h = approx.E * (1 + pair.phi) + pair.S
    else:
        h = np.exp(approx.U + pair.phi) * approx.background.expu0 + pair.S
    v = approx.U + pair.phi - lam / mu * h
    info = {"kind": approx.kind, "q": approx.q, "theta": approx.theta}
    return McsState(v=v, N=lam * h, lam=lam, mu=mu, background=approx.background, info=info)


def polish(state: McsState, newton_tol: float = 1e-8, max_iters: int = 30) -> McsState:
    """Newton-correct a reassembled state to a solution of the discrete system.

    The remaining kernel term moves the bubble by ``O(|c|)``; the polished
    state keeps the construction metadata in ``info``.
    """
    params = SolverParams(newton_tol=newton_tol, max_iters=max_iters)
    out = mcs_newton(state.lam, state.mu, state.background, (state.v, state.N), params)
    out.info.update({k: v for k, v in state.info.items() if k not in out.info})
    out.info["polish_shift"] = float(np.max(np.abs(out.v - state.v)))
    return out
