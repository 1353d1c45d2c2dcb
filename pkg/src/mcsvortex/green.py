"""Doubly periodic Green's function, its regular part and the vortex background.

``G`` solves ``-Delta G(., y) = delta_y - 1/|Omega|`` with zero cell mean.  It is
evaluated by a Gaussian (Ewald) split::

    G(x) = sum_R E1(eta^2 |x+R|^2) / 4pi
           + (1/|Omega|) sum_{k != 0} exp(-|k|^2 / 4 eta^2) cos(k.x) / |k|^2
           - 1 / (4 eta^2 |Omega|),

with ``eta = 6 / sqrt|Omega|``.  For the nearest image the logarithm is
split off analytically, ``E1(u) = -gamma_E - ln u + Ein(u)``, which gives
the regular part ``gamma = G + ln|x-y| / 2pi`` without cancellation.

Points are given in lattice coordinates ``t`` (``x = t1 a1 + t2 a2``);
derivatives are taken with respect to physical coordinates.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.special import exp1

from .errors import NoConvergence, PoleCollision

__all__ = [
    "TorusLattice", "VortexSet", "GreenTable", "CriticalPoint", "green_eval",
    "gamma_eval", "green_grad", "gamma_grad", "gamma_hess", "green_hess",
    "u0_eval", "u0_grad", "u0_hess", "critical_points", "ein",
]

EULER_GAMMA = 0.5772156649015329
_CUT = 40.0  # Gaussian screening exponent at which terms are dropped


@dataclass(frozen=True)
class TorusLattice:
    """Periodic cell spanned by ``a1`` and ``a2``."""

    a1: tuple[float, float] = (1.0, 0.0)
    a2: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "a1", tuple(float(v) for v in self.a1))
        object.__setattr__(self, "a2", tuple(float(v) for v in self.a2))
        if self.area <= 0:
            raise ValueError("lattice vectors must be linearly independent")

    @classmethod
    def square(cls, side: float = 1.0) -> "TorusLattice":
        return cls((side, 0.0), (0.0, side))

    @cached_property
    def matrix(self) -> np.ndarray:
        """Columns are ``a1`` and ``a2``."""
        return np.array([self.a1, self.a2]).T

    @cached_property
    def area(self) -> float:
        return abs(self.a1[0] * self.a2[1] - self.a1[1] * self.a2[0])

    @cached_property
    def reciprocal(self) -> np.ndarray:
        """Columns are ``b_j`` with ``a_i . b_j = 2 pi delta_ij``."""
        return 2 * math.pi * np.linalg.inv(self.matrix).T

    @cached_property
    def injectivity_radius(self) -> float:
        """Half the length of the shortest nonzero lattice vector."""
        A = self.matrix
        best = math.inf
        for i in range(-3, 4):
            for j in range(-3, 4):
                if i or j:
                    best = min(best, float(np.hypot(*(A @ (i, j)))))
        return 0.5 * best

    def to_physical(self, t) -> np.ndarray:
        return np.asarray(t, dtype=float) @ self.matrix.T

    def to_lattice(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ np.linalg.inv(self.matrix).T

    def displacement(self, t, s) -> np.ndarray:
        """Shortest physical vector from ``s`` to ``t`` modulo the lattice."""
        d = np.asarray(t, dtype=float) - np.asarray(s, dtype=float)
        d = d - np.round(d)
        base = self.to_physical(d)
        best = base
        best_r2 = np.sum(base**2, axis=-1)
        A = self.matrix
        for i in (-1, 0, 1):
            for j in (-1, 0, 1):
                if i == 0 and j == 0:
                    continue
                cand = base + A @ (i, j)
                r2 = np.sum(cand**2, axis=-1)
                better = r2 < best_r2
                best = np.where(better[..., None], cand, best)
                best_r2 = np.where(better, r2, best_r2)
        return best

    def distance(self, t, s) -> np.ndarray:
        return np.hypot(*np.moveaxis(self.displacement(t, s), -1, 0))

    def key(self) -> str:
        return "{:.17g},{:.17g},{:.17g},{:.17g}".format(*self.a1, *self.a2)

    # Ewald bookkeeping ----------------------------------------------------
    @cached_property
    def eta(self) -> float:
        return 6.0 / math.sqrt(self.area)

    @cached_property
    def _images(self) -> np.ndarray:
        """Real-space images that can carry a non-negligible Gaussian tail."""
        r_cut = math.sqrt(_CUT) / self.eta
        A = self.matrix
        # circumradius of the reduced cell bounds the reduced displacement
        circ = 0.5 * (np.hypot(*(A @ (1, 1))) + np.hypot(*(A @ (1, -1))))
        reach = r_cut + circ
        B = self.reciprocal
        ni = int(math.ceil(reach * np.hypot(*B[:, 0]) / (2 * math.pi)))
        nj = int(math.ceil(reach * np.hypot(*B[:, 1]) / (2 * math.pi)))
        out = []
        for i in range(-ni, ni + 1):
            for j in range(-nj, nj + 1):
                if i == 0 and j == 0:
                    continue
                R = A @ (i, j)
                if np.hypot(*R) <= reach:
                    out.append(R)
        return np.array(out)

    @cached_property
    def _modes(self):
        """Reciprocal vectors and screened coefficients of the smooth part."""
        k_cut = 2 * self.eta * math.sqrt(_CUT)
        A = self.matrix
        B = self.reciprocal
        ni = int(math.ceil(k_cut * np.hypot(*A[:, 0]) / (2 * math.pi)))
        nj = int(math.ceil(k_cut * np.hypot(*A[:, 1]) / (2 * math.pi)))
        n = np.array([(i, j) for i in range(-ni, ni + 1) for j in range(-nj, nj + 1)
                      if (i or j)], dtype=float)
        k = n @ B.T
        k2 = np.sum(k**2, axis=1)
        keep = k2 <= k_cut**2
        n, k, k2 = n[keep], k[keep], k2[keep]
        c = np.exp(-k2 / (4 * self.eta**2)) / (k2 * self.area)
        return n.astype(int), k, c


@dataclass(frozen=True)
class VortexSet:
    """Vortex points (lattice coordinates) with positive multiplicities."""

    points: tuple
    multiplicities: tuple

    def __post_init__(self):
        pts = tuple(tuple(float(v) % 1.0 for v in p) for p in self.points)
        mult = tuple(int(m) for m in self.multiplicities)
        if len(pts) != len(mult) or not pts:
            raise ValueError("need one multiplicity per point and at least one point")
        if any(m < 1 for m in mult):
            raise ValueError("multiplicities must be positive integers")
        arr = np.array(pts)
        for i in range(len(pts)):
            for j in range(i):
                d = arr[i] - arr[j]
                d -= np.round(d)
                if np.max(np.abs(d)) < 1e-12:
                    raise ValueError("vortex points must be distinct modulo the lattice")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "multiplicities", mult)

    @property
    def total(self) -> int:
        return sum(self.multiplicities)

    def __len__(self):
        return len(self.points)

    def as_array(self) -> np.ndarray:
        return np.array(self.points, dtype=float)


# ---------------------------------------------------------------------------
# scalar kernels

def ein(x):
    """Entire exponential integral ``Ein(x) = int_0^x (1 - e^-s)/s ds``."""
    x = np.asarray(x, dtype=float)
    out = np.empty_like(x)
    small = x < 1.0
    xs = x[small]
    term = xs.copy()
    acc = xs.copy()
    for k in range(2, 30):
        term = -term * xs / k
        acc += term / k
    out[small] = acc
    xl = x[~small]
    out[~small] = exp1(xl) + np.log(xl) + EULER_GAMMA
    return out


def _h(u):
    """``(1 - e^-u)/u`` and its derivative, stable at small ``u``."""
    u = np.asarray(u, dtype=float)
    h = np.empty_like(u)
    dh = np.empty_like(u)
    small = u < 1e-3
    us = u[small]
    h[small] = 1 - us / 2 + us**2 / 6 - us**3 / 24
    dh[small] = -0.5 + us / 3 - us**2 / 8
    ul = u[~small]
    em = -np.expm1(-ul)
    h[~small] = em / ul
    dh[~small] = (np.exp(-ul) * (1 + ul) - 1) / ul**2
    return h, dh


def _parts(lat: TorusLattice, rho: np.ndarray, order: int):
    """Regular part and derivatives at nearest-image displacement ``rho``.

    Returns ``(gamma, grad, hess)`` up to ``order``; the full Green's function
    is ``gamma - ln|rho| / 2pi``.
    """
    eta = lat.eta
    rho = np.asarray(rho, dtype=float)
    r2 = np.sum(rho**2, axis=-1)
    u = eta**2 * r2
    g = (-EULER_GAMMA - 2 * math.log(eta) + ein(u)) / (4 * math.pi) - 1 / (4 * eta**2 * lat.area)
    grad = hess = None
    if order >= 1:
        h, dh = _h(u)
        grad = (eta**2 / (2 * math.pi)) * h[..., None] * rho
    if order >= 2:
        eye = np.eye(2)
        hess = (eta**2 / (2 * math.pi)) * (h[..., None, None] * eye
                                           + 2 * eta**2 * dh[..., None, None]
                                           * rho[..., :, None] * rho[..., None, :])
    # other real-space images
    for R in lat._images:
        p = rho + R
        q2 = np.sum(p**2, axis=-1)
        v = eta**2 * q2
        mask = v < _CUT + 10
        if not np.any(mask):
            continue
        e1 = np.zeros_like(v)
        e1[mask] = exp1(v[mask])
        g = g + e1 / (4 * math.pi)
        if order >= 1:
            ex = np.where(mask, np.exp(-np.where(mask, v, 0.0)), 0.0)
            inv = 1.0 / q2
            grad = grad - (ex * inv)[..., None] * p / (2 * math.pi)
            if order >= 2:
                outer = p[..., :, None] * p[..., None, :]
                hess = hess - (1 / (2 * math.pi)) * (
                    (ex * inv)[..., None, None] * np.eye(2)
                    - (2 * ex * inv * (inv + eta**2))[..., None, None] * outer)
    # smooth spectral part
    _, k, c = lat._modes
    phase = rho @ k.T
    g = g + np.cos(phase) @ c
    if order >= 1:
        grad = grad - (np.sin(phase) * c) @ k
    if order >= 2:
        hess = hess - np.einsum("...m,mi,mj->...ij", np.cos(phase) * c, k, k)
    return g, grad, hess


def _rho(lat, x, y):
    rho = lat.displacement(x, y)
    r = np.hypot(rho[..., 0], rho[..., 1])
    return rho, r


def green_eval(lat: TorusLattice, x, y):
    """Green's function ``G(x, y)`` for lattice-coordinate points."""
    rho, r = _rho(lat, x, y)
    if np.any(r < 1e-12):
        raise PoleCollision("x coincides with y modulo the lattice")
    g, _, _ = _parts(lat, rho, 0)
    return g - np.log(r) / (2 * math.pi)


def gamma_eval(lat: TorusLattice, x, y):
    """Regular part ``gamma(x, y) = G(x, y) + ln|x - y| / 2pi`` (nearest image)."""
    rho, _ = _rho(lat, x, y)
    return _parts(lat, rho, 0)[0]


def gamma_grad(lat, x, y):
    """Physical gradient of ``gamma(., y)`` at ``x``."""
    rho, _ = _rho(lat, x, y)
    return _parts(lat, rho, 1)[1]


def gamma_hess(lat, x, y):
    rho, _ = _rho(lat, x, y)
    return _parts(lat, rho, 2)[2]


def green_grad(lat, x, y):
    rho, r = _rho(lat, x, y)
    if np.any(r < 1e-12):
        raise PoleCollision("x coincides with y modulo the lattice")
    return _parts(lat, rho, 1)[1] - rho / (2 * math.pi * r[..., None] ** 2)


def green_hess(lat, x, y):
    rho, r = _rho(lat, x, y)
    if np.any(r < 1e-12):
        raise PoleCollision("x coincides with y modulo the lattice")
    r2 = r[..., None, None] ** 2
    sing = (np.eye(2) / r2 - 2 * rho[..., :, None] * rho[..., None, :] / r2**2) / (2 * math.pi)
    return _parts(lat, rho, 2)[2] - sing


def u0_eval(lat: TorusLattice, vs: VortexSet, x):
    """Singular background ``u0 = -4 pi sum m_i G(x, p_i)``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for p, m in zip(vs.points, vs.multiplicities):
        out -= 4 * math.pi * m * green_eval(lat, x, p)
    return out


def u0_grad(lat, vs, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape)
    for p, m in zip(vs.points, vs.multiplicities):
        out -= 4 * math.pi * m * green_grad(lat, x, p)
    return out


def u0_hess(lat, vs, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1] + (2, 2))
    for p, m in zip(vs.points, vs.multiplicities):
        out -= 4 * math.pi * m * green_hess(lat, x, p)
    return out


def u0_smooth(lat, vs, x):
    """``u0 - sum 2 m_i ln|x - p_i|`` (nearest images); finite at the poles."""
    x = np.asarray(x, dtype=float)
    out = np.zeros(x.shape[:-1])
    for p, m in zip(vs.points, vs.multiplicities):
        out -= 4 * math.pi * m * gamma_eval(lat, x, p)
    return out


# ---------------------------------------------------------------------------
# grids

@dataclass
class GreenTable:
    """Grid samples of ``G(., y0)`` and ``gamma(., y0)`` on an ``n x n`` grid.

    The smooth spectral part is summed with one inverse FFT; the Gaussian
    real-space part is evaluated pointwise.  Construction is deterministic
    and the table is treated as read-only afterwards.
    """

    lattice: TorusLattice
    n: int
    pole: tuple[float, float] = (0.0, 0.0)
    G: np.ndarray = field(init=False, repr=False)
    gamma: np.ndarray = field(init=False, repr=False)
    distance: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.pole = tuple(float(v) for v in self.pole)
        self.gamma, self.distance = green_grid(self.lattice, self.n, self.pole)
        with np.errstate(divide="ignore"):
            self.G = self.gamma - np.log(self.distance) / (2 * math.pi)

    def coefficients(self) -> np.ndarray:
        """Exact Fourier coefficients of ``G(., pole)`` on the grid's modes."""
        n = self.n
        k = np.fft.fftfreq(n, 1.0 / n)
        K1, K2 = np.meshgrid(k, k, indexing="ij")
        B = self.lattice.reciprocal
        kx = B[0, 0] * K1 + B[0, 1] * K2
        ky = B[1, 0] * K1 + B[1, 1] * K2
        k2 = kx**2 + ky**2
        k2[0, 0] = 1.0
        phase = np.exp(-2j * math.pi * (K1 * self.pole[0] + K2 * self.pole[1]))
        c = phase / (k2 * self.lattice.area)
        c[0, 0] = 0.0
        return c


def grid_points(n: int) -> np.ndarray:
    """Lattice coordinates of the ``n x n`` grid, shape ``(n, n, 2)``."""
    t = np.arange(n) / n
    T1, T2 = np.meshgrid(t, t, indexing="ij")
    return np.stack([T1, T2], axis=-1)


def green_grid(lat: TorusLattice, n: int, pole, order: int = 0):
    """Regular part of ``G(., pole)`` on the grid and the nearest-image distance.

    With ``order >= 1`` also returns the physical gradient of the regular part.
    """
    pts = grid_points(n)
    rho = lat.displacement(pts, np.asarray(pole, dtype=float))
    r = np.hypot(rho[..., 0], rho[..., 1])
    eta = lat.eta
    u = eta**2 * r**2
    g = (-EULER_GAMMA - 2 * math.log(eta) + ein(u)) / (4 * math.pi) - 1 / (4 * eta**2 * lat.area)
    grad = None
    if order >= 1:
        h, _ = _h(u)
        grad = (eta**2 / (2 * math.pi)) * h[..., None] * rho
    for R in lat._images:
        p = rho + R
        q2 = np.sum(p**2, axis=-1)
        v = eta**2 * q2
        mask = v < _CUT + 10
        if not np.any(mask):
            continue
        g[mask] += exp1(v[mask]) / (4 * math.pi)
        if order >= 1:
            fac = np.exp(-v[mask]) / q2[mask] / (2 * math.pi)
            grad[mask] -= fac[:, None] * p[mask]
    nvec, k, c = lat._modes
    if np.max(np.abs(nvec)) >= n // 2:
        raise ValueError(f"grid n={n} too coarse for the Ewald smooth part")
    C = np.zeros((n, n), dtype=complex)
    ph = np.exp(-2j * math.pi * (nvec @ np.asarray(pole, dtype=float)))
    idx = (nvec[:, 0] % n, nvec[:, 1] % n)
    np.add.at(C, idx, c * ph)
    g += np.real(np.fft.ifft2(C)) * n * n
    if order >= 1:
        for a in range(2):
            Ca = np.zeros((n, n), dtype=complex)
            np.add.at(Ca, idx, 1j * k[:, a] * c * ph)
            grad[..., a] += np.real(np.fft.ifft2(Ca)) * n * n
        return g, r, grad
    return g, r


# ---------------------------------------------------------------------------
# critical points of u0

@dataclass(frozen=True)
class CriticalPoint:
    q: tuple[float, float]
    hessian: np.ndarray
    nondegenerate: bool
    index: int
    value: float


def critical_points(lat: TorusLattice, vs: VortexSet, seeds=None, n_seed: int = 8,
                    exclusion: float = 1e-2, tol: float = 1e-12, max_iter: int = 60,
                    dedup: float = 1e-6):
    """Critical points of ``u0`` by Newton iteration from a seed grid.

    Returns
    -------
    found : list of CriticalPoint
    failed : list of seeds whose iteration did not converge
    """
    if seeds is None:
        t = (np.arange(n_seed) + 0.5) / n_seed
        seeds = np.array([(a, b) for a in t for b in t])
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    P = vs.as_array()
    Ainv = np.linalg.inv(lat.matrix)
    found, failed = [], []
    for seed in seeds:
        if np.min(lat.distance(seed[None, :], P)) < exclusion * math.sqrt(lat.area):
            continue
        t = seed.copy()
        ok = False
        for _ in range(max_iter):
            if np.min(lat.distance(t[None, :], P)) < exclusion * math.sqrt(lat.area):
                break
            g = u0_grad(lat, vs, t)
            if np.hypot(*g) < tol:
                ok = True
                break
            H = u0_hess(lat, vs, t)
            try:
                dx = -np.linalg.solve(H, g)
            except np.linalg.LinAlgError:
                break
            lim = 0.1 * math.sqrt(lat.area)
            nrm = np.hypot(*dx)
            if nrm > lim:
                dx *= lim / nrm
            t = (t + Ainv @ dx) % 1.0
        if not ok:
            failed.append(tuple(seed))
            continue
        t = np.where(np.abs(t - 1.0) < 1e-12, 0.0, t)
        if any(np.max(np.abs((np.array(c.q) - t + 0.5) % 1.0 - 0.5)) < dedup for c in found):
            continue
        H = u0_hess(lat, vs, t)
        ev = np.linalg.eigvalsh(H)
        found.append(CriticalPoint(q=(float(t[0]), float(t[1])), hessian=H,
                                   nondegenerate=bool(abs(np.linalg.det(H)) > 1e-8),
                                   index=int(np.sum(ev < 0)),
                                   value=float(u0_eval(lat, vs, t))))
    found.sort(key=lambda c: (round(c.q[0], 9), round(c.q[1], 9)))
    if not found and failed:
        raise NoConvergence("no seed converged to a critical point")
    return found, failed
