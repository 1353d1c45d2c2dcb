"""Fourier collocation on a periodic cell.

Fields are real ``(n, n)`` arrays sampled at lattice coordinates
``t = (i/n, j/n)``; a :class:`Grid` supplies transforms, derivatives and
constant-coefficient solves.  Derivatives are with respect to physical
coordinates.
"""
from __future__ import annotations

import math
from functools import cached_property

import numpy as np

from .errors import NonZeroMean
from .green import TorusLattice, grid_points

__all__ = ["Grid"]


class Grid:
    """Uniform ``n x n`` collocation grid on a torus.

    Parameters
    ----------
    lattice : TorusLattice
    n : int
        Points per lattice direction; a power of two >= 16.
    """

    def __init__(self, lattice: TorusLattice, n: int):
        if n < 16 or n & (n - 1):
            raise ValueError("grid size must be a power of two >= 16")
        self.lattice = lattice
        self.n = int(n)

    def __repr__(self):
        return f"Grid(n={self.n}, a1={self.lattice.a1}, a2={self.lattice.a2})"

    def __eq__(self, other):
        return isinstance(other, Grid) and other.n == self.n and other.lattice == self.lattice

    def __hash__(self):
        return hash((self.n, self.lattice))

    @property
    def area(self) -> float:
        return self.lattice.area

    @property
    def spacing(self) -> float:
        """Largest physical grid step."""
        A = self.lattice.matrix
        return max(np.hypot(*A[:, 0]), np.hypot(*A[:, 1])) / self.n

    @cached_property
    def points(self) -> np.ndarray:
        return grid_points(self.n)

    @cached_property
    def physical_points(self) -> np.ndarray:
        return self.lattice.to_physical(self.points)

    @cached_property
    def _modes(self):
        n = self.n
        n1 = np.fft.fftfreq(n, 1.0 / n)[:, None] * np.ones((1, n // 2 + 1))
        n2 = np.fft.rfftfreq(n, 1.0 / n)[None, :] * np.ones((n, 1))
        B = self.lattice.reciprocal
        kx = B[0, 0] * n1 + B[0, 1] * n2
        ky = B[1, 0] * n1 + B[1, 1] * n2
        # odd derivatives drop the unpaired Nyquist modes
        nyq = (np.abs(n1) == n // 2) | (np.abs(n2) == n // 2)
        kx_d = np.where(nyq, 0.0, kx)
        ky_d = np.where(nyq, 0.0, ky)
        return kx, ky, kx**2 + ky**2, kx_d, ky_d

    @property
    def k2(self) -> np.ndarray:
        return self._modes[2]

    # transforms -------------------------------------------------------
    def fft(self, f):
        return np.fft.rfft2(f)

    def ifft(self, fh):
        return np.fft.irfft2(fh, s=(self.n, self.n))

    def integrate(self, f) -> float:
        return float(self.area * np.mean(f))

    def mean(self, f) -> float:
        return float(np.mean(f))

    # derivatives ------------------------------------------------------
    def laplacian(self, f):
        return self.ifft(-self.k2 * self.fft(f))

    def gradient(self, f):
        fh = self.fft(f)
        _, _, _, kx, ky = self._modes
        return self.ifft(1j * kx * fh), self.ifft(1j * ky * fh)

    def hessian(self, f):
        """Returns ``(f_xx, f_xy, f_yy)``."""
        fh = self.fft(f)
        _, _, _, kx, ky = self._modes
        return (self.ifft(-kx * kx * fh), self.ifft(-kx * ky * fh), self.ifft(-ky * ky * fh))

    def apply_symbol(self, f, symbol):
        return self.ifft(symbol * self.fft(f))

    # solves -----------------------------------------------------------
    def poisson_solve(self, f, tol: float = 1e-10):
        """Mean-zero ``phi`` with ``Delta phi = f``."""
        m = np.mean(f)
        scale = max(1.0, float(np.max(np.abs(f))))
        if abs(m) > tol * scale:
            raise NonZeroMean(f"right-hand side mean {m:.3g}")
        fh = self.fft(f)
        k2 = self.k2.copy()
        k2[0, 0] = 1.0
        ph = -fh / k2
        ph[0, 0] = 0.0
        return self.ifft(ph)

    def shifted_solve(self, sigma: float, f):
        """Solve ``(Delta - sigma) phi = f`` for ``sigma > 0``."""
        return self.ifft(-self.fft(f) / (self.k2 + sigma))

    def helmholtz_solve(self, mu: float, g, report: bool = False):
        """Solve ``Delta S - mu^2 S = g``.

        With ``report=True`` also returns the ratios ``mu^2 |S|_2/|g|_2``,
        ``mu |S|_inf/|g|_inf`` and ``mu^2 |S|_inf/|g|_inf``.
        """
        S = self.shifted_solve(mu * mu, g)
        if not report:
            return S
        g2 = math.sqrt(self.integrate(g * g))
        gi = float(np.max(np.abs(g)))
        s2 = math.sqrt(self.integrate(S * S))
        si = float(np.max(np.abs(S)))
        ratios = {
            "L2": mu * mu * s2 / g2 if g2 > 0 else 0.0,
            "sup": mu * si / gi if gi > 0 else 0.0,
            "sup_mu2": mu * mu * si / gi if gi > 0 else 0.0,
        }
        return S, ratios

    # norms ------------------------------------------------------------
    def l2(self, f) -> float:
        return math.sqrt(self.integrate(f * f))

    def w22(self, f) -> float:
        """Sobolev ``W^{2,2}`` norm from the spectral derivatives."""
        fx, fy = self.gradient(f)
        fxx, fxy, fyy = self.hessian(f)
        return math.sqrt(self.integrate(f * f + fx * fx + fy * fy + fxx * fxx
                                        + 2 * fxy * fxy + fyy * fyy))

    # resampling -------------------------------------------------------
    def resample(self, f, n_new: int):
        """Trigonometric interpolation onto an ``n_new`` grid."""
        n = self.n
        fh = np.fft.fft2(f)
        out = np.zeros((n_new, n_new), dtype=complex)
        h = min(n, n_new) // 2
        for a, sa in ((slice(0, h), slice(0, h)), (slice(-h, None), slice(-h, None))):
            for b, sb in ((slice(0, h), slice(0, h)), (slice(-h, None), slice(-h, None))):
                out[sa, sb] = fh[a, b]
        return np.real(np.fft.ifft2(out)) * (n_new / n) ** 2

    def interpolate(self, f, t, chunk: int = 4096):
        """Exact trigonometric interpolant of ``f`` at lattice points ``t``."""
        t = np.asarray(t, dtype=float)
        shape = t.shape[:-1]
        t = t.reshape(-1, 2)
        n = self.n
        fh = np.fft.fft2(f) / (n * n)
        k = np.fft.fftfreq(n, 1.0 / n)
        # symmetrize the Nyquist row/column so the interpolant is real
        kk = k.copy()
        kk[n // 2] = 0.0
        wt = np.ones(n)
        wt[n // 2] = 0.0
        fh = fh * wt[:, None] * wt[None, :]
        out = np.empty(len(t))
        for s in range(0, len(t), chunk):
            tt = t[s:s + chunk]
            E1 = np.exp(2j * math.pi * tt[:, 0:1] * kk[None, :])
            E2 = np.exp(2j * math.pi * tt[:, 1:2] * kk[None, :])
            out[s:s + chunk] = np.real(np.sum((E1 @ fh) * E2, axis=1))
        return out.reshape(shape)
