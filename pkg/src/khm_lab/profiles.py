"""Smooth compactly supported radial profiles and isotropic test tensors.

A test tensor pair carries two scalar profiles (phi, varphi) with compact
support inside (0, pi), assembled into the rank-2 isotropic tensor

    eta(h) = phi(|h|) I + varphi(|h|) hhat (x) hhat,

whose h-divergence reduces to Phi(l) hhat with
Phi = phi' + varphi' + 2 varphi / l.  Profiles are stored as cubic
splines with value and derivative access.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline


class RadialProfile:
    """Cubic-spline scalar profile supported on [lo, hi] in (0, infinity)."""

    def __init__(self, knots: np.ndarray, values: np.ndarray):
        knots = np.asarray(knots, dtype=np.float64)
        values = np.asarray(values, dtype=np.float64)
        if knots[0] <= 0:
            raise ValueError("profile support must start above 0")
        self.lo = float(knots[0])
        self.hi = float(knots[-1])
        self._spline = CubicSpline(knots, values, bc_type="clamped")
        self._deriv = self._spline.derivative()
        self._deriv2 = self._deriv.derivative()

    @property
    def support(self):
        return (self.lo, self.hi)

    def _masked(self, op, ell):
        ell = np.asarray(ell, dtype=np.float64)
        inside = (ell >= self.lo) & (ell <= self.hi)
        out = np.where(inside, op(np.clip(ell, self.lo, self.hi)), 0.0)
        return out if out.ndim else float(out)

    def __call__(self, ell):
        return self._masked(self._spline, ell)

    def deriv(self, ell):
        return self._masked(self._deriv, ell)

    def deriv2(self, ell):
        return self._masked(self._deriv2, ell)

    @staticmethod
    def zero() -> "RadialProfile":
        p = RadialProfile.__new__(RadialProfile)
        p.lo = 1.0
        p.hi = 1.0
        z = lambda ell: np.zeros_like(np.asarray(ell, dtype=np.float64))
        p._spline = z
        p._deriv = z
        p._deriv2 = z
        return p


def bump_profile(lo: float, hi: float, amplitude: float = 1.0,
                 n_knots: int = 801) -> RadialProfile:
    """Smooth bump exp(-1/((l-lo)(hi-l))) scaled to peak at `amplitude`.

    All derivatives vanish at the endpoints, so the clamped spline is C2
    across the support boundary.
    """
    if not (0.0 < lo < hi < np.pi):
        raise ValueError("bump support must satisfy 0 < lo < hi < pi")
    t = np.linspace(lo, hi, n_knots)
    inner = (t - lo) * (hi - t)
    vals = np.zeros_like(t)
    mask = inner > 0
    width = (hi - lo) / 2.0
    vals[mask] = np.exp(-(width**2) / inner[mask])
    vals *= amplitude / vals.max()
    return RadialProfile(t, vals)


@dataclass(frozen=True)
class TestTensorPair:
    """Isotropic rank-2 test tensor eta = phi I + varphi hhat (x) hhat."""

    __test__ = False  # not a pytest class despite the name

    phi: RadialProfile
    varphi: RadialProfile

    @property
    def support(self):
        lo = min(self.phi.lo, self.varphi.lo)
        hi = max(self.phi.hi, self.varphi.hi)
        return (lo, hi)

    def capital_phi(self, ell):
        """Phi(l) = phi' + varphi' + 2 varphi / l (radial part of Div eta)."""
        ell = np.asarray(ell, dtype=np.float64)
        return self.phi.deriv(ell) + self.varphi.deriv(ell) + 2.0 * self.varphi(ell) / ell

    def eta(self, h) -> np.ndarray:
        h = np.asarray(h, dtype=np.float64)
        ell = np.linalg.norm(h)
        if ell == 0.0:
            return np.zeros((3, 3))
        hhat = h / ell
        return self.phi(ell) * np.eye(3) + self.varphi(ell) * np.outer(hhat, hhat)

    @staticmethod
    def bump(lo: float, hi: float, phi_amp: float = 1.0,
             varphi_amp: float = 1.0) -> "TestTensorPair":
        phi = bump_profile(lo, hi, phi_amp) if phi_amp != 0.0 else RadialProfile.zero()
        varphi = bump_profile(lo, hi, varphi_amp) if varphi_amp != 0.0 else RadialProfile.zero()
        return TestTensorPair(phi, varphi)


def standard_eta_library(scale: float = 1.0):
    """Bump pairs at three support scales, the Cor-3.4 witness set."""
    windows = [(0.25, 0.8), (0.4, 1.4), (0.7, 2.4)]
    out = []
    for lo, hi in windows:
        lo_s = min(lo * scale, 2.9)
        hi_s = min(hi * scale, 3.0)
        out.append(TestTensorPair.bump(lo_s, hi_s))
    return out
