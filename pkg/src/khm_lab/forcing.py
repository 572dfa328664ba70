"""White-in-time, colored-in-space forcing: spectrum, noise draws, covariance.

The forcing acts through L2-orthonormalized trigonometric Stokes
eigenfunctions,

    W(t, x) = sum_k alpha_k chat_k(x) beta^1_k(t) + gamma_k shat_k(x) beta^2_k(t),

with chat_k = sqrt(2) (2*pi)^{-3/2} cos(k.x) and shat_k the sine analogue.
This normalization makes the bookkeeping identities exact:
eps = (1/2) sum sigma_k^2 with sigma_k^2 = |alpha_k|^2 + |gamma_k|^2,
tr a(0) = eps, and the heat-equation balance nu E|grad v|^2 = eps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import spherical_jn

from .quadrature import SphereQuadrature, build_quadrature
from .spectral import BOX_VOLUME, Grid

#: Coefficient-space amplitude of a unit-sigma noise kick at one wavenumber.
NOISE_COEFF_SCALE = 1.0 / np.sqrt(2.0 * BOX_VOLUME)


class ForcingValidationError(ValueError):
    """A forcing mode violates the solenoidality or indexing constraints."""


@dataclass(frozen=True)
class ForcingMode:
    k: np.ndarray       # integer 3-vector, nonzero
    alpha: np.ndarray   # real 3-vector, alpha . k = 0
    gamma: np.ndarray   # real 3-vector, gamma . k = 0

    @property
    def sigma_sq(self) -> float:
        return float(np.dot(self.alpha, self.alpha) + np.dot(self.gamma, self.gamma))


@dataclass(frozen=True)
class ForcingSpectrum:
    """Validated mode list with derived energy input rate."""

    modes: tuple
    epsilon: float
    homogeneous: bool

    @property
    def k_array(self) -> np.ndarray:
        return np.array([m.k for m in self.modes], dtype=np.int64).reshape(-1, 3)

    @property
    def sigma_sq_array(self) -> np.ndarray:
        return np.array([m.sigma_sq for m in self.modes])

    def max_abs_k(self) -> float:
        if not self.modes:
            return 0.0
        return float(np.sqrt((self.k_array**2).sum(axis=1)).max())


def build_forcing(mode_spec) -> ForcingSpectrum:
    """Validate (k, alpha, gamma) triples and compute epsilon.

    Raises ForcingValidationError naming the offending wavenumber when an
    amplitude is not orthogonal to its k, when k = 0, or on duplicates.
    """
    modes = []
    seen = set()
    for k, alpha, gamma in mode_spec:
        k = np.asarray(k, dtype=np.int64)
        alpha = np.asarray(alpha, dtype=np.float64)
        gamma = np.asarray(gamma, dtype=np.float64)
        if k.shape != (3,) or alpha.shape != (3,) or gamma.shape != (3,):
            raise ForcingValidationError(f"mode k={k.tolist()} has malformed vectors")
        if not np.any(k):
            raise ForcingValidationError("forcing the zero mode is not allowed")
        kt = tuple(int(v) for v in k)
        if kt in seen:
            raise ForcingValidationError(f"duplicate forcing mode k={kt}")
        seen.add(kt)
        scale = max(np.linalg.norm(alpha), np.linalg.norm(gamma), 1.0)
        knorm = np.linalg.norm(k)
        if abs(np.dot(alpha, k)) > 1e-12 * scale * knorm:
            raise ForcingValidationError(f"alpha not solenoidal at k={kt}: alpha.k != 0")
        if abs(np.dot(gamma, k)) > 1e-12 * scale * knorm:
            raise ForcingValidationError(f"gamma not solenoidal at k={kt}: gamma.k != 0")
        a = alpha.copy()
        g = gamma.copy()
        a.flags.writeable = False
        g.flags.writeable = False
        k.flags.writeable = False
        modes.append(ForcingMode(k, a, g))
    eps = math.fsum(0.5 * m.sigma_sq for m in modes)
    homogeneous = all(
        abs(np.dot(m.alpha, m.alpha) - np.dot(m.gamma, m.gamma)) <= 1e-12 * max(m.sigma_sq, 1e-300)
        for m in modes
    )
    return ForcingSpectrum(tuple(modes), eps, homogeneous)


def _perp_basis(k: np.ndarray):
    k = np.asarray(k, dtype=np.float64)
    ref = np.array([0.0, 0.0, 1.0])
    if abs(np.dot(k, ref)) > 0.9 * np.linalg.norm(k):
        ref = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(k, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(k, e1)
    e2 /= np.linalg.norm(e2)
    return e1, e2


def default_spectrum(epsilon: float = 1.0, max_k_sq: int = 2) -> ForcingSpectrum:
    """Homogeneous low-shell spectrum: all |k|^2 <= max_k_sq, equal sigma.

    One representative of each +-k pair is listed (lexicographically
    positive k).  This default is a repository convention, not mandated by
    the theory.
    """
    ks = []
    r = int(np.floor(np.sqrt(max_k_sq)))
    for kx in range(-r, r + 1):
        for ky in range(-r, r + 1):
            for kz in range(-r, r + 1):
                k = (kx, ky, kz)
                if k == (0, 0, 0) or kx**2 + ky**2 + kz**2 > max_k_sq:
                    continue
                if k < tuple(-v for v in k):
                    continue
                ks.append(k)
    s = np.sqrt(epsilon / len(ks))  # per-mode sigma^2 = 2 s^2, eps = sum s^2
    spec = []
    for k in ks:
        e1, e2 = _perp_basis(np.array(k))
        spec.append((k, s * e1, s * e2))
    return build_forcing(spec)


# -- noise sampling ------------------------------------------------------


@dataclass(frozen=True)
class NoiseDraw:
    """Per-mode Gaussian increments with per-component variance dt."""

    xi_cos: np.ndarray  # (n_modes, 3)
    xi_sin: np.ndarray  # (n_modes, 3)
    dt: float


@dataclass
class CounterRNG:
    """Counter-based Philox stream keyed by (seed, ensemble member)."""

    seed: int
    member: int = 0

    def generator(self, step: int) -> np.random.Generator:
        counter = [0, 0, self.member & 0xFFFFFFFFFFFFFFFF, step & 0xFFFFFFFFFFFFFFFF]
        return np.random.Generator(np.random.Philox(key=self.seed, counter=counter))


def sample_noise(spec: ForcingSpectrum, dt: float, rng: CounterRNG, step: int) -> NoiseDraw:
    """Independent Gaussian increments, reproducible from (seed, step, mode)."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    gen = rng.generator(step)
    m = len(spec.modes)
    draws = gen.standard_normal((2, m, 3)) * np.sqrt(dt)
    return NoiseDraw(draws[0], draws[1], dt)


def noise_coefficient_increment(spec: ForcingSpectrum, grid: Grid,
                                draw: NoiseDraw,
                                mode_scale: np.ndarray | None = None) -> np.ndarray:
    """Spectral coefficient increment of the forcing kick.

    The scalar Brownian increments are the projections of the 3-vector
    draws onto the amplitude directions (equal in law to independent
    scalar Brownian motions), so

        dc(k) = kappa (alpha dbeta1 - i gamma dbeta2),  dc(-k) = conj,

    with kappa = 1/sqrt(2 (2 pi)^3).  mode_scale optionally rescales each
    mode's increment (used for the exact stochastic convolution).
    """
    n = grid.n
    out = np.zeros((3, n, n, n), dtype=np.complex128)
    for m, mode in enumerate(spec.modes):
        s = 1.0 if mode_scale is None else mode_scale[m]
        na = np.linalg.norm(mode.alpha)
        ng = np.linalg.norm(mode.gamma)
        dbeta1 = np.dot(mode.alpha, draw.xi_cos[m]) / na if na > 0 else 0.0
        dbeta2 = np.dot(mode.gamma, draw.xi_sin[m]) / ng if ng > 0 else 0.0
        kick = NOISE_COEFF_SCALE * s * (mode.alpha * dbeta1 - 1j * mode.gamma * dbeta2)
        idx = tuple(mode.k % n)
        idx_neg = tuple((-mode.k) % n)
        for i in range(3):
            out[(i,) + idx] += kick[i]
            out[(i,) + idx_neg] += np.conj(kick[i])
    return out


# -- covariance ----------------------------------------------------------


@dataclass(frozen=True)
class ForcingCovariance:
    """Spatial covariance profiles of the noise.

    a_bar is evaluated in closed form (no quadrature error); a_tilde by
    antipodally symmetric sphere quadrature of n (x) n : a(l n).
    """

    spectrum: ForcingSpectrum
    ell: np.ndarray
    a_bar_values: np.ndarray
    a_tilde_values: np.ndarray
    quad: SphereQuadrature = field(repr=False, default=None)

    @property
    def a_zero_trace(self) -> float:
        return self.spectrum.epsilon

    def a_bar(self, ell) -> np.ndarray:
        return a_bar_closed_form(self.spectrum, ell)

    def a_tilde(self, ell) -> np.ndarray:
        return a_tilde_quadrature(self.spectrum, ell, self.quad)


def a_bar_closed_form(spec: ForcingSpectrum, ell) -> np.ndarray:
    """abar(l) = 1/2 sum sigma_k^2 j0(|k| l)."""
    ell = np.atleast_1d(np.asarray(ell, dtype=np.float64))
    if not spec.modes:
        out = np.zeros_like(ell)
        return out if out.size > 1 else out[0]
    kn = np.sqrt((spec.k_array**2).sum(axis=1))
    x = kn[:, None] * ell[None, :]
    out = 0.5 * np.sum(spec.sigma_sq_array[:, None] * spherical_jn(0, x), axis=0)
    return out if out.size > 1 else float(out[0])


def a_tilde_closed_form(spec: ForcingSpectrum, ell) -> np.ndarray:
    """atilde(l) = 1/2 sum sigma_k^2 j1(x)/x at x = |k| l (solenoidal modes).

    Serves as the independent oracle for the quadrature evaluation.
    """
    ell = np.atleast_1d(np.asarray(ell, dtype=np.float64))
    if not spec.modes:
        out = np.zeros_like(ell)
        return out if out.size > 1 else out[0]
    kn = np.sqrt((spec.k_array**2).sum(axis=1))
    x = kn[:, None] * ell[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        j1_over_x = np.where(x > 1e-8, spherical_jn(1, x) / np.where(x > 0, x, 1.0), 1.0 / 3.0)
    out = 0.5 * np.sum(spec.sigma_sq_array[:, None] * j1_over_x, axis=0)
    return out if out.size > 1 else float(out[0])


def a_tensor(spec: ForcingSpectrum, h) -> np.ndarray:
    """Closed-form a(h) = 1/2 sum cos(k.h) (alpha x alpha + gamma x gamma)."""
    h = np.asarray(h, dtype=np.float64)
    out = np.zeros((3, 3))
    for mode in spec.modes:
        c = np.cos(np.dot(mode.k, h))
        out += 0.5 * c * (np.outer(mode.alpha, mode.alpha) + np.outer(mode.gamma, mode.gamma))
    return out


def a_tensor_from_grid(spec: ForcingSpectrum, grid: Grid, h) -> np.ndarray:
    """a(h) as the discrete x-average of C(x, x+h), via exact shifts.

    Independent of the cosine closed form; used to check translation
    invariance of the x-averaged covariance on the grid.
    """
    h = np.asarray(h, dtype=np.float64)
    x, y, z = grid.mesh()
    out = np.zeros((3, 3))
    for mode in spec.modes:
        phase = mode.k[0] * x + mode.k[1] * y + mode.k[2] * z
        shift = np.dot(mode.k, h)
        ccos = np.mean(np.cos(phase) * np.cos(phase + shift))
        csin = np.mean(np.sin(phase) * np.sin(phase + shift))
        # normalized eigenfunctions carry 2/(2 pi)^3; the x-integral restores (2 pi)^3
        out += 0.5 * BOX_VOLUME * (2.0 / BOX_VOLUME) * (
            ccos * np.outer(mode.alpha, mode.alpha) + csin * np.outer(mode.gamma, mode.gamma)
        )
    return out


def a_tilde_quadrature(spec: ForcingSpectrum, ell, quad: SphereQuadrature) -> np.ndarray:
    """atilde(l) = (1/4pi) sum_i w_i n_i (x) n_i : a(l n_i), per-mode closed form."""
    ell = np.atleast_1d(np.asarray(ell, dtype=np.float64))
    if not spec.modes:
        out = np.zeros_like(ell)
        return out if out.size > 1 else out[0]
    nodes = quad.nodes  # (q, 3)
    vals = np.zeros((len(nodes), ell.size))
    for mode in spec.modes:
        kn = nodes @ mode.k.astype(np.float64)          # (q,)
        an = nodes @ mode.alpha                          # (q,)
        gn = nodes @ mode.gamma
        vals += 0.5 * np.cos(kn[:, None] * ell[None, :]) * (an**2 + gn**2)[:, None]
    out = quad.average(vals)
    return out if out.size > 1 else float(out[0])


def recommended_quad_order(spec: ForcingSpectrum, ell_max: float) -> int:
    """Order high enough that the band-limited sphere integrands are exact."""
    x = spec.max_abs_k() * max(ell_max, 0.0)
    return max(14, int(np.ceil(1.6 * x)) + 8)


def covariance_profiles(spec: ForcingSpectrum, ell_grid,
                        quad: SphereQuadrature | None = None) -> ForcingCovariance:
    """Tabulate abar and atilde on the ell grid."""
    ell = np.asarray(ell_grid, dtype=np.float64)
    if quad is None:
        quad = build_quadrature(recommended_quad_order(spec, float(ell.max(initial=0.0))))
    a_bar = np.atleast_1d(a_bar_closed_form(spec, ell))
    a_tilde = np.atleast_1d(a_tilde_quadrature(spec, ell, quad))
    return ForcingCovariance(spec, ell, a_bar, a_tilde, quad)
