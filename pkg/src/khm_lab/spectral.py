"""Fourier representation of periodic vector fields on the 2*pi torus.

Velocity fields are stored as full complex Fourier coefficient arrays of
shape (3, n, n, n) following the convention

    u(x) = sum_k c(k) exp(i k . x),

so coefficients carry no grid-size factors and Parseval reads
int |u|^2 dx = (2*pi)^3 sum_k |c(k)|^2.  All operations preserve Hermitian
symmetry (real fields), zero mean, and, where promised, solenoidality.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.fft

TWO_PI = 2.0 * np.pi
#: Volume of the periodic box [0, 2*pi)^3.
BOX_VOLUME = TWO_PI**3


def fft_workers() -> int:
    """Worker count for batched FFTs, capped by the KHM_THREADS env var."""
    try:
        return max(1, int(os.environ.get("KHM_THREADS", "1")))
    except ValueError:
        return 1


class Grid:
    """Cubic spectral grid with n points per axis on the 2*pi torus.

    Retained (dealiased) wavenumbers satisfy |k_i| <= kmax with
    kmax = (n - 1) // 3, a sharp 2/3-rule truncation.  This choice keeps
    triple products of retained modes exactly integrable by the collocation
    grid (3 * kmax < n), which several diagnostics rely on.
    """

    def __init__(self, n: int):
        if n < 8 or n % 2 != 0:
            raise ValueError(f"grid size must be even and >= 8, got {n}")
        self.n = int(n)
        self.kmax = (self.n - 1) // 3

    def __eq__(self, other):
        return isinstance(other, Grid) and other.n == self.n

    def __hash__(self):
        return hash(("Grid", self.n))

    def __repr__(self):
        return f"Grid(n={self.n})"

    @cached_property
    def k1(self) -> np.ndarray:
        """Integer wavenumbers along one axis in FFT order."""
        return np.fft.fftfreq(self.n, d=1.0 / self.n).astype(np.int64)

    @cached_property
    def kvec(self) -> np.ndarray:
        """Wavenumber components, shape (3, n, n, n)."""
        kx, ky, kz = np.meshgrid(self.k1, self.k1, self.k1, indexing="ij")
        return np.stack([kx, ky, kz]).astype(np.float64)

    @cached_property
    def k_sq(self) -> np.ndarray:
        return np.sum(self.kvec**2, axis=0)

    @cached_property
    def inv_k_sq(self) -> np.ndarray:
        """1/|k|^2 with the k=0 entry zeroed."""
        with np.errstate(divide="ignore"):
            inv = np.where(self.k_sq > 0, 1.0 / np.where(self.k_sq > 0, self.k_sq, 1.0), 0.0)
        return inv

    @cached_property
    def dealias_mask(self) -> np.ndarray:
        m = np.abs(self.kvec) <= self.kmax
        return m[0] & m[1] & m[2]

    @cached_property
    def kvec_half(self) -> np.ndarray:
        """Wavenumbers on the rfft half-spectrum slab (3, n, n, n//2+1)."""
        kz_r = np.arange(self.n // 2 + 1, dtype=np.int64)
        kx, ky, kz = np.meshgrid(self.k1, self.k1, kz_r, indexing="ij")
        return np.stack([kx, ky, kz]).astype(np.float64)

    @cached_property
    def x1(self) -> np.ndarray:
        """Collocation points along one axis."""
        return TWO_PI * np.arange(self.n) / self.n

    def mesh(self):
        """Physical collocation mesh, three (n, n, n) arrays."""
        return np.meshgrid(self.x1, self.x1, self.x1, indexing="ij")

    @cached_property
    def retained_k_list(self) -> np.ndarray:
        """Retained wavenumbers in lexicographic order, shape (m, 3)."""
        r = np.arange(-self.kmax, self.kmax + 1)
        kx, ky, kz = np.meshgrid(r, r, r, indexing="ij")
        return np.stack([kx.ravel(), ky.ravel(), kz.ravel()], axis=1)


@dataclass(frozen=True)
class SpectralField:
    """Divergence-free-capable velocity field in coefficient space.

    coeff has shape (3, n, n, n), complex128, in numpy FFT index order.
    Instances are immutable; operations return new fields.
    """

    grid: Grid
    coeff: np.ndarray

    def __post_init__(self):
        if self.coeff.shape != (3, self.grid.n, self.grid.n, self.grid.n):
            raise ValueError(f"coefficient array has shape {self.coeff.shape}")
        self.coeff.flags.writeable = False

    @classmethod
    def zero(cls, grid: Grid) -> "SpectralField":
        return cls(grid, np.zeros((3, grid.n, grid.n, grid.n), dtype=np.complex128))

    def copy_with(self, coeff: np.ndarray) -> "SpectralField":
        return SpectralField(self.grid, np.ascontiguousarray(coeff, dtype=np.complex128))

    # -- basic algebra -------------------------------------------------

    def __add__(self, other: "SpectralField") -> "SpectralField":
        return self.copy_with(self.coeff + other.coeff)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        return self.copy_with(self.coeff - other.coeff)

    def __mul__(self, scalar: float) -> "SpectralField":
        return self.copy_with(self.coeff * scalar)

    __rmul__ = __mul__

    # -- norms and inner products --------------------------------------

    def l2_norm_sq(self) -> float:
        """int |u|^2 dx over the torus (Parseval)."""
        return BOX_VOLUME * float(np.sum(np.abs(self.coeff) ** 2))

    def grad_norm_sq(self) -> float:
        """int |grad u|^2 dx."""
        return BOX_VOLUME * float(np.sum(self.grid.k_sq * np.sum(np.abs(self.coeff) ** 2, axis=0)))

    def frac_grad_norm_sq(self, s: float) -> float:
        """int ||nabla|^s u|^2 dx for fractional order s."""
        return BOX_VOLUME * float(
            np.sum(self.grid.k_sq**s * np.sum(np.abs(self.coeff) ** 2, axis=0))
        )

    def max_abs(self) -> float:
        """Pointwise max |u| on the collocation grid."""
        u = to_physical(self)
        return float(np.sqrt(np.sum(u**2, axis=0)).max())

    def is_hermitian(self, tol: float = 1e-12) -> bool:
        rev = (-np.arange(self.grid.n)) % self.grid.n
        mirrored = np.conj(self.coeff[:, rev][:, :, rev][:, :, :, rev])
        scale = max(np.abs(self.coeff).max(), 1.0)
        return bool(np.abs(self.coeff - mirrored).max() <= tol * scale)

    def max_divergence(self) -> float:
        """Max modal |k . c(k)|, a solenoidality residual."""
        return float(np.abs(np.sum(self.grid.kvec * self.coeff, axis=0)).max())


def inner_product(f: SpectralField, g: SpectralField) -> float:
    """Real L2 inner product int f . g dx."""
    return BOX_VOLUME * float(np.real(np.sum(np.conj(f.coeff) * g.coeff)))


# -- transforms --------------------------------------------------------


def to_physical(field: SpectralField) -> np.ndarray:
    """Evaluate the field on the collocation grid, shape (3, n, n, n) real."""
    n = field.grid.n
    half = field.coeff[:, :, :, : n // 2 + 1]
    return scipy.fft.irfftn(half, s=(n, n, n), axes=(1, 2, 3), norm="forward",
                            workers=fft_workers())


def full_from_half(half: np.ndarray, n: int) -> np.ndarray:
    """Rebuild the full Hermitian coefficient cube from an rfft half-spectrum."""
    shape = half.shape[:-3] + (n, n, n)
    full = np.zeros(shape, dtype=np.complex128)
    full[..., :, :, : n // 2 + 1] = half
    rev = (-np.arange(n)) % n
    # kz index j in [n//2+1, n-1] holds frequency j - n; mirror from kz = n - j.
    tail = np.conj(half[..., rev, :, :][..., :, rev, :][..., :, :, np.arange(n // 2 - 1, 0, -1)])
    full[..., :, :, n // 2 + 1 :] = tail
    return full


def from_physical(grid: Grid, u: np.ndarray, dealias: bool = True) -> SpectralField:
    """Forward transform a real (3, n, n, n) sample array."""
    half = scipy.fft.rfftn(u, axes=(1, 2, 3), norm="forward", workers=fft_workers())
    coeff = full_from_half(half, grid.n)
    if dealias:
        coeff = coeff * grid.dealias_mask
    return SpectralField(grid, coeff)


# -- core operations ---------------------------------------------------


def dealias(field: SpectralField) -> SpectralField:
    return field.copy_with(field.coeff * field.grid.dealias_mask)


def leray_project(field: SpectralField) -> SpectralField:
    """Remove the gradient part: c'(k) = (I - khat khat^T) c(k).

    Idempotent, annihilates pure gradients, exact per mode.
    """
    g = field.grid
    kdotc = np.sum(g.kvec * field.coeff, axis=0)
    coeff = field.coeff - g.kvec * (kdotc * g.inv_k_sq)
    return field.copy_with(coeff)


def shift_field(field: SpectralField, h) -> SpectralField:
    """Exact trigonometric shift: u(x) -> u(x + h) for any real 3-vector h."""
    h = np.asarray(h, dtype=np.float64)
    g = field.grid
    phase = np.exp(1j * (g.kvec[0] * h[0] + g.kvec[1] * h[1] + g.kvec[2] * h[2]))
    return field.copy_with(field.coeff * phase)


def differentiate(field: SpectralField, axis: int) -> SpectralField:
    """Spectral partial derivative along axis in {0, 1, 2}."""
    if axis not in (0, 1, 2):
        raise ValueError(f"axis must be 0, 1 or 2, got {axis}")
    return field.copy_with(1j * field.grid.kvec[axis] * field.coeff)


def divergence_coeff(field: SpectralField) -> np.ndarray:
    """Scalar coefficient array of div u."""
    return 1j * np.sum(field.grid.kvec * field.coeff, axis=0)


def gradient_tensor(field: SpectralField) -> np.ndarray:
    """Coefficients of du_i/dx_j, shape (3, 3, n, n, n); index [i, j]."""
    g = field.grid
    return 1j * field.coeff[:, None] * g.kvec[None, :]


def advection_half(field: SpectralField):
    """Half-spectrum coefficients of u . grad u plus the physical velocity.

    Uses the divergence form d_j(u_i u_j), exact for solenoidal trig
    polynomials; the collocation products are alias-free after the sharp
    truncation because 3 * kmax < n.
    """
    g = field.grid
    n = g.n
    u = to_physical(field)
    # upper-triangle products u_i u_j
    prods = np.empty((6, n, n, n))
    pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
    for m, (i, j) in enumerate(pairs):
        np.multiply(u[i], u[j], out=prods[m])
    w = scipy.fft.rfftn(prods, axes=(1, 2, 3), norm="forward", workers=fft_workers())
    kh = g.kvec_half
    adv = np.empty((3,) + w.shape[1:], dtype=np.complex128)
    # (u.grad u)_i = i k_j what_ij with w symmetric
    adv[0] = 1j * (kh[0] * w[0] + kh[1] * w[1] + kh[2] * w[2])
    adv[1] = 1j * (kh[0] * w[1] + kh[1] * w[3] + kh[2] * w[4])
    adv[2] = 1j * (kh[0] * w[2] + kh[1] * w[4] + kh[2] * w[5])
    return adv, u


def nonlinear_term(field: SpectralField) -> SpectralField:
    """Leray-projected advection P(u . grad u), dealiased.

    The pressure is eliminated by the projection; it can be recovered from
    the gradient part on demand (see pressure_coeff).
    """
    adv_half, _ = advection_half(field)
    g = field.grid
    coeff = full_from_half(adv_half, g.n) * g.dealias_mask
    return leray_project(SpectralField(g, coeff))


def pressure_coeff(field: SpectralField) -> np.ndarray:
    """Scalar pressure coefficients solving -lap p = div(u . grad u)."""
    g = field.grid
    adv_half, _ = advection_half(field)
    adv = full_from_half(adv_half, g.n) * g.dealias_mask
    div_adv = 1j * np.sum(g.kvec * adv, axis=0)
    return div_adv * g.inv_k_sq


class EmptyShellError(ValueError):
    """Raised when a dyadic shell holds no resolved modes."""


def shell_filter(field: SpectralField, shell: int) -> SpectralField:
    """Sharp Littlewood-Paley-style annulus filter: keep N/2 < |k| <= 2N."""
    if shell < 1 or (shell & (shell - 1)) != 0:
        raise ValueError(f"shell index must be a positive power of 2, got {shell}")
    g = field.grid
    mask = (g.k_sq > shell**2 / 4.0) & (g.k_sq <= 4.0 * shell**2) & g.dealias_mask
    if not mask.any():
        raise EmptyShellError(f"shell N={shell} holds no resolved modes at n={g.n}")
    return field.copy_with(field.coeff * mask)


def random_solenoidal_field(grid: Grid, seed: int, decay: float = 0.7,
                            amplitude: float = 1.0) -> SpectralField:
    """Random real solenoidal field with spectrum ~ exp(-decay |k|).

    Intended for identity tests; the decay keeps finite-difference
    residuals in h well below their target tolerances.
    """
    rng = np.random.default_rng(seed)
    n = grid.n
    raw = rng.standard_normal((3, n, n, n)) + 1j * rng.standard_normal((3, n, n, n))
    kk = np.sqrt(grid.k_sq)
    envelope = amplitude * np.exp(-decay * kk)
    coeff = raw * envelope * grid.dealias_mask
    coeff[:, 0, 0, 0] = 0.0
    # symmetrize to make the physical field real
    rev = (-np.arange(n)) % n
    mirrored = np.conj(coeff[:, rev][:, :, rev][:, :, :, rev])
    coeff = 0.5 * (coeff + mirrored)
    f = SpectralField(grid, coeff)
    return leray_project(f)
