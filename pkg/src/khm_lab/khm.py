"""Verification of the exact balance identities for the stationary state.

Assembles and checks, from measured tables and closed-form noise
covariances:

  * the third-order/correlation flux identity for divergence-free fields
    (tensor divergence in the separation variable, both sides built from
    independent code paths),
  * vanishing of the pressure contribution against isotropic test tensors,
  * the stationary two-point balance paired with an isotropic test tensor,
  * the integrated 4/3 and 4/5 budgets with per-separation residuals,
  * the trivial small-separation band for S0 / l,
  * the necessary-condition plateaus implied by energy balance plus
    regularity.

Sign and prefactor conventions follow the sphere-reduced forms

    D-term  = 2 pi int l^2 phi' S0 dl
            + 2 pi int (l^2 varphi' - 2 l varphi) S_par dl
            + 4 pi int l varphi S0 dl
    viscous = -8 pi nu sum_k E_k |k|^2 int l^2 [phi j0(|k| l)
            + varphi j1(|k| l)/(|k| l)] dl
    forcing = 8 pi int l^2 (phi abar + varphi atilde) dl

and the budget columns implement

    S0/l    = -4 nu Gbar'(l)/l - (4/l^3) int_0^l t^2 abar dt
    Spar/l  = -4 nu H(l)/l + 2 l^-5 int_0^l t^3 S0 dt
            - 4 l^-5 int_0^l t^4 atilde dt.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import spherical_jn

from .profiles import TestTensorPair
from .quadrature import SphereQuadrature, build_quadrature
from .spectral import (
    BOX_VOLUME,
    SpectralField,
    pressure_coeff,
    to_physical,
)
from .stats import (
    CorrelationSet,
    IncrementData,
    ModeSpectrum,
    StructureFunctionTable,
    batch_series,
    measure_increments,
)


# -- quadrature helpers ------------------------------------------------------


def _gauss_nodes(lo: float, hi: float, n: int):
    x, w = np.polynomial.legendre.leggauss(n)
    mid, half = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + half * x, half * w


def smooth_tau_integral(fn, power: int, ell, n_gl: int = 64):
    """int_0^ell tau^power fn(tau) d tau for smooth fn, by Gauss-Legendre."""
    ell = np.atleast_1d(np.asarray(ell, dtype=np.float64))
    out = np.empty_like(ell)
    for i, l in enumerate(ell):
        t, w = _gauss_nodes(0.0, l, n_gl)
        out[i] = float(np.sum(w * t**power * np.asarray(fn(t))))
    return out if out.size > 1 else float(out[0])


def tabulated_tau_integral(ell_grid, values, power: int, targets):
    """int_0^L tau^power f(tau) dtau from tabulated f, monotone-cubic in f.

    f is interpolated with a PCHIP through the table; on [0, ell_min] the
    proven vanishing rate is used by fitting f ~ a tau through the two
    smallest grid points.  Each knot interval is integrated exactly
    against the tau^power weight (Gauss-Legendre of degree >= 3 + power).
    """
    ell_grid = np.asarray(ell_grid, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    if len(ell_grid) < 2:
        raise ValueError("need at least two tabulated points")
    pchip = PchipInterpolator(ell_grid, values)
    l1, l2 = ell_grid[0], ell_grid[1]
    slope = (l1 * values[0] + l2 * values[1]) / (l1**2 + l2**2)

    n_gl = (3 + power) // 2 + 2
    gx, gw = np.polynomial.legendre.leggauss(n_gl)

    def head(upper):
        # int_0^upper t^power (slope * t) dt, upper <= l1
        return slope * upper ** (power + 2) / (power + 2)

    def segment(a, b):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        t = mid + half * gx
        return float(np.sum(half * gw * t**power * pchip(t)))

    targets = np.atleast_1d(np.asarray(targets, dtype=np.float64))
    out = np.empty_like(targets)
    for i, L in enumerate(targets):
        if L <= l1:
            out[i] = head(L)
            continue
        acc = head(l1)
        knots = ell_grid[ell_grid < L]
        for a, b in zip(knots[:-1], knots[1:]):
            acc += segment(a, b)
        acc += segment(knots[-1], L)
        out[i] = acc
    return out if out.size > 1 else float(out[0])


def ibp_gamma_residual(gamma_prime, gamma_second, ells, n_gl: int = 64) -> float:
    """Max relative residual of the calculus identity

        (1/l^3) int_0^l [t^2 G''(t) + 2 t G'(t)] dt = G'(l)/l.
    """
    ells = np.atleast_1d(np.asarray(ells, dtype=np.float64))
    worst = 0.0
    for l in ells:
        t, w = _gauss_nodes(0.0, l, n_gl)
        lhs = float(np.sum(w * (t**2 * np.asarray(gamma_second(t))
                                + 2 * t * np.asarray(gamma_prime(t))))) / l**3
        rhs = float(np.asarray(gamma_prime(l))) / l
        scale = max(abs(lhs), abs(rhs), 1e-300)
        worst = max(worst, abs(lhs - rhs) / scale)
    return worst


# -- Monin-type flux identity ------------------------------------------------

_FD6_OFFSETS = np.array([-3, -2, -1, 1, 2, 3])
_FD6_WEIGHTS = np.array([-1.0 / 60.0, 3.0 / 20.0, -3.0 / 4.0,
                         3.0 / 4.0, -3.0 / 20.0, 1.0 / 60.0])


def _shift_physical(field: SpectralField, h):
    import scipy.fft

    g = field.grid
    n = g.n
    kh = g.kvec_half
    half = field.coeff[:, :, :, : n // 2 + 1]
    phase = np.exp(1j * (kh[0] * h[0] + kh[1] * h[1] + kh[2] * h[2]))
    return scipy.fft.irfftn(half * phase, s=(n, n, n), axes=(1, 2, 3), norm="forward")


def _flux_tensors(field: SpectralField, u_flat, h):
    """Exact x-integrals A^k_ij(h) (four-term form) and B^k_ij(h) (increments)."""
    v = _shift_physical(field, h).reshape(3, -1)
    u = u_flat
    npts = u.shape[1]
    scale = BOX_VOLUME / npts
    a = (
        np.einsum("ix,jx,kx->ijk", u, v, u)
        + np.einsum("ix,jx,kx->ijk", v, u, u)
        - np.einsum("ix,jx,kx->ijk", v, u, v)
        - np.einsum("ix,jx,kx->ijk", u, v, v)
    ) * scale
    d = v - u
    b = np.einsum("ix,jx,kx->ijk", d, d, d) * scale
    return a, b


def _fd_divergence(field: SpectralField, u_flat, h, delta: float):
    """6th-order central FD of sum_k d/dh_k of both flux tensors at h."""
    div_a = np.zeros((3, 3))
    div_b = np.zeros((3, 3))
    for axis in range(3):
        e = np.zeros(3)
        e[axis] = 1.0
        for off, w in zip(_FD6_OFFSETS, _FD6_WEIGHTS):
            a, b = _flux_tensors(field, u_flat, h + off * delta * e)
            div_a += w / delta * a[:, :, axis]
            div_b += w / delta * b[:, :, axis]
    return div_a, div_b


def verify_monin_identity(field: SpectralField, h_points=None,
                          delta: float = 0.02,
                          profile_weights=None) -> float:
    """Max relative residual between the two flux-divergence code paths.

    Both sides are evaluated as exact x-integrals at shifted separations;
    the h-divergence is taken by 6th-order central differences, whose
    truncation sets the attainable tolerance.  Non-solenoidal input is
    rejected (the identity needs div u = 0).
    """
    scale = np.abs(field.coeff).max()
    if scale == 0.0:
        return 0.0
    if field.max_divergence() > 1e-10 * scale:
        raise ValueError("flux identity requires a divergence-free field")
    if h_points is None:
        h_points = [
            np.array([0.9, 0.2, -0.3]),
            np.array([-0.4, 0.8, 0.5]),
            np.array([0.1, -0.6, 0.9]),
            np.array([0.7, 0.7, 0.1]),
        ]
    if profile_weights is None:
        # smooth radial bump chi(|h|) on [0.3, 1.6]
        def chi(r):
            lo, hi = 0.3, 1.6
            inner = (r - lo) * (hi - r)
            return np.exp(-((hi - lo) / 2.0) ** 2 / inner) if inner > 0 else 0.0

        profile_weights = [chi]
    u_flat = to_physical(field).reshape(3, -1)
    worst = 0.0
    for chi in profile_weights:
        num = 0.0
        den = 0.0
        for h in h_points:
            w = chi(float(np.linalg.norm(h)))
            if w == 0.0:
                continue
            div_a, div_b = _fd_divergence(field, u_flat, np.asarray(h, float), delta)
            num += w * np.abs(div_a - div_b).sum()
            den += w * (np.abs(div_a).sum() + np.abs(div_b).sum())
        if den > 0:
            worst = max(worst, num / den)
    return worst


# -- pressure cancellation ---------------------------------------------------


def verify_pressure_cancellation(field: SpectralField, eta: TestTensorPair,
                                 quad: SphereQuadrature | None = None,
                                 n_ell: int = 24) -> float:
    """|int eta : P| / (|p| |u|) via the radial reduction.

    P pairs against eta only through Phi(l) hhat; for solenoidal u the
    spherical integral of (u(x + l n) - u(x - l n)) . n vanishes, so the
    normalized residual is at the quadrature floor.  A field with
    divergence leaves an O(1) residual.
    """
    g = field.grid
    p_hat = pressure_coeff(field)
    p_norm = BOX_VOLUME * float(np.sum(np.abs(p_hat) ** 2))
    u_norm = field.l2_norm_sq()
    if p_norm == 0.0 or u_norm == 0.0:
        return 0.0
    lo, hi = eta.support
    if quad is None:
        kmax_abs = np.sqrt(3.0) * g.kmax
        quad = build_quadrature(min(int(np.ceil(1.6 * kmax_abs * hi)) + 10, 191))

    sel = np.where(g.dealias_mask.ravel())[0]
    kv = g.kvec.reshape(3, -1)[:, sel]
    gvec = (np.conj(p_hat.reshape(-1)[sel])[None, :]
            * field.coeff.reshape(3, -1)[:, sel])          # (3, m)

    ells, lw = _gauss_nodes(lo, hi, n_ell)
    total = 0.0
    for nh, w in zip(quad.nodes, quad.weights):
        kappa = kv[0] * nh[0] + kv[1] * nh[1] + kv[2] * nh[2]
        gn = gvec[0] * nh[0] + gvec[1] * nh[1] + gvec[2] * nh[2]
        # int p(x) (u(x + l n) - u(x - l n)) . n dx = -2 V sum Im(gn) sin(l kappa)
        sines = np.sin(np.outer(kappa, ells))
        vals = -2.0 * BOX_VOLUME * (np.imag(gn) @ sines)
        total += w * float(np.sum(lw * eta.capital_phi(ells) * ells**2 * vals))
    return abs(total) / np.sqrt(p_norm * u_norm)


# -- stationary KHM ----------------------------------------------------------


@dataclass
class StationaryKHMCheck:
    d_term: float
    viscous_term: float
    forcing_term: float
    residual: float               # (d_term - viscous - forcing) / normalizer
    stderr: float
    normalizer: float
    stationary_warning: bool = False


def _eta_weighted_structure_integrals(eta: TestTensorPair, ells, lw,
                                      s0, spar):
    phi_p = eta.phi.deriv(ells)
    vphi = eta.varphi(ells)
    vphi_p = eta.varphi.deriv(ells)
    return (
        2.0 * np.pi * np.sum(lw * ells**2 * phi_p * s0, axis=-1)
        + 2.0 * np.pi * np.sum(lw * (ells**2 * vphi_p - 2.0 * ells * vphi) * spar, axis=-1)
        + 4.0 * np.pi * np.sum(lw * ells * vphi * s0, axis=-1)
    )


def _viscous_closed_form(eta: TestTensorPair, spectrum: ModeSpectrum, nu: float,
                         n_gl: int = 96) -> float:
    lo, hi = eta.support
    ells, lw = _gauss_nodes(lo, hi, n_gl)
    kn, en = spectrum._ksq_groups()
    x = kn[:, None] * ells[None, :]
    with np.errstate(invalid="ignore", divide="ignore"):
        j1_over_x = np.where(x > 1e-12, spherical_jn(1, x) / np.where(x > 0, x, 1.0), 1.0 / 3.0)
    inner = lw[None, :] * ells[None, :] ** 2 * (
        eta.phi(ells)[None, :] * spherical_jn(0, x)
        + eta.varphi(ells)[None, :] * j1_over_x
    )
    return -8.0 * np.pi * nu * float(np.sum(en[:, None] * kn[:, None] ** 2 * inner))


def _forcing_closed_form(eta: TestTensorPair, covariance, n_gl: int = 96) -> float:
    lo, hi = eta.support
    ells, lw = _gauss_nodes(lo, hi, n_gl)
    return 8.0 * np.pi * float(np.sum(
        lw * ells**2 * (eta.phi(ells) * np.asarray(covariance.a_bar(ells))
                        + eta.varphi(ells) * np.asarray(covariance.a_tilde(ells)))
    ))


def verify_stationary_khm(snapshots, covariance, eta: TestTensorPair, nu: float,
                          quad: SphereQuadrature, spectrum: ModeSpectrum | None = None,
                          data: IncrementData | None = None,
                          batch_spectra=None,
                          n_gl: int = 16, n_batches: int = 12,
                          stationary_warning: bool = False) -> StationaryKHMCheck:
    """Residual of the stationary two-point balance for one test tensor.

    The flux side integrates the measured S0 and S_par against the
    assembled derivative of eta at Gauss-Legendre nodes inside the
    support; the dissipative side uses the snapshot-averaged energy
    spectrum in closed form; the input side uses the noise covariance
    profiles.  The residual is normalized by eps times the tensor volume
    8 pi int l^2 (|phi| + |varphi|) dl.
    """
    lo, hi = eta.support
    ells, lw = _gauss_nodes(lo, hi, n_gl)
    if data is None:
        snapshots = list(snapshots)
        data = measure_increments(snapshots, quad, ells)
        if spectrum is None:
            from .stats import average_spectrum

            spectrum = average_spectrum(snapshots)
    elif spectrum is None:
        raise ValueError("spectrum required when precomputed data is supplied")
    if not np.allclose(data.ell, ells):
        raise ValueError("precomputed data does not cover the eta support nodes")

    d_term = float(_eta_weighted_structure_integrals(
        eta, ells, lw, data.s0.mean(axis=0), data.spar.mean(axis=0)))
    viscous = _viscous_closed_form(eta, spectrum, nu)
    forcing = _forcing_closed_form(eta, covariance)

    eps = covariance.a_zero_trace
    vol = 8.0 * np.pi * float(np.sum(lw * ells**2 * (
        np.abs(eta.phi(ells)) + np.abs(eta.varphi(ells)))))
    normalizer = eps * vol if eps > 0 else 1.0

    s0_b = batch_series(data.s0, n_batches)
    sp_b = batch_series(data.spar, n_batches)
    nb = s0_b.shape[0]
    residuals_b = np.empty(nb)
    for b in range(nb):
        d_b = float(_eta_weighted_structure_integrals(eta, ells, lw, s0_b[b], sp_b[b]))
        v_b = (_viscous_closed_form(eta, batch_spectra[b], nu)
               if batch_spectra is not None and len(batch_spectra) == nb else viscous)
        residuals_b[b] = (d_b - v_b - forcing) / normalizer
    stderr = float(residuals_b.std(ddof=1) / np.sqrt(nb)) if nb > 1 else 0.0

    residual = (d_term - viscous - forcing) / normalizer
    return StationaryKHMCheck(d_term, viscous, forcing, residual, stderr,
                              normalizer, stationary_warning)


# -- integrated budgets ------------------------------------------------------


@dataclass
class KHMBudget:
    ell: np.ndarray
    s0_over_ell: np.ndarray
    viscous_term: np.ndarray
    forcing_term_43: np.ndarray
    residual_43: np.ndarray
    residual_43_stderr: np.ndarray
    spar_over_ell: np.ndarray
    h_term: np.ndarray
    s0_integral_term: np.ndarray
    forcing_term_45: np.ndarray
    residual_45: np.ndarray
    residual_45_stderr: np.ndarray
    epsilon: float
    nu: float
    plateau_window: tuple = (0.0, 0.0)
    plateau_43: float = float("nan")
    plateau_45: float = float("nan")

    def recompute_residuals(self):
        r43 = self.s0_over_ell - (self.viscous_term + self.forcing_term_43)
        r45 = self.spar_over_ell - (
            self.h_term + self.s0_integral_term + self.forcing_term_45)
        return r43, r45


def _budget_terms(ell, s0, spar, h, gamma_prime, a_bar_fn, a_tilde_fn, nu):
    viscous = -4.0 * nu * gamma_prime / ell
    forcing_43 = -(4.0 / ell**3) * np.atleast_1d(smooth_tau_integral(a_bar_fn, 2, ell))
    h_term = -4.0 * nu * h / ell
    s0_int = 2.0 * ell**-5 * np.atleast_1d(tabulated_tau_integral(ell, s0, 3, ell))
    forcing_45 = -4.0 * ell**-5 * np.atleast_1d(smooth_tau_integral(a_tilde_fn, 4, ell))
    r43 = s0 / ell - (viscous + forcing_43)
    r45 = spar / ell - (h_term + s0_int + forcing_45)
    return viscous, forcing_43, h_term, s0_int, forcing_45, r43, r45


def khm_budget(table: StructureFunctionTable, corr: CorrelationSet, covariance,
               nu: float, eps: float,
               ell_window: tuple | None = None,
               batch_inputs=None) -> KHMBudget:
    """Per-separation decomposition and residuals of both integrated budgets.

    batch_inputs, when given, is a list of (s0, spar, h, gamma_prime)
    per-batch tuples used for honest residual errors (the terms are
    correlated through the shared snapshots, so residuals are batched as
    wholes).
    """
    if len(table.ell) != len(corr.ell) or not np.allclose(table.ell, corr.ell):
        raise ValueError("structure and correlation tables use different grids")
    ell = np.asarray(table.ell, dtype=np.float64)

    viscous, f43, h_term, s0_int, f45, r43, r45 = _budget_terms(
        ell, table.s0, table.spar, corr.h, corr.gamma_bar_prime,
        covariance.a_bar, covariance.a_tilde, nu)

    if batch_inputs:
        r43_b, r45_b = [], []
        for s0_b, spar_b, h_b, gp_b in batch_inputs:
            out = _budget_terms(ell, s0_b, spar_b, h_b, gp_b,
                                covariance.a_bar, covariance.a_tilde, nu)
            r43_b.append(out[5])
            r45_b.append(out[6])
        r43_b = np.asarray(r43_b)
        r45_b = np.asarray(r45_b)
        nb = r43_b.shape[0]
        se43 = r43_b.std(axis=0, ddof=1) / np.sqrt(nb) if nb > 1 else np.zeros_like(ell)
        se45 = r45_b.std(axis=0, ddof=1) / np.sqrt(nb) if nb > 1 else np.zeros_like(ell)
    else:
        se43 = table.s0_stderr / ell
        se45 = np.sqrt((table.spar_stderr / ell) ** 2 + (4.0 * nu * corr.h_stderr / ell) ** 2)

    budget = KHMBudget(
        ell=ell,
        s0_over_ell=table.s0 / ell,
        viscous_term=viscous,
        forcing_term_43=f43,
        residual_43=r43,
        residual_43_stderr=se43,
        spar_over_ell=table.spar / ell,
        h_term=h_term,
        s0_integral_term=s0_int,
        forcing_term_45=f45,
        residual_45=r45,
        residual_45_stderr=se45,
        epsilon=eps,
        nu=nu,
    )
    if ell_window is not None:
        lo, hi = ell_window
        sel = (ell >= lo) & (ell <= hi)
        if sel.any() and eps > 0:
            budget.plateau_window = (lo, hi)
            budget.plateau_43 = float(np.abs(budget.s0_over_ell[sel] / eps + 4.0 / 3.0).max())
            budget.plateau_45 = float(np.abs(budget.spar_over_ell[sel] / eps + 4.0 / 5.0).max())
    return budget


def sperp_prediction_from_tables(ell_grid, s0, h, a_tilde_fn, nu, n_dense: int = 2048):
    """Independent assembly of S_par / l from measured S0, H and atilde.

    Uses dense trapezoidal cumulative integration instead of the budget's
    exact-weight segment quadrature; the two paths must agree well inside
    the Monte Carlo error.
    """
    ell_grid = np.asarray(ell_grid, dtype=np.float64)
    dense = np.unique(np.concatenate([
        np.linspace(0.0, ell_grid[-1], n_dense), ell_grid]))
    s0_interp = PchipInterpolator(ell_grid, s0)
    l1 = ell_grid[0]
    slope = s0[0] / l1
    s0_dense = np.where(dense < l1, slope * dense, s0_interp(np.clip(dense, l1, None)))
    at_dense = np.asarray(a_tilde_fn(np.maximum(dense, 1e-12)))
    cum_s0 = np.concatenate([[0.0], np.cumsum(
        0.5 * np.diff(dense) * ((dense**3 * s0_dense)[1:] + (dense**3 * s0_dense)[:-1]))])
    cum_at = np.concatenate([[0.0], np.cumsum(
        0.5 * np.diff(dense) * ((dense**4 * at_dense)[1:] + (dense**4 * at_dense)[:-1]))])
    idx = np.searchsorted(dense, ell_grid)
    h_interp = np.asarray(h)
    return (-4.0 * nu * h_interp / ell_grid
            + 2.0 * ell_grid**-5 * cum_s0[idx]
            - 4.0 * ell_grid**-5 * cum_at[idx])


# -- trivial band and necessary conditions -----------------------------------


@dataclass
class PropBoundsReport:
    ell: np.ndarray
    s0_over_ell: np.ndarray
    lower: float                 # -(8/3) eps
    tolerance: np.ndarray        # 3 SE + abar continuity correction
    passed: bool
    margins_lower: np.ndarray
    margins_upper: np.ndarray


def prop_triv_bounds(table: StructureFunctionTable, eps: float, covariance,
                     window: int = 4) -> PropBoundsReport:
    """Check the smallest separations satisfy -(8/3) eps <= S0/l <= 0.

    The tolerance adds the continuity correction
    (4/l^3) int_0^l t^2 (abar - abar(0)) dt to three standard errors.
    """
    m = min(window, len(table.ell))
    ell = table.ell[:m]
    vals = table.s0[:m] / ell
    se = table.s0_stderr[:m] / ell
    corr = np.abs(
        (4.0 / ell**3) * np.atleast_1d(smooth_tau_integral(
            lambda t: np.asarray(covariance.a_bar(t)) - covariance.a_bar(0.0), 2, ell))
    )
    tol = 3.0 * se + corr
    lower = -(8.0 / 3.0) * eps
    margins_lower = vals - (lower - tol)
    margins_upper = (0.0 + tol) - vals
    passed = bool(np.all(margins_lower >= 0) and np.all(margins_upper >= 0))
    return PropBoundsReport(ell, vals, lower, tol, passed, margins_lower, margins_upper)


@dataclass
class NecessaryConditionReport:
    energy_balance_residual: float
    energy_balance_stderr: float
    regularity_norm: float
    regularity_s: float
    wad: float
    predicted_s0_plateau: float
    predicted_s0_plateau_stderr: float
    measured_s0_plateau: float
    measured_s0_plateau_stderr: float
    predicted_spar_plateau: float
    predicted_spar_plateau_stderr: float
    measured_spar_plateau: float
    measured_spar_plateau_stderr: float
    ell_d: float
    ell_i: float
    balance_holds: bool
    s0_consistent: bool
    spar_consistent: bool

    @property
    def scaling_law_excluded(self) -> bool:
        """Both limits vanish: no 4/3- or 4/5-type plateau survives."""
        return self.balance_holds and self.s0_consistent and self.spar_consistent


def _extrapolate_to_zero(ell, vals, ses, n_points: int = 4):
    """Weighted fit of a + b l^2 over the smallest separations; returns (a, se_a)."""
    m = min(n_points, len(ell))
    x = np.asarray(ell[:m], dtype=np.float64)
    y = np.asarray(vals[:m], dtype=np.float64)
    s = np.asarray(ses[:m], dtype=np.float64)
    w = 1.0 / np.where(s > 0, s, max(s.max(initial=0.0), 1e-30)) ** 2
    X = np.stack([np.ones_like(x), x**2], axis=1)
    cov = np.linalg.inv(X.T @ (w[:, None] * X))
    beta = cov @ (X.T @ (w * y))
    se_a = float(np.sqrt(max(cov[0, 0], 0.0)))
    if np.all(s == 0):
        se_a = 0.0
    return float(beta[0]), se_a


def necessary_condition_report(table: StructureFunctionTable, energy_report,
                               eps: float, nu: float,
                               ell_d: float, ell_i: float,
                               n_points: int = 4,
                               n_sigma: float = 3.0) -> NecessaryConditionReport:
    """Compare small-separation plateaus with (4/3)(nu D - eps), (4/15)(nu D - eps)."""
    nu_d = energy_report.mean_grad_sq_times_nu
    nu_d_se = energy_report.mean_grad_sq_times_nu_stderr
    pred_s0 = (4.0 / 3.0) * (nu_d - eps)
    pred_s0_se = (4.0 / 3.0) * nu_d_se
    pred_sp = (4.0 / 15.0) * (nu_d - eps)
    pred_sp_se = (4.0 / 15.0) * nu_d_se

    m_s0, se_s0 = _extrapolate_to_zero(table.ell, table.s0 / table.ell,
                                       table.s0_stderr / table.ell, n_points)
    m_sp, se_sp = _extrapolate_to_zero(table.ell, table.spar / table.ell,
                                       table.spar_stderr / table.ell, n_points)

    s0_ok = abs(m_s0 - pred_s0) <= n_sigma * np.hypot(se_s0, pred_s0_se)
    sp_ok = abs(m_sp - pred_sp) <= n_sigma * np.hypot(se_sp, pred_sp_se)
    return NecessaryConditionReport(
        energy_balance_residual=energy_report.balance_residual,
        energy_balance_stderr=energy_report.balance_residual_stderr,
        regularity_norm=energy_report.regularity_norm,
        regularity_s=energy_report.regularity_s,
        wad=energy_report.wad,
        predicted_s0_plateau=pred_s0,
        predicted_s0_plateau_stderr=pred_s0_se,
        measured_s0_plateau=m_s0,
        measured_s0_plateau_stderr=se_s0,
        predicted_spar_plateau=pred_sp,
        predicted_spar_plateau_stderr=pred_sp_se,
        measured_spar_plateau=m_sp,
        measured_spar_plateau_stderr=se_sp,
        ell_d=ell_d,
        ell_i=ell_i,
        balance_holds=energy_report.balance_holds(n_sigma),
        s0_consistent=bool(s0_ok),
        spar_consistent=bool(sp_ok),
    )


def default_plateau_window(grid_n: int, forcing_max_k: float, wad: float,
                           eps: float) -> tuple:
    """[ell_D, ell_I]: dissipation marker to half the forcing scale."""
    ell_d = max(2.0 * 2.0 * np.pi / grid_n,
                10.0 * np.sqrt(wad / eps) if eps > 0 else 0.0)
    ell_i = np.pi / max(forcing_max_k, 1.0)
    return ell_d, ell_i
