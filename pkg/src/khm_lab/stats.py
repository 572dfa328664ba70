"""Estimators for sphere-averaged turbulence statistics.

Covers the third-order structure functions S0 and S_par, the two-point
correlation profiles Gamma-bar and its derivatives (closed form from the
energy spectrum), the mixed gradient correlation H, shell flatness, and
the isotropy-deviation metric.  Increments are formed by exact spectral
shifts; the x-integrals of the resulting trigonometric polynomials are
exact because 3 kmax < n.

Two evaluation paths are provided: the direct one (shift, inverse
transform, average the pointwise cubic) and a mode-sum path that evaluates
the same correlations as weighted sine series over retained modes.  They
agree to round-off; the mode-sum path avoids per-(direction, separation)
transforms and is preferred on large grids.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.fft
from scipy.special import spherical_jn

from .quadrature import SphereQuadrature
from .spectral import BOX_VOLUME, Grid, SpectralField, fft_workers, shell_filter, to_physical


# -- accumulator ---------------------------------------------------------


class StatAccumulator:
    """Compensated running sums keyed by (quantity, index).

    merge() is associative and commutative; merged moments match pooled
    accumulation to round-off thanks to Kahan compensation.
    """

    __slots__ = ("_data",)

    def __init__(self):
        self._data = {}

    @staticmethod
    def _kahan_add(state, value):
        s, c = state
        y = value - c
        t = s + y
        c = (t - s) - y
        return t, c

    def add(self, key, value: float):
        d = self._data.setdefault(key, [0.0, 0.0, 0.0, 0.0, 0])
        d[0], d[1] = self._kahan_add((d[0], d[1]), value)
        d[2], d[3] = self._kahan_add((d[2], d[3]), value * value)
        d[4] += 1

    def merge(self, other: "StatAccumulator") -> "StatAccumulator":
        out = StatAccumulator()
        for src in (self, other):
            for key, d in src._data.items():
                t = out._data.setdefault(key, [0.0, 0.0, 0.0, 0.0, 0])
                t[0], t[1] = self._kahan_add((t[0], t[1]), d[0])
                t[2], t[3] = self._kahan_add((t[2], t[3]), d[2])
                t[4] += d[4]
        return out

    def keys(self):
        return self._data.keys()

    def count(self, key) -> int:
        return self._data[key][4]

    def mean(self, key) -> float:
        d = self._data[key]
        return d[0] / d[4]

    def variance(self, key) -> float:
        d = self._data[key]
        n = d[4]
        if n < 2:
            return 0.0
        m = d[0] / n
        return max(0.0, (d[2] - n * m * m) / (n - 1))

    def stderr(self, key) -> float:
        d = self._data[key]
        return math.sqrt(self.variance(key) / d[4])


# -- time series helpers ---------------------------------------------------


def integral_time(series: np.ndarray) -> float:
    """Integrated autocorrelation time in sample units (>= 1)."""
    x = np.asarray(series, dtype=np.float64)
    n = len(x)
    if n < 8:
        return 1.0
    x = x - x.mean()
    var = np.dot(x, x) / n
    if var == 0:
        return 1.0
    t = 1.0
    for lag in range(1, min(n // 4, 2000)):
        rho = np.dot(x[:-lag], x[lag:]) / ((n - lag) * var)
        if rho < 0.05:
            break
        t += 2.0 * rho
    return max(1.0, t)


def batch_means_stderr(series: np.ndarray, batch_len: int | None = None):
    """(mean, stderr) with batch means; batch length covers the integral time."""
    x = np.asarray(series, dtype=np.float64)
    n = len(x)
    if n == 0:
        return 0.0, 0.0
    mean = float(x.mean())
    if n < 4:
        return mean, float(x.std(ddof=1) / np.sqrt(n)) if n > 1 else 0.0
    if batch_len is None:
        batch_len = int(np.ceil(3.0 * integral_time(x)))
        batch_len = min(batch_len, n // 4)
    batch_len = max(1, batch_len)
    nb = n // batch_len
    trimmed = x[n - nb * batch_len :]
    bm = trimmed.reshape(nb, batch_len).mean(axis=1)
    if nb < 2:
        return mean, float(x.std(ddof=1) / np.sqrt(n))
    se = float(bm.std(ddof=1) / np.sqrt(nb))
    return mean, se


def batch_series(values: np.ndarray, n_batches: int):
    """Split the leading axis into n_batches contiguous batch means."""
    v = np.asarray(values)
    n = v.shape[0]
    nb = max(1, min(n_batches, n))
    edges = np.linspace(0, n, nb + 1).astype(int)
    return np.stack([v[a:b].mean(axis=0) for a, b in zip(edges[:-1], edges[1:]) if b > a])


# -- tables ----------------------------------------------------------------


@dataclass
class StructureFunctionTable:
    ell: np.ndarray
    s0: np.ndarray
    s0_stderr: np.ndarray
    spar: np.ndarray
    spar_stderr: np.ndarray
    sample_count: int

    def __post_init__(self):
        if np.any(self.ell <= 0):
            raise ValueError("separation grid must be strictly positive")


@dataclass
class CorrelationSet:
    ell: np.ndarray
    gamma_bar: np.ndarray
    gamma_bar_prime: np.ndarray
    h: np.ndarray
    h_stderr: np.ndarray
    spectrum: "ModeSpectrum"


_KSQ_SORT_CACHE = {}


def _ksq_sort(grid: Grid):
    """Cached stable sort of the wavenumber magnitudes (grid-static)."""
    cached = _KSQ_SORT_CACHE.get(grid.n)
    if cached is None:
        ksq = np.rint(grid.k_sq).astype(np.int64).ravel()
        order = np.argsort(ksq, kind="stable")
        uniq, start = np.unique(ksq[order], return_index=True)
        cached = (order, uniq, start)
        _KSQ_SORT_CACHE[grid.n] = cached
    return cached


@dataclass
class ModeSpectrum:
    """Snapshot-averaged modal energies E_k = (2 pi)^3 <|u_hat(k)|^2>."""

    grid: Grid
    energy_cube: np.ndarray          # (n, n, n) real
    sample_count: int

    @property
    def total_energy(self) -> float:
        return float(self.energy_cube.sum())

    def shell_table(self):
        """Integer-|k| shells: (k, E(k)) with E summed over the shell."""
        kk = np.sqrt(self.grid.k_sq)
        shell = np.rint(kk).astype(int)
        nmax = shell.max()
        e = np.bincount(shell.ravel(), weights=self.energy_cube.ravel(), minlength=nmax + 1)
        return np.arange(nmax + 1), e

    def _ksq_groups(self):
        order, uniq, start = _ksq_sort(self.grid)
        sums = np.add.reduceat(self.energy_cube.ravel()[order], start)
        keep = (uniq > 0) & (sums != 0)
        return np.sqrt(uniq[keep].astype(np.float64)), sums[keep]

    def gamma_bar(self, ell) -> np.ndarray:
        """Gamma-bar(l) = sum_k E_k j0(|k| l), exact sphere average."""
        ell = np.atleast_1d(np.asarray(ell, dtype=np.float64))
        kn, en = self._ksq_groups()
        x = kn[:, None] * ell[None, :]
        out = np.sum(en[:, None] * spherical_jn(0, x), axis=0)
        return out if out.size > 1 else float(out[0])

    def gamma_bar_prime(self, ell) -> np.ndarray:
        """d/dl Gamma-bar: -sum_k E_k |k| j1(|k| l)."""
        ell = np.atleast_1d(np.asarray(ell, dtype=np.float64))
        kn, en = self._ksq_groups()
        x = kn[:, None] * ell[None, :]
        out = -np.sum(en[:, None] * kn[:, None] * spherical_jn(1, x), axis=0)
        return out if out.size > 1 else float(out[0])

    def gamma_bar_second(self, ell) -> np.ndarray:
        """d2/dl2 Gamma-bar via j0'' = 2 j1(x)/x - j0(x)."""
        ell = np.atleast_1d(np.asarray(ell, dtype=np.float64))
        kn, en = self._ksq_groups()
        x = kn[:, None] * ell[None, :]
        with np.errstate(invalid="ignore", divide="ignore"):
            j1_over_x = np.where(x > 1e-12, spherical_jn(1, x) / np.where(x > 0, x, 1.0), 1.0 / 3.0)
        j0pp = 2.0 * j1_over_x - spherical_jn(0, x)
        out = np.sum(en[:, None] * kn[:, None] ** 2 * j0pp, axis=0)
        return out if out.size > 1 else float(out[0])


def average_spectrum(snapshots) -> ModeSpectrum:
    """Snapshot-averaged modal energy cube."""
    cube = None
    grid = None
    count = 0
    for snap in snapshots:
        if cube is None:
            grid = snap.grid
            cube = np.zeros((grid.n,) * 3)
        cube += np.sum(np.abs(snap.coeff) ** 2, axis=0)
        count += 1
    if count == 0:
        raise ValueError("no snapshots supplied")
    cube *= BOX_VOLUME / count
    return ModeSpectrum(grid, cube, count)


def batched_spectra(snapshots, n_batches: int):
    """Per-batch ModeSpectrum objects over contiguous snapshot blocks."""
    snaps = list(snapshots) if not hasattr(snapshots, "__len__") else snapshots
    total = len(snaps)
    edges = np.linspace(0, total, max(1, min(n_batches, total)) + 1).astype(int)
    out = []
    it = iter(snaps)
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        cube = None
        grid = None
        for _ in range(b - a):
            snap = next(it)
            if cube is None:
                grid = snap.grid
                cube = np.zeros((grid.n,) * 3)
            cube += np.sum(np.abs(snap.coeff) ** 2, axis=0)
        cube *= BOX_VOLUME / (b - a)
        out.append(ModeSpectrum(grid, cube, b - a))
    return out


# -- increment measurement core --------------------------------------------


@dataclass
class IncrementData:
    """Per-snapshot sphere-quadrature statistics of velocity increments.

    s0, spar, h are node-averaged per snapshot, shape (S, L); spar_node
    keeps the per-direction longitudinal moment for the isotropy metric,
    shape (S, P, L) over antipodal node pairs.
    """

    ell: np.ndarray
    pair_nodes: np.ndarray      # (P, 3) one representative per antipodal pair
    pair_weights: np.ndarray    # (P,) combined weights, sum 4 pi
    s0: np.ndarray
    spar: np.ndarray
    h: np.ndarray
    spar_node: np.ndarray

    @property
    def sample_count(self) -> int:
        return self.s0.shape[0]


def _check_ells(ell) -> np.ndarray:
    ell = np.atleast_1d(np.asarray(ell, dtype=np.float64))
    if np.any(ell <= 0):
        raise ValueError("separations must be positive")
    if np.any(ell >= np.pi):
        raise ValueError("separation >= pi wraps past the half box and is rejected")
    return ell


def _pair_reduce(quad: SphereQuadrature):
    pairs = quad.antipodal_pairs()
    idx = np.array([p[0] for p in pairs])
    nodes = quad.nodes[idx]
    weights = np.array([quad.weights[i] + (quad.weights[j] if j != i else 0.0)
                        for i, j in pairs])
    return nodes, weights


def _snapshot_stats_fft(snap: SpectralField, nodes: np.ndarray, ells: np.ndarray):
    """Direct path: exact spectral shift, inverse transform, grid averages."""
    g = snap.grid
    n = g.n
    half = snap.coeff[:, :, :, : n // 2 + 1]
    kh = g.kvec_half
    P, L = len(nodes), len(ells)
    s0 = np.empty((P, L))
    spar = np.empty((P, L))
    h = np.empty((P, L))
    u_phys = to_physical(snap)
    for p, nh in enumerate(nodes):
        kappa = kh[0] * nh[0] + kh[1] * nh[1] + kh[2] * nh[2]
        un_hat = half[0] * nh[0] + half[1] * nh[1] + half[2] * nh[2]
        un_phys = u_phys[0] * nh[0] + u_phys[1] * nh[1] + u_phys[2] * nh[2]
        for j, ell in enumerate(ells):
            phase = np.exp(1j * ell * kappa)
            delta_half = half * phase - half
            delta = scipy.fft.irfftn(delta_half, s=(n, n, n), axes=(1, 2, 3),
                                     norm="forward", workers=fft_workers())
            dn = delta[0] * nh[0] + delta[1] * nh[1] + delta[2] * nh[2]
            s0[p, j] = BOX_VOLUME * float(np.mean(np.sum(delta**2, axis=0) * dn))
            spar[p, j] = BOX_VOLUME * float(np.mean(dn**3))
            # H integrand: (n . u) (n n : grad u shifted)
            ghat = 1j * kappa * un_hat * phase
            gphys = scipy.fft.irfftn(ghat, s=(n, n, n), norm="forward",
                                     workers=fft_workers())
            h[p, j] = BOX_VOLUME * float(np.mean(un_phys * gphys))
    return s0, spar, h


def _snapshot_stats_modesum(snap: SpectralField, nodes: np.ndarray, ells: np.ndarray,
                            threads: int = 1):
    """Mode-sum path: the same x-integrals as weighted sine series.

    With w_ij = (u_i u_j)^ and s = tr w, b = u_hat . n, q = n n : w,
    z = conj(u_hat_i) w_ij n_j:

        S0(n, l)   = -2 V sum_k [Im(b conj(s)) - 2 Im(z)] sin(l k.n)
        Spar(n, l) = -6 V sum_k Im(b conj(q)) sin(l k.n)
        H(n, l)    = -  V sum_k |b|^2 (k.n) sin(l k.n)

    restricted to the retained modes (the only support of u_hat).
    """
    g = snap.grid
    n = g.n
    u = to_physical(snap)
    pairs = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
    prods = np.empty((6, n, n, n))
    for m, (i, j) in enumerate(pairs):
        np.multiply(u[i], u[j], out=prods[m])
    w_half = scipy.fft.rfftn(prods, axes=(1, 2, 3), norm="forward", workers=fft_workers())

    mask = g.dealias_mask[:, :, : n // 2 + 1]
    # rfft slab double-counts nothing; modes with kz in (0, n/2) represent
    # both +-kz, so weight those columns by 2 in the k-sum.
    colw = np.ones(n // 2 + 1)
    colw[1 : (n - 1) // 2 + 1] = 2.0
    sel = np.where(mask.ravel())[0]
    kvec = g.kvec_half.reshape(3, -1)[:, sel]
    wsel = w_half.reshape(6, -1)[:, sel]
    usel = snap.coeff[:, :, :, : n // 2 + 1].reshape(3, -1)[:, sel]
    cw = np.broadcast_to(colw, mask.shape).ravel()[sel]
    ssel = wsel[0] + wsel[3] + wsel[5]

    P, L = len(nodes), len(ells)
    s0 = np.empty((P, L))
    spar = np.empty((P, L))
    h = np.empty((P, L))

    def do_node(p):
        nh = nodes[p]
        kappa = kvec[0] * nh[0] + kvec[1] * nh[1] + kvec[2] * nh[2]
        b = usel[0] * nh[0] + usel[1] * nh[1] + usel[2] * nh[2]
        # symmetric w contractions
        wn0 = wsel[0] * nh[0] + wsel[1] * nh[1] + wsel[2] * nh[2]
        wn1 = wsel[1] * nh[0] + wsel[3] * nh[1] + wsel[4] * nh[2]
        wn2 = wsel[2] * nh[0] + wsel[4] * nh[1] + wsel[5] * nh[2]
        q = wn0 * nh[0] + wn1 * nh[1] + wn2 * nh[2]
        z = np.conj(usel[0]) * wn0 + np.conj(usel[1]) * wn1 + np.conj(usel[2]) * wn2
        r0 = cw * (np.imag(b * np.conj(ssel)) - 2.0 * np.imag(z))
        rp = cw * np.imag(b * np.conj(q))
        rh = cw * (np.abs(b) ** 2 * kappa)
        sines = np.sin(kappa[:, None] * ells[None, :])
        s0[p] = -2.0 * BOX_VOLUME * (r0 @ sines)
        spar[p] = -6.0 * BOX_VOLUME * (rp @ sines)
        h[p] = -BOX_VOLUME * (rh @ sines)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            list(ex.map(do_node, range(P)))
    else:
        for p in range(P):
            do_node(p)
    return s0, spar, h


def slice_increment_data(data: IncrementData, idx) -> IncrementData:
    """Restrict to a subset of separations (columns) and/or snapshots."""
    idx = np.asarray(idx)
    return IncrementData(
        ell=data.ell[idx],
        pair_nodes=data.pair_nodes,
        pair_weights=data.pair_weights,
        s0=data.s0[:, idx],
        spar=data.spar[:, idx],
        h=data.h[:, idx],
        spar_node=data.spar_node[:, :, idx],
    )


def head_increment_data(data: IncrementData, count: int) -> IncrementData:
    """First `count` snapshots of the measurement."""
    return IncrementData(
        ell=data.ell,
        pair_nodes=data.pair_nodes,
        pair_weights=data.pair_weights,
        s0=data.s0[:count],
        spar=data.spar[:count],
        h=data.h[:count],
        spar_node=data.spar_node[:count],
    )


def measure_increments(snapshots, quad: SphereQuadrature, ell_grid,
                       method: str = "auto") -> IncrementData:
    """Sweep snapshots once, returning per-snapshot increment statistics."""
    ells = _check_ells(ell_grid)
    nodes, weights = _pair_reduce(quad)
    s0_all, spar_all, h_all, node_all = [], [], [], []
    for snap in snapshots:
        use = method
        if method == "auto":
            use = "modesum" if snap.grid.n >= 32 else "fft"
        if use == "modesum":
            s0, spar, h = _snapshot_stats_modesum(snap, nodes, ells,
                                                  threads=fft_workers())
        else:
            s0, spar, h = _snapshot_stats_fft(snap, nodes, ells)
        wnorm = weights / (4.0 * np.pi)
        s0_all.append(wnorm @ s0)
        spar_all.append(wnorm @ spar)
        h_all.append(wnorm @ h)
        node_all.append(spar)
    if not s0_all:
        raise ValueError("no snapshots supplied")
    return IncrementData(
        ell=ells,
        pair_nodes=nodes,
        pair_weights=weights,
        s0=np.asarray(s0_all),
        spar=np.asarray(spar_all),
        h=np.asarray(h_all),
        spar_node=np.asarray(node_all),
    )


# -- public estimators ------------------------------------------------------


def _mean_and_se(per_snapshot: np.ndarray, batch_len: int | None):
    means = per_snapshot.mean(axis=0)
    ses = np.empty_like(means)
    for j in range(per_snapshot.shape[1]):
        _, ses[j] = batch_means_stderr(per_snapshot[:, j], batch_len)
    return means, ses


def structure_table_from_data(data: IncrementData,
                              batch_len: int | None = None) -> StructureFunctionTable:
    s0, s0_se = _mean_and_se(data.s0, batch_len)
    sp, sp_se = _mean_and_se(data.spar, batch_len)
    return StructureFunctionTable(data.ell, s0, s0_se, sp, sp_se, data.sample_count)


def structure_functions(snapshots, quad: SphereQuadrature, ell_grid,
                        method: str = "auto",
                        batch_len: int | None = None) -> StructureFunctionTable:
    """Sphere-averaged third-order structure functions with batch-means errors."""
    data = measure_increments(snapshots, quad, ell_grid, method)
    return structure_table_from_data(data, batch_len)


def correlation_set_from_data(data: IncrementData, spectrum: ModeSpectrum,
                              batch_len: int | None = None) -> CorrelationSet:
    h, h_se = _mean_and_se(data.h, batch_len)
    return CorrelationSet(
        ell=data.ell,
        gamma_bar=np.atleast_1d(spectrum.gamma_bar(data.ell)),
        gamma_bar_prime=np.atleast_1d(spectrum.gamma_bar_prime(data.ell)),
        h=h,
        h_stderr=h_se,
        spectrum=spectrum,
    )


def correlation_set(snapshots, spectrum: ModeSpectrum, quad: SphereQuadrature,
                    ell_grid, method: str = "auto",
                    batch_len: int | None = None) -> CorrelationSet:
    """Gamma-bar profiles from the averaged spectrum plus the measured H."""
    data = measure_increments(snapshots, quad, ell_grid, method)
    return correlation_set_from_data(data, spectrum, batch_len)


@dataclass
class FlatnessEntry:
    shell: int
    p: int
    value: float
    stderr: float
    flagged: bool


def flatness(snapshots, p: int, shells) -> list:
    """Shell flatness F_p(N) = <|u_N|_{2p}^{2p}> / <|u_N|_2^2>^p per shell.

    Unresolved or energy-free shells yield flagged entries, not failures.
    """
    if p < 2:
        raise ValueError("flatness requires p >= 2")
    from .spectral import EmptyShellError

    shells = list(shells)
    num = {N: [] for N in shells}
    den = {N: [] for N in shells}
    unresolved = set()
    count = 0
    for snap in snapshots:
        count += 1
        for N in shells:
            if N in unresolved:
                continue
            try:
                uN = shell_filter(snap, N)
            except EmptyShellError:
                unresolved.add(N)
                continue
            phys_sq = np.sum(to_physical(uN) ** 2, axis=0)
            num[N].append(BOX_VOLUME * float(np.mean(phys_sq**p)))
            den[N].append(uN.l2_norm_sq())
    out = []
    for N in shells:
        a = np.asarray(num[N])
        b = np.asarray(den[N])
        if N in unresolved or a.size == 0 or a.mean() == 0.0 or b.mean() == 0.0:
            out.append(FlatnessEntry(N, p, float("nan"), float("nan"), True))
            continue
        nb = max(2, min(16, count))
        fb = batch_series(a, nb) / batch_series(b, nb) ** p
        value = float(a.mean() / b.mean() ** p)
        se = float(fb.std(ddof=1) / np.sqrt(len(fb))) if len(fb) > 1 else 0.0
        out.append(FlatnessEntry(N, p, value, se, False))
    return out


@dataclass
class IsotropyDeviation:
    ell: np.ndarray
    deviation: np.ndarray
    deviation_stderr: np.ndarray
    normalized: np.ndarray       # deviation / (eps * ell)


def isotropy_deviation_from_data(data: IncrementData, eps: float,
                                 n_batches: int = 8) -> IsotropyDeviation:
    """Sphere-average of |per-direction longitudinal moment - sphere mean|.

    The modulus is applied to expectation estimates, so the node means are
    pooled over all snapshots first; errors come from batch resampling.
    """
    wnorm = data.pair_weights / (4.0 * np.pi)
    node_mean = data.spar_node.mean(axis=0)            # (P, L)
    sphere_mean = wnorm @ node_mean                     # (L,)
    dev = wnorm @ np.abs(node_mean - sphere_mean[None, :])
    batches = batch_series(data.spar_node, n_batches)   # (B, P, L)
    devs_b = []
    for b in range(batches.shape[0]):
        sm = wnorm @ batches[b]
        devs_b.append(wnorm @ np.abs(batches[b] - sm[None, :]))
    devs_b = np.asarray(devs_b)
    if devs_b.shape[0] > 1:
        se = devs_b.std(axis=0, ddof=1) / np.sqrt(devs_b.shape[0])
    else:
        se = np.zeros_like(dev)
    denom = eps * data.ell if eps > 0 else np.ones_like(data.ell)
    return IsotropyDeviation(data.ell, dev, se, dev / denom)


def isotropy_deviation(snapshots, quad: SphereQuadrature, ell_grid, eps: float,
                       method: str = "auto") -> IsotropyDeviation:
    data = measure_increments(snapshots, quad, ell_grid, method)
    return isotropy_deviation_from_data(data, eps)


def default_ell_grid(n: int, count: int = 32) -> np.ndarray:
    """Logarithmic separations from the grid scale to the quarter box."""
    return np.geomspace(2.0 * np.pi / n, np.pi / 2.0, count)
