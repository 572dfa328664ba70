"""Time integration of the Galerkin-truncated stochastic Navier-Stokes system.

Viscosity is handled by an integrating factor and the noise by the exact
Ornstein-Uhlenbeck stochastic convolution, so with the nonlinearity
disabled every forced mode is sampled exactly in law (the heat-equation
benchmark).  The nonlinear term advances with explicit Euler inside the
exponential step:

    c <- exp(-nu |k|^2 dt) [c - dt * P(u . grad u)^] + noise,

where the noise kick per forced mode is Gaussian with the exact stationary
convolution variance (1 - exp(-2 nu |k|^2 dt)) / (2 nu |k|^2) per unit
sigma^2.
"""

from __future__ import annotations

import time as _time
from dataclasses import dataclass, field

import numpy as np

from .forcing import (
    CounterRNG,
    ForcingSpectrum,
    NOISE_COEFF_SCALE,
    sample_noise,
)
from .spectral import (
    Grid,
    SpectralField,
    advection_half,
    full_from_half,
)


class BlowUpError(RuntimeError):
    """Non-finite coefficients encountered during time stepping."""

    def __init__(self, step: int):
        super().__init__(f"non-finite coefficients at step {step}")
        self.step = step


class CFLViolationError(RuntimeError):
    """Advective CFL number exceeded the configured limit."""

    def __init__(self, step: int, cfl: float, limit: float):
        super().__init__(
            f"CFL number {cfl:.3f} exceeded limit {limit} at step {step}; reduce dt"
        )
        self.step = step
        self.cfl = cfl


@dataclass
class RunConfig:
    """Simulation parameters for one stationary-statistics run."""

    nu: float
    grid: Grid
    forcing: ForcingSpectrum
    dt: float
    burn_in_time: float
    averaging_time: float
    snapshot_stride: int
    seed: int
    ensemble_size: int = 1
    nonlinear: bool = True
    cfl_limit: float = 0.5
    regularity_s: float = 1.5

    def __post_init__(self):
        if self.nu <= 0:
            raise ValueError("nu must be positive (inverse Reynolds number)")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.burn_in_time < 0 or self.averaging_time <= 0:
            raise ValueError("burn_in_time >= 0 and averaging_time > 0 required")
        if self.snapshot_stride < 1 or self.ensemble_size < 1:
            raise ValueError("snapshot_stride and ensemble_size must be >= 1")
        kmax = self.grid.kmax
        for m in self.forcing.modes:
            if np.abs(m.k).max() > kmax:
                raise ValueError(f"forcing mode k={m.k.tolist()} outside retained band")


@dataclass
class TrajectoryStats:
    """Scalar time series and snapshot handles from one run."""

    times: np.ndarray
    energy: np.ndarray          # |u|_L2^2
    nu_enstrophy: np.ndarray    # nu |grad u|_L2^2
    frac_norm: np.ndarray       # nu ||nabla|^s u|_L2^2
    snapshot_handles: list
    averaging_start_index: int
    step_count: int
    wall_seconds: float
    max_cfl: float
    stationary: bool
    warnings: list = field(default_factory=list)

    def averaging_slice(self):
        return slice(self.averaging_start_index, len(self.times))


class StepOperator:
    """Precomputed exponential Euler-Maruyama step for a fixed config."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        g = cfg.grid
        lam = cfg.nu * g.k_sq
        self.decay = np.exp(-lam * cfg.dt)
        # per-forced-mode exact OU convolution scale, relative to sqrt(dt)
        modes = cfg.forcing.modes
        self.mode_index = []
        self.mode_scale = np.empty(len(modes))
        for m, mode in enumerate(modes):
            lam_m = cfg.nu * float(np.dot(mode.k, mode.k))
            var = (1.0 - np.exp(-2.0 * lam_m * cfg.dt)) / (2.0 * lam_m)
            self.mode_scale[m] = np.sqrt(var / cfg.dt)
            self.mode_index.append((tuple(mode.k % g.n), tuple((-mode.k) % g.n)))
        self._last_cfl = 0.0

    def deterministic_part(self, state: SpectralField):
        """decay * (c - dt * advection), plus the advective CFL number.

        Returns the raw coefficient array (projection happens after the
        noise is added) and u_max * dt * kmax.
        """
        cfg = self.cfg
        g = cfg.grid
        if cfg.nonlinear:
            adv_h, u = advection_half(state)
            adv = full_from_half(adv_h, g.n) * g.dealias_mask
            kdot = np.sum(g.kvec * adv, axis=0)
            adv -= g.kvec * (kdot * g.inv_k_sq)
            u_max = float(np.sqrt(np.sum(u**2, axis=0)).max())
            coeff = self.decay * (state.coeff - cfg.dt * adv)
            cfl = u_max * cfg.dt * g.kmax
        else:
            coeff = self.decay * state.coeff
            cfl = 0.0
        return coeff, cfl

    def noise_part(self, draw) -> list:
        """Sparse list of (component_index, value) kicks, exactly sampled."""
        kicks = []
        for m, mode in enumerate(self.cfg.forcing.modes):
            s = self.mode_scale[m]
            na = np.linalg.norm(mode.alpha)
            ng = np.linalg.norm(mode.gamma)
            db1 = np.dot(mode.alpha, draw.xi_cos[m]) / na if na > 0 else 0.0
            db2 = np.dot(mode.gamma, draw.xi_sin[m]) / ng if ng > 0 else 0.0
            kick = NOISE_COEFF_SCALE * s * (mode.alpha * db1 - 1j * mode.gamma * db2)
            kicks.append((self.mode_index[m], kick))
        return kicks

    def apply(self, state: SpectralField, draw, step_index: int) -> SpectralField:
        cfg = self.cfg
        coeff, cfl = self.deterministic_part(state)
        if cfl > cfg.cfl_limit:
            raise CFLViolationError(step_index, cfl, cfg.cfl_limit)
        for (idx, idx_neg), kick in self.noise_part(draw):
            for i in range(3):
                coeff[(i,) + idx] += kick[i]
                coeff[(i,) + idx_neg] += np.conj(kick[i])
        if not np.isfinite(coeff).all():
            raise BlowUpError(step_index)
        out = SpectralField(cfg.grid, coeff)
        self._last_cfl = cfl
        return out


def step(state: SpectralField, cfg: RunConfig, draw, step_index: int = 0) -> SpectralField:
    """Single exponential Euler-Maruyama step (convenience wrapper)."""
    return StepOperator(cfg).apply(state, draw, step_index)


def _stationarity_heuristic(energy: np.ndarray) -> bool:
    """First/second half means differ by less than 2 pooled standard errors."""
    m = len(energy)
    if m < 8:
        return False
    half = m // 2
    a, b = energy[:half], energy[half:]
    from .stats import batch_means_stderr

    ma, sa = batch_means_stderr(a)
    mb, sb = batch_means_stderr(b)
    pooled = np.hypot(sa, sb)
    if pooled == 0:
        return bool(abs(ma - mb) == 0)
    return bool(abs(ma - mb) <= 2.0 * pooled)


def simulate_stationary(cfg: RunConfig, snapshot_sink=None,
                        progress=None) -> TrajectoryStats:
    """Burn in from rest, then average and emit snapshots every stride steps.

    snapshot_sink(member, step, time, field) is called for every snapshot;
    when None the fields are collected in memory.  Members run sequentially
    with independent counter-based noise streams.
    """
    t0 = _time.time()
    op = StepOperator(cfg)
    g = cfg.grid
    burn_steps = int(round(cfg.burn_in_time / cfg.dt))
    avg_steps = int(round(cfg.averaging_time / cfg.dt))
    total = burn_steps + avg_steps
    s_exp = cfg.regularity_s
    k2s = g.k_sq**s_exp

    from .spectral import BOX_VOLUME

    times, energy, enst, frac = [], [], [], []
    handles = []
    max_cfl = 0.0

    for member in range(cfg.ensemble_size):
        rng = CounterRNG(cfg.seed, member)
        state = SpectralField.zero(g)
        for n in range(total):
            draw = sample_noise(cfg.forcing, cfg.dt, rng, step=n)
            state = op.apply(state, draw, n)
            max_cfl = max(max_cfl, op._last_cfl)
            if n >= burn_steps:
                t = (n + 1) * cfg.dt
                sq = np.abs(state.coeff) ** 2
                comp_sq = np.sum(sq, axis=0)
                times.append(t)
                energy.append(BOX_VOLUME * float(comp_sq.sum()))
                enst.append(cfg.nu * BOX_VOLUME * float((g.k_sq * comp_sq).sum()))
                frac.append(cfg.nu * BOX_VOLUME * float((k2s * comp_sq).sum()))
                rel = n - burn_steps
                if rel % cfg.snapshot_stride == 0:
                    if snapshot_sink is None:
                        handles.append(state)
                    else:
                        handles.append(snapshot_sink(member, n, t, state))
            if progress is not None and n % 200 == 0:
                progress(member, n, total)

    energy = np.asarray(energy)
    stats = TrajectoryStats(
        times=np.asarray(times),
        energy=energy,
        nu_enstrophy=np.asarray(enst),
        frac_norm=np.asarray(frac),
        snapshot_handles=handles,
        averaging_start_index=0,
        step_count=total * cfg.ensemble_size,
        wall_seconds=_time.time() - t0,
        max_cfl=max_cfl,
        stationary=_stationarity_heuristic(energy),
    )
    if not stats.stationary:
        stats.warnings.append("stationarity heuristic not satisfied; extend burn-in")
    return stats


@dataclass
class EnergyReport:
    """Stationary-window averages and the energy-balance residual."""

    mean_grad_sq_times_nu: float
    mean_grad_sq_times_nu_stderr: float
    mean_energy: float
    mean_energy_stderr: float
    wad: float                      # nu <|u|^2>, the weak-dissipation metric
    balance_residual: float         # (nu <|grad u|^2> - eps) / eps
    balance_residual_stderr: float
    regularity_norm: float          # nu <||nabla|^s u|^2>
    regularity_s: float
    dissipation_scale: float        # (nu <|u|^2>)^{1/2} / eps^{1/2}
    epsilon: float

    def balance_holds(self, n_sigma: float = 3.0) -> bool:
        return abs(self.balance_residual) <= n_sigma * self.balance_residual_stderr


@dataclass
class OUModeCheck:
    k: tuple
    measured_var: float
    expected_var: float
    stderr: float

    @property
    def z_score(self) -> float:
        return (self.measured_var - self.expected_var) / self.stderr if self.stderr else 0.0


@dataclass
class OUBenchReport:
    energy: EnergyReport
    modes: list

    def passes(self, n_sigma: float = 3.0) -> bool:
        if abs(self.energy.balance_residual) > n_sigma * self.energy.balance_residual_stderr:
            return False
        return all(abs(m.z_score) <= n_sigma for m in self.modes)


def ou_benchmark(cfg: RunConfig, record_stride: int = 1) -> OUBenchReport:
    """Heat-equation mode run checked against the exact stationary law.

    With the nonlinearity disabled the chain samples each forced mode's
    stationary distribution exactly, so nu <|grad v|^2> = eps and the
    per-mode variance sigma^2 / (4 V nu |k|^2) hold up to Monte Carlo
    error only (no time-step bias).
    """
    from .stats import batch_means_stderr
    from .spectral import BOX_VOLUME

    cfg = RunConfig(**{**cfg.__dict__, "nonlinear": False})
    op = StepOperator(cfg)
    g = cfg.grid
    rng = CounterRNG(cfg.seed)
    burn = int(round(cfg.burn_in_time / cfg.dt))
    total = burn + int(round(cfg.averaging_time / cfg.dt))
    idx = [tuple(m.k % g.n) for m in cfg.forcing.modes]
    state = SpectralField.zero(g)
    mode_sq = [[] for _ in idx]
    energy, enst, frac, times = [], [], [], []
    k2s = g.k_sq**cfg.regularity_s
    for n in range(total):
        draw = sample_noise(cfg.forcing, cfg.dt, rng, n)
        state = op.apply(state, draw, n)
        if n >= burn and (n - burn) % record_stride == 0:
            comp_sq = np.sum(np.abs(state.coeff) ** 2, axis=0)
            times.append((n + 1) * cfg.dt)
            energy.append(BOX_VOLUME * float(comp_sq.sum()))
            enst.append(cfg.nu * BOX_VOLUME * float((g.k_sq * comp_sq).sum()))
            frac.append(cfg.nu * BOX_VOLUME * float((k2s * comp_sq).sum()))
            for m, ix in enumerate(idx):
                mode_sq[m].append(float(comp_sq[ix]))
    stats = TrajectoryStats(
        times=np.asarray(times), energy=np.asarray(energy),
        nu_enstrophy=np.asarray(enst), frac_norm=np.asarray(frac),
        snapshot_handles=[], averaging_start_index=0,
        step_count=total, wall_seconds=0.0, max_cfl=0.0,
        stationary=_stationarity_heuristic(np.asarray(energy)),
    )
    report = energy_report(stats, cfg.forcing.epsilon, cfg.nu, cfg.regularity_s)
    checks = []
    for m, mode in enumerate(cfg.forcing.modes):
        series = np.asarray(mode_sq[m])
        mean, se = batch_means_stderr(series)
        expected = mode.sigma_sq / (4.0 * BOX_VOLUME * cfg.nu * float(np.dot(mode.k, mode.k)))
        checks.append(OUModeCheck(tuple(int(v) for v in mode.k), mean, expected, se))
    return OUBenchReport(report, checks)


def energy_report(stats: TrajectoryStats, eps: float, nu: float,
                  regularity_s: float = 1.5) -> EnergyReport:
    """Time averages over the stationary window with batch-means errors."""
    from .stats import batch_means_stderr

    sl = stats.averaging_slice()
    diss = stats.nu_enstrophy[sl]
    en = stats.energy[sl]
    frac = stats.frac_norm[sl]
    m_diss, se_diss = batch_means_stderr(diss)
    m_en, se_en = batch_means_stderr(en)
    wad = nu * m_en
    if eps > 0:
        residual = (m_diss - eps) / eps
        residual_se = se_diss / eps
        ell_d = np.sqrt(wad / eps) if wad > 0 else 0.0
    else:
        residual = m_diss
        residual_se = se_diss
        ell_d = 0.0
    return EnergyReport(
        mean_grad_sq_times_nu=m_diss,
        mean_grad_sq_times_nu_stderr=se_diss,
        mean_energy=m_en,
        mean_energy_stderr=se_en,
        wad=wad,
        balance_residual=residual,
        balance_residual_stderr=residual_se,
        regularity_norm=float(np.mean(frac)) if len(frac) else 0.0,
        regularity_s=regularity_s,
        dissipation_scale=ell_d,
        epsilon=eps,
    )
