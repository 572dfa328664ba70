"""Integrator tests: decay, exact OU sampling, single-mode NSE, checkpoints."""

import numpy as np
import pytest
from scipy import stats as sps

from khm_lab.checkpoint import CheckpointError, read_checkpoint, write_checkpoint
from khm_lab.forcing import (
    CounterRNG,
    build_forcing,
    default_spectrum,
    sample_noise,
)
from khm_lab.integrator import (
    BlowUpError,
    RunConfig,
    StepOperator,
    energy_report,
    simulate_stationary,
    step,
)
from khm_lab.spectral import (
    BOX_VOLUME,
    Grid,
    SpectralField,
    nonlinear_term,
    random_solenoidal_field,
)


def heat_config(n=16, nu=1.0, dt=0.01, avg=20.0, burn=2.0, seed=7, stride=5,
                forcing=None):
    return RunConfig(
        nu=nu,
        grid=Grid(n),
        forcing=forcing if forcing is not None else default_spectrum(1.0),
        dt=dt,
        burn_in_time=burn,
        averaging_time=avg,
        snapshot_stride=stride,
        seed=seed,
        nonlinear=False,
    )


class TestConfigValidation:
    def test_positive_parameters(self):
        with pytest.raises(ValueError):
            heat_config(nu=-1.0)
        with pytest.raises(ValueError):
            heat_config(dt=0.0)

    def test_forcing_must_be_retained(self):
        spec = build_forcing([((7, 0, 0), (0, 1, 0), (0, 0, 1))])
        with pytest.raises(ValueError, match="outside retained band"):
            heat_config(n=8, forcing=spec)


class TestStep:
    def test_pure_decay_without_forcing(self):
        g = Grid(16)
        cfg = RunConfig(nu=0.5, grid=g, forcing=build_forcing([]), dt=0.05,
                        burn_in_time=0.0, averaging_time=1.0, snapshot_stride=1,
                        seed=1, nonlinear=False)
        f = random_solenoidal_field(g, seed=2)
        draw = sample_noise(default_spectrum(), cfg.dt, CounterRNG(1), 0)
        draw = type(draw)(draw.xi_cos[:0], draw.xi_sin[:0], cfg.dt)
        out = step(f, cfg, draw)
        expected = f.coeff * np.exp(-cfg.nu * g.k_sq * cfg.dt)
        assert np.abs(out.coeff - expected).max() < 1e-15

    def test_preserves_structure(self):
        g = Grid(16)
        cfg = heat_config()
        cfg = RunConfig(**{**cfg.__dict__, "nonlinear": True})
        op = StepOperator(cfg)
        state = random_solenoidal_field(g, seed=3, amplitude=0.1)
        rng = CounterRNG(cfg.seed)
        for n in range(5):
            draw = sample_noise(cfg.forcing, cfg.dt, rng, n)
            state = op.apply(state, draw, n)
        assert state.is_hermitian()
        assert state.max_divergence() < 1e-12
        assert np.abs(state.coeff[:, 0, 0, 0]).max() == 0.0

    def test_blow_up_signal(self):
        g = Grid(8)
        cfg = RunConfig(nu=1e-12, grid=g, forcing=build_forcing([]), dt=1.0,
                        burn_in_time=0.0, averaging_time=1.0, snapshot_stride=1,
                        seed=1, nonlinear=False)
        bad = np.full((3, g.n, g.n, g.n), np.nan, dtype=np.complex128)
        state = SpectralField(g, bad)
        draw = sample_noise(build_forcing([]), cfg.dt, CounterRNG(1), 0)
        with pytest.raises(BlowUpError) as err:
            step(state, cfg, draw, step_index=17)
        assert err.value.step == 17

    def test_deterministic_stream(self):
        cfg = heat_config(avg=0.5, burn=0.0)
        a = simulate_stationary(cfg)
        b = simulate_stationary(cfg)
        assert np.array_equal(a.energy, b.energy)
        for fa, fb in zip(a.snapshot_handles, b.snapshot_handles):
            assert np.array_equal(fa.coeff, fb.coeff)


class TestHeatBenchmark:
    def test_per_mode_transition_is_exact_ou(self):
        # one-step conditional residuals must be standard normal
        spec = build_forcing([((1, 0, 0), (0, 1.0, 0), (0, 0, 1.0))])
        cfg = heat_config(n=8, nu=1.0, dt=0.05, forcing=spec)
        op = StepOperator(cfg)
        rng = CounterRNG(cfg.seed)
        g = cfg.grid
        lam = cfg.nu
        decay = np.exp(-lam * cfg.dt)
        # exact stationary coefficient variance per component pair
        sig_sq = spec.modes[0].sigma_sq
        conv_var = (1.0 - np.exp(-2 * lam * cfg.dt)) / (2 * lam)
        kick_var = conv_var * sig_sq / (2.0 * 2.0 * BOX_VOLUME)

        state = SpectralField.zero(g)
        vals = []
        n_steps = 100_000
        for n in range(n_steps):
            prev = state.coeff[:, 1, 0, 0].copy()
            draw = sample_noise(spec, cfg.dt, rng, n)
            state = op.apply(state, draw, n)
            vals.append(state.coeff[:, 1, 0, 0] - decay * prev)
        res = np.asarray(vals)
        # alpha = e_y forces Re(c_1); gamma = e_z forces Im(c_2)
        zs = np.concatenate([res[:, 1].real, res[:, 2].imag]) / np.sqrt(kick_var)
        # chi-squared goodness of fit against N(0, 1)
        edges = np.linspace(-4, 4, 33)
        obs, _ = np.histogram(zs, bins=edges)
        cdf = sps.norm.cdf(edges)
        probs = np.diff(cdf)
        probs[0] += cdf[0]
        probs[-1] += 1 - cdf[-1]
        expected = probs * len(zs)
        chi2 = float(np.sum((obs - expected) ** 2 / expected))
        pval = sps.chi2.sf(chi2, df=len(obs) - 1)
        assert pval > 1e-3

    def test_stationary_energy_and_balance(self):
        eps = 1.0
        cfg = heat_config(n=16, nu=1.0, dt=0.02, avg=120.0, burn=5.0, stride=10)
        stats = simulate_stationary(cfg)
        report = energy_report(stats, eps, cfg.nu)
        # exact stationary energy: sum sigma^2 / (2 nu |k|^2)
        expected_energy = sum(
            m.sigma_sq / (2 * cfg.nu * float(np.dot(m.k, m.k))) for m in cfg.forcing.modes
        )
        assert abs(report.mean_energy - expected_energy) < 4 * report.mean_energy_stderr
        assert abs(report.balance_residual) < 4 * report.balance_residual_stderr
        assert report.dissipation_scale > 0

    def test_discrete_energy_budget(self):
        # pathwise split: dE = (viscous + O(dt^2)) + noise work + Ito input;
        # the noise terms average to eps per unit time
        spec = default_spectrum(1.0)
        cfg = heat_config(n=16, nu=0.7, dt=0.02, avg=80.0, burn=4.0, forcing=spec)
        op = StepOperator(cfg)
        rng = CounterRNG(cfg.seed)
        state = SpectralField.zero(cfg.grid)
        total = int((cfg.burn_in_time + cfg.averaging_time) / cfg.dt)
        burn = int(cfg.burn_in_time / cfg.dt)
        noise_work = []
        for n in range(total):
            draw = sample_noise(cfg.forcing, cfg.dt, rng, n)
            before, _ = op.deterministic_part(state)
            after = op.apply(state, draw, n)
            if n >= burn:
                dE_noise = 0.5 * BOX_VOLUME * (
                    float(np.sum(np.abs(after.coeff) ** 2)) - float(np.sum(np.abs(before) ** 2))
                )
                noise_work.append(dE_noise / cfg.dt)
            state = after
        m = np.mean(noise_work)
        se = np.std(noise_work, ddof=1) / np.sqrt(len(noise_work))
        # Ito input at rate eps, modulo the O(lambda dt) exact-convolution factor
        lam_min = cfg.nu * 1.0
        bias_bound = spec.epsilon * 2 * lam_min * cfg.dt
        assert abs(m - spec.epsilon) < 4 * se + bias_bound


class TestSingleModeNSE:
    def test_projected_nonlinearity_stays_zero(self):
        spec = build_forcing([((0, 0, 1), (0.8, 0.6, 0), (0.0, 0.0, 0.0))])
        cfg = RunConfig(nu=0.4, grid=Grid(16), forcing=spec, dt=0.02,
                        burn_in_time=0.0, averaging_time=6.0, snapshot_stride=10,
                        seed=11, nonlinear=True)
        op = StepOperator(cfg)
        rng = CounterRNG(cfg.seed)
        state = SpectralField.zero(cfg.grid)
        for n in range(300):
            draw = sample_noise(cfg.forcing, cfg.dt, rng, n)
            state = op.apply(state, draw, n)
            resid = nonlinear_term(state)
            scale = max(np.abs(state.coeff).max(), 1e-30)
            assert np.abs(resid.coeff).max() < 1e-12 * scale

    def test_matches_ou_statistics(self):
        spec = build_forcing([((0, 0, 1), (1.0, 0, 0), (0, 1.0, 0))])
        cfg = RunConfig(nu=0.5, grid=Grid(8), forcing=spec, dt=0.02,
                        burn_in_time=10.0, averaging_time=150.0, snapshot_stride=25,
                        seed=12, nonlinear=True)
        stats = simulate_stationary(cfg)
        report = energy_report(stats, spec.epsilon, cfg.nu)
        expected_energy = spec.modes[0].sigma_sq / (2 * cfg.nu)
        assert abs(report.mean_energy - expected_energy) < 4 * report.mean_energy_stderr
        assert abs(report.balance_residual) < 4 * report.balance_residual_stderr


class TestSimulateStationary:
    def test_zero_forcing_decays_monotonically(self):
        g = Grid(16)
        cfg = RunConfig(nu=1.0, grid=g, forcing=build_forcing([]), dt=0.01,
                        burn_in_time=0.0, averaging_time=3.0, snapshot_stride=5,
                        seed=3, nonlinear=True)
        op = StepOperator(cfg)
        state = random_solenoidal_field(g, seed=4, amplitude=0.5)
        energies = [state.l2_norm_sq()]
        for n in range(200):
            draw = sample_noise(cfg.forcing, cfg.dt, CounterRNG(1), n)
            state = op.apply(state, draw, n)
            energies.append(state.l2_norm_sq())
        assert all(b < a for a, b in zip(energies, energies[1:]))
        assert energies[-1] < 1e-2 * energies[0]

    def test_weak_forcing_matches_heat_prediction(self):
        # large nu, weak forcing: nonlinearity negligible
        spec = default_spectrum(0.01)
        cfg = RunConfig(nu=1.0, grid=Grid(16), forcing=spec, dt=0.02,
                        burn_in_time=5.0, averaging_time=60.0, snapshot_stride=20,
                        seed=5, nonlinear=True)
        stats = simulate_stationary(cfg)
        expected = sum(
            m.sigma_sq / (2 * cfg.nu * float(np.dot(m.k, m.k))) for m in spec.modes
        )
        mean_energy = stats.energy.mean()
        assert abs(mean_energy - expected) < 0.1 * expected

    def test_snapshot_cadence_and_stationarity_flag(self):
        cfg = heat_config(avg=30.0, burn=3.0, stride=20)
        stats = simulate_stationary(cfg)
        expected_snapshots = int(cfg.averaging_time / cfg.dt) // cfg.snapshot_stride
        assert abs(len(stats.snapshot_handles) - expected_snapshots) <= 1
        assert stats.stationary

    def test_zero_forcing_stationary_state_reports_zero(self):
        cfg = RunConfig(nu=1.0, grid=Grid(8), forcing=build_forcing([]), dt=0.05,
                        burn_in_time=0.0, averaging_time=2.0, snapshot_stride=5,
                        seed=1, nonlinear=True)
        stats = simulate_stationary(cfg)
        report = energy_report(stats, eps=0.0, nu=cfg.nu)
        assert report.mean_energy == 0.0
        assert report.mean_grad_sq_times_nu == 0.0
        assert report.wad == 0.0


class TestCheckpoint:
    def test_bit_exact_roundtrip(self, tmp_path):
        g = Grid(16)
        f = random_solenoidal_field(g, seed=6)
        path = tmp_path / "state.khm"
        write_checkpoint(path, f, nu=0.05, time=1.25, step=12, seed=99)
        back, meta = read_checkpoint(path)
        ks = g.retained_k_list
        idx = tuple((ks % g.n).T)
        for i in range(3):
            assert np.array_equal(back.coeff[i][idx], f.coeff[i][idx])
        assert meta.nu == 0.05 and meta.time == 1.25
        assert meta.step == 12 and meta.seed == 99

    def test_rejects_bad_magic(self, tmp_path):
        path = tmp_path / "bad.khm"
        path.write_bytes(b"NOPE" + b"\0" * 60)
        with pytest.raises(CheckpointError):
            read_checkpoint(path)
