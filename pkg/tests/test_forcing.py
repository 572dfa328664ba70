"""Forcing spectrum construction, noise determinism, covariance profiles."""

import numpy as np
import pytest

from khm_lab.forcing import (
    CounterRNG,
    ForcingValidationError,
    a_bar_closed_form,
    a_tensor,
    a_tensor_from_grid,
    a_tilde_closed_form,
    a_tilde_quadrature,
    build_forcing,
    covariance_profiles,
    default_spectrum,
    noise_coefficient_increment,
    sample_noise,
)
from khm_lab.quadrature import build_quadrature
from khm_lab.spectral import Grid, SpectralField


class TestBuildForcing:
    def test_single_mode_epsilon(self):
        spec = build_forcing([((1, 0, 0), (0, 1, 0), (0, 0, 1))])
        assert spec.epsilon == pytest.approx(1.0, abs=0)
        assert spec.homogeneous

    def test_empty_list(self):
        spec = build_forcing([])
        assert spec.epsilon == 0.0

    def test_non_solenoidal_rejected(self):
        with pytest.raises(ForcingValidationError, match=r"k=\(1, 0, 0\)"):
            build_forcing([((1, 0, 0), (1, 0, 0), (0, 0, 1))])

    def test_zero_mode_rejected(self):
        with pytest.raises(ForcingValidationError):
            build_forcing([((0, 0, 0), (0, 1, 0), (0, 0, 1))])

    def test_duplicate_rejected(self):
        modes = [((1, 0, 0), (0, 1, 0), (0, 0, 1)), ((1, 0, 0), (0, 0, 1), (0, 1, 0))]
        with pytest.raises(ForcingValidationError):
            build_forcing(modes)

    def test_epsilon_additivity(self):
        # dyadic amplitudes keep every partial sum exactly representable
        a = [((1, 0, 0), (0, 0.75, 0), (0, 0, 0.5))]
        b = [((0, 1, 0), (0.25, 0, 0), (0, 0, 0.5)), ((0, 0, 2), (1.5, 0, 0), (0, 0.25, 0))]
        assert build_forcing(a + b).epsilon == build_forcing(a).epsilon + build_forcing(b).epsilon

    def test_inhomogeneous_flag(self):
        spec = build_forcing([((1, 0, 0), (0, 1, 0), (0, 0, 0.5))])
        assert not spec.homogeneous

    def test_default_spectrum(self):
        spec = default_spectrum(epsilon=2.5)
        assert spec.epsilon == pytest.approx(2.5, rel=1e-14)
        assert spec.homogeneous
        assert (spec.k_array**2).sum(axis=1).max() <= 2


class TestNoise:
    def test_determinism(self):
        spec = default_spectrum()
        rng = CounterRNG(seed=1234, member=0)
        d1 = sample_noise(spec, 0.01, rng, step=7)
        d2 = sample_noise(spec, 0.01, rng, step=7)
        assert np.array_equal(d1.xi_cos, d2.xi_cos)
        assert np.array_equal(d1.xi_sin, d2.xi_sin)

    def test_steps_and_members_give_distinct_draws(self):
        spec = default_spectrum()
        rng = CounterRNG(seed=1234)
        a = sample_noise(spec, 0.01, rng, step=7)
        b = sample_noise(spec, 0.01, rng, step=8)
        c = sample_noise(spec, 0.01, CounterRNG(seed=1234, member=1), step=7)
        assert not np.array_equal(a.xi_cos, b.xi_cos)
        assert not np.array_equal(a.xi_cos, c.xi_cos)

    def test_moments(self):
        spec = build_forcing([((1, 0, 0), (0, 1, 0), (0, 0, 1))])
        rng = CounterRNG(seed=99)
        dt = 0.25
        n = 200_000
        gen = rng.generator(0)
        xs = gen.standard_normal((n,)) * np.sqrt(dt)
        se_mean = np.sqrt(dt / n)
        assert abs(xs.mean()) < 4 * se_mean
        se_var = dt * np.sqrt(2.0 / n)
        assert abs(xs.var() - dt) < 4 * se_var

    def test_dt_must_be_positive(self):
        spec = default_spectrum()
        with pytest.raises(ValueError):
            sample_noise(spec, 0.0, CounterRNG(seed=1), step=0)

    def test_coefficient_increment_hermitian(self):
        grid = Grid(16)
        spec = default_spectrum()
        draw = sample_noise(spec, 0.01, CounterRNG(seed=5), step=0)
        inc = noise_coefficient_increment(spec, grid, draw)
        f = SpectralField(grid, inc)
        assert f.is_hermitian()
        assert f.max_divergence() < 1e-14


class TestCovariance:
    def test_a_bar_at_zero_is_epsilon(self):
        spec = default_spectrum(epsilon=1.7)
        assert a_bar_closed_form(spec, 0.0) == pytest.approx(1.7, rel=1e-14)
        assert np.trace(a_tensor(spec, (0, 0, 0))) == pytest.approx(1.7, rel=1e-14)

    def test_single_mode_a_bar_is_sinc(self):
        spec = build_forcing([((1, 0, 0), (0, 1, 0), (0, 0, 1))])  # eps = 1, |k| = 1
        ell = np.linspace(0.05, 3.0, 40)
        expected = np.sin(ell) / ell
        assert np.abs(a_bar_closed_form(spec, ell) - expected).max() < 1e-13

    def test_a_tilde_at_zero(self):
        spec = default_spectrum(epsilon=3.0)
        quad = build_quadrature(14)
        assert a_tilde_quadrature(spec, 0.0, quad) == pytest.approx(1.0, rel=1e-13)

    def test_a_bar_quadrature_agreement(self):
        # closed form vs direct sphere quadrature of tr a(l n)
        spec = default_spectrum(epsilon=1.0)
        quad = build_quadrature(20)
        for ell in (0.3, 1.0, 2.0):
            direct = quad.average(
                np.array([np.trace(a_tensor(spec, ell * n)) for n in quad.nodes])
            )
            assert abs(direct - a_bar_closed_form(spec, ell)) < 1e-10

    def test_a_tilde_quadrature_vs_closed_form(self):
        spec = default_spectrum(epsilon=1.0)
        ell = np.linspace(0.0, 2.5, 30)
        quad = build_quadrature(20)
        got = a_tilde_quadrature(spec, ell, quad)
        expected = a_tilde_closed_form(spec, ell)
        assert np.abs(got - expected).max() < 1e-12

    def test_profiles_bounded_by_epsilon(self):
        spec = default_spectrum(epsilon=2.0)
        cov = covariance_profiles(spec, np.linspace(0.0, 3.0, 50))
        assert cov.a_zero_trace == pytest.approx(2.0)
        assert np.abs(cov.a_bar_values).max() <= 2.0 + 1e-12
        assert np.abs(cov.a_tilde_values).max() <= 2.0 + 1e-12

    def test_grid_average_matches_closed_form(self):
        # translation invariance: x-average of C(x, x+h) equals the cosine form
        spec = build_forcing([
            ((1, 0, 0), (0, 0.8, 0), (0, 0, 0.6)),
            ((1, 1, 0), (0.5, -0.5, 0), (0, 0, 0.9)),
        ])
        grid = Grid(16)
        rng = np.random.default_rng(3)
        for _ in range(4):
            h = rng.uniform(-2, 2, 3)
            direct = a_tensor_from_grid(spec, grid, h)
            closed = a_tensor(spec, h)
            assert np.abs(direct - closed).max() < 1e-12
