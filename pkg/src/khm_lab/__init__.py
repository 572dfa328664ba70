"""Stochastic Navier-Stokes simulation with exact-balance turbulence diagnostics."""

__version__ = "0.1.0"

from .forcing import ForcingSpectrum, build_forcing, covariance_profiles, default_spectrum
from .integrator import RunConfig, energy_report, ou_benchmark, simulate_stationary, step
from .khm import khm_budget, necessary_condition_report, prop_triv_bounds
from .quadrature import SphereQuadrature, build_quadrature
from .spectral import Grid, SpectralField, leray_project, nonlinear_term, shift_field
from .stats import correlation_set, flatness, isotropy_deviation, structure_functions

__all__ = [
    "ForcingSpectrum", "Grid", "RunConfig", "SpectralField", "SphereQuadrature",
    "build_forcing", "build_quadrature", "correlation_set", "covariance_profiles",
    "default_spectrum", "energy_report", "flatness", "isotropy_deviation",
    "khm_budget", "leray_project", "necessary_condition_report", "nonlinear_term",
    "ou_benchmark", "prop_triv_bounds", "shift_field", "simulate_stationary",
    "step", "structure_functions",
]
