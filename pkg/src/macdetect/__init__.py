"""Error exponents, energy allocation and Monte Carlo checks for detecting
stationary Gaussian processes with sensor networks over a multiple-access channel."""
from .energy import EnergyParams, EnergyProfile, kkt_certify, profile_cep, profile_onoff, profile_sep, solve_oep
from .exponent import SnrSpectrum, kappa_fa, kappa_m, kappa_m_alpha, lmgf, m0, m1, solve_tstar
from .kernels import BACKEND
from .spectra import FrequencyGrid, pde2d, psd1, psd2, toeplitz_covariance, transmitted_modes

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "EnergyParams",
    "EnergyProfile",
    "FrequencyGrid",
    "SnrSpectrum",
    "kappa_fa",
    "kappa_m",
    "kappa_m_alpha",
    "kkt_certify",
    "lmgf",
    "m0",
    "m1",
    "pde2d",
    "profile_cep",
    "profile_onoff",
    "profile_sep",
    "psd1",
    "psd2",
    "solve_oep",
    "solve_tstar",
    "toeplitz_covariance",
    "transmitted_modes",
]
