"""Finite-n Monte Carlo validation of the miss exponent.

Random numbers come in fixed-size blocks. Block ``b`` of hypothesis set ``h``
at problem size ``shape`` draws from
``SeedSequence(seed, spawn_key=(h, b, *shape))``, so the result never depends
on how many workers process the blocks or in which order. Within a block all
strategies see the same measurements and the same channel-noise draws
(common random numbers), which sharpens strategy comparisons.
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .detector import LlrEvaluator, build_pcs_precoder, build_pfs_precoder, dd_covariances, mac_observe
from .energy import EnergyParams, profile_cep, profile_kappa, profile_onoff, profile_sep, solve_oep
from .errors import CalibrationError, ConditioningError
from .exponent import SnrSpectrum, kappa_m_alpha
from .spectra import (
    CovarianceMatrix,
    FrequencyGrid,
    PdePsd,
    Pde2dProcess,
    SpectralDensity,
    complex_normal,
    toeplitz_covariance,
)

# hypothesis stream codes
H0_CALIBRATION, H0_EVALUATION, H1 = 0, 1, 2
BLOCK_SIZE = 512
STRATEGIES = ("CD", "PCS", "PFS")
PROFILES = ("OEP", "CEP", "SEP", "ONOFF")


@dataclass(frozen=True)
class TrialConfig:
    psd: SpectralDensity
    orders: tuple
    snr_m_db: float = 5.0
    snr_c_db: float = -10.0
    energy: float = 1.0
    beta: float = 1.0
    profile: str = "OEP"
    strategies: tuple = STRATEGIES
    trials: int = 20000
    calibration_trials: int | None = None
    alpha: float = 1e-2
    seed: int = 0
    streams: int = 1
    grid: FrequencyGrid | None = None
    block_size: int = BLOCK_SIZE

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.profile not in PROFILES:
            raise ValueError(f"profile must be one of {PROFILES}")
        bad = set(self.strategies) - set(STRATEGIES)
        if bad:
            raise ValueError(f"unknown strategies {sorted(bad)}")
        if self.trials < 1 or self.streams < 1 or self.block_size < 1:
            raise ValueError("trials, streams and block size must be positive")
        if min(self.trials, self.n_calibration) < 10 / self.alpha:
            warnings.warn(
                f"fewer than 10/alpha = {10 / self.alpha:g} trials; quantile calibration will be unreliable",
                stacklevel=2,
            )

    @property
    def n_calibration(self) -> int:
        return self.trials if self.calibration_trials is None else self.calibration_trials

    @property
    def params(self) -> EnergyParams:
        return EnergyParams.from_snr(self.snr_m_db, self.snr_c_db, self.psd.variance, self.energy)

    def shapes(self):
        for o in self.orders:
            yield (int(o),) if np.ndim(o) == 0 else tuple(int(x) for x in o)


@dataclass(frozen=True)
class McEstimate:
    n: int
    shape: tuple
    strategy: str
    tau: float
    p_fa: float
    p_fa_se: float
    p_m: float
    p_m_se: float
    exponent: float
    exponent_se: float
    censored: bool
    theory: float
    trials_calibration: int
    trials_h0: int
    trials_h1: int
    seed: int

    CSV_COLUMNS = (
        "n", "shape", "strategy", "P_fa_hat", "P_fa_se", "P_m_hat", "P_m_se",
        "exponent_hat", "stderr", "censored", "exponent_theory", "tau_hat",
        "trials_calibration", "trials_h0", "trials_h1", "seed",
    )

    def as_row(self) -> dict:
        return {
            "n": self.n,
            "shape": "x".join(map(str, self.shape)),
            "strategy": self.strategy,
            "P_fa_hat": self.p_fa,
            "P_fa_se": self.p_fa_se,
            "P_m_hat": self.p_m,
            "P_m_se": self.p_m_se,
            "exponent_hat": self.exponent,
            "stderr": self.exponent_se,
            "censored": int(self.censored),
            "exponent_theory": self.theory,
            "tau_hat": self.tau,
            "trials_calibration": self.trials_calibration,
            "trials_h0": self.trials_h0,
            "trials_h1": self.trials_h1,
            "seed": self.seed,
        }


def binomial_se(p: float, trials: int) -> float:
    return math.sqrt(max(p * (1.0 - p), 0.0) / trials)


def sample_measurement(cov, rng: np.random.Generator, count: int = 1, noise_power: float = 0.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian columns with covariance ``cov`` (+ white noise).

    ``cov`` is a matrix (factored by Cholesky, with an eigen-factor fallback
    for singular PSD matrices) or a :class:`Pde2dProcess`, sampled by solving
    ``A s = q``.
    """
    if isinstance(cov, Pde2dProcess):
        x = cov.sample(rng, count)
        n = cov.n
    else:
        S = np.asarray(cov.matrix if isinstance(cov, CovarianceMatrix) else cov)
        n = S.shape[0]
        x = _factor(S) @ complex_normal(rng, (n, count))
    if noise_power > 0:
        x = x + np.sqrt(noise_power) * complex_normal(rng, (n, count))
    return x


def _factor(S):
    try:
        return sla.cholesky(S, lower=True)
    except np.linalg.LinAlgError:
        lam, U = np.linalg.eigh(S)
        if lam[0] < -1e-10 * max(1.0, abs(lam[-1])):
            raise ConditioningError(f"covariance has negative eigenvalue {lam[0]:.3g}") from None
        return U * np.sqrt(np.maximum(lam, 0.0))


def calibrate_threshold(statistics, alpha: float) -> float:
    """Empirical ``(1 - alpha)`` quantile of H0 statistics (``higher`` rule)."""
    x = np.asarray(statistics, dtype=float).ravel()
    need = math.ceil(10 / alpha)
    if x.size < need:
        raise CalibrationError(f"{x.size} H0 trials; need at least {need} for alpha={alpha:g}")
    return float(np.quantile(x, 1.0 - alpha, method="higher"))


class _Instance:
    """Everything needed to simulate one problem size."""

    def __init__(self, cfg: TrialConfig, shape, profile):
        self.cfg = cfg
        self.shape = shape
        self.n = int(np.prod(shape))
        P = cfg.params
        self.sigma_v2, self.sigma_w2 = P.sigma_v2, P.sigma_w2
        psd = cfg.psd
        if isinstance(psd, PdePsd):
            self.process = Pde2dProcess.from_psd(psd, *shape)
            sigma = self.process.covariance()
        else:
            sigma = toeplitz_covariance(psd, shape if len(shape) > 1 else shape[0])
            self.process = None
        self.sigma = sigma.matrix
        self.h1_factor = None if self.process is not None else _factor(self.sigma)
        self.evals = {}
        self.precoders = {}
        for strat in cfg.strategies:
            if strat == "CD":
                eye = np.eye(self.n)
                self.evals[strat] = LlrEvaluator(self.sigma_v2 * eye, self.sigma + self.sigma_v2 * eye, self.n)
                continue
            if strat == "PCS":
                C = build_pcs_precoder(sigma, cfg.beta, profile, psd, self.sigma_v2,
                                       budget=P.budget, shape=shape)
            else:
                C = build_pfs_precoder(psd, shape if len(shape) > 1 else shape[0], cfg.beta, profile,
                                       self.sigma_v2, budget=P.budget)
            src = self.process if self.process is not None else self.sigma
            X0, X1 = dd_covariances(C, src, self.sigma_v2, self.sigma_w2)
            self.precoders[strat] = C
            self.evals[strat] = LlrEvaluator(X0, X1, self.n)
        self.noise_dim = max([C.n_prime for C in self.precoders.values()], default=0)

    def block(self, code: int, index: int, count: int) -> np.ndarray:
        """Statistics ``(len(strategies), count)`` for one RNG block."""
        ss = np.random.SeedSequence(self.cfg.seed, spawn_key=(code, index, *self.shape))
        rng = np.random.default_rng(ss)
        v = np.sqrt(self.sigma_v2) * complex_normal(rng, (self.n, count))
        if code == H1:
            if self.process is not None:
                s = self.process.sample(rng, count)
            else:
                s = self.h1_factor @ complex_normal(rng, (self.n, count))
            x = s + v
        else:
            x = v
        w = np.sqrt(self.sigma_w2) * complex_normal(rng, (self.noise_dim, count))
        out = np.empty((len(self.cfg.strategies), count))
        for i, strat in enumerate(self.cfg.strategies):
            if strat == "CD":
                out[i] = self.evals[strat](x)
            else:
                C = self.precoders[strat]
                out[i] = self.evals[strat](mac_observe(C, x, w[: C.n_prime]))
        return out


def _run_set(inst: _Instance, code: int, trials: int, streams: int) -> np.ndarray:
    bs = inst.cfg.block_size
    sizes = [min(bs, trials - b * bs) for b in range(math.ceil(trials / bs))]
    jobs = list(enumerate(sizes))
    if streams > 1:
        with ThreadPoolExecutor(max_workers=streams) as pool:
            parts = list(pool.map(lambda j: inst.block(code, *j), jobs))
    else:
        parts = [inst.block(code, *j) for j in jobs]
    return np.concatenate(parts, axis=1)


def theoretical_exponents(cfg: TrialConfig):
    """Asymptotic miss exponents (fixed false-alarm level) and the profile used (``None`` for CD only)."""
    P = cfg.params
    grid = cfg.grid or FrequencyGrid.default(cfg.psd.dimension)
    out = {"CD": kappa_m_alpha(SnrSpectrum.centralized(cfg.psd, P.sigma_v2, grid))}
    if not {"PCS", "PFS"} & set(cfg.strategies):
        return out, None
    profile = build_profile(cfg.profile, cfg.psd, cfg.beta, P, grid)
    dd = profile_kappa(profile, cfg.psd, P)
    out.update(PCS=dd, PFS=dd)
    return out, profile


def build_profile(kind, psd, beta, params, grid, rule="max-root"):
    if kind == "OEP":
        return solve_oep(psd, beta, params, grid, rule=rule).profile
    from .spectra import transmitted_modes

    modes = transmitted_modes(psd, beta, grid) if beta < 1 else None
    if kind == "CEP":
        return profile_cep(params, grid, modes)
    if kind == "SEP":
        return profile_sep(psd, params, grid, modes)
    if kind == "ONOFF":
        return profile_onoff(solve_oep(psd, beta, params, grid, rule=rule).profile, params)
    raise ValueError(f"unknown profile {kind!r}")


def run_experiment(cfg: TrialConfig) -> list[McEstimate]:
    """Calibrate on one H0 set, evaluate on a disjoint H0 set and an H1 set, per size and strategy."""
    theory, profile = theoretical_exponents(cfg)
    results = []
    for shape in cfg.shapes():
        inst = _Instance(cfg, shape, profile)
        cal = _run_set(inst, H0_CALIBRATION, cfg.n_calibration, cfg.streams)
        h0 = _run_set(inst, H0_EVALUATION, cfg.trials, cfg.streams)
        h1 = _run_set(inst, H1, cfg.trials, cfg.streams)
        for i, strat in enumerate(cfg.strategies):
            tau = calibrate_threshold(cal[i], cfg.alpha)
            p_fa = float(np.mean(h0[i] > tau))
            misses = int(np.count_nonzero(h1[i] <= tau))
            censored = misses == 0
            p_m = misses / cfg.trials
            p_eff = 3.0 / cfg.trials if censored else p_m
            expo = -math.log(p_eff) / inst.n
            se_p = binomial_se(p_m, cfg.trials)
            expo_se = math.inf if censored else se_p / (p_m * inst.n)
            results.append(McEstimate(
                inst.n, shape, strat, tau, p_fa, binomial_se(p_fa, cfg.trials), p_m, se_p,
                expo, expo_se, censored, theory[strat], cfg.n_calibration, cfg.trials, cfg.trials, cfg.seed,
            ))
    return results
