"""Numerical experiments behind the command-line runner.

Each function returns plain tables (lists of dicts with a fixed key order) so
the runner can write them as CSV without knowing what they contain.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .energy import EnergyParams, profile_cep, profile_kappa, profile_onoff, profile_sep, solve_oep
from .exponent import SnrSpectrum, kappa_m_alpha
from .montecarlo import TrialConfig, run_experiment
from .spectra import FrequencyGrid, toeplitz_covariance, transmitted_modes
from .toeplitz import circulant_from_samples, equivalence_gap, szego_sample_gap, toeplitz_distribution_check

CURVES = ("CD", "CEP", "SEP", "ONOFF", "OEP")


def sweep(start: float, stop: float, step: float) -> np.ndarray:
    """Inclusive uniform sweep; endpoints are exact multiples of ``step`` from ``start``."""
    count = int(np.floor((stop - start) / step + 1e-9)) + 1
    return start + step * np.arange(count)


def _map(fn, items, workers):
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


def curve_values(psd, curves, beta, params: EnergyParams, grid, rule="max-root", restrict=True) -> dict:
    """Miss exponents (fixed false-alarm level) of every requested curve at one operating point.

    With ``restrict`` the CEP and SEP curves live on the same ``beta`` mode
    set as the optimal profile (renormalized to the budget); otherwise they
    use the full band.
    """
    out = {}
    need_oep = {"OEP", "ONOFF"} & set(curves)
    res = solve_oep(psd, beta, params, grid, rule=rule) if need_oep else None
    modes = transmitted_modes(psd, beta, grid) if restrict and beta < 1 else None
    for name in curves:
        if name == "CD":
            out[name] = kappa_m_alpha(SnrSpectrum.centralized(psd, params.sigma_v2, grid))
        elif name == "CEP":
            out[name] = profile_kappa(profile_cep(params, grid, modes), psd, params)
        elif name == "SEP":
            out[name] = profile_kappa(profile_sep(psd, params, grid, modes), psd, params)
        elif name == "ONOFF":
            out[name] = profile_kappa(profile_onoff(res.profile, params), psd, params)
        elif name == "OEP":
            out[name] = profile_kappa(res.profile, psd, params)
            out["beta_star"] = res.profile.beta_star
            out["lambda"] = res.lam
        else:
            raise ValueError(f"unknown curve {name!r}")
    return out


def exponent_vs_snrc(psd, snrs, curves=CURVES, beta=0.6, snr_m_db=5.0, energy=1.0, grid=None,
                     rule="max-root", restrict=False, workers=1) -> dict:
    """One table per curve: ``snr_c_db, kappa_m, log10_kappa_m`` (plus ``beta_star`` for OEP)."""
    grid = grid or FrequencyGrid.default(psd.dimension)
    base = EnergyParams.from_snr(snr_m_db, 0.0, psd.variance, energy)

    def point(snr):
        return curve_values(psd, curves, beta, base.with_snr_c(snr), grid, rule, restrict)

    values = _map(point, list(snrs), workers)
    tables = {}
    for name in curves:
        rows = []
        for snr, val in zip(snrs, values):
            row = {"snr_c_db": float(snr), "kappa_m": val[name], "log10_kappa_m": _log10(val[name])}
            if name == "OEP":
                row["beta_star"] = val["beta_star"]
                row["lambda"] = val["lambda"]
            rows.append(row)
        tables[name] = rows
    return tables


def _log10(x):
    return float(np.log10(x)) if x > 0 else float("-inf")


def beta_star_vs_beta(psd, betas, snr_c_db, snr_m_db=5.0, energy=1.0, grid=None, rule="max-root", workers=1):
    grid = grid or FrequencyGrid.default(psd.dimension)
    params = EnergyParams.from_snr(snr_m_db, snr_c_db, psd.variance, energy)

    def point(beta):
        r = solve_oep(psd, beta, params, grid, rule=rule)
        return {"beta": float(beta), "beta_star": r.profile.beta_star, "lambda": r.lam,
                "kappa_m": profile_kappa(r.profile, psd, params)}

    return _map(point, list(betas), workers)


def energy_profile(psd, beta, snr_c_db, snr_m_db=5.0, energy=1.0, grid=None, rule="max-root"):
    grid = grid or FrequencyGrid.default(psd.dimension)
    params = EnergyParams.from_snr(snr_m_db, snr_c_db, psd.variance, energy)
    r = solve_oep(psd, beta, params, grid, rule=rule)
    phi = psd.samples(grid)
    nodes = grid.nodes
    rows = []
    for i in range(grid.size):
        row = {"nu": float(nodes[i])} if grid.dimension == 1 else {f"nu{k + 1}": float(nodes[i, k]) for k in range(grid.dimension)}
        row.update(phi=float(phi[i]), xi=float(r.profile.xi[i]), occupancy=float(r.profile.occupancy[i]))
        rows.append(row)
    return rows, r


def crossing(snrs, kappas, level: float) -> float:
    """SNR at which a nondecreasing exponent curve first reaches ``level`` (log-linear interpolation)."""
    y = np.log10(np.maximum(np.asarray(kappas, dtype=float), 1e-300))
    target = np.log10(level)
    hit = np.flatnonzero(y >= target)
    if hit.size == 0 or hit[0] == 0:
        return float("nan")
    i = hit[0]
    return float(snrs[i - 1] + (target - y[i - 1]) / (y[i] - y[i - 1]) * (snrs[i] - snrs[i - 1]))


def energy_gap_table(psd, levels, beta, snrs, snr_m_db=5.0, energy=1.0, grid=None, rule="max-root",
                     profiles=("SEP", "OEP"), workers=1):
    """Horizontal dB distance to the CEP curve at each exponent level (positive means energy saved)."""
    tables = exponent_vs_snrc(psd, snrs, ("CEP",) + tuple(profiles), beta, snr_m_db, energy, grid, rule,
                              restrict=False, workers=workers)
    cep = [r["kappa_m"] for r in tables["CEP"]]
    rows = []
    for level in levels:
        ref = crossing(snrs, cep, level)
        for name in profiles:
            at = crossing(snrs, [r["kappa_m"] for r in tables[name]], level)
            rows.append({"kappa_level": float(level), "profile": name, "snr_c_cep_db": ref,
                         "snr_c_db": at, "gap_db": ref - at})
    return rows, tables


def toeplitz_convergence(psd, orders, snr_m_db=5.0, grid=None):
    """Distribution-theorem gap for ``F(x) = log(1 + x/sigma_v^2)`` and Toeplitz/circulant gaps."""
    grid = grid or FrequencyGrid.default(psd.dimension)
    sigma_v2 = psd.variance / 10 ** (snr_m_db / 10)

    def F(x):
        return np.log1p(np.maximum(x, 0.0) / sigma_v2)

    rows = []
    for n in orders:
        fin, lim, gap = toeplitz_distribution_check(psd, F, int(n), grid)
        T = toeplitz_covariance(psd, int(n))
        rows.append({
            "n": int(n), "finite_average": fin, "limit_integral": lim, "gap": gap,
            "relative_gap": gap / abs(lim), "szego_sample_gap": szego_sample_gap(psd, int(n)),
            "toeplitz_circulant_gap": equivalence_gap(T, circulant_from_samples(psd, int(n))),
        })
    return rows


def mc_2d(cfg: TrialConfig):
    return [r.as_row() for r in run_experiment(cfg)]
