"""Energy profiles for the decentralized detector and the optimal allocation.

An :class:`EnergyProfile` stores per-node energies ``xi`` together with an
``occupancy`` in ``[0, 1]``. Occupancy is 1 on the support and 0 elsewhere,
except at the single group of marginal nodes of an optimal profile, where a
fractional value time-shares the node between "off" and its entry energy.
That is what lets the budget be met exactly on a finite grid even though the
allocation jumps from 0 to a positive entry energy as the multiplier drops.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import kernels
from .errors import BudgetError, DegenerateSpectrumError, ProfileError
from .exponent import SnrSpectrum, kappa_m_alpha
from .spectra import FrequencyGrid, ModeSet, SpectralDensity, transmitted_modes

LAMBDA_FLOOR_RATIO = 1e-12
BUDGET_RTOL = 1e-8
KKT_TOL = 1e-6


@dataclass(frozen=True)
class EnergyParams:
    """Noise powers, energy and the derived per-node budget ``c``."""

    sigma_s2: float
    sigma_v2: float
    sigma_w2: float
    energy: float = 1.0

    def __post_init__(self):
        for name in ("sigma_s2", "sigma_v2", "sigma_w2", "energy"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @classmethod
    def from_snr(cls, snr_m_db: float, snr_c_db: float, sigma_s2: float = 1.0, energy: float = 1.0):
        """``SNR_M = sigma_s^2/sigma_v^2`` and ``SNR_C = E_t/sigma_w^2`` in dB."""
        return cls(sigma_s2, sigma_s2 / 10 ** (snr_m_db / 10), energy / 10 ** (snr_c_db / 10), energy)

    @property
    def budget(self) -> float:
        return self.energy / (self.sigma_s2 + self.sigma_v2)

    def with_snr_c(self, snr_c_db: float) -> EnergyParams:
        return EnergyParams(self.sigma_s2, self.sigma_v2, self.energy / 10 ** (snr_c_db / 10), self.energy)


@dataclass(frozen=True, eq=False)
class EnergyProfile:
    grid: FrequencyGrid
    xi: np.ndarray
    occupancy: np.ndarray
    budget: float
    kind: str = "Custom"
    domain: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float).ravel()
        occ = np.broadcast_to(np.asarray(self.occupancy, dtype=float), xi.shape).copy()
        if xi.size != self.grid.size:
            raise ProfileError(f"profile has {xi.size} samples for a grid of {self.grid.size}")
        if np.any(xi < 0) or not np.all(np.isfinite(xi)):
            raise ProfileError("energy profile must be finite and non-negative")
        if np.any(occ < 0) or np.any(occ > 1):
            raise ProfileError("occupancy must lie in [0, 1]")
        dom = np.ones(xi.size, bool) if self.domain is None else np.asarray(self.domain, bool).ravel()
        if np.any((xi > 0) & (occ > 0) & ~dom):
            raise ProfileError("profile allocates energy outside its domain")
        occ[xi == 0] = 0.0
        for a in (xi, occ, dom):
            a.setflags(write=False)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "occupancy", occ)
        object.__setattr__(self, "domain", dom)

    @property
    def weights(self) -> np.ndarray:
        return self.occupancy * self.grid.cell

    @property
    def support(self) -> np.ndarray:
        return self.occupancy > 0

    @property
    def beta_star(self) -> float:
        return float(self.occupancy.sum() * self.grid.cell)

    @property
    def integral(self) -> float:
        return float(np.dot(self.weights, self.xi))

    @property
    def budget_residual(self) -> float:
        """Relative mismatch ``(integral - c)/c``."""
        return (self.integral - self.budget) / self.budget

    def effective(self) -> np.ndarray:
        """Occupancy-weighted energy per node, ``theta * xi``."""
        return self.occupancy * self.xi


def _domain(grid, modes):
    if modes is None:
        return np.ones(grid.size, bool)
    return np.asarray(modes.indicator if isinstance(modes, ModeSet) else modes, bool).ravel()


def profile_cep(params: EnergyParams, grid: FrequencyGrid, modes=None) -> EnergyProfile:
    """Constant profile ``xi = c`` over the band, or ``c/beta`` over a mode set."""
    dom = _domain(grid, modes)
    beta = dom.mean()
    if beta == 0:
        raise DegenerateSpectrumError("empty mode set")
    xi = np.where(dom, params.budget / beta, 0.0)
    return EnergyProfile(grid, xi, dom.astype(float), params.budget, "CEP", dom)


def profile_sep(psd, params: EnergyParams, grid: FrequencyGrid, modes=None) -> EnergyProfile:
    """Profile proportional to the PSD.

    Over the full band this is ``E_t phi / (sigma_s^2 (sigma_v^2 + sigma_s^2))``;
    on a mode set it is rescaled so the restricted integral equals ``c``.
    """
    phi = psd.samples(grid) if isinstance(psd, SpectralDensity) else np.asarray(psd, dtype=float).ravel()
    dom = _domain(grid, modes)
    if modes is None:
        xi = params.energy * phi / (params.sigma_s2 * (params.sigma_v2 + params.sigma_s2))
    else:
        mass = grid.cell * phi[dom].sum()
        if not mass > 0:
            raise DegenerateSpectrumError("PSD vanishes on the mode set")
        xi = np.where(dom, params.budget * phi / mass, 0.0)
    return EnergyProfile(grid, xi, dom.astype(float), params.budget, "SEP", dom)


def profile_onoff(support, params: EnergyParams, grid: FrequencyGrid | None = None) -> EnergyProfile:
    """Flat ``c / beta*`` over a support set.

    ``support`` is a :class:`ModeSet`, a boolean mask (``grid`` required), or an
    :class:`EnergyProfile` whose occupancy (possibly fractional) is reused.
    """
    if isinstance(support, EnergyProfile):
        grid, occ, dom = support.grid, support.occupancy, support.domain
    elif isinstance(support, ModeSet):
        grid, occ, dom = support.grid, support.indicator.astype(float), support.indicator
    else:
        if grid is None:
            raise ValueError("grid required for a mask support")
        dom = np.asarray(support, bool).ravel()
        occ = dom.astype(float)
    beta_star = occ.sum() * grid.cell
    if beta_star <= 0:
        raise DegenerateSpectrumError("ON/OFF profile needs a support of positive measure")
    xi = np.where(occ > 0, params.budget / beta_star, 0.0)
    return EnergyProfile(grid, xi, occ, params.budget, "ONOFF", dom)


def dd_spectrum(profile: EnergyProfile, psd, params: EnergyParams) -> SnrSpectrum:
    phi = psd.samples(profile.grid) if isinstance(psd, SpectralDensity) else np.asarray(psd, dtype=float).ravel()
    return SnrSpectrum.decentralized(phi, profile.xi, params.sigma_v2, params.sigma_w2, profile.weights)


def profile_kappa(profile: EnergyProfile, psd, params: EnergyParams) -> float:
    """Miss exponent at a fixed false-alarm level for a given profile."""
    return kappa_m_alpha(dd_spectrum(profile, psd, params))


def oep_cubic_roots(phi, lam, sigma_v2, sigma_w2) -> np.ndarray:
    """Real roots (descending, NaN padded) of the per-node stationarity cubic."""
    return kernels.cubic_roots(*kernels.oep_coefficients(np.atleast_1d(phi), lam, sigma_v2, sigma_w2))


@dataclass(frozen=True)
class KktCertificate:
    lam: float
    gradient_violation: float
    stationarity_violation: float
    stationarity_relative: float
    sign_violation: float
    budget_residual: float
    lagrangian_gap: float
    tol: float = KKT_TOL
    budget_tol: float = BUDGET_RTOL

    @property
    def flags(self) -> dict:
        return {
            "gradient_bound": self.gradient_violation <= self.tol,
            "support_stationarity": max(self.stationarity_violation, self.stationarity_relative) <= self.tol,
            "multiplier_sign": self.sign_violation <= 0.0,
            "budget_saturation": abs(self.budget_residual) <= self.budget_tol or self.lam == 0.0,
        }

    @property
    def ok(self) -> bool:
        return all(self.flags.values())


def kkt_certify(profile: EnergyProfile, lam: float, psd, params: EnergyParams,
                tol: float = KKT_TOL, budget_tol: float = BUDGET_RTOL) -> KktCertificate:
    """First-order optimality check of a profile against a multiplier.

    Flags: ``gradient_bound`` (``I'(xi) <= lam`` on the domain),
    ``support_stationarity`` (``I'(xi) = lam`` on the support, absolute and
    relative to ``lam``), ``multiplier_sign`` (``lam >= 0``) and
    ``budget_saturation`` (budget met whenever ``lam > 0``). ``lagrangian_gap`` additionally measures how
    far each domain node is from maximizing ``I(xi) - lam xi`` over
    ``xi >= 0`` (zero for a global per-node optimum).
    """
    phi = psd.samples(profile.grid) if isinstance(psd, SpectralDensity) else np.asarray(psd, dtype=float).ravel()
    v, w = params.sigma_v2, params.sigma_w2
    dom = profile.domain
    xi = profile.xi
    grad = kernels.marginal_gain(xi, phi, v, w)
    g_viol = float(np.max(np.maximum(grad - lam, 0.0)[dom], initial=0.0))
    on = profile.support
    if np.any(on):
        dev = np.abs(grad[on] - lam)
        s_viol = float(dev.max())
        s_rel = float(dev.max() / lam) if lam > 0 else np.inf
    else:
        s_viol = s_rel = 0.0
    sign = max(0.0, -float(lam))
    resid = profile.budget_residual
    lam_e, xi_e = kernels.oep_entry(phi[dom], v, w, True)
    best = np.zeros(lam_e.shape)
    live = lam_e > lam
    if np.any(live):
        xb = kernels.oep_allocate(phi[dom][live], lam, v, w, lam_e[live], xi_e[live])
        best[live] = kernels.info_density(kernels.snr_gain(xb, phi[dom][live], v, w)) - lam * xb
    here = kernels.info_density(kernels.snr_gain(xi[dom], phi[dom], v, w)) - lam * xi[dom]
    gap = float(np.max(np.maximum(best - here, 0.0), initial=0.0))
    return KktCertificate(float(lam), g_viol, s_viol, s_rel, sign, resid, gap, tol, budget_tol)


@dataclass(frozen=True)
class OepResult:
    profile: EnergyProfile
    lam: float
    certificate: KktCertificate
    modes: ModeSet
    evaluations: int = 0
    monotone: bool = True

    def __iter__(self):
        return iter((self.profile, self.lam, self.certificate))


class _Allocator:
    """Budget ``E(lam)`` for a fixed set of nodes on the mode set."""

    def __init__(self, phi, v, w, cell, lagrangian):
        self.phi, self.v, self.w, self.cell = phi, v, w, cell
        self.lam_e, self.xi_e = kernels.oep_entry(phi, v, w, lagrangian)
        self.calls = 0

    def alloc(self, lam, active):
        xi = np.zeros(self.phi.shape)
        if np.any(active):
            xi[active] = kernels.oep_allocate(
                self.phi[active], lam, self.v, self.w, self.lam_e[active], self.xi_e[active]
            )
        self.calls += 1
        return xi

    def energy(self, lam, active):
        return float(self.alloc(lam, active).sum() * self.cell)


SUPPORT_RULES = ("max-root", "lagrangian")


def solve_oep(psd, beta: float, params: EnergyParams, grid: FrequencyGrid | None = None,
              rule: str = "max-root", tol: float = KKT_TOL) -> OepResult:
    """Optimal energy profile on the ``beta`` mode set with the budget met exactly.

    Each node has an entry multiplier: it is switched on once ``lam`` drops to
    that value, at which point its energy jumps from 0 to an entry energy and
    then follows the largest positive root of the stationarity cubic.

    ``rule="max-root"`` (default) switches a node on as soon as the cubic has
    positive roots, i.e. at the peak of its marginal gain. ``rule="lagrangian"``
    waits until ``I(xi) - lam xi`` first reaches 0, which makes every node a
    global maximizer of its own Lagrangian and gives a larger exponent when
    few nodes are active (low communication SNR).

    The search walks the sorted entry multipliers: if the budget falls inside
    the jump of one group of tied nodes, ``lam*`` is that group's multiplier
    and the group receives fractional occupancy; otherwise ``lam*`` is found
    by Brent's method between consecutive entry multipliers.
    """
    if rule not in SUPPORT_RULES:
        raise ValueError(f"rule must be one of {SUPPORT_RULES}, got {rule!r}")
    if isinstance(psd, SpectralDensity):
        grid = grid or FrequencyGrid.default(psd.dimension)
        phi_all = psd.samples(grid)
    else:
        phi_all = np.asarray(psd, dtype=float).ravel()
        grid = grid or FrequencyGrid(1, phi_all.size)
    modes = transmitted_modes(phi_all, beta, grid)
    dom = modes.indicator
    v, w, c = params.sigma_v2, params.sigma_w2, params.budget
    idx = np.flatnonzero(dom)
    A = _Allocator(phi_all[idx], v, w, grid.cell, rule == "lagrangian")

    levels = np.unique(A.lam_e[A.lam_e > 0])[::-1]
    if levels.size == 0:
        raise BudgetError("PSD vanishes on the whole mode set; no allocation can use the budget")

    def incl(k):
        return A.energy(levels[k], A.lam_e >= levels[k])

    # smallest k with E_incl(levels[k]) >= c
    lo, hi = 0, levels.size
    probes = {}
    while lo < hi:
        mid = (lo + hi) // 2
        probes[mid] = incl(mid)
        if probes[mid] >= c:
            hi = mid
        else:
            lo = mid + 1
    k = lo
    monotone = all(probes[a] <= probes[b] for a in probes for b in probes if a < b)
    if not monotone:
        # fall back to an exhaustive scan of the breakpoints
        vals = np.array([incl(j) for j in range(levels.size)])
        hit = np.flatnonzero(vals >= c)
        k = int(hit[0]) if hit.size else levels.size

    theta = np.ones(idx.size)
    if k < levels.size:
        L = levels[k]
        excl_active = A.lam_e > L
        e_excl = A.energy(L, excl_active)
        e_incl = A.energy(L, A.lam_e >= L)
        if e_excl >= c and k > 0:
            active = excl_active
            lam = _bisect_budget(A, active, c, L, levels[k - 1])
        else:
            lam = float(L)
            active = A.lam_e >= L
            group = A.lam_e == L
            theta[group] = (c - e_excl) / (e_incl - e_excl)
    else:
        active = A.lam_e > 0
        upper = levels[-1]
        lower = upper
        # relative floor: entry multipliers scale like phi^2 for weak nodes
        floor = LAMBDA_FLOOR_RATIO * upper
        while A.energy(lower, active) < c:
            if lower < floor:
                raise BudgetError(
                    f"budget c={c:g} not reached for multipliers down to {floor:g} "
                    f"(energy there {A.energy(lower, active):.6g})"
                )
            lower *= 0.5
        lam = _bisect_budget(A, active, c, lower, upper)

    xi_m = A.alloc(lam, active)
    theta = np.where(xi_m > 0, theta, 0.0)
    xi = np.zeros(grid.size)
    occ = np.zeros(grid.size)
    xi[idx] = xi_m
    occ[idx] = theta
    profile = EnergyProfile(grid, xi, occ, c, "OEP", dom)
    cert = kkt_certify(profile, lam, phi_all, params, tol)
    return OepResult(profile, lam, cert, modes, A.calls, monotone)


def _bisect_budget(A: _Allocator, active, c, lo, hi):
    """Multiplier in ``[lo, hi]`` with ``E(lam) = c`` for a fixed active set."""

    def f(loglam):
        return A.energy(np.exp(loglam), active) / c - 1.0

    a, b = np.log(lo), np.log(hi)
    fa, fb = f(a), f(b)
    if fa < 0 or fb > 0:
        raise BudgetError(f"budget not bracketed on [{lo:g}, {hi:g}] (residuals {fa:.3g}, {fb:.3g})")
    if fa == 0:
        return float(lo)
    if fb == 0:
        return float(hi)
    return float(np.exp(brentq(f, a, b, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)))


def energy_vs_multiplier(psd, beta, params, lams, grid=None, rule="max-root") -> np.ndarray:
    """``E(lam)`` with every node whose entry multiplier is ``>= lam`` switched on (no time-sharing)."""
    if isinstance(psd, SpectralDensity):
        grid = grid or FrequencyGrid.default(psd.dimension)
        phi = psd.samples(grid)
    else:
        phi = np.asarray(psd, dtype=float).ravel()
        grid = grid or FrequencyGrid(1, phi.size)
    dom = transmitted_modes(phi, beta, grid).indicator
    A = _Allocator(phi[dom], params.sigma_v2, params.sigma_w2, grid.cell, rule == "lagrangian")
    return np.array([A.energy(lam, A.lam_e >= lam) for lam in np.atleast_1d(lams)])


def write_profile_csv(path, profile: EnergyProfile) -> None:
    """Columns ``nu, xi, occupancy`` (1-D grids) with 12 significant digits."""
    nodes = profile.grid.nodes
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        if profile.grid.dimension == 1:
            wr.writerow(["nu", "xi", "occupancy"])
            rows = zip(nodes, profile.xi, profile.occupancy)
            wr.writerows([f"{a:.12g}", f"{b:.12g}", f"{c:.12g}"] for a, b, c in rows)
        else:
            wr.writerow([f"nu{i + 1}" for i in range(profile.grid.dimension)] + ["xi", "occupancy"])
            for nu, x, o in zip(nodes, profile.xi, profile.occupancy):
                wr.writerow([f"{t:.12g}" for t in nu] + [f"{x:.12g}", f"{o:.12g}"])
