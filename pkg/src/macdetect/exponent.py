"""Asymptotic error exponents of the normalized LLR test.

Every functional integrates over the frequency grid with per-node weights;
nodes outside the relevant set simply carry zero weight (or zero SNR, which
contributes nothing to any integrand).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, OutOfRangeError
from .kernels import info_density
from .spectra import FrequencyGrid, SpectralDensity

TSTAR_LO = -1.0 + 1e-12
TSTAR_HI = -1e-12
TSTAR_MAXITER = 200
TSTAR_TOL = 1e-10
BOUNDARY_SNAP = 1e-9


@dataclass(frozen=True, eq=False)
class SnrSpectrum:
    """Sampled SNR spectrum ``gamma`` with quadrature ``weights``.

    ``nodes`` (optional) are the grid frequencies, used only to report where
    a domain condition fails.
    """

    gamma: np.ndarray
    weights: np.ndarray
    detector: str = "CD"
    nodes: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float).ravel()
        w = np.broadcast_to(np.asarray(self.weights, dtype=float), g.shape).ravel()
        if np.any(g < 0) or not np.all(np.isfinite(g)):
            raise DomainError("SNR spectrum must be finite and non-negative")
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "weights", w)

    @classmethod
    def constant(cls, value: float, size: int = 1) -> SnrSpectrum:
        return cls(np.full(size, float(value)), np.full(size, 1.0 / size))

    @classmethod
    def centralized(cls, psd: SpectralDensity, sigma_v2: float, grid: FrequencyGrid | None = None):
        grid = grid or FrequencyGrid.default(psd.dimension)
        return cls(psd.samples(grid) / sigma_v2, grid.cell, "CD", grid.nodes)

    @classmethod
    def decentralized(cls, phi, xi, sigma_v2, sigma_w2, weights, nodes=None):
        """``xi phi / (xi sigma_v^2 + sigma_w^2)`` with explicit weights (mode set and occupancy)."""
        xi = np.asarray(xi, dtype=float)
        gamma = xi * np.asarray(phi, dtype=float) / (xi * sigma_v2 + sigma_w2)
        return cls(gamma, weights, "DD", nodes)

    def integrate(self, values) -> float:
        return float(np.dot(self.weights, values))

    @property
    def measure(self) -> float:
        return float(self.weights.sum())

    def _where(self, i: int) -> str:
        if self.nodes is None:
            return f"node {i}"
        return f"node {i} (nu={np.round(self.nodes[i], 6).tolist()})"


def m0(G: SnrSpectrum) -> float:
    g = G.gamma
    return G.integrate(g / (1.0 + g) - np.log1p(g))


def m1(G: SnrSpectrum) -> float:
    g = G.gamma
    return G.integrate(g - np.log1p(g))


def tstar_residual(G: SnrSpectrum, tau: float, t: float) -> float:
    """``integral of gamma/(1 - t gamma) - tau - integral of log(1+gamma)``; increasing in ``t``."""
    g = G.gamma
    return G.integrate(g / (1.0 - t * g)) - tau - G.integrate(np.log1p(g))


def solve_tstar(G: SnrSpectrum, tau: float) -> float:
    """Root in ``(-1, 0)`` of the saddle-point equation, by bisection."""
    lo_m, hi_m = m0(G), m1(G)
    if not lo_m < tau < hi_m:
        raise OutOfRangeError(f"threshold {tau!r} outside (m0, m1) = ({lo_m!r}, {hi_m!r})")
    lo, hi = TSTAR_LO, TSTAR_HI
    f_lo = tstar_residual(G, tau, lo)
    f_hi = tstar_residual(G, tau, hi)
    if f_lo >= 0:
        return lo
    if f_hi <= 0:
        return hi
    for _ in range(TSTAR_MAXITER):
        mid = 0.5 * (lo + hi)
        f = tstar_residual(G, tau, mid)
        if f == 0:
            return mid
        if f < 0:
            lo, f_lo = mid, f
        else:
            hi, f_hi = mid, f
        if hi - lo <= 4e-16:
            break
    # return the endpoint with the smaller residual
    return lo if -f_lo <= f_hi else hi


def _kappa_core(G: SnrSpectrum, tau: float, t: float) -> float:
    g = G.gamma
    return G.integrate(np.log1p(-t * g) + t * np.log1p(g)) + tau * t


def _branch(G: SnrSpectrum, tau: float):
    """``(kappa_m, kappa_fa)`` on the whole real line, with the boundary snap."""
    lo_m, hi_m = m0(G), m1(G)
    span = max(1.0, abs(lo_m), abs(hi_m))
    if hi_m - lo_m <= BOUNDARY_SNAP * span:
        # degenerate spectrum: both hypotheses coincide
        return max(-tau, 0.0), max(tau, 0.0)
    if tau <= lo_m + BOUNDARY_SNAP * span:
        # t* pinned at -1: kappa_m = -tau, kappa_fa = 0
        return -tau, 0.0
    if tau >= hi_m - BOUNDARY_SNAP * span:
        # t* pinned at 0: kappa_m = 0, kappa_fa = tau
        return 0.0, tau
    t = solve_tstar(G, tau)
    km = _kappa_core(G, tau, t)
    return km, km + tau


def kappa_m(G: SnrSpectrum, tau: float) -> float:
    """Miss exponent at fixed threshold (zero for ``tau >= m1``)."""
    return _branch(G, tau)[0]


def kappa_fa(G: SnrSpectrum, tau: float) -> float:
    """False-alarm exponent at fixed threshold (zero for ``tau <= m0``)."""
    return _branch(G, tau)[1]


def kappa_m_alpha(G: SnrSpectrum) -> float:
    """Miss exponent under a fixed false-alarm level: ``int 1/(1+g) + log(1+g) - 1``."""
    return G.integrate(info_density(G.gamma))


def lmgf(G: SnrSpectrum, t, hypothesis: str = "H1"):
    """Asymptotic log-MGF of the normalized LLR under ``H0`` or ``H1``."""
    g = G.gamma
    t_arr = np.atleast_1d(np.asarray(t, dtype=float))
    if hypothesis.upper() == "H1":
        arg = 1.0 - np.multiply.outer(t_arr, g)
    elif hypothesis.upper() == "H0":
        arg = 1.0 - np.multiply.outer(t_arr, g / (1.0 + g))
    else:
        raise ValueError(f"hypothesis must be 'H0' or 'H1', got {hypothesis!r}")
    bad = (arg <= 0) & (G.weights > 0)
    if np.any(bad):
        k, i = np.argwhere(bad)[0]
        raise DomainError(f"t={t_arr[k]!r} outside the LMGF domain at {G._where(i)}")
    vals = -(np.log(arg) + np.multiply.outer(t_arr, np.log1p(g))) @ G.weights
    return float(vals[0]) if np.ndim(t) == 0 else vals


def lmgf_from_psds(h0, h1, weights, t, hypothesis: str = "H1"):
    """Log-MGF written directly in terms of the two hypothesis PSD samples."""
    h0 = np.asarray(h0, dtype=float)
    h1 = np.asarray(h1, dtype=float)
    weights = np.broadcast_to(np.asarray(weights, dtype=float), h0.shape)
    other = h0 if hypothesis.upper() == "H1" else h1
    arg = 1.0 + t * (h0 - h1) / other
    if np.any((arg <= 0) & (weights > 0)):
        raise DomainError(f"t={t!r} outside the LMGF domain")
    return -float(np.dot(weights, np.log(arg) + t * np.log(h1 / h0)))


@dataclass(frozen=True)
class AssumptionReport:
    szego_integrals: tuple[float, float]
    ratio_sup: tuple[float, float]
    szego_ok: bool
    ratio_ok: bool
    offending: str | None = None

    @property
    def ok(self) -> bool:
        return self.szego_ok and self.ratio_ok


def check_assumptions(h0, h1, weights=None, nodes=None, bound: float = 1e12) -> AssumptionReport:
    """Grid diagnostics for the Szego-class and bounded-ratio conditions.

    Both PSDs must be strictly positive and finite on every weighted node, and
    ``h1/h0`` and ``h0/h1`` must stay below ``bound``.
    """
    h0 = np.asarray(h0, dtype=float).ravel()
    h1 = np.asarray(h1, dtype=float).ravel()
    if weights is None:
        weights = np.full(h0.size, 1.0 / h0.size)
    w = np.broadcast_to(np.asarray(weights, dtype=float), h0.shape)
    live = w > 0

    def where(i):
        return f"node {i}" if nodes is None else f"node {i} (nu={np.round(np.asarray(nodes)[i], 6).tolist()})"

    offending = None
    bad = live & ~((h0 > 0) & (h1 > 0) & np.isfinite(h0) & np.isfinite(h1))
    if np.any(bad):
        i = int(np.flatnonzero(bad)[0])
        offending = f"non-positive or non-finite PSD value at {where(i)}"
        return AssumptionReport((np.inf, np.inf), (np.inf, np.inf), False, False, offending)
    s0 = float(np.dot(w, np.abs(np.log(h0))))
    s1 = float(np.dot(w, np.abs(np.log(h1))))
    r10 = float(np.max((h1 / h0)[live])) if np.any(live) else 1.0
    r01 = float(np.max((h0 / h1)[live])) if np.any(live) else 1.0
    ratio_ok = r10 < bound and r01 < bound
    if not ratio_ok:
        i = int(np.argmax(np.where(live, np.maximum(h1 / h0, h0 / h1), 0)))
        offending = f"PSD ratio exceeds {bound:g} at {where(i)}"
    return AssumptionReport((s0, s1), (r10, r01), bool(np.isfinite(s0) and np.isfinite(s1)), ratio_ok, offending)


def check_snr_assumptions(G: SnrSpectrum) -> AssumptionReport:
    """Assumption check on the normalized pair ``h0 = 1``, ``h1 = 1 + gamma``."""
    return check_assumptions(np.ones_like(G.gamma), 1.0 + G.gamma, G.weights, G.nodes)


@dataclass(frozen=True)
class ExponentReport:
    m0: float
    m1: float
    tau: float
    t_star: float
    kappa_fa: float
    kappa_m: float
    kappa_m_alpha: float
    beta_star: float | None = None
    assumptions: AssumptionReport | None = None

    def as_row(self) -> dict:
        row = {k: getattr(self, k) for k in ("m0", "m1", "tau", "t_star", "kappa_fa", "kappa_m", "kappa_m_alpha")}
        row["beta_star"] = np.nan if self.beta_star is None else self.beta_star
        return row


def exponent_report(G: SnrSpectrum, tau: float | None = None, beta_star: float | None = None) -> ExponentReport:
    """All exponents for one SNR spectrum; ``tau`` defaults to the midpoint of ``(m0, m1)``.

    The assumption check runs first and is attached to the report.
    """
    assumptions = check_snr_assumptions(G)
    a, b = m0(G), m1(G)
    if tau is None:
        tau = 0.5 * (a + b)
    km, kfa = _branch(G, tau)
    try:
        t = solve_tstar(G, tau)
    except OutOfRangeError:
        t = -1.0 if tau <= a else 0.0
    return ExponentReport(a, b, float(tau), t, kfa, km, kappa_m_alpha(G), beta_star, assumptions)
