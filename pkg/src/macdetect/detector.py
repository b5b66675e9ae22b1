"""Orthogonal MAC precoders, the MAC observation model and LLR statistics.

A precoder is ``C = V diag(gamma)`` with orthonormal columns ``V``: either the
leading eigenvectors of the signal covariance (PCS) or DFT columns at the
largest PSD bins (PFS). Gains sample an energy profile in the same order in
which the columns are ranked.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .energy import EnergyProfile
from .errors import ConditioningError, DimensionError, ProfileError
from .spectra import CovarianceMatrix, FrequencyGrid, SpectralDensity, descending_order, omega, top_count
from .toeplitz import eigh_descending


@dataclass(frozen=True, eq=False)
class Precoder:
    V: np.ndarray
    gains: np.ndarray
    strategy: str
    per_node_energy: np.ndarray
    bins: np.ndarray | None = None

    @property
    def n(self) -> int:
        return self.V.shape[0]

    @property
    def n_prime(self) -> int:
        return self.V.shape[1]

    @property
    def matrix(self) -> np.ndarray:
        return self.V * self.gains

    def energy_per_sensor(self) -> float:
        """``(1/n) sum gamma_k'^2``, the quantity held below the budget ``c``."""
        return float(np.sum(self.gains**2) / self.n)

    def orthonormality_error(self) -> float:
        return float(np.max(np.abs(self.V.conj().T @ self.V - np.eye(self.n_prime)), initial=0.0))


def node_energy(V, gains, sigma_s2, sigma_v2, p1: float = 1.0) -> np.ndarray:
    """Average energy per sensor ``(p1 sigma_s^2 + sigma_v^2) sum_k' |v_kk'|^2 gamma_k'^2``."""
    return (p1 * sigma_s2 + sigma_v2) * (np.abs(V) ** 2 @ (np.asarray(gains) ** 2))


def sample_gains(profile: EnergyProfile, freqs) -> np.ndarray:
    """Gains ``sqrt(theta * xi)`` at the grid nodes nearest to ``freqs`` (rows for p-D).

    Using the occupancy-weighted energy keeps marginal, time-shared nodes at
    their average energy.
    """
    grid = profile.grid
    m = grid.points_per_axis
    f = np.atleast_2d(np.asarray(freqs, dtype=float).T).T if grid.dimension > 1 else np.asarray(freqs, dtype=float)
    idx = np.rint(np.asarray(f) * m).astype(int) % m
    if grid.dimension > 1:
        idx = np.ravel_multi_index(tuple(np.atleast_2d(idx).T), grid.shape)
    g2 = profile.effective()[idx]
    if np.any(g2 < 0):
        raise ProfileError("negative energy profile")
    return np.sqrt(g2)


def _cap(gains, n, budget):
    """Scale gains down uniformly if ``(1/n) sum gamma^2`` exceeds ``budget``."""
    if budget is None:
        return gains
    e = np.sum(gains**2) / n
    if e > budget * (1 + 1e-12):
        gains = gains * np.sqrt(budget / e)
    return gains


def pcs_channel_uses(eigenvalues, psd_samples, beta: float) -> int:
    """``max{k : Omega(lambda_k) <= beta}`` with ``Omega`` measured on the PSD grid samples."""
    om = omega(psd_samples, np.maximum(eigenvalues, 0.0))
    ok = np.flatnonzero(np.atleast_1d(om) <= beta + 1e-12)
    return int(ok[-1] + 1) if ok.size else 0


def build_pcs_precoder(sigma, beta: float, profile: EnergyProfile, psd: SpectralDensity,
                       sigma_v2: float, p1: float = 1.0, budget: float | None = None,
                       grid: FrequencyGrid | None = None, shape=None) -> Precoder:
    """Leading eigenvectors of ``sigma`` with gains from the profile.

    The ``k'``-th eigenvector is paired with the frequency holding the
    ``k'``-th largest PSD sample, so both strategies map a rank to the same
    energy level. ``shape`` gives the level orders of a p-D process.
    """
    S = np.asarray(sigma.matrix if isinstance(sigma, CovarianceMatrix) else sigma)
    n = S.shape[0]
    es = eigh_descending(S)
    grid = grid or profile.grid
    samples = psd.samples(grid)
    n_p = pcs_channel_uses(es.eigenvalues, samples, beta)
    V = es.eigenvectors[:, :n_p]
    freqs, _ = _ranked_frequencies(psd, tuple(shape) if shape is not None else _level_shape(psd, n), n_p)
    gains = _cap(sample_gains(profile, freqs), n, budget)
    sigma_s2 = float(np.real(np.trace(S)) / n)
    return Precoder(V, gains, "PCS", node_energy(V, gains, sigma_s2, sigma_v2, p1))


def _level_shape(psd, n):
    if psd.dimension == 1:
        return (int(n),)
    side = int(round(n ** (1 / psd.dimension)))
    if side**psd.dimension != n:
        raise DimensionError("PCS for p-D processes needs the level orders; pass an n-vector to PFS")
    return (side,) * psd.dimension


def _ranked_frequencies(psd, shape, count):
    """Frequencies of the ``count`` largest PSD samples on the ``shape`` DFT grid."""
    axes = [np.arange(m) / m for m in shape]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=-1)
    vals = psd(nodes[:, 0] if len(shape) == 1 else nodes)
    order = descending_order(vals)[:count]
    return (nodes[order, 0] if len(shape) == 1 else nodes[order]), order


def build_pfs_precoder(psd: SpectralDensity, n, beta: float, profile: EnergyProfile,
                       sigma_v2: float, p1: float = 1.0, budget: float | None = None) -> Precoder:
    """DFT columns (p-D DFT for a level vector ``n``) at the largest PSD bins.

    ``n' = floor(beta * n)`` bins are kept, ties resolved toward lower index.
    Multi-indices are unwound row-major, last axis fastest.
    """
    shape = (int(n),) if np.ndim(n) == 0 else tuple(int(x) for x in n)
    if len(shape) != psd.dimension:
        raise DimensionError(f"order {n} does not match a {psd.dimension}-D spectrum")
    total = int(np.prod(shape))
    n_p = top_count(beta, total)
    (freqs, order) = _ranked_frequencies(psd, shape, n_p)
    # column for multi-bin k: prod_l exp(j 2 pi i_l k_l / n_l) / sqrt(n)
    multi = np.indices(shape).reshape(len(shape), -1)
    bins = np.array(np.unravel_index(order, shape))
    phase = sum(np.outer(multi[l], bins[l]) / shape[l] for l in range(len(shape)))
    V = np.exp(2j * np.pi * phase) / np.sqrt(total)
    gains = _cap(sample_gains(profile, freqs), total, budget)
    sigma_s2 = psd.variance
    return Precoder(V, gains, "PFS", node_energy(V, gains, sigma_s2, sigma_v2, p1), order)


def mac_observe(C, x, w) -> np.ndarray:
    """``z = C^H x + w``; ``x`` and ``w`` may carry trials as columns."""
    M = C.matrix if isinstance(C, Precoder) else np.asarray(C)
    x = np.asarray(x)
    w = np.asarray(w)
    if x.shape[0] != M.shape[0] or w.shape[0] != M.shape[1]:
        raise DimensionError(f"precoder {M.shape} incompatible with x {x.shape} and w {w.shape}")
    return M.conj().T @ x + w


def dd_covariances(C, sigma, sigma_v2: float, sigma_w2: float, tol: float = 1e-10):
    """``(Xi_0, Xi_1)`` of the MAC observation.

    ``sigma`` may be a matrix or any object with ``project(C)`` returning
    ``C^H Sigma C`` (the PDE process), which avoids forming ``Sigma``.
    """
    M = C.matrix if isinstance(C, Precoder) else np.asarray(C)
    if hasattr(sigma, "project"):
        P = sigma.project(M)
    else:
        S = np.asarray(sigma.matrix if isinstance(sigma, CovarianceMatrix) else sigma)
        P = M.conj().T @ S @ M
    P = 0.5 * (P + P.conj().T)
    G = M.conj().T @ M
    G = 0.5 * (G + G.conj().T)
    eye = np.eye(M.shape[1])
    xi0 = sigma_v2 * G + sigma_w2 * eye
    xi1 = P + xi0
    if P.size:
        low = np.linalg.eigvalsh(P)[0]
        if low < -tol * max(1.0, np.abs(P).max()):
            raise ConditioningError(f"projected signal covariance has eigenvalue {low:.3g} < 0")
    return xi0, xi1


@dataclass(frozen=True)
class LlrStatistic:
    value: np.ndarray | float
    n: int


class LlrEvaluator:
    """Normalized LLR ``(1/n)(q^H (S0^-1 - S1^-1) q - log det S1/det S0)`` via Cholesky factors.

    ``n`` is the normalization (the sensor count); it defaults to the
    dimension of ``q``.
    """

    def __init__(self, S0, S1, n: int | None = None):
        S0 = np.asarray(S0.matrix if isinstance(S0, CovarianceMatrix) else S0)
        S1 = np.asarray(S1.matrix if isinstance(S1, CovarianceMatrix) else S1)
        if S0.shape != S1.shape:
            raise DimensionError("covariances have different shapes")
        try:
            self.L0 = sla.cholesky(S0, lower=True)
            self.L1 = sla.cholesky(S1, lower=True)
        except np.linalg.LinAlgError as exc:
            raise ConditioningError(f"covariance is not positive definite: {exc}") from exc
        self.dim = S0.shape[0]
        self.n = self.dim if n is None else int(n)
        self.logdet_ratio = 2.0 * float(
            np.sum(np.log(np.abs(np.diag(self.L1)))) - np.sum(np.log(np.abs(np.diag(self.L0))))
        )

    def __call__(self, q) -> np.ndarray | float:
        q = np.asarray(q)
        if q.shape[0] != self.dim:
            raise DimensionError(f"vector of length {q.shape[0]} for {self.dim}x{self.dim} covariances")
        a = sla.solve_triangular(self.L0, q, lower=True)
        b = sla.solve_triangular(self.L1, q, lower=True)
        quad = np.sum(np.abs(a) ** 2, axis=0) - np.sum(np.abs(b) ** 2, axis=0)
        out = (quad - self.logdet_ratio) / self.n
        return float(out) if np.ndim(out) == 0 else out


def centralized_llr(x, S0, S1) -> LlrStatistic:
    ev = LlrEvaluator(S0, S1)
    return LlrStatistic(ev(x), ev.n)


def decentralized_llr(z, Xi0, Xi1, n: int) -> LlrStatistic:
    """LLR of the MAC observation, normalized by the sensor count ``n``."""
    ev = LlrEvaluator(Xi0, Xi1, n)
    return LlrStatistic(ev(z), n)
