"""Matrix tools for Toeplitz/circulant asymptotics.

Weak (normalized Frobenius) and strong (spectral) norms, circulant matrices
generated by PSD samples, equivalence gaps, descending Hermitian
eigendecompositions and Szego-type distribution checks.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError
from .spectra import CovarianceMatrix, FrequencyGrid, SpectralDensity, toeplitz_covariance


def _as_array(A) -> np.ndarray:
    return np.asarray(A.matrix if isinstance(A, CovarianceMatrix) else A)


def weak_norm(A) -> float:
    """``sqrt((1/n) sum |a_ij|^2)``."""
    A = _as_array(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return float(np.linalg.norm(A, "fro") / np.sqrt(A.shape[0]))


def strong_norm(A) -> float:
    """Spectral norm; equals ``max |eigenvalue|`` for Hermitian ``A``."""
    A = _as_array(A)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {A.shape}")
    return float(np.linalg.norm(A, 2))


def equivalence_gap(A, B) -> float:
    """Weak-norm distance ``|A - B|``."""
    A, B = _as_array(A), _as_array(B)
    if A.shape != B.shape:
        raise DimensionError(f"shape mismatch {A.shape} vs {B.shape}")
    return weak_norm(A - B)


def dft_matrix(n: int) -> np.ndarray:
    """Unitary DFT matrix, column ``k`` is ``exp(j 2 pi i k / n) / sqrt(n)``."""
    i = np.arange(n)
    return np.exp(2j * np.pi * np.outer(i, i) / n) / np.sqrt(n)


def circulant_from_samples(psd, n: int) -> CovarianceMatrix:
    """Circulant ``F diag(phi(k/n)) F^H`` generated by ``n`` PSD samples."""
    if n < 1:
        raise DimensionError("order must be positive")
    samples = np.asarray(psd(np.arange(n) / n) if callable(psd) else psd, dtype=float)
    if samples.size != n:
        raise DimensionError("need exactly n samples")
    # first column of F diag(s) F^H is ifft(s)
    col = np.fft.ifft(samples)
    mat = sla.circulant(col)
    return CovarianceMatrix(0.5 * (mat + mat.conj().T), "Circulant")


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Eigenpairs of a Hermitian matrix, eigenvalues in descending order."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    def orthonormality_error(self) -> float:
        U = self.eigenvectors
        return float(np.max(np.abs(U.conj().T @ U - np.eye(U.shape[1]))))

    def reconstruct(self) -> np.ndarray:
        U = self.eigenvectors
        return (U * self.eigenvalues) @ U.conj().T


def eigh_descending(A, tie_tol: float = 1e-10) -> EigenSystem:
    """Hermitian eigendecomposition sorted by descending eigenvalue.

    Eigenvalues equal within ``tie_tol * max|lambda|`` are ordered by the
    ascending index of the eigenvector's dominant DFT component, which makes
    the ordering reproducible for degenerate spectra.
    """
    A = _as_array(A)
    lam, U = np.linalg.eigh(A)
    lam, U = lam[::-1], U[:, ::-1]
    n = lam.size
    if n > 1:
        scale = max(np.max(np.abs(lam)), 1e-300)
        groups = np.concatenate(([0], np.cumsum(np.diff(lam) < -tie_tol * scale)))
        if groups[-1] < n - 1:
            dom = np.argmax(np.abs(np.fft.fft(U, axis=0)), axis=0)
            order = np.lexsort((dom, groups))
            lam, U = lam[order], U[:, order]
    return EigenSystem(lam, U)


def toeplitz_distribution_check(psd: SpectralDensity, F, n: int, grid: FrequencyGrid | None = None):
    """``((1/n) sum F(lambda_k), integral of F(phi), gap)`` for the order-``n`` Toeplitz matrix."""
    grid = grid or FrequencyGrid.default(psd.dimension)
    sigma = toeplitz_covariance(psd, n)
    lam = np.linalg.eigvalsh(sigma.matrix)
    finite = float(np.mean(F(lam)))
    limit = grid.integrate(F(psd.samples(grid)))
    return finite, limit, abs(finite - limit)


def szego_sample_gap(psd: SpectralDensity, n: int) -> float:
    """Mean absolute difference of sorted eigenvalues and sorted ``n``-point PSD samples."""
    lam = np.sort(np.linalg.eigvalsh(toeplitz_covariance(psd, n).matrix))
    samp = np.sort(psd(np.arange(n) / n))
    return float(np.mean(np.abs(lam - samp)))


def multilevel_toeplitz_projection(S, shape) -> np.ndarray:
    """Nearest (Frobenius) multilevel Toeplitz matrix: average ``S`` over each lag.

    ``shape = (n_1, ..., n_p)`` gives the level orders; indices are unwound
    row-major so the last axis varies fastest.
    """
    S = _as_array(S)
    shape = tuple(int(x) for x in shape)
    n = int(np.prod(shape))
    if S.shape != (n, n):
        raise DimensionError(f"matrix of shape {S.shape} does not match levels {shape}")
    multi = np.indices(shape).reshape(len(shape), -1)
    # encode each multi-lag as a single integer
    dims = [2 * m - 1 for m in shape]
    code = np.zeros((n, n), dtype=np.int64)
    for l, m in enumerate(shape):
        code = code * dims[l] + (multi[l][:, None] - multi[l][None, :] + m - 1)
    flat = code.ravel()
    total = np.prod(dims)
    sums = np.bincount(flat, weights=S.real.ravel(), minlength=total).astype(complex)
    if np.iscomplexobj(S):
        sums += 1j * np.bincount(flat, weights=S.imag.ravel(), minlength=total)
    counts = np.bincount(flat, minlength=total)
    means = sums / np.maximum(counts, 1)
    out = means[code]
    return out if np.iscomplexobj(S) else out.real


def save_matrix(path, A) -> None:
    """Write a matrix to ``.npz`` (binary) or any other suffix as text.

    The text format has a header line ``# rows cols complex|real`` followed by
    one row per line, complex entries written as ``re,im`` pairs.
    """
    A = _as_array(A)
    path = str(path)
    if path.endswith(".npz"):
        np.savez(path, matrix=A)
        return
    cplx = np.iscomplexobj(A)
    with open(path, "w") as fh:
        fh.write(f"# {A.shape[0]} {A.shape[1]} {'complex' if cplx else 'real'}\n")
        for row in A:
            if cplx:
                fh.write(" ".join(f"{z.real:.17g},{z.imag:.17g}" for z in row) + "\n")
            else:
                fh.write(" ".join(f"{x:.17g}" for x in row) + "\n")


def load_matrix(path) -> np.ndarray:
    path = str(path)
    if path.endswith(".npz"):
        with np.load(path) as data:
            return data["matrix"]
    with open(path) as fh:
        _, r, c, kind = fh.readline().split()
        rows = [line.split() for line in fh if line.strip()]
    if kind == "complex":
        vals = [[complex(*map(float, tok.split(","))) for tok in row] for row in rows]
        out = np.array(vals, dtype=complex)
    else:
        out = np.array(rows, dtype=float)
    if out.shape != (int(r), int(c)):
        raise DimensionError(f"matrix file {path} is truncated")
    return out
