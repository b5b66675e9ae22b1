import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from macdetect.errors import DimensionError
from macdetect.spectra import ArmaPsd, FrequencyGrid, complex_normal, toeplitz_covariance
from macdetect.toeplitz import (
    circulant_from_samples,
    dft_matrix,
    eigh_descending,
    equivalence_gap,
    load_matrix,
    save_matrix,
    strong_norm,
    szego_sample_gap,
    toeplitz_distribution_check,
    weak_norm,
)

from .conftest import SIGMA_V2


def random_hermitian(rng, n):
    X = complex_normal(rng, (n, n))
    return 0.5 * (X + X.conj().T)


class TestNorms:
    def test_identity(self):
        assert weak_norm(np.eye(4)) == 1.0
        assert strong_norm(np.eye(4)) == pytest.approx(1.0)

    def test_diag(self):
        A = np.diag([3.0, -1.0])
        assert weak_norm(A) == pytest.approx(np.sqrt(5))
        assert strong_norm(A) == pytest.approx(3.0)

    def test_against_eigensolver(self, rng):
        A = random_hermitian(rng, 8)
        lam = np.linalg.eigvalsh(A)
        assert strong_norm(A) == pytest.approx(np.abs(lam).max(), rel=1e-12)
        assert weak_norm(A) == pytest.approx(np.sqrt(np.mean(lam**2)), rel=1e-12)

    @settings(max_examples=50)
    @given(st.integers(1, 10), st.integers(0, 2**31))
    def test_weak_below_strong(self, n, seed):
        A = random_hermitian(np.random.default_rng(seed), n)
        assert weak_norm(A) <= strong_norm(A) * (1 + 1e-12)

    def test_non_square(self):
        with pytest.raises(DimensionError):
            weak_norm(np.ones((2, 3)))


class TestCirculant:
    def test_flat(self):
        np.testing.assert_allclose(circulant_from_samples(np.full(5, 2.0), 5).matrix, 2 * np.eye(5), atol=1e-15)

    def test_two_point(self):
        np.testing.assert_allclose(circulant_from_samples(np.array([2.0, 0.0]), 2).matrix, [[1, 1], [1, 1]],
                                   atol=1e-15)

    def test_psd1_eigenvalues(self, p1):
        B = circulant_from_samples(p1, 64)
        np.testing.assert_allclose(np.sort(np.linalg.eigvalsh(B.matrix)), np.sort(p1(np.arange(64) / 64)),
                                   atol=1e-9)
        F = dft_matrix(64)
        D = F.conj().T @ B.matrix @ F
        np.testing.assert_allclose(np.diag(D).real, p1(np.arange(64) / 64), atol=1e-9)

    def test_dft_unitary(self):
        F = dft_matrix(16)
        np.testing.assert_allclose(F.conj().T @ F, np.eye(16), atol=1e-13)


class TestEquivalenceGap:
    def test_same(self, rng):
        A = random_hermitian(rng, 5)
        assert equivalence_gap(A, A) == 0.0

    def test_single_entry(self):
        n, eps = 9, 0.3
        E = np.zeros((n, n))
        E[2, 4] = eps
        assert equivalence_gap(SIGMA_V2 * np.eye(n), SIGMA_V2 * np.eye(n) + E) == pytest.approx(eps / np.sqrt(n))

    def test_toeplitz_vs_circulant_decreasing(self, p1):
        gaps = [equivalence_gap(toeplitz_covariance(p1, n), circulant_from_samples(p1, n)) for n in (16, 64, 256)]
        assert gaps[0] > gaps[1] > gaps[2]

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            equivalence_gap(np.eye(2), np.eye(3))


class TestEigenSystem:
    @pytest.mark.parametrize("name", ["p1", "p2"])
    def test_invariants(self, name, request):
        S = toeplitz_covariance(request.getfixturevalue(name), 64).matrix
        es = eigh_descending(S)
        # descending up to the tie tolerance used to order degenerate pairs
        assert np.all(np.diff(es.eigenvalues) <= 1e-10 * es.eigenvalues[0])
        assert es.orthonormality_error() <= 1e-10
        assert weak_norm(S - es.reconstruct()) <= 1e-8 * strong_norm(S)

    def test_ties_by_dft_index(self):
        es = eigh_descending(np.eye(6))
        dom = np.argmax(np.abs(np.fft.fft(es.eigenvectors, axis=0)), axis=0)
        assert np.all(np.diff(dom) >= 0)

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, (6, 6), elements=st.floats(-3, 3)))
    def test_descending_random(self, X):
        es = eigh_descending(X + X.T)
        # descending up to the documented tie tolerance
        scale = max(np.abs(es.eigenvalues).max(), 1e-300)
        assert np.all(np.diff(es.eigenvalues) <= 1e-10 * scale)
        assert es.orthonormality_error() <= 1e-10


class TestDistribution:
    def test_constant_function(self, p1):
        fin, lim, gap = toeplitz_distribution_check(p1, np.ones_like, 32)
        assert fin == 1.0 and lim == pytest.approx(1.0, abs=1e-15)

    def test_trace_identity(self, p2):
        fin, lim, gap = toeplitz_distribution_check(p2, lambda x: x, 50)
        assert gap < 1e-9

    def test_log_convergence(self, p1):
        def F(x):
            return np.log1p(np.maximum(x, 0) / SIGMA_V2)

        gaps = [toeplitz_distribution_check(p1, F, n)[2] for n in (128, 512)]
        assert gaps[1] < gaps[0]

    def test_szego_gap_shrinks(self, p1):
        assert szego_sample_gap(p1, 256) < szego_sample_gap(p1, 64)

    def test_white_exact(self):
        psd = ArmaPsd([1.0], [1.0], 2.0)
        fin, lim, gap = toeplitz_distribution_check(psd, np.sqrt, 8, FrequencyGrid(1, 64))
        assert gap < 1e-12


class TestMatrixFiles:
    @pytest.mark.parametrize("suffix", [".txt", ".npz"])
    def test_round_trip_complex(self, tmp_path, rng, suffix):
        A = random_hermitian(rng, 5)
        path = tmp_path / f"m{suffix}"
        save_matrix(path, A)
        np.testing.assert_array_equal(load_matrix(path), A)

    def test_round_trip_real(self, tmp_path):
        A = np.arange(6.0).reshape(2, 3) / 7
        save_matrix(tmp_path / "r.txt", A)
        B = load_matrix(tmp_path / "r.txt")
        assert B.dtype == float
        np.testing.assert_array_equal(A, B)
        assert (tmp_path / "r.txt").read_text().startswith("# 2 3 real")

    def test_truncated(self, tmp_path):
        (tmp_path / "t.txt").write_text("# 3 3 real\n1 2 3\n")
        with pytest.raises(DimensionError):
            load_matrix(tmp_path / "t.txt")
