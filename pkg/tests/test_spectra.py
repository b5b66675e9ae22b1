import json

import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings
from hypothesis import strategies as st

from macdetect.errors import (
    AccuracyError,
    ConfigError,
    DegenerateSpectrumError,
    InvalidFractionError,
    ModelError,
    SingularPsdError,
)
from macdetect.spectra import (
    PSD1_DENOMINATOR,
    PSD1_NUMERATOR,
    ArmaPsd,
    FrequencyGrid,
    PdePsd,
    Pde2dProcess,
    TabulatedPsd,
    complex_normal,
    descending_order,
    eval_psd,
    normalize_input_power,
    omega,
    pde2d_covariance,
    pde2d_system_matrix,
    psd_config_errors,
    psd_from_config,
    psd_to_config,
    toeplitz_covariance,
    transmitted_modes,
)
from macdetect.toeplitz import multilevel_toeplitz_projection, weak_norm


def arma_oracle(b, a, s2, nu):
    """Direct polynomial evaluation in z = exp(-j 2 pi nu), Horner form."""
    z = np.exp(-2j * np.pi * np.asarray(nu, dtype=np.longdouble).astype(float))
    num = np.polyval(list(b)[::-1], z)
    den = np.polyval(list(a)[::-1], z)
    return s2 * np.abs(num / den) ** 2


class TestFrequencyGrid:
    def test_nodes_1d(self):
        g = FrequencyGrid(1, 8)
        assert g.size == 8 and g.cell == 1 / 8
        np.testing.assert_allclose(g.nodes, np.arange(8) / 8)

    def test_nodes_2d_row_major(self):
        g = FrequencyGrid(2, 4)
        assert g.nodes.shape == (16, 2)
        np.testing.assert_allclose(g.nodes[1], [0.0, 0.25])
        np.testing.assert_allclose(g.nodes[4], [0.25, 0.0])

    def test_default_and_refined(self):
        assert FrequencyGrid.default(1).points_per_axis == 4096
        assert FrequencyGrid.default(2).points_per_axis == 256
        assert FrequencyGrid(1, 16).refined().points_per_axis == 32


class TestEvalPsd:
    def test_pde_origin(self):
        assert eval_psd(PdePsd(-5, 1, 1, 1.0), [[0.0, 0.0]])[0] == pytest.approx(1.0)

    def test_white_arma(self):
        psd = ArmaPsd([1.0], [1.0], 2.5)
        np.testing.assert_allclose(psd(np.linspace(0, 1, 17)), 2.5)

    def test_psd1_against_polynomial_oracle(self, p1):
        nu = np.linspace(0, 1, 40961)
        np.testing.assert_allclose(p1(nu), arma_oracle(PSD1_NUMERATOR, PSD1_DENOMINATOR, p1.input_power, nu),
                                   rtol=1e-12, atol=1e-14)
        # notches at 0 and 1/2, peaks in between
        assert p1(0.0) < 1e-20 and p1(0.5) < 1e-20
        assert p1(0.25) > 1.0

    def test_singular_denominator(self):
        with pytest.raises(SingularPsdError):
            ArmaPsd([1.0], [1.0, -1.0])

    def test_singular_pde(self):
        with pytest.raises(SingularPsdError):
            PdePsd(-4.0, 1.0, 1.0)

    @given(st.floats(0, 1), st.floats(0, 1))
    def test_nonnegative(self, x, y):
        assert PdePsd(-5, 1, 1)(np.array([[x, y]]))[0] >= 0


class TestNormalization:
    def test_flat(self):
        assert normalize_input_power(ArmaPsd([1.0], [1.0]), 1.0) == pytest.approx(1.0)

    def test_table_powers(self, p1, p2):
        assert p1.input_power == pytest.approx(1.70, rel=0.02)
        assert p2.input_power == pytest.approx(2.37e-5, rel=0.02)

    @pytest.mark.parametrize("name", ["p1", "p2"])
    def test_variance(self, name, request):
        psd = request.getfixturevalue(name)
        assert FrequencyGrid(1, 4096).integrate(psd.samples(FrequencyGrid(1, 4096))) == pytest.approx(1.0, rel=1e-6)

    def test_pde_variance(self, pde):
        assert pde.variance == pytest.approx(1.0, rel=1e-9)

    def test_zero_shape(self):
        with pytest.raises(DegenerateSpectrumError):
            normalize_input_power(ArmaPsd([0.0], [1.0]), 1.0)


class TestOmega:
    def test_flat(self):
        s = np.full(64, 2.0)
        assert omega(s, 0.0) == 1.0
        assert omega(s, 2.0) == 0.0

    def test_psd2_counting_oracle(self, p2):
        g = FrequencyGrid(1, 1 << 16)
        s = p2.samples(g)
        assert omega(p2, 1.0, g) == np.count_nonzero(s > 1.0) / s.size

    @settings(max_examples=100)
    @given(st.floats(0, 20), st.floats(0, 20))
    def test_nonincreasing(self, t1, t2):
        s = np.random.default_rng(0).exponential(size=512)
        lo, hi = sorted((t1, t2))
        assert omega(s, lo) >= omega(s, hi)


class TestTransmittedModes:
    def test_full_band(self, p1):
        m = transmitted_modes(p1, 1.0, FrequencyGrid(1, 256))
        assert m.beta_actual == 1.0

    def test_flat_ties_low_index(self):
        m = transmitted_modes(np.ones(10), 0.5)
        np.testing.assert_array_equal(np.flatnonzero(m.indicator), np.arange(5))

    def test_psd1_sort_oracle(self, p1, grid1):
        m = transmitted_modes(p1, 0.6, grid1)
        s = p1.samples(grid1)
        k = int(0.6 * grid1.size)
        level = np.sort(s)[::-1][k - 1]
        assert m.indicator.sum() == k
        # the set is the super-level set of the 40th percentile, up to exact ties
        assert np.all(m.indicator[s > level * (1 + 1e-9)])
        assert not np.any(m.indicator[s < level * (1 - 1e-9)])
        assert m.beta_actual <= 0.6
        assert s[m.indicator].min() >= s[~m.indicator].max() * (1 - 1e-12)

    def test_invalid(self, p1):
        with pytest.raises(InvalidFractionError):
            transmitted_modes(p1, 0.0)

    @given(st.floats(0.01, 1.0), st.floats(0.01, 1.0))
    def test_nested(self, a, b):
        s = np.random.default_rng(1).exponential(size=300)
        lo, hi = sorted((a, b))
        A = transmitted_modes(s, lo).indicator
        B = transmitted_modes(s, hi).indicator
        assert np.all(B[A])

    def test_descending_order_quantized_ties(self):
        v = np.array([1.0, 2.0, 2.0 * (1 + 1e-15), 0.5])
        np.testing.assert_array_equal(descending_order(v), [1, 2, 0, 3])


class TestToeplitzCovariance:
    def test_white(self):
        T = toeplitz_covariance(ArmaPsd([1.0], [1.0], 3.0), 4)
        np.testing.assert_allclose(T.matrix, 3.0 * np.eye(4), atol=1e-14)
        assert T.structure == "Toeplitz"

    @pytest.mark.parametrize("name", ["p1", "p2"])
    def test_diagonal_is_variance(self, name, request):
        psd = request.getfixturevalue(name)
        T = toeplitz_covariance(psd, 32)
        np.testing.assert_allclose(np.diag(T.matrix).real, psd.variance, rtol=1e-8)
        assert T.is_hermitian()

    def test_psd1_entries(self, p1):
        g = FrequencyGrid(1, 1 << 18)
        s = p1.samples(g)
        k = np.arange(8)
        r = np.array([np.mean(s * np.exp(-2j * np.pi * g.axis * j)) for j in k])
        T = toeplitz_covariance(p1, 8).matrix
        oracle = sla.toeplitz(r, r.conj())
        np.testing.assert_allclose(T, oracle, atol=1e-6)

    def test_spectral_containment(self, p2):
        T = toeplitz_covariance(p2, 64)
        s = p2.samples(FrequencyGrid.default())
        lam = np.linalg.eigvalsh(T.matrix)
        assert lam.min() >= s.min() - 1e-9 and lam.max() <= s.max() + 1e-9

    def test_multilevel(self, pde):
        T = toeplitz_covariance(pde, (3, 4))
        assert T.structure == "MultilevelToeplitz" and T.order == 12
        np.testing.assert_allclose(T.matrix, multilevel_toeplitz_projection(T.matrix, (3, 4)), atol=1e-12)

    def test_accuracy_error(self, p1):
        with pytest.raises(AccuracyError):
            toeplitz_covariance(p1, 8, grid=FrequencyGrid(1, 16))


class TestPde2d:
    def test_decoupled(self):
        np.testing.assert_allclose(pde2d_covariance(3, 3, -5, 0, 0).matrix, np.eye(9) / 25, atol=1e-15)

    def test_explicit_inverse(self):
        A = pde2d_system_matrix(2, 2, -5, 1, 1)
        oracle = np.linalg.inv(A @ A.T)
        np.testing.assert_allclose(pde2d_covariance(2, 2, -5, 1, 1).matrix, oracle, atol=1e-10)

    def test_system_matrix_layout(self):
        A = pde2d_system_matrix(2, 3, -5, 2, 7)
        assert A[0, 1] == 7 and A[0, 3] == 2 and A[2, 3] == 0

    @pytest.mark.filterwarnings("ignore::scipy.linalg.LinAlgWarning")
    def test_singular(self):
        with pytest.raises(ModelError):
            Pde2dProcess(1, 1, 0.0, 1.0, 1.0)

    @settings(max_examples=25, deadline=None)
    @given(st.floats(-8, -4.5), st.floats(-1, 1), st.floats(-1, 1), st.integers(1, 4), st.integers(1, 4))
    def test_symmetric_psd(self, a0, ax, ay, n1, n2):
        S = pde2d_covariance(n1, n2, a0, ax, ay).matrix
        np.testing.assert_allclose(S, S.T, atol=1e-14)
        assert np.linalg.eigvalsh(S)[0] > -1e-12

    def test_project_matches_dense(self, rng):
        proc = Pde2dProcess(3, 3, -5, 1, 1, 2.0)
        C = complex_normal(rng, (9, 4))
        S = proc.covariance().matrix
        np.testing.assert_allclose(proc.project(C), C.conj().T @ S @ C, atol=1e-12)

    def test_tends_to_generated_multilevel_toeplitz(self, pde):
        gaps = []
        for m in (4, 8, 16):
            S = pde2d_covariance(m, m, pde.a0, pde.ax, pde.ay, pde.source_power).matrix
            gaps.append(weak_norm(S - toeplitz_covariance(pde, (m, m)).matrix))
        assert gaps[0] > gaps[1] > gaps[2]

    def test_lag_averaged_projection_gap_shrinks(self):
        # at 4x4 the lag average has few entries per lag and fits the boundary
        # terms, so the gap only starts to shrink from 8x8
        gaps = []
        for m in (8, 16, 32):
            S = pde2d_covariance(m, m, -5, 1, 1).matrix
            gaps.append(weak_norm(S - multilevel_toeplitz_projection(S, (m, m))))
        assert gaps[0] > gaps[1] > gaps[2]


class TestTabulated:
    def test_nearest_lookup(self):
        t = TabulatedPsd(np.arange(4.0))
        np.testing.assert_allclose(t(np.array([0.0, 0.26, 0.99])), [0.0, 1.0, 0.0])
        assert t.variance == 1.5

    def test_negative(self):
        with pytest.raises(DegenerateSpectrumError):
            TabulatedPsd([1.0, -1.0])


class TestConfig:
    def test_presets(self):
        assert psd_from_config("psd1").input_power == pytest.approx(1.7024, rel=1e-4)
        assert psd_from_config({"kind": "preset", "name": "pde2d"}).dimension == 2

    def test_shipped_psd1_round_trip(self):
        from macdetect.cli import shipped_configs  # noqa: F401  (package data lives next to cli)
        from pathlib import Path

        import macdetect

        cfg = json.loads((Path(macdetect.__file__).parent / "configs" / "psd1.json").read_text())
        psd = psd_from_config(cfg)
        assert psd.numerator == PSD1_NUMERATOR and psd.denominator == PSD1_DENOMINATOR

    def test_to_config_round_trip(self, p2):
        again = psd_from_config(psd_to_config(p2))
        assert again.input_power == p2.input_power and again.numerator == p2.numerator

    def test_all_errors_reported(self):
        errs = psd_config_errors({"kind": "arma1d", "b": "x", "variance": -1, "extra": 1})
        assert any("extra" in e for e in errs)
        assert any(".b" in e for e in errs) and any(".a" in e for e in errs)
        assert any("variance" in e for e in errs)
        with pytest.raises(ConfigError) as info:
            psd_from_config({"kind": "arma1d", "b": "x", "variance": -1, "extra": 1})
        assert len(info.value.errors) == len(errs)


class TestComplexNormal:
    def test_circular(self, rng):
        z = complex_normal(rng, (200000,))
        assert np.var(z.real) == pytest.approx(0.5, abs=0.01)
        assert np.var(z.imag) == pytest.approx(0.5, abs=0.01)
        assert abs(np.mean(z.real * z.imag)) < 0.01
        assert abs(np.mean(z * z)) < 0.01
