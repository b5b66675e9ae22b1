import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from macdetect import kernels
from macdetect.energy import (
    EnergyParams,
    EnergyProfile,
    energy_vs_multiplier,
    kkt_certify,
    oep_cubic_roots,
    profile_cep,
    profile_kappa,
    profile_onoff,
    profile_sep,
    solve_oep,
    write_profile_csv,
)
from macdetect.errors import DegenerateSpectrumError, ProfileError
from macdetect.spectra import FrequencyGrid, transmitted_modes

from .conftest import SIGMA_V2

G512 = FrequencyGrid(1, 512)


def coefficients(phi, lam, v, w):
    a0 = lam * w**3
    a1 = w * (-(phi**2) + lam * w * (2 * phi + 3 * v))
    a2 = lam * w * (phi**2 + 4 * phi * v + 3 * v**2)
    a3 = lam * v * (phi + v) ** 2
    return a3, a2, a1, a0


def companion_real_roots(phi, lam, v, w):
    r = np.roots(coefficients(phi, lam, v, w))
    return np.sort(r[np.abs(r.imag) < 1e-9].real)[::-1]


class TestParams:
    def test_budget_from_snr(self):
        p = EnergyParams.from_snr(5.0, 0.0)
        assert p.sigma_v2 == pytest.approx(SIGMA_V2)
        assert p.budget == pytest.approx(1 / (1 + SIGMA_V2))
        assert p.with_snr_c(10.0).sigma_w2 == pytest.approx(0.1)

    def test_positive(self):
        with pytest.raises(ValueError):
            EnergyParams(1.0, -1.0, 1.0)


class TestProfiles:
    def test_cep_value(self, params):
        prof = profile_cep(params, G512)
        np.testing.assert_allclose(prof.xi, 1 / (1 + 10**-0.5))
        assert prof.xi[0] == pytest.approx(0.7597, abs=1e-4)

    def test_sep_integral(self, p1, params):
        prof = profile_sep(p1, params, FrequencyGrid.default())
        assert prof.integral == pytest.approx(params.budget, rel=1e-6)

    def test_onoff_half(self, params):
        mask = np.arange(512) < 256
        prof = profile_onoff(mask, params, G512)
        np.testing.assert_allclose(prof.xi[mask], 2 * profile_cep(params, G512).xi[0])
        assert prof.integral == pytest.approx(params.budget, rel=1e-14)

    def test_onoff_empty(self, params):
        with pytest.raises(DegenerateSpectrumError):
            profile_onoff(np.zeros(512, bool), params, G512)

    def test_restricted_cep_sep(self, p2, params):
        modes = transmitted_modes(p2, 0.3, G512)
        for prof in (profile_cep(params, G512, modes), profile_sep(p2, params, G512, modes)):
            assert prof.integral == pytest.approx(params.budget, rel=1e-12)
            assert np.all(prof.xi[~modes.indicator] == 0)

    def test_invalid_profile(self):
        with pytest.raises(ProfileError):
            EnergyProfile(G512, -np.ones(512), 1.0, 1.0)
        with pytest.raises(ProfileError):
            EnergyProfile(G512, np.ones(512), 1.0, 1.0, domain=np.arange(512) < 10)

    def test_immutable(self, params):
        prof = profile_cep(params, G512)
        with pytest.raises(ValueError):
            prof.xi[0] = 3.0


class TestCubic:
    def test_zero_phi_no_positive_root(self):
        r = oep_cubic_roots(0.0, 0.1, 1.0, 1.0)[0]
        assert not np.any(r[~np.isnan(r)] > 0)
        assert all(c >= 0 for c in coefficients(0.0, 0.1, 1.0, 1.0))

    def test_companion_oracle(self):
        r = oep_cubic_roots(1.0, 0.01, 1.0, 1.0)[0]
        ref = companion_real_roots(1.0, 0.01, 1.0, 1.0)
        assert np.nanmax(r) == pytest.approx(ref.max(), abs=1e-8)

    @settings(max_examples=200)
    @given(st.floats(1e-3, 50), st.floats(1e-4, 5), st.floats(0.05, 5), st.floats(0.01, 50))
    def test_residuals(self, phi, lam, v, w):
        a = coefficients(phi, lam, v, w)
        for x in oep_cubic_roots(phi, lam, v, w)[0]:
            if np.isnan(x):
                continue
            res = abs(np.polyval(a, x))
            assert res <= 1e-8 * max(abs(c) for c in a) * max(1.0, abs(x)) ** 3

    @settings(max_examples=50)
    @given(st.floats(0.1, 10), st.floats(1e-3, 1), st.floats(0.1, 2), st.floats(0.1, 2), st.floats(0.2, 5))
    def test_scaling_metamorphic(self, phi, lam, v, w, s):
        # scaling the powers by s with lam/s fixed rescales the cubic's roots; the oracle is the solver
        # applied to the scaled problem and the companion matrix on the same inputs
        r = oep_cubic_roots(s * phi, lam / s, s * v, s * w)[0]
        ref = companion_real_roots(s * phi, lam / s, s * v, s * w)
        got = np.sort(r[~np.isnan(r)])[::-1]
        if got.size == ref.size:
            np.testing.assert_allclose(got, ref, rtol=1e-6, atol=1e-9)


class TestSolveOep:
    @pytest.mark.parametrize("name", ["p1", "p2"])
    @pytest.mark.parametrize("beta", [0.2, 1.0])
    @pytest.mark.parametrize("rule", ["max-root", "lagrangian"])
    def test_saturates_and_certifies(self, name, beta, rule, request):
        psd = request.getfixturevalue(name)
        params = EnergyParams.from_snr(5.0, 0.0)
        res = solve_oep(psd, beta, params, rule=rule)
        assert abs(res.profile.budget_residual) <= 1e-8
        assert res.certificate.ok, res.certificate
        assert res.lam > 0 and res.profile.beta_star <= beta + 1e-12
        if rule == "lagrangian":
            assert res.certificate.lagrangian_gap <= 1e-9

    def test_psd1_kkt(self, p1):
        res = solve_oep(p1, 0.6, EnergyParams.from_snr(5.0, 0.0))
        assert all(res.certificate.flags.values())

    def test_support_shrinks_with_channel_noise(self, p1):
        quiet = solve_oep(p1, 1.0, EnergyParams(1.0, SIGMA_V2, 1.0))
        noisy = solve_oep(p1, 1.0, EnergyParams(1.0, SIGMA_V2, 1e3))
        assert noisy.profile.beta_star < quiet.profile.beta_star

    def test_low_snr_small_beta_saturates(self, p2):
        res = solve_oep(p2, 0.02, EnergyParams.from_snr(5.0, -10.0))
        assert res.profile.beta_star == pytest.approx(0.02, abs=1 / 4096)

    def test_beta_star_nondecreasing_in_snr(self, p1):
        bs = [solve_oep(p1, 0.6, EnergyParams.from_snr(5.0, s), G512).profile.beta_star
              for s in np.arange(-15, 11, 2.5)]
        assert np.all(np.diff(bs) >= -1e-12)

    def test_energy_monotone_in_multiplier(self, p1):
        lams = np.geomspace(1e-4, 10, 60)
        e = energy_vs_multiplier(p1, 0.6, EnergyParams.from_snr(5.0, 0.0), lams, G512)
        assert np.all(np.diff(e) <= 1e-15)

    def test_iterable(self, p1):
        prof, lam, cert = solve_oep(p1, 0.6, EnergyParams.from_snr(5.0, 0.0), G512)
        assert prof.kind == "OEP" and cert.lam == lam

    @pytest.mark.parametrize("snr", [-10.0, 0.0, 10.0])
    def test_dominance(self, p1, snr):
        params = EnergyParams.from_snr(5.0, snr)
        res = solve_oep(p1, 0.6, params)
        k = profile_kappa(res.profile, p1, params)
        modes = res.modes
        g = res.profile.grid
        for other in (profile_cep(params, g, modes), profile_sep(p1, params, g, modes),
                      profile_onoff(res.profile, params)):
            assert k >= profile_kappa(other, p1, params) - 1e-8

    @settings(max_examples=15, deadline=None)
    @given(st.lists(st.floats(0.0, 20.0), min_size=16, max_size=16), st.floats(-10, 10), st.floats(0.1, 1.0))
    def test_random_tables(self, phi, snr, beta):
        phi = np.array(phi)
        if not np.any(phi[transmitted_modes(phi, beta).indicator] > 0):
            return
        params = EnergyParams.from_snr(5.0, snr)
        res = solve_oep(phi, beta, params)
        assert abs(res.profile.budget_residual) <= 1e-8
        assert res.certificate.ok


class TestKkt:
    def test_empty_profile_fails_budget(self, p1, params):
        prof = EnergyProfile(G512, np.zeros(512), 0.0, params.budget)
        cert = kkt_certify(prof, 100.0, p1, params)
        f = cert.flags
        assert f["gradient_bound"] and f["support_stationarity"] and f["multiplier_sign"] and not f["budget_saturation"]

    def test_perturbation_breaks_stationarity(self, p1, params):
        res = solve_oep(p1, 0.6, params, G512)
        bumped = EnergyProfile(G512, res.profile.xi * 1.01, res.profile.occupancy, params.budget,
                               domain=res.profile.domain)
        cert = kkt_certify(bumped, res.lam, p1, params)
        assert not cert.flags["support_stationarity"]

    def test_negative_multiplier(self, p1, params):
        res = solve_oep(p1, 0.6, params, G512)
        assert not kkt_certify(res.profile, -1.0, p1, params).flags["multiplier_sign"]


class TestMarginalGain:
    @given(st.floats(1e-3, 20), st.floats(0.01, 10), st.floats(0.05, 3), st.floats(0.01, 10))
    def test_derivative(self, xi, phi, v, w):
        h = 1e-5 * xi
        f = kernels.info_density
        num = (f(kernels.snr_gain(np.array([xi + h]), phi, v, w))
               - f(kernels.snr_gain(np.array([xi - h]), phi, v, w))) / (2 * h)
        assert kernels.marginal_gain(xi, phi, v, w) == pytest.approx(num[0], rel=1e-4, abs=1e-9)


def test_profile_csv(tmp_path, p1, params):
    res = solve_oep(p1, 0.6, params, FrequencyGrid(1, 64))
    path = tmp_path / "p.csv"
    write_profile_csv(path, res.profile)
    rows = list(csv.reader(open(path)))
    assert rows[0] == ["nu", "xi", "occupancy"] and len(rows) == 65
