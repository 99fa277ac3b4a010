import math

import numpy as np
import pytest

from reflectmc.dynamics import GmcParams, evolve_ensemble, make_rng
from reflectmc.geometry import Volume
from reflectmc.sinkhorn import EmpiricalDistribution, SinkhornConfig
from reflectmc.spectral import (
    SDTimeSeries,
    Spectrum,
    critical_sigma,
    dominant_frequency,
    f_broad,
    f_diag,
    f_super,
    power_law_fit,
    psd,
    resonance_entropy,
    sd_time_series,
    spectral_entropy,
)


def series_of(values):
    values = np.asarray(values, dtype=float)
    return SDTimeSeries(np.arange(len(values)), values, np.ones(len(values), bool))


class TestPsd:
    def test_constant_series_is_dc_only(self):
        spec = psd(series_of(np.full(64, 3.0)))
        assert spec.power[0] > 0
        np.testing.assert_allclose(spec.power[1:], 0.0, atol=1e-20)

    def test_pure_cosine_peak(self):
        t = np.arange(64)
        spec = psd(series_of(np.cos(2 * np.pi * 0.25 * t)))
        f, _ = dominant_frequency(spec, exclude_dc=True)
        assert f == pytest.approx(0.25)

    def test_parseval(self):
        rng = np.random.default_rng(0)
        for T in (64, 65):  # even and odd lengths
            x = rng.normal(size=T)
            spec = psd(series_of(x))
            assert spec.power.sum() == pytest.approx(np.sum(x * x) / T, rel=1e-8)

    def test_frequency_axis_ends_at_nyquist(self):
        spec = psd(series_of(np.arange(32.0)))
        assert spec.frequencies[0] == 0.0
        assert spec.frequencies[-1] == 0.5

    def test_aliased_cosine(self):
        # a tone above Nyquist folds back to |f - round(f)|
        t = np.arange(128)
        spec = psd(series_of(np.cos(2 * np.pi * 0.7 * t)))
        f, _ = dominant_frequency(spec, exclude_dc=True)
        assert f == pytest.approx(0.3, abs=1 / 128)

    def test_decaying_cosine_model(self):
        # exp(-t/tau)(1 + cos 2 pi f1 t): spectral peaks at DC and at f1,
        # both broadened with half-max widths on the 1/tau scale
        tau, f1, T = 40.0, 0.2, 512
        t = np.arange(T)
        spec = psd(series_of(np.exp(-t / tau) * (1 + np.cos(2 * np.pi * f1 * t))))
        k1 = int(round(f1 * T))
        window = slice(k1 - 20, k1 + 21)
        k_peak = int(np.argmax(spec.power[window])) + k1 - 20
        assert abs(k_peak - k1) <= 1  # line peak sits at f1
        # envelope peak at DC (interior-bin doubling may favour k=1)
        assert np.argmax(spec.power) <= 1
        for k in (int(np.argmax(spec.power)), k1):
            half = spec.power[k] / 2
            lo = max(k - 10, 0)
            width = np.sum(spec.power[lo : k + 11] >= half) / T
            assert 0.2 / tau < width < 5.0 / tau

    def test_short_series_rejected(self):
        with pytest.raises(ValueError):
            psd(series_of(np.ones(4)))


class TestSpectralEntropy:
    def test_constant_series_zero(self):
        assert spectral_entropy(psd(series_of(np.full(32, 7.0)))) == 0.0

    def test_uniform_bins_log_k(self):
        K = 16
        spec = Spectrum(np.linspace(0, 0.5, K), np.full(K, 0.25))
        assert spectral_entropy(spec) == pytest.approx(math.log(K))

    def test_scale_invariance(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=64)
        a = spectral_entropy(psd(series_of(x)))
        b = spectral_entropy(psd(series_of(100.0 * x)))
        assert a == pytest.approx(b, rel=1e-12)

    def test_all_zero_rejected(self):
        with pytest.raises(ValueError):
            spectral_entropy(Spectrum(np.array([0.0, 0.5]), np.zeros(2)))

    def test_resonance_entropy_constant_is_zero(self):
        assert resonance_entropy(np.full(32, 5.0)) == 0.0
        # tiny numerical jitter on a large plateau still counts as constant
        jitter = 5.0 + 1e-9 * np.random.default_rng(2).normal(size=32)
        assert resonance_entropy(jitter) == 0.0


class TestFrequencyFormulas:
    def test_f_diag_values(self):
        assert f_diag(0.05, 100) == pytest.approx(0.25)
        assert f_diag(0.1, 100) == pytest.approx(0.5)
        assert f_diag(0.05, 100, R=2.0) == pytest.approx(0.125)

    def test_f_super_exact_at_unit_argument(self):
        assert f_super(0.1, 100) == 0.5

    def test_f_super_small_argument_ratio(self):
        # f_super / f_diag -> 4/pi as the speed goes to zero
        sigma = 1e-3 / math.sqrt(100)
        assert f_super(sigma, 100) / f_diag(sigma, 100) == pytest.approx(
            4 / math.pi, rel=1e-6
        )

    def test_f_super_dominates_f_diag(self):
        for u in np.linspace(0.01, 0.99, 25):
            sigma = u / math.sqrt(100)
            assert f_super(sigma, 100) > f_diag(sigma, 100)

    def test_f_broad_values(self):
        assert f_broad(math.sqrt(2.0)) == pytest.approx(1.0)
        assert f_broad(8e-3) == pytest.approx(5.66e-3, rel=1e-2)
        assert f_broad(0.4) == pytest.approx(2 * f_broad(0.2))


class TestDominantFrequency:
    def test_dc_only(self):
        spec = psd(series_of(np.full(16, 2.0)))
        assert dominant_frequency(spec, exclude_dc=False)[0] == 0.0

    def test_tie_breaks_to_lowest(self):
        spec = Spectrum(np.array([0.0, 0.1, 0.2]), np.array([0.0, 1.0, 1.0]))
        assert dominant_frequency(spec, exclude_dc=True)[0] == pytest.approx(0.1)


class TestPowerLawFit:
    def test_exact_square(self):
        xs = np.array([1.0, 2.0, 3.0, 4.0])
        fit = power_law_fit(xs, xs**2)
        assert fit.exponent == pytest.approx(2.0, abs=1e-12)
        assert fit.stderr == pytest.approx(0.0, abs=1e-12)

    def test_inverse_with_prefactor(self):
        xs = np.array([1.0, 2.0, 5.0])
        fit = power_law_fit(xs, 3.0 / xs)
        assert fit.exponent == pytest.approx(-1.0, abs=1e-12)
        assert fit.prefactor == pytest.approx(3.0, rel=1e-12)

    def test_invalid_inputs(self):
        with pytest.raises(ValueError):
            power_law_fit([1.0, 2.0], [1.0, 2.0])
        with pytest.raises(ValueError):
            power_law_fit([1.0, -2.0, 3.0], [1.0, 2.0, 3.0])


class TestCriticalSigma:
    def test_crossing_interpolated(self):
        sigmas = np.array([0.1, 0.2, 0.4])
        H = np.array([2.0, 1.0, 0.0])
        snapped, interp = critical_sigma(sigmas, H, threshold=0.5)
        assert snapped == pytest.approx(0.4)
        assert 0.2 < interp < 0.4

    def test_no_crossing(self):
        snapped, interp = critical_sigma([0.1, 0.2], [2.0, 1.5], threshold=0.5)
        assert math.isnan(snapped) and math.isnan(interp)

    def test_first_point_below(self):
        snapped, interp = critical_sigma([0.1, 0.2], [0.1, 0.0], threshold=0.5)
        assert snapped == interp == pytest.approx(0.1)


class TestResonanceEntropyShape:
    def test_cube_entropy_rises_peaks_then_freezes(self):
        # small-scale version of the phase-map row: multi-resonance step
        # sizes carry more spectral diversity than either extreme, and the
        # fully frozen regime sits at exactly zero
        from reflectmc.spectral import SdEngine

        n, N, T = 16, 60, 64
        vol = Volume.cube(n)
        rng = make_rng(99)
        reference = EmpiricalDistribution(vol.sample_uniform(rng, size=N))
        H = {}
        for sigma in (0.02, 0.15, 3.0):
            rr = make_rng((99, int(sigma * 100)))
            q0 = vol.sample_uniform(rr)
            trace = evolve_ensemble(q0, N, GmcParams(sigma_p=sigma, L=T), vol,
                                    rr, n_steps=T)
            engine = SdEngine(reference, SinkhornConfig())
            values = np.array([engine.divergence(trace.positions[s])[0]
                               for s in range(len(trace.times))])
            H[sigma] = resonance_entropy(values)
        assert H[3.0] == 0.0  # frozen: constant divergence
        assert H[0.15] > H[3.0]
        assert H[0.02] > 1.0 and H[0.15] > 1.0


class TestSdTimeSeries:
    def test_dirac_start_is_maximum(self):
        vol = Volume.ball(30)
        rng = make_rng(3)
        reference = EmpiricalDistribution(vol.sample_uniform(rng, size=100))
        q0 = vol.sample_uniform(rng)
        trace = evolve_ensemble(q0, 100, GmcParams(sigma_p=0.05, L=64), vol,
                                rng, n_steps=32)
        series = sd_time_series(trace, reference, SinkhornConfig())
        assert np.argmax(series.values) == 0
        assert np.all(series.converged)

    def test_uniform_vs_reference_floor(self):
        # an already uniform ensemble stays at the epsilon floor
        vol = Volume.ball(30)
        rng = make_rng(4)
        reference = EmpiricalDistribution(vol.sample_uniform(rng, size=150))
        Q = vol.sample_uniform(rng, size=150)
        from reflectmc.dynamics import evolve_states, draw_momentum

        trace = evolve_states(Q, draw_momentum(30, 0.05, rng, size=150), vol, 16)
        series = sd_time_series(trace, reference, SinkhornConfig())
        dirac = EmpiricalDistribution(np.tile(vol.sample_uniform(rng), (150, 1)))
        from reflectmc.sinkhorn import sinkhorn_divergence

        signal = sinkhorn_divergence(dirac, reference)
        assert np.all(np.abs(series.values) < 0.1 * signal)

    def test_non_convergence_flagged_not_dropped(self):
        vol = Volume.ball(10)
        rng = make_rng(5)
        reference = EmpiricalDistribution(vol.sample_uniform(rng, size=40))
        q0 = vol.sample_uniform(rng)
        trace = evolve_ensemble(q0, 40, GmcParams(sigma_p=0.1, L=16), vol,
                                rng, n_steps=8)
        config = SinkhornConfig(epsilon=1e-3, max_iterations=2)
        series = sd_time_series(trace, reference, config)
        assert len(series.values) == 9
        assert not np.all(series.converged)
        assert np.all(np.isfinite(series.values))

    def test_dimension_mismatch(self):
        vol = Volume.ball(5)
        rng = make_rng(6)
        reference = EmpiricalDistribution(vol.sample_uniform(rng, size=10))
        trace = evolve_ensemble(vol.sample_uniform(rng), 10,
                                GmcParams(sigma_p=0.1, L=4), vol, rng, n_steps=4)
        bad = EmpiricalDistribution(np.zeros((10, 4)))
        with pytest.raises(ValueError):
            sd_time_series(trace, bad, SinkhornConfig())
