import numpy as np
import pytest

from src.core import dsp
from src.core.exceptions import BandOutOfRange, DomainError, InsufficientData
from src.models.signals import Spectrum, TimeTrace


def _white_trace(n: int, sigma: float = 1.0, seed: int = 1) -> TimeTrace:
    rng = np.random.default_rng(seed)
    return TimeTrace(samples=sigma * rng.standard_normal(n), dt=1e-9, units="volts")


def _flat_spectrum(level: float = 1.0, n: int = 1000, step: float = 1e4) -> Spectrum:
    freqs = step * np.arange(1, n + 1)
    return Spectrum(freqs=freqs, psd=np.full(n, level), rbw=step, vbw=step)


def test_segment_lengths_for_analyser_settings():
    assert dsp.segment_length(1e9, 300e3) == 8192
    assert dsp.segment_length(1e9, 100e3) == 32768
    assert dsp.required_samples(1e9, 300e3, 100) == 413_696


def test_hann_enbw_is_one_and_a_half_bins():
    assert dsp.enbw_hz(8192, 1e9) == pytest.approx(1.5 * 1e9 / 8192, rel=1e-3)


def test_white_noise_reads_back_its_density():
    trace = _white_trace(dsp.required_samples(1e9, 300e3, 100), sigma=2.0)
    spec = dsp.estimate_psd(trace, rbw=300e3, vbw=300e3, n_averages=100, power=1e-3)
    assert spec.freqs[0] > 0
    assert spec.power == 1e-3
    assert np.mean(spec.psd) == pytest.approx(2.0 * 2.0**2 / 1e9, rel=0.02)


def test_video_filter_keeps_the_level_and_reduces_scatter():
    trace = _white_trace(dsp.required_samples(1e9, 300e3, 10))
    raw = dsp.estimate_psd(trace, rbw=300e3, vbw=300e3, n_averages=10)
    video = dsp.estimate_psd(trace, rbw=300e3, vbw=10e3, n_averages=10)
    assert np.mean(video.psd) == pytest.approx(np.mean(raw.psd), rel=0.02)
    assert np.std(video.psd) < np.std(raw.psd)


def test_tone_power_is_recovered():
    n = dsp.required_samples(1e9, 300e3, 20)
    t = np.arange(n) * 1e-9
    trace = TimeTrace(samples=0.5 * np.sin(2 * np.pi * 10e6 * t), dt=1e-9, units="volts")
    spec = dsp.estimate_psd(trace, rbw=300e3, vbw=300e3, n_averages=20)
    near = np.abs(spec.freqs - 10e6) < 1e6
    assert np.sum(spec.psd[near]) * spec.bin_width == pytest.approx(0.5**2 / 2, rel=0.01)


def test_short_trace_is_insufficient():
    with pytest.raises(InsufficientData):
        dsp.estimate_psd(_white_trace(10_000), rbw=300e3, vbw=10e3, n_averages=100)
    with pytest.raises(DomainError):
        dsp.estimate_psd(_white_trace(10_000), rbw=0.0, vbw=10e3, n_averages=1)


def test_gaussian_smoothing_preserves_integrated_power():
    spec = _flat_spectrum()
    bump = 1.0 + 5.0 * np.exp(-0.5 * ((spec.freqs - 5e6) / 2e5) ** 2)
    spec = spec.with_psd(bump)
    smoothed = dsp.gaussian_smooth(spec, fwhm=1.5e6)
    assert np.sum(smoothed.psd) == pytest.approx(np.sum(spec.psd), rel=5e-3)
    assert smoothed.psd.max() < spec.psd.max()


def test_gaussian_smoothing_keeps_flat_edges():
    spec = _flat_spectrum(level=3.0)
    np.testing.assert_allclose(dsp.gaussian_smooth(spec, fwhm=1.5e6).psd, 3.0, rtol=1e-12)


def test_gaussian_smoothing_rejects_sub_bin_width():
    with pytest.raises(DomainError):
        dsp.gaussian_smooth(_flat_spectrum(), fwhm=1e3)


def test_band_statistics():
    spec = _flat_spectrum()
    ramp = spec.with_psd(spec.freqs)
    assert dsp.band_average(spec, 1e6, 2e6) == pytest.approx(1.0)
    assert dsp.band_average(ramp, 1e6, 3e6) == pytest.approx(2e6)
    assert dsp.band_peak(ramp, 5e6, 1e5) == pytest.approx(5.1e6)
    with pytest.raises(BandOutOfRange):
        dsp.band_average(spec, 5e6, 20e6)
    with pytest.raises(BandOutOfRange):
        dsp.band_average(spec, 3e6, 2e6)


def test_db_helpers():
    assert dsp.to_db(100.0) == pytest.approx(20.0)
    np.testing.assert_allclose(dsp.to_db(np.array([1.0, 10.0])), [0.0, 10.0])
    with pytest.raises(DomainError):
        dsp.to_db(0.0)

    spec = _flat_spectrum()
    assert dsp.value_at(spec.with_psd(spec.freqs), 5.005e6) == pytest.approx(5.005e6)
    assert dsp.db_diff(_flat_spectrum(8.0), _flat_spectrum(1.0), 5e6) == pytest.approx(9.031, abs=1e-3)
    with pytest.raises(BandOutOfRange):
        dsp.value_at(spec, 50e6)


def test_dbm_conversion_inverts():
    spec = _flat_spectrum(level=1e-14)
    dbm = dsp.to_dbm(spec, 50.0)
    assert dbm.units == "dbm_in_rbw"
    assert dbm.psd[0] == pytest.approx(10 * np.log10(2 / 50 * 1e-14 * 1e4 / 1e-3))
    back = dsp.from_dbm(dbm, 50.0)
    assert back.units == "v2_per_hz"
    np.testing.assert_allclose(back.psd, spec.psd, rtol=1e-12)


def test_psd_estimate_is_unbiased_across_seeds():
    n = dsp.required_samples(1e9, 300e3, 10)
    spectra = [dsp.estimate_psd(_white_trace(n, seed=seed), rbw=300e3, vbw=300e3, n_averages=10) for seed in range(20)]
    mean = spectra[0].with_psd(np.mean([spec.psd for spec in spectra], axis=0))
    for f_lo in (10e6, 100e6, 250e6, 400e6):
        assert dsp.band_average(mean, f_lo, f_lo + 10e6) == pytest.approx(2.0 / 1e9, rel=0.03)


def test_doubling_averages_cuts_scatter_by_root_two():
    def relative_scatter(n_averages):
        n = dsp.required_samples(1e9, 300e3, n_averages)
        ratios = []
        for seed in range(5):
            spec = dsp.estimate_psd(_white_trace(n, seed=seed), rbw=300e3, vbw=300e3, n_averages=n_averages)
            ratios.append(np.std(spec.psd) / np.mean(spec.psd))
        return np.mean(ratios)

    assert relative_scatter(16) / relative_scatter(32) == pytest.approx(np.sqrt(2.0), rel=0.1)


@pytest.mark.parametrize("fwhm", [2e5, 5e5, 1.5e6])
def test_gaussian_smoothing_of_an_impulse_has_the_requested_fwhm(fwhm):
    spec = _flat_spectrum(level=0.0)
    impulse = np.zeros(spec.freqs.size)
    impulse[499] = 1.0
    smoothed = dsp.gaussian_smooth(spec.with_psd(impulse), fwhm=fwhm).psd
    center = spec.freqs[499]
    sigma = np.sqrt(np.sum(smoothed * (spec.freqs - center) ** 2) / np.sum(smoothed))
    assert 2.0 * np.sqrt(2.0 * np.log(2.0)) * sigma == pytest.approx(fwhm, rel=0.01)
    assert spec.freqs[np.argmax(smoothed)] == center


@pytest.mark.parametrize("factor", [1e-15, 0.3, 7.0])
def test_gaussian_smoothing_commutes_with_scaling(factor):
    spec = _flat_spectrum()
    shaped = spec.with_psd(1.0 + np.sin(spec.freqs / 7e5) ** 2)
    scaled = dsp.gaussian_smooth(shaped.with_psd(factor * shaped.psd), fwhm=3e5).psd
    np.testing.assert_allclose(scaled, factor * dsp.gaussian_smooth(shaped, fwhm=3e5).psd, rtol=1e-12)


@pytest.mark.parametrize("refinement", [2, 4, 5, 10])
def test_band_average_is_stable_under_bin_refinement(refinement):
    coarse = _flat_spectrum()
    fine = _flat_spectrum(n=1000 * refinement, step=1e4 / refinement)

    def ramp(spec):
        return spec.with_psd(1e-16 * spec.freqs / 1e6)

    def curve(spec):
        return spec.with_psd(1e-16 / (1.0 + (spec.freqs / 6e6) ** 2))

    assert dsp.band_average(ramp(fine), 1e6, 3e6) == pytest.approx(dsp.band_average(ramp(coarse), 1e6, 3e6), rel=1e-9)
    assert dsp.band_average(curve(fine), 2e6, 8e6) == pytest.approx(
        dsp.band_average(curve(coarse), 2e6, 8e6), rel=1e-3
    )
