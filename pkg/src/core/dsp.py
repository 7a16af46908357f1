"""
Spectrum-analyser emulation: PSD estimation, smoothing, band statistics and dB helpers
"""
import math
from typing import Union

import numpy as np
from scipy import ndimage, signal

from src.core.exceptions import BandOutOfRange, DomainError, InsufficientData
from src.models.signals import Spectrum, TimeTrace

WINDOW = "hann"
FWHM_TO_SIGMA = 1.0 / (2.0 * math.sqrt(2.0 * math.log(2.0)))

ArrayLike = Union[float, np.ndarray]


def segment_length(sample_rate: float, rbw: float) -> int:
    """Power-of-two segment giving a bin spacing of at most rbw / 2"""
    minimum = int(math.ceil(2.0 * sample_rate / rbw))
    return 1 << max(minimum - 1, 1).bit_length()


def required_samples(sample_rate: float, rbw: float, n_averages: int) -> int:
    """Trace length needed for n_averages half-overlapping segments"""
    nperseg = segment_length(sample_rate, rbw)
    return nperseg + (n_averages - 1) * (nperseg // 2)


def enbw_hz(nperseg: int, sample_rate: float) -> float:
    """Equivalent noise bandwidth of one FFT bin with the analysis window"""
    window = signal.get_window(WINDOW, nperseg)
    return sample_rate * float(np.sum(window**2)) / float(np.sum(window)) ** 2


def _video_filter(psd: np.ndarray, rbw: float, vbw: float, bin_width: float) -> np.ndarray:
    # One-pole video filter across sweep bins, span capped at one RBW
    if vbw >= rbw or psd.size < 8:
        return psd
    span_bins = min(rbw / vbw, rbw / bin_width)
    if span_bins <= 1.0:
        return psd
    alpha = 1.0 / span_bins
    return signal.filtfilt([alpha], [1.0, alpha - 1.0], psd)


def estimate_psd(trace: TimeTrace, rbw: float, vbw: float, n_averages: int, power: float = 0.0) -> Spectrum:
    """
    Averaged-periodogram PSD of a trace, single-sided, in units^2/Hz.

    Density scaling divides by the window's energy, so white noise reads back
    its density; the window's ENBW is the effective resolution bandwidth.
    """
    if rbw <= 0 or vbw <= 0 or n_averages < 1:
        raise DomainError("rbw, vbw and n_averages must be positive")
    fs = trace.sample_rate
    nperseg = segment_length(fs, rbw)
    needed = required_samples(fs, rbw, n_averages)
    if trace.samples.size < needed:
        raise InsufficientData(
            f"{n_averages} averages at RBW {rbw:.3g} Hz need {needed} samples, trace has {trace.samples.size}"
        )

    freqs, psd = signal.welch(
        trace.samples[:needed],
        fs=fs,
        window=WINDOW,
        nperseg=nperseg,
        noverlap=nperseg // 2,
        detrend="constant",
        scaling="density",
    )
    freqs, psd = freqs[1:], psd[1:]
    psd = _video_filter(psd, rbw, vbw, fs / nperseg)
    return Spectrum(freqs=freqs, psd=psd, rbw=rbw, vbw=vbw, n_averages=n_averages, power=power)


def gaussian_smooth(spec: Spectrum, fwhm: float) -> Spectrum:
    """
    Moving average with a unit-area Gaussian kernel of the given FWHM.

    Edges: the kernel is truncated at the spectrum ends and renormalized.
    """
    bin_width = spec.bin_width
    if fwhm < bin_width:
        raise DomainError(f"FWHM {fwhm:.3g} Hz is below the bin spacing {bin_width:.3g} Hz")
    steps = np.diff(spec.freqs)
    if steps.size and np.max(np.abs(steps - bin_width)) > 1e-6 * bin_width:
        raise DomainError("gaussian_smooth needs a uniform frequency grid")

    sigma = fwhm * FWHM_TO_SIGMA / bin_width
    weighted = ndimage.gaussian_filter1d(spec.psd, sigma, mode="constant", cval=0.0)
    coverage = ndimage.gaussian_filter1d(np.ones_like(spec.psd), sigma, mode="constant", cval=0.0)
    return spec.with_psd(weighted / coverage)


def _band_mask(spec: Spectrum, f_lo: float, f_hi: float) -> np.ndarray:
    tolerance = 1e-9 * max(abs(f_hi), 1.0)
    if f_lo > f_hi or f_lo < spec.freqs[0] - tolerance or f_hi > spec.freqs[-1] + tolerance:
        raise BandOutOfRange(
            f"band [{f_lo:.4g}, {f_hi:.4g}] Hz outside spectrum support "
            f"[{spec.freqs[0]:.4g}, {spec.freqs[-1]:.4g}] Hz"
        )
    mask = (spec.freqs >= f_lo - tolerance) & (spec.freqs <= f_hi + tolerance)
    if not mask.any():
        raise BandOutOfRange(f"no bins in [{f_lo:.4g}, {f_hi:.4g}] Hz")
    return mask


def band_average(spec: Spectrum, f_lo: float, f_hi: float) -> float:
    """Mean PSD over the bins of the closed band [f_lo, f_hi]"""
    return float(np.mean(spec.psd[_band_mask(spec, f_lo, f_hi)]))


def band_peak(spec: Spectrum, center: float, half_width: float) -> float:
    """Largest PSD bin within center +- half_width"""
    return float(np.max(spec.psd[_band_mask(spec, center - half_width, center + half_width)]))


def to_db(ratio: ArrayLike) -> ArrayLike:
    values = np.asarray(ratio, dtype=float)
    if np.any(values <= 0) or np.any(~np.isfinite(values)):
        raise DomainError("dB conversion needs positive finite ratios")
    result = 10.0 * np.log10(values)
    return float(result) if result.ndim == 0 else result


def value_at(spec: Spectrum, f: float) -> float:
    if not spec.freqs[0] <= f <= spec.freqs[-1]:
        raise BandOutOfRange(f"{f:.4g} Hz outside spectrum support")
    return float(np.interp(f, spec.freqs, spec.psd))


def db_diff(spec_a: Spectrum, spec_b: Spectrum, f: float) -> float:
    """Level of spec_a over spec_b at frequency f, dB"""
    return to_db(value_at(spec_a, f) / value_at(spec_b, f))


def to_dbm(spec: Spectrum, impedance: float) -> Spectrum:
    """V^2/Hz density -> analyser reading in dBm per resolution band (flat-band form of the SA power)"""
    if spec.units == "dbm_in_rbw":
        return spec
    watts = 2.0 / impedance * spec.psd * spec.rbw
    return spec.with_psd(to_db(watts / 1e-3), units="dbm_in_rbw")


def from_dbm(spec: Spectrum, impedance: float) -> Spectrum:
    """Inverse of to_dbm, for analyser exports"""
    if spec.units == "v2_per_hz":
        return spec
    watts = 1e-3 * 10.0 ** (spec.psd / 10.0)
    return spec.with_psd(watts * impedance / (2.0 * spec.rbw), units="v2_per_hz")
