"""
Figure-of-merit extraction: regressions, Butterworth fit, CMRR, clearance and efficiency accounting
"""
import logging
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import optimize, stats

from src.core import dsp
from src.core.detector_model import (
    butterworth_gain,
    gain_spectrum,
    half_power_crossing,
    ideal_responsivity,
    response_shape,
)
from src.core.exceptions import (
    DegenerateInput,
    DomainError,
    FitDiverged,
    InconsistentEfficiencies,
    InsufficientData,
)
from src.models.detector import ButterworthShape, DetectorModel
from src.models.report import ButterworthFit, Estimate, ExclusionPolicy, LinearFit
from src.models.signals import Spectrum

logger = logging.getLogger(__name__)

# Addition mode puts twice the per-diode power on one diode: 10*log10(4)
ADDITION_CORRECTION_DB = 10.0 * math.log10(4.0)

BUTTERWORTH_P_STARTS = (0.8, math.sqrt(2.0), 1.8)

SHOT_NOISE_R2 = 0.99


def _r_squared(y: np.ndarray, fitted: np.ndarray) -> float:
    ss_res = float(np.sum((y - fitted) ** 2))
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    if ss_tot == 0:
        return 1.0 if ss_res == 0 else 0.0
    return min(1.0, max(0.0, 1.0 - ss_res / ss_tot))


def _linear_regression(x: np.ndarray, y: np.ndarray):
    if np.ptp(x) == 0:
        raise DegenerateInput("all regression points share one abscissa")
    return stats.linregress(x, y)


# --- DC efficiency -----------------------------------------------------------


def fit_dc_efficiency(
    powers: Sequence[float],
    dc_volts: Sequence[float],
    model: DetectorModel,
    wavelength: float,
) -> Estimate:
    """
    Total efficiency of one arm from a DC sweep, with regression standard error.

    eta_total = |slope| / (R_ideal * R_f), R_ideal = lambda q / (h c).
    """
    x = np.asarray(powers, dtype=float)
    y = np.asarray(dc_volts, dtype=float)
    if x.size != y.size:
        raise DegenerateInput("powers and voltages differ in length")
    if x.size < 3:
        raise DegenerateInput(f"DC sweep needs at least 3 points, got {x.size}")
    if np.max(x) <= 0 or np.max(x) < 2.0 * np.min(x):
        raise DegenerateInput("DC sweep powers must span at least a factor of 2")

    fit = _linear_regression(x, y)
    scale = ideal_responsivity(wavelength) * model.feedback.gain_resistor
    stderr = float(fit.stderr) if np.isfinite(fit.stderr) else 0.0
    return Estimate(value=abs(float(fit.slope)) / scale, stderr=stderr / scale)


def decouple_coupling(eta_total: float, eta_qe: float) -> float:
    """eta_coup = eta_total / eta_QE"""
    if not 0.0 < eta_qe <= 1.0:
        raise DomainError(f"quantum efficiency {eta_qe} outside (0, 1]")
    if eta_total > eta_qe:
        raise InconsistentEfficiencies(
            f"total efficiency {eta_total:.4f} exceeds quantum efficiency {eta_qe:.4f} (coupling > 1)"
        )
    return eta_total / eta_qe


# --- Gain spectrum -----------------------------------------------------------


def corrected_gain(shot: Spectrum, dark: Spectrum, plateau: Tuple[float, float]) -> Spectrum:
    """Shot minus dark PSD normalized to its low-frequency plateau average"""
    if shot.freqs.size != dark.freqs.size or not np.allclose(shot.freqs, dark.freqs):
        raise DegenerateInput("shot and dark spectra are on different frequency grids")
    difference = shot.with_psd(shot.psd - dark.psd)
    level = dsp.band_average(difference, *plateau)
    if level <= 0:
        raise DegenerateInput("no shot-noise excess over the dark floor on the plateau")
    return difference.with_psd(difference.psd / level)


def _raw_half_power(freqs: np.ndarray, gain: np.ndarray) -> float:
    reference = float(np.mean(gain[: max(3, gain.size // 50)]))
    below = np.nonzero(gain < 0.5 * reference)[0]
    return float(freqs[below[0]]) if below.size else float(freqs[-1])


def fit_butterworth(
    corrected: Spectrum,
    f_lo: Optional[float] = None,
    f_hi: Optional[float] = None,
    p_starts: Sequence[float] = BUTTERWORTH_P_STARTS,
) -> ButterworthFit:
    """
    Least-squares fit of scale * |r(f)|^2 over (p, f_star, scale).

    Levenberg-Marquardt in log-parameters, started from each p in `p_starts`
    with f_star placed so the start reproduces the data's half-power crossing.
    """
    f_lo = corrected.freqs[0] if f_lo is None else f_lo
    f_hi = corrected.freqs[-1] if f_hi is None else f_hi
    mask = (corrected.freqs >= f_lo) & (corrected.freqs <= f_hi)
    freqs, gain = corrected.freqs[mask], corrected.psd[mask]
    if freqs.size < 4:
        raise InsufficientData(f"Butterworth fit needs at least 4 bins, got {freqs.size}")

    crossing = _raw_half_power(freqs, gain)

    def residuals(theta: np.ndarray) -> np.ndarray:
        p, f_star, scale = np.exp(theta)
        return scale * butterworth_gain(freqs, p, f_star) - gain

    attempts = []
    best = None
    for p0 in p_starts:
        ratio = half_power_crossing(ButterworthShape(p=p0, f_star=1.0))
        x0 = np.log([p0, crossing / ratio, 1.0])
        try:
            result = optimize.least_squares(residuals, x0, method="lm")
        except (ValueError, FloatingPointError) as e:
            attempts.append({"p0": p0, "message": str(e)})
            continue
        attempts.append({"p0": p0, "message": result.message, "cost": float(result.cost)})
        if result.success and np.all(np.isfinite(result.x)) and (best is None or result.cost < best.cost):
            best = result

    if best is None:
        raise FitDiverged("Butterworth fit failed from every start", diagnostics={"attempts": attempts})

    p, f_star, scale = (float(v) for v in np.exp(best.x))
    fitted = scale * butterworth_gain(freqs, p, f_star)
    logger.debug(f"Butterworth fit p={p:.4f} f_star={f_star:.4g} Hz scale={scale:.4f}")
    return ButterworthFit(
        shape=ButterworthShape(p=p, f_star=f_star),
        scale=scale,
        r_squared=_r_squared(gain, fitted),
        residuals=(gain - fitted).tolist(),
    )


def bandwidth_3db(fit: ButterworthFit) -> float:
    """Half-power crossing of the fitted response relative to its DC value"""
    return half_power_crossing(fit.shape)


def bandwidth_3db_from_peak(fit: ButterworthFit) -> float:
    """Half-power crossing relative to the response peak (equals bandwidth_3db without peaking)"""
    return half_power_crossing(fit.shape, relative_to_peak=True)


# --- Linearity and saturation ------------------------------------------------


def _relative_deviation(y: float, predicted: float, scale: float) -> float:
    return (y - predicted) / (abs(predicted) if predicted != 0 else scale)


def fit_linearity(
    powers: Sequence[float],
    band_variances: Sequence[float],
    policy: ExclusionPolicy = ExclusionPolicy(),
) -> LinearFit:
    """
    Linear fit of noise variance against LO power, excluding saturated points.

    Fit the lowest-power share first, then add points in power order while each
    deviates by less than the threshold from the running prediction; the first
    failing point and everything above it are excluded.
    """
    x = np.asarray(powers, dtype=float)
    y = np.asarray(band_variances, dtype=float)
    if x.size != y.size:
        raise DegenerateInput("powers and variances differ in length")
    if x.size < 5:
        raise DegenerateInput(f"linearity fit needs at least 5 points, got {x.size}")

    order = np.argsort(x, kind="stable")
    n_seed = max(3, int(math.ceil(policy.seed_fraction * x.size)))
    fitted: List[int] = [int(i) for i in order[:n_seed]]
    fit = _linear_regression(x[fitted], y[fitted])
    scale = float(np.max(np.abs(y))) or 1.0

    excluded: List[int] = []
    super_linear = False
    for position, index in enumerate(order[n_seed:], start=n_seed):
        index = int(index)
        deviation = _relative_deviation(y[index], fit.slope * x[index] + fit.intercept, scale)
        if abs(deviation) >= policy.threshold:
            excluded = [int(i) for i in order[position:]]
            super_linear = deviation > 0
            logger.debug(f"Point at {x[index]:.4g} W deviates {deviation:+.2%}; excluding {len(excluded)} points")
            break
        fitted.append(index)
        fit = _linear_regression(x[fitted], y[fitted])

    r_squared = _r_squared(y[fitted], fit.slope * x[fitted] + fit.intercept)
    return LinearFit(
        slope=float(fit.slope),
        intercept=float(fit.intercept),
        r_squared=r_squared,
        slope_stderr=float(fit.stderr) if np.isfinite(fit.stderr) else 0.0,
        intercept_stderr=float(fit.intercept_stderr) if np.isfinite(fit.intercept_stderr) else 0.0,
        fitted_points=sorted(fitted),
        excluded_points=sorted(excluded),
        shot_noise_limited=r_squared >= SHOT_NOISE_R2 and not super_linear,
    )


def saturation_from_fit(powers: Sequence[float], fit: LinearFit) -> float:
    """Smallest excluded power, or +inf when every point was fitted"""
    if not fit.excluded_points:
        return math.inf
    return float(min(powers[i] for i in fit.excluded_points))


def detect_saturation(
    powers: Sequence[float],
    band_variances: Sequence[float],
    policy: ExclusionPolicy = ExclusionPolicy(),
) -> float:
    """Saturation onset under the linearity exclusion policy; math.inf means none"""
    return saturation_from_fit(powers, fit_linearity(powers, band_variances, policy))


def noise_variances(sweep: Sequence[Spectrum], dark: Spectrum, band: Tuple[float, float]) -> List[float]:
    """Electronic-noise-subtracted band averages of a power sweep"""
    floor = dsp.band_average(dark, *band)
    return [dsp.band_average(spec, *band) - floor for spec in sweep]


# --- Common-mode rejection ---------------------------------------------------


def cmrr_raw(balanced: Spectrum, addition: Spectrum, rep_rate: float, half_width: float = None) -> float:
    """Addition-over-balanced level at the repetition rate, dB"""
    if half_width is None:
        half_width = max(balanced.rbw, 2.0 * balanced.bin_width, 2.0 * addition.bin_width)
    peak_addition = dsp.band_peak(addition, rep_rate, half_width)
    peak_balanced = dsp.band_peak(balanced, rep_rate, half_width)
    return dsp.to_db(peak_addition / peak_balanced)


def correct_addition(raw_db: float) -> float:
    """Remove the addition-mode power doubling from a raw CMRR difference"""
    if abs(raw_db) < 1e-9:
        logger.warning("Balanced and addition spectra are identical at the repetition rate; CMRR is degenerate")
    return raw_db - ADDITION_CORRECTION_DB


def cmrr(balanced: Spectrum, addition: Spectrum, rep_rate: float) -> float:
    """True CMRR at the repetition rate, dB"""
    return correct_addition(cmrr_raw(balanced, addition, rep_rate))


# --- Clearance and efficiencies ---------------------------------------------


def clearance(shot: Spectrum, dark: Spectrum, f: float) -> float:
    """Shot-noise clearance at f: total spectrum over dark spectrum, dB"""
    return dsp.db_diff(shot, dark, f)


def eta_snr(snr_db: float) -> float:
    """Measurement efficiency (SNR - 1) / SNR for a clearance in dB"""
    if not snr_db > 0:
        raise DomainError(f"clearance {snr_db} dB must be positive")
    if math.isinf(snr_db):
        return 1.0
    return 1.0 - 10.0 ** (-snr_db / 10.0)


def total_efficiency(*factors: float) -> float:
    """Product of efficiency factors, each in (0, 1]"""
    for factor in factors:
        if not 0.0 < factor <= 1.0:
            raise DomainError(f"efficiency factor {factor} outside (0, 1]")
    return float(np.prod(factors))


def electronic_current_noise_density(
    dark: Spectrum,
    model: DetectorModel,
    band: Tuple[float, float],
    shape: ButterworthShape = None,
) -> float:
    """Dark output floor referred back to the TIA input and averaged over the band, A/rtHz"""
    shape = shape or response_shape(model)
    referred = dark.psd / (model.feedback.gain_resistor**2 * gain_spectrum(shape, dark.freqs))
    return math.sqrt(max(dsp.band_average(dark.with_psd(referred), *band), 0.0))

