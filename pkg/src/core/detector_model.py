"""
Closed-form detector physics: TIA response, DC response and analytic noise spectra
"""
import math
from typing import Callable, Dict, Literal, Sequence, Union

import numpy as np
from scipy import constants, integrate, optimize

from src.core.exceptions import BandOutOfRange, ConfigError, DomainError, NoCrossing, SaturationError
from src.models.detector import ButterworthShape, DetectorModel, LocalOscillator
from src.models.signals import Spectrum

Q_E = constants.e

FSTAR_CONVENTION = "f_star = omega_star / (2 pi); omega_star from the closed form with A0f0 in Hz"
FSTAR_ALT_CONVENTION = "f_star = omega_star read directly as Hz"
PSD_CONVENTION = "single-sided"
DB_CONVENTION = "10*log10 of power ratios"
SNEP_DEFINITION = (
    "total LO power P at which 2q * sum_arms(eta_coup * R * P / 2) equals the "
    "input-referred electronic noise density squared"
)

Illumination = Literal["illuminate_plus", "illuminate_minus", "balanced"]


def ideal_responsivity(wavelength: float) -> float:
    """Unity-quantum-efficiency responsivity lambda q / (h c), A/W"""
    return wavelength * Q_E / (constants.h * constants.c)


def check_pair(model: DetectorModel, lo: LocalOscillator) -> None:
    """Cross-check detector and LO: responsivity cannot beat the unity-QE bound"""
    bound = ideal_responsivity(lo.wavelength)
    for name, pd in (("pd_plus", model.pd_plus), ("pd_minus", model.pd_minus)):
        if pd.responsivity > bound * (1 + 1e-9):
            raise ConfigError(
                f"{name} responsivity {pd.responsivity:.4f} A/W exceeds the unity-QE bound "
                f"{bound:.4f} A/W at {lo.wavelength * 1e6:.3f} um"
            )


def _omega_star(model: DetectorModel) -> float:
    c_total = 2 * model.pd_plus.junction_capacitance + model.feedback.feedback_capacitor + model.opamp.input_capacitance
    return math.sqrt(model.opamp.gain_bandwidth_product / (2 * math.pi * c_total))


def _p_factor(model: DetectorModel, omega_star: float) -> float:
    rc = 2 * math.pi * model.feedback.gain_resistor * model.feedback.feedback_capacitor
    return (rc + 1.0 / model.opamp.gain_bandwidth_product) * omega_star


def butterworth_params(model: DetectorModel) -> ButterworthShape:
    """
    Closed-form (p, f_star) of the TIA response, evaluated exactly as written.

    The formula mixes A0f0 in hertz with an angular omega_star; the result is
    labelled f_star = omega_star / 2 pi (see FSTAR_CONVENTION).
    """
    omega_star = _omega_star(model)
    return ButterworthShape(p=_p_factor(model, omega_star), f_star=omega_star / (2 * math.pi))


def butterworth_conventions(model: DetectorModel) -> Dict[str, ButterworthShape]:
    """Closed form under both readings of omega_star"""
    omega_star = _omega_star(model)
    p = _p_factor(model, omega_star)
    return {
        "angular": ButterworthShape(p=p, f_star=omega_star / (2 * math.pi)),
        "hertz": ButterworthShape(p=p, f_star=omega_star),
    }


def response_shape(model: DetectorModel) -> ButterworthShape:
    """Response used for simulation: the measured fit when present, else the closed form"""
    return model.measured_response or butterworth_params(model)


def butterworth_gain(freqs: np.ndarray, p: float, f_star: float) -> np.ndarray:
    x2 = (freqs / f_star) ** 2
    return 1.0 / (1.0 + (p**2 - 2.0) * x2 + x2**2)


def gain_spectrum(shape: ButterworthShape, freqs: Union[float, Sequence[float], np.ndarray]) -> np.ndarray:
    """|r(f)|^2 of the second-order response, unit gain at DC"""
    f = np.asarray(freqs, dtype=float)
    if np.any(f < 0):
        raise DomainError("frequencies must be nonnegative")
    return butterworth_gain(f, shape.p, shape.f_star)


def half_power_crossing(shape: ButterworthShape, relative_to_peak: bool = False, rtol: float = 1e-4) -> float:
    """
    Smallest f > 0 where |r|^2 falls to half of its DC value (or of its peak).

    Root of the closed form bracketed above the peak, where the response is monotone.
    """
    x2_peak = max(0.0, (2.0 - shape.p**2) / 2.0)
    f_peak = shape.f_star * math.sqrt(x2_peak)
    reference = float(gain_spectrum(shape, f_peak)) if relative_to_peak else 1.0
    target = 0.5 * reference

    lo = f_peak
    hi = max(f_peak, shape.f_star) * 2.0
    for _ in range(200):
        if float(gain_spectrum(shape, hi)) < target:
            break
        lo, hi = hi, hi * 2.0
    else:
        raise NoCrossing(f"response with p={shape.p:.4g} never falls to half power")

    return optimize.brentq(lambda f: float(gain_spectrum(shape, f)) - target, lo, hi, rtol=rtol)


def dc_voltage(model: DetectorModel, lo: LocalOscillator, scenario: Illumination, power: float = None) -> float:
    """
    Bias-tee DC level for one illumination scenario.

    `power` is the optical power on the illuminated arm (each arm gets P/2 in
    the balanced case); it defaults to the LO average power.
    """
    p_opt = lo.average_power if power is None else power
    r_f = model.feedback.gain_resistor
    plus = model.pd_plus.effective_responsivity
    minus = model.pd_minus.effective_responsivity

    if scenario == "illuminate_plus":
        current = plus * p_opt
    elif scenario == "illuminate_minus":
        current = -minus * p_opt
    elif scenario == "balanced":
        current = (plus - minus) * p_opt / 2.0
    else:
        raise ConfigError(f"unknown DC scenario '{scenario}'")

    volts = r_f * current + model.v_offset
    if abs(volts) >= model.opamp.output_swing:
        raise SaturationError(
            f"DC output {volts:.3f} V reaches the {model.opamp.output_swing:.2f} V output swing"
        )
    return volts


def photocurrents_dc(model: DetectorModel, power: float) -> float:
    """Sum of balanced arm photocurrents, I+ + I-, for total LO power P"""
    return (model.pd_plus.effective_responsivity + model.pd_minus.effective_responsivity) * power / 2.0


def shot_noise_density(model: DetectorModel, power: float) -> float:
    """Single-sided shot-noise current PSD 2q I, A^2/Hz"""
    current = photocurrents_dc(model, power)
    if model.dark_current_shot_noise:
        current += model.pd_plus.dark_current + model.pd_minus.dark_current
    return 2.0 * Q_E * current


def analytic_output_psd(model: DetectorModel, lo: LocalOscillator, freqs) -> np.ndarray:
    """Output voltage PSD R_f^2 [S_shot + S_e] |r(f)|^2, V^2/Hz"""
    shape = response_shape(model)
    s_in = shot_noise_density(model, lo.average_power) + model.electronic_noise_density**2
    return model.feedback.gain_resistor**2 * s_in * gain_spectrum(shape, freqs)


def sa_power(
    spectrum_psd: Union[Spectrum, Callable[[np.ndarray], np.ndarray]],
    center: float,
    rbw: float,
    impedance: float,
) -> float:
    """
    Power read by a spectrum analyser in one resolution band: (2 / R_imp) * integral of S_V.

    A Spectrum is integrated as its piecewise-linear interpolant; a callable is
    integrated with adaptive quadrature.
    """
    if rbw <= 0:
        raise BandOutOfRange("resolution bandwidth must be positive")
    f_lo, f_hi = center - rbw / 2.0, center + rbw / 2.0

    if isinstance(spectrum_psd, Spectrum):
        freqs, psd = spectrum_psd.freqs, spectrum_psd.psd
        if f_lo < freqs[0] or f_hi > freqs[-1]:
            raise BandOutOfRange(
                f"band [{f_lo:.4g}, {f_hi:.4g}] Hz outside spectrum support [{freqs[0]:.4g}, {freqs[-1]:.4g}] Hz"
            )
        inner = freqs[(freqs > f_lo) & (freqs < f_hi)]
        grid = np.concatenate(([f_lo], inner, [f_hi]))
        area = integrate.trapezoid(np.interp(grid, freqs, psd), grid)
    else:
        if f_lo < 0:
            raise BandOutOfRange("band extends below 0 Hz")
        area, _ = integrate.quad(lambda f: float(spectrum_psd(np.asarray(f))), f_lo, f_hi)
    return 2.0 / impedance * float(area)


def snep(model: DetectorModel, noise_density: float = None) -> float:
    """
    Shot-noise-equivalent power (see SNEP_DEFINITION), W.

    `noise_density` overrides the model's electronic noise, e.g. with a measured value.
    """
    density = model.electronic_noise_density if noise_density is None else noise_density
    slope = 2.0 * Q_E * (model.pd_plus.effective_responsivity + model.pd_minus.effective_responsivity) / 2.0
    if density == 0:
        return 0.0
    return density**2 / slope


def clearance_db(model: DetectorModel, power: float) -> float:
    """Analytic shot-noise clearance (total over dark floor) at LO power P, dB"""
    floor = model.electronic_noise_density**2
    if model.dark_current_shot_noise:
        floor += 2.0 * Q_E * (model.pd_plus.dark_current + model.pd_minus.dark_current)
    if floor <= 0:
        raise DomainError("clearance undefined without a dark noise floor")
    total = shot_noise_density(model, power) + model.electronic_noise_density**2
    return 10.0 * math.log10(total / floor)
