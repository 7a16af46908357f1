"""
Monte-Carlo synthesis of photocurrent and output-voltage traces
"""
import logging
import math
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import fft, optimize, signal

from src.core.detector_model import Q_E, check_pair, gain_spectrum, response_shape
from src.core.exceptions import ConfigError
from src.models.detector import DetectorModel, LocalOscillator
from src.models.signals import Scenario, SynthConfig, TimeTrace

logger = logging.getLogger(__name__)

# Random stream tags; each stream is keyed by (seed, sweep index, tag)
_RIN, _SHOT_PLUS, _SHOT_MINUS, _ELECTRONIC = 1, 2, 3, 4

# Harmonic amplitude a resolvable pulse may still carry at Nyquist
_RESOLVABLE_LEVEL = 1e-3

# Filter realization tolerance below 0.8 f_star
_RESPONSE_TOLERANCE = 0.01


class HomodyneRun(BaseModel):
    """Bias-tee outputs of one simulated acquisition"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    ac: TimeTrace
    dc_value: float


def stream(seed: int, index: int, tag: int) -> np.random.Generator:
    """Independent random stream for one sweep point and noise source"""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(index, tag)))


def _harmonic_weights(lo: LocalOscillator, cfg: SynthConfig) -> np.ndarray:
    nyquist = cfg.sample_rate / 2.0
    n_harmonics = int(math.ceil(nyquist / lo.repetition_rate)) - 1
    k = np.arange(1, max(n_harmonics, 0) + 1)

    if cfg.delta_pulses:
        return np.ones(k.size)

    def gaussian(f):
        return np.exp(-((math.pi * f * lo.pulse_fwhm) ** 2) / (4.0 * math.log(2.0)))

    if lo.pulse_fwhm == 0 or gaussian(nyquist) > _RESOLVABLE_LEVEL:
        raise ConfigError(
            f"pulse FWHM {lo.pulse_fwhm:.3g} s is not resolvable at {cfg.sample_rate:.3g} Sa/s; "
            "request delta pulses or raise the sample rate"
        )
    return gaussian(k * lo.repetition_rate)


def synth_pulse_train(lo: LocalOscillator, cfg: SynthConfig, index: int = 0) -> TimeTrace:
    """
    Optical power envelope of the pulsed LO, W.

    The periodic pulse train is built from its Fourier series, truncated below
    Nyquist, so the time average is exact and nothing aliases into band.
    Delta mode gives equal-area band-limited impulses.
    """
    weights = _harmonic_weights(lo, cfg)
    t = np.arange(cfg.n_samples) * cfg.dt

    shape = np.ones(cfg.n_samples)
    for k, weight in enumerate(weights, start=1):
        shape += 2.0 * weight * np.cos(2.0 * math.pi * k * lo.repetition_rate * t)
    envelope = lo.average_power * shape

    if lo.rin_density > 0:
        sigma = math.sqrt(lo.rin_density * cfg.sample_rate / 2.0)
        envelope = envelope * (1.0 + sigma * stream(cfg.seed, index, _RIN).standard_normal(cfg.n_samples))

    return TimeTrace(samples=envelope, dt=cfg.dt, units="watts", seed=cfg.seed)


def split_ratios(model: DetectorModel, scenario: Scenario) -> Tuple[float, float]:
    """Fraction of LO power reaching PD+ and PD-"""
    a_plus = model.pd_plus.effective_responsivity
    a_minus = model.pd_minus.effective_responsivity
    if scenario.balance_dc and a_plus + a_minus > 0:
        s_plus, s_minus = a_minus / (a_plus + a_minus), a_plus / (a_plus + a_minus)
    else:
        s_plus, s_minus = 0.5, 0.5

    if scenario.kind == "blocked_plus":
        return 0.0, s_minus
    if scenario.kind == "blocked_minus":
        return s_plus, 0.0
    if scenario.kind == "addition":
        return 1.0, 0.0
    return s_plus, s_minus


def _delay(samples: np.ndarray, dt: float, delay: float) -> np.ndarray:
    if delay == 0:
        return samples
    spectrum = fft.rfft(samples)
    freqs = fft.rfftfreq(samples.size, dt)
    return fft.irfft(spectrum * np.exp(-2j * math.pi * freqs * delay), samples.size)


def arm_powers(envelope: TimeTrace, model: DetectorModel, scenario: Scenario) -> Tuple[np.ndarray, np.ndarray]:
    """Classical optical power on each arm, with imbalance and path delay applied"""
    s_plus, s_minus = split_ratios(model, scenario)
    mean = envelope.mean()
    ripple = envelope.samples - mean
    eps = scenario.arm_imbalance if scenario.kind == "balanced" else 0.0

    plus = s_plus * (mean + (1.0 + eps) * ripple)
    minus = s_minus * (mean + (1.0 - eps) * ripple)
    return plus, _delay(minus, envelope.dt, scenario.path_delay)


def synth_photocurrents(
    envelope: TimeTrace,
    model: DetectorModel,
    scenario: Scenario,
    seed: int,
    index: int = 0,
) -> Tuple[TimeTrace, TimeTrace]:
    """
    Photocurrents at PD+ and PD-, A.

    Shot noise is white Gaussian with single-sided PSD 2q times the local
    mean current, drawn independently for the two diodes.
    """
    if envelope.units != "watts":
        raise ConfigError(f"envelope must be in watts, got {envelope.units}")

    fs = envelope.sample_rate
    traces = []
    for pd, power, tag in zip(
        (model.pd_plus, model.pd_minus),
        arm_powers(envelope, model, scenario),
        (_SHOT_PLUS, _SHOT_MINUS),
    ):
        photo = pd.effective_responsivity * power
        noisy_current = np.clip(photo, 0.0, None)
        if model.dark_current_shot_noise:
            noisy_current = noisy_current + pd.dark_current
        sigma = np.sqrt(Q_E * fs * noisy_current)
        current = photo + pd.dark_current + sigma * stream(seed, index, tag).standard_normal(photo.size)
        traces.append(TimeTrace(samples=current, dt=envelope.dt, units="amps", seed=seed))
    return traces[0], traces[1]


def _analog_response(model: DetectorModel, freqs: np.ndarray) -> np.ndarray:
    shape = response_shape(model)
    omega = 2.0 * math.pi * shape.f_star
    _, h = signal.freqs([omega**2], [1.0, shape.p * omega, omega**2], worN=2.0 * math.pi * freqs)
    return h


def tia_filter(current: TimeTrace, model: DetectorModel) -> TimeTrace:
    """
    Transimpedance stage: R_f times the current shaped by the second-order response.

    Realized as an FFT-domain multiply by the analog response sampled on the
    trace's frequency grid, so the DC gain is exactly R_f.
    """
    if current.units != "amps":
        raise ConfigError(f"TIA input must be in amps, got {current.units}")

    shape = response_shape(model)
    n = current.samples.size
    freqs = fft.rfftfreq(n, current.dt)
    if 0.8 * shape.f_star >= freqs[-1]:
        raise ConfigError(
            f"sample rate {current.sample_rate:.3g} Hz cannot represent the response up to 0.8 f_star"
        )

    h = _analog_response(model, freqs)
    band = freqs <= 0.8 * shape.f_star
    mismatch = np.max(np.abs(np.abs(h[band]) ** 2 / gain_spectrum(shape, freqs[band]) - 1.0))
    if mismatch > _RESPONSE_TOLERANCE:
        raise ConfigError(f"filter realization deviates {mismatch:.2%} from the closed form")

    filtered = fft.irfft(fft.rfft(current.samples) * h, n)
    return current.derive(model.feedback.gain_resistor * filtered, units="volts")


def soft_clip(volts: np.ndarray, rail: float) -> np.ndarray:
    """Symmetric soft clip: identity below rail/2, tanh approach to +-rail above"""
    knee = 0.5 * rail
    magnitude = np.abs(volts)
    compressed = knee + (rail - knee) * np.tanh((magnitude - knee) / (rail - knee))
    return np.where(magnitude <= knee, volts, np.sign(volts) * compressed)


def soft_clip_slope(volts: np.ndarray, rail: float) -> np.ndarray:
    """Small-signal gain d(soft_clip)/dV"""
    knee = 0.5 * rail
    magnitude = np.abs(volts)
    slope = 1.0 / np.cosh((magnitude - knee) / (rail - knee)) ** 2
    return np.where(magnitude <= knee, 1.0, slope)


def apply_saturation(voltage: TimeTrace, model: DetectorModel) -> TimeTrace:
    if voltage.units != "volts":
        raise ConfigError(f"saturation acts on volts, got {voltage.units}")
    return voltage.derive(soft_clip(voltage.samples, model.opamp.output_swing))


def _check_sample_rate(model: DetectorModel, cfg: SynthConfig) -> None:
    f_star = response_shape(model).f_star
    if cfg.sample_rate <= 4.0 * f_star:
        raise ConfigError(
            f"sample rate {cfg.sample_rate:.3g} Hz must exceed 4 x f_star = {4.0 * f_star:.3g} Hz"
        )


def simulate_homodyne(
    model: DetectorModel,
    lo: LocalOscillator,
    scenario: Scenario,
    cfg: SynthConfig,
    index: int = 0,
) -> HomodyneRun:
    """Envelope -> photocurrents -> subtraction -> TIA -> saturation -> bias tee"""
    check_pair(model, lo)
    _check_sample_rate(model, cfg)

    envelope = synth_pulse_train(lo, cfg, index)
    i_plus, i_minus = synth_photocurrents(envelope, model, scenario, cfg.seed, index)

    difference = i_plus.samples - i_minus.samples
    if model.electronic_noise_density > 0:
        sigma = model.electronic_noise_density * math.sqrt(cfg.sample_rate / 2.0)
        difference = difference + sigma * stream(cfg.seed, index, _ELECTRONIC).standard_normal(difference.size)

    volts = tia_filter(i_plus.derive(difference), model)
    volts = apply_saturation(volts.derive(volts.samples + model.v_offset), model)

    dc_value = volts.mean()
    return HomodyneRun(ac=volts.derive(volts.samples - dc_value), dc_value=dc_value)


def compression_loss(
    model: DetectorModel,
    lo: LocalOscillator,
    scenario: Scenario,
    cfg: SynthConfig,
) -> float:
    """
    Fractional loss of small-signal noise power caused by the soft clip.

    Evaluated on the noise-free output: 1 - <g'(v(t))^2>, which is how much a
    white noise floor riding on the waveform is compressed.
    """
    volts = _noise_free_output(model, lo, scenario, cfg)
    return float(1.0 - np.mean(soft_clip_slope(volts, model.opamp.output_swing) ** 2))


def _noise_free_output(model: DetectorModel, lo: LocalOscillator, scenario: Scenario, cfg: SynthConfig) -> np.ndarray:
    quiet_lo = lo.model_copy(update={"rin_density": 0.0})
    envelope = synth_pulse_train(quiet_lo, cfg)
    plus, minus = arm_powers(envelope, model, scenario)
    difference = model.pd_plus.effective_responsivity * plus - model.pd_minus.effective_responsivity * minus
    difference = difference + model.pd_plus.dark_current - model.pd_minus.dark_current
    volts = tia_filter(envelope.derive(difference, units="amps"), model)
    return volts.samples + model.v_offset


def imbalance_for_saturation(
    model: DetectorModel,
    lo: LocalOscillator,
    cfg: SynthConfig,
    target_power: float,
    threshold: float,
    path_delay: float = 0.0,
) -> float:
    """
    Rep-rate imbalance at which compression of the in-band noise reaches `threshold` at `target_power`.

    The balanced output is linear in the imbalance, so the noise-free waveform is
    synthesized twice and the imbalance found as the root of the compression curve.
    """
    check_pair(model, lo)
    periods = 200
    short = SynthConfig(
        sample_rate=cfg.sample_rate,
        duration=periods / lo.repetition_rate,
        seed=cfg.seed,
        delta_pulses=cfg.delta_pulses,
    )
    target_lo = lo.with_power(target_power)
    v0 = _noise_free_output(model, target_lo, Scenario(arm_imbalance=0.0, path_delay=path_delay), short)
    v1 = _noise_free_output(model, target_lo, Scenario(arm_imbalance=1.0, path_delay=path_delay), short)
    rail = model.opamp.output_swing

    def loss(eps: float) -> float:
        return float(1.0 - np.mean(soft_clip_slope(v0 + eps * (v1 - v0), rail) ** 2))

    if loss(0.0) >= threshold:
        return 0.0
    if loss(1.0) < threshold:
        raise ConfigError(
            f"no imbalance in [0, 1] compresses the noise by {threshold:.0%} at {target_power * 1e3:.3g} mW"
        )

    eps = optimize.brentq(lambda e: loss(e) - threshold, 0.0, 1.0, xtol=1e-6)
    logger.info(f"Imbalance {eps:.4f} compresses in-band noise by {threshold:.0%} at {target_power * 1e3:.3g} mW")
    return eps
