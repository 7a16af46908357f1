"""
Detector and local-oscillator data models
"""
import math
from typing import Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator


class _Frozen(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class PhotodiodeParams(_Frozen):
    responsivity: float = Field(ge=0)  # A/W
    junction_capacitance: float = Field(ge=0)  # F
    shunt_resistance: float = Field(ge=0)  # ohm
    dark_current: float = Field(ge=0)  # A
    active_diameter: float = Field(ge=0)  # m
    reverse_bias: float = Field(ge=0)  # V
    quantum_efficiency: float = Field(ge=0, le=1)
    coupling_efficiency: float = Field(ge=0, le=1)

    @property
    def effective_responsivity(self) -> float:
        """Coupling-weighted responsivity, A per watt incident on the arm"""
        return self.coupling_efficiency * self.responsivity


class OpAmpParams(_Frozen):
    gain_bandwidth_product: float = Field(gt=0)  # Hz
    voltage_noise: float = Field(gt=0)  # V/rtHz
    current_noise: float = Field(gt=0)  # A/rtHz
    input_capacitance: float = Field(gt=0)  # F
    input_bias_offset_current: float = Field(gt=0)  # A
    output_swing: float = Field(gt=0)  # V, symmetric rail


class FeedbackNetwork(_Frozen):
    gain_resistor: float = Field(gt=0)  # ohm
    feedback_capacitor: float = Field(gt=0)  # F


class ButterworthShape(_Frozen):
    """Second-order response |r(f)|^2 = 1 / (1 + (p^2 - 2) x^2 + x^4), x = f / f_star"""

    p: float = Field(gt=0)
    f_star: float = Field(gt=0)  # Hz

    @property
    def is_critically_flat(self) -> bool:
        return math.isclose(self.p, math.sqrt(2.0), rel_tol=1e-12)


class DetectorModel(_Frozen):
    pd_plus: PhotodiodeParams
    pd_minus: PhotodiodeParams
    opamp: OpAmpParams
    feedback: FeedbackNetwork
    electronic_noise_density: float = Field(ge=0)  # A/rtHz, input-referred, flat
    v_offset: float = 0.0  # V
    sa_impedance: float = Field(default=50.0, gt=0)  # ohm
    # When set, simulation and noise modelling use this response instead of the closed form
    measured_response: Optional[ButterworthShape] = None
    dark_current_shot_noise: bool = False


class LocalOscillator(_Frozen):
    wavelength: float = Field(gt=0)  # m
    average_power: float = Field(ge=0)  # W
    repetition_rate: float = Field(gt=0)  # Hz
    pulse_fwhm: float = Field(ge=0)  # s, 0 selects the delta-comb limit
    rin_density: float = Field(default=0.0, ge=0)  # 1/Hz

    @model_validator(mode="after")
    def _pulse_fits_period(self):
        if self.pulse_fwhm >= 1.0 / self.repetition_rate:
            raise ValueError("pulse_fwhm must be shorter than the repetition period")
        return self

    def with_power(self, power: float) -> "LocalOscillator":
        return LocalOscillator(**{**self.model_dump(), "average_power": power})
