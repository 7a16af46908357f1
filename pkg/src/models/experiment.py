"""
Experiment data models: sweep settings, CLI plans and measurement sets
"""
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.core.config import settings
from src.models.detector import DetectorModel, LocalOscillator
from src.models.signals import Spectrum


def _default_dc_powers() -> List[float]:
    return [float(p) for p in np.linspace(15e-6, 120e-6, 8)]


def _default_sweep_powers() -> List[float]:
    return [round(0.2e-3 * k, 12) for k in range(1, 13)]


class SweepConfig(BaseModel):
    """Everything `characterize` needs besides the detector and LO"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int = Field(default=settings.default_seed, ge=0)
    sample_rate: float = Field(default=settings.sample_rate_hz, gt=0)
    n_averages: int = Field(default=settings.n_averages, ge=1)
    delta_pulses: bool = False

    # DC efficiency sweep: optical power on the illuminated arm
    dc_powers: List[float] = Field(default_factory=_default_dc_powers)
    dc_duration: float = Field(default=20e-6, gt=0)
    dc_noise: float = Field(default=2e-3, ge=0)  # V rms, oscilloscope readout noise

    # Balanced power sweep: total LO power
    sweep_powers: List[float] = Field(default_factory=_default_sweep_powers)
    linearity_rbw: float = Field(default=settings.linearity_rbw_hz, gt=0)
    linearity_vbw: float = Field(default=settings.linearity_vbw_hz, gt=0)
    saturation_imbalance: Optional[float] = Field(default=None, ge=0, le=1)
    saturation_target_power: float = Field(default=1.8e-3, gt=0)
    saturation_threshold: float = Field(default=settings.saturation_threshold, gt=0, lt=1)

    # Gain spectrum
    gain_power: float = Field(default=1e-3, ge=0)
    gain_rbw: float = Field(default=settings.gain_rbw_hz, gt=0)
    gain_vbw: float = Field(default=settings.gain_vbw_hz, gt=0)

    # CMRR at the repetition rate
    cmrr_power: float = Field(default=1e-4, ge=0)
    cmrr_imbalance: float = Field(default=0.002, ge=0, le=1)
    path_delay: float = 0.0

    # Analysis windows
    band_lo: float = settings.band_lo_hz
    band_hi: float = settings.band_hi_hz
    plateau_lo: float = settings.plateau_lo_hz
    plateau_hi: float = settings.plateau_hi_hz
    clearance_freq: float = settings.clearance_freq_hz
    smoothing_fwhm: float = settings.smoothing_fwhm_hz

    # Total efficiency recomputed with this coupling, when set
    prospective_coupling: Optional[float] = Field(default=None, gt=0, le=1)

    @field_validator("dc_powers", "sweep_powers")
    @classmethod
    def _nonnegative_sorted(cls, values: List[float]) -> List[float]:
        if any(v < 0 for v in values):
            raise ValueError("sweep powers must be nonnegative")
        if list(values) != sorted(values):
            raise ValueError("sweep powers must be sorted")
        return [float(v) for v in values]

    @model_validator(mode="after")
    def _bands_ordered(self):
        if not self.band_lo < self.band_hi:
            raise ValueError("band_lo must be below band_hi")
        if not self.plateau_lo < self.plateau_hi:
            raise ValueError("plateau_lo must be below plateau_hi")
        return self


Experiment = Literal["dc-sweep", "gain-spectrum", "power-sweep", "cmrr", "full-characterize"]


class ExperimentPlan(BaseModel):
    model_config = ConfigDict(frozen=True)

    preset_or_config: str
    experiment: Experiment
    sweep_points: List[float] = Field(default_factory=list)
    seed: int = Field(ge=0)
    output_dir: str

    @field_validator("sweep_points")
    @classmethod
    def _positive_sorted(cls, values: List[float]) -> List[float]:
        if any(v <= 0 for v in values):
            raise ValueError("sweep points must be positive")
        if list(values) != sorted(values):
            raise ValueError("sweep points must be sorted")
        return values


class DetectorSetup(BaseModel):
    """A detector, its local oscillator and experiment defaults, as loaded from a preset or file"""

    model_config = ConfigDict(frozen=True)

    name: str
    model: DetectorModel
    lo: LocalOscillator
    sweep: SweepConfig


class DCSweep(BaseModel):
    model_config = ConfigDict(frozen=True)

    arm: Literal["plus", "minus"]
    powers: List[float]
    volts: List[float]


class MeasurementSet(BaseModel):
    """Raw inputs of the characterization analysis, simulated or ingested"""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dc_plus: Optional[DCSweep] = None
    dc_minus: Optional[DCSweep] = None
    dark: Optional[Spectrum] = None
    gain_shot: Optional[Spectrum] = None
    gain_dark: Optional[Spectrum] = None
    sweep: List[Spectrum] = Field(default_factory=list)
    balanced_reprate: Optional[Spectrum] = None
    addition: Optional[Spectrum] = None

    def sweep_points(self) -> List[Tuple[float, Spectrum]]:
        return [(spec.power, spec) for spec in self.sweep]
