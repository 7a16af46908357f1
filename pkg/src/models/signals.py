"""
Signal data models: sampled traces, spectra and synthesis settings
"""
from typing import Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class TimeTrace(BaseModel):
    """Uniformly sampled real signal"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    samples: np.ndarray
    dt: float = Field(gt=0)  # s
    units: Literal["amps", "volts", "watts"]
    seed: int = Field(default=0, ge=0)

    @field_validator("samples", mode="before")
    @classmethod
    def _as_array(cls, value):
        samples = np.asarray(value, dtype=float)
        if samples.ndim != 1 or samples.size == 0:
            raise ValueError("samples must be a nonempty 1-D sequence")
        samples.setflags(write=False)
        return samples

    @property
    def sample_rate(self) -> float:
        return 1.0 / self.dt

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.samples.size) * self.dt

    def mean(self) -> float:
        return float(np.mean(self.samples))

    def derive(self, samples: np.ndarray, units: str = None) -> "TimeTrace":
        """New trace on the same time grid"""
        return TimeTrace(samples=samples, dt=self.dt, units=units or self.units, seed=self.seed)


class Scenario(BaseModel):
    model_config = ConfigDict(frozen=True)

    kind: Literal["balanced", "blocked_plus", "blocked_minus", "addition"] = "balanced"
    arm_imbalance: float = Field(default=0.0, ge=0, le=1)  # residual common-mode (AC) amplitude
    path_delay: float = 0.0  # s, delay of the PD- arm
    # Split tuned so both arms carry the same mean photocurrent
    balance_dc: bool = True


class SynthConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    sample_rate: float = Field(gt=0)  # Hz
    duration: float = Field(gt=0)  # s
    seed: int = Field(default=0, ge=0)
    delta_pulses: bool = False
    max_samples: int = 50_000_000

    @model_validator(mode="after")
    def _fits_budget(self):
        if self.n_samples > self.max_samples:
            raise ValueError(f"duration x sample_rate = {self.n_samples} exceeds max_samples")
        if self.n_samples < 2:
            raise ValueError("duration too short for the sample rate")
        return self

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    @property
    def dt(self) -> float:
        return 1.0 / self.sample_rate


SpectrumUnits = Literal["v2_per_hz", "dbm_in_rbw"]


class Spectrum(BaseModel):
    """Single-sided spectrum with spectrum-analyser acquisition metadata"""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    freqs: np.ndarray  # Hz
    psd: np.ndarray
    rbw: float = Field(gt=0)
    vbw: float = Field(gt=0)
    n_averages: int = Field(default=1, ge=1)
    units: SpectrumUnits = "v2_per_hz"
    power: float = 0.0  # LO power the spectrum was acquired at, W

    @field_validator("freqs", "psd", mode="before")
    @classmethod
    def _as_array(cls, value):
        values = np.asarray(value, dtype=float)
        if values.ndim != 1:
            raise ValueError("spectrum columns must be 1-D")
        values.setflags(write=False)
        return values

    @model_validator(mode="after")
    def _check_grid(self):
        if self.freqs.size != self.psd.size:
            raise ValueError("freqs and psd must have equal length")
        if self.freqs.size == 0:
            raise ValueError("spectrum is empty")
        if np.any(np.diff(self.freqs) <= 0):
            raise ValueError("freqs must be strictly increasing")
        return self

    @property
    def bin_width(self) -> float:
        if self.freqs.size < 2:
            return self.rbw
        return float(np.median(np.diff(self.freqs)))

    def with_psd(self, psd: np.ndarray, **updates) -> "Spectrum":
        fields = {
            "freqs": self.freqs,
            "psd": psd,
            "rbw": self.rbw,
            "vbw": self.vbw,
            "n_averages": self.n_averages,
            "units": self.units,
            "power": self.power,
        }
        fields.update(updates)
        return Spectrum(**fields)
