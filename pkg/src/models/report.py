"""
Fit results and the characterization report
"""
from typing import Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, model_validator

from src.models.detector import ButterworthShape

NEGATIVE_CMRR_WARNING = "cmrr_db < 0: rejection is worse than a single unbalanced photodiode"


class LinearFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    slope: float
    intercept: float
    r_squared: float = Field(ge=0, le=1)
    slope_stderr: float = Field(ge=0)
    intercept_stderr: float = Field(default=0.0, ge=0)
    fitted_points: List[int] = Field(default_factory=list)
    excluded_points: List[int] = Field(default_factory=list)
    shot_noise_limited: bool = True

    @model_validator(mode="after")
    def _disjoint(self):
        if set(self.fitted_points) & set(self.excluded_points):
            raise ValueError("excluded points overlap the fitted set")
        return self


class ExclusionPolicy(BaseModel):
    """How fit_linearity grows its fitted set before calling the remaining points saturated"""

    model_config = ConfigDict(frozen=True)

    threshold: float = Field(default=0.05, gt=0, lt=1)  # relative deviation from the running prediction
    seed_fraction: float = Field(default=0.5, gt=0, le=1)  # lowest-power share fitted first


class ButterworthFit(BaseModel):
    model_config = ConfigDict(frozen=True)

    shape: ButterworthShape
    scale: float
    r_squared: float = Field(ge=0, le=1)
    residuals: List[float] = Field(default_factory=list)


class Estimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    value: float
    stderr: float = Field(default=0.0, ge=0)


class CharacterizationReport(BaseModel):
    """Every figure of merit extracted from one characterization run"""

    eta_total_plus: Optional[Estimate] = None
    eta_total_minus: Optional[Estimate] = None
    eta_coup_plus: Optional[float] = None
    eta_coup_minus: Optional[float] = None
    eta_coup: Optional[float] = None
    eta_qe: float
    bandwidth_3db: Optional[float] = None
    bandwidth_3db_from_peak: Optional[float] = None
    butterworth: Optional[ButterworthFit] = None
    linearity: Optional[LinearFit] = None
    saturation_onset: Optional[float] = None  # W; None when no point saturates
    cmrr_raw_db: Optional[float] = None
    cmrr_db: Optional[float] = None
    clearance_db: Optional[float] = None
    clearance_freq: float
    clearance_power: Optional[float] = None
    eta_snr: Optional[float] = None
    eta_tot: Optional[float] = None
    prospective_coupling: Optional[float] = None
    eta_tot_prospective: Optional[float] = None
    snep: float
    electronic_noise_density: Optional[float] = None

    # Closed-form response under both omega_star readings, for the record
    closed_form: Dict[str, ButterworthShape] = Field(default_factory=dict)
    closed_form_bandwidth: Dict[str, float] = Field(default_factory=dict)

    conventions: Dict[str, str] = Field(default_factory=dict)
    unavailable: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _fractions_in_range(self):
        for name in (
            "eta_coup_plus",
            "eta_coup_minus",
            "eta_coup",
            "eta_qe",
            "eta_snr",
            "eta_tot",
            "prospective_coupling",
            "eta_tot_prospective",
        ):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value <= 1.0:
                raise ValueError(f"{name}={value} outside [0, 1]")
        for name in ("eta_total_plus", "eta_total_minus"):
            value = getattr(self, name)
            if value is not None and not 0.0 <= value.value <= 1.0:
                raise ValueError(f"{name}={value.value} outside [0, 1]")
        return self

    @model_validator(mode="after")
    def _flag_negative_cmrr(self):
        if self.cmrr_db is not None and self.cmrr_db < 0:
            message = f"{NEGATIVE_CMRR_WARNING}: {self.cmrr_db:.2f} dB"
            if not any(warning.startswith(NEGATIVE_CMRR_WARNING) for warning in self.warnings):
                self.warnings.append(message)
        return self

    @property
    def cmrr_degraded(self) -> bool:
        """Balanced tone above the single-diode reference"""
        return self.cmrr_db is not None and self.cmrr_db < 0
