"""
Configuration settings for the homodyne detector twin
"""
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_file=".env", env_prefix="HOMODYNE_", extra="ignore")

    # Application
    log_level: str = "INFO"
    default_preset: str = "paper-2um"
    default_seed: int = 2021
    max_workers: int = 1  # sweep points run in a thread pool when > 1

    # Simulation grid
    sample_rate_hz: float = 1.0e9
    n_averages: int = 100

    # Spectrum analyser settings, linearity and clearance runs
    linearity_rbw_hz: float = 300e3
    linearity_vbw_hz: float = 10e3

    # Spectrum analyser settings, gain-spectrum runs
    gain_rbw_hz: float = 100e3
    gain_vbw_hz: float = 100.0

    # Analysis Parameters
    band_lo_hz: float = 1e6
    band_hi_hz: float = 13e6
    plateau_lo_hz: float = 1e6
    plateau_hi_hz: float = 3e6
    clearance_freq_hz: float = 5e6
    smoothing_fwhm_hz: float = 1.5e6
    saturation_threshold: float = 0.05  # relative deviation from the low-power linear prediction


settings = Settings()
