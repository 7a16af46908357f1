"""
Plot-data emission: one whitespace-separated column file per characterization figure
"""
import logging
from pathlib import Path
from typing import Dict, List

import numpy as np
from scipy import stats

from src.core import analysis, dsp
from src.core.detector_model import gain_spectrum
from src.core.exceptions import DegenerateInput, DomainError
from src.data.file_formats import write_columns
from src.models.experiment import MeasurementSet, SweepConfig
from src.models.report import CharacterizationReport

logger = logging.getLogger(__name__)

DC_RESPONSE = "fig_dc_response.txt"
GAIN_SPECTRUM = "fig_gain_spectrum.txt"
NOISE_SPECTRA = "fig_noise_spectra.txt"
NOISE_VARIANCE = "fig_noise_variance.txt"


class PlotDataWriter:
    """Writes the column data behind each figure of a characterization"""

    def __init__(self, measurements: MeasurementSet, report: CharacterizationReport, sweep: SweepConfig):
        self.measurements = measurements
        self.report = report
        self.sweep = sweep

    def write_all(self, directory: Path) -> List[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, builder in (
            (DC_RESPONSE, self._dc_response),
            (GAIN_SPECTRUM, self._gain_spectrum),
            (NOISE_SPECTRA, self._noise_spectra),
            (NOISE_VARIANCE, self._noise_variance),
        ):
            content = builder()
            if content is None:
                logger.info(f"Skipping {name}: inputs unavailable")
                continue
            header, columns = content
            write_columns(directory / name, header, columns)
            written.append(directory / name)
        return written

    def _dc_response(self):
        """DC level against arm power with the regression line, both arms"""
        columns: Dict[str, np.ndarray] = {}
        for sweep in (self.measurements.dc_plus, self.measurements.dc_minus):
            if sweep is None or len(sweep.powers) < 2 or np.ptp(sweep.powers) == 0:
                continue
            powers, volts = np.asarray(sweep.powers), np.asarray(sweep.volts)
            fit = stats.linregress(powers, volts)
            columns[f"power_{sweep.arm}_w"] = powers
            columns[f"volts_{sweep.arm}"] = volts
            columns[f"fit_{sweep.arm}"] = fit.slope * powers + fit.intercept
        if not columns or len({len(c) for c in columns.values()}) != 1:
            return None
        return {"figure": "dc_response"}, columns

    def _gain_spectrum(self):
        """Electronic-noise-corrected gain and the Butterworth fit"""
        shot, dark, fit = self.measurements.gain_shot, self.measurements.gain_dark, self.report.butterworth
        if shot is None or dark is None or fit is None:
            return None
        try:
            corrected = analysis.corrected_gain(shot, dark, (self.sweep.plateau_lo, self.sweep.plateau_hi))
        except DegenerateInput:
            return None
        header = {"figure": "gain_spectrum", "p": repr(fit.shape.p), "f_star_hz": repr(fit.shape.f_star)}
        columns = {
            "freq_hz": corrected.freqs,
            "gain": corrected.psd,
            "fit": fit.scale * gain_spectrum(fit.shape, corrected.freqs),
        }
        return header, columns

    def _noise_spectra(self):
        """Gaussian-smoothed output spectra of the power sweep and the dark floor"""
        dark = self.measurements.dark
        if dark is None or not self.measurements.sweep:
            return None
        fwhm = self.sweep.smoothing_fwhm
        try:
            columns = {"freq_hz": dark.freqs, "dark": dsp.gaussian_smooth(dark, fwhm).psd}
            for index, spec in enumerate(self.measurements.sweep):
                if spec.freqs.size != dark.freqs.size:
                    logger.warning(f"Sweep spectrum {index} is on a different grid than the dark spectrum")
                    continue
                columns[f"p{index:02d}_{spec.power * 1e6:.0f}uw"] = dsp.gaussian_smooth(spec, fwhm).psd
        except DomainError:
            return None
        return {"figure": "noise_spectra", "fwhm_hz": repr(self.sweep.smoothing_fwhm)}, columns

    def _noise_variance(self):
        """Band-averaged noise variance against LO power, with the linear fit"""
        dark, fit = self.measurements.dark, self.report.linearity
        if dark is None or fit is None:
            return None
        powers = np.array([spec.power for spec in self.measurements.sweep])
        variances = analysis.noise_variances(self.measurements.sweep, dark, (self.sweep.band_lo, self.sweep.band_hi))
        fitted = np.zeros(powers.size)
        fitted[fit.fitted_points] = 1.0
        header = {
            "figure": "noise_variance",
            "band_hz": f"{self.sweep.band_lo!r}, {self.sweep.band_hi!r}",
            "r_squared": repr(fit.r_squared),
        }
        columns = {
            "power_w": powers,
            "variance_v2_per_hz": np.asarray(variances),
            "fit": fit.slope * powers + fit.intercept,
            "fitted": fitted,
        }
        return header, columns
