"""
Core characterization service: simulated acquisitions and figure-of-merit extraction
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Dict, Iterable, List, Optional

import numpy as np

from src.core import analysis, dsp
from src.core import detector_model as dm
from src.core.config import settings
from src.core.exceptions import DegenerateInput, DomainError, FitDiverged, InconsistentEfficiencies, NoCrossing
from src.core.signal_synth import imbalance_for_saturation, simulate_homodyne, stream
from src.models.detector import DetectorModel, LocalOscillator
from src.models.experiment import DCSweep, MeasurementSet, SweepConfig
from src.models.report import CharacterizationReport, ExclusionPolicy
from src.models.signals import Scenario, Spectrum, SynthConfig

logger = logging.getLogger(__name__)

EXPERIMENTS = ("dc-sweep", "gain-spectrum", "power-sweep", "cmrr")

# Sweep-point indices keying the random streams of each acquisition
_DARK, _GAIN_SHOT, _GAIN_DARK, _CMRR_BALANCED, _ADDITION = 1, 2, 3, 4, 5
_SWEEP_BASE = 100
_DC_BASE = {"plus": 1000, "minus": 2000}
_SCOPE_TAG = 16

# Analysis failures that leave a report field unavailable instead of aborting
_DEGENERATE = (DegenerateInput, FitDiverged, NoCrossing)


class _Findings:
    """Report fields collected step by step, with the unavailable ones and why"""

    def __init__(self):
        self.fields: Dict = {}
        self.unavailable: List[str] = []
        self.warnings: List[str] = []

    def missing(self, names: Iterable[str], reason: str) -> None:
        for name in names:
            if name not in self.unavailable:
                self.unavailable.append(name)
        self.warn(reason)

    def warn(self, message: str) -> None:
        logger.warning(message)
        self.warnings.append(message)


class CharacterizationService:
    """Runs the detector characterization: DC sweep, gain spectrum, power sweep, CMRR and clearance"""

    def __init__(self, max_workers: int = None):
        self.max_workers = max_workers or settings.max_workers

    def characterize(self, model: DetectorModel, lo: LocalOscillator, sweep: SweepConfig) -> CharacterizationReport:
        """Simulate every acquisition, then analyse it"""
        measurements = self.simulate_measurements(model, lo, sweep)
        return self.characterize_measurements(model, lo, measurements, sweep)

    # --- Acquisition ---------------------------------------------------------

    def simulate_measurements(
        self,
        model: DetectorModel,
        lo: LocalOscillator,
        sweep: SweepConfig,
        experiments: Iterable[str] = EXPERIMENTS,
    ) -> MeasurementSet:
        """
        Simulated raw data for the requested experiments
        """
        experiments = set(experiments)
        logger.info(f"Simulating {', '.join(sorted(experiments))} at seed {sweep.seed}")

        try:
            dm.check_pair(model, lo)
            measurements = MeasurementSet()

            # Step 1: DC efficiency sweeps, one arm blocked at a time
            if "dc-sweep" in experiments:
                measurements.dc_plus = self._simulate_dc_sweep(model, lo, sweep, "plus")
                measurements.dc_minus = self._simulate_dc_sweep(model, lo, sweep, "minus")

            # Step 2: Gain spectrum, shot and dark at the gain-run analyser settings
            if "gain-spectrum" in experiments:
                measurements.gain_shot = self._acquire(
                    model, lo, sweep, sweep.gain_power, Scenario(), sweep.gain_rbw, sweep.gain_vbw, _GAIN_SHOT
                )
                measurements.gain_dark = self._acquire(
                    model, lo, sweep, 0.0, Scenario(), sweep.gain_rbw, sweep.gain_vbw, _GAIN_DARK
                )

            # Step 3: Dark floor and balanced power sweep
            if "power-sweep" in experiments:
                measurements.dark = self._acquire(
                    model, lo, sweep, 0.0, Scenario(), sweep.linearity_rbw, sweep.linearity_vbw, _DARK
                )
                measurements.sweep = self._simulate_power_sweep(model, lo, sweep)

            # Step 4: Repetition-rate tone, balanced and in addition mode
            if "cmrr" in experiments:
                balanced = Scenario(arm_imbalance=sweep.cmrr_imbalance, path_delay=sweep.path_delay)
                measurements.balanced_reprate = self._acquire(
                    model,
                    lo,
                    sweep,
                    sweep.cmrr_power,
                    balanced,
                    sweep.linearity_rbw,
                    sweep.linearity_vbw,
                    _CMRR_BALANCED,
                )
                measurements.addition = self._acquire(
                    model,
                    lo,
                    sweep,
                    sweep.cmrr_power,
                    Scenario(kind="addition"),
                    sweep.linearity_rbw,
                    sweep.linearity_vbw,
                    _ADDITION,
                )
            return measurements

        except Exception as e:
            logger.error(f"Simulation failed: {str(e)}")
            raise

    def _synth_config(self, sweep: SweepConfig, n_samples: int) -> SynthConfig:
        return SynthConfig(
            sample_rate=sweep.sample_rate,
            duration=n_samples / sweep.sample_rate,
            seed=sweep.seed,
            delta_pulses=sweep.delta_pulses,
        )

    def _acquire(
        self,
        model: DetectorModel,
        lo: LocalOscillator,
        sweep: SweepConfig,
        power: float,
        scenario: Scenario,
        rbw: float,
        vbw: float,
        index: int,
    ) -> Spectrum:
        """One spectrum-analyser acquisition of the AC output"""
        cfg = self._synth_config(sweep, dsp.required_samples(sweep.sample_rate, rbw, sweep.n_averages))
        run = simulate_homodyne(model, lo.with_power(power), scenario, cfg, index)
        return dsp.estimate_psd(run.ac, rbw, vbw, sweep.n_averages, power=power)

    def _simulate_dc_sweep(self, model: DetectorModel, lo: LocalOscillator, sweep: SweepConfig, arm: str) -> DCSweep:
        """Bias-tee DC level against power on one arm, read with oscilloscope noise"""
        # Even split: each arm sees half of the LO, so the LO carries twice the arm power
        scenario = Scenario(kind="blocked_minus" if arm == "plus" else "blocked_plus", balance_dc=False)
        cfg = SynthConfig(
            sample_rate=sweep.sample_rate,
            duration=sweep.dc_duration,
            seed=sweep.seed,
            delta_pulses=sweep.delta_pulses,
        )

        volts = []
        for i, power in enumerate(sweep.dc_powers):
            index = _DC_BASE[arm] + i
            run = simulate_homodyne(model, lo.with_power(2.0 * power), scenario, cfg, index)
            readout = sweep.dc_noise * stream(sweep.seed, index, _SCOPE_TAG).standard_normal()
            volts.append(run.dc_value + readout)
        logger.info(f"DC sweep on PD{'+' if arm == 'plus' else '-'}: {len(volts)} points")
        return DCSweep(arm=arm, powers=list(sweep.dc_powers), volts=volts)

    def _simulate_power_sweep(self, model: DetectorModel, lo: LocalOscillator, sweep: SweepConfig) -> List[Spectrum]:
        imbalance = sweep.saturation_imbalance
        if imbalance is None:
            cfg = self._synth_config(sweep, 2)
            imbalance = imbalance_for_saturation(
                model, lo, cfg, sweep.saturation_target_power, sweep.saturation_threshold, sweep.path_delay
            )
        scenario = Scenario(arm_imbalance=imbalance, path_delay=sweep.path_delay)

        def acquire(point):
            i, power = point
            return self._acquire(
                model, lo, sweep, power, scenario, sweep.linearity_rbw, sweep.linearity_vbw, _SWEEP_BASE + i
            )

        points = list(enumerate(sweep.sweep_powers))
        if self.max_workers > 1:
            with ThreadPoolExecutor(max_workers=self.max_workers) as pool:
                spectra = list(pool.map(acquire, points))
        else:
            spectra = [acquire(point) for point in points]
        logger.info(f"Power sweep: {len(spectra)} points, rep-rate imbalance {imbalance:.4g}")
        return spectra

    # --- Analysis ------------------------------------------------------------

    def characterize_measurements(
        self,
        model: DetectorModel,
        lo: LocalOscillator,
        measurements: MeasurementSet,
        sweep: SweepConfig,
    ) -> CharacterizationReport:
        """
        Extract every figure of merit the measurements support; missing inputs
        leave their fields unavailable with a warning
        """
        logger.info("Starting characterization analysis")
        findings = _Findings()

        try:
            # Step 1: Efficiencies from the DC sweeps
            self._efficiencies(model, lo, measurements, findings)

            # Step 2: Gain spectrum fit and bandwidth
            self._bandwidth(lo, measurements, sweep, findings)

            # Step 3: Electronic floor
            self._electronic_noise(model, measurements, sweep, findings)

            # Step 4: Linearity and saturation
            self._linearity(measurements, sweep, findings)

            # Step 5: Common-mode rejection
            self._cmrr(lo, measurements, findings)

            # Step 6: Clearance and efficiency budget
            self._clearance(measurements, sweep, findings)

            eta_qe = 0.5 * (model.pd_plus.quantum_efficiency + model.pd_minus.quantum_efficiency)
            self._efficiency_budget(eta_qe, sweep, findings)

            closed_form, closed_form_bandwidth = self._closed_form(model)
            snep = findings.fields.pop("snep", None)
            report = CharacterizationReport(
                eta_qe=eta_qe,
                clearance_freq=sweep.clearance_freq,
                snep=dm.snep(model) if snep is None else snep,
                closed_form=closed_form,
                closed_form_bandwidth=closed_form_bandwidth,
                conventions=self._conventions(),
                unavailable=findings.unavailable,
                warnings=findings.warnings,
                seed=sweep.seed,
                **findings.fields,
            )
            logger.info(f"Characterization complete; {len(report.unavailable)} fields unavailable")
            return report

        except Exception as e:
            logger.error(f"Characterization failed: {str(e)}")
            raise

    def _efficiencies(
        self, model: DetectorModel, lo: LocalOscillator, measurements: MeasurementSet, findings: _Findings
    ) -> None:
        couplings = []
        for arm, data, pd in (
            ("plus", measurements.dc_plus, model.pd_plus),
            ("minus", measurements.dc_minus, model.pd_minus),
        ):
            names = (f"eta_total_{arm}", f"eta_coup_{arm}")
            if data is None:
                findings.missing(names, f"no DC sweep for the {arm} photodiode")
                continue
            try:
                estimate = analysis.fit_dc_efficiency(data.powers, data.volts, model, lo.wavelength)
            except DegenerateInput as e:
                findings.missing(names, f"DC sweep on the {arm} photodiode is degenerate: {e}")
                continue
            try:
                coupling = analysis.decouple_coupling(estimate.value, pd.quantum_efficiency)
            except InconsistentEfficiencies as e:
                if estimate.value <= 1.0:
                    findings.fields[f"eta_total_{arm}"] = estimate
                    findings.missing([f"eta_coup_{arm}"], f"{arm} photodiode: {e}")
                else:
                    findings.missing(names, f"{arm} photodiode: {e}")
                continue
            findings.fields[f"eta_total_{arm}"] = estimate
            findings.fields[f"eta_coup_{arm}"] = coupling
            couplings.append(coupling)
            logger.info(f"eta_total {arm}: {estimate.value:.4f} +- {estimate.stderr:.4f}, eta_coup {coupling:.4f}")

        if couplings:
            findings.fields["eta_coup"] = float(np.mean(couplings))
        else:
            findings.missing(["eta_coup"], "coupling efficiency unavailable without a consistent DC sweep")

    def _bandwidth(
        self, lo: LocalOscillator, measurements: MeasurementSet, sweep: SweepConfig, findings: _Findings
    ) -> None:
        names = ("butterworth", "bandwidth_3db", "bandwidth_3db_from_peak")
        shot, dark = measurements.gain_shot, measurements.gain_dark
        if shot is None or dark is None:
            findings.missing(names, "gain spectrum needs both a shot and a dark acquisition")
            return
        if shot.power <= 0:
            findings.missing(names, "gain spectrum acquired without LO power")
            return

        try:
            corrected = analysis.corrected_gain(shot, dark, (sweep.plateau_lo, sweep.plateau_hi))
            fit = analysis.fit_butterworth(corrected, f_lo=sweep.plateau_lo)
            bandwidth = analysis.bandwidth_3db(fit)
            from_peak = analysis.bandwidth_3db_from_peak(fit)
        except _DEGENERATE as e:
            findings.missing(names, f"gain spectrum fit unavailable: {e}")
            return

        findings.fields.update(butterworth=fit, bandwidth_3db=bandwidth, bandwidth_3db_from_peak=from_peak)
        logger.info(
            f"Butterworth fit p={fit.shape.p:.3f}, f_star={fit.shape.f_star / 1e6:.2f} MHz, "
            f"R^2={fit.r_squared:.3f}; -3 dB at {bandwidth / 1e6:.2f} MHz"
        )
        if bandwidth < lo.repetition_rate / 2.0:
            findings.warn(
                f"bandwidth {bandwidth / 1e6:.2f} MHz is below half the {lo.repetition_rate / 1e6:.1f} MHz "
                "repetition rate; adjacent pulses overlap in the output"
            )

    def _electronic_noise(
        self, model: DetectorModel, measurements: MeasurementSet, sweep: SweepConfig, findings: _Findings
    ) -> None:
        dark = measurements.dark or measurements.gain_dark
        if dark is None:
            findings.missing(["electronic_noise_density"], "missing dark run; electronic floor unavailable")
            return
        density = analysis.electronic_current_noise_density(dark, model, (sweep.band_lo, sweep.band_hi))
        findings.fields["electronic_noise_density"] = density
        findings.fields["snep"] = dm.snep(model, density)
        logger.info(f"Electronic noise {density * 1e12:.3f} pA/rtHz")

    def _linearity(self, measurements: MeasurementSet, sweep: SweepConfig, findings: _Findings) -> None:
        names = ("linearity", "saturation_onset")
        if measurements.dark is None or not measurements.sweep:
            findings.missing(names, "linearity needs a dark run and a power sweep")
            return

        powers = [spec.power for spec in measurements.sweep]
        variances = analysis.noise_variances(measurements.sweep, measurements.dark, (sweep.band_lo, sweep.band_hi))
        policy = ExclusionPolicy(threshold=sweep.saturation_threshold)
        try:
            fit = analysis.fit_linearity(powers, variances, policy)
        except DegenerateInput as e:
            findings.missing(names, f"linearity fit unavailable: {e}")
            return

        onset = analysis.saturation_from_fit(powers, fit)
        findings.fields["linearity"] = fit
        findings.fields["saturation_onset"] = None if np.isinf(onset) else onset
        if not fit.shot_noise_limited:
            findings.warn(f"noise variance is not linear in LO power (R^2={fit.r_squared:.3f}); not shot-noise limited")
        logger.info(f"Linearity R^2={fit.r_squared:.4f}, {len(fit.excluded_points)} points excluded")

    def _cmrr(self, lo: LocalOscillator, measurements: MeasurementSet, findings: _Findings) -> None:
        names = ("cmrr_raw_db", "cmrr_db")
        balanced, addition = measurements.balanced_reprate, measurements.addition
        if balanced is None or addition is None:
            findings.missing(names, "CMRR needs balanced and addition acquisitions")
            return
        if balanced.power <= 0 or addition.power <= 0:
            findings.missing(names, "CMRR acquisitions carry no LO power")
            return

        raw = analysis.cmrr_raw(balanced, addition, lo.repetition_rate)
        findings.fields["cmrr_raw_db"] = raw
        findings.fields["cmrr_db"] = analysis.correct_addition(raw)
        if abs(raw) < 1e-9:
            findings.warn("balanced and addition spectra are identical at the repetition rate")
        logger.info(f"CMRR {findings.fields['cmrr_db']:.2f} dB (raw {raw:.2f} dB)")

    def _clearance_spectrum(self, measurements: MeasurementSet, findings: _Findings) -> Optional[Spectrum]:
        # Highest-power point still inside the linear regime
        linearity = findings.fields.get("linearity")
        candidates = [
            (spec.power, i, spec)
            for i, spec in enumerate(measurements.sweep)
            if spec.power > 0 and (linearity is None or i in linearity.fitted_points)
        ]
        if not candidates:
            return None
        return max(candidates, key=lambda c: (c[0], c[1]))[2]

    def _clearance(self, measurements: MeasurementSet, sweep: SweepConfig, findings: _Findings) -> None:
        names = ("clearance_db", "clearance_power", "eta_snr")
        if measurements.dark is None:
            findings.missing(names, "missing dark run; clearance unavailable")
            return
        shot = self._clearance_spectrum(measurements, findings)
        if shot is None:
            findings.missing(names, "no illuminated sweep point for the clearance")
            return

        smoothed_shot = dsp.gaussian_smooth(shot, sweep.smoothing_fwhm)
        smoothed_dark = dsp.gaussian_smooth(measurements.dark, sweep.smoothing_fwhm)
        clearance = analysis.clearance(smoothed_shot, smoothed_dark, sweep.clearance_freq)
        findings.fields["clearance_db"] = clearance
        findings.fields["clearance_power"] = shot.power
        logger.info(f"Clearance {clearance:.2f} dB at {sweep.clearance_freq / 1e6:.1f} MHz, {shot.power * 1e3:.2f} mW")

        try:
            findings.fields["eta_snr"] = analysis.eta_snr(clearance)
        except DomainError as e:
            findings.missing(["eta_snr"], f"no shot-noise clearance: {e}")

    def _efficiency_budget(self, eta_qe: float, sweep: SweepConfig, findings: _Findings) -> None:
        eta_snr = findings.fields.get("eta_snr")
        eta_coup = findings.fields.get("eta_coup")
        if eta_snr is None or eta_coup is None:
            findings.missing(["eta_tot"], "total efficiency needs eta_snr and eta_coup")
            return
        findings.fields["eta_tot"] = analysis.total_efficiency(eta_snr, eta_coup, eta_qe)
        if sweep.prospective_coupling is not None:
            findings.fields["prospective_coupling"] = sweep.prospective_coupling
            findings.fields["eta_tot_prospective"] = analysis.total_efficiency(
                eta_snr, sweep.prospective_coupling, eta_qe
            )

    def _closed_form(self, model: DetectorModel):
        shapes = dict(dm.butterworth_conventions(model))
        if model.measured_response is not None:
            shapes["measured"] = model.measured_response

        bandwidths = {}
        for name, shape in shapes.items():
            try:
                bandwidths[name] = dm.half_power_crossing(shape)
            except NoCrossing:
                continue
        if model.measured_response is not None:
            bandwidths["measured_from_peak"] = dm.half_power_crossing(model.measured_response, relative_to_peak=True)
        return shapes, bandwidths

    def _conventions(self) -> Dict[str, str]:
        return {
            "psd": dm.PSD_CONVENTION,
            "db": dm.DB_CONVENTION,
            "f_star": dm.FSTAR_CONVENTION,
            "f_star_alt": dm.FSTAR_ALT_CONVENTION,
            "snep": dm.SNEP_DEFINITION,
            "uncertainty": "ordinary least-squares standard error of the slope",
            "cmrr": "addition minus balanced at the repetition rate, less 6.02 dB",
            "clearance": "Gaussian-smoothed total over dark spectrum at clearance_freq",
        }
