import math

import numpy as np
import pytest

from src.core import analysis
from src.core.characterization_service import CharacterizationService
from src.core.exceptions import ConfigError
from src.data import file_formats
from src.models.experiment import DCSweep
from src.models.report import NEGATIVE_CMRR_WARNING
from tests.conftest import sweep_with

CMRR_ORACLE_DB = 20 * math.log10(1 / 0.002) - 10 * math.log10(4)


@pytest.fixture(scope="module")
def preset_run(paper_setup):
    """Full characterization at the default settings: 100 averages, 12 sweep points"""
    service = CharacterizationService()
    measurements = service.simulate_measurements(paper_setup.model, paper_setup.lo, paper_setup.sweep)
    report = service.characterize_measurements(paper_setup.model, paper_setup.lo, measurements, paper_setup.sweep)
    return measurements, report


# --- Acquisition -------------------------------------------------------------


def test_simulation_is_deterministic(paper_model, paper_lo, fast_sweep):
    service = CharacterizationService()
    a = service.simulate_measurements(paper_model, paper_lo, fast_sweep, experiments=("dc-sweep", "cmrr"))
    b = service.simulate_measurements(paper_model, paper_lo, fast_sweep, experiments=("dc-sweep", "cmrr"))
    assert a.dc_plus == b.dc_plus
    np.testing.assert_array_equal(a.addition.psd, b.addition.psd)

    reseeded = sweep_with(fast_sweep, seed=fast_sweep.seed + 1)
    c = service.simulate_measurements(paper_model, paper_lo, reseeded, experiments=("dc-sweep",))
    assert c.dc_plus.volts != a.dc_plus.volts


def test_parallel_sweep_matches_serial(paper_model, paper_lo, fast_sweep):
    serial = CharacterizationService(max_workers=1)
    parallel = CharacterizationService(max_workers=3)
    a = serial.simulate_measurements(paper_model, paper_lo, fast_sweep, experiments=("power-sweep",))
    b = parallel.simulate_measurements(paper_model, paper_lo, fast_sweep, experiments=("power-sweep",))
    for x, y in zip(a.sweep, b.sweep):
        np.testing.assert_array_equal(x.psd, y.psd)


def test_requested_experiments_only(paper_model, paper_lo, fast_sweep):
    measurements = CharacterizationService().simulate_measurements(
        paper_model, paper_lo, fast_sweep, experiments=("gain-spectrum",)
    )
    assert measurements.gain_shot is not None and measurements.gain_dark is not None
    assert measurements.dc_plus is None and measurements.dark is None and measurements.sweep == []


def test_dc_sweep_layout(paper_model, paper_lo, fast_sweep):
    measurements = CharacterizationService().simulate_measurements(
        paper_model, paper_lo, fast_sweep, experiments=("dc-sweep",)
    )
    assert measurements.dc_plus.powers == fast_sweep.dc_powers
    assert np.all(np.diff(measurements.dc_plus.volts) > 0)
    assert np.all(np.diff(measurements.dc_minus.volts) < 0)


def test_incompatible_pair_is_rejected(paper_model, paper_lo, fast_sweep):
    hot = paper_model.pd_plus.model_copy(update={"responsivity": 1.9})
    with pytest.raises(ConfigError):
        CharacterizationService().simulate_measurements(
            paper_model.model_copy(update={"pd_plus": hot}), paper_lo, fast_sweep
        )


# --- Analysis ----------------------------------------------------------------


def test_fast_run_report(fast_run, fast_sweep):
    _, report = fast_run
    assert report.unavailable == []
    assert report.seed == 2021
    assert report.eta_qe == pytest.approx(0.865)
    assert set(report.closed_form) == {"angular", "hertz", "measured"}
    assert report.closed_form_bandwidth["measured"] == pytest.approx(73.2e6, rel=2e-3)
    assert report.closed_form_bandwidth["measured_from_peak"] == pytest.approx(69.6e6, rel=2e-3)
    assert {"psd", "db", "f_star", "f_star_alt", "snep"} <= set(report.conventions)
    assert report.clearance_power == max(fast_sweep.sweep_powers[i] for i in report.linearity.fitted_points)
    assert 0 < report.eta_tot < report.eta_tot_prospective <= 1
    assert report.prospective_coupling == 0.96


def test_zero_power_sweep_reports_only_the_floor(paper_model, paper_lo, fast_sweep):
    dark_only = sweep_with(
        fast_sweep,
        dc_powers=[0.0, 0.0, 0.0],
        sweep_powers=[0.0] * 5,
        gain_power=0.0,
        cmrr_power=0.0,
    )
    report = CharacterizationService().characterize(paper_model, paper_lo, dark_only)
    for name in (
        "eta_total_plus",
        "eta_total_minus",
        "eta_coup",
        "butterworth",
        "bandwidth_3db",
        "linearity",
        "cmrr_db",
        "clearance_db",
        "eta_snr",
        "eta_tot",
    ):
        assert getattr(report, name) is None
        assert name in report.unavailable
    assert report.warnings
    assert report.electronic_noise_density == pytest.approx(2.79e-12, rel=0.05)
    assert report.snep > 0


def test_missing_dark_run_leaves_clearance_unavailable(fast_run, paper_model, paper_lo, fast_sweep):
    measurements, _ = fast_run
    partial = measurements.model_copy(update={"dark": None})
    report = CharacterizationService().characterize_measurements(paper_model, paper_lo, partial, fast_sweep)
    assert report.clearance_db is None
    assert {"clearance_db", "eta_snr", "eta_tot", "linearity"} <= set(report.unavailable)
    assert any("dark" in warning for warning in report.warnings)
    # The gain-run dark spectrum still provides the electronic floor
    assert report.electronic_noise_density is not None
    assert report.eta_total_plus is not None


def test_identical_cmrr_spectra_are_flagged(fast_run, paper_model, paper_lo, fast_sweep):
    measurements, _ = fast_run
    mirrored = measurements.model_copy(update={"addition": measurements.balanced_reprate})
    report = CharacterizationService().characterize_measurements(paper_model, paper_lo, mirrored, fast_sweep)
    assert report.cmrr_raw_db == pytest.approx(0.0, abs=1e-9)
    assert report.cmrr_db == pytest.approx(-6.02, abs=0.01)
    assert report.cmrr_degraded
    assert any(warning.startswith(NEGATIVE_CMRR_WARNING) for warning in report.warnings)


def _steeper_dc_plus(measurements, model, lo, eta_total):
    """The PD+ sweep rescaled about the offset so that it reads `eta_total`"""
    dc = measurements.dc_plus
    fitted = analysis.fit_dc_efficiency(dc.powers, dc.volts, model, lo.wavelength).value
    k = eta_total / fitted
    volts = [model.v_offset + k * (v - model.v_offset) for v in dc.volts]
    return measurements.model_copy(update={"dc_plus": DCSweep(arm="plus", powers=dc.powers, volts=volts)})


def test_ingested_sweep_above_quantum_efficiency_leaves_coupling_unavailable(
    tmp_path, fast_run, paper_model, paper_lo, fast_sweep
):
    measurements, _ = fast_run
    file_formats.write_measurements(_steeper_dc_plus(measurements, paper_model, paper_lo, 0.93), tmp_path)
    ingested = file_formats.read_measurements(tmp_path, impedance=paper_model.sa_impedance)

    report = CharacterizationService().characterize_measurements(paper_model, paper_lo, ingested, fast_sweep)
    assert report.eta_total_plus.value == pytest.approx(0.93, abs=1e-6)
    assert report.eta_coup_plus is None
    assert "eta_coup_plus" in report.unavailable
    assert any("exceeds quantum efficiency" in warning for warning in report.warnings)
    # The other arm still carries the coupling and the budget
    assert report.eta_coup == report.eta_coup_minus
    assert report.eta_tot is not None


def test_unphysical_sweep_drops_both_arm_fields(fast_run, paper_model, paper_lo, fast_sweep):
    measurements, _ = fast_run
    both = _steeper_dc_plus(measurements, paper_model, paper_lo, 1.2)
    minus = both.dc_minus
    volts = [paper_model.v_offset + 1.4 * (v - paper_model.v_offset) for v in minus.volts]
    both = both.model_copy(update={"dc_minus": DCSweep(arm="minus", powers=minus.powers, volts=volts)})

    report = CharacterizationService().characterize_measurements(paper_model, paper_lo, both, fast_sweep)
    # Above unity the total efficiency itself is dropped; between eta_QE and 1 only the coupling
    assert report.eta_total_plus is None
    assert 0.865 < report.eta_total_minus.value <= 1.0
    assert report.eta_coup_minus is None
    assert report.eta_coup is None and report.eta_tot is None
    assert {"eta_total_plus", "eta_coup_plus", "eta_coup_minus", "eta_coup", "eta_tot"} <= set(report.unavailable)


# --- Acceptance at the paper-2um defaults --------------------------------------


def test_preset_efficiencies(preset_run):
    _, report = preset_run
    assert report.eta_total_plus.value == pytest.approx(0.653, abs=0.02)
    assert report.eta_total_minus.value == pytest.approx(0.66, abs=0.025)
    assert report.eta_coup == pytest.approx(0.755, abs=0.02)


def test_preset_linearity_and_saturation(preset_run):
    _, report = preset_run
    assert report.linearity.r_squared >= 0.99
    assert len(report.linearity.fitted_points) >= 7
    assert report.saturation_onset == pytest.approx(1.8e-3, rel=0.2)


def test_preset_cmrr_matches_imbalance(preset_run):
    _, report = preset_run
    assert report.cmrr_raw_db - report.cmrr_db == pytest.approx(6.02, abs=0.01)
    assert report.cmrr_db == pytest.approx(CMRR_ORACLE_DB, abs=1.0)


def test_preset_electronic_noise_round_trip(preset_run):
    _, report = preset_run
    assert report.electronic_noise_density == pytest.approx(2.79e-12, rel=0.03)
    assert report.snep == pytest.approx(22.2e-6, rel=0.07)


def test_preset_gain_spectrum_fit(preset_run):
    _, report = preset_run
    assert report.butterworth.shape.p == pytest.approx(1.12, abs=0.05)
    assert report.butterworth.shape.f_star == pytest.approx(61e6, rel=0.05)
    assert report.bandwidth_3db == pytest.approx(73.2e6, rel=0.05)
    assert report.bandwidth_3db_from_peak <= report.bandwidth_3db


def test_preset_efficiency_budget(preset_run):
    _, report = preset_run
    assert report.clearance_db > 0
    assert report.eta_snr == pytest.approx(1 - 10 ** (-report.clearance_db / 10))
    assert report.eta_tot == pytest.approx(report.eta_snr * report.eta_coup * report.eta_qe)
    assert report.eta_tot_prospective == pytest.approx(report.eta_snr * 0.96 * report.eta_qe)
