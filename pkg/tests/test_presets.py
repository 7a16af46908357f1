import pytest

from src.core.exceptions import ConfigError
from src.data import presets


def test_config_text_reproduces_the_preset(tmp_path):
    setup = presets.paper_2um()
    text = presets.write_config_text(setup)
    assert "feedback.gain_resistor_ohm = 3900.0" in text
    back = presets.setup_from_sections("paper-2um", presets.parse_config_text(text))
    assert back == setup


def test_unit_suffixes_convert_to_si():
    sections = presets.parse_config_text(
        "feedback.gain_resistor_kohm = 3.9\n"
        "feedback.feedback_capacitor_pf = 4.7  # ceramic\n"
        "sweep.sweep_powers_mw = 0.2, 0.4, 0.6\n"
        "sweep.seed = 7\n"
        "sweep.delta_pulses = yes\n"
        "sweep.prospective_coupling_frac = none\n"
    )
    assert sections["feedback"]["gain_resistor"] == pytest.approx(3.9e3)
    assert sections["feedback"]["feedback_capacitor"] == pytest.approx(4.7e-12)
    assert sections["sweep"]["sweep_powers"] == pytest.approx([2e-4, 4e-4, 6e-4])
    assert sections["sweep"]["seed"] == 7
    assert sections["sweep"]["delta_pulses"] is True
    assert sections["sweep"]["prospective_coupling"] is None


@pytest.mark.parametrize(
    "line",
    [
        "feedback.gain_resistor_furlong = 1",
        "feedback.gain_resistance_ohm = 1",
        "amplifier.gain_ohm = 1",
        "gain_resistor_ohm = 1",
        "feedback.gain_resistor_ohm 1",
        "feedback.gain_resistor_ohm = lots",
        "sweep.delta_pulses = maybe",
    ],
)
def test_bad_lines_are_config_errors(line):
    with pytest.raises(ConfigError):
        presets.parse_config_text(line + "\n")


def test_partial_file_overrides_its_preset(tmp_path):
    path = tmp_path / "hotter.txt"
    path.write_text(
        "run.preset = paper-2um\n"
        "lo.average_power_mw = 1.5\n"
        "sweep.sweep_powers_mw = 0.5, 1.0\n",
        encoding="utf-8",
    )
    setup = presets.load_config(path)
    reference = presets.paper_2um()
    assert setup.name == "hotter"
    assert setup.lo.average_power == pytest.approx(1.5e-3)
    assert setup.sweep.sweep_powers == pytest.approx([5e-4, 1e-3])
    assert setup.model == reference.model
    assert setup.sweep.prospective_coupling == 0.96


def test_manifest_name_is_kept(tmp_path):
    path = tmp_path / "manifest.txt"
    path.write_text(
        presets.write_config_text(presets.paper_2um(), run={"name": "paper-2um", "experiment": "cmrr"}),
        encoding="utf-8",
    )
    assert presets.load_config(path).name == "paper-2um"
    assert presets.run_entries(path) == {"name": "paper-2um", "experiment": "cmrr"}


def test_invalid_and_incomplete_configs(tmp_path):
    invalid = tmp_path / "invalid.txt"
    invalid.write_text("run.preset = paper-2um\nfeedback.gain_resistor_ohm = -5\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        presets.load_config(invalid)

    incomplete = tmp_path / "incomplete.txt"
    incomplete.write_text("feedback.gain_resistor_ohm = 3900\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        presets.load_config(incomplete)

    unsorted = tmp_path / "unsorted.txt"
    unsorted.write_text("run.preset = paper-2um\nsweep.sweep_powers_mw = 1.0, 0.5\n", encoding="utf-8")
    with pytest.raises(ConfigError):
        presets.load_config(unsorted)


def test_unknown_preset():
    with pytest.raises(ConfigError):
        presets.load_preset("paper-1um")


def test_paper_reference_report():
    reference = presets.REFERENCE_REPORTS["paper"]()
    assert reference.eta_tot == 0.58
    assert reference.cmrr_db == 48.0
    assert reference.snep == 73e-6
    assert reference.butterworth.shape.f_star == 61e6
