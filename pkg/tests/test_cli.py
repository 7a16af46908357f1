import pytest
from click.testing import CliRunner

from src.cli import cli
from src.data import file_formats
from src.data.presets import paper_reference_report

FAST = ["--averages", "2", "--sweep-points", "0.0002,0.0004,0.0006,0.0008,0.001"]


@pytest.fixture
def runner():
    return CliRunner()


def _files(directory):
    return {path.name: path.read_bytes() for path in sorted(directory.iterdir())}


def test_presets_lists_the_paper_detector(runner):
    result = runner.invoke(cli, ["presets"])
    assert result.exit_code == 0
    assert result.output.startswith("paper-2um: ")

    shown = runner.invoke(cli, ["presets", "--show", "paper-2um"])
    assert "feedback.gain_resistor_ohm = 3900.0" in shown.output


def test_empty_sweep_is_a_config_error(runner, tmp_path):
    result = runner.invoke(cli, ["simulate", "--out", str(tmp_path), "--sweep-points", ""])
    assert result.exit_code == 3


def test_bad_band_is_a_config_error(runner, tmp_path):
    result = runner.invoke(cli, ["simulate", "--out", str(tmp_path), "--band", "13e6,1e6"])
    assert result.exit_code == 3


def test_missing_config_file_is_an_io_error(runner, tmp_path):
    result = runner.invoke(cli, ["simulate", "--out", str(tmp_path), "--config", str(tmp_path / "absent.txt")])
    assert result.exit_code == 4


def test_power_sweep_writes_spectra_and_manifest(runner, tmp_path):
    result = runner.invoke(cli, ["simulate", "--experiment", "power-sweep", "--out", str(tmp_path), *FAST])
    assert result.exit_code == 0, result.output
    names = {path.name for path in tmp_path.iterdir()}
    assert {"dark.spec", "sweep_000.spec", "sweep_004.spec", "manifest.txt"} <= names
    assert "dc_plus.txt" not in names

    manifest = (tmp_path / "manifest.txt").read_text(encoding="utf-8")
    assert "lo.repetition_rate_hz = 39500000.0" in manifest
    assert "run.experiment = power-sweep" in manifest
    assert "sweep.n_averages = 2" in manifest


def test_simulation_is_byte_reproducible(runner, tmp_path):
    first, second, rerun = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    for out in (first, second):
        result = runner.invoke(cli, ["simulate", "--experiment", "dc-sweep", "--seed", "5", "--out", str(out)])
        assert result.exit_code == 0, result.output
    assert _files(first) == _files(second)

    result = runner.invoke(cli, ["simulate", "--config", str(first / "manifest.txt"), "--out", str(rerun)])
    assert result.exit_code == 0, result.output
    assert _files(rerun) == _files(first)


def test_ingest_without_dark_run_reports_unavailable_fields(runner, tmp_path):
    raw, analysed = tmp_path / "raw", tmp_path / "analysed"
    result = runner.invoke(cli, ["simulate", "--out", str(raw), *FAST])
    assert result.exit_code == 0, result.output
    (raw / "dark.spec").unlink()

    result = runner.invoke(cli, ["characterize", "--ingest", str(raw), "--out", str(analysed), "--pdf"])
    assert result.exit_code == 0, result.output
    report = file_formats.read_report(analysed / "report.json")
    assert report.clearance_db is None
    assert "clearance_db" in report.unavailable
    assert report.electronic_noise_density is not None
    assert (analysed / "datasheet.pdf").read_bytes().startswith(b"%PDF")
    assert not (analysed / "manifest.txt").exists()


def test_characterize_writes_report_plot_data_and_manifest(runner, tmp_path):
    result = runner.invoke(cli, ["characterize", "--out", str(tmp_path), *FAST])
    assert result.exit_code == 0, result.output
    names = {path.name for path in tmp_path.iterdir()}
    assert {"report.txt", "report.json", "manifest.txt", "fig_dc_response.txt", "fig_noise_variance.txt"} <= names
    assert file_formats.read_report(tmp_path / "report.txt") == file_formats.read_report(tmp_path / "report.json")


# --- report-diff ---------------------------------------------------------------


@pytest.fixture
def reference_file(tmp_path):
    path = tmp_path / "reference.txt"
    file_formats.write_report_text(paper_reference_report(), path)
    return path


def _write(tmp_path, name, **updates):
    path = tmp_path / name
    file_formats.write_report_text(paper_reference_report().model_copy(update=updates), path)
    return path


def test_report_matches_itself(runner, reference_file):
    result = runner.invoke(cli, ["report-diff", str(reference_file), str(reference_file)])
    assert result.exit_code == 0
    assert "0 failed" in result.output


def test_report_matches_the_published_figures(runner, reference_file):
    result = runner.invoke(cli, ["report-diff", str(reference_file), "--against", "paper"])
    assert result.exit_code == 0


def test_per_field_absolute_tolerance(runner, tmp_path, reference_file):
    ours = _write(tmp_path, "ours.txt", eta_tot=0.571)
    args = ["report-diff", str(ours), str(reference_file), "--only", "eta_tot"]
    result = runner.invoke(cli, [*args, "--tolerance", "eta_tot=0.02abs"])
    assert result.exit_code == 0
    assert "PASS eta_tot" in result.output

    result = runner.invoke(cli, [*args, "--tolerance", "eta_tot=0.005abs"])
    assert result.exit_code == 7


def test_bandwidth_outside_relative_tolerance(runner, tmp_path, reference_file):
    wider = _write(tmp_path, "wider.txt", bandwidth_3db=13.2e6 * 1.1)
    result = runner.invoke(cli, ["report-diff", str(wider), str(reference_file)])
    assert result.exit_code == 7
    assert "FAIL bandwidth_3db" in result.output


def test_report_diff_errors(runner, tmp_path, reference_file):
    garbage = tmp_path / "garbage.txt"
    garbage.write_text("this is not a report\n", encoding="utf-8")
    assert runner.invoke(cli, ["report-diff", str(garbage), str(reference_file)]).exit_code == 5

    assert runner.invoke(cli, ["report-diff", str(reference_file)]).exit_code == 2
    both = runner.invoke(cli, ["report-diff", str(reference_file), str(reference_file), "--against", "paper"])
    assert both.exit_code == 2

    bad_tolerance = runner.invoke(cli, ["report-diff", str(reference_file), "--against", "paper", "--tolerance", "eta"])
    assert bad_tolerance.exit_code == 3
