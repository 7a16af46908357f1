"""
Command Line Interface for the homodyne detector twin

Exit codes: 0 ok, 1 unexpected, 2 usage, 3 configuration, 4 I/O, 5 parse,
6 analysis or fit, 7 report mismatch, 8 saturation or domain.
"""
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Tuple, get_args

import click
from pydantic import ValidationError

from src.core.characterization_service import EXPERIMENTS, CharacterizationService
from src.core.config import settings
from src.core.exceptions import IO_EXIT_CODE, ConfigError, HomodyneError, ReportMismatch
from src.core.signal_synth import simulate_homodyne, synth_pulse_train
from src.data import file_formats
from src.data.presets import PRESETS, REFERENCE_REPORTS, load_config, load_preset, run_entries, write_config_text
from src.models.experiment import DetectorSetup, Experiment, ExperimentPlan, SweepConfig
from src.models.report import CharacterizationReport
from src.models.signals import Scenario, SynthConfig
from src.reports.pdf_generator import DatasheetGenerator
from src.reports.plot_data import PlotDataWriter

logger = logging.getLogger(__name__)

MANIFEST = "manifest.txt"
REPORT_TEXT = "report.txt"
REPORT_JSON = "report.json"
DATASHEET = "datasheet.pdf"
TRACE_FILES = {"lo": "trace_lo.txt", "ac": "trace_ac.txt"}

# Report fields that describe a run rather than measure the detector
_DIFF_IGNORED = ("conventions", "closed_form", "closed_form_bandwidth", "unavailable", "warnings", "seed")
_DIFF_IGNORED_LEAVES = ("residuals", "fitted_points", "excluded_points")


class HomodyneGroup(click.Group):
    """Maps the error hierarchy onto the documented exit codes"""

    def invoke(self, ctx: click.Context):
        try:
            return super().invoke(ctx)
        except HomodyneError as e:
            logger.debug("Command failed", exc_info=True)
            click.echo(f"Error: {e}", err=True)
            ctx.exit(e.exit_code)
        except ValidationError as e:
            click.echo(f"Error: invalid configuration: {e}", err=True)
            ctx.exit(ConfigError.exit_code)
        except OSError as e:
            click.echo(f"Error: {e}", err=True)
            ctx.exit(IO_EXIT_CODE)


@click.group(cls=HomodyneGroup)
@click.option("--log-level", default=settings.log_level, show_default=True, help="Logging level")
def cli(log_level: str):
    """Balanced homodyne detector twin: simulate and characterize"""
    logging.basicConfig(level=log_level.upper(), format="%(levelname)s %(name)s: %(message)s")


# --- Shared setup options ----------------------------------------------------


def _parse_floats(text: str, option: str) -> List[float]:
    try:
        return [float(item) for item in text.split(",") if item.strip()]
    except ValueError as e:
        raise ConfigError(f"{option}: expected comma-separated numbers, got '{text}'") from e


def setup_options(command):
    """Detector source and analysis overrides shared by simulate and characterize"""
    options = [
        click.option("--preset", default=None, type=click.Choice(sorted(PRESETS)), help="Built-in detector preset"),
        click.option("--config", "config_path", type=click.Path(dir_okay=False), help="Key-value configuration or manifest"),
        click.option("--seed", type=int, help="Master seed"),
        click.option("--out", "output_dir", required=True, type=click.Path(file_okay=False), help="Output directory"),
        click.option("--rbw", type=float, help="Resolution bandwidth of the noise spectra, Hz"),
        click.option("--vbw", type=float, help="Video bandwidth of the noise spectra, Hz"),
        click.option("--band", help="Variance band 'lo,hi' in Hz"),
        click.option("--clearance-freq", type=float, help="Clearance frequency, Hz"),
        click.option("--sweep-points", help="LO powers of the power sweep, comma-separated watts"),
        click.option("--averages", type=int, help="Spectrum averages per acquisition"),
    ]
    for option in reversed(options):
        command = option(command)
    return command


def _sweep_overrides(
    seed: Optional[int],
    rbw: Optional[float],
    vbw: Optional[float],
    band: Optional[str],
    clearance_freq: Optional[float],
    sweep_points: Optional[str],
    averages: Optional[int],
) -> Dict[str, object]:
    updates: Dict[str, object] = {}
    if seed is not None:
        updates["seed"] = seed
    if rbw is not None:
        updates["linearity_rbw"] = rbw
    if vbw is not None:
        updates["linearity_vbw"] = vbw
    if band is not None:
        limits = _parse_floats(band, "--band")
        if len(limits) != 2:
            raise ConfigError(f"--band: expected 'lo,hi', got '{band}'")
        updates["band_lo"], updates["band_hi"] = limits
    if clearance_freq is not None:
        updates["clearance_freq"] = clearance_freq
    if sweep_points is not None:
        updates["sweep_powers"] = _parse_floats(sweep_points, "--sweep-points")
    if averages is not None:
        updates["n_averages"] = averages
    return updates


def resolve_setup(
    preset: Optional[str], config_path: Optional[str], updates: Dict[str, object]
) -> Tuple[DetectorSetup, Optional[str], Dict[str, str]]:
    """Setup from a config file, else a preset; returns it with its preset name and run entries"""
    run: Dict[str, str] = {}
    if config_path:
        run = run_entries(config_path)
        base = load_preset(preset) if preset else None
        setup = load_config(config_path, base)
        preset = preset or run.get("preset") or None
    else:
        preset = preset or settings.default_preset
        setup = load_preset(preset)

    if updates:
        try:
            sweep = SweepConfig(**{**setup.sweep.model_dump(), **updates})
        except ValidationError as e:
            raise ConfigError(f"invalid option: {e}") from e
        setup = DetectorSetup(name=setup.name, model=setup.model, lo=setup.lo, sweep=sweep)
    return setup, preset, run


def _experiments(experiment: str) -> Tuple[str, ...]:
    return EXPERIMENTS if experiment == "full-characterize" else (experiment,)


def _write_manifest(setup: DetectorSetup, preset: Optional[str], experiment: str, out: Path, files: List[Path]) -> Path:
    run = {"name": setup.name}
    if preset:
        run["preset"] = preset
    run["experiment"] = experiment
    run["seed"] = str(setup.sweep.seed)
    run["files"] = ", ".join(path.name for path in files)
    path = out / MANIFEST
    path.write_text(write_config_text(setup, run), encoding="utf-8")
    return path


def _write_traces(setup: DetectorSetup, out: Path) -> List[Path]:
    """Time-domain LO envelope and AC output at the preset LO power, over the DC-sweep record length"""
    sweep = setup.sweep
    cfg = SynthConfig(
        sample_rate=sweep.sample_rate, duration=sweep.dc_duration, seed=sweep.seed, delta_pulses=sweep.delta_pulses
    )
    envelope = synth_pulse_train(setup.lo, cfg)
    run = simulate_homodyne(setup.model, setup.lo, Scenario(), cfg)
    file_formats.write_trace(envelope, out / TRACE_FILES["lo"])
    file_formats.write_trace(run.ac, out / TRACE_FILES["ac"])
    return [out / TRACE_FILES["lo"], out / TRACE_FILES["ac"]]


# --- Commands ----------------------------------------------------------------


@cli.command()
@setup_options
@click.option(
    "--experiment",
    type=click.Choice(list(get_args(Experiment))),
    help="Acquisitions to simulate [default: the config's run.experiment, else full-characterize]",
)
@click.option("--write-traces", is_flag=True, help="Also write time-domain traces")
def simulate(
    preset, config_path, seed, output_dir, rbw, vbw, band, clearance_freq, sweep_points, averages, experiment, write_traces
):
    """Simulate raw acquisitions and write them with a manifest"""
    updates = _sweep_overrides(seed, rbw, vbw, band, clearance_freq, sweep_points, averages)
    setup, preset, run = resolve_setup(preset, config_path, updates)
    experiment = experiment or run.get("experiment") or "full-characterize"

    experiments = _experiments(experiment)
    if "power-sweep" in experiments and not setup.sweep.sweep_powers:
        raise ConfigError("power sweep has no points")
    try:
        plan = ExperimentPlan(
            preset_or_config=config_path or preset or setup.name,
            experiment=experiment,
            sweep_points=setup.sweep.sweep_powers,
            seed=setup.sweep.seed,
            output_dir=output_dir,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid plan: {e}") from e

    out = Path(plan.output_dir)
    measurements = CharacterizationService().simulate_measurements(setup.model, setup.lo, setup.sweep, experiments)
    files = file_formats.write_measurements(measurements, out)
    if write_traces:
        files.extend(_write_traces(setup, out))
    manifest = _write_manifest(setup, preset, plan.experiment, out, files)
    click.echo(f"Wrote {len(files)} data files and {manifest}")


@cli.command()
@setup_options
@click.option("--ingest", "ingest_dir", type=click.Path(file_okay=False), help="Analyse existing measurement files")
@click.option("--pdf", "write_pdf", is_flag=True, help="Also write a PDF datasheet")
def characterize(
    preset, config_path, seed, output_dir, rbw, vbw, band, clearance_freq, sweep_points, averages, ingest_dir, write_pdf
):
    """Run (or ingest) the full characterization and write the report and plot data"""
    if ingest_dir and not config_path and not preset and (Path(ingest_dir) / MANIFEST).exists():
        config_path = str(Path(ingest_dir) / MANIFEST)
    updates = _sweep_overrides(seed, rbw, vbw, band, clearance_freq, sweep_points, averages)
    setup, preset, _ = resolve_setup(preset, config_path, updates)
    out = Path(output_dir)
    out.mkdir(parents=True, exist_ok=True)

    service = CharacterizationService()
    if ingest_dir:
        measurements = file_formats.read_measurements(ingest_dir, impedance=setup.model.sa_impedance)
    else:
        if not setup.sweep.sweep_powers:
            raise ConfigError("power sweep has no points")
        measurements = service.simulate_measurements(setup.model, setup.lo, setup.sweep)
    report = service.characterize_measurements(setup.model, setup.lo, measurements, setup.sweep)

    files = [out / REPORT_TEXT, out / REPORT_JSON]
    file_formats.write_report_text(report, files[0])
    file_formats.write_report_json(report, files[1])
    files.extend(PlotDataWriter(measurements, report, setup.sweep).write_all(out))
    if write_pdf:
        (out / DATASHEET).write_bytes(DatasheetGenerator().generate_datasheet(report, setup))
        files.append(out / DATASHEET)
    if not ingest_dir:
        _write_manifest(setup, preset, "full-characterize", out, files)

    for warning in report.warnings:
        click.echo(f"Warning: {warning}", err=True)
    click.echo(f"Report written to {files[0]} ({len(report.unavailable)} fields unavailable)")


# --- Report comparison -------------------------------------------------------


def _parse_tolerances(entries: Tuple[str, ...]) -> Dict[str, Tuple[float, bool]]:
    """FIELD=VALUE entries; VALUE is relative unless suffixed 'abs'"""
    tolerances: Dict[str, Tuple[float, bool]] = {}
    for entry in entries:
        if "=" not in entry:
            raise ConfigError(f"--tolerance: expected FIELD=VALUE, got '{entry}'")
        key, value = (part.strip() for part in entry.split("=", 1))
        absolute = value.lower().endswith("abs")
        if absolute:
            value = value[:-3].strip()
        try:
            tolerances[key] = (float(value), absolute)
        except ValueError as e:
            raise ConfigError(f"--tolerance: '{value}' is not a number") from e
    return tolerances


def _comparable(flat: Dict[str, object]) -> Dict[str, object]:
    return {
        key: value
        for key, value in flat.items()
        if key.split(".")[0] not in _DIFF_IGNORED and key.split(".")[-1] not in _DIFF_IGNORED_LEAVES
    }


def _within(a: object, b: object, tolerance: float, absolute: bool) -> bool:
    if isinstance(a, bool) or isinstance(b, bool) or isinstance(a, str) or isinstance(b, str):
        return a == b
    a, b = float(a), float(b)
    if math.isinf(a) or math.isinf(b):
        return a == b
    limit = tolerance if absolute else tolerance * max(abs(a), abs(b))
    return abs(a - b) <= limit


def diff_reports(
    report_a: CharacterizationReport,
    report_b: CharacterizationReport,
    rtol: float,
    tolerances: Dict[str, Tuple[float, bool]],
    only: Tuple[str, ...] = (),
) -> Tuple[List[str], int]:
    """Field-by-field comparison; returns summary lines and the number of failures"""
    flat_a = _comparable(file_formats.report_to_flat(report_a))
    flat_b = _comparable(file_formats.report_to_flat(report_b))
    keys = [key for key in flat_a if key in flat_b] + [key for key in flat_b if key not in flat_a]
    if only:
        keys = [key for key in keys if key in only or key.split(".")[0] in only]

    lines, failures = [], 0
    for key in keys:
        a, b = flat_a.get(key), flat_b.get(key)
        if a is None or b is None or isinstance(a, list) or isinstance(b, list):
            lines.append(f"SKIP {key}: {a} vs {b}")
            continue
        tolerance, absolute = tolerances.get(key, (rtol, False))
        ok = _within(a, b, tolerance, absolute)
        failures += not ok
        unit = "abs" if absolute else "rel"
        lines.append(f"{'PASS' if ok else 'FAIL'} {key}: {a} vs {b} (tol {tolerance:g} {unit})")
    return lines, failures


@cli.command("report-diff")
@click.argument("report_a", type=click.Path(exists=True, dir_okay=False))
@click.argument("report_b", required=False, type=click.Path(exists=True, dir_okay=False))
@click.option("--against", type=click.Choice(sorted(REFERENCE_REPORTS)), help="Compare with a reference report")
@click.option("--rtol", default=0.05, show_default=True, type=float, help="Default relative tolerance")
@click.option("--tolerance", "tolerance_entries", multiple=True, help="FIELD=VALUE, relative unless VALUE ends in 'abs'")
@click.option("--only", multiple=True, help="Compare only these fields")
def report_diff(report_a, report_b, against, rtol, tolerance_entries, only):
    """Compare two reports field by field"""
    if (report_b is None) == (against is None):
        raise click.UsageError("give exactly one of REPORT_B or --against")

    tolerances = _parse_tolerances(tolerance_entries)
    first = file_formats.read_report(report_a)
    second = REFERENCE_REPORTS[against]() if against else file_formats.read_report(report_b)

    lines, failures = diff_reports(first, second, rtol, tolerances, only)
    for line in lines:
        click.echo(line)
    compared = sum(not line.startswith("SKIP") for line in lines)
    click.echo(f"{compared} fields compared, {failures} failed")
    if failures:
        raise ReportMismatch(f"{failures} of {compared} fields outside tolerance")


@cli.command()
@click.option("--show", type=click.Choice(sorted(PRESETS)), help="Print a preset as a configuration file")
def presets(show):
    """List the built-in detector presets"""
    if show:
        click.echo(write_config_text(load_preset(show)), nl=False)
        return
    for name, factory in sorted(PRESETS.items()):
        summary = (factory.__doc__ or "").strip().split("\n")[0]
        click.echo(f"{name}: {summary}")


if __name__ == "__main__":
    cli()
