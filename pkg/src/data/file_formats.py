"""
Text file formats: traces, spectra, DC sweeps, characterization reports and measurement sets

Data files are UTF-8, '#'-prefixed `key = value` header lines followed by
whitespace-separated columns. Floats are written with 17 significant digits so
every file reads back to an equal object.
"""
import io
import json
import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from src.core.dsp import from_dbm
from src.core.exceptions import ParseError
from src.models.experiment import DCSweep, MeasurementSet
from src.models.report import CharacterizationReport
from src.models.signals import Spectrum, TimeTrace

logger = logging.getLogger(__name__)

FLOAT_FORMAT = "%.17g"

PathLike = Union[str, Path]


def _header_lines(header: Dict[str, object]) -> str:
    return "".join(f"# {key} = {value}\n" for key, value in header.items())


def write_columns(path: PathLike, header: Dict[str, object], columns: Dict[str, np.ndarray]) -> None:
    frame = pd.DataFrame(columns)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write(_header_lines(header))
        f.write("# " + " ".join(frame.columns) + "\n")
        frame.to_csv(f, sep=" ", header=False, index=False, float_format=FLOAT_FORMAT, lineterminator="\n")


def read_columns(path: PathLike, n_columns: int) -> Tuple[Dict[str, str], np.ndarray]:
    header: Dict[str, str] = {}
    rows: List[str] = []
    try:
        with open(path, encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if line.startswith("#"):
                    body = line[1:].strip()
                    if not rows and "=" in body:
                        key, value = (part.strip() for part in body.split("=", 1))
                        header[key] = value
                elif line:
                    rows.append(line)
        frame = pd.read_csv(io.StringIO("\n".join(rows)), sep=r"[\s,;]+", comment="#", header=None, engine="python")
    except pd.errors.EmptyDataError:
        raise ParseError(f"{path}: no data rows")
    except (UnicodeDecodeError, pd.errors.ParserError) as e:
        raise ParseError(f"{path}: {e}") from e

    if frame.shape[1] < n_columns:
        raise ParseError(f"{path}: expected {n_columns} columns, found {frame.shape[1]}")
    try:
        values = frame.iloc[:, :n_columns].to_numpy(dtype=float)
    except ValueError as e:
        raise ParseError(f"{path}: non-numeric data: {e}") from e
    if not np.all(np.isfinite(values)):
        raise ParseError(f"{path}: missing or non-finite values in the first {n_columns} columns")
    return header, values


def _header_float(header: Dict[str, str], key: str, path: PathLike, default: float = None) -> float:
    if key not in header:
        if default is not None:
            return default
        raise ParseError(f"{path}: header lacks '{key}'")
    try:
        return float(header[key])
    except ValueError as e:
        raise ParseError(f"{path}: header '{key}' is not a number") from e


# --- Traces ------------------------------------------------------------------


def write_trace(trace: TimeTrace, path: PathLike) -> None:
    header = {"dt_s": repr(trace.dt), "units": trace.units, "seed": trace.seed}
    write_columns(path, header, {"value": trace.samples})


def read_trace(path: PathLike) -> TimeTrace:
    header, values = read_columns(path, 1)
    try:
        return TimeTrace(
            samples=values[:, 0],
            dt=_header_float(header, "dt_s", path),
            units=header.get("units", "volts"),
            seed=int(header.get("seed", 0)),
        )
    except ValidationError as e:
        raise ParseError(f"{path}: {e}") from e


# --- Spectra -----------------------------------------------------------------


def write_spectrum(spec: Spectrum, path: PathLike) -> None:
    header = {
        "rbw_hz": repr(spec.rbw),
        "vbw_hz": repr(spec.vbw),
        "n_averages": spec.n_averages,
        "units": spec.units,
        "power_w": repr(spec.power),
    }
    write_columns(path, header, {"freq_hz": spec.freqs, "value": spec.psd})


def read_spectrum(path: PathLike, impedance: float = None) -> Spectrum:
    """
    Read a spectrum file or a spectrum-analyser export in the same layout.

    Exports in dBm per resolution band are converted to V^2/Hz, which needs
    the analyser input impedance.
    """
    header, values = read_columns(path, 2)
    try:
        spec = Spectrum(
            freqs=values[:, 0],
            psd=values[:, 1],
            rbw=_header_float(header, "rbw_hz", path),
            vbw=_header_float(header, "vbw_hz", path, default=_header_float(header, "rbw_hz", path)),
            n_averages=int(header.get("n_averages", 1)),
            units=header.get("units", "v2_per_hz"),
            power=_header_float(header, "power_w", path, default=0.0),
        )
    except ValidationError as e:
        raise ParseError(f"{path}: {e}") from e
    if spec.units == "dbm_in_rbw":
        if impedance is None:
            raise ParseError(f"{path}: spectrum is in dBm per RBW and no analyser impedance was given")
        return from_dbm(spec, impedance)
    return spec


# --- DC sweeps ---------------------------------------------------------------


def write_dc_sweep(sweep: DCSweep, path: PathLike) -> None:
    write_columns(path, {"arm": sweep.arm}, {"power_w": np.asarray(sweep.powers), "volts": np.asarray(sweep.volts)})


def read_dc_sweep(path: PathLike) -> DCSweep:
    header, values = read_columns(path, 2)
    try:
        return DCSweep(arm=header.get("arm", "plus"), powers=values[:, 0].tolist(), volts=values[:, 1].tolist())
    except ValidationError as e:
        raise ParseError(f"{path}: {e}") from e


# --- Reports -----------------------------------------------------------------


def _flatten(data: Dict, prefix: str = "") -> Dict[str, object]:
    flat: Dict[str, object] = {}
    for key, value in data.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{name}."))
        else:
            flat[name] = value
    return flat


def _unflatten(flat: Dict[str, object]) -> Dict:
    nested: Dict = {}
    for name, value in flat.items():
        node = nested
        *parents, leaf = name.split(".")
        for parent in parents:
            node = node.setdefault(parent, {})
        node[leaf] = value
    return nested


def report_to_flat(report: CharacterizationReport) -> Dict[str, object]:
    """Dotted keys -> JSON-compatible scalars and lists"""
    return _flatten(report.model_dump(mode="json"))


def write_report_text(report: CharacterizationReport, path: PathLike) -> None:
    """Flat key-value report; each value is a JSON literal"""
    lines = ["# homodyne detector characterization report"]
    lines.extend(f"{key} = {json.dumps(value)}" for key, value in report_to_flat(report).items())
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def parse_report_text(text: str, source: str = "<report>") -> CharacterizationReport:
    flat: Dict[str, object] = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if "=" not in line:
            raise ParseError(f"{source}:{number}: expected 'key = value'")
        key, value = (part.strip() for part in line.split("=", 1))
        try:
            flat[key] = json.loads(value)
        except json.JSONDecodeError as e:
            raise ParseError(f"{source}:{number}: bad value for {key}: {e}") from e
    try:
        return CharacterizationReport.model_validate(_unflatten(flat))
    except ValidationError as e:
        raise ParseError(f"{source}: {e}") from e


def write_report_json(report: CharacterizationReport, path: PathLike) -> None:
    Path(path).write_text(report.model_dump_json(indent=2) + "\n", encoding="utf-8")


def read_report(path: PathLike) -> CharacterizationReport:
    """Read either report format, chosen by content"""
    try:
        text = Path(path).read_text(encoding="utf-8")
    except UnicodeDecodeError as e:
        raise ParseError(f"{path}: {e}") from e
    if text.lstrip().startswith("{"):
        try:
            return CharacterizationReport.model_validate_json(text)
        except ValidationError as e:
            raise ParseError(f"{path}: {e}") from e
    return parse_report_text(text, str(path))


# --- Measurement sets ----------------------------------------------------------

DC_FILES = {"dc_plus": "dc_plus.txt", "dc_minus": "dc_minus.txt"}
SPECTRUM_FILES = {
    "dark": "dark.spec",
    "gain_shot": "gain_shot.spec",
    "gain_dark": "gain_dark.spec",
    "balanced_reprate": "balanced_reprate.spec",
    "addition": "addition.spec",
}
SWEEP_PATTERN = "sweep_{index:03d}.spec"


def write_measurements(measurements: MeasurementSet, directory: PathLike) -> List[Path]:
    """Write every present acquisition; returns the files in write order"""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    for name, filename in DC_FILES.items():
        sweep = getattr(measurements, name)
        if sweep is not None:
            write_dc_sweep(sweep, directory / filename)
            written.append(directory / filename)
    for name, filename in SPECTRUM_FILES.items():
        spec = getattr(measurements, name)
        if spec is not None:
            write_spectrum(spec, directory / filename)
            written.append(directory / filename)
    for index, spec in enumerate(measurements.sweep):
        path = directory / SWEEP_PATTERN.format(index=index)
        write_spectrum(spec, path)
        written.append(path)
    return written


def read_measurements(directory: PathLike, impedance: float = None) -> MeasurementSet:
    """Load whatever acquisitions a directory holds; absent files stay None"""
    directory = Path(directory)
    if not directory.is_dir():
        raise FileNotFoundError(f"measurement directory {directory} does not exist")

    measurements = MeasurementSet()
    for name, filename in DC_FILES.items():
        if (directory / filename).exists():
            setattr(measurements, name, read_dc_sweep(directory / filename))
    for name, filename in SPECTRUM_FILES.items():
        if (directory / filename).exists():
            setattr(measurements, name, read_spectrum(directory / filename, impedance))
    sweep = [read_spectrum(path, impedance) for path in sorted(directory.glob("sweep_*.spec"))]
    measurements.sweep = sorted(sweep, key=lambda spec: spec.power)
    logger.info(f"Ingested {directory}: {len(measurements.sweep)} sweep spectra")
    return measurements
