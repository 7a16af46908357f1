"""
Built-in detector presets and the key-value configuration format

A configuration file holds one `section.field_unit = value` entry per line:

    # paper-2um, PD+ only
    pd_plus.responsivity_a_per_w = 1.45
    pd_plus.junction_capacitance_pf = 9
    feedback.gain_resistor_kohm = 3.9
    sweep.sweep_powers_mw = 0.2, 0.4, 0.6

Every value is converted to SI from the unit suffix in its key; dimensionless,
integer and boolean fields take no suffix. Sections: pd_plus, pd_minus, opamp,
feedback, detector, response, lo, sweep, and the informational run section
written into manifests.
"""
import logging
from pathlib import Path
from typing import Dict, List, Tuple, Union

from pydantic import ValidationError

from src.core.exceptions import ConfigError
from src.models.detector import (
    ButterworthShape,
    DetectorModel,
    FeedbackNetwork,
    LocalOscillator,
    OpAmpParams,
    PhotodiodeParams,
)
from src.models.experiment import DetectorSetup, SweepConfig
from src.models.report import ButterworthFit, CharacterizationReport, Estimate

logger = logging.getLogger(__name__)

# Unit families: suffix -> factor to SI. The first entry is what the writer emits.
UNITS: Dict[str, Dict[str, float]] = {
    "frequency": {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9},
    "capacitance": {"f": 1.0, "nf": 1e-9, "pf": 1e-12, "ff": 1e-15},
    "resistance": {"ohm": 1.0, "kohm": 1e3, "megohm": 1e6},
    "current": {"a": 1.0, "ma": 1e-3, "ua": 1e-6, "na": 1e-9, "pa": 1e-12},
    "current_density": {"a_rthz": 1.0, "na_rthz": 1e-9, "pa_rthz": 1e-12, "fa_rthz": 1e-15},
    "voltage_density": {"v_rthz": 1.0, "uv_rthz": 1e-6, "nv_rthz": 1e-9},
    "power": {"w": 1.0, "mw": 1e-3, "uw": 1e-6, "nw": 1e-9},
    "length": {"m": 1.0, "mm": 1e-3, "um": 1e-6, "nm": 1e-9},
    "time": {"s": 1.0, "ms": 1e-3, "us": 1e-6, "ns": 1e-9, "ps": 1e-12},
    "voltage": {"v": 1.0, "mv": 1e-3, "uv": 1e-6},
    "responsivity": {"a_per_w": 1.0},
    "fraction": {"frac": 1.0, "pct": 1e-2},
    "per_hz": {"per_hz": 1.0},
    "number": {"": 1.0},
}
_INTEGER, _BOOLEAN = "integer", "boolean"

_PHOTODIODE = {
    "responsivity": "responsivity",
    "junction_capacitance": "capacitance",
    "shunt_resistance": "resistance",
    "dark_current": "current",
    "active_diameter": "length",
    "reverse_bias": "voltage",
    "quantum_efficiency": "fraction",
    "coupling_efficiency": "fraction",
}

SECTIONS: Dict[str, Dict[str, str]] = {
    "pd_plus": _PHOTODIODE,
    "pd_minus": _PHOTODIODE,
    "opamp": {
        "gain_bandwidth_product": "frequency",
        "voltage_noise": "voltage_density",
        "current_noise": "current_density",
        "input_capacitance": "capacitance",
        "input_bias_offset_current": "current",
        "output_swing": "voltage",
    },
    "feedback": {"gain_resistor": "resistance", "feedback_capacitor": "capacitance"},
    "detector": {
        "electronic_noise_density": "current_density",
        "v_offset": "voltage",
        "sa_impedance": "resistance",
        "dark_current_shot_noise": _BOOLEAN,
    },
    "response": {"p": "number", "f_star": "frequency"},
    "lo": {
        "wavelength": "length",
        "average_power": "power",
        "repetition_rate": "frequency",
        "pulse_fwhm": "time",
        "rin_density": "per_hz",
    },
    "sweep": {
        "seed": _INTEGER,
        "sample_rate": "frequency",
        "n_averages": _INTEGER,
        "delta_pulses": _BOOLEAN,
        "dc_powers": "power",
        "dc_duration": "time",
        "dc_noise": "voltage",
        "sweep_powers": "power",
        "linearity_rbw": "frequency",
        "linearity_vbw": "frequency",
        "saturation_imbalance": "fraction",
        "saturation_target_power": "power",
        "saturation_threshold": "fraction",
        "gain_power": "power",
        "gain_rbw": "frequency",
        "gain_vbw": "frequency",
        "cmrr_power": "power",
        "cmrr_imbalance": "fraction",
        "path_delay": "time",
        "band_lo": "frequency",
        "band_hi": "frequency",
        "plateau_lo": "frequency",
        "plateau_hi": "frequency",
        "clearance_freq": "frequency",
        "smoothing_fwhm": "frequency",
        "prospective_coupling": "fraction",
    },
}
_LIST_FIELDS = {("sweep", "dc_powers"), ("sweep", "sweep_powers")}
_RUN_SECTION = "run"
_NULLABLE = {"saturation_imbalance", "prospective_coupling"}

Value = Union[float, int, bool, List[float], None]


def _split_key(section: str, key: str) -> Tuple[str, str, float]:
    fields = SECTIONS[section]
    for field, kind in fields.items():
        if kind in (_INTEGER, _BOOLEAN):
            if key == field:
                return field, kind, 1.0
            continue
        for suffix, factor in UNITS[kind].items():
            if (suffix and key == f"{field}_{suffix}") or (not suffix and key == field):
                return field, kind, factor
    raise ConfigError(f"unknown key or unit suffix '{section}.{key}'")


def _convert(text: str, kind: str, factor: float, is_list: bool) -> Value:
    text = text.strip()
    if is_list:
        return [float(item) * factor for item in text.split(",") if item.strip()]
    if text.lower() in ("none", "null", ""):
        return None
    if kind == _BOOLEAN:
        if text.lower() not in ("true", "false", "1", "0", "yes", "no"):
            raise ConfigError(f"'{text}' is not a boolean")
        return text.lower() in ("true", "1", "yes")
    if kind == _INTEGER:
        return int(text)
    return float(text) * factor


def parse_config_text(text: str) -> Dict[str, Dict[str, Value]]:
    """Key-value text -> {section: {field: SI value}}"""
    sections: Dict[str, Dict[str, Value]] = {name: {} for name in SECTIONS}
    sections[_RUN_SECTION] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line or "." not in line.split("=", 1)[0]:
            raise ConfigError(f"line {number}: expected 'section.field_unit = value', got '{raw.strip()}'")
        key, value = (part.strip() for part in line.split("=", 1))
        section, name = key.split(".", 1)
        if section == _RUN_SECTION:
            sections[_RUN_SECTION][name] = value
            continue
        if section not in SECTIONS:
            raise ConfigError(f"line {number}: unknown section '{section}'")
        field, kind, factor = _split_key(section, name)
        try:
            sections[section][field] = _convert(value, kind, factor, (section, field) in _LIST_FIELDS)
        except ValueError as e:
            raise ConfigError(f"line {number}: cannot read '{value}' for {key}: {e}") from e
    return sections


def setup_from_sections(name: str, sections: Dict[str, Dict[str, Value]], base: DetectorSetup = None) -> DetectorSetup:
    """Build a validated setup; sections missing from the file fall back to `base`"""
    if base is not None:
        sections = _overlay(setup_to_sections(base), sections)

    try:
        response = sections.get("response") or {}
        detector = {k: v for k, v in sections["detector"].items() if v is not None}
        model = DetectorModel(
            pd_plus=PhotodiodeParams(**sections["pd_plus"]),
            pd_minus=PhotodiodeParams(**sections["pd_minus"]),
            opamp=OpAmpParams(**sections["opamp"]),
            feedback=FeedbackNetwork(**sections["feedback"]),
            measured_response=ButterworthShape(**response) if response else None,
            **detector,
        )
        lo = LocalOscillator(**sections["lo"])
        sweep = SweepConfig(**{k: v for k, v in sections["sweep"].items() if v is not None or k in _NULLABLE})
    except ValidationError as e:
        raise ConfigError(f"invalid configuration '{name}': {e}") from e
    except TypeError as e:
        raise ConfigError(f"incomplete configuration '{name}': {e}") from e
    return DetectorSetup(name=name, model=model, lo=lo, sweep=sweep)



def _overlay(base: Dict[str, Dict[str, Value]], update: Dict[str, Dict[str, Value]]) -> Dict[str, Dict[str, Value]]:
    merged = {section: dict(values) for section, values in base.items()}
    for section, values in update.items():
        merged.setdefault(section, {}).update(values)
    return merged


def setup_to_sections(setup: DetectorSetup) -> Dict[str, Dict[str, Value]]:
    model = setup.model
    sections = {
        "pd_plus": model.pd_plus.model_dump(),
        "pd_minus": model.pd_minus.model_dump(),
        "opamp": model.opamp.model_dump(),
        "feedback": model.feedback.model_dump(),
        "detector": {
            "electronic_noise_density": model.electronic_noise_density,
            "v_offset": model.v_offset,
            "sa_impedance": model.sa_impedance,
            "dark_current_shot_noise": model.dark_current_shot_noise,
        },
        "response": model.measured_response.model_dump() if model.measured_response else {},
        "lo": setup.lo.model_dump(),
        "sweep": setup.sweep.model_dump(),
    }
    return sections


def _format(value: Value) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, list):
        return ", ".join(repr(float(v)) for v in value)
    return repr(float(value))


def write_config_text(setup: DetectorSetup, run: Dict[str, str] = None) -> str:
    """Setup -> key-value text in SI suffixes; parse_config_text reads it back exactly"""
    lines = [f"# {setup.name}"]
    for section, values in setup_to_sections(setup).items():
        if not values:
            continue
        lines.append("")
        for field, kind in SECTIONS[section].items():
            if field not in values:
                continue
            suffix = "" if kind in (_INTEGER, _BOOLEAN) else next(iter(UNITS[kind]))
            key = f"{section}.{field}_{suffix}" if suffix else f"{section}.{field}"
            lines.append(f"{key} = {_format(values[field])}")
    if run:
        lines.append("")
        lines.extend(f"{_RUN_SECTION}.{key} = {value}" for key, value in run.items())
    return "\n".join(lines) + "\n"


# --- Presets -----------------------------------------------------------------


def _paper_photodiode(coupling: float) -> PhotodiodeParams:
    return PhotodiodeParams(
        responsivity=1.45,
        junction_capacitance=9e-12,
        shunt_resistance=60e3,
        dark_current=20e-6,
        active_diameter=250e-6,
        reverse_bias=2.4,
        quantum_efficiency=0.865,
        coupling_efficiency=coupling,
    )


def paper_2um() -> DetectorSetup:
    """Extended-InGaAs pair on an ADA4817 TIA with a 2.07 um mode-locked fibre-laser LO"""
    model = DetectorModel(
        pd_plus=_paper_photodiode(0.752),
        pd_minus=_paper_photodiode(0.760),
        opamp=OpAmpParams(
            gain_bandwidth_product=410e6,
            voltage_noise=4e-9,
            current_noise=2.5e-15,
            input_capacitance=1.3e-12,
            input_bias_offset_current=1e-12,
            output_swing=3.9,
        ),
        feedback=FeedbackNetwork(gain_resistor=3.9e3, feedback_capacitor=4.7e-12),
        electronic_noise_density=2.79e-12,
        v_offset=2.4e-3,
        sa_impedance=50.0,
        measured_response=ButterworthShape(p=1.12, f_star=61e6),
    )
    # Pulses widened to 4 ns so the 1 GS/s grid resolves them
    lo = LocalOscillator(wavelength=2.07e-6, average_power=1e-3, repetition_rate=39.5e6, pulse_fwhm=4e-9)
    # Fibre-coupled photodiodes: coupling that lifts eta_tot to 73 %
    sweep = SweepConfig(prospective_coupling=0.96)
    return DetectorSetup(name="paper-2um", model=model, lo=lo, sweep=sweep)


PRESETS = {"paper-2um": paper_2um}


def load_preset(name: str) -> DetectorSetup:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset '{name}'; available: {', '.join(sorted(PRESETS))}")
    return PRESETS[name]()


def load_config(path: Union[str, Path], base: DetectorSetup = None) -> DetectorSetup:
    """Read a key-value file; a `run.preset` entry or `base` supplies any missing sections"""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    sections = parse_config_text(text)
    run = sections[_RUN_SECTION]
    if base is None and run.get("preset"):
        base = load_preset(run["preset"])
    logger.info(f"Loaded configuration {path}")
    return setup_from_sections(run.get("name") or path.stem, sections, base)


def run_entries(path: Union[str, Path]) -> Dict[str, str]:
    """The run section of a configuration or manifest file"""
    return parse_config_text(Path(path).read_text(encoding="utf-8"))[_RUN_SECTION]


# --- Reference figures -------------------------------------------------------


def paper_reference_report() -> CharacterizationReport:
    """The published figures for the paper-2um detector, for report-diff"""
    return CharacterizationReport(
        eta_total_plus=Estimate(value=0.653, stderr=0.015),
        eta_total_minus=Estimate(value=0.66, stderr=0.02),
        eta_coup=0.75,
        eta_qe=0.865,
        bandwidth_3db=13.2e6,
        butterworth=ButterworthFit(shape=ButterworthShape(p=1.12, f_star=61e6), scale=1.0, r_squared=0.98),
        saturation_onset=1.8e-3,
        cmrr_raw_db=54.0,
        cmrr_db=48.0,
        clearance_db=9.0,
        clearance_freq=5e6,
        eta_snr=0.88,
        eta_tot=0.58,
        eta_tot_prospective=0.73,
        snep=73e-6,
        electronic_noise_density=2.79e-12,
    )


REFERENCE_REPORTS = {"paper": paper_reference_report}
