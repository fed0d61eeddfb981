"""Experiment configuration files.

A config is an INI file. Every physical quantity carries its unit in the key
name: ``_ghz`` (GHz), ``_ns`` (ns), ``_us`` (microseconds), ``_rad``
(radians), ``_rad_per_ns`` (angular rate) or ``_tau`` (multiples of the
Larmor period). Plain counts and names have no suffix. Example::

    [circuit]
    E_C_ghz = 1.30
    E_L_ghz = 0.59
    E_J_ghz = 5.71
    phi_dc_rad = 3.141592653589793
    levels = 2

    [drive]
    scheme = flux
    mode = commensurate
    t_X_tau = 1.0

    [experiment]
    name = rb
    lengths = 1, 4, 16, 64, 256
    seeds = 10

Unknown sections, unknown keys and bad values raise ``ConfigError`` naming
the key and its line.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .errors import ConfigError

UNIT_SUFFIXES = ("_rad_per_ns", "_ghz", "_ns", "_us", "_rad", "_tau")
_US_TO_NS = 1e3

# Allowed keys per section: key -> kind. Kinds with a unit must carry the suffix.
_SCHEMA: dict[str, dict[str, str]] = {
    "circuit": {
        "E_C_ghz": "float",
        "E_L_ghz": "float",
        "E_J_ghz": "float",
        "phi_dc_rad": "float",
        "basis_size": "int",
        "levels": "int",
    },
    "drive": {
        "scheme": "choice:flux,charge,circular",
        "mode": "choice:commensurate,incommensurate",
        "t_X_ns": "float",
        "t_X_tau": "float",
        "gap_ns": "float",
        "plateau_ns": "float",
        "rise_fall_ns": "float",
        "compact_y": "bool",
        "amp_charge_rad_per_ns": "float",
        "amp_flux_rad_per_ns": "float",
        "rel_phase_rad": "float",
        "detuning_rad_per_ns": "float",
        "carrier_phase_rad": "float",
    },
    "coherence": {"T1_us": "float", "T2E_us": "float"},
    "errors": {
        "amplitude_error": "float",
        "flux_gain_error": "float",
        "line_skew_ns": "float",
        "freq_offset_rad_per_ns": "float",
        "stark_shift_rad_per_ns": "float",
    },
    "experiment": {
        "name": "str",
        "seed": "int",
        "shots": "int",
        "points": "int",
        "phases": "int",
        "max_time_ns": "float",
        "drive_ratio": "float",
        "polarization": "choice:flux,charge,linear,co-rotating,counter-rotating",
        "angle_rad": "float",
        "t_g_tau": "float",
        "durations_tau": "floats",
        "lengths": "ints",
        "seeds": "int",
        "rb_mode": "choice:standard,interleaved,purity",
        "interleave": "str",
        "asymptote": "float",
        "calibrate": "bool",
        "gates": "strs",
        "samples_per_ns": "float",
        "workers": "int",
    },
    "output": {"directory": "str"},
}


@dataclass(frozen=True)
class CircuitSection:
    E_C: float = 1.30
    E_L: float = 0.59
    E_J: float = 5.71
    phi_dc: float = math.pi
    basis_size: int = 80
    levels: int = 2


@dataclass(frozen=True)
class DriveSection:
    scheme: str = "flux"
    mode: str = "commensurate"
    t_X: float | None = None
    t_X_tau: float | None = 1.0
    gap: float = 0.1
    plateau: float = 0.0
    rise_fall: float | None = None
    compact_y: bool = False
    amp_charge: float | None = None
    amp_flux: float | None = None
    rel_phase: float = math.pi / 2
    detuning: float = 0.0
    carrier_phase: float = 0.0


@dataclass(frozen=True)
class ExperimentConfig:
    """Parsed configuration; times in ns and rates in rad/ns."""

    experiment: str
    circuit: CircuitSection = field(default_factory=CircuitSection)
    drive: DriveSection = field(default_factory=DriveSection)
    coherence: tuple[float, float] | None = None
    errors: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    shots: int = 0
    output_dir: str | None = None
    source: str | None = None
    lines: dict = field(default_factory=dict, compare=False, repr=False)

    def snapshot(self) -> dict:
        data = asdict(self)
        data.pop("lines")
        data.pop("source")
        return data

    def digest(self) -> str:
        blob = json.dumps(self.snapshot(), sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


def _strip_unit(key: str) -> str | None:
    for suffix in UNIT_SUFFIXES:
        if key.endswith(suffix):
            return key[: -len(suffix)]
    return None


def _unit_base(section: str, key: str) -> list[str]:
    """Valid unit-suffixed keys that ``key`` looks like a misspelling of."""
    hits = []
    for known in _SCHEMA[section]:
        base = _strip_unit(known)
        if base and (key == base or key.startswith(base + "_")):
            hits.append(known)
    return hits


def _key_lines(text: str) -> dict[tuple[str, str], int]:
    """Line number of each (section, key) for error messages."""
    lines: dict[tuple[str, str], int] = {}
    section = None
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line[0] in "#;":
            continue
        if line.startswith("[") and line.endswith("]"):
            section = line[1:-1].strip()
            lines[(section, "")] = number
            continue
        key = re.split(r"[=:]", line, maxsplit=1)[0].strip()
        if section is not None:
            lines[(section, key)] = number
    return lines


def _convert(kind: str, raw: str, where: str):
    raw = raw.strip()
    try:
        if kind == "float":
            value = float(raw)
            if not math.isfinite(value):
                raise ValueError("not finite")
            return value
        if kind == "int":
            return int(raw)
        if kind == "bool":
            lowered = raw.lower()
            if lowered in ("1", "yes", "true", "on"):
                return True
            if lowered in ("0", "no", "false", "off"):
                return False
            raise ValueError("expected yes/no")
        if kind == "floats":
            return [float(v) for v in raw.split(",") if v.strip()]
        if kind == "ints":
            return [int(v) for v in raw.split(",") if v.strip()]
        if kind == "strs":
            return [v.strip() for v in raw.split(",") if v.strip()]
        if kind.startswith("choice:"):
            options = kind.split(":", 1)[1].split(",")
            if raw not in options:
                raise ValueError(f"expected one of {', '.join(options)}")
            return raw
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: bad value {raw!r} ({exc})") from None


def _where(lines, section, key, source) -> str:
    line = lines.get((section, key))
    prefix = f"{source}:" if source else ""
    return f"{prefix}{line}: [{section}] {key}" if line else f"{prefix}[{section}] {key}"


def parse_config_text(text: str, source: str | None = None) -> ExperimentConfig:
    """Parse and type-check a config; raises ``ConfigError`` on the first problem."""
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    try:
        parser.read_string(text, source=source or "<config>")
    except configparser.Error as exc:
        raise ConfigError(f"cannot parse config: {exc}") from None
    lines = _key_lines(text)
    values: dict[str, dict] = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{_where(lines, section, '', source)}: unknown section")
        schema = _SCHEMA[section]
        values[section] = {}
        for key, raw in parser.items(section):
            where = _where(lines, section, key, source)
            if key not in schema:
                if _unit_base(section, key):
                    raise ConfigError(
                        f"{where}: malformed unit suffix, expected {' or '.join(_unit_base(section, key))}"
                    )
                raise ConfigError(f"{where}: unknown key")
            values[section][key] = _convert(schema[key], raw, where)

    exp = values.get("experiment", {})
    if "name" not in exp:
        raise ConfigError(f"{_where(lines, 'experiment', 'name', source)}: missing experiment name")

    circ = values.get("circuit", {})
    circuit = CircuitSection(
        E_C=circ.get("E_C_ghz", 1.30),
        E_L=circ.get("E_L_ghz", 0.59),
        E_J=circ.get("E_J_ghz", 5.71),
        phi_dc=circ.get("phi_dc_rad", math.pi),
        basis_size=circ.get("basis_size", 80),
        levels=circ.get("levels", 2),
    )
    drv = values.get("drive", {})
    if "t_X_ns" in drv and "t_X_tau" in drv:
        raise ConfigError(f"{_where(lines, 'drive', 't_X_ns', source)}: give t_X_ns or t_X_tau, not both")
    drive = DriveSection(
        scheme=drv.get("scheme", "flux"),
        mode=drv.get("mode", "commensurate"),
        t_X=drv.get("t_X_ns"),
        t_X_tau=None if "t_X_ns" in drv else drv.get("t_X_tau", 1.0),
        gap=drv.get("gap_ns", 0.1),
        plateau=drv.get("plateau_ns", 0.0),
        rise_fall=drv.get("rise_fall_ns"),
        compact_y=drv.get("compact_y", False),
        amp_charge=drv.get("amp_charge_rad_per_ns"),
        amp_flux=drv.get("amp_flux_rad_per_ns"),
        rel_phase=drv.get("rel_phase_rad", math.pi / 2),
        detuning=drv.get("detuning_rad_per_ns", 0.0),
        carrier_phase=drv.get("carrier_phase_rad", 0.0),
    )
    coh = values.get("coherence")
    coherence = None
    if coh is not None:
        missing = [k for k in ("T1_us", "T2E_us") if k not in coh]
        if missing:
            raise ConfigError(f"{_where(lines, 'coherence', missing[0], source)}: missing")
        coherence = (coh["T1_us"] * _US_TO_NS, coh["T2E_us"] * _US_TO_NS)
    err = values.get("errors", {})
    errors = {
        "amplitude_error": err.get("amplitude_error", 0.0),
        "flux_gain_error": err.get("flux_gain_error", 0.0),
        "line_skew": err.get("line_skew_ns", 0.0),
        "freq_offset": err.get("freq_offset_rad_per_ns", 0.0),
        "stark_shift": err.get("stark_shift_rad_per_ns", 0.0),
    }
    params = {k: v for k, v in exp.items() if k not in ("name", "seed", "shots")}
    return ExperimentConfig(
        experiment=exp["name"],
        circuit=circuit,
        drive=drive,
        coherence=coherence,
        errors=errors,
        params=params,
        seed=exp.get("seed", 0),
        shots=exp.get("shots", 0),
        output_dir=values.get("output", {}).get("directory"),
        source=source,
        lines={f"{s}.{k}": n for (s, k), n in lines.items() if k},
    )


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return parse_config_text(text, source=str(path))


def physics_problems(config: ExperimentConfig, tau_L: float | None = None) -> list[str]:
    """Physical consistency checks that do not need a simulation.

    ``tau_L`` (ns) enables the commensurability check of ``t_X``.
    """
    problems = []

    def at(section, key):
        line = config.lines.get(f"{section}.{key}")
        return f"line {line}: [{section}] {key}" if line else f"[{section}] {key}"

    c = config.circuit
    for key, value in (("E_C_ghz", c.E_C), ("E_L_ghz", c.E_L), ("E_J_ghz", c.E_J)):
        if value <= 0:
            problems.append(f"{at('circuit', key)}: must be positive")
    if c.basis_size < 10:
        problems.append(f"{at('circuit', 'basis_size')}: must be at least 10")
    if not 2 <= c.levels < c.basis_size:
        problems.append(f"{at('circuit', 'levels')}: must be at least 2 and below basis_size")
    if config.coherence is not None:
        t1, t2e = config.coherence
        if t1 <= 0 or t2e <= 0:
            problems.append(f"{at('coherence', 'T1_us')}: coherence times must be positive")
        elif t2e > 2 * t1:
            problems.append(f"{at('coherence', 'T2E_us')}: T2E = {t2e / _US_TO_NS:g} us exceeds 2*T1 = {2 * t1 / _US_TO_NS:g} us")
    d = config.drive
    t_x = d.t_X if d.t_X is not None else (None if tau_L is None else d.t_X_tau * tau_L)
    if d.gap < 0:
        problems.append(f"{at('drive', 'gap_ns')}: must be non-negative")
    if t_x is not None:
        if t_x <= d.gap:
            problems.append(f"{at('drive', 't_X_ns')}: gate slot must exceed the gap")
        if d.plateau < 0 or d.plateau >= t_x - d.gap:
            problems.append(f"{at('drive', 'plateau_ns')}: must be non-negative and shorter than the pulse")
        if d.rise_fall is not None and abs(d.rise_fall - (t_x - d.gap - d.plateau)) > 1e-9:
            problems.append(f"{at('drive', 'rise_fall_ns')}: ramps must fill the pulse (t_X - gap - plateau)")
        if d.mode == "commensurate" and tau_L is not None:
            half = tau_L / 2
            cycles = t_x / half
            if abs(cycles - round(cycles)) > 1e-6 or round(cycles) < 1:
                key = "t_X_ns" if d.t_X is not None else "t_X_tau"
                problems.append(
                    f"{at('drive', key)}: CommensurabilityViolation: t_X = {t_x:.6g} ns is not a multiple of "
                    f"half the Larmor period ({half:.6g} ns)"
                )
    if config.shots < 0:
        problems.append(f"{at('experiment', 'shots')}: must be non-negative")
    return problems
