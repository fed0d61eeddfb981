"""Named experiments driven by a config file, and their on-disk result bundles."""

from __future__ import annotations

import hashlib
import json
import math
import os
import time
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .benchmarking import (
    DEFAULT_LENGTHS,
    PulseExecutor,
    fit_purity,
    fit_rb,
    interleaved_error,
    run_rb,
)
from .calibration import (
    SimulatorBackend,
    analytic_amplitude,
    rabi_phase_law,
    relative_phase_calibration,
    run_ladder,
)
from .circuit import CircuitParams, EigenSystem, QubitFrame, diagonalize, qubit_frame
from .config import ExperimentConfig, load_config, physics_problems
from .dynamics import (
    CoherenceParams,
    HardwareErrors,
    RangeConfig,
    bloch_vector,
    coherence_limited_error,
    rotation_range,
    rotation_vs_start,
)
from .errors import BackendError, ConfigError, FluxgatesError
from .fileio import atomic_write_text
from .pulses import DriveParams, GateSetup, GateTiming, parse_gate, schedule_to_dict

OUTPUT_ROOT_ENV = "FLUXGATES_OUTPUT_ROOT"


# ---------------------------------------------------------------- model construction


@dataclass
class Model:
    """Qubit model, frame and gate setup derived from a config."""

    eig: EigenSystem
    frame: QubitFrame
    setup: GateSetup
    coherence: CoherenceParams | None
    errors: HardwareErrors

    def backend(self, config: ExperimentConfig) -> SimulatorBackend:
        return SimulatorBackend(
            self.eig, errors=self.errors, decoherence=self.coherence, shots=config.shots, seed=config.seed
        )


def build_model(config: ExperimentConfig, t_X_tau: float | None = None) -> Model:
    c = config.circuit
    params = CircuitParams(c.E_C, c.E_L, c.E_J, c.phi_dc, c.basis_size)
    eig = diagonalize(params, keep=c.levels)
    frame = qubit_frame(eig)
    d = config.drive
    if t_X_tau is not None:
        t_x = t_X_tau * frame.tau_L
    else:
        t_x = d.t_X if d.t_X is not None else d.t_X_tau * frame.tau_L
    timing = GateTiming(t_x, gap=d.gap, plateau=d.plateau, compact_y=d.compact_y)
    drive = DriveParams(
        scheme=d.scheme, rel_phase=d.rel_phase, detuning=d.detuning, carrier_phase=d.carrier_phase
    )
    setup = GateSetup(frame, timing, drive, d.mode)
    share = 0.5 if d.scheme == "circular" else 1.0
    amp_c = d.amp_charge
    amp_f = d.amp_flux
    if amp_c is None:
        amp_c = share * analytic_amplitude(eig, setup, "charge") if d.scheme in ("charge", "circular") else 0.0
    if amp_f is None:
        amp_f = share * analytic_amplitude(eig, setup, "flux") if d.scheme in ("flux", "circular") else 0.0
    setup = replace(setup, drive=replace(drive, amp_charge=amp_c, amp_flux=amp_f))
    coherence = None if config.coherence is None else CoherenceParams(*config.coherence)
    return Model(eig, frame, setup, coherence, HardwareErrors(**config.errors))


# ---------------------------------------------------------------- tables


def _csv(header: list[str], rows) -> str:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(repr(float(v)) if isinstance(v, (float, np.floating)) else str(v) for v in row))
    return "\n".join(lines) + "\n"


def _json(data) -> str:
    return json.dumps(data, indent=2, sort_keys=True, default=_jsonable) + "\n"


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, complex):
        return [value.real, value.imag]
    raise TypeError(f"cannot serialize {type(value).__name__}")


# ---------------------------------------------------------------- runners
#
# Each runner returns {file name: text}; the bundle writer persists them.


def run_rabi_phase_sweep(config: ExperimentConfig) -> dict[str, str]:
    """Two-line Rabi drive versus relative phase; rates fitted to the phase law."""
    p = config.params
    model = build_model(replace(config, drive=replace(config.drive, scheme="circular")))
    ratio = p.get("drive_ratio", 0.02)
    g_c, g_f = abs(model.eig.n_elem[0, 1]), abs(model.eig.phi_elem[0, 1])
    # Equal per-line coupling Omega = ratio * omega01 on both lines.
    omega = ratio * model.frame.omega01
    setup = replace(model.setup, drive=replace(model.setup.drive, amp_charge=omega / g_c, amp_flux=omega / g_f))
    result = relative_phase_calibration(
        model.backend(config), setup, phases=p.get("phases", 24), lengths=p.get("points", 16)
    )
    grid = result.sweep
    header = ["rel_phase_deg"] + [f"t_{t:.6g}_ns" for t in grid.x_values]
    table = _csv(header, ([math.degrees(r), *row] for r, row in zip(grid.row_values, grid.populations)))
    rates = result.details["rates"]
    rel = result.details["rel_phase"]
    fitted = rabi_phase_law(rel, result.details["scale"], result.value)
    rate_table = _csv(
        ["rel_phase_deg", "rabi_rate_rad_per_ns", "phase_law_rad_per_ns"],
        ([math.degrees(r), a, b] for r, a, b in zip(rel, rates, fitted)),
    )
    summary = {
        "offset_rad": result.value,
        "max_rate_phase_deg": math.degrees(rel[int(np.argmax(rates))]),
        "min_rate_phase_deg": math.degrees(rel[int(np.argmin(rates))]),
        "relative_residual": result.residual_norm,
        "drive_ratio": ratio,
    }
    return {"rabi_vs_phase.csv": table, "rabi_rates.csv": rate_table, "summary.json": _json(summary)}


def _range_config(config: ExperimentConfig, model: Model) -> RangeConfig:
    p = config.params
    return RangeConfig(
        polarization=p.get("polarization", "flux"),
        angle=p.get("angle_rad", math.pi / 2),
        points=p.get("points", 64),
        eig=model.eig,
    )


def run_rotation_vs_start(config: ExperimentConfig) -> dict[str, str]:
    """Rotation angle of one resonant pulse versus its start time over one Larmor period."""
    model = build_model(config)
    rc = _range_config(config, model)
    tau = model.frame.tau_L
    t_g = config.params.get("t_g_tau", 0.84) * tau
    starts = np.linspace(0.0, tau, rc.points, endpoint=False)
    angles = rotation_vs_start(t_g, starts, rc)
    return {
        "rotation_vs_start.csv": _csv(
            ["start_tau", "start_ns", "rotation_rad"], ([s / tau, s, a] for s, a in zip(starts, angles))
        )
    }


def run_rotation_range(config: ExperimentConfig) -> dict[str, str]:
    """Spread of the rotation angle over start times, for several pulse lengths."""
    model = build_model(config)
    rc = _range_config(config, model)
    tau = model.frame.tau_L
    durations = config.params.get("durations_tau", [1.0, 1.5, 2.0, 3.0])
    ranges = [rotation_range(d * tau, rc) for d in durations]
    return {"rotation_range.csv": _csv(["t_g_tau", "range_rad"], zip(durations, ranges))}


def _calibration_files(report, sweep_prefix: str) -> dict[str, str]:
    files = {"calibration.json": _json(_stable_report(report))}
    for i, r in enumerate(report.results):
        if r.sweep is not None:
            files[f"{sweep_prefix}{i:02d}_{r.parameter}.csv"] = r.sweep.to_csv()
    return files


def _stable_report(report) -> dict:
    """Calibration report without wall-clock fields, so reruns are identical."""
    data = report.to_dict()
    for key in ("started", "finished"):
        data.pop(key, None)
    for step in data["steps"]:
        step.pop("seconds", None)
    return data


def _calibrated(config: ExperimentConfig, model: Model, backend) -> tuple[GateSetup, dict[str, str]]:
    if not config.params.get("calibrate", True):
        return model.setup, {}
    report = run_ladder(backend, model.setup)
    return report.setup, _calibration_files(report, "calibration_sweep_")


def run_calibrate(config: ExperimentConfig) -> dict[str, str]:
    """Full calibration ladder for the configured drive scheme and timing."""
    model = build_model(config)
    return _calibration_files(run_ladder(model.backend(config), model.setup), "sweep_")


def _rb_files(config: ExperimentConfig, executor, model: Model, prefix: str = "") -> tuple[dict[str, str], dict]:
    p = config.params
    lengths = p.get("lengths", list(DEFAULT_LENGTHS))
    seeds = [config.seed * 100_003 + s for s in range(p.get("seeds", 40))]
    mode = p.get("rb_mode", "standard")
    asymptote = p.get("asymptote")
    workers = p.get("workers")
    files: dict[str, str] = {}
    run_mode = "purity" if mode == "purity" else "standard"
    reference = run_rb(executor, lengths, seeds, run_mode, shots=config.shots, rng_seed=config.seed, workers=workers)
    fit = fit_rb(reference, asymptote=asymptote, seed=config.seed)
    files[f"{prefix}rb_dataset.json"] = _json(reference.to_dict())
    files[f"{prefix}rb_curve.csv"] = reference.to_csv()
    summary = {"total": fit.to_dict()}
    if mode == "purity":
        purity = fit_purity(reference, fit, seed=config.seed)
        summary["incoherent"] = purity.to_dict()
    if mode == "interleaved":
        gate = parse_gate(p.get("interleave", "X90"))
        inter = run_rb(executor, lengths, seeds, "interleaved", gate, shots=config.shots, rng_seed=config.seed, workers=workers)
        ifit = fit_rb(inter, asymptote=asymptote, seed=config.seed)
        files[f"{prefix}rb_interleaved_dataset.json"] = _json(inter.to_dict())
        files[f"{prefix}rb_interleaved_curve.csv"] = inter.to_csv()
        res = interleaved_error(fit, ifit)
        summary["interleaved"] = {"gate": gate.kind, **asdict(res), "fit": ifit.to_dict()}
    if model.coherence is not None:
        t_avg = model.setup.timing.t_X + model.frame.tau_L / 4
        summary["coherence_limited_error"] = coherence_limited_error(model.coherence, t_avg)
    return files, summary


def run_rb_experiment(config: ExperimentConfig) -> dict[str, str]:
    """Randomized benchmarking (standard, interleaved or purity) of the calibrated gate set."""
    model = build_model(config)
    backend = model.backend(config)
    setup, files = _calibrated(config, model, backend)
    rb_files, summary = _rb_files(config, PulseExecutor(backend, setup), model)
    files.update(rb_files)
    files["rb_fit.json"] = _json(summary)
    return files


def run_rb_duration_sweep(config: ExperimentConfig) -> dict[str, str]:
    """Error per gate versus gate duration, each duration calibrated separately."""
    durations = config.params.get("durations_tau", [1.0, 1.5, 2.0, 3.0])
    files: dict[str, str] = {}
    rows = []
    for d in durations:
        model = build_model(config, t_X_tau=d)
        backend = model.backend(config)
        setup, cal_files = _calibrated(config, model, backend)
        tag = f"t{d:g}tau_"
        files.update({tag + k: v for k, v in cal_files.items()})
        rb_files, summary = _rb_files(config, PulseExecutor(backend, setup), model, tag)
        files.update(rb_files)
        total = summary["total"]
        limit = summary.get("coherence_limited_error", float("nan"))
        rows.append([d, setup.timing.t_X, total["epsilon_g"], *total["epsilon_g_ci"], limit])
    files["duration_sweep.csv"] = _csv(
        ["t_X_tau", "t_X_ns", "epsilon_g", "epsilon_g_lo", "epsilon_g_hi", "coherence_limited_error"], rows
    )
    return files


def run_trajectory(config: ExperimentConfig) -> dict[str, str]:
    """Rotating-frame Bloch trajectory through a gate sequence."""
    model = build_model(config)
    backend = model.backend(config)
    gates = [parse_gate(g) for g in config.params.get("gates", ["X90"])]
    schedule = model.setup.schedule(gates)
    rate = config.params.get("samples_per_ns", 20.0)
    count = max(2, int(math.ceil(schedule.duration * rate)) + 1)
    times = np.linspace(0.0, schedule.duration, count)
    states = backend.evolver.trajectory(schedule, times)
    rows = []
    for t, s in zip(times, states):
        v = bloch_vector(s)
        rows.append([t, v.x, v.y, v.z])
    return {
        "trajectory.csv": _csv(["t_ns", "x", "y", "z"], rows),
        "schedule.json": _json(schedule_to_dict(schedule)),
    }


@dataclass(frozen=True)
class Experiment:
    name: str
    description: str
    runner: Callable[[ExperimentConfig], dict[str, str]]


REGISTRY: dict[str, Experiment] = {
    e.name: e
    for e in (
        Experiment("rabi-phase-sweep", "Rabi oscillations of a two-line drive versus relative phase", run_rabi_phase_sweep),
        Experiment("rotation-vs-start", "Rotation angle of a resonant pulse versus its start time", run_rotation_vs_start),
        Experiment("rotation-range", "Spread of rotation over start times versus pulse length", run_rotation_range),
        Experiment("calibrate", "Calibration ladder for the configured drive", run_calibrate),
        Experiment("rb", "Randomized benchmarking of the calibrated gate set", run_rb_experiment),
        Experiment("rb-duration-sweep", "Error per gate versus gate duration", run_rb_duration_sweep),
        Experiment("trajectory", "Bloch-vector trajectory through a gate sequence", run_trajectory),
    )
}


def list_experiments() -> list[tuple[str, str]]:
    return [(e.name, e.description) for e in REGISTRY.values()]


# ---------------------------------------------------------------- validation and bundles


def validate(path) -> list[str]:
    """Schema and physics problems of a config file; empty when it is runnable."""
    try:
        config = load_config(path)
    except ConfigError as exc:
        return [str(exc)]
    problems = []
    if config.experiment not in REGISTRY:
        problems.append(f"[experiment] name: unknown experiment {config.experiment!r}")
    tau = None
    try:
        c = config.circuit
        eig = diagonalize(CircuitParams(c.E_C, c.E_L, c.E_J, c.phi_dc, max(c.basis_size, 10)), keep=2)
        tau = qubit_frame(eig).tau_L
    except (ValueError, FluxgatesError) as exc:
        problems.append(f"[circuit]: cannot diagonalize ({exc})")
    problems += physics_problems(config, tau)
    return problems


def output_root(config: ExperimentConfig) -> Path:
    env = os.environ.get(OUTPUT_ROOT_ENV)
    if env:
        return Path(env)
    if config.output_dir:
        base = Path(config.source).parent if config.source else Path.cwd()
        return base / config.output_dir
    return Path.cwd() / "results"


@dataclass
class ResultBundle:
    directory: Path
    files: list[Path]
    manifest: Path


def run(path, *, now: float | None = None) -> ResultBundle:
    """Run the configured experiment and write its bundle.

    Files are written atomically; ``manifest.json`` is written last and lists
    every file with its SHA-256, so an interrupted run never has a manifest
    naming partial output.
    """
    config = load_config(path)
    problems = validate(path)
    if problems:
        raise ConfigError("; ".join(problems))
    experiment = REGISTRY[config.experiment]
    stamp = time.strftime("%Y%m%dT%H%M%S", time.gmtime(now))
    directory = output_root(config) / f"{stamp}_{experiment.name}_{config.digest()}"
    try:
        outputs = experiment.runner(config)
    except ConfigError:
        raise
    except (FluxgatesError, np.linalg.LinAlgError, FloatingPointError) as exc:
        raise BackendError(f"experiment {experiment.name!r} failed: {exc}") from exc
    outputs = {
        "config.json": _json(config.snapshot()),
        "provenance.json": _json(
            {"version": __version__, "timestamp": stamp, "seed": config.seed, "config_sha": config.digest()}
        ),
        **outputs,
    }
    written = []
    for name, text in sorted(outputs.items()):
        written.append(atomic_write_text(directory / name, text))
    manifest = {
        "experiment": experiment.name,
        "files": {p.name: hashlib.sha256(p.read_bytes()).hexdigest() for p in written},
    }
    manifest_path = atomic_write_text(directory / "manifest.json", _json(manifest))
    return ResultBundle(directory, written, manifest_path)
