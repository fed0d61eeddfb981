"""Gate calibration against a simulated measurement backend.

Every step sweeps one drive parameter, measures excited-state populations of
a short pulse train and fits the optimum. Steps return an immutable
``CalibrationResult``; ``apply_result`` folds it into a ``GateSetup``.
"""

from __future__ import annotations

import hashlib
import json
import time
import warnings
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import OptimizeWarning, curve_fit, minimize_scalar

from .circuit import EigenSystem
from .dynamics import (
    CoherenceParams,
    Evolver,
    HardwareErrors,
    average_gate_fidelity,
    average_gate_fidelity_channel,
    line_strengths,
)
from .errors import FitFailure
from .fileio import atomic_write_text
from .pulses import (
    MX90,
    MY90,
    X90,
    X180,
    MX180,
    Y90,
    DrivePulse,
    GateSchedule,
    GateSetup,
    GateSpec,
    envelope_area,
    ideal_unitary,
)

DEFAULT_SHOTS = 2000


class SimulatorBackend:
    """Measurement backend: runs schedules through the dynamics engine.

    ``measure`` returns the probability of not finding the qubit in the
    ground state, optionally with binomial shot noise (``shots > 0``).
    """

    def __init__(
        self,
        eig: EigenSystem,
        *,
        errors: HardwareErrors | None = None,
        decoherence: CoherenceParams | None = None,
        shots: int = 0,
        seed: int | None = None,
        step: float | None = None,
    ):
        if shots < 0:
            raise ValueError("shots must be non-negative")
        self.eig = eig
        self.errors = errors or HardwareErrors()
        self.decoherence = decoherence
        self.shots = shots
        self.seed = seed
        self.rng = np.random.default_rng(seed)
        self.evolver = Evolver(eig, step=step, decoherence=decoherence, errors=self.errors)
        self.n_measurements = 0

    def final_state(self, schedule: GateSchedule) -> np.ndarray:
        return self.evolver.evolve(schedule)

    def ground_population(self, schedule: GateSchedule) -> float:
        state = self.final_state(schedule)
        p0 = abs(state[0]) ** 2 if state.ndim == 1 else state[0, 0].real
        return float(np.clip(p0, 0.0, 1.0))

    def measure(self, schedule: GateSchedule) -> float:
        self.n_measurements += 1
        p1 = 1.0 - self.ground_population(schedule)
        if self.shots:
            return self.rng.binomial(self.shots, p1) / self.shots
        return p1

    def gate_map(self, schedule: GateSchedule) -> np.ndarray:
        return self.evolver.schedule_map(schedule)

    def gate_fidelity(self, schedule: GateSchedule, target: np.ndarray) -> float:
        """Average gate fidelity of a schedule against a 2x2 target, frame phase included."""
        mat = self.gate_map(schedule)
        frame = ideal_unitary(GateSpec.z(schedule.frame_phase))
        target = frame.conj().T @ target
        if self.decoherence is None:
            return average_gate_fidelity(mat, target)
        return average_gate_fidelity_channel(mat, target)

    def describe(self) -> dict:
        return {
            "levels": self.eig.dim,
            "energies_ghz": self.eig.energies.tolist(),
            "errors": asdict(self.errors),
            "decoherence": None if self.decoherence is None else asdict(self.decoherence),
            "shots": self.shots,
            "seed": self.seed,
            "step_ns": self.evolver.step,
        }

    def config_hash(self) -> str:
        blob = json.dumps(self.describe(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


# ---------------------------------------------------------------- data containers


@dataclass(frozen=True)
class SweepGrid:
    """Populations measured on a rectangular grid: one row per train length."""

    x_name: str
    x_values: np.ndarray
    x_units: str
    row_name: str
    row_values: np.ndarray
    populations: np.ndarray
    shots: int = 0
    quantity: str = "p1"

    def __post_init__(self):
        pops = np.atleast_2d(np.asarray(self.populations, dtype=float))
        object.__setattr__(self, "populations", pops)
        object.__setattr__(self, "x_values", np.asarray(self.x_values, dtype=float))
        object.__setattr__(self, "row_values", np.asarray(self.row_values, dtype=float))
        if pops.shape != (self.row_values.size, self.x_values.size):
            raise ValueError("population grid must be rows x columns")
        if np.any(pops < -1e-9) or np.any(pops > 1 + 1e-9):
            raise ValueError("populations must lie in [0, 1]")

    def to_csv(self) -> str:
        lines = [f"{self.row_name},{self.x_name}_{self.x_units},{self.quantity}"]
        for r, row in zip(self.row_values.tolist(), self.populations):
            for x, p in zip(self.x_values.tolist(), row.tolist()):
                lines.append(f"{r!r},{x!r},{p!r}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class CalibrationResult:
    parameter: str
    value: float
    units: str
    uncertainty: float
    residual_norm: float
    iterations: int
    sweep: SweepGrid | None = None
    details: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.uncertainty >= 0:
            raise ValueError("uncertainty must be non-negative")

    def summary(self) -> dict:
        return {
            "parameter": self.parameter,
            "value": self.value,
            "units": self.units,
            "uncertainty": self.uncertainty,
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "details": {k: _jsonable(v) for k, v in self.details.items()},
        }


def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    return value


# ---------------------------------------------------------------- fitting helpers


def _gaussian(x, amp, center, width, offset):
    return amp * np.exp(-((x - center) ** 2) / (2.0 * width**2)) + offset


def _skewed_gaussian(x, amp, center, width, offset, skew):
    # A cubic term about the center keeps the peak at the center.
    u = (x - center) / width
    return amp * np.exp(-0.5 * u**2 * (1.0 + skew * u)) + offset


def gaussian_product_fit(
    grid: SweepGrid | tuple[np.ndarray, np.ndarray], axis: str | None = None, max_residual: float = 0.1
) -> tuple[float, float, dict]:
    """Fit a Gaussian to the product of all rows and return its center.

    ``grid`` is a ``SweepGrid`` or a pair ``(x_values, rows)``. The product of
    rows sharpens the common optimum: for cos-like rows it approaches a
    Gaussian whatever their individual shapes.
    """
    if isinstance(grid, SweepGrid):
        if axis is not None and axis != grid.x_name:
            raise ValueError(f"grid has no axis {axis!r}")
        x, rows = grid.x_values, grid.populations
    else:
        x, rows = grid
    x = np.asarray(x, dtype=float)
    rows = np.atleast_2d(np.asarray(rows, dtype=float))
    product = np.prod(np.clip(rows, 0.0, None), axis=0)
    peak = int(np.argmax(product))
    top, bottom = product[peak], product.min()
    if top <= 0:
        raise FitFailure("row product vanishes everywhere")
    weights = np.clip(product - bottom, 0.0, None)
    spread = np.sqrt(np.sum(weights * (x - x[peak]) ** 2) / np.sum(weights))
    spacing = np.min(np.diff(np.sort(x))) if x.size > 1 else 1.0
    guess = [top - bottom, x[peak], max(spread, spacing), bottom]
    # Noise-free rows leave the covariance undefined; the center error then reads inf.
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", OptimizeWarning)
        try:
            popt, pcov, info, _, _ = curve_fit(_gaussian, x, product, p0=guess, maxfev=20000, full_output=True)
        except (RuntimeError, ValueError) as exc:
            raise FitFailure(f"Gaussian fit did not converge: {exc}") from exc
        # Rows that respond unevenly on the two sides skew the product; refit with
        # a cubic exponent so the skew does not drag the center.
        try:
            skewed, skewed_cov, skewed_info, _, _ = curve_fit(
                _skewed_gaussian, x, product, p0=[*popt, 0.0], maxfev=20000, full_output=True
            )
            if abs(skewed[4]) < 0.5 and np.all(np.isfinite(skewed)):
                popt, pcov, info = skewed, skewed_cov, skewed_info
        except (RuntimeError, ValueError):
            pass
    amp, center, width, offset = popt[:4]
    resid = product - (_skewed_gaussian(x, *popt) if popt.size == 5 else _gaussian(x, *popt))
    rel = float(np.sqrt(np.mean(resid**2)) / max(abs(amp), 1e-300))
    if amp <= 0 or rel > max_residual or not x.min() <= center <= x.max():
        raise FitFailure(f"Gaussian fit rejected (relative residual {rel:.3g}, center {center:.6g})")
    err = float(np.sqrt(abs(pcov[1, 1]))) if np.all(np.isfinite(pcov)) else float("inf")
    diagnostics = {
        "amplitude": float(amp),
        "offset": float(offset),
        "center_err": err,
        "residual_norm": rel,
        "iterations": int(info["nfev"]),
        "product": product,
    }
    return float(center), float(abs(width)), diagnostics


def _r_squared(y, model):
    ss_res = np.sum((y - model) ** 2)
    ss_tot = np.sum((y - np.mean(y)) ** 2)
    return 1.0 - ss_res / ss_tot if ss_tot > 0 else 0.0


def _scan_peak(evaluate, center: float, width: float, points: int, rounds: int = 6, refine: int = 4):
    """Adaptive window around the peak of a row product, then a Gaussian-product fit.

    ``evaluate(x)`` returns the rows measured at ``x``. The window widens when
    the product barely falls off inside it and narrows when the peak covers
    only a few grid points.
    """
    iterations = 0
    for _ in range(rounds):
        x = center + np.linspace(-width, width, points)
        rows = np.atleast_2d(evaluate(x))
        product = np.prod(np.clip(rows, 0.0, None), axis=0)
        top, bottom = product.max(), product.min()
        peak = int(np.argmax(product))
        center = float(x[peak])
        if top <= 0:
            raise FitFailure("row product vanishes on the scan window")
        above = np.count_nonzero(product > bottom + 0.5 * (top - bottom))
        if max(product[0], product[-1]) > 0.8 * top:
            width *= 2.5
            continue
        if above < 7:
            width /= 2.5
            continue
        c, w, diag = gaussian_product_fit((x, rows))
        iterations += diag["iterations"]
        # Skewed rows bias a wide fit; re-center on a window matched to the peak.
        for _ in range(refine):
            x_new = c + np.linspace(-0.4 * w, 0.4 * w, points)
            rows_new = np.atleast_2d(evaluate(x_new))
            try:
                c_new, w_new, diag_new = gaussian_product_fit((x_new, rows_new))
            except FitFailure:
                break
            if not np.isfinite(diag_new["center_err"]):
                break
            iterations += diag_new["iterations"]
            moved = abs(c_new - c)
            x, rows, c, w, diag = x_new, rows_new, c_new, w_new, diag_new
            if moved < 1e-3 * w:
                break
        return x, rows, c, w, dict(diag, iterations=iterations)
    raise FitFailure("could not bracket the optimum of the row product")


# ---------------------------------------------------------------- ladder steps


def _pulse_area(setup: GateSetup) -> float:
    t = setup.timing
    probe = DrivePulse(
        duration=t.pulse_duration,
        plateau=t.plateau,
        rise_fall=t.pulse_duration - t.plateau if t.plateau else 0.0,
    )
    return envelope_area(probe)


def analytic_amplitude(eig: EigenSystem, setup: GateSetup, line: str) -> float:
    """Rotating-wave amplitude for a pi/2 rotation driving a single line."""
    g_c, g_f = line_strengths(eig)
    coupling = g_c if line == "charge" else g_f
    return (np.pi / 2) / (coupling * _pulse_area(setup))


def _measure_all(backend, schedules) -> np.ndarray:
    return np.array([backend.measure(s) for s in schedules])


def rough_amplitude(
    backend: SimulatorBackend,
    setup: GateSetup,
    axis: str = "flux",
    points: int = 41,
    max_scale: float = 1.6,
) -> CalibrationResult:
    """Amplitude of a pi/2 pulse from a two-pulse train swept in amplitude.

    ``axis`` selects the drive line (``charge`` or ``flux``) or ``both`` to
    scale the present two-line drive. The excited population of the train
    follows ``o - r cos(2 k a)``; its first maximum is where each pulse is pi/2.
    """
    if axis == "both":
        base_c, base_f = setup.drive.amp_charge, setup.drive.amp_flux
        guess = 1.0
        make = lambda a: replace(setup.drive, amp_charge=a * base_c, amp_flux=a * base_f)
        parameter, units = "amp_scale", "1"
    elif axis in ("charge", "flux"):
        guess = analytic_amplitude(backend.eig, setup, axis)
        make = lambda a: replace(
            setup.drive,
            scheme=axis,
            amp_charge=a if axis == "charge" else 0.0,
            amp_flux=a if axis == "flux" else 0.0,
        )
        parameter, units = f"amp_{axis}", "rad/ns"
    else:
        raise ValueError(f"unknown axis {axis!r}")
    amps = guess * np.linspace(0.0, max_scale, points)
    schedules = [replace(setup, drive=make(a)).schedule([X90, X90]) for a in amps]
    p1 = _measure_all(backend, schedules)

    model = lambda a, o, r, k: o - r * np.cos(2 * k * a)
    k0 = np.pi / (2 * guess)
    try:
        popt, pcov = curve_fit(model, amps, p1, p0=[0.5, 0.5, k0], maxfev=20000)
    except RuntimeError as exc:
        raise FitFailure(f"cosine fit failed: {exc}") from exc
    r2 = _r_squared(p1, model(amps, *popt))
    if r2 < 0.9 or popt[2] <= 0:
        raise FitFailure(f"cosine fit R^2 = {r2:.3f} below 0.9")
    o, r, k = popt
    if r < 0:
        raise FitFailure("cosine fit inverted")
    value = np.pi / (2 * k)
    sigma_k = np.sqrt(abs(pcov[2, 2])) if np.all(np.isfinite(pcov)) else np.inf
    grid = SweepGrid(parameter, amps, units, "train_length", [2], p1[None, :], backend.shots)
    return CalibrationResult(
        parameter,
        float(value),
        units,
        float(value * sigma_k / k),
        float(1 - r2),
        1,
        grid,
        {"offset": o, "contrast": r, "guess": guess},
    )


def _rabi_rate(lengths: np.ndarray, p1: np.ndarray, rate_max: float) -> float:
    """Angular Rabi rate from resonant populations sin^2(rate * L / 2)."""
    cost = lambda w: np.sum((p1 - np.sin(0.5 * w * lengths) ** 2) ** 2)
    trial = np.linspace(0.0, rate_max, 2001)
    costs = np.array([cost(w) for w in trial])
    best = int(np.argmin(costs))
    lo = trial[max(best - 1, 0)]
    hi = trial[min(best + 1, trial.size - 1)]
    if hi <= lo:
        return float(trial[best])
    res = minimize_scalar(cost, bounds=(lo, hi), method="bounded", options={"xatol": 1e-12})
    return float(res.x)


def rabi_phase_law(rel_phase, scale, offset):
    """Rotating-wave Rabi rate of a two-line drive versus relative phase."""
    return scale * np.sqrt(np.clip((1.0 + np.cos(rel_phase - np.pi / 2 - offset)) / 2.0, 0.0, None))


def relative_phase_calibration(
    backend: SimulatorBackend,
    setup: GateSetup,
    phases: int = 24,
    lengths: int = 16,
    rise_fall: float = 1.0,
    drive_scale: float = 1.0,
    periods: float = 1.2,
) -> CalibrationResult:
    """Offset of the co-rotating relative phase from Rabi rates measured versus phase.

    Each relative phase gets a flat-top Rabi drive of increasing plateau; the
    fitted rates follow ``rabi_phase_law`` whose maximum sits at
    ``pi/2 + offset``.
    """
    drive = setup.drive
    amp_c, amp_f = drive.amp_charge * drive_scale, drive.amp_flux * drive_scale
    g_c, g_f = line_strengths(backend.eig)
    rate_max = 2.0 * max(amp_c * g_c, amp_f * g_f)
    if rate_max <= 0:
        raise ValueError("relative phase calibration needs both lines driven")
    carrier = setup.frame.omega01 if drive.carrier_freq is None else drive.carrier_freq
    period = 2 * np.pi / carrier
    span = periods * 2 * np.pi / rate_max
    plateaus = np.round(np.linspace(0.0, span, lengths) / period) * period
    plateaus = np.unique(plateaus)
    effective = plateaus + 0.5 * rise_fall
    rel_values = np.linspace(0.0, 2 * np.pi, phases, endpoint=False)
    rows = []
    rates = []
    for rel in rel_values:
        traces = []
        for plateau in plateaus:
            pulse = DrivePulse.flat_top(
                plateau,
                rise_fall,
                amp_charge=amp_c,
                amp_flux=amp_f,
                rel_phase=float(rel),
                carrier_freq=carrier,
                carrier_phase=np.pi / 2,
                line_delay=drive.line_delay,
            )
            traces.append(backend.measure(GateSchedule((pulse,))))
        traces = np.array(traces)
        rows.append(traces)
        rates.append(_rabi_rate(effective, traces, 1.3 * rate_max))
    rates = np.array(rates)
    guess_offset = rel_values[int(np.argmax(rates))] - np.pi / 2
    try:
        popt, pcov = curve_fit(rabi_phase_law, rel_values, rates, p0=[rates.max(), guess_offset], maxfev=20000)
    except RuntimeError as exc:
        raise FitFailure(f"relative-phase fit failed: {exc}") from exc
    scale, offset = popt
    offset = float((offset + np.pi) % (2 * np.pi) - np.pi)
    fitted = rabi_phase_law(rel_values, scale, offset)
    residual = float(np.sqrt(np.mean((rates - fitted) ** 2)) / max(abs(scale), 1e-300))
    if residual > 0.05:
        raise FitFailure(f"Rabi rates do not follow the phase law (relative residual {residual:.3g})")
    sigma = float(np.sqrt(abs(pcov[1, 1]))) if np.all(np.isfinite(pcov)) else float("inf")
    grid = SweepGrid("plateau", plateaus, "ns", "rel_phase_rad", rel_values, np.array(rows), backend.shots)
    return CalibrationResult(
        "rel_phase_offset",
        offset,
        "rad",
        sigma,
        residual,
        1,
        grid,
        {"rates": rates, "rel_phase": rel_values, "scale": float(scale), "co_rotating": offset + np.pi / 2},
    )


def relative_delay_calibration(
    backend: SimulatorBackend,
    setup: GateSetup,
    span: float = 1.0,
    points: int = 41,
    counts: Sequence[int] = (1, 3, 5, 7, 9),
) -> CalibrationResult:
    """Flux-line envelope delay that maximizes odd alternating pi trains.

    The trains are played with zero relative phase, where envelope
    misalignment leaves a residual. Beyond the rotating-wave regime the
    counter-rotating part of these trains moves the peak away from exact
    alignment by about ``1 / (2 omega01)`` whatever the pulse length, so a
    line skew shows up as a shift of the result, not as its absolute value.
    """
    drive = setup.drive
    linear = replace(
        drive,
        scheme="circular",
        rel_phase=drive.rel_phase - np.pi / 2,
        amp_charge=drive.amp_charge * np.sqrt(2.0),
        amp_flux=drive.amp_flux * np.sqrt(2.0),
    )

    def rows(delays):
        out = []
        for count in counts:
            train = [X180 if i % 2 == 0 else MX180 for i in range(count)]
            out.append(
                [
                    backend.measure(replace(setup, drive=replace(linear, line_delay=float(d))).schedule(train))
                    for d in delays
                ]
            )
        return np.array(out)

    delays, data, center, width, diag = _scan_peak(rows, drive.line_delay, span, points)
    grid = SweepGrid("line_delay", delays, "ns", "train_length", list(counts), data, backend.shots)
    return CalibrationResult(
        "line_delay",
        center,
        "ns",
        diag["center_err"],
        diag["residual_norm"],
        diag["iterations"],
        grid,
        {"width": width},
    )


def _train_axis(setup: GateSetup) -> str:
    """X trains, except commensurate gates lasting a whole number of Larmor periods use Y."""
    if setup.mode != "commensurate":
        return "X"
    cycles = setup.timing.t_X / setup.frame.tau_L
    return "Y" if abs(cycles - round(cycles)) < 1e-6 else "X"


def detuning_calibration(
    backend: SimulatorBackend,
    setup: GateSetup,
    n_max: int = 5,
    span: float | None = None,
    points: int = 41,
) -> CalibrationResult:
    """Per-pulse detuning from alternating-sign pi/2 trains of length 2n, n = 1..n_max.

    A coarse scan of the shortest train locates the optimum; the adaptive
    scan over all train lengths refines it with the Gaussian-product fit.
    """
    axis = _train_axis(setup)
    pos, neg = (X90, MX90) if axis == "X" else (Y90, MY90)
    if span is None:
        span = 2.0 / setup.timing.pulse_duration
    counts = list(range(1, n_max + 1))

    def rows(deltas, which=counts):
        out = []
        for n in which:
            train = [pos, neg] * n
            out.append(
                [
                    1.0 - backend.measure(replace(setup, drive=replace(setup.drive, detuning=float(d))).schedule(train))
                    for d in deltas
                ]
            )
        return np.array(out)

    coarse = setup.drive.detuning + np.linspace(-span, span, points)
    first = rows(coarse, [1])[0]
    center = float(coarse[int(np.argmax(first))])
    x, data, c, w, diag = _scan_peak(rows, center, span / n_max, points)
    grid = SweepGrid("detuning", x, "rad/ns", "pairs", counts, data, backend.shots, "p0")
    return CalibrationResult(
        "detuning",
        c,
        "rad/ns",
        diag["center_err"],
        diag["residual_norm"],
        diag["iterations"],
        grid,
        {"train_axis": axis, "width": w},
    )


def precise_amplitude(
    backend: SimulatorBackend,
    setup: GateSetup,
    n_max: int = 5,
    span: float = 0.05,
    points: int = 41,
) -> CalibrationResult:
    """Common amplitude correction from pseudo-identity trains of 3n pulses.

    The pulses cycle through X, Y, -X, -Y; every three of them compose to a
    rotation about z, so the ground population is 1 only at the right amplitude.
    """
    cycle = [X90, Y90, MX90, MY90]
    counts = list(range(1, n_max + 1))

    def rows(scales):
        out = []
        for n in counts:
            train = [cycle[i % 4] for i in range(3 * n)]
            row = []
            for s in scales:
                drive = replace(setup.drive, amp_charge=setup.drive.amp_charge * s, amp_flux=setup.drive.amp_flux * s)
                row.append(1.0 - backend.measure(replace(setup, drive=drive).schedule(train)))
            out.append(row)
        return np.array(out)

    x, data, c, w, diag = _scan_peak(rows, 1.0, span, points)
    grid = SweepGrid("amp_scale", x, "1", "triples", counts, data, backend.shots, "p0")
    return CalibrationResult(
        "amp_scale", c, "1", diag["center_err"], diag["residual_norm"], diag["iterations"], grid, {"width": w}
    )


def relative_amplitude_balance(
    backend: SimulatorBackend,
    setup: GateSetup,
    window: float = 0.2,
    points: int = 41,
) -> CalibrationResult:
    """Flux-amplitude factor that nulls a nominally counter-rotating drive.

    The flat-top probe has a plateau three times the gate pulse width and
    ramps as long as one pulse. The excited population is quadratic in the
    imbalance near its minimum.
    """
    drive = setup.drive
    width = setup.timing.pulse_duration
    carrier = setup.frame.omega01 if drive.carrier_freq is None else drive.carrier_freq

    def p1_at(factor):
        pulse = DrivePulse.flat_top(
            3.0 * width,
            width,
            amp_charge=drive.amp_charge,
            amp_flux=drive.amp_flux * factor,
            rel_phase=drive.rel_phase - np.pi,
            carrier_freq=carrier,
            carrier_phase=drive.x_phase,
            detuning=drive.detuning,
            line_delay=drive.line_delay,
        )
        return backend.measure(GateSchedule((pulse,)))

    factors = 1.0 + np.linspace(-window, window, points)
    p1 = np.array([p1_at(f) for f in factors])
    best = int(np.argmin(p1))
    if best in (0, points - 1):
        raise FitFailure("counter-rotating minimum lies on the edge of the flux-amplitude window")
    # Refine on a fine grid around the coarse minimum and fit a parabola.
    step = factors[1] - factors[0]
    fine = factors[best] + np.linspace(-step, step, 15)
    p_fine = np.array([p1_at(f) for f in fine])
    coef, cov = np.polyfit(fine, p_fine, 2, cov=True)
    if coef[0] <= 0:
        raise FitFailure("counter-rotating response is not convex near the minimum")
    vertex = -coef[1] / (2 * coef[0])
    model = np.polyval(coef, fine)
    residual = float(np.sqrt(np.mean((p_fine - model) ** 2)) / max(np.ptp(p_fine), 1e-300))
    jac = np.array([coef[1] / (2 * coef[0] ** 2), -1 / (2 * coef[0]), 0.0])
    sigma = float(np.sqrt(max(jac @ cov @ jac, 0.0)))
    grid = SweepGrid("flux_factor", factors, "1", "probe", [0], p1[None, :], backend.shots)
    return CalibrationResult(
        "flux_factor",
        float(vertex),
        "1",
        sigma,
        residual,
        2,
        grid,
        {"p1_min": float(np.polyval(coef, vertex)), "fine_factors": fine, "fine_p1": p_fine},
    )


def carrier_phase_search(backend: SimulatorBackend, setup: GateSetup, coarse: int = 16) -> CalibrationResult:
    """Global carrier-phase offset maximizing the fidelity of an X then Y pair."""
    target = ideal_unitary(Y90) @ ideal_unitary(X90)

    def infidelity(phi):
        trial = replace(setup, drive=replace(setup.drive, carrier_phase=float(phi)))
        return 1.0 - backend.gate_fidelity(trial.schedule([X90, Y90]), target)

    start = setup.drive.carrier_phase
    grid = start + np.linspace(-np.pi, np.pi, coarse, endpoint=False)
    values = np.array([infidelity(p) for p in grid])
    best = grid[int(np.argmin(values))]
    step = grid[1] - grid[0]
    res = minimize_scalar(
        infidelity, bracket=(best - step, best, best + step), method="golden", options={"xtol": 1e-10}
    )
    phi = float((res.x + np.pi) % (2 * np.pi) - np.pi)
    return CalibrationResult(
        "carrier_phase",
        phi,
        "rad",
        0.0,
        float(res.fun),
        int(res.nit),
        None,
        {"infidelity": float(res.fun)},
    )


# ---------------------------------------------------------------- ladder


def apply_result(setup: GateSetup, result: CalibrationResult) -> GateSetup:
    d = setup.drive
    v = result.value
    updates = {
        "amp_charge": lambda: dict(amp_charge=v),
        "amp_flux": lambda: dict(amp_flux=v),
        "amp_scale": lambda: dict(amp_charge=d.amp_charge * v, amp_flux=d.amp_flux * v),
        "rel_phase_offset": lambda: dict(rel_phase=v + np.pi / 2),
        "line_delay": lambda: dict(line_delay=v),
        "detuning": lambda: dict(detuning=v),
        "flux_factor": lambda: dict(amp_flux=d.amp_flux * v),
        "carrier_phase": lambda: dict(carrier_phase=v),
    }
    if result.parameter not in updates:
        raise ValueError(f"no update rule for {result.parameter!r}")
    return replace(setup, drive=replace(d, **updates[result.parameter]()))


@dataclass
class CalibrationReport:
    setup: GateSetup
    results: list[CalibrationResult]
    backend: dict
    backend_hash: str
    started: str
    finished: str
    timings: list[float]

    def to_dict(self) -> dict:
        return {
            "started": self.started,
            "finished": self.finished,
            "backend": self.backend,
            "backend_hash": self.backend_hash,
            "drive": asdict(self.setup.drive),
            "timing": asdict(self.setup.timing),
            "mode": self.setup.mode,
            "steps": [dict(r.summary(), seconds=t) for r, t in zip(self.results, self.timings)],
        }

    def write_json(self, path) -> Path:
        return atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    def write_sweeps(self, directory) -> list[Path]:
        out = []
        for i, r in enumerate(self.results):
            if r.sweep is not None:
                out.append(atomic_write_text(Path(directory) / f"sweep_{i:02d}_{r.parameter}.csv", r.sweep.to_csv()))
        return out


def _settled(change: float, uncertainty: float) -> bool:
    """A step settled when it moved less than three standard errors; unknown errors never settle."""
    return bool(np.isfinite(uncertainty)) and abs(change) <= max(3 * uncertainty, 1e-9)


def _stamp() -> str:
    return time.strftime("%Y-%m-%dT%H:%M:%S", time.gmtime())


def run_ladder(
    backend: SimulatorBackend,
    setup: GateSetup,
    *,
    optimize_carrier: bool | None = None,
    n_max: int = 5,
    refine_rounds: int = 4,
) -> CalibrationReport:
    """Full calibration in the documented order for the setup's drive scheme.

    Single-line schemes: rough amplitude, detuning, precise amplitude,
    detuning again, precise amplitude again. The circular scheme first
    equalizes the lines, then fixes relative phase, relative delay, detuning
    and the amplitude balance before the precise amplitude. Commensurate
    setups finish by alternating the global carrier-phase search with the
    detuning and precise-amplitude steps for up to ``refine_rounds`` rounds.
    """
    started = _stamp()
    results: list[CalibrationResult] = []
    timings: list[float] = []

    def run(step, *args, **kwargs):
        nonlocal setup
        t0 = time.perf_counter()
        res = step(backend, setup, *args, **kwargs)
        timings.append(time.perf_counter() - t0)
        results.append(res)
        setup = apply_result(setup, res)
        return res

    scheme = setup.drive.scheme
    setup = replace(setup, drive=replace(setup.drive, detuning=0.0, carrier_phase=0.0))
    if scheme in ("flux", "charge"):
        run(rough_amplitude, scheme)
        run(detuning_calibration, n_max)
        run(precise_amplitude, n_max)
        run(detuning_calibration, n_max)
        run(precise_amplitude, n_max)
    else:
        charge = rough_amplitude(backend, setup, "charge")
        flux = rough_amplitude(backend, setup, "flux")
        results += [charge, flux]
        timings += [0.0, 0.0]
        setup = replace(
            setup,
            drive=replace(
                setup.drive, scheme="circular", amp_charge=charge.value / 2, amp_flux=flux.value / 2,
                rel_phase=np.pi / 2, line_delay=0.0,
            ),
        )
        run(relative_phase_calibration)
        run(relative_delay_calibration)
        run(detuning_calibration, n_max)
        run(relative_amplitude_balance)
        run(detuning_calibration, n_max)
        run(precise_amplitude, n_max)
        run(detuning_calibration, n_max)
        run(precise_amplitude, n_max)
    if optimize_carrier is None:
        optimize_carrier = setup.mode == "commensurate"
    if optimize_carrier:
        # Beyond the rotating-wave regime the carrier phase also moves the
        # detuning and amplitude optima, so iterate the three to a fixed point.
        for _ in range(refine_rounds):
            run(carrier_phase_search)
            previous = setup.drive.detuning
            det = run(detuning_calibration, n_max)
            amp = run(precise_amplitude, n_max)
            if _settled(det.value - previous, det.uncertainty) and _settled(amp.value - 1.0, amp.uncertainty):
                break
        run(carrier_phase_search)
    return CalibrationReport(
        setup, results, backend.describe(), backend.config_hash(), started, _stamp(), timings
    )
