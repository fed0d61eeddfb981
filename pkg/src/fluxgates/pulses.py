"""Pulse envelopes, gate compilation onto the commensurate lattice, and export.

A drive pulse puts a cosine-enveloped carrier on the charge line and the same
carrier, shifted by ``-rel_phase``, on the flux line. Times are in ns, angular
frequencies in rad/ns, amplitudes in rad/ns per unit operator element.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, replace
from pathlib import Path
from typing import Iterable

import numpy as np

from .circuit import QubitFrame
from .errors import CommensurabilityViolation, InvalidEnvelope
from .fileio import atomic_write_text

TIMESTAMP_RESOLUTION = 1e-6  # ns
DEFAULT_SAMPLE_RATE = 64.0  # samples per ns


@dataclass(frozen=True)
class DrivePulse:
    """One microwave pulse on the charge and flux lines.

    With ``plateau == 0`` the envelope is a full cosine (Hann) window over
    ``duration``. With ``plateau > 0`` it is a flat top with cosine ramps of
    ``rise_fall / 2`` each, and ``duration`` must equal ``plateau + rise_fall``.
    ``line_delay`` moves the flux-line envelope later by that many ns; the
    flux carrier stays on the absolute clock.
    """

    amp_charge: float = 0.0
    amp_flux: float = 0.0
    rel_phase: float = 0.0
    carrier_freq: float = 0.0
    carrier_phase: float = 0.0
    detuning: float = 0.0
    start: float = 0.0
    duration: float = 1.0
    plateau: float = 0.0
    rise_fall: float = 0.0
    line_delay: float = 0.0

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidEnvelope(f"duration must be positive, got {self.duration}")
        if self.plateau < 0:
            raise InvalidEnvelope(f"plateau must be non-negative, got {self.plateau}")
        if self.rise_fall < 0 or self.rise_fall > self.duration + TIMESTAMP_RESOLUTION:
            raise InvalidEnvelope(
                f"rise_fall {self.rise_fall} must lie in [0, duration={self.duration}]"
            )
        if self.plateau > 0 and abs(self.plateau + self.rise_fall - self.duration) > 1e-9:
            raise InvalidEnvelope("flat-top pulse needs duration == plateau + rise_fall")

    @classmethod
    def flat_top(cls, plateau: float, rise_fall: float, **kwargs) -> "DrivePulse":
        return cls(duration=plateau + rise_fall, plateau=plateau, rise_fall=rise_fall, **kwargs)

    @property
    def end(self) -> float:
        return self.start + self.duration

    @property
    def peak(self) -> float:
        return max(abs(self.amp_charge), abs(self.amp_flux))

    def window(self) -> tuple[float, float]:
        """Time span during which either line is non-zero."""
        spans = []
        if self.amp_charge or not self.amp_flux:
            spans.append((self.start, self.end))
        if self.amp_flux:
            spans.append((self.start + self.line_delay, self.end + self.line_delay))
        return min(s[0] for s in spans), max(s[1] for s in spans)

    def shifted(self, dt: float) -> "DrivePulse":
        return replace(self, start=self.start + dt)


def envelope_shape(pulse: DrivePulse, t) -> np.ndarray:
    """Unit-peak envelope evaluated at absolute times ``t``."""
    tau = np.asarray(t, dtype=float) - pulse.start
    inside = (tau >= 0.0) & (tau <= pulse.duration)
    if pulse.plateau == 0.0:
        shape = 0.5 * (1.0 - np.cos(2.0 * np.pi * tau / pulse.duration))
    else:
        ramp = 0.5 * pulse.rise_fall
        shape = np.ones_like(tau)
        if ramp > 0:
            rising = tau < ramp
            falling = tau > pulse.duration - ramp
            shape = np.where(rising, 0.5 * (1.0 - np.cos(np.pi * tau / ramp)), shape)
            shape = np.where(
                falling, 0.5 * (1.0 - np.cos(np.pi * (pulse.duration - tau) / ramp)), shape
            )
    return np.where(inside, shape, 0.0)


def envelope(pulse: DrivePulse, t) -> np.ndarray:
    """Envelope scaled to the pulse peak amplitude."""
    return pulse.peak * envelope_shape(pulse, t)


def envelope_area(pulse: DrivePulse) -> float:
    """Integral of the unit-peak envelope in ns."""
    if pulse.plateau == 0.0:
        return 0.5 * pulse.duration
    return pulse.plateau + 0.5 * pulse.rise_fall


def waveform(pulse: DrivePulse, t) -> tuple[np.ndarray, np.ndarray]:
    """Charge-line and flux-line drive signals at absolute times ``t``."""
    t = np.asarray(t, dtype=float)
    phase = pulse.carrier_freq * t + pulse.carrier_phase
    charge = np.zeros_like(t)
    flux = np.zeros_like(t)
    if pulse.amp_charge:
        charge = (
            pulse.amp_charge
            * envelope_shape(pulse, t)
            * np.cos(phase - pulse.detuning * (t - pulse.start))
        )
    if pulse.amp_flux:
        delayed = pulse.shifted(pulse.line_delay)
        flux = (
            pulse.amp_flux
            * envelope_shape(delayed, t)
            * np.cos(phase - pulse.detuning * (t - delayed.start) - pulse.rel_phase)
        )
    return charge, flux


# ---------------------------------------------------------------- gates

GATE_KINDS = ("I", "X90", "-X90", "Y90", "-Y90", "X180", "-X180", "Y180", "-Y180", "Z")


@dataclass(frozen=True)
class GateSpec:
    """A native gate label; ``angle`` is only used by virtual ``Z`` gates."""

    kind: str
    angle: float = 0.0

    def __post_init__(self):
        if self.kind not in GATE_KINDS:
            raise ValueError(f"unknown gate kind {self.kind!r}")

    @classmethod
    def z(cls, angle: float) -> "GateSpec":
        return cls("Z", float(angle))

    @property
    def axis(self) -> str | None:
        return self.kind.lstrip("-")[0] if self.kind[-2:] in ("90", "80") else None

    @property
    def sign(self) -> int:
        return -1 if self.kind.startswith("-") else 1

    def __str__(self):
        return f"Z({self.angle:.6g})" if self.kind == "Z" else self.kind


I = GateSpec("I")
X90 = GateSpec("X90")
Y90 = GateSpec("Y90")
MX90 = GateSpec("-X90")
MY90 = GateSpec("-Y90")
X180 = GateSpec("X180")
Y180 = GateSpec("Y180")
MX180 = GateSpec("-X180")
MY180 = GateSpec("-Y180")

_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def rotation(axis: str, angle: float) -> np.ndarray:
    """exp(-i angle/2 sigma_axis)."""
    return math.cos(angle / 2) * np.eye(2) - 1j * math.sin(angle / 2) * _PAULI[axis]


def ideal_unitary(gate: GateSpec) -> np.ndarray:
    if gate.kind == "I":
        return np.eye(2, dtype=complex)
    if gate.kind == "Z":
        return rotation("Z", gate.angle)
    angle = (np.pi / 2 if gate.kind.endswith("90") else np.pi) * gate.sign
    return rotation(gate.axis, angle)


def parse_gate(label: str) -> GateSpec:
    label = label.strip()
    if label.startswith("Z(") and label.endswith(")"):
        return GateSpec.z(float(label[2:-1]))
    return GateSpec(label)


# ---------------------------------------------------------------- lattice


@dataclass(frozen=True)
class CommensurateLattice:
    """Allowed pulse start times: ``offset_x + k*period`` for X-type pulses,
    shifted by half a period for Y-type pulses."""

    period: float
    offset_x: float = 0.0
    resolution: float = TIMESTAMP_RESOLUTION

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("lattice period must be positive")

    @classmethod
    def for_carrier(cls, carrier_freq: float, offset: float = 0.0) -> "CommensurateLattice":
        return cls(np.pi / carrier_freq, offset)

    @property
    def offset_y(self) -> float:
        return self.offset_x + 0.5 * self.period

    def offset(self, axis: str) -> float:
        return self.offset_y if axis == "Y" else self.offset_x

    def contains(self, t: float, axis: str = "X") -> bool:
        k = round((t - self.offset(axis)) / self.period)
        return abs(t - self.offset(axis) - k * self.period) <= self.resolution


def snap_to_lattice(lattice: CommensurateLattice, requested: float, axis: str = "X") -> float:
    """Earliest lattice point of ``axis`` at or after ``requested``."""
    if lattice.contains(requested, axis):
        return requested
    origin = lattice.offset(axis)
    k = math.ceil((requested - origin) / lattice.period)
    return origin + k * lattice.period


# ---------------------------------------------------------------- compiler

# Carrier phase that makes an X pulse rotate about +x. The charge element
# <0|n|1> is negative imaginary, so the charge line needs a quarter turn; a
# flux-only drive cancels the relative phase it is played with.
SCHEME_BASE_PHASE = {"flux": 0.0, "charge": np.pi / 2, "circular": np.pi / 2}


@dataclass(frozen=True)
class DriveParams:
    """Calibrated drive settings shared by all X and Y pulses.

    ``carrier_phase`` is an extra global offset; the scheme adds the phase
    that makes an ``X90`` pulse rotate about +x in the rotating frame.
    """

    scheme: str = "flux"
    amp_charge: float = 0.0
    amp_flux: float = 0.0
    rel_phase: float = np.pi / 2
    detuning: float = 0.0
    carrier_phase: float = 0.0
    line_delay: float = 0.0
    carrier_freq: float | None = None

    def __post_init__(self):
        if self.scheme not in SCHEME_BASE_PHASE:
            raise ValueError(f"unknown drive scheme {self.scheme!r}")

    @property
    def x_phase(self) -> float:
        base = SCHEME_BASE_PHASE[self.scheme]
        if self.scheme == "flux":
            base += self.rel_phase
        return base + self.carrier_phase


@dataclass(frozen=True)
class GateTiming:
    """Gate slot length ``t_X`` and the idle gap included at its end.

    The pulse occupies ``t_X - gap``. A non-zero ``plateau`` gives flat-top
    pulses whose ramps fill the rest of the pulse.
    """

    t_X: float
    gap: float = 0.1
    plateau: float = 0.0
    compact_y: bool = False
    lattice_offset: float = 0.0

    def __post_init__(self):
        if not self.t_X > self.gap >= 0:
            raise InvalidEnvelope("need t_X > gap >= 0")
        if not 0 <= self.plateau < self.t_X - self.gap:
            raise InvalidEnvelope("plateau must be non-negative and shorter than the pulse")

    @property
    def pulse_duration(self) -> float:
        return self.t_X - self.gap


@dataclass(frozen=True)
class GateSchedule:
    """Time-ordered pulses with per-pulse axis labels."""

    pulses: tuple[DrivePulse, ...]
    labels: tuple[str, ...] = ()
    duration: float = 0.0
    frame_phase: float = 0.0
    lattice: CommensurateLattice | None = None
    gap: float = 0.0
    mode: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "pulses", tuple(self.pulses))
        labels = tuple(self.labels) or ("X",) * len(self.pulses)
        if len(labels) != len(self.pulses):
            raise ValueError("one label per pulse is required")
        object.__setattr__(self, "labels", labels)
        end = max((p.window()[1] for p in self.pulses), default=0.0)
        if self.duration < end - TIMESTAMP_RESOLUTION:
            object.__setattr__(self, "duration", end)

    @property
    def axes(self) -> tuple[str, ...]:
        return tuple(label.lstrip("-")[0] for label in self.labels)


def _check_commensurate(t_X: float, period: float):
    ratio = t_X / period
    if abs(t_X - round(ratio) * period) > TIMESTAMP_RESOLUTION or round(ratio) < 1:
        raise CommensurabilityViolation(
            f"t_X={t_X:.9g} ns is not a multiple of the half carrier period {period:.9g} ns"
        )


def compile_gates(
    gates: Iterable[GateSpec],
    mode: str,
    timing: GateTiming,
    frame: QubitFrame,
    drive: DriveParams,
) -> GateSchedule:
    """Turn native gates into a pulse schedule.

    ``mode`` is ``"commensurate"`` (X pulses on the half-period lattice, Y
    pulses shifted by a quarter period) or ``"incommensurate"`` (slots back
    to back). Virtual Z gates shift the carrier phase of later pulses, ``I``
    takes no time and pi rotations become two pi/2 pulses.
    """
    if mode not in ("commensurate", "incommensurate"):
        raise ValueError(f"unknown timing mode {mode!r}")
    carrier = frame.omega01 if drive.carrier_freq is None else drive.carrier_freq
    lattice = None
    if mode == "commensurate":
        lattice = CommensurateLattice.for_carrier(carrier, timing.lattice_offset)
        _check_commensurate(timing.t_X, lattice.period)

    pulse_len = timing.pulse_duration
    base = DrivePulse(
        amp_charge=drive.amp_charge,
        amp_flux=drive.amp_flux,
        rel_phase=drive.rel_phase,
        carrier_freq=carrier,
        detuning=drive.detuning,
        duration=pulse_len,
        plateau=timing.plateau,
        rise_fall=pulse_len - timing.plateau if timing.plateau else 0.0,
        line_delay=drive.line_delay,
    )
    # Azimuth of the rotation axis is minus the carrier phase, so +y needs -pi/2.
    axis_phase = {"X": 0.0, "-X": np.pi, "Y": -np.pi / 2, "-Y": np.pi / 2}

    pulses: list[DrivePulse] = []
    labels: list[str] = []
    frame_phase = 0.0
    cursor = timing.lattice_offset if lattice else 0.0
    prev_axis = None
    prev_start = None
    for gate in gates:
        if gate.kind == "Z":
            frame_phase += gate.angle
            continue
        if gate.kind == "I":
            continue
        key = ("-" if gate.sign < 0 else "") + gate.axis
        for _ in range(2 if gate.kind.endswith("180") else 1):
            if lattice is None:
                start = cursor
                cursor = start + timing.t_X
            else:
                if timing.compact_y and prev_axis is not None:
                    request = prev_start + timing.t_X
                else:
                    request = cursor
                start = snap_to_lattice(lattice, request, gate.axis)
                pad = 0.5 * lattice.period if gate.axis == "Y" else 0.0
                cursor = start + timing.t_X + pad
            phase = drive.x_phase + axis_phase[key] + frame_phase
            pulses.append(replace(base, start=start, carrier_phase=phase))
            labels.append(key)
            prev_axis, prev_start = gate.axis, start
    return GateSchedule(
        tuple(pulses),
        tuple(labels),
        duration=cursor,
        frame_phase=frame_phase,
        lattice=lattice,
        gap=timing.gap,
        mode=mode,
    )


@dataclass(frozen=True)
class Violation:
    index: int
    rule: str
    detail: str


def verify_schedule(schedule: GateSchedule) -> list[Violation]:
    """Check lattice membership, time ordering and minimum gaps."""
    found: list[Violation] = []
    res = TIMESTAMP_RESOLUTION
    for i, (pulse, axis) in enumerate(zip(schedule.pulses, schedule.axes)):
        if schedule.lattice is not None and not schedule.lattice.contains(pulse.start, axis):
            found.append(
                Violation(i, "CommensurabilityViolation", f"{axis} pulse starts at {pulse.start:.9g} ns")
            )
        if i == 0:
            continue
        prev = schedule.pulses[i - 1]
        if pulse.start < prev.end - res:
            found.append(Violation(i, "Ordering", f"starts before pulse {i - 1} ends"))
        elif pulse.start - prev.end < schedule.gap - res:
            found.append(
                Violation(i, "Gap", f"gap {pulse.start - prev.end:.6g} ns below {schedule.gap} ns")
            )
    return found


def schedule_fields(schedule: GateSchedule, t) -> tuple[np.ndarray, np.ndarray]:
    """Summed charge and flux signals of all pulses."""
    t = np.asarray(t, dtype=float)
    charge = np.zeros_like(t)
    flux = np.zeros_like(t)
    for pulse in schedule.pulses:
        lo, hi = pulse.window()
        mask = (t >= lo) & (t <= hi)
        if np.any(mask):
            c, f = waveform(pulse, t[mask])
            charge[mask] += c
            flux[mask] += f
    return charge, flux


# ---------------------------------------------------------------- export


def schedule_to_dict(schedule: GateSchedule) -> dict:
    return {
        "mode": schedule.mode,
        "duration_ns": schedule.duration,
        "frame_phase_rad": schedule.frame_phase,
        "gap_ns": schedule.gap,
        "lattice": None
        if schedule.lattice is None
        else {
            "period_ns": schedule.lattice.period,
            "offset_x_ns": schedule.lattice.offset_x,
            "resolution_ns": schedule.lattice.resolution,
        },
        "pulses": [dict(asdict(p), label=lab) for p, lab in zip(schedule.pulses, schedule.labels)],
    }


def schedule_from_dict(data: dict) -> GateSchedule:
    lat = data.get("lattice")
    lattice = None
    if lat:
        lattice = CommensurateLattice(lat["period_ns"], lat["offset_x_ns"], lat["resolution_ns"])
    pulses, labels = [], []
    for entry in data["pulses"]:
        entry = dict(entry)
        labels.append(entry.pop("label", "X"))
        pulses.append(DrivePulse(**entry))
    return GateSchedule(
        tuple(pulses),
        tuple(labels),
        duration=data["duration_ns"],
        frame_phase=data.get("frame_phase_rad", 0.0),
        lattice=lattice,
        gap=data.get("gap_ns", 0.0),
        mode=data.get("mode", "custom"),
    )


def write_schedule_json(schedule: GateSchedule, path) -> Path:
    return atomic_write_text(path, json.dumps(schedule_to_dict(schedule), indent=2) + "\n")


def read_schedule_json(path) -> GateSchedule:
    return schedule_from_dict(json.loads(Path(path).read_text()))


def write_waveform_csv(schedule: GateSchedule, stem, rate: float = DEFAULT_SAMPLE_RATE) -> list[Path]:
    """Sample both drive lines and write ``<stem>_charge.csv`` and ``<stem>_flux.csv``."""
    stem = Path(stem)
    n = int(math.ceil(schedule.duration * rate)) + 1
    t = np.arange(n) / rate
    charge, flux = schedule_fields(schedule, t)
    written = []
    for name, values in (("charge", charge), ("flux", flux)):
        lines = ["t_ns,amplitude_rad_per_ns"]
        lines += [f"{ti!r},{vi!r}" for ti, vi in zip(t.tolist(), values.tolist())]
        written.append(atomic_write_text(stem.parent / f"{stem.name}_{name}.csv", "\n".join(lines) + "\n"))
    return written


def read_waveform_csv(path) -> tuple[np.ndarray, np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    data = np.array(rows, dtype=float)
    return data[:, 0], data[:, 1]


@dataclass(frozen=True)
class GateSetup:
    """Everything needed to compile native gates: frame, timing, drive and mode."""

    frame: QubitFrame
    timing: GateTiming
    drive: DriveParams
    mode: str = "commensurate"

    def schedule(self, gates: Iterable[GateSpec]) -> GateSchedule:
        return compile_gates(gates, self.mode, self.timing, self.frame, self.drive)
