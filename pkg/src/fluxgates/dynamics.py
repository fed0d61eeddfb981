"""Time evolution of a driven qubit model, with optional Lindblad decoherence.

The drive is integrated in the interaction picture of the static Hamiltonian
with a fourth-order Magnus step (two Gauss-Legendre nodes per step). Pulse
clusters are propagated once and cached as rotating-frame maps keyed by their
start time modulo the carrier period, so long sequences reuse them. Idle time
between clusters is exact.

Maps are unitaries (d x d) for closed systems and row-major superoperators
(d^2 x d^2) when decoherence is enabled.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np
import scipy.linalg as sla

from .circuit import DEVICE_PARAMS, EigenSystem, diagonalize, two_level_system
from .errors import StepTooCoarse
from .pulses import DrivePulse, GateSchedule, envelope_area, waveform

CERTIFY_TOL = 1e-9
_KEY_DIGITS = 9
_GL_OFFSET = np.sqrt(3.0) / 6.0


@dataclass(frozen=True)
class CoherenceParams:
    """Energy relaxation time and echo dephasing time of the 0-1 transition, in ns."""

    T1: float
    T2E: float

    def __post_init__(self):
        if not (self.T1 > 0 and self.T2E > 0):
            raise ValueError("T1 and T2E must be positive")
        if self.T2E > 2 * self.T1 * (1 + 1e-12):
            raise ValueError("T2E cannot exceed 2*T1")

    @property
    def gamma1(self) -> float:
        return 1.0 / self.T1

    @property
    def gamma_phi(self) -> float:
        """Pure dephasing rate 1/T2E - 1/(2 T1)."""
        return max(0.0, 1.0 / self.T2E - 0.5 / self.T1)


@dataclass(frozen=True)
class HardwareErrors:
    """Imperfections of the simulated hardware, unknown to the calibration.

    ``amplitude_error`` scales both lines, ``flux_gain_error`` the flux line
    only. ``line_skew`` delays the whole flux waveform (ns). ``freq_offset``
    moves the qubit frequency up permanently and ``stark_shift`` moves it down
    while a pulse is playing (both rad/ns).
    """

    amplitude_error: float = 0.0
    flux_gain_error: float = 0.0
    line_skew: float = 0.0
    freq_offset: float = 0.0
    stark_shift: float = 0.0

    def apply(self, pulse: DrivePulse) -> DrivePulse:
        scale = 1.0 + self.amplitude_error
        return replace(
            pulse,
            amp_charge=pulse.amp_charge * scale,
            amp_flux=pulse.amp_flux * scale * (1.0 + self.flux_gain_error),
            line_delay=pulse.line_delay + self.line_skew,
            rel_phase=pulse.rel_phase + pulse.carrier_freq * self.line_skew,
        )

    @property
    def is_trivial(self) -> bool:
        return self == HardwareErrors()


# ---------------------------------------------------------------- linear algebra


def _expm_hermitian_batch(gen: np.ndarray) -> np.ndarray:
    """exp(-i K) for a batch of Hermitian matrices K."""
    d = gen.shape[-1]
    if d == 2:
        a0 = 0.5 * (gen[:, 0, 0] + gen[:, 1, 1]).real
        az = 0.5 * (gen[:, 0, 0] - gen[:, 1, 1]).real
        ax = gen[:, 1, 0].real
        ay = gen[:, 1, 0].imag
        norm = np.sqrt(ax * ax + ay * ay + az * az)
        c = np.cos(norm)
        s = np.sinc(norm / np.pi)  # sin(norm)/norm
        out = np.empty_like(gen)
        out[:, 0, 0] = c - 1j * s * az
        out[:, 1, 1] = c + 1j * s * az
        out[:, 0, 1] = -1j * s * (ax - 1j * ay)
        out[:, 1, 0] = -1j * s * (ax + 1j * ay)
        return out * np.exp(-1j * a0)[:, None, None]
    evals, evecs = np.linalg.eigh(gen)
    return np.einsum("nij,nj,nkj->nik", evecs, np.exp(-1j * evals), evecs.conj())


def ordered_product(mats: np.ndarray) -> np.ndarray:
    """mats[n-1] @ ... @ mats[0] by pairwise reduction."""
    mats = np.asarray(mats)
    while mats.shape[0] > 1:
        if mats.shape[0] % 2:
            tail = mats[-1:]
            paired = mats[1:-1:2] @ mats[0:-1:2]
            mats = np.concatenate([paired, tail])
        else:
            mats = mats[1::2] @ mats[0::2]
    return mats[0]


def unitary_superop(u: np.ndarray) -> np.ndarray:
    """Row-major superoperator of rho -> u rho u^dagger (batched over leading axes)."""
    d = u.shape[-1]
    sup = u[..., :, None, :, None] * u.conj()[..., None, :, None, :]
    return sup.reshape(u.shape[:-2] + (d * d, d * d))


def apply_superop(sup: np.ndarray, rho: np.ndarray) -> np.ndarray:
    d = rho.shape[-1]
    return (sup @ rho.reshape(d * d)).reshape(d, d)


def dissipator(dim: int, coherence: CoherenceParams) -> np.ndarray:
    """Lindblad generator for decay and dephasing of the 0-1 transition."""
    eye = np.eye(dim)
    ops = []
    lower = np.zeros((dim, dim), complex)
    lower[0, 1] = 1.0
    ops.append(np.sqrt(coherence.gamma1) * lower)
    sz = np.zeros((dim, dim), complex)
    sz[0, 0], sz[1, 1] = 1.0, -1.0
    ops.append(np.sqrt(0.5 * coherence.gamma_phi) * sz)
    gen = np.zeros((dim * dim, dim * dim), complex)
    for op in ops:
        ldl = op.conj().T @ op
        gen += np.kron(op, op.conj()) - 0.5 * np.kron(ldl, eye) - 0.5 * np.kron(eye, ldl.T)
    return gen


# ---------------------------------------------------------------- fidelities and frames


def average_gate_fidelity(actual: np.ndarray, target: np.ndarray) -> float:
    """Average gate fidelity of a unitary against a 2x2 target on the 0-1 subspace.

    Population leaking out of the subspace counts as error.
    """
    block = np.asarray(target).conj().T @ np.asarray(actual)[:2, :2]
    return float((abs(np.trace(block)) ** 2 + np.trace(block @ block.conj().T).real) / 6.0)


_CARDINAL = [
    np.array([1, 0], complex),
    np.array([0, 1], complex),
    np.array([1, 1], complex) / np.sqrt(2),
    np.array([1, -1], complex) / np.sqrt(2),
    np.array([1, 1j], complex) / np.sqrt(2),
    np.array([1, -1j], complex) / np.sqrt(2),
]


def average_gate_fidelity_channel(sup: np.ndarray, target: np.ndarray) -> float:
    """Average gate fidelity of a superoperator, averaged over the six cardinal states."""
    dim = int(round(np.sqrt(sup.shape[0])))
    total = 0.0
    for psi2 in _CARDINAL:
        psi = np.zeros(dim, complex)
        psi[:2] = psi2
        out = apply_superop(sup, np.outer(psi, psi.conj()))
        ideal = np.zeros(dim, complex)
        ideal[:2] = target @ psi2
        total += (ideal.conj() @ out @ ideal).real
    return total / 6.0


def state_fidelity(rho: np.ndarray, sigma: np.ndarray) -> float:
    """Uhlmann fidelity; either argument may be a ket."""
    if rho.ndim == 1 and sigma.ndim == 1:
        return float(abs(np.vdot(rho, sigma)) ** 2)
    if rho.ndim == 1:
        return float((rho.conj() @ sigma @ rho).real)
    if sigma.ndim == 1:
        return float((sigma.conj() @ rho @ sigma).real)
    evals, evecs = np.linalg.eigh(0.5 * (rho + rho.conj().T))
    root = (evecs * np.sqrt(np.clip(evals, 0, None))) @ evecs.conj().T
    inner = root @ sigma @ root
    ev = np.linalg.eigvalsh(0.5 * (inner + inner.conj().T))
    return float(np.sum(np.sqrt(np.clip(ev, 0, None))) ** 2)


def frame_operator(dim: int, omega: float, t: float, sense: str = "co") -> np.ndarray:
    """Diagonal rotating-frame transform exp(+-i omega t N) on the harmonic ladder."""
    sign = {"co": 1.0, "counter": -1.0}[sense]
    return np.diag(np.exp(1j * sign * omega * t * np.arange(dim)))


def to_rotating_frame(obj, omega: float, t: float, t0: float | None = None, sense: str = "co"):
    """Move a ket, density matrix or propagator into the rotating frame.

    A 1-D input is a ket at time ``t``; a 2-D input is a density matrix at
    ``t`` unless ``t0`` is given, in which case it is a propagator from ``t0``
    to ``t``.
    """
    obj = np.asarray(obj)
    dim = obj.shape[0]
    rot = frame_operator(dim, omega, t, sense)
    if obj.ndim == 1:
        return rot @ obj
    if t0 is None:
        return rot @ obj @ rot.conj().T
    return rot @ obj @ frame_operator(dim, omega, t0, sense).conj().T


@dataclass(frozen=True)
class BlochVector:
    x: float
    y: float
    z: float

    @property
    def purity(self) -> float:
        return self.x**2 + self.y**2 + self.z**2

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def bloch_vector(state) -> BlochVector:
    """Bloch vector of the 0-1 block of a ket or density matrix."""
    state = np.asarray(state)
    rho = np.outer(state, state.conj()) if state.ndim == 1 else state
    return BlochVector(
        float(2 * rho[0, 1].real), float(-2 * rho[0, 1].imag), float((rho[0, 0] - rho[1, 1]).real)
    )


def rotation_angle(state) -> float:
    """Polar angle of the Bloch vector, i.e. rotation away from the ground state."""
    return float(np.arccos(np.clip(bloch_vector(state).z, -1.0, 1.0)))


def coherence_limited_error(coherence: CoherenceParams, duration: float) -> float:
    """Average gate infidelity of idling for ``duration`` ns under the Lindblad model."""
    sup = sla.expm(dissipator(2, coherence) * duration)
    return 1.0 - average_gate_fidelity_channel(sup, np.eye(2))


# ---------------------------------------------------------------- evolver


def default_step(eig: EigenSystem) -> float:
    """Magnus step: a 256th of the Larmor period, finer when fast transitions are present."""
    tau_L = 2 * np.pi / eig.omega01
    fastest = eig.angular_energies[-1]
    return min(tau_L / 256.0, 2 * np.pi / fastest / 40.0)


def _representative(t: float, period: float | None) -> float:
    if period is None:
        return round(t, _KEY_DIGITS)
    return round(t - np.floor(t / period) * period, _KEY_DIGITS)


class Evolver:
    """Propagates pulse schedules for one qubit model and one set of hardware errors.

    All maps are expressed in the rotating frame of the harmonic ladder at
    ``omega_frame`` (default: the qubit frequency), which is where gate
    fidelities are evaluated.
    """

    def __init__(
        self,
        eig: EigenSystem,
        *,
        omega_frame: float | None = None,
        step: float | None = None,
        decoherence: CoherenceParams | None = None,
        errors: HardwareErrors | None = None,
        certify: bool = True,
        method: str = "magnus4",
    ):
        if method not in ("magnus4", "midpoint"):
            raise ValueError(f"unknown integration method {method!r}")
        self.eig = eig
        self.dim = eig.dim
        self.omega_frame = eig.omega01 if omega_frame is None else omega_frame
        self.step = default_step(eig) if step is None else step
        self.decoherence = decoherence
        self.errors = errors or HardwareErrors()
        self.certify = certify
        self.method = method
        self._levels = eig.angular_energies
        self._frame_rates = self.omega_frame * np.arange(self.dim) - self._levels
        self._static = np.zeros(self.dim)
        self._static[1] = self.errors.freq_offset
        self._stark = np.zeros(self.dim)
        self._stark[1] = -self.errors.stark_shift
        self._lindblad = None if decoherence is None else dissipator(self.dim, decoherence)
        self._cache: dict = {}
        self._idle_cache: dict = {}
        self.stats = {"clusters": 0, "cache_hits": 0, "certifications": 0}

    # -- Hamiltonian pieces -------------------------------------------------

    def _interaction_hamiltonian(self, pulses: Sequence[DrivePulse], times: np.ndarray) -> np.ndarray:
        charge = np.zeros_like(times)
        flux = np.zeros_like(times)
        stark_on = np.zeros(times.shape, dtype=bool)
        for p in pulses:
            c, f = waveform(p, times)
            charge += c
            flux += f
            stark_on |= (times >= p.start) & (times <= p.end)
        phases = np.exp(1j * np.outer(times, self._levels))
        ham = charge[:, None, None] * self.eig.n_elem + flux[:, None, None] * self.eig.phi_elem
        ham = ham * phases[:, :, None] * phases.conj()[:, None, :]
        diag = self._static[None, :] + stark_on[:, None] * self._stark[None, :]
        idx = np.arange(self.dim)
        ham[:, idx, idx] += diag
        return ham

    def _step_generators(self, pulses, lo: float, n: int) -> np.ndarray:
        h = self._h
        starts = lo + h * np.arange(n)
        if self.method == "midpoint":
            return h * self._interaction_hamiltonian(pulses, starts + 0.5 * h)
        h1 = self._interaction_hamiltonian(pulses, starts + (0.5 - _GL_OFFSET) * h)
        h2 = self._interaction_hamiltonian(pulses, starts + (0.5 + _GL_OFFSET) * h)
        comm = h2 @ h1 - h1 @ h2
        return 0.5 * h * (h1 + h2) - 1j * (np.sqrt(3.0) / 12.0) * h * h * comm

    def _interaction_map(self, pulses, lo: float, hi: float, n: int) -> np.ndarray:
        self._h = (hi - lo) / n
        chunk = 4096
        total = None
        for first in range(0, n, chunk):
            count = min(chunk, n - first)
            gens = self._step_generators(pulses, lo + first * self._h, count)
            steps = _expm_hermitian_batch(gens)
            if self._lindblad is None:
                part = ordered_product(steps)
            else:
                part = self._dissipative_product(steps)
            total = part if total is None else part @ total
        if self._lindblad is not None:
            half = sla.expm(self._lindblad * 0.5 * self._h)
            inv_half = sla.expm(-self._lindblad * 0.5 * self._h)
            # Strang splitting: half dissipator at both ends, full between steps.
            total = inv_half @ total @ half
        return total

    def _dissipative_product(self, steps: np.ndarray) -> np.ndarray:
        full = sla.expm(self._lindblad * self._h)
        return ordered_product(full[None] @ unitary_superop(steps))

    def _to_frame(self, mat: np.ndarray, lo: float, hi: float) -> np.ndarray:
        left = np.exp(1j * self._frame_rates * hi)
        right = np.exp(-1j * self._frame_rates * lo)
        if self._lindblad is None:
            return left[:, None] * mat * right[None, :]
        lsup = np.kron(left, left.conj())
        rsup = np.kron(right, right.conj())
        return lsup[:, None] * mat * rsup[None, :]

    def _map_difference(self, a: np.ndarray, b: np.ndarray) -> float:
        if self._lindblad is None:
            overlap = abs(np.trace(a.conj().T @ b)) / self.dim
            return 1.0 - overlap**2
        worst = 0.0
        for psi2 in _CARDINAL:
            psi = np.zeros(self.dim, complex)
            psi[:2] = psi2
            rho = np.outer(psi, psi.conj())
            fa, fb = apply_superop(a, rho), apply_superop(b, rho)
            worst = max(worst, 1.0 - state_fidelity(fa, fb))
        return worst

    # -- cluster maps -------------------------------------------------------

    def _carrier_period(self, pulses) -> float | None:
        freqs = {p.carrier_freq for p in pulses}
        if len(freqs) == 1:
            (freq,) = freqs
            if freq > 0 and abs(freq - self.omega_frame) <= 1e-12 * freq:
                return 2 * np.pi / freq
        return None

    def cluster_map(self, pulses: Sequence[DrivePulse]) -> tuple[np.ndarray, float, float]:
        """Rotating-frame map over the joint window of overlapping pulses."""
        pulses = [self.errors.apply(p) for p in pulses]
        lo = min(p.window()[0] for p in pulses)
        hi = max(p.window()[1] for p in pulses)
        period = self._carrier_period(pulses)
        ref = _representative(lo, period)
        shift = ref - lo
        local = tuple(replace(p, start=round(p.start + shift, _KEY_DIGITS)) for p in pulses)
        key = (local, round(hi - lo, _KEY_DIGITS))
        cached = self._cache.get(key)
        if cached is not None:
            self.stats["cache_hits"] += 1
            return cached, lo, hi
        lo_l = min(p.window()[0] for p in local)
        hi_l = max(p.window()[1] for p in local)
        mat = self._propagate_window(local, lo_l, hi_l)
        self._cache[key] = mat
        self.stats["clusters"] += 1
        return mat, lo, hi

    def _propagate_window(self, pulses, lo: float, hi: float, periodic: bool = True) -> np.ndarray:
        if periodic:
            fast = self._periodic_plateau(pulses, lo, hi)
            if fast is not None:
                return fast
        n = max(2, int(np.ceil((hi - lo) / self.step - 1e-9)))
        mat = self._to_frame(self._interaction_map(pulses, lo, hi, n), lo, hi)
        if self.certify:
            self.stats["certifications"] += 1
            fine = self._to_frame(self._interaction_map(pulses, lo, hi, 2 * n), lo, hi)
            change = self._map_difference(mat, fine)
            if change > CERTIFY_TOL:
                raise StepTooCoarse(
                    f"halving the step from {(hi - lo) / n:.3e} ns changed the result by {change:.2e}"
                )
            mat = fine
        return mat

    def _periodic_plateau(self, pulses, lo: float, hi: float):
        """Flat tops without detuning repeat every carrier period in the rotating frame."""
        if len(pulses) != 1:
            return None
        p = pulses[0]
        period = self._carrier_period(pulses)
        if period is None or p.plateau <= 0 or p.detuning != 0.0 or p.line_delay != 0.0:
            return None
        if self.errors.stark_shift:
            return None
        ramp = 0.5 * p.rise_fall
        cycles = int(np.floor(p.plateau / period))
        if cycles < 4:
            return None
        rise_end = p.start + ramp
        flat_end = rise_end + cycles * period
        one = self._propagate_window([p], rise_end, rise_end + period, periodic=False)
        head = self._propagate_window([p], p.start, rise_end, False) if ramp > 0 else None
        tail = self._propagate_window([p], flat_end, hi, False) if hi - flat_end > 1e-12 else None
        body = np.linalg.matrix_power(one, cycles)
        out = body @ head if head is not None else body
        return tail @ out if tail is not None else out

    def idle_map(self, duration: float) -> np.ndarray:
        key = round(duration, _KEY_DIGITS)
        cached = self._idle_cache.get(key)
        if cached is not None:
            return cached
        phases = np.exp(1j * (self._frame_rates - self._static) * duration)
        if self._lindblad is None:
            mat = np.diag(phases)
        else:
            mat = np.diag(np.kron(phases, phases.conj())) @ sla.expm(self._lindblad * duration)
        self._idle_cache[key] = mat
        return mat

    # -- schedules ----------------------------------------------------------

    def clusters(self, schedule: GateSchedule) -> list[list[DrivePulse]]:
        """Group pulses whose (error-affected) windows overlap."""
        pulses = sorted(schedule.pulses, key=lambda p: self.errors.apply(p).window()[0])
        groups: list[list[DrivePulse]] = []
        end = -np.inf
        for p in pulses:
            lo, hi = self.errors.apply(p).window()
            if groups and lo < end:
                groups[-1].append(p)
                end = max(end, hi)
            else:
                groups.append([p])
                end = hi
        return groups

    def segments(self, schedule: GateSchedule, t_start: float = 0.0, t_end: float | None = None):
        """Yield (map, t0, t1) pieces covering [t_start, t_end] in time order."""
        t = t_start
        for group in self.clusters(schedule):
            mat, lo, hi = self.cluster_map(group)
            if lo < t - 1e-9:
                raise ValueError("schedule has a pulse before the start time")
            if lo > t:
                yield self.idle_map(lo - t), t, lo
            yield mat, lo, hi
            t = hi
        end = schedule.duration if t_end is None else t_end
        if end > t:
            yield self.idle_map(end - t), t, end

    def start_time(self, schedule: GateSchedule) -> float:
        """Zero, or earlier when a delayed line plays before the nominal start."""
        first = min((self.errors.apply(p).window()[0] for p in schedule.pulses), default=0.0)
        return min(0.0, first)

    def end_time(self, schedule: GateSchedule) -> float:
        last = max((self.errors.apply(p).window()[1] for p in schedule.pulses), default=0.0)
        return max(schedule.duration, last)

    def schedule_map(self, schedule: GateSchedule) -> np.ndarray:
        """Rotating-frame map over the whole schedule, from t=0 or the earliest window."""
        size = self.dim if self._lindblad is None else self.dim**2
        total = np.eye(size, dtype=complex)
        for mat, _, _ in self.segments(schedule, self.start_time(schedule), self.end_time(schedule)):
            total = mat @ total
        return total

    def evolve(self, schedule: GateSchedule, initial=None) -> np.ndarray:
        """Final rotating-frame state; a density matrix when decoherence is on."""
        state = self._initial(initial)
        for mat, _, _ in self.segments(schedule, self.start_time(schedule), self.end_time(schedule)):
            state = self._apply(mat, state)
        return self._output(state)

    def _initial(self, initial):
        if initial is None:
            initial = np.zeros(self.dim, complex)
            initial[0] = 1.0
        initial = np.asarray(initial, dtype=complex)
        if self._lindblad is None:
            if initial.ndim != 1:
                raise ValueError("closed-system evolution takes a ket")
            return initial
        rho = np.outer(initial, initial.conj()) if initial.ndim == 1 else initial
        return rho.reshape(-1)

    def _apply(self, mat, state):
        return mat @ state

    def _output(self, state):
        if self._lindblad is None:
            return state
        return state.reshape(self.dim, self.dim)

    def trajectory(self, schedule: GateSchedule, times: Sequence[float], initial=None) -> list:
        """Rotating-frame states at the requested (ascending) times."""
        times = np.asarray(times, dtype=float)
        if np.any(np.diff(times) < 0):
            raise ValueError("times must be ascending")
        state = self._initial(initial)
        out = []
        t = 0.0
        pending = list(times)
        pulses = sorted(schedule.pulses, key=lambda p: p.start)
        # Split the schedule into sub-windows between sample points and propagate each.
        for sample in pending:
            if sample < t - 1e-12:
                raise ValueError("sample times must not precede t=0")
            if sample > t:
                state = self._apply(self._window_map(pulses, t, sample), state)
                t = sample
            out.append(self._output(state.copy()))
        return out

    def _window_map(self, pulses, lo: float, hi: float) -> np.ndarray:
        active = []
        for p in pulses:
            p_err = self.errors.apply(p)
            w_lo, w_hi = p_err.window()
            if w_hi > lo and w_lo < hi:
                active.append(p_err)
        if not active:
            return self.idle_map(hi - lo)
        n = max(2, int(np.ceil((hi - lo) / self.step - 1e-9)))
        return self._to_frame(self._interaction_map(active, lo, hi, n), lo, hi)


@dataclass
class PropagationResult:
    """Final lab-frame state and, for closed systems, the lab-frame propagator."""

    state: np.ndarray
    unitary: np.ndarray | None
    t_final: float
    omega_frame: float

    def rotating_state(self) -> np.ndarray:
        return to_rotating_frame(self.state, self.omega_frame, self.t_final)

    def rotating_unitary(self) -> np.ndarray | None:
        if self.unitary is None:
            return None
        return to_rotating_frame(self.unitary, self.omega_frame, self.t_final, 0.0)


def propagate(
    eig: EigenSystem,
    schedule: GateSchedule,
    initial,
    step: float | None = None,
    decoherence: CoherenceParams | None = None,
    *,
    errors: HardwareErrors | None = None,
    certify: bool = True,
    method: str = "magnus4",
) -> PropagationResult:
    """Propagate ``initial`` through ``schedule`` and return lab-frame results."""
    evolver = Evolver(
        eig, step=step, decoherence=decoherence, errors=errors, certify=certify, method=method
    )
    t_final = evolver.end_time(schedule)
    omega = evolver.omega_frame
    back = frame_operator(eig.dim, omega, t_final).conj().T
    initial = np.asarray(initial, dtype=complex)
    if decoherence is None:
        mat = evolver.schedule_map(schedule)
        unitary = back @ mat
        if initial.ndim == 1:
            state = unitary @ initial
        else:
            state = unitary @ initial @ unitary.conj().T
        return PropagationResult(state, unitary, t_final, omega)
    rho = evolver.evolve(schedule, initial)
    return PropagationResult(back @ rho @ back.conj().T, None, t_final, omega)


# ---------------------------------------------------------------- resonant test drives

POLARIZATIONS = {
    "flux": None,
    "charge": None,
    "linear": 0.0,
    "co-rotating": np.pi / 2,
    "counter-rotating": -np.pi / 2,
}


def line_strengths(eig: EigenSystem) -> tuple[float, float]:
    """|<0|n|1>| and |<0|phi|1>|: the coupling per unit amplitude of each line."""
    return float(abs(eig.n_elem[0, 1])), float(abs(eig.phi_elem[0, 1]))


def resonant_pulse(
    eig: EigenSystem,
    duration: float,
    polarization: str = "flux",
    angle: float = np.pi / 2,
    start: float = 0.0,
    plateau: float = 0.0,
    rise_fall: float = 0.0,
) -> DrivePulse:
    """Resonant X pulse whose rotating-wave rotation angle is ``angle``.

    Two-line polarizations use equal per-line coupling; the counter-rotating
    drive gets the per-line strength of the co-rotating one.
    """
    if polarization not in POLARIZATIONS:
        raise ValueError(f"unknown polarization {polarization!r}")
    g_c, g_f = line_strengths(eig)
    probe = DrivePulse(duration=duration, plateau=plateau, rise_fall=rise_fall)
    area = envelope_area(probe)
    omega = eig.omega01
    if polarization == "flux":
        amp = angle / (g_f * area)
        return replace(probe, amp_flux=amp, carrier_freq=omega, start=start)
    if polarization == "charge":
        amp = angle / (g_c * area)
        return replace(probe, amp_charge=amp, carrier_freq=omega, carrier_phase=np.pi / 2, start=start)
    rel = POLARIZATIONS[polarization]
    factor = 2.0 * abs(np.cos((rel - np.pi / 2) / 2.0))
    if factor < 1e-9:
        factor = 2.0
    coupling = angle / (factor * area)
    return replace(
        probe,
        amp_charge=coupling / g_c,
        amp_flux=coupling / g_f,
        rel_phase=rel,
        carrier_freq=omega,
        carrier_phase=np.pi / 2,
        start=start,
    )


def device_two_level() -> EigenSystem:
    """Two-level model at the device qubit frequency with unit line strengths."""
    return two_level_system(diagonalize(DEVICE_PARAMS, keep=2).energies[1])


@dataclass(frozen=True)
class RangeConfig:
    """Drive used by ``rotation_range``: a resonant X pulse of the given polarization."""

    polarization: str = "flux"
    angle: float = np.pi / 2
    points: int = 64
    eig: EigenSystem | None = None


def rotation_vs_start(t_g: float, starts, config: RangeConfig = RangeConfig()) -> np.ndarray:
    """Polar angle reached from the ground state for each pulse start time."""
    eig = config.eig or device_two_level()
    evolver = Evolver(eig)
    angles = []
    for t0 in np.asarray(starts, dtype=float):
        pulse = resonant_pulse(eig, t_g, config.polarization, config.angle, start=float(t0))
        mat, _, _ = evolver.cluster_map([pulse])
        angles.append(rotation_angle(mat[:, 0]))
    return np.array(angles)


def rotation_range(t_g: float, drive_config: RangeConfig = RangeConfig()) -> float:
    """Spread (max - min) of the rotation angle over start times spanning one Larmor period."""
    if not t_g > 0:
        raise ValueError("t_g must be positive")
    eig = drive_config.eig or device_two_level()
    tau = 2 * np.pi / eig.omega01
    starts = np.linspace(0.0, tau, max(64, drive_config.points), endpoint=False)
    config = replace(drive_config, eig=eig)
    angles = rotation_vs_start(t_g, starts, config)
    return float(angles.max() - angles.min())
