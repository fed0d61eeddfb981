"""Single-qubit Clifford randomized benchmarking over the native gate set.

The native set is ``{I, +-X90, +-Y90}``. Sequences are executed either at the
pulse level (``PulseExecutor``) or on synthetic per-gate channels
(``ChannelExecutor``), and the resulting datasets are fitted with
``A + B u**m`` decay models for standard, interleaved and purity RB.
"""

from __future__ import annotations

import json
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np
from scipy.linalg import expm
from scipy.optimize import curve_fit, minimize_scalar

from .calibration import SimulatorBackend
from .dynamics import CoherenceParams, bloch_vector, dissipator, unitary_superop
from .errors import DegenerateRatio, FitFailure
from .fileio import atomic_write_text
from .pulses import MX90, MY90, X90, Y90, GateSetup, GateSpec, I, ideal_unitary, rotation

NATIVE_GATES: tuple[GateSpec, ...] = (X90, MX90, Y90, MY90)
GATES_PER_CLIFFORD = Fraction(53, 24)
DEFAULT_LENGTHS = tuple(2**k for k in range(11))


# ---------------------------------------------------------------- Clifford group


def _phase_key(u: np.ndarray) -> tuple:
    """Hashable representative of a 2x2 unitary modulo global phase."""
    flat = u.reshape(-1)
    lead = flat[np.argmax(np.abs(flat) > 1e-9)]
    v = flat * (abs(lead) / lead)
    return tuple(np.round(np.concatenate([v.real, v.imag]), 9) + 0.0)


def same_up_to_phase(a: np.ndarray, b: np.ndarray, tol: float = 1e-12) -> bool:
    overlap = np.trace(a.conj().T @ b)
    if abs(overlap) < 1e-12:
        return False
    return np.max(np.abs(a * (overlap / abs(overlap)) - b)) <= tol


@dataclass(frozen=True, eq=False)
class CliffordTable:
    """The 24 single-qubit Cliffords with minimal native decompositions.

    ``products[i, j]`` indexes ``unitaries[i] @ unitaries[j]`` (``j`` applied
    first) and ``inverses[i]`` indexes the inverse of element ``i``.
    Decompositions list gates in time order.
    """

    unitaries: tuple[np.ndarray, ...]
    decompositions: tuple[tuple[GateSpec, ...], ...]
    products: np.ndarray
    inverses: np.ndarray

    def __len__(self) -> int:
        return len(self.unitaries)

    def gate_counts(self) -> np.ndarray:
        """Non-identity native gates in each decomposition."""
        return np.array([sum(g.kind != "I" for g in d) for d in self.decompositions])

    def slot_counts(self) -> np.ndarray:
        """Gates per decomposition when the identity element's explicit ``I`` counts as one."""
        return np.array([len(d) for d in self.decompositions])

    @property
    def mean_gate_count(self) -> Fraction:
        return Fraction(int(self.gate_counts().sum()), len(self))

    @property
    def mean_slot_count(self) -> Fraction:
        return Fraction(int(self.slot_counts().sum()), len(self))

    def index_of(self, u: np.ndarray) -> int:
        key = _phase_key(u)
        for i, v in enumerate(self.unitaries):
            if _phase_key(v) == key:
                return i
        raise KeyError("unitary is not a Clifford")

    def compose(self, word: Sequence[GateSpec]) -> np.ndarray:
        u = np.eye(2, dtype=complex)
        for g in word:
            u = ideal_unitary(g) @ u
        return u


def build_clifford_table() -> CliffordTable:
    """Breadth-first search over native words; the first word reaching an element wins.

    Words are extended in the fixed order X90, -X90, Y90, -Y90, so ties between
    equally short words break lexicographically in that order.
    """
    identity = np.eye(2, dtype=complex)
    found = {_phase_key(identity): (identity, (I,))}
    queue = deque([(identity, ())])
    while queue:
        u, word = queue.popleft()
        for g in NATIVE_GATES:
            v = ideal_unitary(g) @ u
            key = _phase_key(v)
            if key not in found:
                found[key] = (v, word + (g,))
                queue.append((v, word + (g,)))
    if len(found) != 24:
        raise RuntimeError(f"native gates generated {len(found)} elements instead of 24")

    def canonical(item):
        word = [g for g in item[1] if g.kind != "I"]
        return len(word), [NATIVE_GATES.index(g) for g in word]

    ordered = sorted(found.values(), key=canonical)
    unitaries = tuple(u for u, _ in ordered)
    keys = [_phase_key(u) for u in unitaries]
    lookup = {k: i for i, k in enumerate(keys)}
    n = len(unitaries)
    products = np.empty((n, n), dtype=int)
    for i in range(n):
        for j in range(n):
            products[i, j] = lookup[_phase_key(unitaries[i] @ unitaries[j])]
    inverses = np.array([int(np.flatnonzero(products[i] == 0)[0]) for i in range(n)])
    return CliffordTable(unitaries, tuple(w for _, w in ordered), products, inverses)


_TABLE: CliffordTable | None = None


def clifford_table() -> CliffordTable:
    """Shared, lazily built table."""
    global _TABLE
    if _TABLE is None:
        _TABLE = build_clifford_table()
    return _TABLE


def rb_clifford_indices(
    table: CliffordTable, m: int, seed, interleave: GateSpec | None = None
) -> list[int]:
    """Indices of ``m`` random Cliffords, each followed by the interleaved
    element when given, and the recovery element last."""
    if m < 1:
        raise ValueError("sequence length must be at least 1")
    rng = np.random.default_rng(seed)
    picks = rng.integers(0, len(table), size=m)
    inter = None if interleave is None else table.index_of(ideal_unitary(interleave))
    out: list[int] = []
    total = 0
    for c in picks:
        out.append(int(c))
        total = table.products[c, total]
        if inter is not None:
            out.append(inter)
            total = table.products[inter, total]
    out.append(int(table.inverses[total]))
    return out


def rb_sequence(table: CliffordTable, m: int, seed, interleave: GateSpec | None = None) -> list[GateSpec]:
    """Native gates of a random sequence whose ideal composition is the identity."""
    gates: list[GateSpec] = []
    indices = rb_clifford_indices(table, m, seed, interleave)
    for pos, c in enumerate(indices):
        # Interleaved elements sit at odd positions; run the gate itself.
        if interleave is not None and pos % 2 == 1 and pos < len(indices) - 1:
            gates.append(interleave)
        else:
            gates.extend(table.decompositions[c])
    return gates


# ---------------------------------------------------------------- executors


class Executor(Protocol):
    def bloch(self, gates: Sequence[GateSpec]) -> np.ndarray:
        """Final qubit Bloch vector (x, y, z) after running ``gates`` from |0>."""


class PulseExecutor:
    """Compiles gates with a calibrated ``GateSetup`` and runs them on a simulator backend."""

    def __init__(self, backend: SimulatorBackend, setup: GateSetup):
        self.backend = backend
        self.setup = setup

    def bloch(self, gates: Sequence[GateSpec]) -> np.ndarray:
        state = self.backend.final_state(self.setup.schedule(list(gates)))
        return bloch_vector(state).as_array()


_PAULIS = (
    np.eye(2, dtype=complex),
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def _ptm(superop: np.ndarray) -> np.ndarray:
    """Pauli transfer matrix of a row-major qubit superoperator."""
    out = np.empty((4, 4))
    for j, pj in enumerate(_PAULIS):
        image = (superop @ pj.reshape(-1)).reshape(2, 2)
        for i, pi in enumerate(_PAULIS):
            out[i, j] = 0.5 * np.trace(pi @ image).real
    return out


@dataclass(frozen=True)
class GateErrorModel:
    """Synthetic per-gate errors applied after each ideal non-identity gate.

    ``depolarizing`` is the average gate infidelity of a depolarizing channel,
    ``over_rotation`` an extra angle (rad) about the gate's own axis, and
    ``coherence`` with ``gate_time`` (ns) adds T1/T2E decay. ``extra`` maps a
    gate kind to additional depolarizing infidelity for that gate only.
    """

    depolarizing: float = 0.0
    over_rotation: float = 0.0
    coherence: CoherenceParams | None = None
    gate_time: float = 0.0
    extra: dict = field(default_factory=dict)


class ChannelExecutor:
    """Runs gate words through Pauli transfer matrices of ideal gates plus errors."""

    def __init__(self, model: GateErrorModel = GateErrorModel()):
        self.model = model
        self._cache: dict[str, np.ndarray] = {}

    def gate_ptm(self, gate: GateSpec) -> np.ndarray:
        if gate.kind in self._cache:
            return self._cache[gate.kind]
        m = self.model
        if gate.kind == "I":
            ptm = np.eye(4)
        else:
            u = ideal_unitary(gate)
            if m.over_rotation and gate.axis is not None:
                u = rotation(gate.axis, gate.sign * m.over_rotation) @ u
            sup = unitary_superop(u)
            if m.coherence is not None and m.gate_time > 0:
                sup = expm(dissipator(2, m.coherence) * m.gate_time) @ sup
            ptm = _ptm(sup)
            infid = m.depolarizing + m.extra.get(gate.kind, 0.0)
            if infid:
                # Average infidelity r of a qubit depolarizing channel shrinks the Bloch vector by 1 - 2r.
                ptm = np.diag([1.0, *(3 * [1.0 - 2.0 * infid])]) @ ptm
        self._cache[gate.kind] = ptm
        return ptm

    def bloch(self, gates: Sequence[GateSpec]) -> np.ndarray:
        vec = np.array([1.0, 0.0, 0.0, 1.0])
        for g in gates:
            vec = self.gate_ptm(g) @ vec
        return vec[1:]


# ---------------------------------------------------------------- datasets


RB_MODES = ("standard", "interleaved", "purity")


@dataclass(frozen=True, eq=False)
class RBDataset:
    """Excited-state populations per seed (rows) and length (columns).

    ``tomography`` holds the final Bloch vectors, shape (seeds, lengths, 3),
    in purity mode.
    """

    lengths: np.ndarray
    seeds: tuple[int, ...]
    populations: np.ndarray
    tomography: np.ndarray | None = None
    interleaved: str | None = None
    mode: str = "standard"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        pops = np.asarray(self.populations, dtype=float)
        object.__setattr__(self, "lengths", np.asarray(self.lengths, dtype=int))
        object.__setattr__(self, "populations", pops)
        if pops.shape != (len(self.seeds), self.lengths.size):
            raise ValueError("populations must be seeds x lengths")
        if np.any(pops < -1e-9) or np.any(pops > 1 + 1e-9):
            raise ValueError("populations must lie in [0, 1]")
        if self.tomography is not None:
            tomo = np.asarray(self.tomography, dtype=float)
            object.__setattr__(self, "tomography", tomo)
            if tomo.shape != pops.shape + (3,):
                raise ValueError("tomography must be seeds x lengths x 3")
            if np.any(self.purities() > 1 + 1e-9):
                raise ValueError("Bloch vectors longer than 1")

    def purities(self) -> np.ndarray:
        if self.tomography is None:
            raise ValueError("dataset has no tomography")
        return np.sum(self.tomography**2, axis=-1)

    def mean_curve(self) -> tuple[np.ndarray, np.ndarray]:
        return self.populations.mean(axis=0), self.populations.std(axis=0, ddof=1) if len(self.seeds) > 1 else np.zeros(self.lengths.size)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "interleaved": self.interleaved,
            "lengths": self.lengths.tolist(),
            "seeds": list(self.seeds),
            "populations": self.populations.tolist(),
            "tomography": None if self.tomography is None else self.tomography.tolist(),
            "metadata": self.metadata,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "RBDataset":
        return cls(
            np.array(data["lengths"]),
            tuple(data["seeds"]),
            np.array(data["populations"]),
            None if data.get("tomography") is None else np.array(data["tomography"]),
            data.get("interleaved"),
            data.get("mode", "standard"),
            data.get("metadata", {}),
        )

    def write_json(self, path) -> Path:
        return atomic_write_text(path, json.dumps(self.to_dict(), indent=2) + "\n")

    def to_csv(self) -> str:
        mean, std = self.mean_curve()
        lines = ["m,mean_p_excited,std_p_excited" + (",mean_purity,std_purity" if self.tomography is not None else "")]
        purity = self.purities() if self.tomography is not None else None
        for k, m in enumerate(self.lengths.tolist()):
            row = f"{m},{mean[k]!r},{std[k]!r}"
            if purity is not None:
                col = purity[:, k]
                row += f",{col.mean()!r},{(col.std(ddof=1) if col.size > 1 else 0.0)!r}"
            lines.append(row)
        return "\n".join(lines) + "\n"


def _run_one(args):
    executor, table, m, seed, interleave = args
    return executor.bloch(rb_sequence(table, m, seed, interleave))


def run_rb(
    executor: Executor,
    lengths: Sequence[int] = DEFAULT_LENGTHS,
    seeds: Sequence[int] | int = 40,
    mode: str = "standard",
    interleave: GateSpec | None = None,
    *,
    table: CliffordTable | None = None,
    workers: int | None = None,
    shots: int = 0,
    rng_seed: int | None = None,
) -> RBDataset:
    """Execute random sequences for every (seed, length) pair.

    ``seeds`` is a list of seeds or a count (seeds 0..n-1). Measurements are
    exact expectation values unless ``shots`` is positive, in which case
    populations and tomography are sampled. ``workers > 1`` spreads the
    sequences over processes.
    """
    if mode not in RB_MODES:
        raise ValueError(f"unknown RB mode {mode!r}")
    if mode == "interleaved" and interleave is None:
        raise ValueError("interleaved mode needs a gate to interleave")
    table = table or clifford_table()
    seeds = tuple(range(seeds)) if isinstance(seeds, int) else tuple(int(s) for s in seeds)
    lengths = np.asarray(sorted(set(int(m) for m in lengths)))
    # Mix the length into the seed so different lengths draw independent sequences.
    jobs = [(executor, table, int(m), [s, int(m)], interleave) for s in seeds for m in lengths]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            vectors = list(pool.map(_run_one, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
    else:
        vectors = [_run_one(job) for job in jobs]
    bloch = np.array(vectors).reshape(len(seeds), lengths.size, 3)
    populations = np.clip((1.0 - bloch[..., 2]) / 2.0, 0.0, 1.0)
    if shots:
        rng = np.random.default_rng(rng_seed)
        populations = rng.binomial(shots, populations) / shots
        # Each Pauli expectation is estimated from its own batch of shots.
        p_plus = np.clip((1.0 + bloch) / 2.0, 0.0, 1.0)
        bloch = 2.0 * rng.binomial(shots, p_plus) / shots - 1.0
        norms = np.linalg.norm(bloch, axis=-1, keepdims=True)
        bloch = np.where(norms > 1.0, bloch / np.maximum(norms, 1e-300), bloch)
    return RBDataset(
        lengths,
        seeds,
        populations,
        bloch if mode == "purity" else None,
        None if interleave is None else interleave.kind,
        mode,
        {"shots": shots},
    )


# ---------------------------------------------------------------- fits


@dataclass(frozen=True)
class RBFit:
    """Decay ``A + B u**m`` and the derived errors.

    For purity fits ``u`` is the per-Clifford shrink factor of the Bloch
    vector, i.e. the square root of the fitted purity decay ``u_prime``.
    Confidence intervals are 95% bootstrap percentiles over seeds.
    """

    A: float
    B: float
    u: float
    u_err: float
    u_ci: tuple[float, float]
    epsilon: float
    epsilon_ci: tuple[float, float]
    epsilon_g: float
    epsilon_g_ci: tuple[float, float]
    kind: str = "total"
    u_prime: float | None = None
    coherent_g: float | None = None
    coherent_g_err: float | None = None
    u_samples: np.ndarray | None = field(default=None, repr=False, compare=False)

    def to_dict(self) -> dict:
        out = {k: getattr(self, k) for k in self.__dataclass_fields__ if k != "u_samples"}
        out["u_ci"] = list(self.u_ci)
        out["epsilon_ci"] = list(self.epsilon_ci)
        out["epsilon_g_ci"] = list(self.epsilon_g_ci)
        out["gates_per_clifford"] = float(GATES_PER_CLIFFORD)
        return out


def _linear_amplitudes(m, y, u, asymptote):
    """Least-squares A, B for fixed u; A is pinned when ``asymptote`` is given."""
    g = u**m
    if asymptote is not None:
        denom = g @ g
        b = 0.0 if denom == 0 else float(g @ (y - asymptote) / denom)
        return asymptote, b
    design = np.column_stack([np.ones_like(g), g])
    (a, b), *_ = np.linalg.lstsq(design, y, rcond=None)
    return float(a), float(b)


def _decay_fit(m: np.ndarray, y: np.ndarray, asymptote: float | None) -> tuple[float, float, float]:
    """Variable-projection fit of ``A + B u**m``: u by a scalar search, A and B linear.

    The decay rate ``-log u`` is searched on a log grid, then refined by a
    bounded scalar minimization around the best grid point.
    """
    m = m.astype(float)
    if np.ptp(y) < 1e-12:
        # Flat data: no resolvable decay.
        return (float(y.mean()), 0.0, 1.0) if asymptote is None else (asymptote, float(y.mean() - asymptote), 1.0)

    def costs(log_rates):
        u = np.exp(-np.exp(np.atleast_1d(log_rates)))
        g = u[:, None] ** m[None, :]
        if asymptote is not None:
            b = (g @ (y - asymptote)) / np.einsum("ij,ij->i", g, g)
            resid = asymptote + b[:, None] * g - y
        else:
            n = m.size
            sg, sgg, sy, sgy = g.sum(1), np.einsum("ij,ij->i", g, g), y.sum(), g @ y
            det = n * sgg - sg**2
            safe = np.where(abs(det) > 1e-300, det, 1.0)
            b = np.where(abs(det) > 1e-300, (n * sgy - sg * sy) / safe, 0.0)
            a = (sy - b * sg) / n
            resid = a[:, None] + b[:, None] * g - y
        return np.sum(resid**2, axis=1)

    lo, hi = np.log(1e-9 / m.max()), np.log(10.0 / m.min())
    grid = np.linspace(lo, hi, 160)
    values = costs(grid)
    k = int(np.argmin(values))
    bracket = (grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)])
    res = minimize_scalar(lambda r: float(costs(r)[0]), bounds=bracket, method="bounded", options={"xatol": 1e-9})
    best = res.x if res.fun <= values[k] else grid[k]
    u = float(np.exp(-np.exp(best)))
    a, b = _linear_amplitudes(m, y, u, asymptote)
    return a, b, u


def _fit_curve(m, y, asymptote):
    """Decay fit with a curve_fit polish for the standard error of u."""
    a, b, u = _decay_fit(m, y, asymptote)
    err = float("nan")
    if 0 < u < 1:
        try:
            if asymptote is None:
                popt, pcov = curve_fit(lambda x, A, B, U: A + B * U**x, m, y, p0=[a, b, u], maxfev=20000)
                if 0 < popt[2] <= 1:
                    a, b, u = (float(v) for v in popt)
                err = float(np.sqrt(abs(pcov[2, 2])))
            else:
                popt, pcov = curve_fit(lambda x, B, U: asymptote + B * U**x, m, y, p0=[b, u], maxfev=20000)
                if 0 < popt[1] <= 1:
                    b, u = (float(v) for v in popt)
                err = float(np.sqrt(abs(pcov[1, 1])))
        except (RuntimeError, ValueError):
            pass
    return a, b, u, err


def _bootstrap_u(data: np.ndarray, m: np.ndarray, asymptote, n_boot: int, rng) -> np.ndarray:
    n_seeds = data.shape[0]
    samples = np.empty(n_boot)
    for k in range(n_boot):
        pick = rng.integers(0, n_seeds, size=n_seeds)
        samples[k] = _decay_fit(m, data[pick].mean(axis=0), asymptote)[2]
    return samples


def _check_lengths(dataset: RBDataset):
    if np.unique(dataset.lengths).size < 3:
        raise ValueError("need at least three distinct sequence lengths")


def _ci(samples: np.ndarray) -> tuple[float, float]:
    lo, hi = np.percentile(samples, [2.5, 97.5])
    return float(lo), float(hi)


def _assemble(a, b, u, err, samples, kind, **extra) -> RBFit:
    n = float(GATES_PER_CLIFFORD)
    eps = (1.0 - u) / 2.0
    eps_samples = (1.0 - samples) / 2.0
    lo, hi = _ci(eps_samples)
    return RBFit(
        a, b, u, err, _ci(samples), eps, (lo, hi), eps / n, (lo / n, hi / n), kind, u_samples=samples, **extra
    )


def fit_rb(
    dataset: RBDataset,
    *,
    asymptote: float | None = None,
    n_boot: int = 500,
    seed: int | None = 0,
) -> RBFit:
    """Fit the seed-averaged excited population to ``A + B u**m``.

    ``asymptote`` pins A (1/2 for unital errors without SPAM), which keeps the
    fit well posed when the decay over the measured lengths is tiny.
    Raises ``FitFailure`` when the free-asymptote model sees no decay.
    """
    _check_lengths(dataset)
    m = dataset.lengths
    y = dataset.populations.mean(axis=0)
    a, b, u, err = _fit_curve(m, y, asymptote)
    decay = abs(b) * (u ** m.min() - u ** m.max())
    if asymptote is None and (decay < 1e-10 or u >= 1.0):
        raise FitFailure("RB data do not decay over the measured lengths")
    samples = _bootstrap_u(dataset.populations, m, asymptote, n_boot, np.random.default_rng(seed))
    return _assemble(a, b, u, err, samples, "total")


def fit_purity(
    dataset: RBDataset,
    total: RBFit | None = None,
    *,
    asymptote: float | None = None,
    n_boot: int = 500,
    seed: int | None = 0,
) -> RBFit:
    """Incoherent error from the purity decay ``A' + B' u'**m`` with ``u' = u**2``.

    The coherent part per gate is the total error (``total`` or a fresh
    ``fit_rb`` on the same dataset) minus the incoherent one; its uncertainty
    combines both bootstrap spreads, resampling the same seeds for both.
    """
    _check_lengths(dataset)
    if dataset.tomography is None:
        raise FitFailure("purity fit needs tomography data")
    m = dataset.lengths
    purity = dataset.purities()
    mean = purity.mean(axis=0)
    a, b, u_prime, err = _fit_curve(m, mean, asymptote)
    if not np.all(np.isfinite([a, b, u_prime])) or mean.max() <= 0:
        raise FitFailure("purity fit failed")
    rng = np.random.default_rng(seed)
    samples_prime = _bootstrap_u(purity, m, asymptote, n_boot, rng)
    u = float(np.sqrt(u_prime))
    u_err = err / (2 * u) if u > 0 else float("nan")
    if total is None:
        total = fit_rb(dataset, asymptote=None if asymptote is None else 0.5, n_boot=n_boot, seed=seed)
    n = float(GATES_PER_CLIFFORD)
    incoherent_g = (1.0 - u) / 2.0 / n
    coherent = total.epsilon_g - incoherent_g
    spread_total = np.std((1.0 - total.u_samples) / 2.0 / n) if total.u_samples is not None else 0.0
    spread_in = np.std((1.0 - np.sqrt(samples_prime)) / 2.0 / n)
    return _assemble(
        a,
        b,
        u,
        u_err,
        np.sqrt(samples_prime),
        "incoherent",
        u_prime=u_prime,
        coherent_g=float(coherent),
        coherent_g_err=float(np.hypot(spread_total, spread_in)),
    )


def coherent_fraction(total: RBFit, incoherent: RBFit) -> float:
    """Share of the total per-gate error that is coherent."""
    if total.epsilon_g <= 0:
        return 0.0
    return float((total.epsilon_g - incoherent.epsilon_g) / total.epsilon_g)


@dataclass(frozen=True)
class InterleavedResult:
    epsilon: float
    epsilon_ci: tuple[float, float]
    ratio: float


def interleaved_error(reference: RBFit, interleaved: RBFit) -> InterleavedResult:
    """Error of the interleaved gate, ``(1 - u_int/u_ref) / 2``.

    The interval comes from paired bootstrap samples when both fits carry the
    same number of them, otherwise from the two intervals combined in quadrature.
    """
    ratio = interleaved.u / reference.u
    if (
        reference.u_samples is not None
        and interleaved.u_samples is not None
        and reference.u_samples.size == interleaved.u_samples.size
    ):
        ratios = interleaved.u_samples / reference.u_samples
        r_lo, r_hi = _ci(ratios)
    else:
        half = np.hypot(np.diff(reference.u_ci)[0] / reference.u, np.diff(interleaved.u_ci)[0] / interleaved.u) / 2
        r_lo, r_hi = ratio * (1 - half), ratio * (1 + half)
    if ratio > 1 and r_lo > 1:
        raise DegenerateRatio(f"interleaved decay {interleaved.u:.8g} exceeds reference {reference.u:.8g}")
    eps = (1.0 - ratio) / 2.0
    return InterleavedResult(float(eps), ((1.0 - r_hi) / 2.0, (1.0 - r_lo) / 2.0), float(ratio))
