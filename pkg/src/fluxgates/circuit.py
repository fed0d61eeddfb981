"""Fluxonium circuit model: Hamiltonian, spectrum and drive matrix elements.

Energies are in GHz (E/h). The Hamiltonian is built in the harmonic-oscillator
basis of the inductive and capacitive terms, so the Josephson term is the only
non-diagonal contribution.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceFailure

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class CircuitParams:
    """Fluxonium energies in GHz and the external flux phase in radians."""

    E_C: float
    E_L: float
    E_J: float
    phi_dc: float = np.pi
    basis_size: int = 80

    def __post_init__(self):
        if self.E_C <= 0 or self.E_L <= 0:
            raise ValueError("E_C and E_L must be positive")
        if self.E_J < 0:
            raise ValueError("E_J must be non-negative")
        if self.basis_size < 4:
            raise ValueError("basis_size must be at least 4")

    @property
    def phi_zpf(self) -> float:
        """Oscillator length of the phase coordinate, (8 E_C / E_L)^(1/4)."""
        return (8.0 * self.E_C / self.E_L) ** 0.25

    @property
    def plasma_freq(self) -> float:
        """Plasma frequency sqrt(8 E_C E_L) in GHz."""
        return np.sqrt(8.0 * self.E_C * self.E_L)


# Device operating point used throughout the examples and tests.
DEVICE_PARAMS = CircuitParams(E_C=1.30, E_L=0.59, E_J=5.71, phi_dc=np.pi)


@dataclass(frozen=True, eq=False)
class EigenSystem:
    """Lowest eigenstates of a qubit model.

    ``energies`` are ascending, in GHz, shifted so the ground state sits at 0.
    ``n_elem`` and ``phi_elem`` are the charge and phase operators in the
    eigenbasis. Eigenvector phases are fixed so that each ``phi_elem[k, k+1]``
    is non-negative, which makes ``n_elem[0, 1]`` negative imaginary.
    """

    energies: np.ndarray
    n_elem: np.ndarray
    phi_elem: np.ndarray
    params: CircuitParams | None = field(default=None, compare=False)

    def __post_init__(self):
        e = np.asarray(self.energies, dtype=float)
        object.__setattr__(self, "energies", e)
        object.__setattr__(self, "n_elem", np.asarray(self.n_elem, dtype=complex))
        object.__setattr__(self, "phi_elem", np.asarray(self.phi_elem, dtype=complex))
        d = e.size
        if self.n_elem.shape != (d, d) or self.phi_elem.shape != (d, d):
            raise ValueError("operator shapes do not match the number of levels")
        if d < 2:
            raise ValueError("need at least two levels")
        if np.any(np.diff(e) <= 0):
            raise ValueError("energies must be strictly ascending")

    @property
    def dim(self) -> int:
        return self.energies.size

    @property
    def omega01(self) -> float:
        """Qubit angular frequency in rad/ns."""
        return TWO_PI * (self.energies[1] - self.energies[0])

    @property
    def angular_energies(self) -> np.ndarray:
        """Level energies in rad/ns relative to the ground state."""
        return TWO_PI * (self.energies - self.energies[0])

    def truncate(self, keep: int) -> "EigenSystem":
        if not 2 <= keep <= self.dim:
            raise ValueError(f"keep must be in [2, {self.dim}]")
        return EigenSystem(
            self.energies[:keep],
            self.n_elem[:keep, :keep],
            self.phi_elem[:keep, :keep],
            self.params,
        )


def two_level_system(freq_ghz: float, n01: float = 1.0, phi01: float = 1.0) -> EigenSystem:
    """Ideal two-level qubit whose drive operators are ``phi01*sx`` and ``n01*sy``."""
    if freq_ghz <= 0:
        raise ValueError("qubit frequency must be positive")
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]], dtype=complex)
    return EigenSystem(np.array([0.0, freq_ghz]), abs(n01) * sy, abs(phi01) * sx)


def _ladder_ops(params: CircuitParams):
    size = params.basis_size
    lower = np.diag(np.sqrt(np.arange(1, size, dtype=float)), 1)
    phi0 = params.phi_zpf
    phi = phi0 / np.sqrt(2.0) * (lower + lower.T)
    n = 1j / (np.sqrt(2.0) * phi0) * (lower.T - lower)
    return lower, phi, n


def build_hamiltonian(params: CircuitParams) -> np.ndarray:
    """Fluxonium Hamiltonian in GHz, in the oscillator Fock basis."""
    lower, phi, _ = _ladder_ops(params)
    size = params.basis_size
    shifted = sla.expm(1j * (phi - params.phi_dc * np.eye(size)))
    cos_term = 0.5 * (shifted + shifted.conj().T)
    number = lower.T @ lower
    ham = params.plasma_freq * (number + 0.5 * np.eye(size)) - params.E_J * cos_term
    return 0.5 * (ham + ham.conj().T)


def _spectrum(params: CircuitParams, keep: int):
    ham = build_hamiltonian(params)
    # The Hamiltonian is real symmetric in this basis.
    evals, evecs = np.linalg.eigh(ham.real)
    return evals[:keep], evecs[:, :keep]


def diagonalize(params: CircuitParams, keep: int = 6, tol: float = 1e-9) -> EigenSystem:
    """Lowest ``keep`` levels with charge and phase matrix elements.

    Convergence is certified by repeating the diagonalization with 20 more
    basis states; any kept energy moving by more than ``tol`` GHz raises
    ``ConvergenceFailure``.
    """
    if keep < 2 or keep >= params.basis_size:
        raise ValueError("keep must be at least 2 and below basis_size")
    evals, evecs = _spectrum(params, keep)
    bigger = CircuitParams(params.E_C, params.E_L, params.E_J, params.phi_dc, params.basis_size + 20)
    evals_big, _ = _spectrum(bigger, keep)
    drift = np.max(np.abs(evals - evals_big))
    if drift > tol:
        raise ConvergenceFailure(
            f"kept energies moved by {drift:.3e} GHz when basis grew to {bigger.basis_size}"
        )

    _, phi, n = _ladder_ops(params)
    evecs = evecs.copy()
    lead = np.argmax(np.abs(evecs[:, 0]))
    if evecs[lead, 0] < 0:
        evecs[:, 0] *= -1
    for k in range(1, keep):
        coupling = evecs[:, k - 1] @ phi.real @ evecs[:, k]
        if abs(coupling) > 1e-12:
            if coupling < 0:
                evecs[:, k] *= -1
        else:
            lead = np.argmax(np.abs(evecs[:, k]))
            if evecs[lead, k] < 0:
                evecs[:, k] *= -1
    n_elem = evecs.T @ n @ evecs
    phi_elem = evecs.T @ phi @ evecs
    return EigenSystem(evals - evals[0], n_elem, phi_elem, params)


@dataclass(frozen=True)
class QubitFrame:
    """Qubit angular frequency (rad/ns) and the Larmor-period time scales."""

    omega01: float

    def __post_init__(self):
        if not self.omega01 > 0:
            raise ValueError("omega01 must be positive")

    @property
    def tau_L(self) -> float:
        """Larmor period in ns."""
        return TWO_PI / self.omega01

    @property
    def half_period(self) -> float:
        return np.pi / self.omega01

    @property
    def quarter_period(self) -> float:
        return 0.5 * np.pi / self.omega01

    @property
    def freq_ghz(self) -> float:
        return self.omega01 / TWO_PI


def qubit_frame(eig: EigenSystem) -> QubitFrame:
    return QubitFrame(eig.omega01)
