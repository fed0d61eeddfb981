"""Commensurate single-qubit gates on a fluxonium qubit."""

__version__ = "0.1.0"

from .circuit import (
    DEVICE_PARAMS,
    CircuitParams,
    EigenSystem,
    QubitFrame,
    build_hamiltonian,
    diagonalize,
    qubit_frame,
    two_level_system,
)

__all__ = [
    "DEVICE_PARAMS",
    "CircuitParams",
    "EigenSystem",
    "QubitFrame",
    "build_hamiltonian",
    "diagonalize",
    "qubit_frame",
    "two_level_system",
]
