"""Reference computations that share no code with the package under test."""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import eigh

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)


def hann(t, start, duration):
    tau = np.asarray(t, float) - start
    inside = (tau >= 0) & (tau <= duration)
    return np.where(inside, 0.5 * (1 - np.cos(2 * np.pi * tau / duration)), 0.0)


def fluxonium_dvr(E_C, E_L, E_J, phi_dc, half_width=6 * np.pi, points=1201, keep=4):
    """Lowest levels in a sinc-DVR phase grid: energies, <i|phi|j>, <i|n|j>.

    n = -i d/dphi, so [H, phi] = -8i E_C n.
    """
    phi = np.linspace(-half_width, half_width, points)
    h = phi[1] - phi[0]
    i = np.arange(points)
    diff = i[:, None] - i[None, :]
    with np.errstate(divide="ignore"):
        kinetic = np.where(diff == 0, np.pi**2 / 3, 2.0 * (-1.0) ** diff / np.where(diff == 0, 1, diff) ** 2) / h**2
        deriv = np.where(diff == 0, 0.0, (-1.0) ** diff / np.where(diff == 0, 1, diff)) / h
    ham = 4 * E_C * kinetic + np.diag(0.5 * E_L * phi**2 - E_J * np.cos(phi - phi_dc))
    evals, evecs = eigh(ham, subset_by_index=[0, keep - 1])
    phi_el = evecs.T @ (phi[:, None] * evecs)
    n_el = -1j * evecs.T @ deriv @ evecs
    return evals - evals[0], phi_el, n_el


def lab_unitary_ivp(energies_rad, n_op, phi_op, charge, flux, t0, t1, rtol=1e-11, atol=1e-12):
    """Lab-frame propagator of H = diag(E) + charge(t) n + flux(t) phi by adaptive RK."""
    d = len(energies_rad)
    h0 = np.diag(energies_rad).astype(complex)

    def rhs(t, y):
        u = y.reshape(d, d)
        ham = h0 + charge(t) * n_op + flux(t) * phi_op
        return (-1j * ham @ u).reshape(-1)

    sol = solve_ivp(rhs, (t0, t1), np.eye(d, dtype=complex).reshape(-1), method="DOP853", rtol=rtol, atol=atol)
    return sol.y[:, -1].reshape(d, d)


def rotating(u_lab, omega, t0, t1):
    """Rotating-frame propagator exp(i w t1 N) U exp(-i w t0 N)."""
    d = u_lab.shape[0]
    levels = np.arange(d)
    return np.diag(np.exp(1j * omega * t1 * levels)) @ u_lab @ np.diag(np.exp(-1j * omega * t0 * levels))


def axis_rotation(nx, ny, nz, angle):
    n = np.array([nx, ny, nz], float)
    n = n / np.linalg.norm(n)
    gen = n[0] * SX + n[1] * SY + n[2] * SZ
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * gen


def co_rotating_closed_form(coupling_area, carrier_phase):
    """Two-level qubit with H = E|1><1| + A s(t)[cos(th) sy + sin(th) sx], th = w t + phi.

    In the rotating frame the drive is the constant matrix A s(t) (sin(phi) sx + cos(phi) sy),
    so the propagator is a rotation by 2*area about (sin phi, cos phi, 0).
    """
    return axis_rotation(np.sin(carrier_phase), np.cos(carrier_phase), 0.0, 2.0 * coupling_area)


def idle_error_kraus(T1, T2E, t):
    """1 - F_avg of amplitude damping plus dephasing, from its Kraus operators."""
    gamma = 1 - np.exp(-t / T1)
    coherence = np.exp(-t / T2E)
    # Kraus set: amplitude damping followed by phase damping tuned to the total coherence decay.
    lam = 1 - (coherence / np.sqrt(1 - gamma)) ** 2
    k_ad = [np.array([[1, 0], [0, np.sqrt(1 - gamma)]]), np.array([[0, np.sqrt(gamma)], [0, 0]])]
    k_pd = [np.array([[1, 0], [0, np.sqrt(1 - lam)]]), np.array([[0, 0], [0, np.sqrt(lam)]])]
    kraus = [b @ a for a in k_ad for b in k_pd]
    # F_avg = (sum_k |Tr K|^2 + d) / (d (d + 1)) for d = 2.
    f = (sum(abs(np.trace(k)) ** 2 for k in kraus) + 2) / 6
    return 1 - f


def depolarized_survival(m, shrink, gates_per_clifford):
    """Exact RB survival of |0> under per-gate depolarizing shrink factors."""
    return 0.5 + 0.5 * shrink ** (gates_per_clifford * m)


def twirled_decay(noisy_unitaries, ideal_unitaries):
    """Decay constant of the Clifford-twirled error: the largest eigenvalue of
    the averaged tensor product of noisy and ideal Bloch rotations."""

    def bloch_matrix(u):
        paulis = (SX, SY, SZ)
        return np.array([[0.5 * np.trace(p @ u @ q @ u.conj().T).real for q in paulis] for p in paulis])

    acc = np.zeros((9, 9))
    for noisy, ideal in zip(noisy_unitaries, ideal_unitaries):
        acc += np.kron(bloch_matrix(noisy), bloch_matrix(ideal))
    acc /= len(noisy_unitaries)
    return float(np.max(np.abs(np.linalg.eigvals(acc))))


def gauss_product(n_max, dtheta):
    n = np.arange(n_max + 1)
    return float(np.prod(np.cos(n * dtheta / n_max**1.5)))

