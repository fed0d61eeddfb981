from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from fluxgates.circuit import two_level_system
from fluxgates.dynamics import (
    CoherenceParams,
    Evolver,
    RangeConfig,
    average_gate_fidelity,
    bloch_vector,
    coherence_limited_error,
    frame_operator,
    propagate,
    resonant_pulse,
    rotation_angle,
    rotation_range,
    rotation_vs_start,
    to_rotating_frame,
)
from fluxgates.errors import StepTooCoarse
from fluxgates.pulses import DrivePulse, GateSchedule, X90, ideal_unitary, waveform

from oracles import co_rotating_closed_form, idle_error_kraus, lab_unitary_ivp, rotating

GROUND = np.array([1, 0], dtype=complex)


def _schedule(*pulses):
    return GateSchedule(tuple(pulses))


def _co_rotating(eig, amp, duration, phase=0.3):
    return DrivePulse(
        amp_charge=amp,
        amp_flux=amp,
        rel_phase=np.pi / 2,
        carrier_freq=eig.omega01,
        carrier_phase=phase,
        duration=duration,
    )


def test_no_drive_is_free_evolution(ideal_qubit):
    pulse = DrivePulse(carrier_freq=ideal_qubit.omega01, duration=7.3)
    res = propagate(ideal_qubit, _schedule(pulse), GROUND)
    free = np.diag(np.exp(-1j * ideal_qubit.angular_energies * res.t_final))
    np.testing.assert_allclose(res.unitary, free, atol=1e-12)
    np.testing.assert_allclose(res.state, GROUND, atol=1e-12)


def test_multilevel_matches_adaptive_integrator(device_eig):
    eig = device_eig.truncate(4)
    pulse = DrivePulse(
        amp_charge=0.05, amp_flux=0.12, rel_phase=1.1, carrier_freq=eig.omega01, carrier_phase=0.4, duration=9.0
    )
    res = propagate(eig, _schedule(pulse), np.eye(4)[0])

    def line(which):
        return lambda t: float(waveform(pulse, np.array([t]))[which][0])

    oracle = lab_unitary_ivp(eig.angular_energies, eig.n_elem, eig.phi_elem, line(0), line(1), 0.0, pulse.end)
    assert np.max(np.abs(res.unitary - oracle)) < 1e-8


@pytest.mark.parametrize("strength", [0.01, 0.1, 0.3, 0.5])
def test_co_rotating_drive_matches_closed_form(ideal_qubit, strength):
    tau = 2 * np.pi / ideal_qubit.omega01
    duration = 1.3 * tau
    # Peak Rabi rate 2*amp equals strength * omega01.
    amp = strength * ideal_qubit.omega01 / 2
    pulse = _co_rotating(ideal_qubit, amp, duration)
    res = propagate(ideal_qubit, _schedule(pulse), GROUND)
    expected = co_rotating_closed_form(amp * duration / 2, pulse.carrier_phase)
    overlap = np.trace(expected.conj().T @ res.rotating_unitary())
    assert abs(overlap) / 2 == pytest.approx(1.0, abs=1e-8)
    assert np.max(np.abs(res.rotating_unitary() - expected * overlap / abs(overlap))) < 1e-8


def test_weak_linear_drive_rotates_by_pulse_area(ideal_qubit):
    tau = 2 * np.pi / ideal_qubit.omega01
    pulse = resonant_pulse(ideal_qubit, 20 * tau, "flux")
    res = propagate(ideal_qubit, _schedule(pulse), GROUND)
    assert rotation_angle(res.rotating_state()) == pytest.approx(np.pi / 2, abs=1e-3)


def test_propagation_preserves_norm(device_eig):
    pulse = resonant_pulse(device_eig, 4.5, "co-rotating", angle=np.pi)
    res = propagate(device_eig, _schedule(pulse), np.eye(device_eig.dim)[0])
    assert np.linalg.norm(res.state) == pytest.approx(1.0, abs=1e-10)
    np.testing.assert_allclose(res.unitary.conj().T @ res.unitary, np.eye(device_eig.dim), atol=1e-10)


def test_lab_and_rotating_frame_agree(ideal_qubit):
    omega = ideal_qubit.omega01
    pulse = resonant_pulse(ideal_qubit, 1.2 * 2 * np.pi / omega, "flux", start=0.7)
    res = propagate(ideal_qubit, _schedule(pulse), GROUND)
    t0, t1 = 0.0, res.t_final
    sx = np.array([[0, 1], [1, 0]], dtype=complex)

    # Rotating-frame Hamiltonian written directly: the drive picks up e^{+-i w t}.
    def rhs(t, y):
        flux = float(waveform(pulse, np.array([t]))[1][0])
        rot = frame_operator(2, omega, t)
        ham = flux * rot @ sx @ rot.conj().T
        return (-1j * ham @ y.reshape(2, 2)).reshape(-1)

    sol = solve_ivp(rhs, (t0, t1), np.eye(2, dtype=complex).reshape(-1), method="DOP853", rtol=1e-12, atol=1e-13)
    direct = sol.y[:, -1].reshape(2, 2)
    assert np.max(np.abs(res.rotating_unitary() - direct)) < 1e-8
    # The generic transform agrees with the oracle's frame change of the lab propagator.
    np.testing.assert_allclose(rotating(res.unitary, omega, t0, t1), res.rotating_unitary(), atol=1e-12)


def test_rotating_frame_transform():
    u = np.array([[0.6, 0.8j], [0.8j, 0.6]])
    np.testing.assert_allclose(to_rotating_frame(u, 1.3, 0.0, 0.0), u)
    omega = 1.7
    t = 2.9
    ket = np.array([1, 1], dtype=complex) / np.sqrt(2)
    free = np.diag(np.exp(-1j * np.array([0.0, omega]) * t)) @ ket
    np.testing.assert_allclose(bloch_vector(to_rotating_frame(free, omega, t)).as_array(), [1, 0, 0], atol=1e-12)
    # The counter-rotating frame adds omega_d to the qubit splitting.
    drive = 0.4
    moved = to_rotating_frame(free, drive, t, sense="counter")
    assert np.angle(moved[1] / moved[0]) == pytest.approx(np.angle(np.exp(-1j * (omega + drive) * t)))


def test_start_time_period_is_half_larmor(ideal_qubit):
    tau = 2 * np.pi / ideal_qubit.omega01
    starts = np.linspace(0, tau, 48, endpoint=False)
    angles = rotation_vs_start(0.84 * tau, starts)
    np.testing.assert_allclose(angles[:24], angles[24:], atol=1e-10)
    assert np.ptp(angles[:24]) > 1e-3


def test_rotation_range_shrinks_with_duration(ideal_qubit):
    tau = 2 * np.pi / ideal_qubit.omega01
    assert rotation_range(1.0 * tau) > rotation_range(3.0 * tau)
    assert rotation_range(10 * tau) < 0.02
    co = RangeConfig(polarization="co-rotating")
    assert rotation_range(1.0 * tau, co) < 1e-6


def test_commensurate_starts_share_rotating_unitary(ideal_qubit):
    tau = 2 * np.pi / ideal_qubit.omega01
    evolver = Evolver(ideal_qubit)
    pulse = resonant_pulse(ideal_qubit, 1.2 * tau, "flux")
    base = evolver.cluster_map([pulse])[0]
    full = evolver.cluster_map([replace(pulse, start=tau)])[0]
    assert np.max(np.abs(full - base)) < 1e-10
    # Half a period flips the carrier sign, which the rotating frame absorbs.
    half = evolver.cluster_map([replace(pulse, start=tau / 2)])[0]
    assert np.max(np.abs(half - base)) < 1e-10
    off = evolver.cluster_map([replace(pulse, start=0.3 * tau)])[0]
    assert np.linalg.norm(off - base, 2) > 1e-3


def test_counter_rotating_oscillations_grow_with_drive(ideal_qubit):
    omega = ideal_qubit.omega01
    tau = 2 * np.pi / omega
    evolver = Evolver(ideal_qubit)
    times = np.linspace(2 * tau, 10 * tau, 512, endpoint=False)
    weights = []
    for amp in (0.01, 0.04):
        pulse = DrivePulse.flat_top(12 * tau, 0.0, amp_flux=amp, carrier_freq=omega)
        states = evolver.trajectory(_schedule(pulse), times, GROUND)
        p1 = np.array([abs(s[1]) ** 2 for s in states])
        spectrum = np.abs(np.fft.rfft(p1 - p1.mean()))
        freqs = 2 * np.pi * np.fft.rfftfreq(times.size, times[1] - times[0])
        band = (freqs > 1.5 * omega) & (freqs < 2.5 * omega)
        weights.append(spectrum[band].max())
    assert weights[1] > 4 * weights[0] > 0


def test_lindblad_keeps_density_matrix_physical(device_eig):
    eig = device_eig.truncate(3)
    coh = CoherenceParams(T1=200.0, T2E=150.0)
    pulse = resonant_pulse(eig, 9.0, "flux", angle=np.pi)
    rho0 = np.zeros((3, 3), complex)
    rho0[0, 0] = 1
    res = propagate(eig, _schedule(pulse), rho0, decoherence=coh)
    rho = res.state
    assert np.trace(rho).real == pytest.approx(1.0, abs=1e-9)
    assert np.max(np.abs(rho - rho.conj().T)) < 1e-10
    assert np.linalg.eigvalsh(rho).min() > -1e-10


def test_step_too_coarse_raises(ideal_qubit):
    tau = 2 * np.pi / ideal_qubit.omega01
    evolver = Evolver(ideal_qubit, step=tau / 3)
    with pytest.raises(StepTooCoarse):
        evolver.cluster_map([resonant_pulse(ideal_qubit, tau, "flux")])


def test_rotation_angle_of_basis_states():
    assert rotation_angle(np.array([1, 0])) == 0.0
    assert rotation_angle(np.array([0, 1])) == pytest.approx(np.pi)


def test_average_gate_fidelity_properties():
    target = ideal_unitary(X90)
    assert average_gate_fidelity(target, target) == pytest.approx(1.0)
    assert average_gate_fidelity(np.exp(0.7j) * target, target) == pytest.approx(1.0)
    for eps in (1e-2, 3e-3):
        over = two_level_rotation(np.pi / 2 + eps)
        assert 1 - average_gate_fidelity(over, target) == pytest.approx(eps**2 / 6, rel=1e-4)
    # Leakage: move part of |1> out of the qubit subspace.
    leaky = np.eye(3, dtype=complex)
    leaky[:2, :2] = target
    mix = np.array([[np.cos(0.1), -np.sin(0.1)], [np.sin(0.1), np.cos(0.1)]])
    leaky[1:, 1:] = mix @ leaky[1:, 1:]
    assert average_gate_fidelity(leaky, target) < 1.0


def two_level_rotation(angle):
    return np.cos(angle / 2) * np.eye(2) - 1j * np.sin(angle / 2) * np.array([[0, 1], [1, 0]])


def test_coherence_limited_error_matches_kraus_channel():
    coh = CoherenceParams(T1=300e3, T2E=200e3)
    value = coherence_limited_error(coh, 10.25)
    assert value == pytest.approx(idle_error_kraus(300e3, 200e3, 10.25), rel=1e-8)
    doubled = coherence_limited_error(CoherenceParams(T1=600e3, T2E=400e3), 10.25)
    assert value / doubled == pytest.approx(2.0, rel=1e-2)
    assert coherence_limited_error(CoherenceParams(np.inf, np.inf), 10.25) == pytest.approx(0.0, abs=1e-15)


def test_two_level_helper_uses_unit_lines():
    eig = two_level_system(0.25)
    assert 2 * np.pi / eig.omega01 == pytest.approx(4.0)
