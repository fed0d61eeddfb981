import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from fluxgates.calibration import SimulatorBackend
from fluxgates.circuit import QubitFrame
from fluxgates.errors import CommensurabilityViolation, InvalidEnvelope
from fluxgates.pulses import (
    MX90,
    X90,
    X180,
    Y90,
    CommensurateLattice,
    DriveParams,
    DrivePulse,
    GateSchedule,
    GateSetup,
    GateSpec,
    GateTiming,
    compile_gates,
    envelope,
    envelope_area,
    ideal_unitary,
    parse_gate,
    read_schedule_json,
    read_waveform_csv,
    schedule_fields,
    snap_to_lattice,
    verify_schedule,
    waveform,
    write_schedule_json,
    write_waveform_csv,
)
from oracles import hann

OMEGA = 2 * np.pi / 4.1  # tau_L = 4.1 ns
FRAME = QubitFrame(OMEGA)


def _setup(t_X=4.1, mode="commensurate", **drive):
    params = dict(scheme="flux", amp_flux=0.3)
    params.update(drive)
    return GateSetup(FRAME, GateTiming(t_X), DriveParams(**params), mode)


# ---------------------------------------------------------------- envelopes


def test_cosine_envelope_peak_support_and_area():
    p = DrivePulse(amp_flux=0.7, start=1.0, duration=3.0)
    assert envelope(p, 2.5) == pytest.approx(0.7)
    assert envelope(p, 0.999) == 0.0 and envelope(p, 4.001) == 0.0
    assert envelope(p, 1.0) == 0.0 and envelope(p, 4.0) == pytest.approx(0.0, abs=1e-15)
    area, _ = quad(lambda t: float(envelope(p, t)), 1.0, 4.0)
    assert area == pytest.approx(0.7 * 3.0 / 2, rel=1e-10)
    assert envelope_area(p) == pytest.approx(1.5)
    t = np.linspace(0, 5, 501)
    np.testing.assert_allclose(envelope(p, t), 0.7 * hann(t, 1.0, 3.0), atol=1e-15)


def test_flat_top_envelope():
    p = DrivePulse.flat_top(2.0, 1.0, amp_charge=1.0)
    assert p.duration == 3.0
    assert envelope(p, 0.5) == pytest.approx(1.0)
    assert envelope(p, 1.5) == 1.0
    assert envelope(p, 0.25) == pytest.approx(0.5)
    area, _ = quad(lambda t: float(envelope(p, t)), 0, 3, points=[0.5, 2.5])
    assert area == pytest.approx(envelope_area(p), rel=1e-10)


def test_envelope_is_continuous():
    p = DrivePulse.flat_top(1.3, 0.8, amp_flux=1.0)
    t = np.linspace(-0.5, 3.0, 200001)
    assert np.max(np.abs(np.diff(envelope(p, t)))) < 1e-3


def test_invalid_envelopes_raise():
    with pytest.raises(InvalidEnvelope):
        DrivePulse(duration=1.0, rise_fall=2.0)
    with pytest.raises(InvalidEnvelope):
        DrivePulse(duration=0.0)
    with pytest.raises(InvalidEnvelope):
        DrivePulse(duration=3.0, plateau=2.0, rise_fall=0.5)


# ---------------------------------------------------------------- waveforms


def test_zero_relative_phase_gives_identical_lines():
    p = DrivePulse(amp_charge=0.4, amp_flux=0.4, rel_phase=0.0, carrier_freq=OMEGA, duration=8.0)
    t = np.linspace(0, 8, 1001)
    c, f = waveform(p, t)
    np.testing.assert_array_equal(c, f)


def test_quarter_period_lag_for_co_rotating_phase():
    p = DrivePulse.flat_top(40.0, 2.0, amp_charge=1.0, amp_flux=1.0, rel_phase=np.pi / 2, carrier_freq=OMEGA)
    t = np.linspace(10.0, 30.0, 777)
    _, flux = waveform(p, t)
    charge_later, _ = waveform(p, t - 4.1 / 4)
    np.testing.assert_allclose(flux, charge_later, atol=1e-12)


def test_single_line_drive():
    p = DrivePulse(amp_charge=0.5, carrier_freq=OMEGA, duration=4.0, detuning=0.3, carrier_phase=0.2)
    t = np.linspace(-1, 5, 333)
    c, f = waveform(p, t)
    assert np.all(f == 0)
    expected = 0.5 * hann(t, 0.0, 4.0) * np.cos(OMEGA * t + 0.2 - 0.3 * t)
    np.testing.assert_allclose(c, expected, atol=1e-14)


def test_line_delay_moves_flux_envelope_only():
    p = DrivePulse(amp_flux=1.0, carrier_freq=OMEGA, duration=4.0, line_delay=0.5)
    t = np.linspace(-1, 6, 701)
    _, f = waveform(p, t)
    np.testing.assert_allclose(f, hann(t, 0.5, 4.0) * np.cos(OMEGA * t), atol=1e-14)
    assert p.window() == (0.5, 4.5)


# ---------------------------------------------------------------- lattice


def test_snap_examples():
    lattice = CommensurateLattice(4.1 / 2)
    assert snap_to_lattice(lattice, 6.0, "X") == pytest.approx(6.15)
    assert snap_to_lattice(lattice, 0.0, "Y") == pytest.approx(1.025)
    assert snap_to_lattice(lattice, 4.1, "X") == 4.1


@settings(max_examples=200, deadline=None)
@given(st.floats(0, 1000, allow_nan=False), st.sampled_from(["X", "Y"]), st.floats(0, 1.5))
def test_snap_property(requested, axis, offset):
    lattice = CommensurateLattice(2.05, offset)
    t = snap_to_lattice(lattice, requested, axis)
    assert lattice.contains(t, axis)
    assert requested - lattice.resolution <= t < requested + lattice.period + lattice.resolution


# ---------------------------------------------------------------- compiler


def test_single_x_gate_commensurate():
    sched = _setup().schedule([X90])
    assert len(sched.pulses) == 1
    assert sched.pulses[0].start == 0.0
    assert sched.duration == pytest.approx(4.1)
    assert sched.pulses[0].duration == pytest.approx(4.1 - 0.1)


def test_virtual_z_emits_no_pulse_and_shifts_phase():
    plain = _setup().schedule([X90])
    turned = _setup().schedule([GateSpec.z(np.pi / 2), X90])
    assert len(turned.pulses) == 1
    assert turned.frame_phase == pytest.approx(np.pi / 2)
    # Rotation-axis azimuth is minus the carrier phase in this model.
    assert turned.pulses[0].carrier_phase - plain.pulses[0].carrier_phase == pytest.approx(np.pi / 2)


def test_virtual_z_composes_correctly(ideal_qubit):
    # A co-rotating drive on an ideal qubit is exact, so every word must match its target.
    frame = QubitFrame(ideal_qubit.omega01)
    tau = frame.tau_L
    amp = (np.pi / 4) / ((tau - 0.1) / 2)
    setup = GateSetup(frame, GateTiming(tau), DriveParams("circular", amp_charge=amp, amp_flux=amp))
    backend = SimulatorBackend(ideal_qubit)
    z = GateSpec.z(0.7)
    for word in ([z, X90], [X90, z, Y90], [z, Y90, GateSpec.z(-1.1), MX90]):
        target = np.eye(2)
        for g in word:
            target = ideal_unitary(g) @ target
        assert backend.gate_fidelity(setup.schedule(word), target) > 1 - 1e-9


def test_y_gate_on_shifted_lattice():
    sched = _setup().schedule([X90, Y90])
    x, y = sched.pulses
    assert sched.lattice.contains(y.start, "Y")
    assert y.start == pytest.approx(4.1 + 4.1 / 4)
    # Y slot = t_X + tau_L / 2: quarter-period pad before and after.
    assert sched.duration - 4.1 == pytest.approx(4.1 + 4.1 / 2)
    assert verify_schedule(sched) == []


def test_pi_rotation_is_two_half_pulses():
    sched = _setup().schedule([X180])
    assert len(sched.pulses) == 2
    assert sched.pulses[1].start == pytest.approx(4.1)


def test_incommensurate_back_to_back():
    sched = _setup(t_X=1.2 * 4.1, mode="incommensurate").schedule([X90, Y90, MX90])
    np.testing.assert_allclose([p.start for p in sched.pulses], [0, 4.92, 9.84])
    assert sched.lattice is None


def test_commensurability_violation():
    with pytest.raises(CommensurabilityViolation):
        _setup(t_X=1.2 * 4.1).schedule([X90])


def test_verify_schedule_reports_violations():
    lattice = CommensurateLattice(2.05)
    off = GateSchedule((DrivePulse(amp_flux=1, start=1.2 * 4.1, duration=2.0),), lattice=lattice, gap=0.1)
    found = verify_schedule(off)
    assert [v.rule for v in found] == ["CommensurabilityViolation"] and found[0].index == 0
    overlap = GateSchedule(
        (DrivePulse(amp_flux=1, start=0.0, duration=2.0), DrivePulse(amp_flux=1, start=1.0, duration=2.0)), gap=0.1
    )
    assert [v.rule for v in verify_schedule(overlap)] == ["Ordering"]
    tight = GateSchedule(
        (DrivePulse(amp_flux=1, start=0.0, duration=2.0), DrivePulse(amp_flux=1, start=2.05, duration=2.0)), gap=0.1
    )
    assert [v.rule for v in verify_schedule(tight)] == ["Gap"]


def test_lattice_shift_equals_carrier_phase_offset():
    delta = 0.37
    gates = [X90, Y90, MX90, X180]
    base = _setup().schedule(gates)
    shifted_setup = GateSetup(
        FRAME, GateTiming(4.1, lattice_offset=delta), DriveParams("flux", amp_flux=0.3, carrier_phase=-OMEGA * delta)
    )
    shifted = shifted_setup.schedule(gates)
    t = np.linspace(0, base.duration, 5001)
    for a, b in zip(base.pulses, shifted.pulses):
        assert b.start == pytest.approx(a.start + delta)
        np.testing.assert_allclose(waveform(b, t + delta)[1], waveform(a, t)[1], atol=1e-12)


def test_half_period_shift_flips_carrier_sign():
    p = DrivePulse(amp_flux=1.0, carrier_freq=OMEGA, duration=4.0)
    t = np.linspace(0, 4, 401)
    half = DrivePulse(amp_flux=1.0, carrier_freq=OMEGA, duration=4.0, start=4.1 / 2)
    full = DrivePulse(amp_flux=1.0, carrier_freq=OMEGA, duration=4.0, start=4.1)
    np.testing.assert_allclose(waveform(half, t + 4.1 / 2)[1], -waveform(p, t)[1], atol=1e-12)
    np.testing.assert_allclose(waveform(full, t + 4.1)[1], waveform(p, t)[1], atol=1e-12)


def test_compilation_is_deterministic():
    gates = [X90, GateSpec.z(0.3), Y90, MX90]
    assert _setup().schedule(gates) == _setup().schedule(gates)


def test_parse_gate_labels():
    assert parse_gate("-X90") == MX90
    assert parse_gate(" Z(0.5) ") == GateSpec.z(0.5)
    with pytest.raises(ValueError):
        parse_gate("H")


def test_compile_rejects_unknown_mode():
    with pytest.raises(ValueError):
        compile_gates([X90], "sometimes", GateTiming(4.1), FRAME, DriveParams())


# ---------------------------------------------------------------- export


def test_schedule_json_roundtrip(tmp_path):
    sched = _setup().schedule([X90, Y90, GateSpec.z(0.2), MX90])
    path = write_schedule_json(sched, tmp_path / "s.json")
    assert read_schedule_json(path) == sched
    data = json.loads(path.read_text())
    assert set(data["pulses"][0]) >= {"amp_charge", "amp_flux", "rel_phase", "carrier_freq", "start", "duration"}


def test_waveform_csv_sampling(tmp_path):
    sched = _setup().schedule([X90, Y90])
    charge_path, flux_path = write_waveform_csv(sched, tmp_path / "wave")
    t, flux = read_waveform_csv(flux_path)
    assert t[1] - t[0] == pytest.approx(1 / 64)
    np.testing.assert_allclose(flux, schedule_fields(sched, t)[1], atol=1e-15)
    assert charge_path.name == "wave_charge.csv"
