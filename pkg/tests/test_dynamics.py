import math
import warnings

import numpy as np
import pytest

from conftest import with_ratio
from spintransfer.algebra import basis_operator, conjugate, dagger, op, rotation, transfer_efficiency, unitarity_error
from spintransfer.dynamics import (
    ControlSequence,
    FastOp,
    SystemParams,
    coupling_rotation,
    frame_transform,
    interaction_hamiltonian,
    lab_hamiltonian,
    ordered_product,
    phase_unwind,
    prefix_products,
    propagate,
    realize_fast_ops,
    rotating_hamiltonian,
    step_propagators,
)
from spintransfer.pulses import synth_to_ix_square, synth_to_iz

TWO_PI = 2 * math.pi


def random_sequence(rng, p, n, dt=None, fast=False):
    c = rng.uniform(-1, 1, (n, 4)) * np.array([p.u_max, p.u_max, p.v_max, p.v_max]) / math.sqrt(2)
    ops = []
    if fast:
        ops = [FastOp.rotation(int(rng.integers(0, n + 1)), op("Sy"), rng.uniform(0, 3)),
               FastOp.rotation(int(rng.integers(0, n + 1)), op("2SzIz"), rng.uniform(0, 3))]
    return ControlSequence.from_array(dt or p.default_dt, c, ops)


# --------------------------------------------------------------------------- Hamiltonians


def test_rotating_hamiltonian_drift_only(desk):
    assert np.allclose(rotating_hamiltonian(desk), TWO_PI * desk.A * op("Sz") @ op("Iz"))


def test_rotating_hamiltonian_controls(desk):
    drift = rotating_hamiltonian(desk)
    assert np.allclose(rotating_hamiltonian(desk, u_x=desk.u_max) - drift, TWO_PI * desk.u_max * op("Sx"))
    assert np.allclose(rotating_hamiltonian(desk, v_y=5e3) - drift, TWO_PI * 5e3 * op("Iy"))


def test_rotating_hamiltonian_offset():
    p = SystemParams(A=1e6, u_max=1e5, v_max=1e3, omega_I_off=2e4)
    assert np.allclose(rotating_hamiltonian(p) - TWO_PI * p.A * op("Sz") @ op("Iz"), 2e4 * op("Iz"))


def test_interaction_hamiltonian_at_zero(desk):
    assert np.allclose(interaction_hamiltonian(desk, 0, 0, 0, 3e3, 0.0), TWO_PI * 3e3 * op("Iy"))


def test_interaction_hamiltonian_quarter_period(desk):
    h = interaction_hamiltonian(desk, 0, 0, 3e3, 0, 1 / (2 * desk.A))
    assert np.allclose(h, -TWO_PI * 3e3 * op("2SzIy"))


@pytest.mark.parametrize("t", [0.0, 1.3e-8, 7.7e-8, 2.51e-7])
def test_beta_line_drive_is_constant(desk, t):
    v = desk.v_max
    ph = math.pi * desk.A * t
    h = interaction_hamiltonian(desk, 0, 0, v * math.sin(ph), v * math.cos(ph), t)
    sb = op("SbetaIy")
    coeff = np.vdot(sb, h).real / np.vdot(sb, sb).real
    assert coeff == pytest.approx(TWO_PI * v, rel=1e-12)


def test_interaction_hamiltonian_matches_frame_change(desk, rng):
    ctrl = rng.normal(size=4) * 1e4
    t = 3.7e-8
    w = coupling_rotation(desk, t)
    expected = dagger(w) @ (rotating_hamiltonian(desk, *ctrl) - rotating_hamiltonian(desk)) @ w
    assert np.allclose(interaction_hamiltonian(desk, *ctrl, t), expected, atol=1e-6)


def test_interaction_frame_rejects_offset():
    p = SystemParams(A=1e6, u_max=1e5, v_max=1e3, omega_I_off=10.0)
    with pytest.raises(ValueError):
        interaction_hamiltonian(p, 0, 0, 0, 0, 0.0)


LAB = SystemParams(A=10e6, u_max=1e6, v_max=20e3, omega_S=TWO_PI * 9.4e9, omega_I=TWO_PI * 14e6,
                   omega_I_rf=TWO_PI * 14e6)


def test_lab_drift_eigenvalues():
    ev = np.sort(np.linalg.eigvalsh(lab_hamiltonian(LAB, 0.0, 0.0, 0.0)))
    ws, wi, a = LAB.omega_S, LAB.omega_I, TWO_PI * LAB.A
    expected = sorted(s1 * ws / 2 + s2 * wi / 2 + s1 * s2 * a / 4 for s1 in (1, -1) for s2 in (1, -1))
    assert np.allclose(ev, expected, rtol=1e-14)


def test_lab_square_carrier_coefficient():
    v = LAB.v_max
    t = 1.23e-7

    def v_tilde(tt):
        return 4 * v * math.cos(LAB.omega_I_rf * tt - math.pi / 2) * np.sign(math.sin(math.pi * LAB.A * tt)) / 2

    h = lab_hamiltonian(LAB, 0.0, v_tilde, t)
    coeff = np.vdot(op("Ix"), h).real
    assert coeff == pytest.approx(TWO_PI * v_tilde(t), rel=1e-12)


def test_lab_constant_field(desk):
    h0 = lab_hamiltonian(LAB, 0.0, 0.0, 0.0)
    assert np.allclose(lab_hamiltonian(LAB, 0.0, 123.0, 0.0) - h0, TWO_PI * 123.0 * op("Ix"))
    with pytest.raises(ValueError):
        lab_hamiltonian(desk, 0.0, 0.0, 0.0)


# --------------------------------------------------------------------------- frames


def test_frame_transform_at_zero_is_identity(desk):
    x = op("2SxIy")
    assert np.allclose(frame_transform(x, "rotating", "interaction", desk, 0.0), x)


def test_frame_transform_ix(desk):
    out = frame_transform(op("Ix"), "rotating", "interaction", desk, 1 / (2 * desk.A))
    assert np.allclose(out, -op("2SzIy"), atol=1e-12)


def test_frame_round_trip(desk, rng):
    x = op("Sx") + 0.3 * op("2SyIx") - op("Iy")
    t = rng.uniform(0, 1e-5)
    y = frame_transform(frame_transform(x, "rotating", "interaction", desk, t), "interaction", "rotating", desk, t)
    assert np.abs(y - x).max() < 1e-12


def test_frame_transform_rejects_lab(desk):
    with pytest.raises(ValueError):
        frame_transform(op("Ix"), "lab", "rotating", desk, 0.0)


@pytest.mark.parametrize("k", [1, 2, 5])
def test_phase_unwind_even_periods_identity(desk, k):
    assert np.allclose(phase_unwind(desk, 2 * k / desk.A), np.eye(4), atol=1e-9)


def test_phase_unwind_odd_period_is_coupling_pi_rotation(desk):
    u = phase_unwind(desk, 1 / desk.A)
    assert np.allclose(u, rotation("2SzIz", -math.pi), atol=1e-9)
    assert np.allclose(conjugate(u, op("Ix")), -op("Ix"), atol=1e-9)


def test_phase_unwind_half_period(desk):
    expected = rotation("2SzIz", -math.pi / 2)  # exp(+i pi SzIz)
    assert np.allclose(phase_unwind(desk, 1 / (2 * desk.A)), expected, atol=1e-12)


def test_phase_unwind_recovers_selective_rotation():
    p = with_ratio(500)
    seq = synth_to_ix_square(p, prelude=False, unwind=False)
    u_int = propagate(seq, p, "interaction", record=False).final_propagator
    u_rot = coupling_rotation(p, seq.duration) @ u_int
    total = phase_unwind(p, seq.duration) @ u_rot
    target = rotation("2SzIy", math.pi / 2)  # exp(-i pi SzIy)
    phase = np.trace(dagger(target) @ total)
    aligned = total * np.conj(phase) / abs(phase)
    assert np.linalg.norm(aligned - target, 2) < 0.05


# --------------------------------------------------------------------------- propagation


def test_square_wave_interaction_frame_to_ix():
    p = with_ratio(500)
    seq = synth_to_ix_square(p, prelude=False, unwind=False)
    final = propagate(seq, p, "interaction", op("2SzIz")).final_state
    assert transfer_efficiency(final, op("Ix")) >= 0.99


def test_sinusoidal_interaction_frame_to_iz():
    p = with_ratio(500)
    seq = synth_to_iz(p, prelude=False)
    final = propagate(seq, p, "interaction", op("2SzIz")).final_state
    assert transfer_efficiency(final, op("Iz")) >= 0.99


def test_constant_field_pi_rotation():
    # the coupling cannot be switched off (A > 0), so make it negligible
    v = 1e4
    p = SystemParams(A=1e-9, u_max=0, v_max=v)
    n = 500
    seq = ControlSequence.from_array(1 / (2 * v) / n, np.tile([0, 0, 0, v], (n, 1)))
    final = propagate(seq, p, "rotating", op("Iz")).final_state
    assert np.allclose(final, -op("Iz"), atol=1e-10)


def test_trajectory_records_initial_and_fast_ops(desk, rng):
    seq = random_sequence(rng, desk, 50, fast=True)
    traj = propagate(seq, desk, record=True, initial=op("Sz"))
    assert np.array_equal(traj.states[0], op("Sz"))
    assert len(traj.states) == seq.steps + len(seq.fast_ops) + 1
    assert np.allclose(traj.final_state, conjugate(traj.final_propagator, op("Sz")))
    assert np.allclose(traj.state_at(seq.duration), traj.final_state)
    assert unitarity_error(traj.final_propagator) < 1e-12


def test_trace_and_hermiticity_preserved(desk, rng):
    traj = propagate(random_sequence(rng, desk, 200, fast=True), desk, record=True)
    assert np.abs(np.trace(traj.states, axis1=1, axis2=2)).max() < 1e-12
    assert np.abs(traj.states - dagger(traj.states)).max() < 1e-12


@pytest.mark.parametrize("seed", range(5))
def test_rotating_then_transform_equals_interaction(desk, seed):
    rng = np.random.default_rng(seed)
    seq = random_sequence(rng, desk, 300, fast=True)
    rho0 = op("2SzIz")
    rot = propagate(seq, desk, "rotating", rho0).final_state
    inter = propagate(seq, desk, "interaction", rho0).final_state
    moved = frame_transform(rot, "rotating", "interaction", desk, seq.duration)
    assert np.abs(moved - inter).max() < 1e-9


def test_unitarity_after_1e5_steps(desk, rng):
    seq = random_sequence(rng, desk, 100_000)
    u = propagate(seq, desk, validate=False).final_propagator
    assert unitarity_error(u) < 1e-10


def test_prefix_products_match_sequential(rng):
    us = np.stack([rotation("Sx", a) @ rotation("2SyIz", b) for a, b in rng.uniform(0, 6, (37, 2))])
    cum = prefix_products(us)
    acc = np.eye(4)
    for k in range(len(us)):
        acc = us[k] @ acc
        assert np.allclose(cum[k], acc, atol=1e-12)
    assert np.allclose(ordered_product(us), acc, atol=1e-12)


def test_second_order_convergence_in_dt(desk):
    p = with_ratio(500)
    T = 5e-6

    def final(n):
        dt = T / n
        t = (np.arange(n) + 0.5) * dt
        c = np.column_stack([0.02 * p.u_max * np.sin(2e5 * t), np.zeros(n),
                             p.v_max * np.cos(3e5 * t), p.v_max * np.sin(1e5 * t) * 0.5])
        return propagate(ControlSequence.from_array(dt, c), p, initial=op("2SzIz")).final_state

    a, b, c = final(200), final(400), final(800)
    order = math.log2(np.abs(a - b).max() / np.abs(b - c).max())
    assert order >= 1.9


def test_sequence_validation(desk):
    bad = ControlSequence.from_array(desk.default_dt, np.array([[0, 0, desk.v_max, desk.v_max]]))
    with pytest.raises(ValueError):
        propagate(bad, desk)
    with pytest.raises(ValueError):
        ControlSequence.from_array(1e-9, np.zeros((3, 4)), [FastOp(4, np.eye(4))])
    with pytest.raises(ValueError):
        ControlSequence.from_array(1e-9, np.zeros((3, 4)), [FastOp(0, 2 * np.eye(4))])
    with pytest.raises(ValueError):
        ControlSequence.from_array(0.0, np.zeros((3, 4)))


def test_regime_warning():
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        assert not SystemParams(A=1e5, u_max=1e6, v_max=2e4).check_regime()
        assert w
    assert with_ratio(500).check_regime()


def test_step_propagators_lab_frame_drift():
    seq = ControlSequence.zeros(1e-11, 3)
    us = step_propagators(seq, LAB, "lab")
    h0 = lab_hamiltonian(LAB, 0.0, 0.0, 0.0)
    w, v = np.linalg.eigh(h0)
    expected = v @ np.diag(np.exp(-1j * w * 1e-11)) @ dagger(v)
    assert np.allclose(us, expected, atol=1e-12)
    with pytest.raises(ValueError):
        step_propagators(ControlSequence.from_array(1e-11, [[0, 1.0, 0, 0]]), LAB, "lab")


def test_finite_fast_ops_at_desk_scale():
    p = with_ratio(500)
    seq = synth_to_iz(p)
    finite = realize_fast_ops(seq, p)
    assert not finite.fast_ops
    # two pi/2 pulses at u_max (80 steps each) and a 1/(2A) delay (16 steps)
    assert finite.steps == seq.steps + 80 + 80 + 16
    # u_max < A: the electron lines sit +-A/2 off resonance, so finite pulses are far from ideal
    eta_finite = transfer_efficiency(propagate(finite, p).final_state, op("Iz"))
    assert eta_finite < 0.5


def test_finite_fast_ops_hard_pulse_limit():
    p = SystemParams(A=1e6, u_max=50e6, v_max=2e3)
    seq = synth_to_iz(p)
    finite = realize_fast_ops(seq, p)
    eta_ideal = transfer_efficiency(propagate(seq, p).final_state, op("Iz"))
    eta_finite = transfer_efficiency(propagate(finite, p, validate=False).final_state, op("Iz"))
    assert eta_ideal > 0.999
    assert eta_finite > 0.95
