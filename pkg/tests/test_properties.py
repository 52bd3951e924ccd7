"""Property-based checks of the invariants each module promises."""

import math

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from conftest import DESK
from spintransfer import io
from spintransfer.algebra import PRODUCT_OPERATORS, conjugate, op, rotation, trace_inner, transfer_efficiency
from spintransfer.analysis import stft
from spintransfer.decomp import (
    FastParams,
    SlowParams,
    assemble_KAK,
    canonical_angle,
    check_alpha_beta_class,
    closed_form_iz_residual,
)
from spintransfer.dynamics import ControlSequence, frame_transform, propagate
from spintransfer.optimizer import _project_disks, _lowpass
from spintransfer.pulses import TO_IX, minimum_time, synth_conventional_two_tone, synth_to_ix_square, synth_to_iz

PROPS = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
angles = st.floats(-20, 20, allow_nan=False)
labels = st.sampled_from(PRODUCT_OPERATORS)


def bounded_controls(n_min=1, n_max=40):
    unit = st.floats(-1, 1, allow_nan=False)
    return st.integers(n_min, n_max).flatmap(
        lambda n: arrays(float, (n, 4), elements=unit).map(
            lambda c: c * np.array([DESK.u_max, DESK.u_max, DESK.v_max, DESK.v_max]) / math.sqrt(2)))


@PROPS
@given(labels, angles, angles)
def test_rotation_group_law(label, a, b):
    assert np.allclose(rotation(label, a) @ rotation(label, b), rotation(label, a + b), atol=1e-10)


@PROPS
@given(labels, labels, angles)
def test_conjugation_preserves_inner_products(p, q, theta):
    u = rotation("2SxIy", theta) @ rotation("Sz", 0.3 * theta)
    assert abs(trace_inner(conjugate(u, op(p)), conjugate(u, op(q))) - trace_inner(op(p), op(q))) < 1e-12


@PROPS
@given(labels, labels, angles)
def test_efficiency_bounded(start, target, theta):
    rho = conjugate(rotation("SbetaIy", theta) @ rotation("Sx", theta / 3), op(start))
    assert abs(transfer_efficiency(rho, op(target))) <= 1 + 1e-12


@PROPS
@given(bounded_controls(), st.floats(1e-10, 1e-8))
def test_propagation_unitary_and_hermitian(c, dt):
    traj = propagate(ControlSequence.from_array(dt, c), DESK, record=True, initial=op("2SzIz"))
    u = traj.final_propagator
    assert np.abs(u @ u.conj().T - np.eye(4)).max() < 1e-12
    assert np.abs(traj.states - np.conj(np.swapaxes(traj.states, 1, 2))).max() < 1e-12
    assert np.abs(np.einsum("kii->k", traj.states)).max() < 1e-12


@PROPS
@given(bounded_controls(), st.floats(1e-10, 1e-8))
def test_frames_agree(c, dt):
    seq = ControlSequence.from_array(dt, c)
    rot = propagate(seq, DESK, "rotating", op("Sz")).final_state
    inter = propagate(seq, DESK, "interaction", op("Sz")).final_state
    assert np.abs(frame_transform(rot, "rotating", "interaction", DESK, seq.duration) - inter).max() < 1e-9


@PROPS
@given(st.floats(1e-7, 3e-5), st.floats(1e-9, 1e-8))
def test_synthesized_pulses_respect_bounds(T, dt):
    for seq in (synth_to_iz(DESK, T, dt), synth_to_ix_square(DESK, T, dt=dt),
                synth_to_ix_square(DESK, T, dt=dt, align=False), synth_conventional_two_tone(DESK, T=T, dt=dt)):
        seq.validate(DESK)
        assert seq.dt <= dt * (1 + 1e-12)


@PROPS
@given(st.floats(0.05, 1.0))
def test_square_wave_never_beats_time_bound(frac):
    # eta <= sin(4 v T) is the time bound in efficiency form; reaching 0.99 needs T >= 0.91 T_min
    T = frac * minimum_time(TO_IX, DESK.v_max)
    seq = synth_to_ix_square(DESK, T)
    eta = transfer_efficiency(propagate(seq, DESK).final_state, op("Ix"))
    assert eta <= math.sin(min(4 * DESK.v_max * seq.duration, math.pi / 2)) + 1e-3


@PROPS
@given(arrays(float, (30, 4), elements=st.floats(-1e7, 1e7, allow_nan=False)))
def test_disk_projection_idempotent(c):
    once = _project_disks(c, DESK.u_max, DESK.v_max)
    assert np.array_equal(_project_disks(once, DESK.u_max, DESK.v_max), once)
    assert np.hypot(once[:, 0], once[:, 1]).max() <= DESK.u_max * (1 + 1e-12)
    assert np.hypot(once[:, 2], once[:, 3]).max() <= DESK.v_max * (1 + 1e-12)


@PROPS
@given(arrays(float, (64, 4), elements=st.floats(-1e4, 1e4, allow_nan=False)), st.floats(1e6, 1.6e8))
def test_lowpass_contracts_energy(c, cutoff):
    out = _lowpass(c, 3.125e-9, cutoff)
    assert np.sum(out ** 2) <= np.sum(c ** 2) * (1 + 1e-12) + 1e-12
    assert np.allclose(_lowpass(out, 3.125e-9, cutoff), out, atol=1e-8)


@PROPS
@given(arrays(complex, st.integers(16, 300), elements=st.complex_numbers(max_magnitude=1e3, allow_nan=False,
                                                                      allow_infinity=False)),
       st.integers(4, 16))
def test_stft_parseval(x, L):
    spec = stft(x, 1e-9, L)
    assert math.isclose(spec.energy(), float(np.sum(np.abs(x) ** 2)), rel_tol=1e-9, abs_tol=1e-9)


@PROPS
@given(arrays(float, (5, 4), elements=st.floats(-1e9, 1e9, allow_nan=False, allow_subnormal=True)),
       st.floats(1e-15, 1e-3))
def test_pulse_file_round_trip(tmp_path_factory, c, dt):
    path = tmp_path_factory.mktemp("rt") / "p.csv"
    seq = ControlSequence.from_array(dt, c)
    back = io.read_pulse_file(io.write_pulse_file(seq, path))
    assert back.dt == dt and np.array_equal(back.controls, seq.controls)


@PROPS
@given(st.floats(1e3, 1e9), st.integers(0, 2**31), st.one_of(st.none(), st.floats(1e3, 1e8)),
       st.sampled_from(["Iz", "Ix", "Iy"]))
def test_config_dump_round_trip(tmp_path_factory, A, seed, cutoff, target):
    cfg = io.RunConfig(A=A, seed=seed, cutoff=cutoff, target=target)
    path = tmp_path_factory.mktemp("cfg") / "c.cfg"
    path.write_text(io.dump_config(cfg))
    assert io.load_config(path) == cfg


@PROPS
@given(arrays(float, 7, elements=angles), arrays(float, 3, elements=angles), st.booleans(),
       st.integers(-3, 3), st.integers(-3, 3))
def test_iz_class_invariant_under_k1_symmetry(a, b_tail, branch, z1, z2):
    # K1 commutes with Iz and the last three K2 factors commute with 2SzIz; the
    # (pi, 0) branch needs an electron pi pulse in K2 to flip the sign of 2SzIz first
    alpha, beta = (2 * math.pi * z1, math.pi + 2 * math.pi * z2) if branch else \
        (math.pi + 2 * math.pi * z1, 2 * math.pi * z2)
    b = np.concatenate([[0.0 if branch else math.pi], np.zeros(3), b_tail])
    u = assemble_KAK(FastParams(a, b), SlowParams(alpha, beta))
    assert np.allclose(conjugate(u, op("2SzIz")), op("Iz"), atol=1e-9)


@PROPS
@given(angles, angles, st.integers(-3, 3), st.integers(-3, 3), st.sampled_from(["Iz", "Ix"]))
def test_class_check_periodic(alpha, beta, k1, k2, target):
    sp = SlowParams(alpha, beta)
    shifted = SlowParams(alpha + 2 * math.pi * k1, beta + 2 * math.pi * k2)
    # stay clear of the 1e-9 class boundary, where rounding could flip the answer
    assert check_alpha_beta_class(sp, target, tol=1e-6) == check_alpha_beta_class(shifted, target, tol=1e-6)


@PROPS
@given(angles, angles)
def test_closed_form_iz_residual_range(alpha, beta):
    r = closed_form_iz_residual(alpha, beta)
    assert 0 <= r <= 2 + 1e-12


@PROPS
@given(arrays(float, 20, elements=st.floats(-100, 100, allow_nan=False)))
def test_canonical_angle_idempotent(x):
    y = canonical_angle(x)
    assert np.allclose(canonical_angle(y), y, atol=1e-12)
    assert np.all((y > -2 * math.pi) & (y <= 2 * math.pi))
