"""Hamiltonians in the lab, rotating and interaction frames, and piecewise-constant propagation.

Units: control amplitudes and the hyperfine coupling ``A`` are in Hz, Larmor and
carrier frequencies are angular (rad/s), Hamiltonians are returned in rad/s.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .algebra import basis_operator, conjugate, dagger, expm_hermitian, unitarity_error

TWO_PI = 2 * math.pi
FRAMES = ("lab", "rotating", "interaction")
SAMPLES_PER_PERIOD = 32
REGIME_RATIO = 20.0

_SX, _SY, _SZ = (basis_operator(k) for k in ("Sx", "Sy", "Sz"))
_IX, _IY, _IZ = (basis_operator(k) for k in ("Ix", "Iy", "Iz"))
_SZIZ = basis_operator("2SzIz") / 2
# rotating-frame control operators, channel order (ux, uy, vx, vy)
CONTROL_OPERATORS = np.stack([_SX, _SY, _IX, _IY])
CHANNELS = ("ux", "uy", "vx", "vy")


@dataclass(frozen=True)
class SystemParams:
    """Physical constants of the electron-nuclear pair.

    ``A``, ``u_max`` and ``v_max`` are in Hz; ``omega_I_off`` and the lab-frame
    carrier frequencies are angular frequencies in rad/s.
    """

    A: float
    u_max: float
    v_max: float
    omega_I_off: float = 0.0
    omega_S: float | None = None
    omega_I: float | None = None
    omega_I_rf: float | None = None

    def __post_init__(self):
        if not self.A > 0:
            raise ValueError("hyperfine coupling A must be positive")
        if self.u_max < 0 or self.v_max < 0:
            raise ValueError("amplitude bounds must be non-negative")

    @property
    def default_dt(self) -> float:
        return 1.0 / (SAMPLES_PER_PERIOD * self.A)

    def check_regime(self) -> bool:
        """Warn unless ``A`` and ``u_max`` are both at least 20 times ``v_max``."""
        ok = self.A >= REGIME_RATIO * self.v_max and self.u_max >= REGIME_RATIO * self.v_max
        if not ok:
            warnings.warn(
                f"time-scale separation weak: A/v_max={self.A / self.v_max:.3g}, "
                f"u_max/v_max={self.u_max / self.v_max:.3g} (want >= {REGIME_RATIO:g})",
                stacklevel=2,
            )
        return ok

    @property
    def has_lab_carriers(self) -> bool:
        return self.omega_S is not None and self.omega_I is not None


@dataclass(frozen=True)
class FastOp:
    """Instantaneous unitary applied just before step ``index``.

    When the operation is ``exp(-i angle G)`` for a known Hermitian ``G`` both are
    kept so that :func:`realize_fast_ops` can replace it by finite control segments.
    """

    index: int
    unitary: np.ndarray
    label: str = ""
    generator: np.ndarray | None = None
    angle: float | None = None

    @classmethod
    def rotation(cls, index: int, generator: np.ndarray, angle: float, label: str = "") -> "FastOp":
        g = np.asarray(generator, dtype=complex)
        return cls(index, expm_hermitian(g, angle), label, g, float(angle))


@dataclass(frozen=True)
class ControlSequence:
    """Piecewise-constant controls on a uniform grid, amplitudes in Hz."""

    dt: float
    ux: np.ndarray
    uy: np.ndarray
    vx: np.ndarray
    vy: np.ndarray
    fast_ops: tuple[FastOp, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        arrays = [np.array(getattr(self, c), dtype=float) for c in CHANNELS]
        n = len(arrays[0])
        if any(a.shape != (n,) for a in arrays):
            raise ValueError("all channels must be 1-D arrays of equal length")
        for c, a in zip(CHANNELS, arrays):
            a.setflags(write=False)
            object.__setattr__(self, c, a)
        ops = tuple(sorted(self.fast_ops, key=lambda f: f.index))
        for f in ops:
            if not 0 <= f.index <= n:
                raise ValueError(f"fast op index {f.index} outside [0, {n}]")
            if unitarity_error(f.unitary) > 1e-10:
                raise ValueError(f"fast op {f.label or f.index} is not unitary")
        object.__setattr__(self, "fast_ops", ops)

    @classmethod
    def from_array(cls, dt: float, controls: np.ndarray, fast_ops: Sequence[FastOp] = ()) -> "ControlSequence":
        c = np.asarray(controls, dtype=float)
        return cls(dt, c[:, 0], c[:, 1], c[:, 2], c[:, 3], tuple(fast_ops))

    @classmethod
    def zeros(cls, dt: float, steps: int, fast_ops: Sequence[FastOp] = ()) -> "ControlSequence":
        return cls.from_array(dt, np.zeros((steps, 4)), fast_ops)

    @property
    def steps(self) -> int:
        return len(self.ux)

    @property
    def duration(self) -> float:
        return self.steps * self.dt

    @property
    def controls(self) -> np.ndarray:
        """``(N, 4)`` array with columns ux, uy, vx, vy."""
        return np.column_stack([self.ux, self.uy, self.vx, self.vy])

    @property
    def edges(self) -> np.ndarray:
        return np.arange(self.steps + 1) * self.dt

    @property
    def midpoints(self) -> np.ndarray:
        return (np.arange(self.steps) + 0.5) * self.dt

    def with_controls(self, controls: np.ndarray) -> "ControlSequence":
        return ControlSequence.from_array(self.dt, controls, self.fast_ops)

    def with_fast_ops(self, fast_ops: Sequence[FastOp]) -> "ControlSequence":
        return replace(self, fast_ops=tuple(fast_ops))

    def max_violation(self, p: SystemParams) -> float:
        """Largest excess of the electron/nuclear amplitudes over their bounds (Hz)."""
        u = np.hypot(self.ux, self.uy) - p.u_max
        v = np.hypot(self.vx, self.vy) - p.v_max
        return float(max(u.max(initial=-np.inf), v.max(initial=-np.inf), 0.0))

    def validate(self, p: SystemParams, rtol: float = 1e-12) -> None:
        tol = rtol * max(p.u_max, p.v_max, 1.0)
        if self.max_violation(p) > tol:
            raise ValueError(f"amplitude bound exceeded by {self.max_violation(p):.3g} Hz")


@dataclass(frozen=True)
class Trajectory:
    """States after every elementary operation.

    Fast operations contribute their own entry with a repeated time stamp, so
    ``states[0]`` is the supplied initial state and ``states[-1]`` the final one.
    With ``record=False`` only those two entries are kept.
    """

    times: np.ndarray
    states: np.ndarray
    final_propagator: np.ndarray
    frame: str

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def state_at(self, t: float, rtol: float = 1e-9) -> np.ndarray:
        """Last recorded state with time stamp ``<= t``."""
        idx = np.searchsorted(self.times, t * (1 + rtol) + 1e-300, side="right") - 1
        return self.states[max(idx, 0)]


# --------------------------------------------------------------------------- Hamiltonians


def drift(p: SystemParams) -> np.ndarray:
    return p.omega_I_off * _IZ + TWO_PI * p.A * _SZIZ


def rotating_hamiltonian(p: SystemParams, u_x: float = 0.0, u_y: float = 0.0,
                         v_x: float = 0.0, v_y: float = 0.0) -> np.ndarray:
    return drift(p) + TWO_PI * (u_x * _SX + u_y * _SY + v_x * _IX + v_y * _IY)


def rotating_hamiltonians(p: SystemParams, controls: np.ndarray) -> np.ndarray:
    """Stack of rotating-frame Hamiltonians for an ``(N, 4)`` control array."""
    return drift(p) + TWO_PI * np.einsum("nc,cij->nij", controls, CONTROL_OPERATORS)


def _require_zero_offset(p: SystemParams) -> None:
    if p.omega_I_off != 0:
        raise ValueError("the interaction frame requires a zero nuclear offset")


def interaction_hamiltonian(p: SystemParams, u_x: float, u_y: float, v_x: float, v_y: float,
                            t: float) -> np.ndarray:
    """Rotating-frame controls seen in the frame co-rotating with ``2 pi A SzIz``."""
    _require_zero_offset(p)
    c, s = math.cos(math.pi * p.A * t), math.sin(math.pi * p.A * t)
    b = basis_operator
    return TWO_PI * (
        u_x * (c * b("Sx") - s * b("2SyIz"))
        + u_y * (c * b("Sy") + s * b("2SxIz"))
        + v_x * (c * b("Ix") - s * b("2SzIy"))
        + v_y * (c * b("Iy") + s * b("2SzIx"))
    )


def lab_hamiltonian(p: SystemParams, u_tilde_x: float | Callable[[float], float],
                    v_tilde_x: float | Callable[[float], float], t: float) -> np.ndarray:
    """Lab-frame Hamiltonian; field amplitudes may be given as functions of ``t``."""
    if not p.has_lab_carriers:
        raise ValueError("lab-frame Larmor frequencies omega_S and omega_I are not set")
    u = u_tilde_x(t) if callable(u_tilde_x) else u_tilde_x
    v = v_tilde_x(t) if callable(v_tilde_x) else v_tilde_x
    return (p.omega_S * _SZ + p.omega_I * _IZ + TWO_PI * p.A * _SZIZ
            + TWO_PI * (u * _SX + v * _IX))


# --------------------------------------------------------------------------- frames


def coupling_rotation(p: SystemParams, t: float | np.ndarray) -> np.ndarray:
    """``exp(-i 2 pi A SzIz t)`` (diagonal, vectorized over ``t``)."""
    t = np.asarray(t, dtype=float)
    d = np.diagonal(_SZIZ).real
    phases = np.exp(-1j * TWO_PI * p.A * t[..., None] * d)
    out = np.zeros(t.shape + (4, 4), dtype=complex)
    idx = np.arange(4)
    out[..., idx, idx] = phases
    return out


def frame_transform(state: np.ndarray, from_frame: str, to_frame: str, p: SystemParams,
                    t: float) -> np.ndarray:
    """Map an operator between the rotating and interaction frames at time ``t``."""
    pair = (from_frame, to_frame)
    if from_frame == to_frame and from_frame in ("rotating", "interaction"):
        return np.array(state)
    _require_zero_offset(p)
    w = coupling_rotation(p, t)
    if pair == ("rotating", "interaction"):
        return dagger(w) @ state @ w
    if pair == ("interaction", "rotating"):
        return w @ state @ dagger(w)
    raise ValueError(f"unsupported frame pair {from_frame!r} -> {to_frame!r}")


def phase_unwind(p: SystemParams, T: float) -> np.ndarray:
    """Instantaneous ``exp(+i 2 pi A T SzIz)`` removing the coupling phase picked up over ``T``.

    The angle is reduced modulo 4 pi, the period of ``exp(i theta SzIz)`` up to a
    global sign.
    """
    angle = math.remainder(TWO_PI * p.A * T, 4 * math.pi)
    return expm_hermitian(_SZIZ, -angle)


# --------------------------------------------------------------------------- propagation


def prefix_products(us: np.ndarray) -> np.ndarray:
    """Cumulative products ``P_k = U_k ... U_1`` of a stack of matrices (log-depth scan)."""
    p = np.array(us, dtype=complex)
    n = len(p)
    shift = 1
    while shift < n:
        nxt = p.copy()
        nxt[shift:] = p[shift:] @ p[:-shift]
        p = nxt
        shift *= 2
    return p


def ordered_product(us: np.ndarray) -> np.ndarray:
    """``U_N ... U_1`` by pairwise reduction."""
    p = np.asarray(us, dtype=complex)
    if len(p) == 0:
        return np.eye(4, dtype=complex)
    while len(p) > 1:
        even = len(p) // 2 * 2
        merged = p[1:even:2] @ p[0:even:2]
        p = np.concatenate([merged, p[even:]]) if len(p) % 2 else merged
    return p[0]


def step_propagators(seq: ControlSequence, p: SystemParams, frame: str = "rotating") -> np.ndarray:
    """One unitary per control step in the requested frame."""
    dt = seq.dt
    if frame == "rotating":
        return expm_hermitian(rotating_hamiltonians(p, seq.controls), dt)
    if frame == "interaction":
        _require_zero_offset(p)
        u = expm_hermitian(rotating_hamiltonians(p, seq.controls), dt)
        edges = seq.edges
        w = coupling_rotation(p, edges)
        return dagger(w[1:]) @ u @ w[:-1]
    if frame == "lab":
        if not p.has_lab_carriers:
            raise ValueError("lab-frame propagation needs omega_S and omega_I")
        if np.any(seq.uy) or np.any(seq.vy):
            raise ValueError("lab frame has single x-coils; uy and vy must be zero")
        h0 = p.omega_S * _SZ + p.omega_I * _IZ + TWO_PI * p.A * _SZIZ
        h = h0 + TWO_PI * (seq.ux[:, None, None] * _SX + seq.vx[:, None, None] * _IX)
        return expm_hermitian(h, dt)
    raise ValueError(f"unknown frame {frame!r}")


def _fast_unitary(f: FastOp, seq: ControlSequence, p: SystemParams, frame: str) -> np.ndarray:
    if frame != "interaction":
        return f.unitary
    w = coupling_rotation(p, f.index * seq.dt)
    return dagger(w) @ f.unitary @ w


def elementary_operations(seq: ControlSequence, p: SystemParams, frame: str = "rotating"):
    """Time-ordered unitaries (fast ops interleaved with steps) and their end times."""
    steps = step_propagators(seq, p, frame)
    if not seq.fast_ops:
        return steps, seq.edges[1:]
    units, times = [], []
    by_index: dict[int, list[FastOp]] = {}
    for f in seq.fast_ops:
        by_index.setdefault(f.index, []).append(f)
    start = 0
    for k in sorted(by_index):
        units.append(steps[start:k])
        times.append(seq.edges[start + 1:k + 1])
        fu = np.stack([_fast_unitary(f, seq, p, frame) for f in by_index[k]])
        units.append(fu)
        times.append(np.full(len(fu), k * seq.dt))
        start = k
    units.append(steps[start:])
    times.append(seq.edges[start + 1:])
    return np.concatenate(units), np.concatenate(times)


def propagate(seq: ControlSequence, p: SystemParams, frame: str = "rotating",
              initial: np.ndarray | None = None, record: bool = False,
              validate: bool = True) -> Trajectory:
    """Exact piecewise-constant evolution of ``initial`` under ``seq``.

    Steps are exponentiated exactly. In the interaction frame each step is the
    rotating-frame step conjugated by the coupling rotation at its edges, so the
    two frames agree to rounding error. Fast operations are given in the
    rotating frame and are transformed when another frame is requested.
    """
    if frame not in FRAMES:
        raise ValueError(f"unknown frame {frame!r}")
    if frame == "interaction":
        _require_zero_offset(p)
    if validate and frame != "lab":
        seq.validate(p)
    rho0 = basis_operator("Sz") if initial is None else np.asarray(initial, dtype=complex)
    ops, times = elementary_operations(seq, p, frame)
    if record:
        cum = prefix_products(ops) if len(ops) else np.empty((0, 4, 4), complex)
        total = cum[-1] if len(cum) else np.eye(4, dtype=complex)
        states = np.concatenate([rho0[None], cum @ rho0 @ dagger(cum)])
        all_times = np.concatenate([[0.0], times])
    else:
        total = ordered_product(ops)
        states = np.stack([rho0, conjugate(total, rho0)])
        all_times = np.array([0.0, seq.duration])
    return Trajectory(all_times, states, total, frame)


def realize_fast_ops(seq: ControlSequence, p: SystemParams) -> ControlSequence:
    """Replace idealized fast operations by finite control segments.

    Electron rotations about transverse axes become constant pulses at ``u_max``
    and coupling rotations ``exp(-i angle SzIz)`` become free-evolution delays.
    Segments are resampled onto the sequence's ``dt`` (rounded to whole steps), so
    the result quantifies the instantaneous-operation idealization.
    """
    pieces: list[np.ndarray] = []
    cursor = 0
    ctrl = seq.controls
    dt = seq.dt
    for f in seq.fast_ops:
        pieces.append(ctrl[cursor:f.index])
        cursor = f.index
        if f.generator is None or f.angle is None:
            raise ValueError(f"fast op {f.label or f.index} has no generator to realize")
        g = f.generator
        cx = np.vdot(_SX, g).real
        cy = np.vdot(_SY, g).real
        cc = np.vdot(_SZIZ, g).real / np.vdot(_SZIZ, _SZIZ).real
        if np.allclose(g, cx * _SX + cy * _SY, atol=1e-12) and (cx or cy):
            if p.u_max <= 0:
                raise ValueError("u_max = 0 cannot realize electron pulses")
            norm = math.hypot(cx, cy)
            angle = f.angle * norm
            sign = 1.0 if angle >= 0 else -1.0
            dur = abs(angle) / (TWO_PI * p.u_max)
            n = max(1, round(dur / dt))
            amp = sign * abs(angle) / (TWO_PI * n * dt)
            seg = np.zeros((n, 4))
            seg[:, 0] = amp * cx / norm
            seg[:, 1] = amp * cy / norm
        elif np.allclose(g, cc * _SZIZ, atol=1e-12):
            # free evolution exp(-i 2 pi A tau SzIz) must equal exp(-i angle*cc SzIz) mod 4 pi
            theta = (f.angle * cc) % (4 * math.pi)
            tau = theta / (TWO_PI * p.A)
            seg = np.zeros((round(tau / dt), 4))
        else:
            raise ValueError(f"cannot realize fast op {f.label or f.index} with controls")
        pieces.append(seg)
    pieces.append(ctrl[cursor:])
    return ControlSequence.from_array(dt, np.concatenate(pieces))
