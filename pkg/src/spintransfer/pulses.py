"""Analytic pulse sequences for the S_z -> I_z and S_z -> I_x/I_y transfers."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import basis_operator
from .dynamics import ControlSequence, FastOp, SystemParams, TWO_PI

TARGETS = ("Iz", "Ix", "Iy")
SCHEMES = ("optimal", "conventional")


@dataclass(frozen=True)
class TransferKind:
    target: str = "Iz"
    scheme: str = "optimal"

    def __post_init__(self):
        if self.target not in TARGETS:
            raise ValueError(f"target must be one of {TARGETS}")
        if self.scheme not in SCHEMES:
            raise ValueError(f"scheme must be one of {SCHEMES}")
        if self.scheme == "conventional" and self.target == "Iz":
            raise ValueError("the two-tone scheme is defined for transverse targets only")

    @property
    def target_operator(self) -> np.ndarray:
        return basis_operator(self.target)


TO_IZ = TransferKind("Iz")
TO_IX = TransferKind("Ix")
TO_IY = TransferKind("Iy")
TO_IX_CONVENTIONAL = TransferKind("Ix", "conventional")


def minimum_time(kind: TransferKind, v_max: float) -> float:
    """Shortest duration of the nuclear (slow) part of the transfer, in seconds."""
    if not v_max > 0:
        raise ValueError("v_max must be positive")
    if kind.target == "Iz" or kind.scheme == "conventional":
        return 1.0 / (2 * v_max)
    return math.pi / (8 * v_max)


def inept_prelude(p: SystemParams, index: int = 0) -> list[FastOp]:
    """Hard pi/2 (y), a 1/(2A) coupling delay, hard pi/2 (x): S_z -> 2 S_z I_z."""
    return [
        FastOp.rotation(index, basis_operator("Sy"), math.pi / 2, "pi/2 Sy"),
        FastOp.rotation(index, basis_operator("2SzIz") / 2, math.pi, "coupling delay 1/(2A)"),
        FastOp.rotation(index, basis_operator("Sx"), math.pi / 2, "pi/2 Sx"),
    ]


def unwind_op(p: SystemParams, T: float, index: int) -> FastOp:
    """Fast coupling rotation undoing ``exp(-i 2 pi A T SzIz)``; see :func:`dynamics.phase_unwind`."""
    angle = math.remainder(TWO_PI * p.A * T, 4 * math.pi)
    return FastOp.rotation(index, basis_operator("2SzIz") / 2, -angle, "coupling phase unwind")


def uniform_grid(p: SystemParams, T: float, dt: float | None = None) -> tuple[int, float]:
    """Number of steps and step length covering exactly ``T``, no coarser than ``dt``."""
    if not T > 0:
        raise ValueError("duration must be positive")
    target = p.default_dt if dt is None else dt
    n = max(1, math.ceil(T / target - 1e-9))
    return n, T / n


def _square_average(A: float, t0: np.ndarray, t1: np.ndarray) -> np.ndarray:
    """Mean of ``sgn(sin(pi A t))`` over ``[t0, t1]`` (exact, via its triangle-wave integral)."""
    h = 1.0 / A

    def integral(t):
        tau = np.mod(t, 2 * h)
        return np.where(tau <= h, tau, 2 * h - tau)

    return (integral(t1) - integral(t0)) / (t1 - t0)


def synth_to_iz(p: SystemParams, T: float | None = None, dt: float | None = None,
                prelude: bool = True) -> ControlSequence:
    """Full-amplitude drive of the beta line: ``v_x = v_max sin(pi A t)``, ``v_y = v_max cos(pi A t)``."""
    T = minimum_time(TO_IZ, p.v_max) if T is None else T
    n, dt = uniform_grid(p, T, dt)
    tm = (np.arange(n) + 0.5) * dt
    phase = math.pi * p.A * tm
    z = np.zeros(n)
    ops = inept_prelude(p) if prelude else []
    return ControlSequence(dt, z, z, p.v_max * np.sin(phase), p.v_max * np.cos(phase), tuple(ops))


def aligned_grid(p: SystemParams, T: float, dt: float | None = None) -> tuple[int, float]:
    """Steps of length ``1/(m A)`` so every sign change of ``sin(pi A t)`` falls on a step edge.

    The duration is rounded to the nearest whole step, moving it by at most ``dt/2``.
    """
    if not T > 0:
        raise ValueError("duration must be positive")
    target = p.default_dt if dt is None else dt
    m = max(1, math.ceil(1.0 / (p.A * target) - 1e-9))
    step = 1.0 / (m * p.A)
    return max(1, round(T / step)), step


def synth_to_ix_square(p: SystemParams, T: float | None = None, target_axis: str = "x",
                       dt: float | None = None, prelude: bool = True,
                       unwind: bool = True, align: bool = True) -> ControlSequence:
    """Square-wave nuclear drive ``-sgn[sin(pi A t)] v_max`` on the x (or y) channel.

    With ``align`` (the default) the grid puts every sign change on a step
    edge and ``T`` is rounded to a whole step; otherwise the grid covers ``T``
    exactly and steps that straddle a sign change carry the exact step average.
    """
    if target_axis not in ("x", "y"):
        raise ValueError("target_axis must be 'x' or 'y'")
    T = minimum_time(TO_IX, p.v_max) if T is None else T
    n, dt = aligned_grid(p, T, dt) if align else uniform_grid(p, T, dt)
    T = n * dt
    edges = np.arange(n + 1) * dt
    wave = -p.v_max * _square_average(p.A, edges[:-1], edges[1:])
    z = np.zeros(n)
    vx, vy = (wave, z) if target_axis == "x" else (z, wave)
    ops = inept_prelude(p) if prelude else []
    if unwind:
        ops.append(unwind_op(p, T, n))
    return ControlSequence(dt, z, z, vx, vy, tuple(ops))


def synth_conventional_two_tone(p: SystemParams, target_axis: str = "x", T: float | None = None,
                                dt: float | None = None, prelude: bool = True,
                                unwind: bool = True) -> ControlSequence:
    """Simultaneous selective +-pi/2 pulses on both doublet lines at amplitude ``v_max/2`` each.

    The two tones add up to ``-v_max sin(pi A t)`` on one nuclear channel: the x
    channel for ``target_axis="x"``, the y channel for ``"y"``.
    """
    if target_axis not in ("x", "y"):
        raise ValueError("target_axis must be 'x' or 'y'")
    T = minimum_time(TO_IX_CONVENTIONAL, p.v_max) if T is None else T
    n, dt = uniform_grid(p, T, dt)
    tm = (np.arange(n) + 0.5) * dt
    wave = -p.v_max * np.sin(math.pi * p.A * tm)
    z = np.zeros(n)
    vx, vy = (wave, z) if target_axis == "x" else (z, wave)
    ops = inept_prelude(p) if prelude else []
    if unwind:
        ops.append(unwind_op(p, T, n))
    return ControlSequence(dt, z, z, vx, vy, tuple(ops))


def synthesize(kind: TransferKind, p: SystemParams, T: float | None = None,
               dt: float | None = None, **kwargs) -> ControlSequence:
    """Dispatch to the synthesizer for ``kind``."""
    if kind.target == "Iz":
        return synth_to_iz(p, T, dt, **kwargs)
    axis = kind.target[-1]
    if kind.scheme == "conventional":
        return synth_conventional_two_tone(p, axis, T, dt, **kwargs)
    return synth_to_ix_square(p, T, axis, dt, **kwargs)
