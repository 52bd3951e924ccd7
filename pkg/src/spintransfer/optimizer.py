"""Projected gradient ascent (GRAPE) on piecewise-constant rotating-frame controls."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .algebra import basis_operator, dagger, trace_inner
from .dynamics import (
    CONTROL_OPERATORS,
    ControlSequence,
    FastOp,
    SystemParams,
    TWO_PI,
    prefix_products,
    rotating_hamiltonians,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TransferProblem:
    """State-to-state transfer over a fixed duration on ``steps`` equal steps."""

    params: SystemParams
    initial: np.ndarray
    target: np.ndarray
    T: float
    steps: int
    frame: str = "rotating"
    bandwidth_cutoff: float | None = None
    fast_ops: tuple[FastOp, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.frame != "rotating":
            raise ValueError("optimization runs in the rotating frame")
        if self.steps < 2:
            raise ValueError("need at least two steps")
        if not self.T > 0:
            raise ValueError("duration must be positive")
        if abs(trace_inner(self.target, self.target).real - 1) > 1e-9:
            raise ValueError("target must be trace-normalized")
        if self.bandwidth_cutoff is not None and self.bandwidth_cutoff > self.nyquist * (1 + 1e-12):
            raise ValueError("bandwidth cutoff above the Nyquist frequency")
        object.__setattr__(self, "initial", np.asarray(self.initial, dtype=complex))
        object.__setattr__(self, "target", np.asarray(self.target, dtype=complex))
        object.__setattr__(self, "fast_ops", tuple(self.fast_ops))

    @property
    def dt(self) -> float:
        return self.T / self.steps

    @property
    def nyquist(self) -> float:
        return 0.5 / self.dt

    @property
    def bounds(self) -> np.ndarray:
        p = self.params
        return np.array([p.u_max, p.u_max, p.v_max, p.v_max], dtype=float)

    def sequence(self, controls: np.ndarray) -> ControlSequence:
        return ControlSequence.from_array(self.dt, controls, self.fast_ops)

    def check(self, seq: ControlSequence) -> None:
        if seq.steps != self.steps or not np.isclose(seq.dt, self.dt, rtol=1e-12):
            raise ValueError("control sequence does not match the problem grid")


@dataclass
class GrapeConfig:
    step_size: float | None = None  # Hz^2 per unit efficiency; None picks one from the first gradient
    max_iters: int = 500
    tolerance: float = 1e-9
    restarts: int = 8
    init_scale: float = 0.1
    grow: float = 1.5
    min_step: float = 1e-12
    stop_at: float | None = None  # skip remaining restarts once this efficiency is reached
    projection_rounds: int = 1  # band -> amplitude alternations per iteration when a cutoff is set

    def __post_init__(self):
        if self.restarts < 1 or self.max_iters < 1 or self.projection_rounds < 1:
            raise ValueError("restarts, max_iters and projection_rounds must be positive")


@dataclass(frozen=True)
class OptResult:
    sequence: ControlSequence
    efficiency: float
    iterations: int
    converged: bool
    seed: int
    history: tuple[float, ...] = ()


# --------------------------------------------------------------------------- forward model


def _operation_layout(prob: TransferProblem, steps: np.ndarray):
    """Interleave fast ops with step unitaries; return the stack and step positions."""
    if not prob.fast_ops:
        return steps, np.arange(len(steps))
    ops, pos = [], []
    fast = sorted(prob.fast_ops, key=lambda f: f.index)
    j = 0
    for k in range(prob.steps + 1):
        while j < len(fast) and fast[j].index == k:
            ops.append(fast[j].unitary)
            j += 1
        if k < prob.steps:
            pos.append(len(ops))
            ops.append(steps[k])
    return np.stack(ops), np.array(pos)


def _eig_steps(prob: TransferProblem, controls: np.ndarray):
    h = rotating_hamiltonians(prob.params, controls)
    w, v = np.linalg.eigh(h)
    phase = np.exp(-1j * w * prob.dt)
    u = (v * phase[:, None, :]) @ dagger(v)
    return w, v, phase, u


def efficiency(controls: np.ndarray, prob: TransferProblem) -> float:
    """Transfer efficiency reached by an ``(N, 4)`` control array."""
    *_, u = _eig_steps(prob, np.asarray(controls, dtype=float))
    ops, _ = _operation_layout(prob, u)
    total = prefix_products(ops)[-1]
    return trace_inner(prob.target, total @ prob.initial @ dagger(total)).real


def _value_and_grad(controls: np.ndarray, prob: TransferProblem):
    w, v, phase, u = _eig_steps(prob, controls)
    ops, pos = _operation_layout(prob, u)
    cum = prefix_products(ops)
    total = cum[-1]
    rho0, c = prob.initial, prob.target
    eta = trace_inner(c, total @ rho0 @ dagger(total)).real

    before = np.concatenate([np.eye(4, dtype=complex)[None], cum[:-1]])[pos]
    after = cum[pos]
    rho = before @ rho0 @ dagger(before)
    back = dagger(total) @ c @ total
    lam = after @ back @ dagger(after)
    # d eta = 2 Re tr(dU rho U^dagger lambda)
    x = rho @ dagger(u) @ lam
    y = dagger(v) @ x @ v

    dw = w[:, :, None] - w[:, None, :]
    mean = 0.5 * (w[:, :, None] + w[:, None, :])
    phi = -1j * prob.dt * np.exp(-1j * mean * prob.dt) * np.sinc(dw * prob.dt / (2 * np.pi))
    gen = np.einsum("nji,cjk,nkl->ncil", v.conj(), TWO_PI * CONTROL_OPERATORS, v)
    grad = 2 * np.einsum("ncjk,njk,nkj->nc", gen, phi, y).real
    return eta, grad


def efficiency_gradient(seq: ControlSequence, prob: TransferProblem) -> np.ndarray:
    """Exact ``d eta / d amplitude`` per step and channel, ``(N, 4)`` in 1/Hz."""
    prob.check(seq)
    return _value_and_grad(seq.controls, prob)[1]


# --------------------------------------------------------------------------- constraints


def _project_disks(c: np.ndarray, u_max: float, v_max: float) -> np.ndarray:
    c = np.array(c, dtype=float)
    for sl, bound in ((slice(0, 2), u_max), (slice(2, 4), v_max)):
        r = np.hypot(c[:, sl.start], c[:, sl.start + 1])
        # points within rounding of the rim stay put, which makes the projection idempotent
        out = r > bound * (1 + 1e-12)
        scale = np.ones_like(r)
        scale[out] = bound / r[out]
        c[:, sl] *= scale[:, None]
    return c


def project_amplitude(seq: ControlSequence, u_max: float, v_max: float) -> ControlSequence:
    """Radially clip (u_x, u_y) and (v_x, v_y) into their disks, step by step."""
    return seq.with_controls(_project_disks(seq.controls, u_max, v_max))


def _lowpass(c: np.ndarray, dt: float, cutoff: float) -> np.ndarray:
    n = c.shape[0]
    spec = np.fft.rfft(c, axis=0)
    f = np.fft.rfftfreq(n, dt)
    spec[f > cutoff * (1 + 1e-12)] = 0
    return np.fft.irfft(spec, n=n, axis=0)


def project_bandwidth(seq: ControlSequence, cutoff: float) -> ControlSequence:
    """Zero every discrete Fourier component above ``cutoff`` (Hz) in each channel."""
    if cutoff > 0.5 / seq.dt * (1 + 1e-12):
        raise ValueError("cutoff above the Nyquist frequency")
    return seq.with_controls(_lowpass(seq.controls, seq.dt, cutoff))


def feasible(controls: np.ndarray, prob: TransferProblem) -> np.ndarray:
    """Band-limit, then shrink each disk uniformly so amplitude bounds hold exactly.

    Uniform scaling keeps the spectrum inside the cutoff, unlike clipping.
    """
    c = np.array(controls, dtype=float)
    if prob.bandwidth_cutoff is not None:
        c = _lowpass(c, prob.dt, prob.bandwidth_cutoff)
    for i, bound in ((0, prob.params.u_max), (2, prob.params.v_max)):
        peak = np.hypot(c[:, i], c[:, i + 1]).max(initial=0.0)
        if peak > bound:
            c[:, i:i + 2] *= bound / peak
    return c


def _project(c: np.ndarray, prob: TransferProblem, rounds: int = 1) -> np.ndarray:
    if prob.bandwidth_cutoff is None:
        return _project_disks(c, prob.params.u_max, prob.params.v_max)
    for _ in range(rounds):
        c = _project_disks(_lowpass(c, prob.dt, prob.bandwidth_cutoff),
                           prob.params.u_max, prob.params.v_max)
    return c


# --------------------------------------------------------------------------- optimizer


def _ascend(prob: TransferProblem, c0: np.ndarray, cfg: GrapeConfig):
    c = _project(c0, prob, cfg.projection_rounds)
    eta, g = _value_and_grad(c, prob)
    step = cfg.step_size
    history = [eta]
    converged = False
    it = 0
    for it in range(1, cfg.max_iters + 1):
        gmax = np.abs(g).max()
        if gmax == 0:
            converged = True
            break
        if step is None:
            step = 0.1 * prob.params.v_max / gmax
        while True:
            trial = _project(c + step * g, prob, cfg.projection_rounds)
            eta_new = efficiency(trial, prob)
            if not np.isfinite(eta_new):
                raise FloatingPointError("non-finite efficiency; step size too large")
            if eta_new >= eta or step < cfg.min_step:
                break
            step *= 0.5
        if eta_new < eta:
            converged = True
            break
        delta = eta_new - eta
        c = trial
        eta, g = _value_and_grad(c, prob)
        history.append(eta)
        step *= cfg.grow
        if delta < cfg.tolerance:
            converged = True
            break
    return c, eta, it, converged, history


def grape_optimize(prob: TransferProblem, config: GrapeConfig | None = None,
                   seed: int = 0) -> OptResult:
    """Multi-start projected gradient ascent; restart ``i`` is seeded with ``seed + i``.

    Each iteration takes a gradient step, projects onto the bandwidth limit (if
    any) and then onto the amplitude disks; the step is halved until the
    efficiency does not decrease. The returned sequence is made exactly feasible
    and its efficiency re-evaluated from scratch.
    """
    cfg = config or GrapeConfig()
    best: OptResult | None = None
    for i in range(cfg.restarts):
        rng = np.random.default_rng(seed + i)
        c0 = rng.uniform(-1, 1, size=(prob.steps, 4)) * cfg.init_scale * prob.bounds
        c, eta, iters, conv, hist = _ascend(prob, c0, cfg)
        c = feasible(c, prob)
        eta = efficiency(c, prob)
        if not np.isfinite(eta):
            raise FloatingPointError("non-finite efficiency")
        log.info("restart %d (seed %d): eta=%.6f after %d iterations", i, seed + i, eta, iters)
        if best is None or eta > best.efficiency:
            best = OptResult(prob.sequence(c), float(eta), iters, conv, seed + i, tuple(hist))
        if cfg.stop_at is not None and best.efficiency >= cfg.stop_at:
            break
    assert best is not None
    return best


def transfer_problem(p: SystemParams, target: str, T: float, steps: int | None = None,
                     bandwidth_cutoff: float | None = None, prelude: bool = True,
                     initial: str = "Sz") -> TransferProblem:
    """Convenience constructor: start from ``S_z`` behind the INEPT prelude by default."""
    from .pulses import inept_prelude, uniform_grid

    n = uniform_grid(p, T)[0] if steps is None else steps
    ops = tuple(inept_prelude(p)) if prelude else ()
    return TransferProblem(p, basis_operator(initial), basis_operator(target), T, n,
                           bandwidth_cutoff=bandwidth_cutoff, fast_ops=ops)
