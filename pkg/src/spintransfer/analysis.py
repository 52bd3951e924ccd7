"""Efficiency-versus-time curves, control spectrograms and square-wave harmonics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import basis_operator, transfer_efficiency
from .dynamics import ControlSequence, SystemParams, propagate
from .pulses import TransferKind, inept_prelude, minimum_time, synthesize


@dataclass(frozen=True)
class EfficiencyCurve:
    times: np.ndarray
    analytic: np.ndarray
    simulated: np.ndarray
    optimized: np.ndarray | None = None

    def __post_init__(self):
        n = len(self.times)
        if len(self.analytic) != n or len(self.simulated) != n:
            raise ValueError("curve columns must have equal length")
        if self.optimized is not None and len(self.optimized) != n:
            raise ValueError("curve columns must have equal length")

    @property
    def max_deviation(self) -> float:
        return float(np.max(np.abs(self.simulated - self.analytic), initial=0.0))


def analytic_efficiency(kind: TransferKind, v_max: float, T: np.ndarray | float) -> np.ndarray:
    """Best efficiency reachable in time ``T`` (valid up to the minimum time)."""
    T = np.asarray(T, dtype=float)
    if kind.target == "Iz":
        return np.sin(math.pi * v_max * T) ** 2
    if kind.scheme == "conventional":
        return np.sin(math.pi * v_max * T)
    return np.sin(4 * v_max * T)


def simulated_efficiency(kind: TransferKind, p: SystemParams, T: float,
                         dt: float | None = None) -> float:
    """Efficiency of the synthesized pulse of duration ``T``, propagated from ``S_z``."""
    target = basis_operator(kind.target)
    if T == 0:
        seq = ControlSequence.zeros(p.default_dt, 0, inept_prelude(p))
    else:
        seq = synthesize(kind, p, T, dt)
    final = propagate(seq, p, "rotating", basis_operator("Sz")).final_state
    return transfer_efficiency(final, target)


def efficiency_curve(kind: TransferKind, p: SystemParams, t_grid, dt: float | None = None,
                     optimized=None) -> EfficiencyCurve:
    t = np.asarray(t_grid, dtype=float)
    if t.ndim != 1 or len(t) == 0:
        raise ValueError("time grid must be a non-empty 1-D array")
    if np.any(np.diff(t) <= 0) or t[0] < 0:
        raise ValueError("time grid must be increasing and non-negative")
    t_min = minimum_time(kind, p.v_max)
    if t[-1] > t_min * (1 + 1e-9):
        raise ValueError(f"time grid extends past the minimum time {t_min:.6g} s")
    analytic = analytic_efficiency(kind, p.v_max, t)
    simulated = np.array([simulated_efficiency(kind, p, T, dt) for T in t])
    opt = None if optimized is None else np.asarray(optimized, dtype=float)
    return EfficiencyCurve(t, analytic, simulated, opt)


def crossing_time(times: np.ndarray, values: np.ndarray, level: float) -> float:
    """First time a sampled curve reaches ``level`` (linear interpolation)."""
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    idx = np.flatnonzero(values >= level)
    if len(idx) == 0:
        return math.nan
    i = idx[0]
    if i == 0:
        return float(times[0])
    t0, t1, y0, y1 = times[i - 1], times[i], values[i - 1], values[i]
    return float(t0 + (level - y0) * (t1 - t0) / (y1 - y0))


# --------------------------------------------------------------------------- spectrograms


@dataclass(frozen=True)
class Spectrogram:
    """Short-time Fourier magnitudes, normalized to a global maximum of one.

    ``scale`` is the raw maximum, so ``magnitudes * scale`` are the unnormalized
    values. Frequencies follow the convention ``X(f) = sum x(t) exp(+2 pi i f t)``,
    which places the drive of the beta line at ``+A/2``.
    """

    window_length: int
    hop: int
    frequencies: np.ndarray
    times: np.ndarray
    magnitudes: np.ndarray  # (n_frames, window_length)
    scale: float
    window_power: float  # sum_m w(n - m hop)^2, constant over the signal

    def energy(self) -> float:
        """Signal energy recovered from the frames (Parseval)."""
        raw = self.magnitudes * self.scale
        return float(np.sum(raw ** 2) / (self.window_length * self.window_power))

    def ridge(self, frequency: float, frame: int | None = None) -> float:
        """Normalized magnitude at the bin nearest ``frequency`` (middle frame by default)."""
        k = int(np.argmin(np.abs(self.frequencies - frequency)))
        m = len(self.times) // 2 if frame is None else frame
        return float(self.magnitudes[m, k])


def _default_hop(L: int) -> int:
    """Largest divisor of ``L`` not above ``L/4``: squared Hann windows then tile evenly."""
    return max(h for h in range(1, L // 4 + 1) if L % h == 0) if L >= 4 else 1


def stft(channel, dt: float, window_length: int, hop: int | None = None) -> Spectrogram:
    """Hann-windowed short-time Fourier transform of a complex control signal.

    The signal is zero-padded by ``window_length`` samples at both ends so that
    every sample sees the full set of overlapping windows. :meth:`Spectrogram.energy`
    is exact when ``hop`` divides ``window_length`` at least three times (the default).
    """
    x = np.asarray(channel, dtype=complex)
    if x.size == 0:
        raise ValueError("empty signal")
    L = int(window_length)
    if L < 2 or L > len(x):
        raise ValueError("window length must lie in [2, len(signal)]")
    H = _default_hop(L) if hop is None else int(hop)
    if H < 1:
        raise ValueError("hop must be positive")
    w = 0.5 - 0.5 * np.cos(2 * np.pi * np.arange(L) / L)  # periodic Hann
    padded = np.concatenate([np.zeros(L, complex), x, np.zeros(L + H, complex)])
    n_frames = (len(x) + L) // H + 1
    starts = np.arange(n_frames) * H
    frames = padded[starts[:, None] + np.arange(L)] * w
    spec = np.fft.fftshift(np.fft.ifft(frames, axis=1) * L, axes=1)
    mag = np.abs(spec)
    peak = float(mag.max())
    freqs = np.fft.fftshift(np.fft.fftfreq(L, dt))
    times = (starts - L + L / 2) * dt
    norm = mag / peak if peak > 0 else mag
    return Spectrogram(L, H, freqs, times, norm, peak, float(np.sum(w ** 2) / H))


def control_spectrogram(seq: ControlSequence, p: SystemParams, spin: str = "v",
                        periods: int = 4, hop: int | None = None) -> Spectrogram:
    """Spectrogram of ``u_x + i u_y`` or ``v_x + i v_y``; window spans ``periods`` coupling periods."""
    if spin not in ("u", "v"):
        raise ValueError("spin must be 'u' or 'v'")
    z = seq.ux + 1j * seq.uy if spin == "u" else seq.vx + 1j * seq.vy
    L = max(2, round(periods / (p.A * seq.dt)))
    return stft(z, seq.dt, L, hop)


# --------------------------------------------------------------------------- harmonics


def square_wave_fourier(n: int) -> float:
    """Sine-series coefficient of ``sgn[sin(x)]`` at harmonic ``n``: ``4/(n pi)`` for odd ``n``."""
    if n < 1:
        raise ValueError("harmonic index must be >= 1")
    return 4 / (n * math.pi) if n % 2 else 0.0


def square_wave_partial_sum(x: np.ndarray, terms: int) -> np.ndarray:
    """Sum of the first ``terms`` harmonics of ``sgn[sin(x)]``."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for n in range(1, terms + 1):
        b = square_wave_fourier(n)
        if b:
            out += b * np.sin(n * x)
    return out


def effective_first_harmonic(carrier, carrier_freq: float, dt: float) -> float:
    """Amplitude of the ``carrier_freq`` component relative to the waveform's peak.

    Samples are held constant over their step, so the Fourier integral is exact
    per step. The sample should cover a whole number of carrier periods.
    """
    x = np.asarray(carrier, dtype=float)
    peak = np.max(np.abs(x), initial=0.0)
    if peak == 0:
        raise ValueError("waveform has zero peak amplitude")
    t = (np.arange(len(x)) + 0.5) * dt
    hold = np.sinc(carrier_freq * dt)
    amp = 2 * abs(np.mean(x * np.exp(-2j * np.pi * carrier_freq * t))) * hold
    return float(amp / peak)


def carrier_time_fraction(gain_envelope: float = 4 / math.pi,
                          gain_carrier: float = 4 / math.pi) -> float:
    """Transfer time relative to the sinusoidal two-tone scheme after both amplitude gains."""
    return 1.0 / (gain_envelope * gain_carrier)
