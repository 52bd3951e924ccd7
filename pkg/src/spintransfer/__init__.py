"""Time-optimal electron-to-nuclear polarization transfer in a hyperfine-coupled spin pair.

Modules: :mod:`algebra` (product operators), :mod:`dynamics` (frames and
propagation), :mod:`pulses` (analytic transfer pulses), :mod:`optimizer`
(GRAPE), :mod:`analysis` (curves, spectrograms, harmonics), :mod:`decomp`
(numerical checks of the K1 A K2 decomposition) and :mod:`io` (files, config).
"""

from .algebra import basis_operator, conjugate, decompose, transfer_efficiency
from .analysis import (
    EfficiencyCurve,
    Spectrogram,
    control_spectrogram,
    effective_first_harmonic,
    efficiency_curve,
    square_wave_fourier,
    stft,
)
from .decomp import (
    FastParams,
    SlowParams,
    assemble_KAK,
    check_alpha_beta_class,
    fit_fast_decomposition,
    k1_jacobian_rank,
    lower_bound_check,
    scan_transfer_classes,
    verify_pullthrough,
)
from .dynamics import ControlSequence, FastOp, SystemParams, Trajectory, frame_transform, propagate
from .io import RunConfig, read_pulse_file, write_pulse_file, write_results
from .optimizer import (
    GrapeConfig,
    OptResult,
    TransferProblem,
    efficiency_gradient,
    grape_optimize,
    project_amplitude,
    project_bandwidth,
    transfer_problem,
)
from .pulses import (
    TO_IX,
    TO_IX_CONVENTIONAL,
    TO_IY,
    TO_IZ,
    TransferKind,
    minimum_time,
    synth_conventional_two_tone,
    synth_to_iz,
    synth_to_ix_square,
    synthesize,
)

__version__ = "0.1.0"
