"""``spintransfer`` command line: one subcommand per reproducible result."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import analysis, decomp, io, optimizer, pulses
from .algebra import PRODUCT_OPERATORS, basis_operator, decompose, transfer_efficiency
from .dynamics import frame_transform, propagate

log = logging.getLogger("spintransfer")

COMMANDS = ("synthesize", "propagate", "optimize", "curve", "stft", "fourier", "verify", "carrier")


def _kind(cfg: io.RunConfig) -> pulses.TransferKind:
    return pulses.TransferKind(cfg.target, cfg.scheme)


def _out(cfg: io.RunConfig, default: str) -> Path:
    return Path(cfg.output_dir) / (cfg.name or default)


def _duration(cfg: io.RunConfig) -> float:
    return cfg.T if cfg.T is not None else pulses.minimum_time(_kind(cfg), cfg.v_max)


def _report(cfg: io.RunConfig, stem: Path, body: dict) -> None:
    path = io.write_json({**body, "config": cfg.to_dict(), "seed": cfg.seed}, stem.with_suffix(".json"))
    print(f"wrote {path}")


def _meets(value: float, threshold: float | None) -> bool:
    return threshold is None or value >= threshold


# --------------------------------------------------------------------------- commands


def cmd_synthesize(cfg: io.RunConfig) -> int:
    """Write an analytic transfer pulse and its efficiency."""
    kind, p = _kind(cfg), cfg.params
    seq = pulses.synthesize(kind, p, _duration(cfg), cfg.grid_dt)
    stem = _out(cfg, f"{kind.scheme}_to_{kind.target}")
    io.write_pulse_file(seq, stem.with_suffix(".csv"))
    eta = transfer_efficiency(propagate(seq, p).final_state, kind.target_operator)
    print(f"{kind.scheme} S_z -> {kind.target}: T={seq.duration:.6g} s, N={seq.steps}, eta={eta:.6f}")
    _report(cfg, stem, {"pulse": stem.with_suffix(".csv").name, "efficiency": eta,
                        "duration": seq.duration, "steps": seq.steps})
    return 0 if _meets(eta, cfg.threshold) else 1


def cmd_propagate(cfg: io.RunConfig) -> int:
    """Propagate a pulse file from S_z and report the final state."""
    if cfg.pulse is None:
        raise SystemExit("propagate needs --pulse")
    p = cfg.params
    seq = io.read_pulse_file(cfg.pulse, p)
    final = propagate(seq, p, cfg.frame).final_state
    if cfg.frame == "interaction":
        final = frame_transform(final, "interaction", "rotating", p, seq.duration)
    eta = transfer_efficiency(final, basis_operator(cfg.target))
    coeffs = {k: v for k, v in decompose(final).items() if k in PRODUCT_OPERATORS and abs(v) > 1e-9}
    print(f"propagated in the {cfg.frame} frame: rotating-frame eta({cfg.target})={eta:.6f}")
    _report(cfg, _out(cfg, Path(cfg.pulse).stem + "_propagated"),
            {"efficiency": eta, "target": cfg.target, "final_coefficients": coeffs})
    return 0 if _meets(eta, cfg.threshold) else 1


def cmd_optimize(cfg: io.RunConfig) -> int:
    """Run GRAPE for a transfer and write the best pulse."""
    p = cfg.params
    T = cfg.T if cfg.T is not None else pulses.minimum_time(pulses.TransferKind(cfg.target), cfg.v_max)
    steps = cfg.steps if cfg.steps is not None else pulses.uniform_grid(p, T, cfg.grid_dt)[0]
    prob = optimizer.transfer_problem(p, cfg.target, T, steps, cfg.cutoff)
    gc = optimizer.GrapeConfig(max_iters=cfg.max_iters, tolerance=cfg.tolerance, restarts=cfg.restarts,
                               projection_rounds=cfg.projection_rounds)
    res = optimizer.grape_optimize(prob, gc, cfg.seed)
    threshold = 0.99 if cfg.threshold is None else cfg.threshold
    stem = _out(cfg, f"grape_to_{cfg.target}")
    io.write_results(res, "json", stem, cfg, threshold=threshold)
    print(f"GRAPE S_z -> {cfg.target}: eta={res.efficiency:.6f} (seed {res.seed}, {res.iterations} iterations)")
    return 0 if res.efficiency >= threshold else 1


def cmd_curve(cfg: io.RunConfig) -> int:
    """Efficiency versus duration, analytic against simulated."""
    kind, p = _kind(cfg), cfg.params
    t_min = pulses.minimum_time(kind, cfg.v_max)
    T = min(_duration(cfg), t_min)
    curve = analysis.efficiency_curve(kind, p, np.linspace(0, T, cfg.points), cfg.grid_dt)
    stem = _out(cfg, f"curve_{kind.scheme}_{kind.target}")
    io.write_results(curve, "csv", stem.with_suffix(".csv"))
    io.write_results(curve, "json", stem.with_suffix(".json"), cfg, seed=cfg.seed)
    ok = curve.max_deviation <= cfg.max_deviation
    print(f"max |simulated - analytic| = {curve.max_deviation:.3e} ({'ok' if ok else 'too large'})")
    return 0 if ok else 1


def cmd_stft(cfg: io.RunConfig) -> int:
    """Spectrogram of a control channel."""
    p = cfg.params
    if cfg.pulse is not None:
        seq = io.read_pulse_file(cfg.pulse, p)
        default = Path(cfg.pulse).stem + "_stft"
    else:
        kind = _kind(cfg)
        seq = pulses.synthesize(kind, p, _duration(cfg), cfg.grid_dt)
        default = f"stft_{kind.scheme}_{kind.target}"
    spec = analysis.control_spectrogram(seq, p, cfg.spin, cfg.window_periods, cfg.hop)
    stem = _out(cfg, default)
    files = io.write_results(spec, "csv", stem.with_suffix(".csv"))
    mid = spec.magnitudes[len(spec.times) // 2]
    peak = float(spec.frequencies[int(np.argmax(mid))])
    _report(cfg, stem, {"files": [f.name for f in files], "peak_frequency_hz": peak,
                        "window_length": spec.window_length, "hop": spec.hop})
    print(f"spectrogram {spec.magnitudes.shape}, strongest component at {peak:.6g} Hz")
    return 0


def cmd_fourier(cfg: io.RunConfig) -> int:
    """Fourier coefficients and partial-sum residuals of a square wave."""
    n = np.arange(1, cfg.terms + 1)
    coeff = np.array([analysis.square_wave_fourier(k) for k in n])
    x = np.linspace(0, 2 * math.pi, 4096, endpoint=False) + math.pi / 4096
    sq = np.sign(np.sin(x))
    l2 = [math.sqrt(np.mean((analysis.square_wave_partial_sum(x, k) - sq) ** 2)) for k in n]
    stem = _out(cfg, "square_wave_fourier")
    with stem.with_suffix(".csv").open("w") as fh:
        fh.write("n,coefficient,l2_residual\n")
        for row in zip(n, coeff, l2):
            fh.write(f"{int(row[0])},{float(row[1])!r},{float(row[2])!r}\n")
    exact = np.where(n % 2 == 1, 4 / (n * math.pi), 0.0)
    ok = bool(np.array_equal(coeff, exact))
    _report(cfg, stem, {"coefficients": coeff, "l2_residual": l2, "matches_closed_form": ok})
    return 0 if ok else 1


def cmd_verify(cfg: io.RunConfig) -> int:
    """Numerical checks of the fast/slow decomposition claims."""
    rep = decomp.verification_report(cfg.seed, cfg.resolution, cfg.restarts, cfg.draws,
                                     cfg.jacobian_points, cfg.fits, cfg.params)
    for name, claim in rep["claims"].items():
        print(f"{'PASS' if claim['pass'] else 'FAIL'} {name}")
    _report(cfg, _out(cfg, "verify"), rep)
    return 0 if rep["all_pass"] else 1


def cmd_carrier(cfg: io.RunConfig) -> int:
    """First-harmonic gain of a square carrier."""
    spp = cfg.samples_per_period
    t_unit = np.arange(cfg.carrier_periods * spp) + 0.5
    square = np.sign(np.sin(2 * math.pi * t_unit / spp))
    gain = analysis.effective_first_harmonic(square, 1.0, 1.0 / spp)
    frac = analysis.carrier_time_fraction(gain, gain)
    ok = abs(gain - 4 / math.pi) <= 1e-3
    print(f"square carrier first harmonic = {gain:.6f} (4/pi = {4 / math.pi:.6f}); "
          f"time fraction {frac:.4f}")
    _report(cfg, _out(cfg, "carrier"), {"first_harmonic": gain, "expected": 4 / math.pi,
                                        "time_fraction": frac, "pass": ok})
    return 0 if ok else 1


HANDLERS = {name: globals()[f"cmd_{name}"] for name in COMMANDS}


# --------------------------------------------------------------------------- parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key=value file, or a JSON report to rerun")
    common.add_argument("-v", "--verbose", action="store_true")
    for f in dataclasses.fields(io.RunConfig):
        common.add_argument(f"--{f.name.replace('_', '-')}", dest=f.name, default=None,
                            metavar=f.name.upper())
    parser = argparse.ArgumentParser(prog="spintransfer", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        doc = (HANDLERS[name].__doc__ or "").strip() or None
        sub.add_parser(name, parents=[common], help=doc)
    return parser


def resolve_config(ns: argparse.Namespace) -> io.RunConfig:
    """Defaults, then the config file, then explicit flags."""
    cfg = io.load_config(ns.config) if ns.config else io.RunConfig()
    flags = {f.name: getattr(ns, f.name) for f in dataclasses.fields(io.RunConfig)
             if getattr(ns, f.name) is not None}
    return io.config_from_mapping(flags, cfg)


def main(argv: list[str] | None = None) -> int:
    ns = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if ns.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(ns)
    except io.FormatError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    Path(cfg.output_dir).mkdir(parents=True, exist_ok=True)
    try:
        return HANDLERS[ns.command](cfg)
    except (ValueError, io.FormatError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
