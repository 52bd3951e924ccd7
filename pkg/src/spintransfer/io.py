"""Pulse files, flat run configuration and result serialization."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
import re
from pathlib import Path
from typing import Any

import numpy as np

from .analysis import EfficiencyCurve, Spectrogram
from .dynamics import ControlSequence, FastOp, SystemParams
from .optimizer import OptResult

PULSE_HEADER = ["ux_hz", "uy_hz", "vx_hz", "vy_hz"]
_FIRST_LINE = re.compile(r"^#\s*dt=(\S+)\s+n=(\d+)\s*$")


class FormatError(ValueError):
    """Malformed pulse, config or report file."""


# --------------------------------------------------------------------------- run configuration


@dataclasses.dataclass(frozen=True)
class RunConfig:
    """Every knob of a CLI run. Amplitudes and frequencies in Hz, times in seconds."""

    A: float = 10e6
    u_max: float = 1e6
    v_max: float = 20e3
    offset: float = 0.0
    dt: float | None = None
    samples_per_period: int = 32
    seed: int = 0
    output_dir: str = "."
    name: str | None = None
    pulse: str | None = None
    target: str = "Iz"
    scheme: str = "optimal"
    frame: str = "rotating"
    T: float | None = None
    steps: int | None = None
    cutoff: float | None = None
    restarts: int = 8
    max_iters: int = 500
    tolerance: float = 1e-9
    projection_rounds: int = 1
    threshold: float | None = None
    points: int = 50
    max_deviation: float = 0.02
    spin: str = "v"
    window_periods: int = 4
    hop: int | None = None
    terms: int = 15
    resolution: int = 64
    draws: int = 1000
    jacobian_points: int = 100
    fits: int = 200
    carrier_periods: int = 64

    @property
    def params(self) -> SystemParams:
        return SystemParams(A=self.A, u_max=self.u_max, v_max=self.v_max, omega_I_off=self.offset)

    @property
    def grid_dt(self) -> float:
        if self.dt is not None:
            return self.dt
        return 1.0 / (self.samples_per_period * self.A)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)


_FIELDS = {f.name: f for f in dataclasses.fields(RunConfig)}


def _coerce(key: str, raw: Any) -> Any:
    """Convert a raw value to the declared type of ``key``."""
    ftype = str(_FIELDS[key].type)
    if raw is None:
        return None
    if isinstance(raw, str):
        text = raw.strip()
        if text.lower() in ("none", "null", "") and "None" in ftype:
            return None
    else:
        text = raw
    try:
        if ftype.startswith("float"):
            return float(text)
        if ftype.startswith("int"):
            value = float(text)
            if value != int(value):
                raise ValueError
            return int(value)
        return str(text)
    except (TypeError, ValueError):
        raise FormatError(f"invalid value for {key}: {raw!r}") from None


def config_from_mapping(values: dict[str, Any], base: RunConfig | None = None) -> RunConfig:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise FormatError(f"unknown config key(s): {', '.join(unknown)}")
    changes = {k: _coerce(k, v) for k, v in values.items()}
    return dataclasses.replace(base or RunConfig(), **changes)


def parse_config_text(text: str) -> dict[str, str]:
    """Parse flat ``key = value`` lines; ``#`` starts a comment."""
    out: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise FormatError(f"line {lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key in out:
            raise FormatError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value
    return out


def load_config(path: str | Path, base: RunConfig | None = None) -> RunConfig:
    """Read a flat config file, or the embedded ``config`` of a JSON report."""
    path = Path(path)
    text = path.read_text()
    if path.suffix == ".json":
        try:
            values = json.loads(text)["config"]
        except (json.JSONDecodeError, KeyError, TypeError):
            raise FormatError(f"{path}: not a report with an embedded config") from None
    else:
        values = parse_config_text(text)
    return config_from_mapping(values, base)


def dump_config(cfg: RunConfig) -> str:
    return "".join(f"{k} = {v}\n" for k, v in cfg.to_dict().items())


# --------------------------------------------------------------------------- pulse files


def fastops_path(path: str | Path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".fastops.json")


def _encode_matrix(m: np.ndarray) -> list[list[float]]:
    return [[float(z.real), float(z.imag)] for z in np.asarray(m, dtype=complex).ravel()]


def _decode_matrix(pairs) -> np.ndarray:
    arr = np.asarray(pairs, dtype=float)
    if arr.shape != (16, 2):
        raise FormatError("fast-op matrix must hold 16 [re, im] pairs")
    return (arr[:, 0] + 1j * arr[:, 1]).reshape(4, 4)


def write_pulse_file(seq: ControlSequence, path: str | Path) -> Path:
    """Write the CSV pulse and, if present, the fast-op sidecar. Returns the CSV path."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        fh.write(f"# dt={seq.dt!r} n={seq.steps}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PULSE_HEADER)
        for row in seq.controls:
            w.writerow([repr(float(x)) for x in row])
    side = fastops_path(path)
    if seq.fast_ops:
        ops = [{"index": f.index, "label": f.label, "matrix": _encode_matrix(f.unitary)}
               for f in seq.fast_ops]
        side.write_text(json.dumps(ops, indent=1) + "\n")
    elif side.exists():
        side.unlink()
    return path


def read_pulse_file(path: str | Path, params: SystemParams | None = None) -> ControlSequence:
    """Parse a pulse CSV (and its sidecar if present); check bounds when ``params`` is given."""
    path = Path(path)
    with path.open(newline="") as fh:
        first = fh.readline()
        m = _FIRST_LINE.match(first.strip())
        if not m:
            raise FormatError(f"{path}: first line must read '# dt=<seconds> n=<steps>'")
        try:
            dt, n = float(m.group(1)), int(m.group(2))
        except ValueError:
            raise FormatError(f"{path}: bad dt or n in first line") from None
        if not (math.isfinite(dt) and dt > 0):
            raise FormatError(f"{path}: dt must be positive and finite")
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != PULSE_HEADER:
            raise FormatError(f"{path}: header must be {','.join(PULSE_HEADER)}")
        rows = []
        for k, row in enumerate(reader, 1):
            if not row:
                continue
            if len(row) != 4:
                raise FormatError(f"{path}: row {k} has {len(row)} columns, expected 4")
            try:
                vals = [float(x) for x in row]
            except ValueError:
                raise FormatError(f"{path}: unparseable number at row {k}") from None
            if not all(math.isfinite(x) for x in vals):
                raise FormatError(f"non-finite amplitude at row {k}")
            rows.append(vals)
    if len(rows) != n:
        raise FormatError(f"{path}: header announces {n} rows, found {len(rows)}")
    controls = np.array(rows, dtype=float).reshape(n, 4)
    ops = []
    side = fastops_path(path)
    if side.exists():
        try:
            raw = json.loads(side.read_text())
            ops = [FastOp(int(o["index"]), _decode_matrix(o["matrix"]), str(o.get("label", "")))
                   for o in raw]
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise FormatError(f"{side}: malformed fast-op sidecar ({exc})") from None
    seq = ControlSequence.from_array(dt, controls, ops)
    if params is not None:
        seq.validate(params)
    return seq


# --------------------------------------------------------------------------- results


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        v = float(x)
        return v if math.isfinite(v) else str(v)
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    return x


def write_json(payload: dict, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n")
    return path


def _write_matrix_csv(path: Path, header: list[str], columns) -> None:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in zip(*columns):
            w.writerow([repr(float(x)) for x in row])


def write_results(result, fmt: str, path: str | Path, config: RunConfig | None = None,
                  **extra) -> list[Path]:
    """Serialize a curve, spectrogram or optimization result; returns the files written.

    JSON output embeds ``config`` (with its seed) so the run can be repeated.
    ``OptResult`` always produces a pulse CSV next to its JSON report.
    """
    if fmt not in ("csv", "json"):
        raise ValueError("format must be 'csv' or 'json'")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"config": config.to_dict() if config else None, **extra}

    if isinstance(result, EfficiencyCurve):
        cols = [result.times, result.analytic, result.simulated]
        header = ["time_s", "analytic", "simulated"]
        if result.optimized is not None:
            cols.append(result.optimized)
            header.append("optimized")
        if fmt == "csv":
            _write_matrix_csv(path, header, cols)
            return [path]
        body = dict(zip(header, cols), max_deviation=result.max_deviation, **meta)
        return [write_json(body, path)]

    if isinstance(result, Spectrogram):
        if fmt == "csv":
            freq = path.with_name(path.stem + "_freq.csv")
            time = path.with_name(path.stem + "_time.csv")
            np.savetxt(path, result.magnitudes, delimiter=",", fmt="%.17g")
            _write_matrix_csv(freq, ["frequency_hz"], [result.frequencies])
            _write_matrix_csv(time, ["time_s"], [result.times])
            return [path, freq, time]
        body = {"window_length": result.window_length, "hop": result.hop,
                "frequencies": result.frequencies, "times": result.times,
                "magnitudes": result.magnitudes, "scale": result.scale, **meta}
        return [write_json(body, path)]

    if isinstance(result, OptResult):
        pulse = path.with_suffix(".csv")
        write_pulse_file(result.sequence, pulse)
        if fmt == "csv":
            return [pulse]
        body = {"pulse": pulse.name, "efficiency": result.efficiency, "seed": result.seed,
                "iterations": result.iterations, "converged": result.converged,
                "history": list(result.history), **meta}
        return [write_json(body, path.with_suffix(".json")), pulse]

    if isinstance(result, dict) and fmt == "json":
        return [write_json({**result, **meta}, path)]
    raise TypeError(f"cannot serialize {type(result).__name__} as {fmt}")
