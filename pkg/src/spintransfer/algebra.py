"""Product-operator basis and matrix helpers for one electron and one nuclear spin.

Ordering of the Hilbert space is electron (x) nucleus, so ``S_j = sigma_j (x) 1 / 2``
and ``I_k = 1 (x) sigma_k / 2``.
"""

from __future__ import annotations

import numpy as np

HERMITIAN_TOL = 1e-10

SIGMA_0 = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
_PAULI = {"x": SIGMA_X, "y": SIGMA_Y, "z": SIGMA_Z}
_UP = np.array([[1, 0], [0, 0]], dtype=complex)
_DOWN = np.array([[0, 0], [0, 1]], dtype=complex)


def _build_basis() -> dict[str, np.ndarray]:
    ops: dict[str, np.ndarray] = {}
    for j, s in _PAULI.items():
        ops[f"S{j}"] = np.kron(s, SIGMA_0) / 2
        ops[f"I{j}"] = np.kron(SIGMA_0, s) / 2
    for j, s in _PAULI.items():
        for k, i in _PAULI.items():
            ops[f"2S{j}I{k}"] = 2 * np.kron(s, SIGMA_0) @ np.kron(SIGMA_0, i) / 4
    ops["Salpha"] = np.kron(_UP, SIGMA_0)
    ops["Sbeta"] = np.kron(_DOWN, SIGMA_0)
    ops["SalphaIy"] = ops["Salpha"] @ ops["Iy"]
    ops["SbetaIy"] = ops["Sbeta"] @ ops["Iy"]
    ops["E"] = np.eye(4, dtype=complex)
    for name, s in [("sigma0", SIGMA_0), ("sigmax", SIGMA_X), ("sigmay", SIGMA_Y), ("sigmaz", SIGMA_Z)]:
        ops[name] = s.copy()
    for op in ops.values():
        op.setflags(write=False)
    return ops


_BASIS = _build_basis()

#: Labels of the 15 trace-orthonormal product operators.
PRODUCT_OPERATORS: tuple[str, ...] = (
    "Sx", "Sy", "Sz", "Ix", "Iy", "Iz",
    "2SxIx", "2SxIy", "2SxIz", "2SyIx", "2SyIy", "2SyIz", "2SzIx", "2SzIy", "2SzIz",
)

_ALIASES = {
    "identity": "E", "1": "E",
    "S^alpha": "Salpha", "S^beta": "Sbeta",
    "S^alphaI_y": "SalphaIy", "S^betaI_y": "SbetaIy",
}

BASIS_LABELS: tuple[str, ...] = tuple(_BASIS)


def basis_operator(label: str) -> np.ndarray:
    """Return the (read-only) matrix for a product-operator label.

    Labels follow the compact form ``"Sz"``, ``"Ix"``, ``"2SzIz"``, ``"Sbeta"``,
    ``"SbetaIy"``, ``"E"`` (4x4 identity) and ``"sigma0"`` ... ``"sigmaz"``
    (the 2x2 Pauli matrices). Underscores are ignored, so ``"2S_zI_z"`` works too.
    """
    key = _ALIASES.get(label, label)
    key = _ALIASES.get(key, key).replace("_", "")
    try:
        return _BASIS[key]
    except KeyError:
        raise KeyError(f"unknown basis label {label!r}") from None


def op(label: str) -> np.ndarray:
    """Writable copy of :func:`basis_operator`."""
    return np.array(basis_operator(label))


def dagger(a: np.ndarray) -> np.ndarray:
    return np.conj(np.swapaxes(a, -1, -2))


def is_hermitian(a: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return bool(np.max(np.abs(a - dagger(a)), initial=0.0) <= tol)


def unitarity_error(u: np.ndarray) -> float:
    """Max-norm deviation of ``u^dagger u`` from the identity."""
    u = np.asarray(u)
    return float(np.max(np.abs(dagger(u) @ u - np.eye(u.shape[-1]))))


def expm_hermitian(h: np.ndarray, t: float | np.ndarray = 1.0) -> np.ndarray:
    """``exp(-i t h)`` for Hermitian ``h`` (or a stack of them) via ``eigh``."""
    h = np.asarray(h)
    w, v = np.linalg.eigh(h)
    t = np.asarray(t)
    phase = np.exp(-1j * w * t[..., None]) if t.ndim else np.exp(-1j * w * t)
    return (v * phase[..., None, :]) @ dagger(v)


def matrix_exp(generator: np.ndarray) -> np.ndarray:
    """Exponential of an anti-Hermitian 4x4 generator.

    The generator ``g`` is written as ``-i h`` with ``h`` Hermitian and
    exponentiated through the eigendecomposition of ``h``, so the result is
    unitary to machine precision.
    """
    g = np.asarray(generator, dtype=complex)
    if np.max(np.abs(g + dagger(g)), initial=0.0) > HERMITIAN_TOL:
        raise ValueError("generator is not anti-Hermitian")
    h = 1j * g
    h = (h + dagger(h)) / 2
    return expm_hermitian(h)


def rotation(label: str, angle: float) -> np.ndarray:
    """``exp(-i angle P)`` for the basis operator ``P`` named by ``label``."""
    return expm_hermitian(basis_operator(label), angle)


def conjugate(u: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """``u rho u^dagger``."""
    return u @ rho @ dagger(u)


def trace_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Hilbert-Schmidt inner product ``tr(a^dagger b)``."""
    return complex(np.vdot(a, b))


def transfer_efficiency(rho: np.ndarray, target: np.ndarray) -> float:
    """Coefficient of the normalized ``target`` in ``rho``: ``Re tr(target^dagger rho)``."""
    norm = trace_inner(target, target).real
    if abs(norm - 1.0) > 1e-9:
        raise ValueError(f"target is not trace-normalized (tr(target^2) = {norm:.6g})")
    return trace_inner(target, rho).real


def commutator(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a @ b - b @ a


def decompose(rho: np.ndarray) -> dict[str, float]:
    """Coefficients of a Hermitian traceless operator in the product-operator basis."""
    return {name: trace_inner(_BASIS[name], rho).real for name in PRODUCT_OPERATORS}
