"""Independent reference implementations used only by the tests.

Long-double propagation removes float64 roundoff from finite differences, so a
tiny step (1e-3 Hz) measures the analytic gradient rather than the noise floor.
"""

import numpy as np

LD = np.clongdouble
PI_LD = 4 * np.arctan(np.longdouble(1))

_P = {
    "x": np.array([[0, 1], [1, 0]]),
    "y": np.array([[0, -1j], [1j, 0]]),
    "z": np.array([[1, 0], [0, -1]]),
}
_E = np.eye(2)


def _ld(a):
    return np.asarray(a, dtype=complex).astype(LD)


SX, SY, SZ = (_ld(np.kron(_P[k], _E) / 2) for k in "xyz")
IX, IY, IZ = (_ld(np.kron(_E, _P[k]) / 2) for k in "xyz")


def ld_matmul(a, b):
    return np.einsum("...ij,...jk->...ik", a, b)


def ld_expm(h, t):
    """``exp(-i t h)`` by scaling and squaring a 30-term Taylor series in long double."""
    x = (-1j * np.longdouble(t)) * h
    norm = np.max(np.sum(np.abs(x), axis=-1))
    s = max(0, int(np.ceil(np.log2(float(norm) / 0.25))) if norm > 0 else 0)
    x = x / (np.longdouble(2) ** s)
    out = np.eye(4, dtype=LD)
    term = np.eye(4, dtype=LD)
    for k in range(1, 31):
        term = ld_matmul(term, x) / k
        out = out + term
    for _ in range(s):
        out = ld_matmul(out, out)
    return out


def ld_efficiency(controls, dt, A, initial, target, fast_ops=()):
    """``Re tr(target^+ U rho U^+)`` for rotating-frame controls, in long double.

    ``fast_ops`` is a list of ``(index, unitary)`` applied just before step ``index``.
    """
    c = np.asarray(controls, dtype=np.longdouble)
    two_pi = 2 * PI_LD
    drift = two_pi * np.longdouble(A) * ld_matmul(SZ, IZ)
    u = np.eye(4, dtype=LD)
    ops = sorted(fast_ops, key=lambda f: f[0])
    j = 0
    for k in range(len(c) + 1):
        while j < len(ops) and ops[j][0] == k:
            u = ld_matmul(_ld(ops[j][1]), u)
            j += 1
        if k == len(c):
            break
        h = drift + two_pi * (c[k, 0] * SX + c[k, 1] * SY + c[k, 2] * IX + c[k, 3] * IY)
        u = ld_matmul(ld_expm(h, dt), u)
    rho = ld_matmul(ld_matmul(u, _ld(initial)), np.conj(u.T))
    return np.real(np.trace(ld_matmul(np.conj(_ld(target).T), rho)))


def ld_fd_gradient(controls, dt, A, initial, target, fast_ops=(), h=1e-3, components=None):
    """Central differences of :func:`ld_efficiency`; ``components`` limits to ``(k, c)`` pairs."""
    c = np.asarray(controls, dtype=np.longdouble)
    idx = components if components is not None else [(k, ch) for k in range(len(c)) for ch in range(4)]
    out = {}
    for k, ch in idx:
        plus, minus = c.copy(), c.copy()
        plus[k, ch] += np.longdouble(h)
        minus[k, ch] -= np.longdouble(h)
        fp = ld_efficiency(plus, dt, A, initial, target, fast_ops)
        fm = ld_efficiency(minus, dt, A, initial, target, fast_ops)
        out[(k, ch)] = float((fp - fm) / (2 * np.longdouble(h)))
    return out


def square_wave_sign(t, A):
    """``sgn(sin(pi A t))`` evaluated directly."""
    return np.sign(np.sin(np.pi * A * np.asarray(t)))


def iz_crossing_time(level, v_max):
    """Time at which ``sin^2(pi v T)`` first reaches ``level``."""
    return np.arcsin(np.sqrt(level)) / (np.pi * v_max)


def ix_crossing_time(level, v_max):
    """Time at which ``sin(4 v T)`` first reaches ``level``."""
    return np.arcsin(level) / (4 * v_max)
