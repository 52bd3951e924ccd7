"""Numerical checks of the fast/slow ``K1 A K2`` decomposition.

Fast operations are generated by the electron controls and the coupling
(``S_x, S_y, S_z, 2S_xI_z, 2S_yI_z, 2S_zI_z, I_z``); the slow part is
``exp[-i(alpha S^alpha I_y + beta S^beta I_y)]``. Symbolic statements about
these products are checked here with dense 4x4 numerics.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from .algebra import PRODUCT_OPERATORS, basis_operator, dagger
from .dynamics import ControlSequence, SystemParams

K1_LABELS = ("Iz", "2SzIz", "2SyIz", "2SxIz", "Sz", "Sy", "Sx")  # a1 ... a7
K2_LABELS = ("Sx", "Sy", "2SxIz", "2SyIz", "Sz", "2SzIz", "Iz")  # b1 ... b7
FAST_LABELS = ("Sx", "Sy", "Sz", "2SxIz", "2SyIz", "2SzIz", "Iz")
CARTAN_LABELS = ("Sx", "Sy", "Sz", "2SzIz", "Sz", "Sx", "Sy", "Iz")  # d1 ... d8

_ID = np.eye(4, dtype=complex)
_OPS = {k: np.array(basis_operator(k)) for k in PRODUCT_OPERATORS}
_RHO = _OPS["2SzIz"]
TARGET_CLASSES = ("Iz", "Ix")
_PAULI = (np.array([[0, 1], [1, 0]], complex), np.array([[0, -1j], [1j, 0]]),
          np.array([[1, 0], [0, -1]], complex))


def pexp(label: str, angle) -> np.ndarray:
    """``exp(-i angle P)`` for a product operator (``P^2 = 1/4``), vectorized over ``angle``."""
    a = np.asarray(angle, dtype=float)[..., None, None]
    return np.cos(a / 2) * _ID - 2j * np.sin(a / 2) * _OPS[label]


def chain(labels, angles) -> np.ndarray:
    """Ordered product ``exp(-i x_1 P_1) exp(-i x_2 P_2) ...`` (leftmost first)."""
    out = _ID
    for lab, x in zip(labels, angles):
        out = out @ pexp(lab, x)
    return out


def canonical_angle(x):
    """Reduce angles to ``(-2 pi, 2 pi]``."""
    y = np.mod(np.asarray(x, dtype=float) + 2 * math.pi, 4 * math.pi) - 2 * math.pi
    return np.where(y <= -2 * math.pi, y + 4 * math.pi, y)


@dataclass(frozen=True)
class FastParams:
    """Angles ``a1..a7`` of ``K1`` and ``b1..b7`` of ``K2`` in radians."""

    a: np.ndarray = field(default_factory=lambda: np.zeros(7))
    b: np.ndarray = field(default_factory=lambda: np.zeros(7))

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float).reshape(7)
        b = np.asarray(self.b, dtype=float).reshape(7)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    def canonical(self) -> "FastParams":
        return FastParams(canonical_angle(self.a), canonical_angle(self.b))

    @classmethod
    def random(cls, rng: np.random.Generator) -> "FastParams":
        return cls(rng.uniform(-math.pi, math.pi, 7), rng.uniform(-math.pi, math.pi, 7))


@dataclass(frozen=True)
class SlowParams:
    alpha: float = 0.0
    beta: float = 0.0

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and math.isfinite(self.beta)):
            raise ValueError("alpha and beta must be finite")


def k1(a) -> np.ndarray:
    """``e^{-i a7 Sx} e^{-i a6 Sy} e^{-i a5 Sz} e^{-i a4 2SxIz} e^{-i a3 2SyIz} e^{-i a2 2SzIz} e^{-i a1 Iz}``."""
    a = np.asarray(a, dtype=float)
    return chain(K1_LABELS[::-1], a[::-1])


def k2(b) -> np.ndarray:
    """``e^{-i b1 Sx} e^{-i b2 Sy} e^{-i b3 2SxIz} e^{-i b4 2SyIz} e^{-i b5 Sz} e^{-i b6 2SzIz} e^{-i b7 Iz}``."""
    return chain(K2_LABELS, b)


def slow_unitary(alpha: float, beta: float) -> np.ndarray:
    """``exp[-i(alpha S^alpha I_y + beta S^beta I_y)]``: y rotations of the two nuclear lines."""
    out = np.zeros((4, 4), dtype=complex)
    for blk, ang in ((slice(0, 2), alpha), (slice(2, 4), beta)):
        c, s = math.cos(ang / 2), math.sin(ang / 2)
        out[blk, blk] = [[c, -s], [s, c]]
    return out


def assemble_KAK(fp: FastParams, sp: SlowParams) -> np.ndarray:
    return k1(fp.a) @ slow_unitary(sp.alpha, sp.beta) @ k2(fp.b)


def _wrap(x: float) -> float:
    """Distance of ``x`` to the nearest multiple of 2 pi."""
    return abs(math.remainder(x, 2 * math.pi))


def check_alpha_beta_class(sp: SlowParams, target: str, tol: float = 1e-9) -> bool:
    """Whether ``(alpha, beta)`` lies in the admissible class for ``2SzIz -> target``."""
    a, b = sp.alpha, sp.beta
    if target == "Iz":
        return (_wrap(a) < tol and _wrap(b - math.pi) < tol) or (
            _wrap(a - math.pi) < tol and _wrap(b) < tol)
    if target == "Ix":
        return _wrap(b - a + math.pi) < tol
    raise ValueError(f"unknown target {target!r}")


# --------------------------------------------------------------------------- class scan

# Factors that commute with the relevant operator drop out of the residual:
# K1 commutes with I_z, the electron rotations of K1 commute with I_x, and the
# last three factors of K2 commute with 2SzIz.
_FREE_A = {"Iz": (), "Ix": (0, 1, 2, 3)}
_FREE_B = (0, 1, 2, 3)


def _unpack(x: np.ndarray, target: str, full: bool) -> tuple[np.ndarray, np.ndarray]:
    if full:
        return x[:7], x[7:]
    a, b = np.zeros(7), np.zeros(7)
    ia = _FREE_A[target]
    a[list(ia)] = x[:len(ia)]
    b[list(_FREE_B)] = x[len(ia):]
    return a, b


def _transfer_diff(x, alpha, beta, target, full):
    a, b = _unpack(x, target, full)
    u = k1(a) @ slow_unitary(alpha, beta) @ k2(b)
    d = u @ _RHO @ dagger(u) - _OPS[target]
    return np.concatenate([d.real.ravel(), d.imag.ravel()])


def transfer_residual(sp: SlowParams, target: str, restarts: int = 8,
                      rng: np.random.Generator | None = None, full: bool = False,
                      stop_below: float = 1e-10) -> float:
    """``min_{K1,K2} || K1 A K2 (2SzIz) K2^+ A^+ K1^+ - target ||_F`` for a single point.

    ``full=True`` optimizes all 14 fast angles instead of only those that can
    influence the residual.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    n = 14 if full else len(_FREE_A[target]) + len(_FREE_B)
    best = math.inf
    for _ in range(restarts):
        x0 = rng.uniform(-math.pi, math.pi, n)
        sol = least_squares(_transfer_diff, x0, args=(sp.alpha, sp.beta, target, full),
                            method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=2000)
        best = min(best, float(np.linalg.norm(sol.fun)))
        if best < stop_below:
            break
    return best


def slow_unitaries(alpha, beta) -> np.ndarray:
    """Vectorized :func:`slow_unitary` for equal-shape arrays of angles."""
    alpha, beta = np.broadcast_arrays(np.asarray(alpha, float), np.asarray(beta, float))
    out = np.zeros(alpha.shape + (4, 4), dtype=complex)
    for off, ang in ((0, alpha), (2, beta)):
        c, s = np.cos(ang / 2), np.sin(ang / 2)
        out[..., off, off] = c
        out[..., off, off + 1] = -s
        out[..., off + 1, off] = s
        out[..., off + 1, off + 1] = c
    return out


def _free_layout(target: str):
    """Ordered factor list of ``K1 A K2`` restricted to the free angles; ``None`` marks ``A``."""
    left = [K1_LABELS[i] for i in sorted(_FREE_A[target], reverse=True)]
    right = [K2_LABELS[i] for i in _FREE_B]
    return left + [None] + right


def _batched_transfer(x: np.ndarray, slow: np.ndarray, layout, target: str):
    """Residual vectors ``(B, 32)`` and Jacobians ``(B, 32, n)`` of the transfer equation."""
    mats, params = [], []
    j = 0
    for lab in layout:
        if lab is None:
            mats.append(slow)
        else:
            mats.append(pexp(lab, x[:, j]))
            params.append((len(mats) - 1, lab))
            j += 1
    pre = [np.broadcast_to(_ID, slow.shape)]
    for m in mats:
        pre.append(pre[-1] @ m)
    suf = [None] * len(mats) + [np.broadcast_to(_ID, slow.shape)]
    for k in range(len(mats) - 1, -1, -1):
        suf[k] = mats[k] @ suf[k + 1]
    u = pre[-1]
    ud = dagger(u)
    d = u @ _RHO @ ud - _OPS[target]
    cols = []
    for pos, lab in params:
        xk = pre[pos] @ (-1j * _OPS[lab]) @ suf[pos] @ _RHO @ ud
        cols.append(xk + dagger(xk))
    jac = np.stack(cols, axis=-1).reshape(len(x), 16, -1)
    r = d.reshape(len(x), 16)
    return np.concatenate([r.real, r.imag], 1), np.concatenate([jac.real, jac.imag], 1)


def _batched_lm(fun, x0: np.ndarray, iters: int = 200, tol: float = 1e-14):
    """Levenberg-Marquardt run independently on each row of ``x0``; returns final residual norms."""
    x = x0.copy()
    r, jac = fun(x)
    cost = np.sum(r ** 2, 1)
    lam = np.full(len(x), 1e-3)
    eye = np.eye(x.shape[1])
    for _ in range(iters):
        active = cost > tol ** 2
        if not active.any():
            break
        jtj = np.einsum("bmi,bmj->bij", jac, jac)
        g = np.einsum("bmi,bm->bi", jac, r)
        diag = np.einsum("bii->bi", jtj)[:, :, None] * eye + 1e-12 * eye
        step = -np.linalg.solve(jtj + lam[:, None, None] * diag, g[..., None])[..., 0]
        step[~active] = 0
        r_new, jac_new = fun(x + step)
        cost_new = np.sum(r_new ** 2, 1)
        ok = (cost_new < cost) & active
        x[ok] += step[ok]
        r[ok], jac[ok], cost[ok] = r_new[ok], jac_new[ok], cost_new[ok]
        lam = np.where(ok, lam / 3, np.where(active, lam * 2, lam))
        lam = np.clip(lam, 1e-15, 1e12)
    return np.sqrt(cost)


@dataclass(frozen=True)
class ClassScan:
    target: str
    alphas: np.ndarray
    betas: np.ndarray
    residuals: np.ndarray  # (len(alphas), len(betas))
    on_class: np.ndarray  # predicted class membership, bool
    seed: int = 0
    restarts: int = 8

    def found(self, tol: float = 1e-6) -> np.ndarray:
        return self.residuals < tol

    def matches(self, tol: float = 1e-6) -> bool:
        return bool(np.array_equal(self.found(tol), self.on_class))

    @property
    def max_on_class(self) -> float:
        return float(self.residuals[self.on_class].max(initial=0.0))

    @property
    def min_off_class(self) -> float:
        return float(self.residuals[~self.on_class].min(initial=math.inf))


def scan_transfer_classes(target: str, resolution: int = 64, restarts: int = 8,
                          seed: int = 0) -> ClassScan:
    """Residual of the transfer equation on a ``resolution x resolution`` grid over ``[0, 2 pi)^2``.

    For each grid point the residual is minimized over the fast angles that can
    affect it, with ``restarts`` random starts; all points and starts run as
    one batched Levenberg-Marquardt solve.
    """
    if target not in TARGET_CLASSES:
        raise ValueError(f"target must be one of {TARGET_CLASSES}")
    if resolution < 64:
        raise ValueError("resolution must be at least 64")
    if restarts < 1:
        raise ValueError("need at least one restart")
    grid = 2 * math.pi * np.arange(resolution) / resolution
    al, be = np.meshgrid(grid, grid, indexing="ij")
    cls = np.vectorize(lambda a, b: check_alpha_beta_class(SlowParams(a, b), target))(al, be)
    layout = _free_layout(target)
    n = sum(lab is not None for lab in layout)
    rng = np.random.default_rng(seed)
    x0 = rng.uniform(-math.pi, math.pi, (restarts * al.size, n))
    slow = np.tile(slow_unitaries(al.ravel(), be.ravel()), (restarts, 1, 1))
    norms = _batched_lm(lambda x: _batched_transfer(x, slow, layout, target), x0)
    res = norms.reshape(restarts, *al.shape).min(0)
    return ClassScan(target, grid, grid.copy(), res, cls.astype(bool), seed, restarts)


def closed_form_iz_residual(alpha: float, beta: float) -> float:
    """Exact minimum for the ``I_z`` target over the whole fast group.

    The orbit of ``2SzIz`` under fast operations is ``diag(n1.sigma/2, -n2.sigma/2)`` in
    the two ``I_z`` sectors, so the minimum follows from the sector Bloch vectors
    of ``A^+ I_z A``.
    """
    a = slow_unitary(alpha, beta)
    m = dagger(a) @ _OPS["Iz"] @ a
    total = 0.0
    for idx in ([0, 2], [1, 3]):
        blk = m[np.ix_(idx, idx)]
        total += np.linalg.norm([np.trace(s @ blk).real / 2 for s in _PAULI])
    return float(math.sqrt(max(0.0, 2 - 2 * total)))


# --------------------------------------------------------------------------- pull-through


def _plus_block(u: np.ndarray) -> np.ndarray:
    """Restriction to the I_z = +1/2 subspace (basis |alpha,up>, |beta,up>)."""
    idx = [0, 2]
    return u[np.ix_(idx, idx)]


def euler_xyz(m: np.ndarray) -> tuple[float, float, float]:
    """Angles with ``m = e^{-i x sx/2} e^{-i y sy/2} e^{-i z sz/2}`` for ``m`` in SU(2)."""
    r = np.array([[0.5 * np.trace(pj @ m @ pk @ dagger(m)).real for pk in _PAULI] for pj in _PAULI])
    y = math.asin(max(-1.0, min(1.0, r[0, 2])))
    if abs(math.cos(y)) > 1e-12:
        x = math.atan2(-r[1, 2], r[2, 2])
        z = math.atan2(-r[0, 1], r[0, 0])
    else:  # gimbal lock: only x +- z is determined
        z = 0.0
        x = math.atan2(r[2, 1], r[1, 1])
    rebuilt = _su2_xyz(x, y, z)
    if np.max(np.abs(rebuilt + m)) < np.max(np.abs(rebuilt - m)):
        x += 2 * math.pi
    return x, y, z


def _su2_xyz(x: float, y: float, z: float) -> np.ndarray:
    def rot(s, t):
        return math.cos(t / 2) * np.eye(2) - 1j * math.sin(t / 2) * s

    sx, sy, sz = _PAULI
    return rot(sx, x) @ rot(sy, y) @ rot(sz, z)


def pull_through_angles(a2, a3, a4, a5, a6, a7) -> tuple[float, float, float]:
    """``(a2', a3', a4')`` moving the coupling factors left of the electron rotations.

    Conjugates ``e^{-i a4 2SxIz} e^{-i a3 2SyIz} e^{-i a2 2SzIz}`` successively by
    ``e^{-i a5 Sz}``, ``e^{-i a6 Sy}`` and ``e^{-i a7 Sx}``, re-expressing the result
    after each conjugation through its Euler angles.
    """
    x, y, z = a4, a3, a2
    for label, ang in (("Sz", a5), ("Sy", a6), ("Sx", a7)):
        r = pexp(label, ang)
        w = chain(("2SxIz", "2SyIz", "2SzIz"), (x, y, z))
        x, y, z = euler_xyz(_plus_block(r @ w @ dagger(r)))
    return z, y, x


def verify_pullthrough(a2, a3, a4, a5, a6, a7) -> float:
    """Max-norm mismatch between the two sides of the pull-through identity."""
    electron = chain(("Sx", "Sy", "Sz"), (a7, a6, a5))
    lhs = electron @ chain(("2SxIz", "2SyIz", "2SzIz"), (a4, a3, a2))
    p2, p3, p4 = pull_through_angles(a2, a3, a4, a5, a6, a7)
    rhs = chain(("2SxIz", "2SyIz", "2SzIz"), (p4, p3, p2)) @ electron
    return float(np.max(np.abs(lhs - rhs)))


# --------------------------------------------------------------------------- surjectivity


def _algebra_coords(x: np.ndarray) -> np.ndarray:
    """Real coordinates of an anti-Hermitian matrix ``x = -i sum c_P P`` (plus identity)."""
    h = 1j * x
    c = [np.vdot(_OPS[k], h).real for k in PRODUCT_OPERATORS]
    c.append(np.trace(h).real / 2)
    return np.array(c)


def k1_jacobian(a, h: float = 1e-6) -> np.ndarray:
    """``16 x 7`` left-trivialized Jacobian of ``a -> K1(a)`` by central differences."""
    a = np.asarray(a, dtype=float)
    base_inv = dagger(k1(a))
    cols = []
    for i in range(7):
        e = np.zeros(7)
        e[i] = h
        d = (k1(a + e) - k1(a - e)) / (2 * h)
        cols.append(_algebra_coords(base_inv @ d))
    return np.column_stack(cols)


def k1_jacobian_rank(fp: FastParams | np.ndarray, tol: float = 1e-8) -> int:
    a = fp.a if isinstance(fp, FastParams) else np.asarray(fp, dtype=float)
    s = np.linalg.svd(k1_jacobian(a), compute_uv=False)
    return int(np.sum(s > tol))


def random_fast_element(rng: np.random.Generator, factors: int = 20) -> np.ndarray:
    """Random product of exponentials of the seven fast generators."""
    labels = rng.choice(FAST_LABELS, size=factors)
    return chain(labels, rng.uniform(-math.pi, math.pi, factors))


@dataclass(frozen=True)
class FastFit:
    params: FastParams
    residual: float
    converged: bool
    form: str = "K1"
    angles: np.ndarray | None = None


def _form(form: str):
    if form == "K1":
        return lambda x: k1(x), 7
    if form == "cartan":
        return lambda x: chain(CARTAN_LABELS, x), 8
    raise ValueError(f"unknown form {form!r}")


def fit_fast_decomposition(u: np.ndarray, restarts: int = 32, tol: float = 1e-8,
                           seed: int = 0, form: str = "K1") -> FastFit:
    """Least-squares fit of the ordered-exponential form to ``u`` (Frobenius residual).

    ``form="K1"`` fits the seven-angle ``K1`` product; ``form="cartan"`` fits the
    eight-factor product ``e^{-i d1 Sx} ... e^{-i d8 Iz}`` of the alternative
    argument. The best restart is returned; ``converged`` reports whether its
    residual is below ``tol``.
    """
    u = np.asarray(u, dtype=complex)
    build, n = _form(form)
    rng = np.random.default_rng(seed)

    def diff(x):
        d = build(x) - u
        return np.concatenate([d.real.ravel(), d.imag.ravel()])

    best_x, best = None, math.inf
    for _ in range(restarts):
        x0 = rng.uniform(-math.pi, math.pi, n)
        sol = least_squares(diff, x0, method="lm", xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=4000)
        r = float(np.linalg.norm(sol.fun))
        if r < best:
            best, best_x = r, sol.x
        if best < tol * 1e-2:
            break
    angles = canonical_angle(best_x)
    params = FastParams(angles if form == "K1" else np.zeros(7), np.zeros(7))
    return FastFit(params, best, best < tol, form, angles)


# --------------------------------------------------------------------------- lower bound


@dataclass(frozen=True)
class LowerBound:
    beta_minus_alpha: float
    alpha: float
    beta: float
    duration: float
    saturates: bool


def slow_angles(seq: ControlSequence, p: SystemParams) -> tuple[float, float]:
    """``(alpha, beta)`` accumulated by the nuclear controls, integrated exactly per step."""
    e = seq.edges
    k = math.pi * p.A
    sin_int = (np.cos(k * e[:-1]) - np.cos(k * e[1:])) / k
    cos_int = (np.sin(k * e[1:]) - np.sin(k * e[:-1])) / k
    alpha = -2 * math.pi * float(np.sum(seq.vx * sin_int - seq.vy * cos_int))
    beta = 2 * math.pi * float(np.sum(seq.vx * sin_int + seq.vy * cos_int))
    return alpha, beta


def lower_bound_check(seq: ControlSequence, p: SystemParams, tol: float = 1e-3) -> LowerBound:
    """``beta - alpha`` of a sequence and whether it saturates the ``pi/(8 v_max)`` bound."""
    alpha, beta = slow_angles(seq, p)
    diff = beta - alpha
    t_min = math.pi / (8 * p.v_max) if p.v_max > 0 else math.inf
    sat = abs(abs(diff) - math.pi) <= tol and abs(seq.duration - t_min) <= tol * t_min
    return LowerBound(diff, alpha, beta, seq.duration, bool(sat))


def slow_angles_from_propagator(u: np.ndarray) -> tuple[float, float]:
    """Read ``(alpha, beta)`` off the two nuclear-line blocks of an interaction-frame propagator."""
    out = []
    for blk in (slice(0, 2), slice(2, 4)):
        m = u[blk, blk]
        c = (m[0, 0] + m[1, 1]).real / 2
        s = (m[1, 0] - m[0, 1]).real / 2
        out.append(2 * math.atan2(s, c))
    return out[0], out[1]


# --------------------------------------------------------------------------- report


def _stats(values) -> dict:
    v = np.asarray(values, dtype=float)
    return {"max": float(v.max()), "min": float(v.min()), "mean": float(v.mean()), "count": int(v.size)}


def verification_report(seed: int = 0, resolution: int = 64, restarts: int = 8, draws: int = 1000,
                        jacobian_points: int = 100, fits: int = 200,
                        params: SystemParams | None = None) -> dict:
    """Run every decomposition claim and collect pass/fail flags with residual statistics."""
    from .pulses import synth_to_ix_square

    rng = np.random.default_rng(seed)
    claims = {}

    pull = [verify_pullthrough(*rng.uniform(-math.pi, math.pi, 6)) for _ in range(draws)]
    claims["pullthrough"] = {"pass": max(pull) < 1e-10, "threshold": 1e-10, "residual": _stats(pull)}

    ranks = [k1_jacobian_rank(rng.uniform(-math.pi, math.pi, 7)) for _ in range(jacobian_points)]
    claims["k1_jacobian_rank"] = {"pass": all(r == 7 for r in ranks), "ranks": _stats(ranks)}

    fit_res = [fit_fast_decomposition(random_fast_element(rng), seed=seed + i).residual
               for i in range(fits)]
    claims["fast_decomposition_fit"] = {"pass": max(fit_res) < 1e-8, "threshold": 1e-8,
                                        "residual": _stats(fit_res)}

    for target in TARGET_CLASSES:
        scan = scan_transfer_classes(target, resolution, restarts, seed)
        extra = scan.found() & ~scan.on_class
        claims[f"classes_{target}"] = {
            "pass": scan.matches() and scan.min_off_class > 0.1,
            "classes_match": scan.matches(),
            "max_on_class": scan.max_on_class,
            "min_off_class": scan.min_off_class,
            "unexpected_zeros": [[float(scan.alphas[i]), float(scan.betas[j])]
                                 for i, j in zip(*np.nonzero(extra))],
        }

    p = params or SystemParams(A=10e6, u_max=1e6, v_max=20e3)
    lb = lower_bound_check(synth_to_ix_square(p, prelude=False, unwind=False), p)
    claims["lower_bound"] = {"pass": lb.saturates and abs(lb.beta_minus_alpha + math.pi) < 1e-3,
                             "beta_minus_alpha": lb.beta_minus_alpha, "duration": lb.duration}

    return {"seed": seed, "all_pass": all(c["pass"] for c in claims.values()), "claims": claims}
