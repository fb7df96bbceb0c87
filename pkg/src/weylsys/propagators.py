"""Step propagators of the unperturbed system Y' = (A/x + rho B) Y on x-nodes.

Close to the origin (|rho x| <= r0) a step uses the Frobenius basis,
which is exact up to series truncation. Further out a fourth-order Magnus
step is used. Sequential scans are compiled with numba.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np

from .exterior import compound_power
from .series import Frobenius

SQRT3 = np.sqrt(3.0)


@numba.njit(cache=True)
def _expm_kernel(X, order):
    B, n = X.shape[0], X.shape[1]
    out = np.empty_like(X)
    term = np.empty((n, n), dtype=np.complex128)
    nxt = np.empty((n, n), dtype=np.complex128)
    acc = np.empty((n, n), dtype=np.complex128)
    for b in range(B):
        nrm = 0.0
        for j in range(n):
            col = 0.0
            for i in range(n):
                col += abs(X[b, i, j].real) + abs(X[b, i, j].imag)
            nrm = max(nrm, col)
        s = 0
        while nrm > 0.25:
            nrm *= 0.5
            s += 1
        scale = 0.5 ** s
        for i in range(n):
            for j in range(n):
                term[i, j] = 1.0 if i == j else 0.0
                acc[i, j] = term[i, j]
        for p in range(1, order + 1):
            big = 0.0
            for i in range(n):
                for j in range(n):
                    v = 0j
                    for m in range(n):
                        v += term[i, m] * X[b, m, j]
                    nxt[i, j] = v * scale / p
                    big = max(big, abs(v.real) + abs(v.imag))
            for i in range(n):
                for j in range(n):
                    term[i, j] = nxt[i, j]
                    acc[i, j] += nxt[i, j]
            if big * scale < 1e-18 * p:
                break
        for _ in range(s):
            for i in range(n):
                for j in range(n):
                    v = 0j
                    for m in range(n):
                        v += acc[i, m] * acc[m, j]
                    nxt[i, j] = v
            for i in range(n):
                for j in range(n):
                    acc[i, j] = nxt[i, j]
        for i in range(n):
            for j in range(n):
                out[b, i, j] = acc[i, j]
    return out


def expm_batched(X: np.ndarray, order: int = 14) -> np.ndarray:
    """exp of a stack of small matrices: Taylor series with scaling and squaring.

    Each matrix is scaled to 1-norm <= 1/4, where 14 terms are accurate to
    well below double precision.
    """
    X = np.asarray(X, dtype=complex)
    shape = X.shape
    flat = np.ascontiguousarray(X.reshape((-1,) + shape[-2:]))
    return _expm_kernel(flat, order).reshape(shape)


def magnus_omega(A, B, rho, x0, x1) -> np.ndarray:
    """Fourth-order Magnus exponent on [x0, x1] for M(x) = A/x + rho B."""
    x0 = np.asarray(x0, dtype=float)
    x1 = np.asarray(x1, dtype=float)
    h = x1 - x0
    xm = 0.5 * (x0 + x1)
    xa = xm - h * SQRT3 / 6.0
    xb = xm + h * SQRT3 / 6.0
    s = 0.5 * h * (1.0 / xa + 1.0 / xb)
    comm = rho * (A @ B - B @ A)
    coef = -(SQRT3 / 12.0) * h * h * (1.0 / xa - 1.0 / xb)
    return (s[:, None, None] * A + (h * rho)[:, None, None] * B
            + coef[:, None, None] * comm)


@dataclass
class StepSet:
    """Forward propagators U_i = Phi(x_{i+1}, x_i) and their inverses."""

    x: np.ndarray
    rho: complex
    U: np.ndarray
    Uinv: np.ndarray
    series_mask: np.ndarray

    @property
    def h(self) -> np.ndarray:
        return np.diff(self.x)


def unperturbed_steps(frob: Frobenius, A, B, rho: complex, x, r0: float = 4.0,
                      cond_max: float = 2e3, r_always: float = 0.5) -> StepSet:
    """Series steps c(x1) c(x0)^-1 near the origin, Magnus steps elsewhere.

    The series region ends at |rho x| = r0 or earlier, as soon as the
    analytic factor of c has condition number above ``cond_max`` (its
    rounding error grows with it, at a direction-dependent rate).
    """
    x = np.asarray(x, dtype=float)
    rho = complex(rho)
    x0, x1 = x[:-1], x[1:]
    use_series = np.abs(rho) * x1 <= r0
    U = np.empty((len(x0),) + A.shape, dtype=complex)
    Ui = np.empty_like(U)
    if use_series.any():
        idx = np.nonzero(use_series)[0]
        pts = np.union1d(idx, idx + 1)
        C = frob.chat(rho * x[pts])
        cond = np.linalg.cond(C)
        bad = (cond > cond_max) & (np.abs(rho) * x[pts] > r_always)
        if bad.any():
            stop = pts[np.argmax(bad)]  # first ill-conditioned node
            use_series &= np.arange(len(x0)) + 1 < stop
            idx = np.nonzero(use_series)[0]
            keep = pts <= stop
            pts, C = pts[keep], C[keep]
    if use_series.any():
        Cinv = np.linalg.inv(C)
        pos = {p: i for i, p in enumerate(pts)}
        a = np.array([pos[i] for i in idx], dtype=int)
        b = np.array([pos[i + 1] for i in idx], dtype=int)
        lr = np.log(x[idx + 1] / x[idx])
        P = np.exp(lr[:, None] * frob.mu)
        U[idx] = (C[b] * P[:, None, :]) @ Cinv[a]
        Ui[idx] = (C[a] / P[:, None, :]) @ Cinv[b]
    rest = np.nonzero(~use_series)[0]
    if rest.size:
        Om = magnus_omega(A, B, rho, x0[rest], x1[rest])
        U[rest] = expm_batched(Om)
        Ui[rest] = expm_batched(-Om)
    return StepSet(x, rho, U, Ui, use_series)


def compound_steps(steps: StepSet, m: int, S: complex, inverse: bool = False) -> np.ndarray:
    """Phase-factored compound steps exp(-+rho h S) wedge^m U."""
    h = steps.h
    if inverse:
        return compound_power(steps.Uinv, m) * np.exp(steps.rho * h * S)[:, None, None]
    return compound_power(steps.U, m) * np.exp(-steps.rho * h * S)[:, None, None]


@numba.njit(cache=True)
def _scan_out(U, g, D, h, y0):
    N = g.shape[0]
    C = g.shape[1]
    out = np.empty((N, C), dtype=np.complex128)
    tmp = np.empty(C, dtype=np.complex128)
    for a in range(C):
        out[0, a] = y0[a]
    for i in range(N - 1):
        hh = 0.5 * h[i]
        cc = h[i] * h[i] / 12.0
        for b in range(C):
            tmp[b] = out[i, b] + hh * g[i, b] + cc * D[i, b]
        for a in range(C):
            acc = 0j
            for b in range(C):
                acc += U[i, a, b] * tmp[b]
            out[i + 1, a] = acc + hh * g[i + 1, a] - cc * D[i + 1, a]
    return out


@numba.njit(cache=True)
def _scan_in(V, g, D, h, yN):
    N = g.shape[0]
    C = g.shape[1]
    out = np.empty((N, C), dtype=np.complex128)
    tmp = np.empty(C, dtype=np.complex128)
    for a in range(C):
        out[N - 1, a] = yN[a]
    for i in range(N - 2, -1, -1):
        hh = 0.5 * h[i]
        cc = h[i] * h[i] / 12.0
        for b in range(C):
            tmp[b] = out[i + 1, b] + hh * g[i + 1, b] - cc * D[i + 1, b]
        for a in range(C):
            acc = 0j
            for b in range(C):
                acc += V[i, a, b] * tmp[b]
            out[i, a] = acc + hh * g[i, a] + cc * D[i, a]
    return out


@numba.njit(cache=True)
def _bmv(M, Y):
    N, C = Y.shape
    out = np.empty((N, M.shape[1]), dtype=np.complex128)
    for i in range(N):
        for a in range(M.shape[1]):
            acc = 0j
            for b in range(C):
                acc += M[i, a, b] * Y[i, b]
            out[i, a] = acc
    return out


def batched_matvec(M, Y) -> np.ndarray:
    """out[i] = M[i] @ Y[i] for stacks of small matrices and vectors."""
    return _bmv(_c128(M), _c128(Y))


def _c128(a):
    return np.ascontiguousarray(a, dtype=np.complex128)


def scan_outward(U, g, h, y0, D=None) -> np.ndarray:
    """I_{i+1} = U_i (I_i + h/2 g_i + h^2/12 D_i) + h/2 g_{i+1} - h^2/12 D_{i+1}.

    With D = 0 this is the composite trapezoid rule for int G g; passing
    the derivative of the propagated integrand as D gives the endpoint
    corrected (fourth order) rule.
    """
    D = np.zeros_like(g) if D is None else D
    return _scan_out(_c128(U), _c128(g), _c128(D),
                     np.ascontiguousarray(h, dtype=np.float64), _c128(y0))


def scan_inward(V, g, h, yN, D=None) -> np.ndarray:
    """J_i = V_i (J_{i+1} + h/2 g_{i+1} - h^2/12 D_{i+1}) + h/2 g_i + h^2/12 D_i."""
    D = np.zeros_like(g) if D is None else D
    return _scan_in(_c128(V), _c128(g), _c128(D),
                    np.ascontiguousarray(h, dtype=np.float64), _c128(yN))


def propagate(U, y0, outward: bool = True) -> np.ndarray:
    """Homogeneous scan with zero forcing."""
    N = U.shape[0] + 1
    g = np.zeros((N, U.shape[-1]), dtype=complex)
    h = np.zeros(N - 1)
    return scan_outward(U, g, h, y0) if outward else scan_inward(U, g, h, y0)


def refine_nodes(points, rho_abs: float, delta: float = 0.04, refine: int = 2,
                 rel_step: float = 0.05, max_nodes: int = 2_000_000):
    """Nodes containing ``points`` with |rho| h <= delta and h <= rel_step * x.

    Wide intervals close to the origin are split geometrically. Returns
    (nodes, index of each input point in nodes).
    """
    p = np.asarray(points, dtype=float)
    h = np.diff(p)
    ratio = p[1:] / p[:-1]
    geo = ratio > 1.0 + 4 * rel_step
    n_geo = np.ceil(np.log(ratio) / rel_step)
    n_lin = np.ceil(h / (rel_step * p[:-1]))
    need = np.maximum.reduce([
        np.full(h.shape, refine),
        np.ceil(rho_abs * h / delta),
        np.where(geo, n_geo, n_lin),
    ]).astype(np.int64)
    # the |rho| h bound may force a finer split than the geometric one; keep it uniform then
    geo &= need == np.ceil(np.log(ratio) / rel_step).astype(np.int64)
    total = int(need.sum()) + 1
    if total > max_nodes:
        raise ValueError(f"refined grid too large ({total} nodes)")
    start = np.concatenate([[0], np.cumsum(need)])
    seg = np.repeat(np.arange(len(h)), need)
    t = (np.arange(total - 1) - start[seg]) / need[seg]
    lin = p[seg] + h[seg] * t
    gv = p[seg] * ratio[seg] ** t
    nodes = np.empty(total)
    nodes[:-1] = np.where(geo[seg], gv, lin)
    nodes[-1] = p[-1]
    return nodes, start
