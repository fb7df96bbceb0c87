"""Fundamental tensors T_k, F_k by successive approximation.

T_k (order n-k+1) solves T = T^0 + int_0^x G q T dt, F_k (order k) solves
F = F^0 - int_x^inf G q F dt, where G is the unperturbed propagator on the
exterior power. Everything is stored phase-factored,
``Yhat = exp(-rho x S) Y`` with S the sum of the last (T) or first (F)
sector exponents. Integrals use the trapezoid rule with the h^2/12
endpoint-derivative correction on a refined copy of the user grid; the
derivative of the propagated integrand is available in closed form from
the differential equation, which makes the rule fourth order.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EnvelopeViolated, NotConverged, TailTooHeavy
from .exterior import (
    MultiIndex,
    combos,
    complement_sign,
    compound_derivation,
    compound_power,
    dim,
    tensor_norm,
    top_coefficient,
    wedge_arrays,
    wedge_vectors,
)
from .propagators import (
    batched_matvec,
    compound_steps,
    propagate,
    refine_nodes,
    scan_inward,
    scan_outward,
    unperturbed_steps,
)
from .unperturbed import RhoFrame, SectorFrame, eval_at_rho


def default_grid(x_min: float = 1e-4, x_mid: float = 1.0, X_max: float = 40.0,
                 n_geo: int = 500, n_uni: int = 1500) -> np.ndarray:
    """Geometric block on [x_min, x_mid] joined to a uniform block on [x_mid, X_max]."""
    geo = np.geomspace(x_min, x_mid, n_geo)
    uni = np.linspace(x_mid, X_max, n_uni + 1)[1:]
    return np.concatenate([geo, uni])


@dataclass
class TensorFamily:
    kind: str  # "T" or "F"
    k: int
    rho: complex
    x: np.ndarray
    Yhat: np.ndarray  # (N, C), phase-factored
    Y0hat: np.ndarray
    S: complex
    m: int
    mu_sum: complex
    iterations: int
    increments: list
    diagnostics: dict = field(default_factory=dict)

    def Y(self) -> np.ndarray:
        return self.Yhat * np.exp(self.rho * self.x * self.S)[:, None]

    def scaled(self, log_rho: complex) -> np.ndarray:
        """rho^{-mu_sum} Yhat (sector branch for log rho)."""
        return self.Yhat * np.exp(-self.mu_sum * log_rho)


def envelope(rho: complex, x, mu_sum: complex, S: complex, log_rho: complex) -> np.ndarray:
    """Growth envelope for a phase-factored tensor.

    |(rho x)^mu_sum| / |exp(rho x S)| close to the origin and 1 beyond |rho x| = 1.
    """
    x = np.asarray(x, dtype=float)
    out = np.ones_like(x)
    near = np.abs(rho) * x <= 1.0
    xn = np.maximum(x[near], 1e-300)
    out[near] = np.abs(np.exp(mu_sum * (log_rho + np.log(xn)) - rho * xn * S))
    return out


class RhoContext:
    """Shared per-rho data: refined nodes, unperturbed steps, q on the nodes."""

    def __init__(self, frame: SectorFrame, rho: complex, grid=None, delta: float = 0.01,
                 refine: int = 2, r0: float = 4.0, origin_margin: float = 1e-3):
        self.frame = frame
        self.spec = frame.spec
        self.sector = frame.sector
        self.rho = complex(rho)
        self.grid = default_grid() if grid is None else np.asarray(grid, dtype=float)
        # start a few decades below the grid so the power-law estimate of the
        # integral over [0, x_first] is negligible
        pre = np.geomspace(self.grid[0] * origin_margin, self.grid[0], 7)[:-1]
        pts = np.concatenate([pre, self.grid]) if origin_margin < 1 else self.grid
        self.nodes, where = refine_nodes(pts, abs(self.rho), delta=delta, refine=refine)
        self.where = where[len(pts) - len(self.grid):]
        self.steps = unperturbed_steps(frame.frob, self.spec.A, self.spec.B, self.rho,
                                       self.nodes, r0=r0)
        self.h = self.steps.h
        self.log_rho = complex(self.sector.log(self.rho))
        self.q_nodes = self.spec.q(self.nodes)
        self.q_zero = bool(self.spec.q.is_zero)
        self.ends = eval_at_rho(frame, self.rho, np.array([self.nodes[0], self.nodes[-1]]))
        self._compound = {}
        self._qm = {}
        self._gen = {}
        self._dq = {}

    @property
    def n(self):
        return self.spec.n

    def compound(self, m: int):
        if m not in self._compound:
            self._compound[m] = (compound_power(self.steps.U, m),
                                 compound_power(self.steps.Uinv, m))
        return self._compound[m]

    def step_hat(self, m: int, S: complex, inverse: bool = False) -> np.ndarray:
        fwd, bwd = self.compound(m)
        if inverse:
            return bwd * np.exp(self.rho * self.h * S)[:, None, None]
        return fwd * np.exp(-self.rho * self.h * S)[:, None, None]

    def qm(self, m: int) -> np.ndarray:
        if m not in self._qm:
            self._qm[m] = compound_derivation(self.q_nodes, m)
        return self._qm[m]

    def dqm(self, m: int) -> np.ndarray:
        if m not in self._dq:
            self._dq[m] = compound_derivation(self.spec.q.derivative(self.nodes), m)
        return self._dq[m]

    def generator(self, m: int) -> np.ndarray:
        """Derivation of A/x + rho B on order-m tensors at every node."""
        if m not in self._gen:
            M = self.spec.A / self.nodes[:, None, None] + self.rho * self.spec.B
            self._gen[m] = compound_derivation(M, m)
        return self._gen[m]

    def t0_start(self, k: int) -> np.ndarray:
        """T^0_k at the first node, phase-factored."""
        C0 = self.ends.C[0]
        T = wedge_vectors([C0[:, j] for j in range(k - 1, self.n)], self.n)
        S = complex(np.sum(self.sector.R[k - 1:]))
        return T * np.exp(-self.rho * self.nodes[0] * S)

    def f0_end(self, k: int) -> np.ndarray:
        return self.ends.F0hat[k][1]


def t0(ctx: RhoContext, k: int) -> np.ndarray:
    """T^0_k = C_k ^ ... ^ C_n on the user grid (phase-factored)."""
    m = ctx.n - k + 1
    S = complex(np.sum(ctx.sector.R[k - 1:]))
    return propagate(ctx.step_hat(m, S), ctx.t0_start(k))[ctx.where]


def f0(ctx: RhoContext, k: int) -> np.ndarray:
    """F^0_k = E_1 ^ ... ^ E_k on the user grid (phase-factored)."""
    S = complex(np.sum(ctx.sector.R[:k]))
    return propagate(ctx.step_hat(k, S, inverse=True), ctx.f0_end(k), outward=False)[ctx.where]


def _endpoint_correction(ctx: RhoContext, m: int, mu_sum: complex, g0: np.ndarray) -> np.ndarray:
    """int_0^{x0} of the propagated integrand, from its power law near 0."""
    H = ctx.spec.H
    mu = ctx.spec.mu
    Hm = compound_power(H, m)
    mus = np.array([sum(mu[list(c)]) for c in combos(ctx.n, m)])
    coef = np.linalg.solve(Hm, g0)
    denom = 1.0 + mu_sum - mus
    if np.any(denom.real <= 0.05):
        return 0.5 * ctx.nodes[0] * g0
    return ctx.nodes[0] * (Hm @ (coef / denom))


def _picard(ctx, kind, k, m, S, mu_sum, Y0_nodes, tol, max_iter, env_factor=10.0):
    h = ctx.h
    if kind == "T":
        U = ctx.step_hat(m, S)
    else:
        U = ctx.step_hat(m, S, inverse=True)
    env = envelope(ctx.rho, ctx.nodes, mu_sum, S, ctx.log_rho)
    base = tensor_norm(Y0_nodes) / env
    C0 = float(base.max())
    Y = Y0_nodes
    increments = []
    if ctx.q_zero:
        return Y, 0, increments, C0
    qm = ctx.qm(m)
    dq = ctx.dqm(m)
    Mhat = ctx.generator(m) - ctx.rho * S * np.eye(qm.shape[-1])
    # d/dt of G(x, t) g(t) is -Mhat g + q' Y + q Y' with Y' = (Mhat + q) Y, linear in Y
    K = dq + qm @ (Mhat + qm) - Mhat @ qm
    for r in range(1, max_iter + 1):
        g = batched_matvec(qm, Y)
        D = batched_matvec(K, Y)
        if kind == "T":
            I0 = _endpoint_correction(ctx, m, mu_sum, g[0])
            Ynew = Y0_nodes + scan_outward(U, g, h, I0, D)
        else:
            Ynew = Y0_nodes - scan_inward(U, g, h, np.zeros(g.shape[1], dtype=complex), D)
        inc = float((tensor_norm(Ynew - Y) / env).max()) / C0
        increments.append(inc)
        Y = Ynew
        if not np.all(np.isfinite(Y)) or float((tensor_norm(Y) / env).max()) > env_factor * C0:
            raise EnvelopeViolated("iterate escapes the growth envelope", kind=kind, k=k,
                                   rho=ctx.rho, iteration=r)
        if inc < tol and r >= 2:
            return Y, r, increments, C0
    raise NotConverged("successive approximations did not converge", kind=kind, k=k,
                       rho=ctx.rho, last_increment=increments[-1])


def solve_T(ctx: RhoContext, k: int, tol: float = 1e-10, max_iter: int = 50) -> TensorFamily:
    n = ctx.n
    m = n - k + 1
    S = complex(np.sum(ctx.sector.R[k - 1:]))
    mu_sum = complex(np.sum(ctx.spec.mu[k - 1:]))
    Y0 = propagate(ctx.step_hat(m, S), ctx.t0_start(k))
    if k == 1:
        # q^(n) = tr q = 0, so the integral term vanishes identically
        Y, it, incs, C0 = Y0, 0, [], float((tensor_norm(Y0)).max())
    else:
        Y, it, incs, C0 = _picard(ctx, "T", k, m, S, mu_sum, Y0, tol, max_iter)
    fam = TensorFamily("T", k, ctx.rho, ctx.grid, Y[ctx.where], Y0[ctx.where], S, m, mu_sum,
                       it, incs)
    fam.diagnostics["envelope_constant"] = C0
    # x -> 0 limit: (rho x)^{-mu_sum} T_k -> h_k ^ ... ^ h_n
    H = ctx.spec.H
    target = wedge_vectors([H[:, j] for j in range(k - 1, n)], n)
    x0 = ctx.grid[0]
    lead = fam.Yhat[0] * np.exp(ctx.rho * x0 * S) * np.exp(-mu_sum * (ctx.log_rho + np.log(x0)))
    fam.diagnostics["origin_residual"] = float(tensor_norm(lead - target) / tensor_norm(target))
    return fam


def solve_F(ctx: RhoContext, k: int, tol: float = 1e-10, max_iter: int = 50,
            tail_tol: float = 1e-8) -> TensorFamily:
    n = ctx.n
    S = complex(np.sum(ctx.sector.R[:k]))
    mu_sum = complex(np.sum(ctx.spec.mu[:k]))
    tail = ctx.spec.q.tail_mass(ctx.nodes[-1])
    if tail > tail_tol:
        raise TailTooHeavy("mass of q beyond the grid end exceeds tolerance", tail=tail,
                           tol=tail_tol)
    Y0 = propagate(ctx.step_hat(k, S, inverse=True), ctx.f0_end(k), outward=False)
    if k == n:
        Y, it, incs, C0 = Y0, 0, [], float(tensor_norm(Y0).max())
    else:
        Y, it, incs, C0 = _picard(ctx, "F", k, k, S, mu_sum, Y0, tol, max_iter)
    fam = TensorFamily("F", k, ctx.rho, ctx.grid, Y[ctx.where], Y0[ctx.where], S, k, mu_sum,
                       it, incs)
    fam.diagnostics["envelope_constant"] = C0
    fam.diagnostics["tail_mass"] = tail
    fam.diagnostics["tail_bound"] = C0 * tail * np.exp(2 * ctx.spec.q.l1_mass())
    f = ctx.sector.f
    target = wedge_vectors([f[:, j] for j in range(k)], n)
    far = tensor_norm(fam.Yhat[-5:] - target)
    fam.diagnostics["infinity_residual"] = [float(v) for v in far]
    return fam


def solve_all(ctx: RhoContext, tol: float = 1e-10, max_iter: int = 50):
    """All T_1..T_n and F_1..F_n at one rho."""
    n = ctx.n
    T = [solve_T(ctx, k, tol, max_iter) for k in range(1, n + 1)]
    F = [solve_F(ctx, k, tol, max_iter) for k in range(1, n + 1)]
    return T, F


def scaled_tensors(T: TensorFamily, F: TensorFamily, log_rho: complex):
    """rho^{-(mu_k + ... + mu_n)} T_k and rho^{-(mu_1 + ... + mu_k)} F_k (phase-factored)."""
    return T.scaled(log_rho), F.scaled(log_rho)


def green_apply(m: int, f, Yx, Yt, f_basis) -> np.ndarray:
    """sum_alpha sign_alpha |f ^ Y_alpha'(t)| Y_alpha(x) for a fundamental matrix Y.

    ``Yx``/``Yt`` are the (unfactored) fundamental matrix at x and t, ``f``
    an order-m coefficient array and ``f_basis`` the columns defining the
    signs. Equal to wedge^m(Y(x) Y(t)^{-1}) f whenever det Y equals the top
    coefficient of the basis.
    """
    Yx = np.asarray(Yx)
    Yt = np.asarray(Yt)
    n = Yx.shape[-1]
    out = np.zeros(np.broadcast_shapes(np.shape(f)[:-1], Yx.shape[:-2]) + (dim(n, m),),
                   dtype=complex)
    for a in MultiIndex.all(n, m):
        comp, sign = complement_sign(a, f_basis)
        rest = comp.zero_based if comp else ()
        Yc = wedge_vectors([Yt[..., :, j] for j in rest], n) if rest else np.ones(1)
        w = top_coefficient(wedge_arrays(f, m, Yc, n - m, n)) if rest else np.asarray(f)[..., 0]
        Ya = wedge_vectors([Yx[..., :, j] for j in a.zero_based], n)
        out = out + (sign * w)[..., None] * Ya
    return out


def green_propagator(m: int, f, Yx, Yt) -> np.ndarray:
    """wedge^m(Y(x) Y(t)^{-1}) f."""
    P = compound_power(np.asarray(Yx) @ np.linalg.inv(Yt), m)
    return np.einsum("...ij,...j->...i", P, f)


def large_rho_diagnostics(frame: SectorFrame, rho_list, ks=None, grid=None,
                          x_window=(0.5, 4.0), tol: float = 1e-10, threshold_T: float = 0.4,
                          threshold_F: float = 0.8) -> dict:
    """Decay in |rho| of the phase-factored differences T_k - T^0_k and F_k - F^0_k.

    The maxima are taken over ``x_window``; exponents come from a log-log
    least-squares fit. Returns one entry per k.
    """
    rho_list = [complex(r) for r in rho_list]
    n = frame.n
    ks = list(range(1, n + 1)) if ks is None else list(ks)
    dT = {k: [] for k in ks}
    dF = {k: [] for k in ks}
    for rho in rho_list:
        ctx = RhoContext(frame, rho, grid)
        sel = (ctx.grid >= x_window[0]) & (ctx.grid <= x_window[1])
        for k in ks:
            T = solve_T(ctx, k, tol)
            F = solve_F(ctx, k, tol)
            dT[k].append(float(tensor_norm(T.Yhat - T.Y0hat)[sel].max()))
            dF[k].append(float(tensor_norm(F.Yhat - F.Y0hat)[sel].max()))
    mags = np.abs(rho_list)
    out = {}
    for k in ks:
        eT, eF = fit_exponent(mags, dT[k]), fit_exponent(mags, dF[k])
        out[k] = {"rho": rho_list, "T_diff": dT[k], "F_diff": dF[k], "T_exponent": eT,
                  "F_exponent": eF, "T_pass": bool(eT >= threshold_T),
                  "F_pass": bool(eF >= threshold_F)}
    return out


def fit_exponent(mags, values) -> float:
    """Least-squares p in values ~ C |rho|^{-p}; inf if every value vanishes."""
    v = np.asarray(values, dtype=float)
    if np.all(v == 0):
        return float("inf")
    v = np.maximum(v, 1e-300)
    slope = np.polyfit(np.log(np.asarray(mags, dtype=float)), np.log(v), 1)[0]
    return float(-slope)
