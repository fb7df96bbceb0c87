"""Vector chains of the fundamental tensors, Delta_k and the Weyl-type solutions.

All vectors are kept phase-factored: w_k and v_k carry exp(-rho x R_k), so
that T^_k = w^_k ^ ... ^ w^_n and F^_k = v^_1 ^ ... ^ v^_k hold for the
phase-factored tensors of :mod:`weylsys.volterra`. psi^_k is
exp(-rho x R_k) psi_k.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .checks import fit_limit, ode_residual, relative_spread, vector_generator, tensor_generator
from .errors import ConstructionsDisagree, DeltaZero, DeltaZeroAtOrigin, ExcessiveSpread
from .exterior import (
    lstsq_batched,
    tensor_norm,
    top_coefficient,
    wedge_arrays,
    wedge_divide_arrays,
    wedge_vectors,
)
from .unperturbed import SectorFrame
from .volterra import RhoContext, TensorFamily, fit_exponent, solve_all

DELTA_REL = 1e-8


@dataclass
class Chain:
    """w_1..w_n (kind 'T') or v_1..v_n (kind 'F'), shape (n, N, n)."""

    kind: str
    vectors: np.ndarray
    inner: str
    reconstruction: np.ndarray  # (n,) worst relative error over x
    annihilation: float

    def __getitem__(self, k: int) -> np.ndarray:
        return self.vectors[k - 1]


def _prefix(vs, n):
    """F-type wedges v_1 ^ ... ^ v_k for k = 1..n."""
    out, acc = [], np.ones(vs[0].shape[:-1] + (1,), dtype=complex)
    for j, v in enumerate(vs):
        acc = wedge_arrays(acc, j, v, 1, n)
        out.append(acc)
    return out


def _suffix(ws, n):
    """T-type wedges w_k ^ ... ^ w_n for k = 1..n."""
    out, acc = [None] * len(ws), np.ones(ws[0].shape[:-1] + (1,), dtype=complex)
    for j in range(len(ws) - 1, -1, -1):
        acc = wedge_arrays(ws[j], 1, acc, n - 1 - j, n)
        out[j] = acc
    return out


def decompose(kind: str, families: list[TensorFamily], inner: str = "hermitian",
              tol: float = 1e-8, cond_max: float = 1e12) -> Chain:
    """Split T_1..T_n (or F_1..F_n) into an orthogonal vector chain."""
    n = len(families)
    Y = [f.Yhat for f in families]
    vec = [None] * n
    if kind == "T":
        vec[n - 1] = Y[n - 1]
        for k in range(n - 1, 0, -1):  # 1-based k
            vec[k - 1] = wedge_divide_arrays(Y[k - 1], Y[k], n - k + 1, vec[k:], n,
                                             inner=inner, side="left", tol=tol,
                                             cond_max=cond_max)
        rebuilt = _suffix(vec, n)
    elif kind == "F":
        vec[0] = Y[0]
        for k in range(2, n + 1):
            vec[k - 1] = wedge_divide_arrays(Y[k - 1], Y[k - 2], k, vec[: k - 1], n,
                                             inner=inner, side="right", tol=tol,
                                             cond_max=cond_max)
        rebuilt = _prefix(vec, n)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    rec = np.array([float((tensor_norm(r - y) / tensor_norm(y)).max())
                    for r, y in zip(rebuilt, Y)])
    ann = 0.0
    for k in range(1, n + 1):
        # v_s ^ F_k = 0 for s <= k, w_k ^ T_s = 0 for s <= k
        pairs = [(vec[s - 1], Y[k - 1], k) for s in range(1, k + 1)] if kind == "F" else \
                [(vec[k - 1], Y[s - 1], n - s + 1) for s in range(1, k + 1)]
        for v, t, mt in pairs:
            if mt == n:
                continue  # wedge into order n + 1 vanishes identically
            w = wedge_arrays(v, 1, t, mt, n)
            ann = max(ann, float((tensor_norm(w) / (tensor_norm(v) * tensor_norm(t))).max()))
    return Chain(kind, np.stack(vec), inner, rec, ann)


def delta(k: int, F: list[TensorFamily], T: list[TensorFamily], max_spread: float = 1e-4):
    """Delta_k = |F_{k-1} ^ T_k| on the grid; returns (median, spread, samples).

    The phase factors of F^ and T^ cancel because the sector exponents sum
    to zero.
    """
    n = len(T)
    Tk = T[k - 1].Yhat
    if k == 1:
        vals = Tk[..., 0]
    else:
        vals = top_coefficient(wedge_arrays(F[k - 2].Yhat, k - 1, Tk, n - k + 1, n))
    med, spread = relative_spread(vals)
    if spread > max_spread:
        raise ExcessiveSpread("Delta_k varies along the grid", k=k, spread=spread,
                              rho=T[k - 1].rho)
    return med, spread, vals


def _combine(cols: np.ndarray, rhs: np.ndarray, cond_max: float = 1e12):
    """Least-squares coefficients of rhs in the columns (N, D, p), with column scaling."""
    s = np.maximum(np.abs(cols).sum(axis=-2), 1e-300)  # (N, p)
    coef, _ = lstsq_batched(cols / s[..., None, :], rhs, cond_max=cond_max)
    return coef / s


def weyl_solution(k: int, wchain: Chain, vchain: Chain, T: list[TensorFamily],
                  F: list[TensorFamily], agree_tol: float = 1e-8):
    """psi^_k by both expansions; returns (psi_gamma, psi_beta, gamma^, beta^, diag).

    gamma route: psi = sum_{j>=k} gamma_j w_j with F_{k-1} ^ psi = F_k.
    beta route: psi = v_k + sum_{j<k} beta_j v_j with psi ^ T_k = 0.
    """
    n = len(T)
    W = wchain.vectors
    V = vchain.vectors
    Fk = F[k - 1].Yhat
    Fm = F[k - 2].Yhat if k > 1 else np.ones(Fk.shape[:-1] + (1,), dtype=complex)
    cols = np.stack([wedge_arrays(Fm, k - 1, W[j], 1, n) for j in range(k - 1, n)], axis=-1)
    gam = _combine(cols, Fk)
    psi_g = np.einsum("nij,nj->ni", np.stack([W[j] for j in range(k - 1, n)], axis=-1), gam)
    Tk = T[k - 1].Yhat
    mT = n - k + 1
    if k == 1:
        bet = np.zeros((Fk.shape[0], 0), dtype=complex)
        psi_b = V[0].copy()
    else:
        cols = np.stack([wedge_arrays(V[j], 1, Tk, mT, n) for j in range(k - 1)], axis=-1)
        rhs = -wedge_arrays(V[k - 1], 1, Tk, mT, n)
        bet = _combine(cols, rhs)
        psi_b = V[k - 1] + np.einsum("nij,nj->ni", np.stack(list(V[: k - 1]), axis=-1), bet)
    scale = tensor_norm(psi_b)
    gap = float((tensor_norm(psi_g - psi_b) / scale).max())
    if gap > agree_tol:
        raise ConstructionsDisagree("gamma and beta expansions of psi_k differ", k=k,
                                    rho=T[0].rho, gap=gap)
    # defining relations
    r1 = float((tensor_norm(wedge_arrays(Fm, k - 1, psi_b, 1, n) - Fk) / tensor_norm(Fk)).max())
    if mT == n:
        r2 = 0.0
    else:
        r2 = float((tensor_norm(wedge_arrays(psi_b, 1, Tk, mT, n))
                    / (scale * tensor_norm(Tk))).max())
    return psi_g, psi_b, gam, bet, {"constructions_gap": gap, "relation_F": r1, "relation_T": r2}


def g_vectors(wchain: Chain, x, rho: complex, log_rho: complex, R, mu, npts: int = 5):
    """Limits g_k of (rho x)^{-mu_k} w_k as x -> 0, by a linear fit at the first points."""
    x = np.asarray(x, dtype=float)[:npts]
    n = len(mu)
    g = np.empty((n, n), dtype=complex)
    for k in range(n):
        w = wchain.vectors[k][:npts] * np.exp(rho * x * R[k])[:, None]
        w = w * np.exp(-mu[k] * (log_rho + np.log(x)))[:, None]
        g[k], _ = fit_limit(x, w, "linear", npts)
    return g


def g_checks(g: np.ndarray, H: np.ndarray, inner: str = "hermitian") -> dict:
    """g_n = h_n, g_k - h_k in span{g_j, j > k} and pairwise orthogonality."""
    n = g.shape[0]
    ref = np.abs(H).sum(axis=0)
    out = {"g_n_vs_h_n": float(np.abs(g[n - 1] - H[:, n - 1]).sum() / ref[n - 1])}
    proj = []
    for k in range(n - 1):
        d = g[k] - H[:, k]
        G = g[k + 1:].T
        c, *_ = np.linalg.lstsq(G, d, rcond=None)
        proj.append(float(np.abs(G @ c - d).sum() / ref[k]))
    out["span_residual"] = proj
    ip = (lambda a, b: np.vdot(b, a)) if inner == "hermitian" else (lambda a, b: a @ b)
    off = 0.0
    for i in range(n):
        for j in range(i + 1, n):
            off = max(off, abs(ip(g[i], g[j])) / (np.linalg.norm(g[i]) * np.linalg.norm(g[j])))
    out["orthogonality"] = float(off)
    return out


@dataclass
class WeylFrame:
    """Chains, Delta_k and psi_k at one rho; psi columns are phase-factored."""

    rho: complex
    sector: object
    x: np.ndarray
    v: Chain
    w: Chain
    psihat: np.ndarray  # (N, n, n), column k-1 is psi^_k
    delta: np.ndarray
    delta_spread: np.ndarray
    g: np.ndarray
    T: list = field(repr=False, default_factory=list)
    F: list = field(repr=False, default_factory=list)
    gamma: list = field(repr=False, default_factory=list)
    beta: list = field(repr=False, default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.psihat.shape[-1]

    def Psi(self) -> np.ndarray:
        z = self.rho * self.x
        return self.psihat * np.exp(z[:, None] * self.sector.R)[:, None, :]

    def psi(self, k: int) -> np.ndarray:
        return self.Psi()[:, :, k - 1]


def build_weyl(frame: SectorFrame, rho: complex, grid=None, inner: str = "hermitian",
               tol: float = 1e-10, decomp_tol: float = 1e-8, ctx: RhoContext | None = None,
               families=None, max_spread: float = 1e-4, residuals: bool = True) -> WeylFrame:
    """Tensors, chains, Delta_k and psi_1..psi_n at one rho."""
    ctx = ctx or RhoContext(frame, rho, grid)
    T, F = families if families is not None else solve_all(ctx, tol)
    n = ctx.n
    wch = decompose("T", T, inner, decomp_tol)
    vch = decompose("F", F, inner, decomp_tol)
    d0max = float(np.abs(frame.delta0).max())
    deltas, spreads = np.empty(n, dtype=complex), np.empty(n)
    for k in range(1, n + 1):
        deltas[k - 1], spreads[k - 1], _ = delta(k, F, T, max_spread)
        if abs(deltas[k - 1]) <= DELTA_REL * d0max:
            raise DeltaZero("Delta_k vanishes; psi_k undefined", k=k, rho=ctx.rho,
                            delta=deltas[k - 1])
    cols, gams, bets, rel = [], [], [], []
    for k in range(1, n + 1):
        _, pb, ga, be, dg = weyl_solution(k, wch, vch, T, F)
        cols.append(pb)
        gams.append(ga)
        bets.append(be)
        rel.append(dg)
    psihat = np.stack(cols, axis=-1)
    x = ctx.grid
    spec = ctx.spec
    g = g_vectors(wch, x, ctx.rho, ctx.log_rho, frame.sector.R, spec.mu)
    diag = {
        "decomposition": {"T_reconstruction": wch.reconstruction.tolist(),
                          "F_reconstruction": vch.reconstruction.tolist(),
                          "T_annihilation": wch.annihilation,
                          "F_annihilation": vch.annihilation},
        "relations": rel,
        "g": g_checks(g, spec.H, inner),
        "iterations": {"T": [t.iterations for t in T], "F": [f.iterations for f in F]},
    }
    wf = WeylFrame(ctx.rho, frame.sector, x, vch, wch, psihat, deltas, spreads, g, T, F,
                   gams, bets, diag)
    if residuals:
        diag["ode_residual"] = psi_residuals(wf, spec)
        diag["asymptotics"] = psi_asymptotics(wf, ctx.log_rho, spec.mu)
    return wf


def psi_residuals(wf: WeylFrame, spec) -> list[float]:
    M = vector_generator(spec, wf.rho, wf.x)
    return [ode_residual(wf.x, wf.psihat[:, :, k], M, wf.rho, wf.sector.R[k])["max"]
            for k in range(wf.n)]


def psi_asymptotics(wf: WeylFrame, log_rho: complex, mu, npts: int = 5) -> dict:
    """Distance of the fitted x -> inf limit of psi^_k from f_k, and the x -> 0 profile."""
    f = wf.sector.f
    x = wf.x
    inf_res, origin = [], []
    for k in range(wf.n):
        lim, _ = fit_limit(x[-npts:], wf.psihat[-npts:, :, k], "inverse", npts)
        inf_res.append(float(np.abs(lim - f[:, k]).sum()))
        xs = x[:npts]
        near = wf.psihat[:npts, :, k] * np.exp(wf.rho * xs * wf.sector.R[k])[:, None]
        near = near * np.exp(-mu[k] * (log_rho + np.log(xs)))[:, None]
        origin.append(float(np.abs(near).sum(axis=1).max()))
    return {"infinity": inf_res, "origin_scaled_max": origin}


def tensor_residuals(wf: WeylFrame, spec) -> dict:
    """Central-difference residuals of every T_k and F_k on the user grid."""
    out = {"T": [], "F": []}
    n = wf.n
    for fam in wf.T:
        if fam.m == n:
            out["T"].append(0.0)
            continue
        M = tensor_generator(spec, wf.rho, wf.x, fam.m)
        out["T"].append(ode_residual(wf.x, fam.Yhat, M, wf.rho, fam.S)["max"])
    for fam in wf.F:
        if fam.m == n:
            out["F"].append(0.0)
            continue
        M = tensor_generator(spec, wf.rho, wf.x, fam.m)
        out["F"].append(ode_residual(wf.x, fam.Yhat, M, wf.rho, fam.S)["max"])
    return out


def origin_modes(y0: np.ndarray, c0: np.ndarray) -> np.ndarray:
    """Coefficients of y(x0) in the Frobenius basis c(rho x0)."""
    return np.linalg.solve(c0, y0)


def uniqueness_check(wf: WeylFrame, k: int, frame: SectorFrame, j: int | None = None,
                     eps: float = 1e-2, origin_tol: float = 1e-4,
                     inf_tol: float = 1e-3) -> dict:
    """Add eps psi_j to psi_k and re-test both boundary conditions.

    At the origin the candidate is expanded in the Frobenius solutions at the
    first grid point; modes i < k grow faster than (rho x)^{mu_k} and must be
    absent (relative weight below ``origin_tol``). At infinity the fitted
    limit of exp(-rho R_k x) y must be f_k. With ``j=None`` psi_k itself is
    tested.
    """
    R = wf.sector.R
    y = wf.psihat[:, :, k - 1].copy()
    if j is not None:
        y = y + eps * wf.psihat[:, :, j - 1] * np.exp(wf.rho * wf.x * (R[j - 1] - R[k - 1]))[:, None]
    x0 = wf.x[0]
    c0 = frame.frob.c(np.array([wf.rho * x0]), wf.sector)[0]
    c = np.abs(origin_modes(y[0] * np.exp(wf.rho * x0 * R[k - 1]), c0))
    excess = float(c[: k - 1].max() / c[k - 1:].max()) if k > 1 else 0.0
    lim, _ = fit_limit(wf.x[-5:], y[-5:], "inverse", 5)
    dist = float(np.abs(lim - wf.sector.f[:, k - 1]).sum())
    origin_ok = excess < origin_tol
    inf_ok = bool(np.isfinite(dist) and dist < inf_tol)
    return {"k": k, "j": j, "eps": eps, "origin_excess": excess, "infinity_distance": dist,
            "origin_ok": bool(origin_ok), "infinity_ok": inf_ok,
            "violated": not (origin_ok and inf_ok)}


def gamma_hat(wf: WeylFrame, k: int, x_star: float) -> np.ndarray:
    """gamma^_{jk} = e_{pi_j} . psi_k(x*) exp(-rho x* R_j), j = 1..n."""
    i = int(np.argmin(np.abs(wf.x - x_star)))
    xs = wf.x[i]
    R = wf.sector.R
    comp = wf.psihat[i, list(wf.sector.perm), k - 1]
    return comp * np.exp(wf.rho * xs * (R[k - 1] - R))


def psi_large_rho(frame: SectorFrame, k: int, rho_list, x_star: float = 1.0, grid=None,
                  reference: SectorFrame | None = None, inner: str = "hermitian") -> dict:
    """Coefficients gamma^_{jk}(rho) at x*, for the perturbed and (optionally) q = 0 frames.

    Only j >= k is resolvable at large |rho|: the j < k coefficients multiply
    exponentials that are smaller than the O(rho^-eps) error of the leading
    term, so they are reported but not compared.
    """
    rho_list = [complex(r) for r in rho_list]
    rows, ref_rows = [], []
    for rho in rho_list:
        wf = build_weyl(frame, rho, grid, inner, residuals=False)
        rows.append(gamma_hat(wf, k, x_star))
        if reference is not None:
            wr = build_weyl(reference, rho, grid, inner, residuals=False)
            ref_rows.append(gamma_hat(wr, k, x_star))
    G = np.array(rows)
    mags = np.abs(rho_list)
    dev = np.abs(G[:, k - 1] - 1.0)
    out = {"k": k, "rho": rho_list, "x_star": x_star, "gamma": G,
           "kk_deviation": dev.tolist(), "kk_exponent": fit_exponent(mags, dev),
           "upper": np.abs(G[:, k:]).max(axis=1).tolist() if k < G.shape[1] else []}
    if reference is not None:
        Gr = np.array(ref_rows)
        out["reference_gamma"] = Gr
        out["resolved_gap"] = np.abs(G[:, k - 1:] - Gr[:, k - 1:]).max(axis=1).tolist()
    return out


def delta_large_rho(frame: SectorFrame, rho_list, grid=None) -> dict:
    """|Delta_k(rho) - Delta^0_k| over a |rho| sweep and the fitted decay exponents."""
    rho_list = [complex(r) for r in rho_list]
    diffs = []
    for rho in rho_list:
        ctx = RhoContext(frame, rho, grid)
        T, F = solve_all(ctx)
        diffs.append([abs(delta(k, F, T)[0] - frame.delta0[k - 1]) for k in range(1, ctx.n + 1)])
    D = np.array(diffs)
    mags = np.abs(rho_list)
    return {"rho": rho_list, "diff": D, "exponent": [fit_exponent(mags, D[:, k])
                                                     for k in range(D.shape[1])]}


def scaled_psi(wf: WeylFrame, log_rho: complex, mu) -> np.ndarray:
    """rho^{-mu_k} psi_k (unfactored), columns k = 1..n."""
    return wf.Psi() * np.exp(-np.asarray(mu) * log_rho)[None, None, :]


def arc_increments(samples) -> list[float]:
    """max-norm increments between successive samples (decreasing |rho|).

    All increments share one scale, the size of the last sample; a per-step
    scale would mix the change of the samples' size into the increments.
    """
    scale = max(float(np.abs(samples[-1]).max()), 1e-300) if len(samples) else 1.0
    return [float(np.abs(b - a).max() / scale) for a, b in zip(samples[:-1], samples[1:])]


def psi_small_rho(frame: SectorFrame, radii=(1e-2, 5e-3, 2.5e-3), direction: complex | None = None,
                  grid=None, x_window=(0.5, 2.0), inner: str = "hermitian") -> dict:
    """Arc samples of rho^{-mu_k} psi_k, rho^{-mu} T_k and rho^{-mu} F_k as |rho| shrinks.

    Continuity at the origin shows as increments that decrease monotonically.
    Raises DeltaZeroAtOrigin when some Delta_k at the smallest radius is below
    threshold.
    """
    sec = frame.sector
    direction = sec.mid if direction is None else complex(direction) / abs(direction)
    mu = frame.spec.mu
    psi_s, T_s, F_s, deltas = [], [], [], []
    sel = None
    for r in radii:
        rho = r * direction
        log_rho = complex(sec.log(rho))
        ctx = RhoContext(frame, rho, grid)
        T, F = solve_all(ctx)
        if sel is None:
            sel = (ctx.grid >= x_window[0]) & (ctx.grid <= x_window[1])
        deltas.append([delta(k, F, T)[0] for k in range(1, ctx.n + 1)])
        # scaled tensors, unfactored
        T_s.append([t.Y()[sel] * np.exp(-t.mu_sum * log_rho) for t in T])
        F_s.append([f.Y()[sel] * np.exp(-f.mu_sum * log_rho) for f in F])
        if min(abs(d) for d in deltas[-1]) <= DELTA_REL * float(np.abs(frame.delta0).max()):
            continue
        wf = build_weyl(frame, rho, grid, inner, ctx=ctx, families=(T, F), residuals=False)
        psi_s.append(scaled_psi(wf, log_rho, mu)[sel])
    d_end = np.array(deltas[-1])
    if np.any(np.abs(d_end) <= DELTA_REL * float(np.abs(frame.delta0).max())):
        raise DeltaZeroAtOrigin("some Delta_k vanishes near rho = 0", deltas=d_end.tolist())
    n = frame.n
    inc = {
        "psi": [arc_increments([p[:, :, k] for p in psi_s]) for k in range(n)],
        "T": [arc_increments([t[k] for t in T_s]) for k in range(n)],
        "F": [arc_increments([f[k] for f in F_s]) for k in range(n)],
    }
    # increments at rounding level (T_1, F_n are rho-independent) count as converged
    mono = {key: [bool(len(v) < 2 or max(v) < 1e-12 or np.all(np.diff(v) < 0)) for v in vals]
            for key, vals in inc.items()}
    return {"radii": list(radii), "direction": direction, "increments": inc,
            "monotone": mono, "delta": np.array(deltas),
            "all_monotone": all(all(m) for m in mono.values())}
