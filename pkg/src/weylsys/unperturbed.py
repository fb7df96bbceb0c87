"""The q = 0 system: fundamental matrices c, e, psi^0 in one sector.

Conventions. A matrix whose k-th column grows like exp(z R_k) is stored
phase-factored, ``Yhat = Y diag(exp(-z R))``. ``c`` is not phase-factored.
``z = rho x`` with x > 0, so a value of rho fixes the ray on which z moves.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AsymptoticNotReached, BranchCrossing, ConditionR0Violated, IntegrationDiverged
from .exterior import dim, wedge_arrays, wedge_vectors
from .propagators import compound_steps, refine_nodes, scan_inward, unperturbed_steps
from .sectors import SectorData, compute_sectors
from .series import FormalSeries, Frobenius, FrobeniusSolution
from .system import SystemSpec, validate_assumption1

__all__ = [
    "validate_assumption1",
    "compute_sectors",
    "frobenius_matrix",
    "asymptotic_matrix",
    "psi0_matrix",
    "lu_nopivot",
    "SectorFrame",
    "RhoFrame",
    "build_frame",
    "eval_at_rho",
]


def frobenius_matrix(spec: SystemSpec, grid, sector: SectorData, J_max: int = 600,
                     tol: float = 1e-17, r_max: float | None = None):
    """Frobenius solutions and c(x) sampled on the sector's midpoint ray."""
    grid = np.asarray(grid, dtype=float)
    z = grid * sector.mid
    r = float(np.abs(z).max()) if r_max is None else r_max
    frob = Frobenius(spec, r_max=max(r, 1.0), tol=tol, J_max=J_max)
    return frob.solutions, frob.c(z, sector)


def lu_nopivot(M, tiny: float = 0.0):
    """M = l u with l lower-triangular and u unit upper-triangular (no pivoting).

    Raises ZeroDivisionError-like ConditionR0Violated when a pivot vanishes.
    """
    M = np.array(M, dtype=complex)
    n = M.shape[0]
    l = np.zeros_like(M)
    u = np.eye(n, dtype=complex)
    for j in range(n):
        for i in range(j, n):
            l[i, j] = M[i, j] - l[i, :j] @ u[:j, j]
        if abs(l[j, j]) <= tiny and j < n - 1:
            raise ConditionR0Violated("pivot vanishes in triangular factorization", k=j + 2,
                                      pivot=abs(l[j, j]))
        for i in range(j + 1, n):
            u[j, i] = (M[j, i] - l[j, :j] @ u[:j, i]) / l[j, j]
    return l, u


def mixed_determinants(c, e) -> np.ndarray:
    """det(e_1..e_{k-1}, c_k..c_n) for k = 1..n (batched over leading dims)."""
    c = np.asarray(c)
    e = np.asarray(e)
    n = c.shape[-1]
    out = []
    for k in range(n):
        M = np.concatenate([e[..., :, :k], c[..., :, k:]], axis=-1)
        out.append(np.linalg.det(M))
    return np.stack(out, axis=-1)


@dataclass
class PsiZeroResult:
    l: np.ndarray
    u: np.ndarray
    delta0: np.ndarray
    spread: float = 0.0


def psi0_matrix(c_star, e_star, sector: SectorData | None = None,
                r0_threshold: float = 1e-8) -> PsiZeroResult:
    """Factor c^{-1} e = l u at one reference point; psi^0 = c l.

    ``c_star``/``e_star`` may carry a leading axis of several reference
    points; the factorization uses the first and the mixed determinants are
    compared across all of them.
    """
    c_star = np.asarray(c_star, dtype=complex)
    e_star = np.asarray(e_star, dtype=complex)
    if c_star.ndim == 2:
        c_star, e_star = c_star[None], e_star[None]
    d0 = mixed_determinants(c_star, e_star)
    scale = np.abs(d0).max()
    delta0 = d0[0]
    bad = np.nonzero(np.abs(delta0) <= r0_threshold * max(scale, 1.0))[0]
    if bad.size:
        raise ConditionR0Violated("mixed determinant vanishes", k=int(bad[0]) + 1,
                                  value=complex(delta0[bad[0]]),
                                  sector=None if sector is None else sector.index)
    l, u = lu_nopivot(np.linalg.solve(c_star[0], e_star[0]))
    spread = float((np.abs(d0 - delta0).max(axis=0) / np.abs(delta0)).max()) if len(d0) > 1 else 0.0
    return PsiZeroResult(l, u, delta0, spread)


def ray_solutions(spec: SystemSpec, frob: Frobenius, formal: FormalSeries, direction: complex,
                  r, z_as: float, orders=(), delta: float = 0.005, r0: float = 4.0):
    """Phase-factored e and e_1 ^ ... ^ e_k on the ray z = r * direction.

    Radii at or beyond ``z_as`` use the formal series. Smaller radii come
    from one inward integration started at ``z_as``, so every returned
    matrix belongs to the same exact solution. The wedges (one per entry of
    ``orders``) are propagated directly in the exterior power, which keeps
    them free of the triangular gauge that the single columns pick up.
    """
    r = np.asarray(r, dtype=float)
    flat = r.ravel()
    n = spec.n
    R = formal.sector.R
    out = np.empty(flat.shape + (n, n), dtype=complex)
    wedges = {k: np.empty(flat.shape + (dim(n, k),), dtype=complex) for k in orders}
    far = flat >= z_as
    if far.any():
        Ef = formal.ehat(flat[far] * direction)[0]
        out[far] = Ef
        for k in orders:
            wedges[k][far] = wedge_vectors([Ef[..., :, j] for j in range(k)], n)
    near = ~far
    if near.any():
        pts = np.union1d(flat[near], [z_as])
        nodes, where = refine_nodes(pts, 1.0, delta=delta, refine=1, rel_step=0.02)
        steps = unperturbed_steps(frob, spec.A, spec.B, direction, nodes, r0=r0)
        e_start = formal.ehat(np.array([z_as * direction]))[0][0]
        h = steps.h
        zero = np.zeros((len(nodes), n))
        cols = []
        for k in range(n):
            V = steps.Uinv * np.exp(direction * h * R[k])[:, None, None]
            cols.append(scan_inward(V, zero, h, e_start[:, k]))
        E = np.stack(cols, axis=-1)[where]
        if not np.all(np.isfinite(E)):
            raise IntegrationDiverged("inward integration of e overflowed")
        sel = where_index = np.searchsorted(pts, flat[near])
        out[near] = E[sel]
        for k in orders:
            Vk = compound_steps(steps, k, complex(np.sum(R[:k])), inverse=True)
            start = wedge_vectors([e_start[:, j] for j in range(k)], n)
            Fk = scan_inward(Vk, np.zeros((len(nodes), dim(n, k))), h, start)[where]
            wedges[k][near] = Fk[where_index]
    out = out.reshape(r.shape + (n, n))
    wedges = {k: v.reshape(r.shape + v.shape[-1:]) for k, v in wedges.items()}
    return out, wedges


def ray_ehat(spec, frob, formal, direction, r, z_as, **kw) -> np.ndarray:
    return ray_solutions(spec, frob, formal, direction, r, z_as, **kw)[0]


def wedge_factor(c_star, F_star):
    """Gauge-free l and mixed determinants from e_1 ^ ... ^ e_k.

    ``F_star[k]`` is the (unfactored) wedge of the first k columns of e at
    the reference point, ``F_star[0] = [1]``. With T_k = c_k ^ ... ^ c_n,
    Delta^0_k = |F_{k-1} ^ T_k| and l_sk = (-1)^(s-k) |F_k ^ T_{k, s omitted}| / Delta^0_k.
    """
    c_star = np.asarray(c_star)
    n = c_star.shape[-1]
    cols = [c_star[:, j] for j in range(n)]
    delta0 = np.empty(n, dtype=complex)
    l = np.zeros((n, n), dtype=complex)
    for k in range(n):
        T = wedge_vectors(cols[k:], n)
        delta0[k] = wedge_arrays(F_star[k], k, T, n - k, n)[0]
    for k in range(n):
        for s in range(k, n):
            Ts = wedge_vectors([cols[j] for j in range(k, n) if j != s], n) if n - k > 1 \
                else np.ones(1, dtype=complex)
            top = wedge_arrays(F_star[k + 1], k + 1, Ts, n - k - 1, n)[0]
            l[s, k] = (-1) ** (s - k) * top / delta0[k]
    return l, delta0


def _twist(M, z, R) -> np.ndarray:
    """diag(exp(zR)) M diag(exp(-zR)) for batched z (entry (j,k) times exp(z(R_j-R_k)))."""
    z = np.asarray(z)[..., None, None]
    expo = z * (R[:, None] - R[None, :])
    nz = M != 0
    # structurally zero entries may sit under overflowing exponentials
    expo = np.where(nz, expo, 0.0)
    return np.where(nz, M * np.exp(expo), 0.0)


@dataclass
class RayFactor:
    """Factorization data on one ray, all from a single inward integration."""

    direction: complex
    l: np.ndarray
    u: np.ndarray
    delta0: np.ndarray
    lower_residual: float


def _ray_factor(spec, frob, formal, sector, direction, x_star, z_as, extra_r=()):
    """l from gauge-free wedges, u = triu(l^{-1} c^{-1} e) at x_star * direction.

    Returns the factor and (Ehat, wedges) at ``extra_r`` computed in the
    same integration, which keeps u consistent with those columns.
    """
    n = spec.n
    radii = np.concatenate([[x_star], np.asarray(extra_r, dtype=float)])
    Ehat, W = ray_solutions(spec, frob, formal, direction, radii, z_as,
                            orders=tuple(range(1, n + 1)))
    zs = x_star * direction
    c_star = frob.c(np.array([zs]), sector)[0]
    R = sector.R
    F_star = [np.ones(1, dtype=complex)] + [
        W[k][0] * np.exp(zs * np.sum(R[:k])) for k in range(1, n + 1)
    ]
    l, delta0 = wedge_factor(c_star, F_star)
    e_star = Ehat[0] * np.exp(zs * R)[None, :]
    M = np.linalg.solve(l, np.linalg.solve(c_star, e_star))
    lower = float(np.abs(np.tril(M, -1)).max() / max(np.abs(M).max(), 1.0))
    u = np.triu(M, 1) + np.eye(n)
    return RayFactor(direction, l, u, delta0, lower), Ehat[1:], {k: v[1:] for k, v in W.items()}


@dataclass
class SectorFrame:
    """Unperturbed data for one sector (samples on the midpoint ray)."""

    spec: SystemSpec
    sector: SectorData
    frob: Frobenius
    formal: FormalSeries
    z_as: float
    x_star: float
    l: np.ndarray
    u: np.ndarray
    delta0: np.ndarray
    delta0_spread: float
    grid: np.ndarray | None = None
    c: np.ndarray | None = None
    ehat: np.ndarray | None = None
    psi0hat: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.spec.n

    def ray(self, direction: complex, extra_r=()):
        return _ray_factor(self.spec, self.frob, self.formal, self.sector,
                           complex(direction), self.x_star, self.z_as, extra_r)


def asymptotic_matrix(spec: SystemSpec, sector: SectorData, grid, z_as: float | None = None,
                      frob: Frobenius | None = None, tol: float = 1e-14, x_far: float = 50.0):
    """Phase-factored e(x) on the midpoint ray plus decay diagnostics.

    Returns (ehat, info) where info holds the starting radius, the a
    posteriori constants C_k with ||ehat_k - f_k|| <= C_k / x for x >= 1 and
    the formal-series error estimate at the start.
    """
    grid = np.asarray(grid, dtype=float)
    formal = FormalSeries(spec, sector)
    if z_as is None:
        z_as = formal.reach(tol, x_far)
    if frob is None:
        frob = Frobenius(spec, r_max=6.0)
    E = ray_ehat(spec, frob, formal, sector.mid, grid, z_as)
    dev = np.abs(E - sector.f).sum(axis=-2)  # (N, n)
    mask = grid >= 1.0
    C = (dev[mask] * grid[mask, None]).max(axis=0) if mask.any() else np.full(spec.n, np.nan)
    return E, {"z_as": z_as, "C": C, "start_error": float(formal.truncation(z_as)[1].max())}


def build_frame(spec: SystemSpec, sector: SectorData, grid=None, x_star: float = 2.0,
                tol: float = 1e-14, x_far: float = 50.0, r0_threshold: float = 1e-8,
                e_gauge=None) -> SectorFrame:
    """Frobenius and formal series, the factorization l u and Condition R0.

    The mixed determinants are evaluated at three reference points; their
    relative spread is stored as ``delta0_spread``.
    """
    frob = Frobenius(spec, r_max=6.0)
    formal = FormalSeries(spec, sector, gauge=e_gauge)
    z_as = formal.reach(tol, x_far)
    facs = [_ray_factor(spec, frob, formal, sector, sector.mid, xs, z_as)[0]
            for xs in (x_star, 0.75 * x_star, 1.5 * x_star)]
    d0 = np.array([f.delta0 for f in facs])
    delta0 = d0[0]
    bad = np.nonzero(np.abs(delta0) <= r0_threshold * max(np.abs(delta0).max(), 1.0))[0]
    if bad.size:
        raise ConditionR0Violated("mixed determinant vanishes", k=int(bad[0]) + 1,
                                  value=complex(delta0[bad[0]]), sector=sector.index)
    spread = float((np.abs(d0 - delta0).max(axis=0) / np.abs(delta0)).max())
    frame = SectorFrame(spec, sector, frob, formal, z_as, x_star, facs[0].l, facs[0].u,
                        delta0, spread)
    frame.diagnostics["lu_lower_residual"] = facs[0].lower_residual
    if grid is not None:
        rf = eval_at_rho(frame, sector.mid, grid)
        frame.grid = np.asarray(grid, dtype=float)
        frame.c, frame.ehat, frame.psi0hat = rf.C, rf.Ehat, rf.Psi0hat
        ok = np.abs(rf.z) <= 6
        frame.diagnostics["det_c_dev"] = float(np.abs(np.linalg.det(rf.C[ok]) - 1).max())
    return frame


@dataclass
class RhoFrame:
    """C, E, Psi^0 at one rho on an x-grid (E and Psi^0 phase-factored).

    ``F0hat[k]`` holds e_1 ^ ... ^ e_k phase-factored by exp(-rho x (R_1+..+R_k)).
    """

    rho: complex
    x: np.ndarray
    z: np.ndarray
    C: np.ndarray
    Ehat: np.ndarray
    Psi0hat: np.ndarray
    F0hat: dict
    l: np.ndarray
    u: np.ndarray
    R: np.ndarray

    def E(self) -> np.ndarray:
        return self.Ehat * np.exp(self.z[:, None] * self.R)[:, None, :]

    def Psi0(self) -> np.ndarray:
        return self.Psi0hat * np.exp(self.z[:, None] * self.R)[:, None, :]


def eval_at_rho(frame: SectorFrame, rho: complex, x, c_radius: float = 6.0) -> RhoFrame:
    """C(x, rho) = c(rho x), E(x, rho) = e(rho x) and Psi^0(x, rho) on the grid.

    C is only evaluated where the Frobenius series is accurate
    (|rho x| <= ``c_radius``); elsewhere it is NaN. Psi^0 is c l near the
    origin and e u^{-1} further out.
    """
    rho = complex(rho)
    sec = frame.sector
    if rho == 0 or not sec.contains(rho):
        raise BranchCrossing("rho outside the closed sector", rho=rho, sector=sec.index)
    x = np.asarray(x, dtype=float)
    direction = rho / abs(rho)
    z = rho * x
    r = np.abs(z)
    n = frame.n
    fac, Ehat, W = frame.ray(direction, r)
    l, u = fac.l, fac.u
    C = np.full(x.shape + (n, n), np.nan, dtype=complex)
    small = r <= c_radius
    if small.any():
        C[small] = frame.frob.c(z[small], sec)
    P = np.empty_like(Ehat)
    inner = r <= frame.x_star
    if inner.any():
        P[inner] = (C[inner] @ l) * np.exp(-z[inner][:, None] * sec.R)[:, None, :]
    outer = ~inner
    if outer.any():
        P[outer] = Ehat[outer] @ _twist(np.linalg.inv(u), z[outer], sec.R)
    return RhoFrame(rho, x, z, C, Ehat, P, W, l, u, sec.R)
