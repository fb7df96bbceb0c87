"""Connection matrices across sector boundaries and the spectral-mapping harness.

On a boundary ray Sigma_nu between S_nu and S_{nu+1} (counterclockwise,
S_{N+1} = S_1) both sectors' Weyl matrices are available; v = Psi_-^{-1} Psi_+
is constant in x. The computation is done with phase-factored matrices, so
each entry carries a known exponential exp(rho x (R+_k - R-_j)); an entry
is only trusted at grid points where that factor does not amplify the
working accuracy beyond the requested level.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConditionG0Violated, DeltaZero, ExcessiveSpread
from .sectors import SectorData
from .unperturbed import SectorFrame, build_frame, eval_at_rho
from .weyl import WeylFrame, build_weyl
from .checks import relative_spread
from .system import SystemSpec


def rho_ladder(base: float = 0.05, count: int = 11, ratio: float = 2.0) -> np.ndarray:
    """Moduli base * ratio^j, j = 0..count-1."""
    return base * ratio ** np.arange(count)


def psi_matrix(frame: SectorFrame, rho: complex, grid=None, **kw) -> WeylFrame:
    """Weyl matrix at rho; DeltaZero is re-raised with the sector attached."""
    try:
        return build_weyl(frame, rho, grid, **kw)
    except DeltaZero as exc:
        exc.context.setdefault("sector", frame.sector.index)
        raise


def det_spread(wf: WeylFrame) -> tuple[complex, float]:
    """det Psi on the grid; the phase factors cancel because sum R = 0."""
    return relative_spread(np.linalg.det(wf.psihat))


def leading_modes(wf: WeylFrame, frame: SectorFrame) -> np.ndarray:
    """Weights of the Frobenius modes in each psi_k at the first grid point.

    Row k gives |coefficient| of mode i, normalised by the row maximum;
    column k having exponent mu_k means the entries i < k are negligible.
    """
    x0 = wf.x[0]
    c0 = frame.frob.c(np.array([wf.rho * x0]), frame.sector)[0]
    Y = wf.Psi()[0]
    coef = np.abs(np.linalg.solve(c0, Y)).T
    return coef / coef.max(axis=1, keepdims=True)


@dataclass
class ScatteringSample:
    rho: complex
    v: np.ndarray
    spread: float
    resolved: np.ndarray  # fraction of grid points used per entry
    det: complex
    cond: float
    margins: tuple  # (min_k |Delta_k| from S_nu, from S_{nu+1})


@dataclass
class ScatteringData:
    """Samples of v(rho) on one boundary ray."""

    ray: int
    theta: float
    samples: list = field(default_factory=list)

    @property
    def rho(self) -> np.ndarray:
        return np.array([s.rho for s in self.samples])

    @property
    def v(self) -> np.ndarray:
        return np.array([s.v for s in self.samples])

    @property
    def spread(self) -> float:
        return max((s.spread for s in self.samples), default=0.0)


def boundary_values(frames: list[SectorFrame], nu: int, rho: complex, grid=None, **kw) -> tuple[WeylFrame, WeylFrame]:
    """(Psi_-, Psi_+) at rho on the ray between sector nu and nu + 1."""
    N = len(frames)
    lo, hi = frames[nu], frames[(nu + 1) % N]
    out = []
    for fr in (lo, hi):
        try:
            out.append(build_weyl(fr, rho, grid, residuals=False, **kw))
        except DeltaZero as exc:
            raise ConditionG0Violated("Delta_k vanishes on a sector closure", ray=nu,
                                      sector=fr.sector.index, rho=rho,
                                      k=exc.context.get("k")) from exc
    return out[0], out[1]


def arc_limit(frame: SectorFrame, rho: complex, angles=(1e-2, 5e-3, 2.5e-3), grid=None,
              x_window=(0.5, 2.0)) -> dict:
    """Distance of Psi at rho e^{-+i eps} (inside the sector) to Psi at the boundary rho.

    The sign is chosen to step into the sector. Distances are relative
    column norms on ``x_window``; they should shrink with eps.
    """
    sec = frame.sector
    a = float(sec.arg(rho))
    sign = -1.0 if abs(a - sec.theta_hi) < abs(a - sec.theta_lo) else 1.0
    ref = build_weyl(frame, rho, grid, residuals=False)
    win = (ref.x >= x_window[0]) & (ref.x <= x_window[1])
    P0 = ref.Psi()[win]
    dist = []
    for eps in angles:
        wf = build_weyl(frame, rho * np.exp(1j * sign * eps), grid, residuals=False)
        P = wf.Psi()[win]
        dist.append(float((np.abs(P - P0).sum(axis=1) / np.abs(P0).sum(axis=1)).max()))
    return {"angles": list(angles), "distance": dist,
            "monotone": bool(np.all(np.diff(dist) < 0))}


def connection_matrix(minus: WeylFrame, plus: WeylFrame, accuracy: float = 1e-10,
                      resolve: float = 1e-7, max_spread: float = 1e-4):
    """v with its x-spread from two phase-factored Weyl matrices at one rho.

    ``accuracy`` is the assumed relative accuracy of the computed psi's; an
    entry is used at x only when accuracy * cond * the entry's exponential
    factor stays below ``resolve`` times the size of v.
    """
    rho = minus.rho
    x = minus.x
    Rm, Rp = minus.sector.R, plus.sector.R
    M = np.linalg.solve(minus.psihat, plus.psihat)
    expo = rho * x[:, None, None] * (Rp[None, None, :] - Rm[None, :, None])
    expo_re = np.clip(expo.real, -700.0, 700.0)
    V = M * np.exp(expo_re + 1j * expo.imag)
    cond = np.linalg.cond(minus.psihat)
    err = accuracy * cond[:, None, None] * np.abs(M).max(axis=(1, 2))[:, None, None] \
        * np.exp(expo_re)
    ref_i = int(np.argmin(err.max(axis=(1, 2))))
    scale = float(np.abs(V[ref_i]).max())
    ok = (err <= resolve * scale) & (expo.real < 700)
    n = M.shape[-1]
    v = np.empty((n, n), dtype=complex)
    dev = 0.0
    for j in range(n):
        for k in range(n):
            pts = ok[:, j, k]
            vals = V[pts, j, k] if pts.any() else V[ref_i:ref_i + 1, j, k]
            v[j, k] = complex(np.median(vals.real), np.median(vals.imag))
            dev = max(dev, float(np.abs(vals - v[j, k]).max()))
    spread = dev / max(float(np.abs(v).max()), 1e-300)
    if spread > max_spread:
        raise ExcessiveSpread("connection matrix varies along the grid", rho=rho, spread=spread)
    return v, spread, ok.mean(axis=0)


def scattering_matrix(frames: list[SectorFrame], nu: int, rho: complex, grid=None,
                      max_spread: float = 1e-4, **kw) -> ScatteringSample:
    minus, plus = boundary_values(frames, nu, rho, grid, **kw)
    v, spread, frac = connection_matrix(minus, plus, max_spread=max_spread)
    cond = float(np.linalg.cond(v))
    margins = (float(np.abs(minus.delta).min()), float(np.abs(plus.delta).min()))
    return ScatteringSample(complex(rho), v, spread, frac, complex(np.linalg.det(v)), cond,
                            margins)


def ray_data(frames: list[SectorFrame], nu: int, moduli, grid=None, **kw) -> ScatteringData:
    sec = frames[nu].sector
    theta = sec.theta_hi
    data = ScatteringData(nu, theta)
    for r in moduli:
        data.samples.append(scattering_matrix(frames, nu, r * np.exp(1j * theta), grid, **kw))
    return data


def unperturbed_connection(frames: list[SectorFrame], nu: int, rho: complex) -> np.ndarray:
    """v^0 = l_-^{-1} diag(exp(mu (log_+ rho - log_- rho))) l_+ from the two sector factorizations.

    With q = 0, Psi^0 = c l in both sectors and c differs between the two
    branches only by the monodromy of z^mu.
    """
    N = len(frames)
    lo, hi = frames[nu], frames[(nu + 1) % N]
    x = np.array([1e-3 / max(abs(rho), 1e-300)])
    a = eval_at_rho(lo, rho, x)
    b = eval_at_rho(hi, rho, x)
    mu = lo.spec.mu
    jump = complex(hi.sector.log(rho) - lo.sector.log(rho))
    return np.linalg.solve(a.l, np.exp(mu * jump)[:, None] * b.l)


@dataclass
class Sweep:
    """Weyl matrices of one potential on every boundary ray and sector midpoint ray."""

    spec: SystemSpec
    sectors: list
    moduli: np.ndarray
    rays: list  # ScatteringData per ray
    boundary: dict  # (nu, i) -> (Psi_- frame, Psi_+ frame)
    interior: dict  # (nu, i) -> WeylFrame
    seconds: float = 0.0


def sweep(spec: SystemSpec, sectors: list[SectorData], moduli=None, grid=None, frames=None,
          interior: bool = True, max_spread: float = 1e-4, rays=None) -> Sweep:
    """v on every boundary ray over ``moduli`` (default: the geometric ladder).

    With ``interior`` the midpoint-ray Weyl matrices at the same moduli are
    kept as well, for the spectral-mapping report. ``rays`` restricts the
    sweep to some ray indices (see :func:`merge_sweeps`).
    """
    t0 = time.perf_counter()
    moduli = rho_ladder() if moduli is None else np.asarray(moduli, dtype=float)
    frames = frames or [build_frame(spec, sc) for sc in sectors]
    out, boundary, inner = [], {}, {}
    todo = range(len(sectors)) if rays is None else rays
    for nu in todo:
        sec = sectors[nu]
        data = ScatteringData(nu, sec.theta_hi)
        for i, r in enumerate(moduli):
            rho = r * np.exp(1j * sec.theta_hi)
            minus, plus = boundary_values(frames, nu, rho, grid)
            v, spread, frac = connection_matrix(minus, plus, max_spread=max_spread)
            cond = float(np.linalg.cond(v))
            margins = (float(np.abs(minus.delta).min()), float(np.abs(plus.delta).min()))
            data.samples.append(ScatteringSample(complex(rho), v, spread, frac,
                                                 complex(np.linalg.det(v)), cond, margins))
            boundary[nu, i] = (minus, plus)
            if interior:
                inner[nu, i] = build_weyl(frames[nu], r * sec.mid, grid, residuals=False)
        out.append(data)
    return Sweep(spec, list(sectors), moduli, out, boundary, inner,
                 time.perf_counter() - t0)


def merge_sweeps(parts: list[Sweep]) -> Sweep:
    """Join sweeps over disjoint ray sets of one potential."""
    first = parts[0]
    rays, boundary, inner = [], {}, {}
    for p in parts:
        rays += p.rays
        boundary.update(p.boundary)
        inner.update(p.interior)
    rays.sort(key=lambda d: d.ray)
    return Sweep(first.spec, first.sectors, first.moduli, rays, boundary, inner,
                 sum(p.seconds for p in parts))


def _mapping(a: WeylFrame, b: WeylFrame) -> np.ndarray:
    # within one sector the two exponential factors are identical and cancel
    return a.psihat @ np.linalg.inv(b.psihat)


def _norm(M) -> float:
    return float(np.abs(M).sum(axis=-2).max())


def _decay_exponent(r, y) -> float:
    r, y = np.asarray(r, float), np.asarray(y, float)
    ok = y > 0
    if ok.sum() < 2:
        return float("inf")
    return float(-np.polyfit(np.log(r[ok]), np.log(y[ok]), 1)[0])


@dataclass
class MappingReport:
    """P(x, rho) = Psi Psi~^{-1} sampled on a sweep pair."""

    samples: list
    max_P_minus_I: float
    max_jump: float
    small_rho_bound: float
    large_rho_deviation: list
    large_rho_exponent: float

    def as_dict(self) -> dict:
        return {"max_P_minus_I": self.max_P_minus_I, "max_jump": self.max_jump,
                "small_rho_bound": self.small_rho_bound,
                "large_rho_deviation": self.large_rho_deviation,
                "large_rho_exponent": self.large_rho_exponent,
                "samples": self.samples}


def spectral_mapping(sw: Sweep, sw_t: Sweep, n_large: int = 3) -> MappingReport:
    """||P - I|| at all samples, ||P_+ - P_-|| on rays, small- and large-rho behaviour.

    The large-rho exponent is a fit over the ``n_large`` largest moduli of
    the interior deviations; it is reported, never asserted.
    """
    if not np.array_equal(sw.moduli, sw_t.moduli) or len(sw.sectors) != len(sw_t.sectors):
        raise ValueError("sweeps use different rho samples")
    samples, jumps, small = [], [], []
    large = np.zeros(len(sw.moduli))
    eye = None
    for (nu, i), (m1, p1) in sw.boundary.items():
        m2, p2 = sw_t.boundary[nu, i]
        Pm, Pp = _mapping(m1, m2), _mapping(p1, p2)
        eye = np.eye(Pm.shape[-1]) if eye is None else eye
        jump = _norm(Pp - Pm)
        dev = max(_norm(Pm - eye), _norm(Pp - eye))
        jumps.append(jump)
        samples.append({"where": "ray", "index": nu, "rho": m1.rho, "P_minus_I": dev,
                        "jump": jump})
    for (nu, i), a in sw.interior.items():
        P = _mapping(a, sw_t.interior[nu, i])
        dev = _norm(P - eye)
        large[i] = max(large[i], dev)
        if i == 0:
            small.append(_norm(P))
        samples.append({"where": "sector", "index": nu, "rho": a.rho, "P_minus_I": dev})
    tail = slice(len(sw.moduli) - n_large, None)
    return MappingReport(samples, max(s["P_minus_I"] for s in samples), max(jumps, default=0.0),
                         max(small, default=0.0), [float(v) for v in large],
                         _decay_exponent(sw.moduli[tail], large[tail]))


def compare(sw: Sweep, sw_t: Sweep, factor: float = 10.0) -> dict:
    """Ray-by-ray ||v~ - v|| against the x-spread noise floor, plus the P report.

    ``witness`` is True when some ray separates the two potentials by more
    than ``factor`` times its noise floor.
    """
    rays = []
    for d1, d2 in zip(sw.rays, sw_t.rays):
        diff = float(np.abs(d1.v - d2.v).max())
        scale = float(np.abs(d1.v).max())
        floor = max(d1.spread, d2.spread) * scale
        rays.append({"ray": d1.ray, "v_diff": diff, "v_rel_diff": diff / scale,
                     "noise_floor": floor, "separated": bool(diff > factor * floor)})
    mapping = spectral_mapping(sw, sw_t)
    return {"rays": rays, "max_v_rel_diff": max(r["v_rel_diff"] for r in rays),
            "witness": any(r["separated"] for r in rays), "mapping": mapping}
