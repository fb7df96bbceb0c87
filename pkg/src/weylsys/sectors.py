"""Rays where two exponentials exp(b_j x) balance, and the sectors between them."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateSectorization, ValidationError

TWO_PI = 2.0 * np.pi


def _wrap(theta):
    """Map angles into (-pi, pi]."""
    return np.pi - np.mod(np.pi - np.asarray(theta), TWO_PI)


@dataclass(frozen=True)
class SectorData:
    """One open sector ``theta_lo < arg x < theta_hi`` (counterclockwise).

    ``perm[k]`` is the 0-based index j with R_k = b_j, so ``Pi[:, k] = e_perm[k]``
    and f_k = Pi[:, k]. Arguments are measured on the branch centred at
    ``theta_mid``.
    """

    index: int
    theta_lo: float
    theta_hi: float
    perm: tuple[int, ...]
    R: np.ndarray
    merged: tuple = ()

    @property
    def theta_mid(self) -> float:
        return 0.5 * (self.theta_lo + self.theta_hi)

    @property
    def opening(self) -> float:
        return self.theta_hi - self.theta_lo

    @property
    def n(self) -> int:
        return len(self.perm)

    @property
    def Pi(self) -> np.ndarray:
        P = np.zeros((self.n, self.n))
        P[list(self.perm), range(self.n)] = 1.0
        return P

    @property
    def f(self) -> np.ndarray:
        """Columns f_1..f_n."""
        return self.Pi.astype(complex)

    @property
    def det_Pi(self) -> float:
        return float(round(np.linalg.det(self.Pi)))

    @property
    def mid(self) -> complex:
        return complex(np.exp(1j * self.theta_mid))

    def arg(self, z) -> np.ndarray:
        """Argument of z on this sector's branch, in (theta_mid - pi, theta_mid + pi]."""
        z = np.asarray(z, dtype=complex)
        return _wrap(np.angle(z) - self.theta_mid) + self.theta_mid

    def log(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return np.log(np.abs(z)) + 1j * self.arg(z)

    def contains(self, rho, closed: bool = True, tol: float = 1e-12) -> bool:
        a = float(self.arg(rho))
        if closed:
            return self.theta_lo - tol <= a <= self.theta_hi + tol
        return self.theta_lo < a < self.theta_hi

    def ray(self, side: str) -> complex:
        th = self.theta_lo if side == "lo" else self.theta_hi
        return complex(np.exp(1j * th))

    def forward_R(self, k: int) -> complex:
        return complex(np.sum(self.R[:k]))

    def backward_R(self, k: int) -> complex:
        return complex(np.sum(self.R[k - 1:]))

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "theta_lo": self.theta_lo,
            "theta_hi": self.theta_hi,
            "theta_mid": self.theta_mid,
            "perm": [int(p) + 1 for p in self.perm],
            "R": [[float(r.real), float(r.imag)] for r in self.R],
        }


def ray_angles(b, merge_tol: float = 1e-12, ang_tol: float = 1e-6):
    """Sorted distinct ray angles in [theta_0, theta_0 + 2 pi) and merge records."""
    b = np.asarray(b, dtype=complex)
    n = len(b)
    raw = []
    for j in range(n):
        for k in range(j + 1, n):
            d = b[j] - b[k]
            if d == 0:
                raise ValidationError("b_j must be distinct", j=j + 1, k=k + 1)
            for s in (0.5 * np.pi, -0.5 * np.pi):
                raw.append((float(np.mod(-np.angle(d) + s, TWO_PI)), (j + 1, k + 1)))
    raw.sort()
    angles, pairs, merged = [], [], []
    for th, pr in raw:
        if angles:
            gap = th - angles[-1]
            if gap <= merge_tol:
                pairs[-1].append(pr)
                merged.append((angles[-1], pr))
                continue
            if gap < ang_tol:
                raise DegenerateSectorization(
                    "two rays nearly coincide", theta=th, gap=gap, pairs=(pairs[-1][0], pr)
                )
        angles.append(th)
        pairs.append([pr])
    # wrap-around gap
    if len(angles) > 1:
        gap = angles[0] + TWO_PI - angles[-1]
        if gap <= merge_tol:
            pairs[0].extend(pairs.pop())
            merged.append((angles.pop(), pairs[0][-1]))
        elif gap < ang_tol:
            raise DegenerateSectorization("two rays nearly coincide", gap=gap)
    return np.array(angles), pairs, merged


def compute_sectors(b, merge_tol: float = 1e-12, ang_tol: float = 1e-6,
                    allow_two: bool = False) -> list[SectorData]:
    """Sectors of the plane cut along all balance rays, counterclockwise.

    Exactly coincident rays (parallel differences b_j - b_k) are merged and
    the merge is recorded on the adjacent sectors; rays that differ by less
    than ``ang_tol`` but are not equal raise.
    """
    b = np.asarray(b, dtype=complex)
    n = len(b)
    angles, pairs, merged = ray_angles(b, merge_tol, ang_tol)
    N = len(angles)
    if N == 2 and not allow_two:
        raise ValidationError("only two sectors; at least three are required", N=N)
    out = []
    for nu in range(N):
        lo = angles[nu]
        hi = angles[nu + 1] if nu + 1 < N else angles[0] + TWO_PI
        mid = 0.5 * (lo + hi)
        # branch centre in (-pi, pi]
        shift = float(_wrap(mid)) - mid
        lo, hi, mid = lo + shift, hi + shift, mid + shift
        vals = (b * np.exp(1j * mid)).real
        perm = tuple(int(i) for i in np.argsort(vals, kind="stable"))
        if np.min(np.diff(vals[list(perm)])) <= 0:
            raise DegenerateSectorization("ordering not strict at sector midpoint", sector=nu)
        rec = tuple(m for m in merged if abs(_wrap(m[0] - lo)) < 1e-9 or abs(_wrap(m[0] - hi)) < 1e-9)
        out.append(SectorData(nu, float(lo), float(hi), perm, b[list(perm)], rec))
    for nu in range(N):
        a, c = out[nu].perm, out[(nu + 1) % N].perm
        if a == c:
            raise DegenerateSectorization("adjacent sectors share an ordering", sector=nu)
    if N > n * (n - 1):
        raise DegenerateSectorization("more sectors than n(n-1)", N=N)
    return out


def sector_of(sectors: list[SectorData], rho) -> SectorData:
    """The sector whose closure contains rho (first match)."""
    for s in sectors:
        if s.contains(rho):
            return s
    raise ValidationError("rho outside every sector", rho=rho)
