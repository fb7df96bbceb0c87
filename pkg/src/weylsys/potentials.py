"""Off-diagonal potentials q(x) on [0, inf).

Every family evaluates on arrays of x (shape (N,) -> (N, n, n)) and knows its
own L1 mass, tail mass beyond a cutoff and the total variation used as the
W^1_1 proxy. Matrix norms are max column sums, matching the tensor norm.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad

from .errors import ValidationError

# int_{-1}^{1} exp(-1/(1-s^2)) ds
_BUMP_MASS = quad(lambda s: np.exp(-1.0 / (1.0 - s * s)), -1.0, 1.0, epsabs=1e-15)[0]


def _mnorm(M) -> float:
    return float(np.abs(np.asarray(M)).sum(axis=0).max())


def _check_offdiag(M, what: str, tol: float = 0.0):
    M = np.asarray(M)
    d = np.abs(np.diagonal(M, axis1=-2, axis2=-1))
    if d.size and d.max() > tol:
        raise ValidationError(f"{what}: diagonal of q must vanish", max_diag=float(d.max()))


class Potential:
    """Base class; subclasses implement ``__call__`` and the mass functionals."""

    n: int
    kind = "abstract"

    def __call__(self, x) -> np.ndarray:
        raise NotImplementedError

    def derivative(self, x) -> np.ndarray:
        """q'(x); one-sided (right) slopes where q is only piecewise smooth."""
        raise NotImplementedError

    def l1_mass(self) -> float:
        raise NotImplementedError

    def tail_mass(self, X: float) -> float:
        raise NotImplementedError

    def variation(self) -> float:
        """int_0^inf ||q'(x)|| dx (total variation for sampled data)."""
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    def w11_norm(self) -> float:
        return self.l1_mass() + self.variation()

    def cumulative_mass(self, x) -> np.ndarray:
        """int_0^x ||q(t)|| dt on a sorted array, by fine trapezoid sums."""
        x = np.asarray(x, dtype=float)
        t = np.union1d(np.linspace(0.0, x.max(), 20001), x)
        nq = np.abs(self(t)).sum(axis=-2).max(axis=-1)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * np.diff(t) * (nq[1:] + nq[:-1]))])
        return np.interp(x, t, cum)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class ZeroPotential(Potential):
    n: int
    kind = "zero"

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.zeros(x.shape + (self.n, self.n), dtype=complex)

    def derivative(self, x):
        return self(x)

    def l1_mass(self):
        return 0.0

    def tail_mass(self, X):
        return 0.0

    def variation(self):
        return 0.0

    @property
    def is_zero(self):
        return True

    def to_dict(self):
        return {"kind": "zero"}


@dataclass(frozen=True)
class ExpDecayPotential(Potential):
    """q(x) = C exp(-d x)."""

    C: np.ndarray
    d: float
    kind = "exp_decay"

    def __post_init__(self):
        C = np.asarray(self.C, dtype=complex)
        object.__setattr__(self, "C", C)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValidationError("exp_decay: coefficient matrix must be square")
        if not np.isfinite(self.d) or self.d <= 0:
            raise ValidationError("exp_decay: rate d must be positive (q not integrable)", d=self.d)
        _check_offdiag(C, "exp_decay")

    @property
    def n(self):
        return self.C.shape[0]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(-self.d * x)[..., None, None] * self.C

    def derivative(self, x):
        return -self.d * self(x)

    def l1_mass(self):
        return _mnorm(self.C) / self.d

    def tail_mass(self, X):
        return _mnorm(self.C) * np.exp(-self.d * X) / self.d

    def variation(self):
        return _mnorm(self.C)

    @property
    def is_zero(self):
        return not np.any(self.C)

    def to_dict(self):
        return {"kind": "exp_decay", "c": _pairs(self.C), "d": float(self.d)}


@dataclass(frozen=True)
class BumpPotential(Potential):
    """q(x) = M phi((x - center) / width) with phi(s) = exp(-1/(1-s^2)) on |s| < 1."""

    center: float
    width: float
    M: np.ndarray
    kind = "bump"

    def __post_init__(self):
        M = np.asarray(self.M, dtype=complex)
        object.__setattr__(self, "M", M)
        if self.width <= 0:
            raise ValidationError("bump: width must be positive", width=self.width)
        if self.center - self.width < 0:
            raise ValidationError("bump: support must lie in [0, inf)",
                                  center=self.center, width=self.width)
        _check_offdiag(M, "bump")

    @property
    def n(self):
        return self.M.shape[0]

    def profile(self, x):
        s = (np.asarray(x, dtype=float) - self.center) / self.width
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        out[inside] = np.exp(-1.0 / (1.0 - s[inside] ** 2))
        return out

    def __call__(self, x):
        return self.profile(x)[..., None, None] * self.M

    def derivative(self, x):
        s = (np.asarray(x, dtype=float) - self.center) / self.width
        out = np.zeros_like(s)
        inside = np.abs(s) < 1
        si = s[inside]
        out[inside] = np.exp(-1.0 / (1.0 - si ** 2)) * (-2.0 * si / (1.0 - si ** 2) ** 2)
        return (out / self.width)[..., None, None] * self.M

    def l1_mass(self):
        return _mnorm(self.M) * self.width * _BUMP_MASS

    def tail_mass(self, X):
        if X >= self.center + self.width:
            return 0.0
        lo = max(X, self.center - self.width)
        val = quad(lambda t: float(self.profile(np.array([t]))[0]),
                   lo, self.center + self.width, epsabs=1e-14)[0]
        return _mnorm(self.M) * val

    def variation(self):
        return _mnorm(self.M) * 2.0 * np.exp(-1.0)

    @property
    def is_zero(self):
        return not np.any(self.M)

    def to_dict(self):
        return {"kind": "bump", "center": float(self.center),
                "width": float(self.width), "amplitude": _pairs(self.M)}


@dataclass(frozen=True)
class GridPotential(Potential):
    """Piecewise-linear interpolation of samples; zero beyond the last sample."""

    xs: np.ndarray
    values: np.ndarray
    kind = "grid_samples"
    bounds: tuple = field(default=(np.inf, np.inf))

    def __post_init__(self):
        xs = np.asarray(self.xs, dtype=float)
        vals = np.asarray(self.values, dtype=complex)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", vals)
        if xs.ndim != 1 or len(xs) < 2 or np.any(np.diff(xs) <= 0) or xs[0] < 0:
            raise ValidationError("grid_samples: x values must be increasing and >= 0")
        if vals.shape != (len(xs),) + vals.shape[1:] or vals.ndim != 3:
            raise ValidationError("grid_samples: need one square matrix per x value")
        if not np.all(np.isfinite(vals)):
            raise ValidationError("grid_samples: non-finite sample")
        _check_offdiag(vals, "grid_samples")
        l1, tv = self.l1_mass(), self.variation()
        if l1 > self.bounds[0] or tv > self.bounds[1]:
            raise ValidationError("grid_samples: W^1_1 sums exceed declared bounds",
                                  l1=l1, tv=tv)

    @property
    def n(self):
        return self.values.shape[1]

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        flat = self.values.reshape(len(self.xs), -1)
        out = np.empty(x.shape + (flat.shape[1],), dtype=complex)
        for j in range(flat.shape[1]):
            out[..., j] = (np.interp(x, self.xs, flat[:, j].real, right=0.0)
                           + 1j * np.interp(x, self.xs, flat[:, j].imag, right=0.0))
        return out.reshape(x.shape + (self.n, self.n))

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        slopes = np.diff(self.values, axis=0) / np.diff(self.xs)[:, None, None]
        slopes = np.concatenate([slopes, np.zeros((1,) + slopes.shape[1:])])
        i = np.clip(np.searchsorted(self.xs, x, side="right") - 1, 0, len(self.xs) - 1)
        out = slopes[i]
        out[x < self.xs[0]] = 0.0
        return out

    def _norms(self):
        return np.abs(self.values).sum(axis=-2).max(axis=-1)

    def l1_mass(self):
        nq = self._norms()
        return float(np.sum(0.5 * np.diff(self.xs) * (nq[1:] + nq[:-1])))

    def tail_mass(self, X):
        if X >= self.xs[-1]:
            return 0.0
        t = np.union1d(self.xs[self.xs > X], [X])
        nq = np.abs(self(t)).sum(axis=-2).max(axis=-1)
        return float(np.sum(0.5 * np.diff(t) * (nq[1:] + nq[:-1])))

    def variation(self):
        jumps = np.abs(np.diff(self.values, axis=0)).sum(axis=-2).max(axis=-1)
        # the drop to zero after the last sample counts as well
        return float(jumps.sum() + _mnorm(self.values[-1]))

    @property
    def is_zero(self):
        return not np.any(self.values)

    def to_dict(self):
        return {"kind": "grid_samples", "x": [float(v) for v in self.xs],
                "values": [_pairs(v) for v in self.values]}


def _pairs(M):
    M = np.asarray(M)
    return [[[float(z.real), float(z.imag)] for z in row] for row in M]


def scaled(q: Potential, factor: float) -> Potential:
    """Same family with all amplitudes multiplied by ``factor``."""
    if isinstance(q, ZeroPotential):
        return q
    if isinstance(q, ExpDecayPotential):
        return ExpDecayPotential(q.C * factor, q.d)
    if isinstance(q, BumpPotential):
        return BumpPotential(q.center, q.width, q.M * factor)
    if isinstance(q, GridPotential):
        return GridPotential(q.xs, q.values * factor)
    raise TypeError(type(q))


@dataclass(frozen=True)
class SumPotential(Potential):
    """Pointwise sum; masses are upper bounds from the triangle inequality."""

    parts: tuple
    kind = "sum"

    @property
    def n(self):
        return self.parts[0].n

    def __call__(self, x):
        return sum(p(x) for p in self.parts)

    def derivative(self, x):
        return sum(p.derivative(x) for p in self.parts)

    def l1_mass(self):
        return sum(p.l1_mass() for p in self.parts)

    def tail_mass(self, X):
        return sum(p.tail_mass(X) for p in self.parts)

    def variation(self):
        return sum(p.variation() for p in self.parts)

    @property
    def is_zero(self):
        return all(p.is_zero for p in self.parts)

    def to_dict(self):
        return {"kind": "sum", "parts": [p.to_dict() for p in self.parts]}


def conjugated(q: Potential, D) -> Potential:
    """x -> D q(x) D^{-1} for a diagonal D (given as its diagonal)."""
    D = np.asarray(D, dtype=complex)
    S = D[:, None] / D[None, :]
    if isinstance(q, ZeroPotential):
        return q
    if isinstance(q, ExpDecayPotential):
        return ExpDecayPotential(q.C * S, q.d)
    if isinstance(q, BumpPotential):
        return BumpPotential(q.center, q.width, q.M * S)
    if isinstance(q, GridPotential):
        return GridPotential(q.xs, q.values * S)
    if isinstance(q, SumPotential):
        return SumPotential(tuple(conjugated(p, D) for p in q.parts))
    raise TypeError(type(q))
