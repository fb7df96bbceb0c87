"""Exterior algebra over C^n with an explicit coefficient layout.

An element of the m-th exterior power is stored as the vector of its
coefficients over the wedge basis ``e_alpha`` where ``alpha`` runs over the
strictly increasing multi-indices of length ``m`` in colexicographic order.
All array-level routines accept arbitrary leading batch dimensions, so a
whole x-grid of tensors is processed in one call.

Multi-indices are 1-based in the public :class:`MultiIndex` type and 0-based
tuples inside the cached structure tables.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations
from math import comb

import numpy as np

from .errors import DegenerateSystem, SolvabilityViolated

__all__ = [
    "MultiIndex",
    "Tensor",
    "combos",
    "dim",
    "wedge",
    "wedge_arrays",
    "wedge_vectors",
    "compound_derivation",
    "compound_apply",
    "compound_power",
    "complement_sign",
    "merge_parity",
    "top_coefficient",
    "tensor_norm",
    "matrix_norm",
    "wedge_divide",
    "wedge_divide_arrays",
]


@lru_cache(maxsize=None)
def combos(n: int, m: int) -> tuple[tuple[int, ...], ...]:
    """0-based increasing m-tuples of range(n) in colexicographic order."""
    if not 0 <= m <= n:
        raise ValueError(f"order {m} outside 0..{n}")
    return tuple(sorted(combinations(range(n), m), key=lambda c: c[::-1]))


@lru_cache(maxsize=None)
def _position(n: int, m: int) -> dict:
    return {c: i for i, c in enumerate(combos(n, m))}


def dim(n: int, m: int) -> int:
    return comb(n, m)


def _sort_sign(seq) -> tuple[int, tuple[int, ...] | None]:
    """Sign of the sorting permutation, or 0 if an entry repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0, None
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign, tuple(sorted(seq))


def merge_parity(alpha, beta) -> int:
    """Parity of the permutation that sorts the concatenation ``alpha + beta``."""
    return _sort_sign(tuple(alpha) + tuple(beta))[0]


@lru_cache(maxsize=None)
def _wedge_table(n: int, p: int, r: int) -> np.ndarray:
    if p + r > n:
        raise ValueError(f"order overflow: {p} + {r} > {n}")
    table = np.zeros((dim(n, p), dim(n, r), dim(n, p + r)))
    pos = _position(n, p + r)
    for i, a in enumerate(combos(n, p)):
        for j, b in enumerate(combos(n, r)):
            sign, merged = _sort_sign(a + b)
            if sign:
                table[i, j, pos[merged]] = sign
    table.setflags(write=False)
    return table


@lru_cache(maxsize=None)
def _derivation_table(n: int, m: int):
    """Entries (alpha, beta, i, j, sign) with M^(m)[alpha, beta] += sign * M[i, j]."""
    pos = _position(n, m)
    rows = []
    for b_idx, beta in enumerate(combos(n, m)):
        for slot, j in enumerate(beta):
            for i in range(n):
                seq = beta[:slot] + (i,) + beta[slot + 1:]
                sign, merged = _sort_sign(seq)
                if sign:
                    rows.append((pos[merged], b_idx, i, j, sign))
    return np.array(rows, dtype=int).reshape(-1, 5)


@lru_cache(maxsize=None)
def _complement_sign_table(n: int, m: int) -> np.ndarray:
    """parity(alpha, alpha') for every alpha of order m."""
    out = []
    for a in combos(n, m):
        rest = tuple(i for i in range(n) if i not in a)
        out.append(merge_parity(a, rest))
    return np.array(out, dtype=float)


@lru_cache(maxsize=None)
def _complement_index(n: int, m: int) -> np.ndarray:
    pos = _position(n, n - m)
    return np.array(
        [pos[tuple(i for i in range(n) if i not in a)] for a in combos(n, m)],
        dtype=int,
    )


@dataclass(frozen=True)
class MultiIndex:
    """Strictly increasing multi-index with entries in 1..n."""

    entries: tuple[int, ...]
    n: int

    def __post_init__(self):
        e = tuple(int(v) for v in self.entries)
        object.__setattr__(self, "entries", e)
        if not 1 <= len(e) <= self.n:
            raise ValueError(f"order must lie in 1..{self.n}, got {len(e)}")
        if any(v < 1 or v > self.n for v in e):
            raise ValueError(f"entries must lie in 1..{self.n}: {e}")
        if any(a >= b for a, b in zip(e, e[1:])):
            raise ValueError(f"entries must be strictly increasing: {e}")

    @property
    def order(self) -> int:
        return len(self.entries)

    @property
    def zero_based(self) -> tuple[int, ...]:
        return tuple(v - 1 for v in self.entries)

    @property
    def position(self) -> int:
        return _position(self.n, self.order)[self.zero_based]

    def complement(self) -> "MultiIndex | None":
        rest = tuple(v for v in range(1, self.n + 1) if v not in self.entries)
        return MultiIndex(rest, self.n) if rest else None

    def index_sum(self, values) -> complex:
        """``a_alpha``: sum of ``values[j]`` over j in alpha (values 0-based)."""
        return sum(values[v - 1] for v in self.entries)

    @classmethod
    def all(cls, n: int, m: int) -> list["MultiIndex"]:
        return [cls(tuple(v + 1 for v in c), n) for c in combos(n, m)]


def forward_sum(values, k: int):
    """Sum of the first k values (k counted from 1)."""
    return sum(values[:k])


def backward_sum(values, k: int):
    """Sum of values k..n (k counted from 1)."""
    return sum(values[k - 1:])


def wedge_arrays(a, p: int, b, r: int, n: int) -> np.ndarray:
    """Wedge product of coefficient arrays of orders p and r (batched)."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape[-1] != dim(n, p) or b.shape[-1] != dim(n, r):
        raise ValueError("coefficient length does not match order")
    if p + r > n:
        raise ValueError(f"order overflow: {p} + {r} > {n}")
    if p == 0:
        return a[..., :1] * b
    if r == 0:
        return a * b[..., :1]
    return np.einsum("...i,...j,ijo->...o", a, b, _wedge_table(n, p, r))


def wedge_vectors(vectors, n: int | None = None) -> np.ndarray:
    """u_1 ^ ... ^ u_m for a sequence of (batched) vectors."""
    vectors = [np.asarray(v) for v in vectors]
    if n is None:
        n = vectors[0].shape[-1]
    if not vectors:
        return np.ones(1, dtype=complex)
    out = vectors[0]
    for order, v in enumerate(vectors[1:], start=1):
        out = wedge_arrays(out, order, v, 1, n)
    return out


def tensor_norm(h) -> np.ndarray:
    """Sum of coefficient moduli (the l1 norm over the wedge basis)."""
    return np.abs(np.asarray(h)).sum(axis=-1)


def matrix_norm(M) -> np.ndarray:
    """Operator norm induced by the l1 vector norm (max column sum)."""
    return np.abs(np.asarray(M)).sum(axis=-2).max(axis=-1)


def compound_derivation(M, m: int) -> np.ndarray:
    """Matrix of the derivation extension M^(m) on the m-th exterior power."""
    M = np.asarray(M)
    n = M.shape[-1]
    d = dim(n, m)
    out = np.zeros(M.shape[:-2] + (d, d), dtype=np.result_type(M, float))
    if m == 0:
        return out
    if m == 1:
        out[...] = M
        return out
    for a, b, i, j, s in _derivation_table(n, m):
        out[..., a, b] += s * M[..., i, j]
    return out


def compound_apply(M, u, m: int) -> np.ndarray:
    """Apply M^(m) to the coefficient array u."""
    D = compound_derivation(M, m)
    return np.einsum("...ij,...j->...i", D, np.asarray(u))


def compound_power(U, m: int) -> np.ndarray:
    """Multiplicative compound: the matrix of minors acting on the m-th power."""
    U = np.asarray(U)
    n = U.shape[-1]
    if m == 0:
        return np.ones(U.shape[:-2] + (1, 1), dtype=U.dtype)
    if m == 1:
        return U.copy()
    idx = np.array(combos(n, m))
    sub = U[..., idx[:, None, :, None], idx[None, :, None, :]]
    # closed forms are much faster than LU for the tiny blocks that dominate
    if m == 2:
        return sub[..., 0, 0] * sub[..., 1, 1] - sub[..., 0, 1] * sub[..., 1, 0]
    if m == 3:
        a = sub
        return (a[..., 0, 0] * (a[..., 1, 1] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 1])
                - a[..., 0, 1] * (a[..., 1, 0] * a[..., 2, 2] - a[..., 1, 2] * a[..., 2, 0])
                + a[..., 0, 2] * (a[..., 1, 0] * a[..., 2, 1] - a[..., 1, 1] * a[..., 2, 0]))
    return np.linalg.det(sub)


def top_coefficient(h, n: int | None = None) -> np.ndarray:
    """|h| for a top-order element: the single coefficient (not a modulus)."""
    h = np.asarray(h)
    if h.shape[-1] != 1:
        raise ValueError("top_coefficient needs an order-n element")
    return h[..., 0]


def complement_sign(alpha: MultiIndex, basis) -> tuple[MultiIndex | None, float]:
    """Complement alpha' and the top coefficient of ``u_alpha ^ u_alpha'``.

    For a basis whose top wedge is +-1 the value is exactly +-1: the merge
    parity of (alpha, alpha') times the top coefficient of the full basis.
    """
    basis = np.asarray(basis)
    n = alpha.n
    comp = alpha.complement()
    rest = comp.zero_based if comp else ()
    full = wedge_vectors([basis[:, j] for j in range(n)], n)[0]
    sign = merge_parity(alpha.zero_based, rest) * full
    if np.isclose(abs(full), 1.0, atol=1e-12):
        sign = float(np.round(sign.real))
    return comp, sign


def _left_wedge_matrix(T, m_T: int, n: int) -> np.ndarray:
    """Matrix of w -> w ^ T, shape (..., C(n, m_T + 1), n)."""
    table = _wedge_table(n, 1, m_T)
    return np.einsum("ijo,...j->...oi", table, T)


def _right_wedge_matrix(T, m_T: int, n: int) -> np.ndarray:
    """Matrix of w -> T ^ w, shape (..., C(n, m_T + 1), n)."""
    table = _wedge_table(n, m_T, 1)
    return np.einsum("jio,...j->...oi", table, T)


def lstsq_batched(M, b, cond_max: float = 1e12):
    """Batched least squares through Householder QR; returns (x, cond_est)."""
    Q, R = np.linalg.qr(M)
    diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    cond = diag.max(axis=-1) / np.maximum(diag.min(axis=-1), np.finfo(float).tiny)
    if np.any(cond > cond_max):
        raise DegenerateSystem(
            "linear system numerically singular", cond=float(cond.max())
        )
    rhs = np.einsum("...ki,...k->...i", Q.conj(), b)
    x = np.linalg.solve(R, rhs[..., None])[..., 0]
    return x, cond


def wedge_divide_arrays(
    S,
    T,
    m: int,
    ortho,
    n: int,
    inner: str = "hermitian",
    side: str = "left",
    tol: float = 1e-8,
    cond_max: float = 1e12,
) -> np.ndarray:
    """Solve ``w ^ T = S`` (side='left') or ``T ^ w = S`` (side='right').

    ``S`` has order m, ``T`` order m - 1; the solution is made unique by
    ``(w, u) = 0`` for every u in ``ortho``. ``inner`` selects the Hermitian
    form (conjugate-linear in the second slot) or the plain bilinear form.
    """
    S = np.asarray(S, dtype=complex)
    T = np.asarray(T, dtype=complex)
    if side == "left":
        W = _left_wedge_matrix(T, m - 1, n)
    elif side == "right":
        W = _right_wedge_matrix(T, m - 1, n)
    else:
        raise ValueError(f"unknown side {side!r}")
    rows = [W]
    scale = tensor_norm(T)[..., None, None]
    for u in ortho:
        u = np.broadcast_to(np.asarray(u, dtype=complex), S.shape[:-1] + (n,))
        if inner == "hermitian":
            row = u.conj()
        elif inner == "bilinear":
            row = u
        else:
            raise ValueError(f"unknown inner product {inner!r}")
        unorm = np.maximum(np.abs(u).sum(axis=-1), np.finfo(float).tiny)
        rows.append(row[..., None, :] / unorm[..., None, None] * scale)
    M = np.concatenate(rows, axis=-2)
    rhs = np.concatenate(
        [S, np.zeros(S.shape[:-1] + (len(ortho),), dtype=complex)], axis=-1
    )
    w, _ = lstsq_batched(M, rhs, cond_max=cond_max)
    resid = tensor_norm(np.einsum("...oi,...i->...o", W, w) - S)
    ref = np.maximum(tensor_norm(S), np.finfo(float).tiny)
    worst = float(np.max(resid / ref))
    if worst > tol:
        raise SolvabilityViolated(
            "w ^ T = S has no solution to tolerance", residual=worst, tol=tol
        )
    return w


@dataclass(frozen=True)
class Tensor:
    """Element (or batch of elements) of the m-th exterior power of C^n."""

    n: int
    m: int
    coeffs: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=complex)
        if c.ndim == 0 or c.shape[-1] != dim(self.n, self.m):
            raise ValueError(
                f"expected {dim(self.n, self.m)} coefficients for order {self.m}"
            )
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def basis(cls, n: int, entries, scale=1.0) -> "Tensor":
        mi = MultiIndex(tuple(entries), n)
        c = np.zeros(dim(n, mi.order), dtype=complex)
        c[mi.position] = scale
        return cls(n, mi.order, c)

    @classmethod
    def from_vector(cls, v) -> "Tensor":
        v = np.asarray(v, dtype=complex)
        return cls(v.shape[-1], 1, v)

    @classmethod
    def from_vectors(cls, vectors) -> "Tensor":
        vectors = [np.asarray(v, dtype=complex) for v in vectors]
        n = vectors[0].shape[-1]
        return cls(n, len(vectors), wedge_vectors(vectors, n))

    @classmethod
    def scalar(cls, n: int, value=1.0) -> "Tensor":
        return cls(n, 0, np.asarray(value, dtype=complex)[..., None])

    def __getitem__(self, alpha) -> np.ndarray:
        if not isinstance(alpha, MultiIndex):
            alpha = MultiIndex(tuple(alpha), self.n)
        if alpha.order != self.m:
            raise KeyError(f"multi-index of order {alpha.order} for order {self.m}")
        return self.coeffs[..., alpha.position]

    def items(self):
        for mi in MultiIndex.all(self.n, self.m):
            yield mi, self.coeffs[..., mi.position]

    def wedge(self, other: "Tensor") -> "Tensor":
        return wedge(self, other)

    __xor__ = wedge

    def norm(self) -> np.ndarray:
        return tensor_norm(self.coeffs)

    def top(self) -> np.ndarray:
        return top_coefficient_tensor(self)

    def __add__(self, other):
        _check_same(self, other)
        return Tensor(self.n, self.m, self.coeffs + other.coeffs)

    def __sub__(self, other):
        _check_same(self, other)
        return Tensor(self.n, self.m, self.coeffs - other.coeffs)

    def __mul__(self, s):
        return Tensor(self.n, self.m, self.coeffs * np.asarray(s)[..., None]
                      if np.ndim(s) else self.coeffs * s)

    __rmul__ = __mul__

    def __neg__(self):
        return Tensor(self.n, self.m, -self.coeffs)


def _check_same(a: Tensor, b: Tensor):
    if a.n != b.n or a.m != b.m:
        raise ValueError("tensors live in different exterior powers")


def wedge(a: Tensor, b: Tensor) -> Tensor:
    if a.n != b.n:
        raise ValueError(f"dimension mismatch: {a.n} vs {b.n}")
    if a.m + b.m > a.n:
        raise ValueError(f"order overflow: {a.m} + {b.m} > {a.n}")
    return Tensor(a.n, a.m + b.m, wedge_arrays(a.coeffs, a.m, b.coeffs, b.m, a.n))


def top_coefficient_tensor(h: Tensor) -> np.ndarray:
    if h.m != h.n:
        raise ValueError(f"order {h.m} is not the top order {h.n}")
    return h.coeffs[..., 0]


def wedge_divide(
    S: Tensor,
    T: Tensor,
    ortho,
    inner: str = "hermitian",
    tol: float = 1e-8,
    cond_max: float = 1e12,
) -> np.ndarray:
    """Unique w with ``w ^ T = S`` and (w, u) = 0 for u in ``ortho``."""
    if S.n != T.n:
        raise ValueError("dimension mismatch")
    if T.m != S.m - 1:
        raise ValueError("T must have order one less than S")
    return wedge_divide_arrays(
        S.coeffs, T.coeffs, S.m, ortho, S.n, inner=inner, tol=tol,
        cond_max=cond_max,
    )
