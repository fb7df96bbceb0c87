"""Convergent series at z = 0 and formal series at z = infinity for y' = (A/z + B) y."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AsymptoticNotReached, NearIntegerResonance, SeriesNotConverged
from .sectors import SectorData
from .system import SystemSpec


@dataclass(frozen=True)
class FrobeniusSolution:
    """c_k(z) = z^{mu_k} sum_j a_j z^j with a_0 = h_k."""

    k: int
    mu: complex
    coeffs: np.ndarray  # (J+1, n)
    radius: float  # root-test estimate (inf for an entire series)
    tail: float  # ||a_J|| r^J at the design radius

    @property
    def J(self) -> int:
        return self.coeffs.shape[0] - 1


class Frobenius:
    """All n Frobenius solutions with a common truncation order.

    The truncation is chosen so the last kept term is below ``tol`` relative
    to the largest one for |z| <= ``r_max``.
    """

    def __init__(self, spec: SystemSpec, r_max: float = 6.0, tol: float = 1e-17,
                 J_max: int = 600, cond_max: float = 1e12):
        A, B, n = spec.A, spec.B, spec.n
        mu, H = spec.mu, spec.H
        cols = []
        self.r_max = r_max
        for k in range(n):
            a = [H[:, k].copy()]
            peak = np.abs(a[0]).sum()
            j = 0
            while True:
                j += 1
                if j > J_max:
                    raise SeriesNotConverged("tail bound above tolerance", k=k + 1, J_max=J_max)
                Mj = A - (mu[k] + j) * np.eye(n)
                if np.linalg.cond(Mj) > cond_max:
                    raise NearIntegerResonance("A - (mu_k + j) I nearly singular", k=k + 1, j=j)
                a.append(-np.linalg.solve(Mj, B @ a[-1]))
                term = np.abs(a[-1]).sum() * r_max ** j
                peak = max(peak, term)
                if term < tol * peak and j > 8:
                    break
            cols.append(np.array(a))
        J = max(c.shape[0] for c in cols)
        self.coeffs = np.zeros((J, n, n), dtype=complex)  # [j, :, k]
        self.solutions = []
        for k, c in enumerate(cols):
            self.coeffs[: c.shape[0], :, k] = c
            norms = np.abs(c).sum(axis=1)
            nz = [(i, v) for i, v in enumerate(norms) if i > 0 and v > 0]
            radius = np.inf if not nz else float(1.0 / max(v ** (1.0 / i) for i, v in nz[-5:]))
            self.solutions.append(FrobeniusSolution(k + 1, complex(mu[k]), c, radius,
                                                    float(norms[-1] * r_max ** (len(c) - 1))))
        self.mu = np.asarray(mu)
        self.n = n

    def chat(self, z) -> np.ndarray:
        """Matrix of the entire factors c^_k(z) (columns), batched over z."""
        z = np.asarray(z, dtype=complex)
        out = np.broadcast_to(self.coeffs[-1], z.shape + (self.n, self.n)).copy()
        for j in range(self.coeffs.shape[0] - 2, -1, -1):
            out = out * z[..., None, None] + self.coeffs[j]
        return out

    def chat_derivative(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        J = self.coeffs.shape[0]
        out = np.broadcast_to((J - 1) * self.coeffs[-1], z.shape + (self.n, self.n)).copy()
        for j in range(J - 2, 0, -1):
            out = out * z[..., None, None] + j * self.coeffs[j]
        return out

    def powers(self, logz) -> np.ndarray:
        """z^{mu_k} given log z on the chosen branch, shape (..., n)."""
        return np.exp(np.asarray(logz)[..., None] * self.mu)

    def c(self, z, sector: SectorData) -> np.ndarray:
        z = np.asarray(z, dtype=complex)
        return self.chat(z) * self.powers(sector.log(z))[..., None, :]

    def tail_bound(self, r: float) -> float:
        J = self.coeffs.shape[0] - 1
        return float(np.abs(self.coeffs[-1]).sum(axis=0).max() * r ** J)


class FormalSeries:
    """Formal solutions exp(R_k z)(f_k + sum_j h_j z^{-j}) for one sector ordering.

    No power factor appears because diag(A) = 0.
    """

    def __init__(self, spec: SystemSpec, sector: SectorData, J: int = 160, gauge=None):
        A, b, n = spec.A, spec.b, spec.n
        self.n = n
        self.sector = sector
        # optional unit upper triangular G: the series then represents e G
        self.gauge = None
        if gauge is not None:
            G = np.asarray(gauge, dtype=complex)
            if G.shape != (n, n) or np.any(np.tril(G, -1)) or np.any(np.diag(G) != 1):
                raise ValueError("gauge must be unit upper triangular")
            self.gauge = G
        H = np.zeros((J + 1, n, n), dtype=complex)  # [j, :, k]
        for k in range(n):
            p = sector.perm[k]
            lam = b[p]
            h = np.zeros(n, dtype=complex)
            h[p] = 1.0
            H[0, :, k] = h
            others = [i for i in range(n) if i != p]
            for j in range(J):
                rhs = -(A @ h + j * h)
                new = np.zeros(n, dtype=complex)
                new[others] = rhs[others] / (b[others] - lam)
                new[p] = -(A @ new)[p] / (j + 1)
                h = new
                H[j + 1, :, k] = h
                if not np.all(np.isfinite(h)) or np.abs(h).sum() > 1e290:
                    H = H[: j + 1]
                    break
        self.coeffs = H
        self.norms = np.abs(H).sum(axis=1)  # (J+1, n)

    def truncation(self, r: float):
        """Optimal truncation orders and error estimates at |z| = r (per column)."""
        with np.errstate(divide="ignore"):
            logt = np.log(self.norms) - np.arange(self.norms.shape[0])[:, None] * np.log(float(r))
        logt = np.where(np.isfinite(logt) | (logt == -np.inf), logt, np.inf)
        # skip j = 0 (the leading vector itself); stop early once terms drop below 1e-20
        body = logt[1:]
        idx = 1 + np.argmin(body, axis=0)
        small = body < np.log(1e-20)
        first = 1 + np.argmax(small, axis=0)
        idx = np.where(small.any(axis=0), np.minimum(idx, first), idx)
        return idx, np.exp(logt[idx, range(self.n)])

    def reach(self, tol: float = 1e-14, r_max: float = 50.0) -> float:
        """Smallest |z| on a fine ladder where every column's error is below tol."""
        for r in np.arange(1.0, r_max + 1e-9, 0.25):
            _, err = self.truncation(r)
            if np.all(err < tol):
                return float(r)
        raise AsymptoticNotReached("formal series error above tolerance", tol=tol, r_max=r_max)

    def ehat(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Phase-factored e^(z) = e(z) diag(exp(-R z)) and per-point error estimate."""
        z = np.asarray(z, dtype=complex)
        flat = z.ravel()
        out = np.empty(flat.shape + (self.n, self.n), dtype=complex)
        err = np.empty(flat.shape)
        for i, zi in enumerate(flat):
            idx, e = self.truncation(abs(zi))
            jmax = int(idx.max())
            w = np.cumprod(np.concatenate([[1.0], np.full(jmax - 1, 1.0 / zi)]))
            acc = np.zeros((self.n, self.n), dtype=complex)
            for k in range(self.n):
                acc[:, k] = w[: idx[k]] @ self.coeffs[: idx[k], :, k]
            if self.gauge is not None:
                R = self.sector.R
                expo = np.where(self.gauge != 0, zi * (R[:, None] - R[None, :]), 0.0)
                acc = acc @ np.where(self.gauge != 0, self.gauge * np.exp(expo), 0.0)
            out[i] = acc
            err[i] = e.max()
        return out.reshape(z.shape + (self.n, self.n)), err.reshape(z.shape)
