"""Problem data y' = (A/x + rho B + q(x)) y and validation of its standing assumptions."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import AssumptionViolated
from .potentials import Potential, ZeroPotential


@dataclass(frozen=True)
class Clause:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass(frozen=True)
class ValidationReport:
    clauses: tuple[Clause, ...]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.clauses)

    def failing(self) -> list[Clause]:
        return [c for c in self.clauses if not c.passed]

    def as_dict(self) -> dict:
        return {c.name: {"passed": c.passed, "margin": c.margin, "detail": c.detail}
                for c in self.clauses}


@dataclass(frozen=True)
class Eigen:
    mu: np.ndarray  # sorted by real part
    H: np.ndarray  # columns h_k, det H = 1


@dataclass(frozen=True)
class SystemSpec:
    """Coefficients of the system. ``B`` is given by its diagonal ``b``.

    ``eigvec_scale`` rescales the eigenvectors of A before the det = 1
    normalization; it only changes the gauge of the Frobenius basis.
    """

    A: np.ndarray
    b: np.ndarray
    q: Potential | None = None
    eigvec_scale: np.ndarray | None = None
    gap_tol: float = 1e-6
    sum_tol: float = 1e-12
    _eigen: Eigen | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        A = np.asarray(self.A, dtype=complex)
        b = np.asarray(self.b, dtype=complex).ravel()
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "b", b)
        if self.q is None:
            object.__setattr__(self, "q", ZeroPotential(len(b)))

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def B(self) -> np.ndarray:
        return np.diag(self.b)

    @property
    def eigen(self) -> Eigen:
        if self._eigen is None:
            object.__setattr__(self, "_eigen", _eigendecompose(self.A, self.eigvec_scale))
        return self._eigen

    @property
    def mu(self) -> np.ndarray:
        return self.eigen.mu

    @property
    def H(self) -> np.ndarray:
        return self.eigen.H

    def with_q(self, q: Potential) -> "SystemSpec":
        return SystemSpec(self.A, self.b, q, self.eigvec_scale, self.gap_tol, self.sum_tol)

    def unperturbed(self) -> "SystemSpec":
        return self.with_q(ZeroPotential(self.n))


def _eigendecompose(A, scale=None) -> Eigen:
    mu, H = np.linalg.eig(A)
    order = np.lexsort((mu.imag, mu.real))
    mu, H = mu[order], H[:, order]
    # deterministic phase: largest-modulus entry real positive
    for k in range(H.shape[1]):
        j = np.argmax(np.abs(H[:, k]))
        H[:, k] *= abs(H[j, k]) / H[j, k] / np.linalg.norm(H[:, k])
    if scale is not None:
        H = H * np.asarray(scale, dtype=complex)[None, :]
    det = np.linalg.det(H)
    H = H / det ** (1.0 / len(mu))
    return Eigen(mu=mu, H=H)


def _dist_to_int(z: complex) -> float:
    return float(abs(z - np.round(z.real)))


def validate_assumption1(
    spec: SystemSpec, raise_on_fail: bool = True, q_samples=None
) -> ValidationReport:
    """Check every clause; raise on the first failing one unless told otherwise."""
    A, b, n = spec.A, spec.b, spec.n
    out: list[Clause] = []

    out.append(Clause("dimension n >= 3", n >= 3, float(n - 3)))
    shape_ok = A.shape == (n, n)
    out.append(Clause("A is n x n", shape_ok, 0.0))
    if not shape_ok:
        return _finish(out, raise_on_fail)
    finite = bool(np.all(np.isfinite(A)) and np.all(np.isfinite(b)))
    out.append(Clause("finite entries", finite, 0.0))
    if not finite:
        return _finish(out, raise_on_fail)

    dA = float(np.abs(np.diag(A)).max())
    out.append(Clause("A off-diagonal", dA == 0.0, -dA))

    s = abs(b.sum())
    out.append(Clause("sum of B diagonal", s <= spec.sum_tol, spec.sum_tol - s,
                      f"|sum b| = {s:.3g}"))
    mn = float(np.abs(b).min())
    out.append(Clause("B diagonal nonzero", mn > 0, mn))
    gaps = [abs(b[i] - b[j]) for i in range(n) for j in range(i + 1, n)]
    g = float(min(gaps))
    out.append(Clause("B diagonal distinct", g > 0, g))

    eig = spec.eigen
    mu = eig.mu
    dists = [_dist_to_int(mu[j] - mu[k]) for j in range(n) for k in range(j + 1, n)]
    dm = float(min(dists))
    out.append(Clause("eigenvalue differences not integers", dm > spec.gap_tol,
                      dm - spec.gap_tol))
    re = mu.real
    rgap = float(np.diff(re).min())
    out.append(Clause("real parts strictly increasing", rgap > 0, rgap))
    tr = abs(mu.sum())
    out.append(Clause("trace of A zero", tr < 1e-10, 1e-10 - tr))
    cond = float(np.linalg.cond(eig.H))
    out.append(Clause("eigenvectors independent", cond < 1e10, 1e10 - cond))

    q = spec.q
    out.append(Clause("q dimension", q.n == n, 0.0))
    xs = np.linspace(0.0, 50.0, 501) if q_samples is None else np.asarray(q_samples)
    qd = float(np.abs(np.diagonal(q(xs), axis1=-2, axis2=-1)).max()) if q.n == n else np.inf
    out.append(Clause("q off-diagonal", qd == 0.0, -qd))
    w = q.w11_norm()
    out.append(Clause("q in W11", bool(np.isfinite(w)), -w))
    return _finish(out, raise_on_fail)


def _finish(out, raise_on_fail):
    report = ValidationReport(tuple(out))
    if raise_on_fail and not report.passed:
        c = report.failing()[0]
        raise AssumptionViolated(c.name, "assumption violated", margin=c.margin)
    return report
