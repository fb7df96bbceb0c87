"""Independent reference computations built on scipy's dense ODE integrators.

Nothing here uses the package's exterior algebra or propagators: wedges are
Pluecker coordinates (k x k minors) and all integration is DOP853.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np
from scipy.integrate import solve_ivp

RTOL = 1e-12


def _Q(spec, rho, x):
    return spec.A / x + rho * spec.B + spec.q(np.array([x]))[0]


def pluecker(Y) -> np.ndarray:
    """All k x k minors of an n x k matrix, rows in lexicographic order."""
    n, k = Y.shape
    return np.array([np.linalg.det(Y[list(a), :]) for a in combinations(range(n), k)])


def frobenius_start(spec, rho, log_rho, j, x0, terms=4):
    """(rho x0)^{mu_j} sum_i a_i (rho x0)^i with (mu_j + i - A) a_i = B a_{i-1}, a_0 = h_j.

    Valid while q is negligible on [0, x0].
    """
    z0 = rho * x0
    a = spec.H[:, j].astype(complex)
    acc = a.copy()
    for i in range(1, terms):
        a = np.linalg.solve((spec.mu[j] + i) * np.eye(spec.n) - spec.A, spec.B @ a)
        acc = acc + a * z0**i
    return np.exp(spec.mu[j] * (log_rho + np.log(x0))) * acc


def small_end_solutions(spec, rho, log_rho, cols, x_eval, x0=1e-11, terms=4):
    """Solutions ~ (rho x)^{mu_j} h_j as x -> 0 for j in ``cols``, at ``x_eval``.

    Started from a few terms of the power series, so the admixture of other
    modes is O(|rho x0|^terms) rather than O(|rho x0|).
    """
    x_eval = np.asarray(x_eval, dtype=float)
    Y0 = np.stack([frobenius_start(spec, rho, log_rho, j, x0, terms) for j in cols], -1)
    n, p = Y0.shape

    def f(s, y):
        x = np.exp(s)
        return (x * _Q(spec, rho, x) @ y.reshape(n, p)).ravel()

    sol = solve_ivp(f, [np.log(x0), np.log(x_eval.max())], Y0.ravel().astype(complex),
                    method="DOP853", rtol=RTOL, atol=1e-30, dense_output=True)
    return sol.sol(np.log(x_eval)).T.reshape(len(x_eval), n, p)


def decaying_subspace(spec, sector, rho, k, x_to, X, chunk=1.0, terms=1):
    """Pluecker coordinates of F^_k = exp(-rho x (R_1+..+R_k)) E_1 ^ .. ^ E_k at x_to."""
    return pluecker(subspace_basis(spec, sector, rho, k, x_to, X, chunk, terms))


def shooting_psi(spec, sector, rho, k, x_eval, X_pair=(100.0, 200.0), x_match=1.0):
    """psi_k(x) for x in ``x_eval`` from a two-sided match at ``x_match``.

    psi_k lies in the span of the small-end solutions j >= k and satisfies
    F_{k-1} ^ psi_k = F_k. The O(1/X) error of starting the large-x side at the
    leading asymptotic term is removed by Richardson extrapolation over
    ``X_pair``.
    """
    n = spec.n
    log_rho = complex(sector.log(rho))
    pts = np.union1d(np.asarray(x_eval, dtype=float), [x_match])
    im = int(np.searchsorted(pts, x_match))
    cols = list(range(k - 1, n))
    phi = small_end_solutions(spec, rho, log_rho, cols, pts)
    Rk = sector.R[k - 1]
    out = []
    for X in X_pair:
        Fk = decaying_subspace(spec, sector, rho, k, x_match, X)
        if k == 1:
            M = phi[im]
        else:
            # F^_{k-1} spanned by an orthonormal basis scaled to the right volume
            F_prev = subspace_basis(spec, sector, rho, k - 1, x_match, X)
            M = np.stack([pluecker(np.column_stack([F_prev, phi[im][:, i]]))
                          for i in range(len(cols))], axis=-1)
        rhs = np.exp(rho * Rk * x_match) * Fk
        a, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        out.append(np.einsum("xnj,j->xn", phi, a))
    psi = 2.0 * out[1] - out[0]
    return psi[np.isin(pts, x_eval)]


def formal_columns(spec, sector, rho, X, k, terms=8):
    """exp(-rho X R_c) e_c(X) for c < k from the asymptotic recursion.

    e_c = exp(z R_c) sum_j h_j z^-j with (B - R_c) h_{j+1} = -(A + j) h_j;
    the pi_c component of h_{j+1} comes from the next order. q is ignored,
    so X must lie where q is negligible.
    """
    z = rho * X
    n = spec.n
    b = spec.b
    cols = []
    for c in range(k):
        p, R = sector.perm[c], sector.R[c]
        h = sector.f[:, c].astype(complex)
        acc = h.copy()
        for j in range(terms - 1):
            rhs = -(spec.A + j * np.eye(n)) @ h
            new = np.zeros(n, dtype=complex)
            others = [i for i in range(n) if i != p]
            new[others] = rhs[others] / (b[others] - R)
            new[p] = -(spec.A @ new)[p] / (j + 1)
            h = new
            acc = acc + h * z ** -(j + 1)
        cols.append(acc)
    return np.stack(cols, axis=-1)


def subspace_basis(spec, sector, rho, k, x_to, X, chunk=1.0, terms=1):
    """n x k basis at x_to whose wedge is F^_k, started at X.

    ``terms=1`` starts at f_1..f_k (error O(1/X)); more terms use the
    formal asymptotic columns. Backward integration of k columns with a QR
    re-orthonormalisation after every chunk; the volume is tracked through
    the triangular factors.
    """
    n = spec.n
    shift = rho * complex(np.sum(sector.R[:k])) / k
    # column scalings with unit product leave the wedge unchanged
    Y = formal_columns(spec, sector, rho, X, k, terms)
    logvol = 0.0 + 0.0j
    x = X

    def f(t, y):
        return ((_Q(spec, rho, t) - shift * np.eye(n)) @ y.reshape(n, k)).ravel()

    while x > x_to:
        x1 = max(x_to, x - chunk)
        sol = solve_ivp(f, [x, x1], Y.ravel(), method="DOP853", rtol=RTOL, atol=1e-30)
        Qm, Rm = np.linalg.qr(sol.y[:, -1].reshape(n, k))
        logvol += np.sum(np.log(np.diagonal(Rm)))
        Y = Qm
        x = x1
    Y = Y.copy()
    Y[:, 0] *= np.exp(logvol)
    return Y
