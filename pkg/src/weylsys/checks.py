"""Grid diagnostics shared by several modules: ODE residuals and limit fits."""

from __future__ import annotations

import numpy as np

from .exterior import compound_derivation, tensor_norm

# fourth-order central first derivative
_FD4 = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0


def _stencils(x: np.ndarray, rtol: float = 1e-8):
    """Interior indices with a uniform five-point stencil in x or in log x."""
    x = np.asarray(x, dtype=float)
    idx = np.arange(2, len(x) - 2)
    win = np.stack([x[idx + o] for o in (-2, -1, 0, 1, 2)], axis=-1)
    d = np.diff(win, axis=-1)
    uni = np.all(np.abs(d - d[:, :1]) <= rtol * np.abs(d[:, :1]), axis=-1)
    dl = np.diff(np.log(win), axis=-1)
    geo = ~uni & np.all(np.abs(dl - dl[:, :1]) <= 1e-6 * np.abs(dl[:, :1]), axis=-1)
    return idx, uni, geo, d[:, 0], dl[:, 0]


def ode_residual(x, Yhat, generator, rho: complex = 0.0, S: complex = 0.0) -> dict:
    """Relative residual of Y' = M(x) Y for Y = exp(rho x S) Yhat.

    ``Yhat`` has shape (N, D) or (N, D, p) (several columns), ``generator``
    is M on the grid, shape (N, D, D). On uniform stretches the residual is
    ||Y' - M Y|| / ||Y||; on geometric stretches the scale-free
    ||x (Y' - M Y)|| / ||Y|| is used. Points with neither stencil are
    skipped.
    """
    x = np.asarray(x, dtype=float)
    Y = np.asarray(Yhat, dtype=complex)
    cols = Y.ndim == 3
    if not cols:
        Y = Y[..., None]
    idx, uni, geo, hx, hl = _stencils(x)
    M = np.asarray(generator) - rho * S * np.eye(Y.shape[1])
    MY = np.einsum("nij,njp->nip", M, Y)
    stencil = np.stack([Y[idx + o] for o in (-2, -1, 0, 1, 2)], axis=0)
    diff = np.einsum("s,s...->...", _FD4, stencil)
    res = np.full(len(idx), np.nan)
    nrm = np.maximum(np.abs(Y[idx]).sum(axis=1), 1e-300)  # (K, p)
    if uni.any():
        r = diff[uni] / hx[uni][:, None, None] - MY[idx][uni]
        res[uni] = (np.abs(r).sum(axis=1) / nrm[uni]).max(axis=-1)
    if geo.any():
        r = diff[geo] / hl[geo][:, None, None] - x[idx][geo][:, None, None] * MY[idx][geo]
        res[geo] = (np.abs(r).sum(axis=1) / nrm[geo]).max(axis=-1)
    ok = ~np.isnan(res)
    worst = float(res[ok].max()) if ok.any() else float("nan")
    return {"max": worst, "x_at_max": float(x[idx][ok][np.argmax(res[ok])]) if ok.any() else None,
            "points": int(ok.sum()), "values": res, "x": x[idx]}


def vector_generator(spec, rho: complex, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    return spec.A / x[:, None, None] + rho * spec.B + spec.q(x)


def tensor_generator(spec, rho: complex, x, m: int) -> np.ndarray:
    return compound_derivation(vector_generator(spec, rho, x), m)


def fit_limit(x, values, basis: str = "linear", npts: int = 5):
    """Value at the end of a grid from its first/last ``npts`` samples.

    basis 'linear' fits a + b x (limit x -> 0), 'inverse' fits a + b / x
    (limit x -> inf). Returns (limit, fit residual).
    """
    x = np.asarray(x, dtype=float)
    v = np.asarray(values, dtype=complex)
    t = x if basis == "linear" else 1.0 / x
    V = np.stack([np.ones_like(t), t], axis=-1)
    flat = v.reshape(len(x), -1)
    coef, *_ = np.linalg.lstsq(V.astype(complex), flat, rcond=None)
    resid = float(np.abs(V @ coef - flat).max()) if len(x) > 2 else 0.0
    return coef[0].reshape(v.shape[1:]), resid


def relative_spread(values) -> tuple[complex, float]:
    """Median (componentwise re/im) and max relative deviation from it."""
    v = np.asarray(values, dtype=complex)
    med = complex(np.median(v.real), np.median(v.imag))
    scale = max(abs(med), 1e-300)
    return med, float(np.abs(v - med).max() / scale)


def column_norms(M) -> np.ndarray:
    return tensor_norm(np.swapaxes(M, -1, -2))
