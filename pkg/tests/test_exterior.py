from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.linalg import expm

from weylsys.errors import SolvabilityViolated
from weylsys.exterior import (MultiIndex, Tensor, combos, complement_sign, compound_apply,
                              compound_derivation, compound_power, dim, matrix_norm,
                              merge_parity, tensor_norm, wedge, wedge_arrays, wedge_divide,
                              wedge_divide_arrays, wedge_vectors)
from weylsys.propagators import batched_matvec, expm_batched

dims = st.integers(3, 5)
seeds = st.integers(0, 2**32 - 1)


def cplx(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def minors(Y):
    """Coefficients of the wedge of the columns of Y, indexed like ``combos``."""
    n, k = Y.shape
    table = {c: np.linalg.det(Y[list(c), :]) for c in combinations(range(n), k)}
    return np.array([table[c] for c in combos(n, k)])


def test_colex_layout():
    assert combos(4, 2) == ((0, 1), (0, 2), (1, 2), (0, 3), (1, 3), (2, 3))
    assert dim(5, 2) == 10
    mi = MultiIndex((2, 4), 4)
    assert mi.position == 4 and mi.complement().entries == (1, 3)
    assert merge_parity((1,), (0,)) == -1
    assert merge_parity((0, 2), (1,)) == -1


def test_multiindex_rejects_bad_entries():
    with pytest.raises(ValueError):
        MultiIndex((2, 1), 3)
    with pytest.raises(ValueError):
        MultiIndex((1, 4), 3)


@settings(max_examples=60, deadline=None)
@given(n=dims, seed=seeds, data=st.data())
def test_wedge_of_vectors_is_minors(n, seed, data):
    k = data.draw(st.integers(1, n))
    rng = np.random.default_rng(seed)
    Y = cplx(rng, n, k)
    w = wedge_vectors([Y[:, j] for j in range(k)], n)
    assert np.allclose(w, minors(Y), rtol=1e-12, atol=1e-12)


@settings(max_examples=60, deadline=None)
@given(n=dims, seed=seeds, data=st.data())
def test_graded_commutativity_and_associativity(n, seed, data):
    p = data.draw(st.integers(1, n - 1))
    r = data.draw(st.integers(1, n - p))
    rng = np.random.default_rng(seed)
    a, b = cplx(rng, dim(n, p)), cplx(rng, dim(n, r))
    assert np.allclose(wedge_arrays(a, p, b, r, n), (-1) ** (p * r) * wedge_arrays(b, r, a, p, n))
    if p + r < n:
        c = cplx(rng, n)
        left = wedge_arrays(wedge_arrays(a, p, b, r, n), p + r, c, 1, n)
        right = wedge_arrays(a, p, wedge_arrays(b, r, c, 1, n), r + 1, n)
        assert np.allclose(left, right)


def test_wedge_vanishes_on_repeated_vector(rng):
    u, v = cplx(rng, 4), cplx(rng, 4)
    assert np.allclose(wedge_vectors([u, v, u]), 0)


@settings(max_examples=40, deadline=None)
@given(n=dims, seed=seeds, data=st.data())
def test_compound_power_cauchy_binet(n, seed, data):
    m = data.draw(st.integers(1, n))
    rng = np.random.default_rng(seed)
    U, V = cplx(rng, n, n), cplx(rng, n, n)
    assert np.allclose(compound_power(U @ V, m), compound_power(U, m) @ compound_power(V, m))
    Y = cplx(rng, n, m)
    lhs = compound_power(U, m) @ minors(Y)
    assert np.allclose(lhs, minors(U @ Y))


@settings(max_examples=40, deadline=None)
@given(n=dims, seed=seeds, data=st.data())
def test_compound_derivation_leibniz(n, seed, data):
    m = data.draw(st.integers(1, n))
    rng = np.random.default_rng(seed)
    M = cplx(rng, n, n)
    vs = [cplx(rng, n) for _ in range(m)]
    expected = sum(wedge_vectors(vs[:i] + [M @ vs[i]] + vs[i + 1:], n) for i in range(m))
    assert np.allclose(compound_apply(M, wedge_vectors(vs, n), m), expected)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_derivation_exponentiates_to_power(n, rng):
    M = 0.3 * cplx(rng, n, n)
    for m in range(1, n + 1):
        assert np.allclose(expm(compound_derivation(M, m)), compound_power(expm(M), m))
    assert np.isclose(compound_derivation(M, n)[0, 0], np.trace(M))


@pytest.mark.parametrize("n", [3, 4, 5])
def test_compound_operator_bound(n):
    """||M^(m) u|| <= m ||M|| ||u|| and the operator form, on 1000 draws per order."""
    rng = np.random.default_rng(n)
    for m in range(1, n + 1):
        M = cplx(rng, 1000, n, n) * rng.exponential(1.0, (1000, 1, 1))
        u = cplx(rng, 1000, dim(n, m))
        D = compound_derivation(M, m)
        lhs = tensor_norm(np.einsum("bij,bj->bi", D, u))
        bound = m * matrix_norm(M) * tensor_norm(u)
        assert np.all(lhs <= bound * (1 + 1e-12))
        assert np.all(matrix_norm(D) <= m * matrix_norm(M) * (1 + 1e-12))


@settings(max_examples=40, deadline=None)
@given(n=dims, seed=seeds, data=st.data(), inner=st.sampled_from(["hermitian", "bilinear"]))
def test_wedge_divide_recovers_factor(n, seed, data, inner):
    m = data.draw(st.integers(2, n))
    rng = np.random.default_rng(seed)
    vs = [cplx(rng, n) for _ in range(m - 1)]
    T = wedge_vectors(vs, n)
    w0 = cplx(rng, n)
    S = wedge_arrays(w0[None], 1, T[None], m - 1, n)[0]
    ortho = vs  # w is only fixed modulo span(vs); pin it orthogonal to them
    w = wedge_divide_arrays(S, T, m, ortho, n, inner=inner)
    assert np.allclose(wedge_arrays(w, 1, T, m - 1, n), S, atol=1e-10)
    form = (lambda a, b: a @ b.conj()) if inner == "hermitian" else (lambda a, b: a @ b)
    for v in vs:
        assert abs(form(w, v)) <= 1e-10 * np.abs(w).sum() * np.abs(v).sum()


def test_wedge_divide_right_side(rng):
    n = 4
    vs = [cplx(rng, n) for _ in range(2)]
    T = wedge_vectors(vs, n)
    w0 = cplx(rng, n)
    S = wedge_arrays(T, 2, w0, 1, n)
    w = wedge_divide_arrays(S, T, 3, vs, n, side="right")
    assert np.allclose(wedge_arrays(T, 2, w, 1, n), S)


def test_wedge_divide_detects_non_divisible(rng):
    n = 4
    t = cplx(rng, n)
    S = cplx(rng, dim(n, 2))  # generic 2-vector, not of the form w ^ t
    with pytest.raises(SolvabilityViolated):
        wedge_divide_arrays(S, t, 2, [t], n)


def test_tensor_type_operations(rng):
    e1, e3 = Tensor.basis(3, (1,)), Tensor.basis(3, (3,))
    e13 = e1 ^ e3
    assert e13[(1, 3)] == 1 and e13.m == 2
    assert np.allclose((e3 ^ e1).coeffs, -e13.coeffs)
    top = wedge(e13, Tensor.basis(3, (2,)))
    assert top.top() == -1
    with pytest.raises(ValueError):
        wedge(e13, e13)
    a, b = cplx(rng, 3), cplx(rng, 3)
    u = Tensor.from_vector(a)
    S = Tensor.from_vector(b) ^ u
    v = wedge_divide(S, u, [a])
    assert np.allclose((Tensor.from_vector(v) ^ u).coeffs, S.coeffs)
    _, s = complement_sign(MultiIndex((2,), 3), np.eye(3))
    assert s == -1


@pytest.mark.parametrize("scale", [1e-3, 0.2, 5.0, 80.0])
def test_batched_expm_matches_scipy(scale, rng):
    X = scale * cplx(rng, 30, 3, 3)
    E = expm_batched(X)
    ref = np.array([expm(x) for x in X])
    err = np.abs(E - ref).max(axis=(1, 2)) / np.abs(ref).max(axis=(1, 2))
    assert err.max() < 1e-11


def test_batched_matvec(rng):
    M, Y = cplx(rng, 50, 3, 3), cplx(rng, 50, 3)
    assert np.allclose(batched_matvec(M, Y), np.einsum("nij,nj->ni", M, Y))
