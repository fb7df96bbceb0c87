import numpy as np
import pytest
from oracles import shooting_psi

from conftest import rel_cols
from weylsys.exterior import tensor_norm, wedge_arrays
from weylsys.unperturbed import build_frame, eval_at_rho
from weylsys.volterra import RhoContext, default_grid, solve_all
from weylsys.weyl import (arc_increments, build_weyl, decompose, delta, gamma_hat, psi_residuals,
                          psi_small_rho, uniqueness_check, weyl_solution)

GRID = default_grid()


@pytest.fixture(scope="module")
def weyl_frames(frames):
    return {nu: build_weyl(frames[nu], 1.0 * frames[nu].sector.mid, GRID) for nu in (0, 2, 4)}


def test_psi_matches_shooting(ref_spec, frames, weyl_frames):
    wf = weyl_frames[2]
    x = GRID[(GRID >= 0.5) & (GRID <= 2.0)][::25]
    sel = np.isin(GRID, x)
    P = wf.Psi()[sel]
    for k in (1, 2, 3):
        ref = shooting_psi(ref_spec, frames[2].sector, wf.rho, k, x)
        assert rel_cols(P[:, :, k - 1:k], ref[:, :, None]) < 1e-4


@pytest.mark.parametrize("nu", [0, 2, 4])
def test_decomposition_invariants(weyl_frames, nu):
    d = weyl_frames[nu].diagnostics["decomposition"]
    assert max(d["T_reconstruction"] + d["F_reconstruction"]) <= 1e-8
    assert max(d["T_annihilation"], d["F_annihilation"]) <= 1e-8


@pytest.mark.parametrize("nu", [0, 2, 4])
def test_delta_is_constant_in_x(weyl_frames, nu):
    assert weyl_frames[nu].delta_spread.max() <= 1e-5
    assert abs(weyl_frames[nu].delta[0] - 1) < 1e-10


def test_chain_orthogonality(weyl_frames):
    wf = weyl_frames[0]
    for chain in (wf.v, wf.w):
        V = chain.vectors
        for i in range(3):
            for j in range(i + 1, 3):
                ip = np.einsum("ni,ni->n", V[i], V[j].conj())
                nrm = np.linalg.norm(V[i], axis=1) * np.linalg.norm(V[j], axis=1)
                assert (np.abs(ip) / nrm).max() < 1e-9


def test_bilinear_chain_is_orthogonal_in_its_form(frames):
    fr = frames[2]
    ctx = RhoContext(fr, fr.sector.mid, GRID)
    T, F = solve_all(ctx)
    chain = decompose("F", F, inner="bilinear")
    V = chain.vectors
    ip = np.einsum("ni,ni->n", V[0], V[1])
    assert (np.abs(ip) / (np.abs(V[0]).sum(1) * np.abs(V[1]).sum(1))).max() < 1e-9


def test_defining_relations_and_both_expansions(weyl_frames):
    for wf in weyl_frames.values():
        for rel in wf.diagnostics["relations"]:
            assert rel["constructions_gap"] < 1e-8
            assert rel["relation_F"] < 1e-8 and rel["relation_T"] < 1e-8


def test_psi_solves_the_system(ref_spec, weyl_frames):
    for wf in weyl_frames.values():
        assert max(psi_residuals(wf, ref_spec)) < 1e-5


def test_boundary_conditions(ref_spec, weyl_frames):
    for wf in weyl_frames.values():
        asy = wf.diagnostics["asymptotics"]
        assert max(asy["infinity"]) < 1e-3
        assert max(asy["origin_scaled_max"]) < 100
        g = wf.diagnostics["g"]
        assert g["g_n_vs_h_n"] < 1e-6 and max(g["span_residual"]) < 1e-6


@pytest.mark.parametrize("k", [1, 2, 3])
def test_uniqueness_cross_check(frames, weyl_frames, k):
    fr, wf = frames[0], weyl_frames[0]
    assert not uniqueness_check(wf, k, fr)["violated"]
    for j in (1, 2, 3):
        if j == k:
            continue
        r = uniqueness_check(wf, k, fr, j)
        assert r["violated"]
        # a faster-growing mode at the origin (j < k) or at infinity (j > k)
        assert (not r["origin_ok"]) if j < k else (not r["infinity_ok"])


def test_hermitian_and_bilinear_agree(frames, weyl_frames):
    wf = weyl_frames[4]
    wb = build_weyl(frames[4], wf.rho, GRID, inner="bilinear", residuals=False)
    assert rel_cols(wb.psihat, wf.psihat) < 1e-8
    assert np.allclose(wb.delta, wf.delta, rtol=1e-10)


def test_e_gauge_does_not_reach_psi(ref_spec, sectors, frames, weyl_frames):
    G = np.array([[1, 0.7 - 0.2j, -1.3], [0, 1, 0.4 + 1j], [0, 0, 1]])
    fg = build_frame(ref_spec, sectors[2], e_gauge=G)
    wf = weyl_frames[2]
    wg = build_weyl(fg, wf.rho, GRID, residuals=False)
    assert rel_cols(wg.psihat, wf.psihat) < 1e-8


def test_q_zero_gives_psi0_and_delta0(zero_frames):
    fr = zero_frames[3]
    rho = 2.0 * fr.sector.mid
    wf = build_weyl(fr, rho, GRID, residuals=False)
    rf = eval_at_rho(fr, rho, GRID)
    assert rel_cols(wf.psihat, rf.Psi0hat) < 1e-7
    assert np.allclose(wf.delta, fr.delta0, rtol=1e-9)


def test_delta_is_a_wronskian(weyl_frames):
    """Delta_k = |F_{k-1} ^ T_k| equals det(psi_1..psi_{k-1}, w_k..w_n) for the chains."""
    wf = weyl_frames[2]
    n = wf.n
    for k in range(2, n + 1):
        _, spread, vals = delta(k, wf.F, wf.T)
        M = np.concatenate([wf.psihat[:, :, : k - 1],
                            np.stack([wf.w[j] for j in range(k, n + 1)], -1)], axis=-1)
        d = np.linalg.det(M)
        assert np.allclose(d, vals, rtol=1e-8)


def test_weyl_solution_routes(frames):
    fr = frames[0]
    ctx = RhoContext(fr, 3.0 * fr.sector.mid, GRID)
    T, F = solve_all(ctx)
    W, V = decompose("T", T), decompose("F", F)
    for k in (1, 2, 3):
        pg, pb, gam, bet, diag = weyl_solution(k, W, V, T, F)
        assert diag["constructions_gap"] < 1e-8
        Fm = F[k - 2].Yhat if k > 1 else np.ones((len(GRID), 1))
        lhs = wedge_arrays(Fm, k - 1, pb, 1, 3)
        assert (tensor_norm(lhs - F[k - 1].Yhat) / tensor_norm(F[k - 1].Yhat)).max() < 1e-8


def test_gamma_hat_at_q_zero(zero_frames):
    """gamma^_kk is the pi_k entry of psi0^_k; its distance from 1 is O(1/rho)."""
    fr = zero_frames[1]
    dev = []
    for r in (20.0, 40.0):
        rho = r * fr.sector.mid
        wf = build_weyl(fr, rho, GRID, residuals=False)
        i = int(np.argmin(np.abs(GRID - 1.0)))
        rf = eval_at_rho(fr, rho, GRID[i:i + 1])
        g = np.array([gamma_hat(wf, k, 1.0)[k - 1] for k in (1, 2, 3)])
        ref = np.array([rf.Psi0hat[0, fr.sector.perm[k], k] for k in range(3)])
        assert np.allclose(g, ref, rtol=1e-7)
        dev.append(np.abs(g - 1).max())
    assert 1.6 < dev[0] / dev[1] < 2.5


def test_small_rho_increments_follow_the_leading_correction(zero_frames):
    """With q = 0, rho^-mu_2 psi_2 tends to its limit like rho^(mu_3 - mu_2)."""
    fr = zero_frames[1]
    mu = fr.spec.mu
    radii = tuple(1e-2 * 0.5 ** np.arange(5))
    inc = psi_small_rho(fr, radii=radii, grid=GRID)["increments"]["psi"][1]
    ratios = np.array(inc[1:]) / np.array(inc[:-1])
    assert np.all(np.abs(ratios - 2 ** -(mu[2] - mu[1]).real) < 0.01)


def test_arc_increments_share_one_scale():
    # a sequence shrinking in size with a shrinking step: monotone in absolute terms
    s = [np.array([1.0 + 2.0 ** -j]) for j in range(5)]
    inc = arc_increments(s)
    assert np.all(np.diff(inc) < 0)
    assert np.isclose(inc[0], 0.5 / (1 + 2.0 ** -4))
