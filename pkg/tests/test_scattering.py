import numpy as np
import pytest

from weylsys.errors import ExcessiveSpread
from weylsys.scattering import (arc_limit, boundary_values, compare, connection_matrix,
                                det_spread, leading_modes, merge_sweeps, psi_matrix, rho_ladder,
                                scattering_matrix, sweep, unperturbed_connection)
from weylsys.system import SystemSpec
from weylsys.unperturbed import build_frame
from weylsys.volterra import default_grid

SWEEP_GRID = default_grid(X_max=20.0, n_uni=750)


def _on_ray(sectors, nu, r):
    return r * np.exp(1j * sectors[nu].theta_hi)


def test_rho_ladder():
    lad = rho_ladder()
    assert len(lad) == 11 and lad[0] == 0.05 and np.isclose(lad[-1], 51.2)
    assert np.allclose(lad[1:] / lad[:-1], 2.0)


@pytest.mark.parametrize("nu", range(6))
@pytest.mark.parametrize("r", [0.05, 1.0, 10.0])
def test_q_zero_connection_is_the_monodromy_formula(sectors, zero_frames, nu, r):
    rho = _on_ray(sectors, nu, r)
    smp = scattering_matrix(zero_frames, nu, rho)
    v0 = unperturbed_connection(zero_frames, nu, rho)
    assert np.abs(smp.v - v0).max() / np.abs(v0).max() < 1e-9
    assert smp.spread < 1e-9


@pytest.mark.parametrize("nu", [0, 3])
@pytest.mark.parametrize("r", [0.1, 5.0])
def test_eigenvector_scaling_does_not_move_v(ref_spec, sectors, zero_frames, nu, r):
    sg = SystemSpec(ref_spec.A, ref_spec.b, None, eigvec_scale=np.array([2.0, -0.5j, 3 + 1j]))
    fg = [build_frame(sg, s) for s in sectors]
    rho = _on_ray(sectors, nu, r)
    a = scattering_matrix(zero_frames, nu, rho)
    b = scattering_matrix(fg, nu, rho)
    assert np.abs(a.v - b.v).max() / np.abs(a.v).max() < 1e-10


@pytest.mark.parametrize("nu", [1, 4])
def test_perturbed_connection(frames, sectors, nu):
    for r in (0.2, 3.0):
        smp = scattering_matrix(frames, nu, _on_ray(sectors, nu, r))
        assert smp.spread < 1e-5
        # det Psi = det Pi in each sector
        ratio = sectors[(nu + 1) % 6].det_Pi / sectors[nu].det_Pi
        assert abs(smp.det - ratio) < 1e-8
        assert np.isfinite(smp.cond) and min(smp.margins) > 0


def test_det_psi_is_constant(frames):
    wf = psi_matrix(frames[0], 2.0 * frames[0].sector.mid)
    d, spread = det_spread(wf)
    assert abs(d - frames[0].sector.det_Pi) < 1e-10 and spread < 1e-10


def test_leading_modes_are_triangular(frames):
    wf = psi_matrix(frames[0], 2.0 * frames[0].sector.mid)
    W = leading_modes(wf, frames[0])
    # psi_k carries no mode i < k at the origin
    assert np.tril(W, -1).max() < 1e-4
    assert np.allclose(W.max(axis=1), 1)


def test_mismatched_frames_have_spread(frames, zero_frames, sectors):
    rho = _on_ray(sectors, 2, 1.0)
    minus, _ = boundary_values(frames, 2, rho)
    _, plus = boundary_values(zero_frames, 2, rho)
    with pytest.raises(ExcessiveSpread):
        connection_matrix(minus, plus)


@pytest.mark.parametrize("side", [0, 1])
def test_arc_limit_is_monotone(frames, sectors, side):
    rho = _on_ray(sectors, 0, 2.0)
    res = arc_limit(frames[side], rho)
    assert res["monotone"]
    d = np.array(res["distance"])
    assert np.all(np.abs(d[:-1] / d[1:] - 2) < 0.2)  # first order in the angle


@pytest.fixture(scope="module")
def small_sweeps(ref_spec, zero_spec, sectors, frames, zero_frames):
    mod = np.array([0.5, 2.0, 8.0])
    a = [sweep(ref_spec, sectors, mod, SWEEP_GRID, frames, rays=[nu]) for nu in (0, 3)]
    b = sweep(ref_spec, sectors, mod, SWEEP_GRID, [build_frame(ref_spec, s) for s in sectors],
              rays=[0, 3])
    z = sweep(zero_spec, sectors, mod, SWEEP_GRID, zero_frames, rays=[0, 3])
    return merge_sweeps(a), b, z


def test_merged_sweep(small_sweeps):
    sw, _, _ = small_sweeps
    assert [d.ray for d in sw.rays] == [0, 3]
    assert set(sw.boundary) == {(nu, i) for nu in (0, 3) for i in range(3)}
    assert max(d.spread for d in sw.rays) < 1e-5


def test_compare_identical_potential(small_sweeps):
    sw, again, _ = small_sweeps
    rep = compare(sw, again)
    assert rep["max_v_rel_diff"] < 1e-10 and not rep["witness"]
    assert rep["mapping"].max_P_minus_I < 1e-8
    assert rep["mapping"].max_jump < 1e-8


def test_compare_detects_a_different_potential(small_sweeps):
    sw, _, zero = small_sweeps
    rep = compare(sw, zero)
    assert rep["witness"]
    assert rep["mapping"].max_P_minus_I > 1e-3
