import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weylsys.config import config_from_dict, parse_config
from weylsys.errors import (AssumptionViolated, DegenerateSectorization, ParseError,
                            ValidationError)
from weylsys.potentials import (BumpPotential, ExpDecayPotential, GridPotential, SumPotential,
                                ZeroPotential, conjugated, scaled)
from weylsys.sectors import compute_sectors, ray_angles, sector_of
from weylsys.system import SystemSpec, validate_assumption1

A_REF = np.array([[0, 1, 0], [0.13, 0, 1], [-0.012, 0, 0]], dtype=complex)
B_REF = np.array([1, 1j, -1 - 1j])


def test_reference_passes_every_clause(ref_spec):
    rep = validate_assumption1(ref_spec)
    assert rep.passed and len(rep.clauses) >= 14
    assert all(c["passed"] for c in rep.as_dict().values())


def test_eigen_normalization(ref_spec):
    mu, H = ref_spec.mu, ref_spec.H
    assert np.all(np.diff(mu.real) > 0)
    assert np.isclose(np.linalg.det(H), 1.0)
    assert np.allclose(A_REF @ H, H * mu)


@pytest.mark.parametrize("b, clause", [
    (np.array([1, 1j, -1 - 1j + 0.01]), "sum of B diagonal"),
    (np.array([1, -1, 0]), "B diagonal nonzero"),
])
def test_bad_b_names_clause(b, clause):
    with pytest.raises(AssumptionViolated) as ei:
        validate_assumption1(SystemSpec(A_REF, b))
    assert ei.value.clause == clause


def test_diagonal_of_A_and_q_rejected():
    A = A_REF.copy()
    A[0, 0] = 0.1
    rep = validate_assumption1(SystemSpec(A, B_REF), raise_on_fail=False)
    assert [c.name for c in rep.failing()][0] == "A off-diagonal"
    with pytest.raises(ValidationError):
        ExpDecayPotential(np.eye(3), 1.0)


def test_integer_eigenvalue_gap_rejected():
    # companion matrix with roots -1, 0, 1 (integer differences)
    A = np.array([[0, 1, 0], [0, 0, 1], [0, 1, 0]], dtype=complex)
    rep = validate_assumption1(SystemSpec(A, B_REF), raise_on_fail=False)
    assert "eigenvalue differences not integers" in [c.name for c in rep.failing()]


def test_reference_sectors(sectors):
    assert len(sectors) == 6
    total = sum(s.opening for s in sectors)
    assert np.isclose(total, 2 * np.pi)
    for a, c in zip(sectors, sectors[1:] + sectors[:1]):
        assert a.perm != c.perm
        assert np.isclose(np.mod(c.theta_lo - a.theta_hi, 2 * np.pi), 0) or \
            np.isclose(np.mod(c.theta_lo - a.theta_hi, 2 * np.pi), 2 * np.pi)
    for s in sectors:
        assert abs(s.det_Pi) == 1
        assert np.isclose(s.R.sum(), 0)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 5), st.floats(0.02, 0.98))
def test_ordering_strict_inside_sector(nu, frac):
    s = compute_sectors(B_REF)[nu]
    th = s.theta_lo + frac * s.opening
    vals = (s.R * np.exp(1j * th)).real
    assert np.all(np.diff(vals) > 0)
    assert sector_of(compute_sectors(B_REF), np.exp(1j * th)).index == nu


@settings(max_examples=30, deadline=None)
@given(st.floats(-np.pi, np.pi), st.floats(0.3, 3.0))
def test_sector_count_is_invariant_under_rotation(phi, scale):
    b = scale * np.exp(1j * phi) * B_REF
    secs = compute_sectors(b)
    assert len(secs) == 6
    assert np.isclose(sum(s.opening for s in secs), 2 * np.pi)


def test_parallel_differences_merge_rays():
    # b on a line: every difference is parallel, so only two rays survive
    b = np.array([-1.0, 0.2, 0.8])
    angles, _, merged = ray_angles(b)
    assert len(angles) == 2 and merged
    with pytest.raises(ValidationError):
        compute_sectors(b)


def test_nearly_coincident_rays_raise():
    # b_1 - b_3 and b_2 - b_3 are antiparallel up to 1e-8 rad
    b = np.array([1, np.exp(1j * (np.pi - 1e-8)), 0])
    with pytest.raises(DegenerateSectorization):
        ray_angles(b - b.mean(), ang_tol=1e-6)


def test_potential_masses():
    C = np.array([[0, 1, 0.5j], [0.3, 0, 1], [1, -0.5, 0]])
    q = ExpDecayPotential(C, 2.0)
    x = np.linspace(0, 30, 300001)
    nq = np.abs(q(x)).sum(axis=-2).max(axis=-1)
    assert np.isclose(np.trapezoid(nq, x), q.l1_mass(), rtol=1e-6)
    assert np.isclose(q.tail_mass(3.0), q.l1_mass() * np.exp(-6.0))
    assert np.allclose(q.derivative(x[:5]), -2.0 * q(x[:5]))
    bump = BumpPotential(1.5, 1.0, C)
    nb = np.abs(bump(x)).sum(axis=-2).max(axis=-1)
    assert np.isclose(np.trapezoid(nb, x), bump.l1_mass(), rtol=1e-5)
    assert bump.tail_mass(2.5) == 0.0
    assert np.isclose(scaled(bump, 0.5).l1_mass(), 0.5 * bump.l1_mass())
    s = SumPotential((q, bump))
    assert np.allclose(s(x[:9]), q(x[:9]) + bump(x[:9]))
    assert ZeroPotential(3).is_zero and not s.is_zero


def test_grid_potential_and_conjugation(rng):
    xs = np.linspace(0, 5, 41)
    vals = rng.standard_normal((41, 3, 3)) * (1 - np.eye(3))
    g = GridPotential(xs, vals)
    assert np.allclose(g(xs), vals)
    assert np.allclose(g(np.array([6.0])), 0)
    with pytest.raises(ValidationError):
        GridPotential(xs, vals, bounds=(1e-3, np.inf))
    D = np.array([1.0, 2.0j, -0.5])
    cq = conjugated(g, D)
    x = np.array([0.3, 1.7])
    assert np.allclose(cq(x), np.diag(D) @ g(x) @ np.diag(1 / D))


def test_config_roundtrip(ref_config):
    again = config_from_dict(ref_config.to_dict())
    assert again.hash() == ref_config.hash()
    assert np.isclose(ref_config.q.l1_mass(), 0.1)
    assert np.allclose(ref_config.rho.moduli(), 0.05 * 2.0 ** np.arange(11))
    assert ref_config.q.tail_mass(ref_config.grid.X_max) < 1e-8


def test_config_errors_carry_location():
    text = "n: 3\nA: [[0,1,0],[0.13,0,1],[-0.012,0,0]]\nb: [1, [0,1], [-1,-1]]\n" \
           "grid:\n  n_geo: many\n"
    with pytest.raises(ParseError) as ei:
        parse_config(text)
    assert ei.value.context.get("line") == 5
    with pytest.raises(ParseError):
        parse_config("n: 3\nA: [\n")
    with pytest.raises(ValidationError) as ei:
        parse_config("n: 3\nA: [[0,1,0],[0.13,0,1],[-0.012,0,0]]\nb: [1, [0,1], [-1,-1]]\n"
                     "q: {kind: exp_decay, d: 0, c: [[0,1,0],[0,0,1],[1,0,0]]}\n")
    assert ei.value.context.get("field") == "q"
    with pytest.raises(AssumptionViolated) as ei:
        parse_config("A: [[0,1,0],[0.13,0,1],[-0.012,0,0]]\nb: [1, [0,1], [-1,-0.99]]\n")
    assert "sum of B diagonal" in str(ei.value)
