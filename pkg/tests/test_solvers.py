import json
import math
from pathlib import Path

import numpy as np
import pytest

from semiclassical import kernels as K, measures as M, solvers as S
from semiclassical.errors import ConstraintError, DomainError, StiffFailureError

DATA = Path(__file__).parent / "data"

# small quantum grid for unit tests (x_max = 6.75); the reference grid used by
# the acceptance tests is n = 28, h = 0.75
N_SMALL, H_SMALL, EPS_SMALL = 10, 0.75, 0.5


@pytest.fixture(scope="module")
def small(hat, bump):
    def make(lam, atoms=(), f=None):
        q = K.QuantumProfile(hat, lam, EPS_SMALL)
        F = S.uniform_measure(N_SMALL, H_SMALL, f or (lambda x: bump(x)), atoms)
        return q, F
    return make


def test_solve_config_validation():
    with pytest.raises(DomainError):
        S.SolveConfig(t_end=0.0)
    with pytest.raises(DomainError):
        S.SolveConfig(dt_init=1e-6, dt_min=1e-3)
    with pytest.raises(DomainError):
        S.SolveConfig(safety=1.5)
    with pytest.raises(DomainError):
        S.SolveConfig(t_end=1.0, save_at=(0.5, 2.0))
    assert S.SolveConfig(save_at=(0.5, 0.25, 0.5)).save_at == (0.25, 0.5)


def test_fv_grid_exact_moments():
    x, w = S.fv_grid(16, 8.0)
    assert math.fsum(w) == pytest.approx((2 / 3) * 8.0 ** 1.5, rel=1e-14)
    assert math.fsum(w * x) == pytest.approx((2 / 5) * 8.0 ** 2.5, rel=1e-14)


def test_grid_checks():
    with pytest.raises(DomainError):
        S.solve_fpl(M.RadialMeasure(np.linspace(0, 1, 5), np.ones(5)))
    with pytest.raises(DomainError):
        S.solve_fpl(S.uniform_measure(8, 0.5, np.exp), scheme="spectral")
    with pytest.raises(DomainError):
        S.LandauFV(8, 4.0, flux="upwind")


# -- Fokker-Planck-Landau, strong form ---------------------------------------

@pytest.mark.parametrize("flux", ["central", "entropic"])
def test_fpl_rhs_zero_and_telescoping(bump, flux):
    F0 = S.fv_measure(64, 8.0, lambda x: 0 * x)
    assert np.all(S.fpl_strong_rhs(F0, flux) == 0.0)
    F = S.fv_measure(64, 8.0, lambda x: bump(x) + 1e-3 * np.exp(-x))
    r = S.fpl_strong_rhs(F, flux)
    w, x = F.quad_weights, F.grid
    scale = math.fsum(np.abs(r * w))
    assert abs(math.fsum(r * w)) < 1e-12 * scale
    assert abs(math.fsum(r * w * x)) < 1e-12 * math.fsum(np.abs(r * w * x))


def test_fpl_rhs_maxwellian_second_order():
    errs = []
    for n in (128, 256):
        F = S.fv_measure(n, 32.0, lambda x: 2.0 * np.exp(-1.5 * x))
        errs.append(np.max(np.abs(S.fpl_strong_rhs(F))))
    assert errs[0] < 0.1
    assert errs[0] / errs[1] > 2.0
    # the entropic flux keeps Maxwellians exactly
    F = S.fv_measure(128, 32.0, lambda x: 2.0 * np.exp(-1.5 * x))
    assert np.max(np.abs(S.fpl_strong_rhs(F, "entropic"))) < 1e-12


def test_fpl_rejects_atoms():
    F = S.fv_measure(16, 8.0, np.exp)
    G = M.RadialMeasure(F.grid, F.density, [(1.0, 1.0)], F.quad_weights)
    with pytest.raises(DomainError):
        S.fpl_strong_rhs(G)
    with pytest.raises(DomainError):
        S.solve_fpl(G)


def test_fpl_bump_conserves_and_dissipates(bump):
    tr = S.solve_fpl(S.fv_measure(128, 16.0, lambda x: bump(x)), S.SolveConfig(t_end=0.5))
    assert np.max(tr.column("drift")) < 1e-13
    assert np.max(np.diff(tr.column("entropy"))) <= 1e-6
    assert np.min(tr.column("min_f")) >= 0.0
    assert np.all(np.diff(tr.times) > 0)
    tr_off = S.solve_fpl(S.fv_measure(128, 16.0, lambda x: bump(x)),
                         S.SolveConfig(t_end=0.5, projection=False))
    assert np.max(tr_off.column("drift")) < 1e-10


def test_fpl_entropic_flux_keeps_maxwellian():
    f0 = S.fv_measure(64, 24.0, lambda x: np.exp(-x))
    assert np.max(np.abs(S.fpl_strong_rhs(f0, "entropic"))) < 1e-12
    # round-off modes grow until the step-size control (atol 1e-10) sees them
    tr = S.solve_fpl(f0, S.SolveConfig(t_end=0.5), flux="entropic")
    assert np.max(np.abs(tr.states[-1].density - f0.density)) < 1e-6


def test_fpl_galerkin_scheme_conserves(bump):
    f0 = S.uniform_measure(24, 0.5, lambda x: bump(x))
    tr = S.solve_fpl(f0, S.SolveConfig(t_end=0.25), scheme="galerkin")
    assert np.max(tr.column("drift")) < 1e-13
    assert np.max(tr.column("correction")) < 1e-5


def test_save_at_times_are_hit(bump):
    cfg = S.SolveConfig(t_end=0.5, save_at=(0.1, 0.2, 0.3))
    tr = S.solve_fpl(S.fv_measure(32, 8.0, lambda x: bump(x)), cfg)
    for s in (0.1, 0.2, 0.3, 0.5):
        assert s in tr.times


# -- weak consistency ----------------------------------------------------------

def test_weak_consistency_trivial_cases(bump):
    zero = S.solve_fpl(S.fv_measure(32, 8.0, lambda x: 0 * x), S.SolveConfig(t_end=0.05))
    assert S.weak_consistency_check(zero, bump) == 0.0
    tr = S.solve_fpl(S.fv_measure(64, 16.0, lambda x: bump(x)), S.SolveConfig(t_end=0.1))
    one = K.TestFunction.cutoff_polynomial([1.0], 30.0, 2.0)
    assert S.weak_consistency_check(tr, one) < 1e-9
    with pytest.raises(DomainError):
        S.weak_consistency_check(S.Trajectory("fpl", [0.0], [tr.states[0]], [{}]), bump)
    with pytest.raises(DomainError):
        S.weak_consistency_check(tr, bump, model="boltzmann")


def test_weak_consistency_fpl_maxwellian(bump):
    defects = []
    for n in (128, 256):
        tr = S.solve_fpl(S.fv_measure(n, 32.0, lambda x: np.exp(-x)), S.SolveConfig(t_end=0.2))
        defects.append(S.weak_consistency_check(tr, bump, stride=25))
    assert defects[1] < 0.05
    assert defects[0] / defects[1] > 3.0


# -- quantum Galerkin ----------------------------------------------------------

def test_zero_state_is_stationary(small):
    q, _ = small(-1)
    F0 = S.uniform_measure(N_SMALL, H_SMALL, lambda x: 0 * x)
    assert np.all(S.assemble_quantum_rhs(q, F0) == 0.0)
    tr = S.solve_quantum(q, F0, S.SolveConfig(t_end=0.2))
    assert all(np.all(s.density == 0.0) for s in tr.states)
    assert S.weak_consistency_check(tr, K.TestFunction.bump(1.5, 1.0), model=q) == 0.0


@pytest.mark.parametrize("lam", [-1, 0, 1])
def test_quantum_rhs_conserves(small, lam):
    q, F = small(lam)
    r = S.assemble_quantum_rhs(q, F)
    w, x = F.quad_weights, F.grid
    scale = math.fsum(np.abs(w * r))
    assert abs(math.fsum(w * r)) < 1e-10 * scale
    assert abs(math.fsum(w * x * r)) < 1e-10 * math.fsum(np.abs(w * x * r))


def test_quantum_rhs_matches_weak_forms(small):
    q, F = small(-1)
    r = S.assemble_quantum_rhs(q, F)
    for i in (1, 3):
        phi = K.TestFunction.bspline(i, H_SMALL, N_SMALL)
        Q = M.quadratic_form(q, phi, F) + M.cubic_form(q, phi, F)
        assert F.quad_weights[i] * r[i] == pytest.approx(Q, rel=1e-6, abs=1e-8)


def test_quantum_rhs_regression_fixture(qfd, bump):
    ref = json.loads((DATA / "fdot_fd_eps025.json").read_text())
    F = S.uniform_measure(ref["n"], ref["h"], lambda x: bump(x))
    r = S.assemble_quantum_rhs(qfd, F)
    np.testing.assert_allclose(r, ref["fdot"], rtol=1e-9, atol=1e-12)
    # cross-check one lumped row against the weak-form functionals
    phi = K.TestFunction.bspline(2, ref["h"], ref["n"])
    Q = M.quadratic_form(qfd, phi, F) + M.cubic_form(qfd, phi, F)
    assert F.quad_weights[2] * ref["fdot"][2] == pytest.approx(Q, rel=1e-9)


@pytest.mark.parametrize("lam", [-1, 0, 1])
def test_quantum_solve_conserves_with_projection(small, lam):
    q, F = small(lam)
    tr = S.solve_quantum(q, F, S.SolveConfig(t_end=0.25))
    assert np.max(tr.column("drift")) < 1e-13
    assert np.min(tr.column("min_f")) >= 0.0
    assert np.max(np.diff(tr.column("entropy"))) <= 1e-6


def test_fd_bound_never_exceeded(hat):
    q = K.QuantumProfile(hat, -1, EPS_SMALL)
    cap = EPS_SMALL ** -3
    F = S.uniform_measure(N_SMALL, H_SMALL, lambda x: 0.5 * cap * np.exp(-2 * (x - 1.5) ** 2))
    tr = S.solve_quantum(q, F, S.SolveConfig(t_end=0.25))
    assert np.max(tr.column("max_f")) <= cap
    assert np.min(tr.column("min_f")) >= 0.0
    # nearly saturated: the lumped scheme drives node 0 towards the cap; the
    # bound is never clipped, so the run stops and every stored state is valid
    F = S.uniform_measure(N_SMALL, H_SMALL, lambda x: 0.98 * cap * np.exp(-2 * (x - 1.5) ** 2))
    with pytest.raises(StiffFailureError) as info:
        S.solve_quantum(q, F, S.SolveConfig(t_end=0.25))
    partial = info.value.trajectory
    assert len(partial.states) > 1
    assert all(np.all((s.density >= 0) & (s.density <= cap)) for s in partial.states)
    bad = S.uniform_measure(N_SMALL, H_SMALL, lambda x: 1.01 * cap * np.exp(-x))
    with pytest.raises(ConstraintError):
        S.solve_quantum(q, bad)


def test_solve_quantum_rejects_atoms(small):
    q, _ = small(-1)
    with pytest.raises(DomainError):
        S.solve_quantum(q, S.uniform_measure(N_SMALL, H_SMALL, lambda x: 0 * x, [(1.5, 1.0)]))
    with pytest.raises(DomainError):
        S.solve_bose_measure(q, S.uniform_measure(N_SMALL, H_SMALL, lambda x: 0 * x, [(1.5, 1.0)]))


def test_bose_measure_density_only_matches_solve_quantum(small):
    q, F = small(1)
    cfg = S.SolveConfig(t_end=0.1)
    a = S.solve_quantum(q, F, cfg)
    b = S.solve_bose_measure(q, F, cfg)
    assert a.times == b.times
    assert all(np.array_equal(s.density, t.density) for s, t in zip(a.states, b.states))


def test_bose_single_atom_at_origin_is_stationary(small):
    q, F = small(1, atoms=[(0.0, 0.5)], f=lambda x: 0 * x)
    assert np.all(S.assemble_quantum_rhs(q, F) == 0.0)
    tr = S.solve_bose_measure(q, F, S.SolveConfig(t_end=0.2))
    assert tr.states[-1].atom_masses[0] == 0.5
    assert np.all(tr.states[-1].density == 0.0)


def test_bose_atom_plus_bump_conserves(small):
    q, F = small(1, atoms=[(0.0, 0.3)])
    tr = S.solve_bose_measure(q, F, S.SolveConfig(t_end=0.5))
    assert np.max(tr.column("drift")) < 1e-13
    assert tr.states[-1].atom_masses[0] > 0.0
    # node 0 was absorbed into the atom and stays empty
    assert all(s.density[0] == 0.0 for s in tr.states)
    m0, e0 = M.mass_energy(F)
    m1, e1 = M.mass_energy(tr.states[-1])
    assert m1 == pytest.approx(m0, rel=1e-13)
    assert e1 == pytest.approx(e0, rel=1e-13)


def test_bose_interior_atom_evolves(small):
    q, F = small(1, atoms=[(1.2, 0.3)])
    tr = S.solve_bose_measure(q, F, S.SolveConfig(t_end=0.1))
    assert np.max(tr.column("drift")) < 1e-13
    assert tr.states[-1].atom_masses[0] != 0.3


# -- stepper -------------------------------------------------------------------

def test_step_reversal_and_determinism(small):
    q, F = small(-1)
    system = S.QuantumGalerkin(q, N_SMALL, H_SMALL)
    again = S.QuantumGalerkin(q, N_SMALL, H_SMALL, use_cache=False)
    y0 = F.density.copy()
    # fresh assembly reproduces the right side bit for bit
    assert np.array_equal(system.rhs(y0), again.rhs(y0))
    norm = np.max(np.abs(y0))
    gaps = []
    for h in (1e-2, 5e-3):
        y1, _, _ = S.bs23_step(system.rhs, y0, h)
        y2, _, _ = S.bs23_step(lambda y: -system.rhs(y), y1, h)
        gaps.append(np.max(np.abs(y2 - y0)))
    # the reversed step undoes the forward one up to the local error, O(h^4)
    assert gaps[1] < gaps[0] / 8
    # a linear right side is undone to rounding
    A = np.array([[0.0, 1.0], [-1.0, 0.0]])
    z0 = np.array([1.0, 0.5])
    z1, _, _ = S.bs23_step(lambda z: A @ z, z0, 1e-7)
    z2, _, _ = S.bs23_step(lambda z: -(A @ z), z1, 1e-7)
    assert np.max(np.abs(z2 - z0)) <= 10 * np.finfo(float).eps * np.max(np.abs(z0))
    assert norm > 0


# -- trajectory output -----------------------------------------------------------

def test_trajectory_serialization(bump):
    tr = S.solve_fpl(S.fv_measure(16, 8.0, lambda x: bump(x)), S.SolveConfig(t_end=0.05))
    lines = tr.jsonl().splitlines()
    assert len(lines) == len(tr.times)
    rec = json.loads(lines[-1])
    assert rec["t"] == tr.times[-1]
    back = M.RadialMeasure.from_dict(rec["state"])
    assert np.array_equal(back.density, tr.states[-1].density)
    csv_lines = tr.summary_csv().splitlines()
    assert csv_lines[0] == "t,mass,energy,entropy,drift,dt"
    assert len(csv_lines) == len(tr.times) + 1
    assert tr.jsonl() == tr.jsonl()
    assert np.all(tr.column("momentum") == 0.0)
