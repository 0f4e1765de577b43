"""Acceptance criteria, one test each.

The quantum reference grid is ``x_i = 0.75 i``, ``i < 28`` (``X_max = 21``)
with the normalized Gaussian profile and ``eps = 1/4``; the FPL reference is
the finite-volume scheme with ``N = 256`` cells on ``[0, 32]``.
"""

import json
import math
import time

import numpy as np
import pytest
from scipy import integrate

from semiclassical import cli, kernels as K, limits as L, measures as M, oracles as O
from semiclassical import potential as P, solvers as S

REF_N, REF_H, REF_EPS = 28, 0.75, 0.25


@pytest.fixture(scope="module")
def ref_bump():
    return K.TestFunction.bump(1.5, 1.0)


@pytest.fixture(scope="module")
def ref_runs(hat, ref_bump):
    """Reference solves over [0, 1] for every model."""
    f0 = S.uniform_measure(REF_N, REF_H, lambda x: ref_bump(x))
    runs = {}
    for name, lam in (("fd", -1), ("mb", 0), ("be", 1)):
        runs[name] = S.solve_quantum(K.QuantumProfile(hat, lam, REF_EPS), f0, S.SolveConfig(t_end=1.0))
    runs["fpl"] = S.solve_fpl(S.fv_measure(256, 32.0, lambda x: ref_bump(x)), S.SolveConfig(t_end=1.0))
    # a denser Fermi-Dirac state (half the bound) for the hard-bound check
    dense = K.TestFunction.bump(1.5, 1.0, 0.5 * REF_EPS ** -3)
    runs["fd_dense"] = S.solve_quantum(K.QuantumProfile(hat, -1, REF_EPS),
                                       S.uniform_measure(REF_N, REF_H, lambda x: dense(x)),
                                       S.SolveConfig(t_end=1.0))
    return runs


# 1 -------------------------------------------------------------------------------

def test_01_kernel_min_identity():
    t0 = time.perf_counter()
    const = K.QuantumProfile(P.constant(1.0), 0, 1.0)
    grid = (0.1, 0.5, 1.0, 2.0, 4.0)
    checked = 0
    for x in grid:
        for y in grid:
            for z in grid:
                if x > y + z:
                    continue
                # lambda = 0 with a constant profile doubles the square: halve it
                got = 0.5 * K.w_kernel(const, x, y, z)
                assert got == pytest.approx(O.w_constant_profile_oracle(x, y, z), rel=1e-6)
                checked += 1
    assert checked == 98  # admissible points of the 5^3 grid
    assert time.perf_counter() - t0 <= 60.0


# 2 -------------------------------------------------------------------------------

def test_02_sphere_closed_forms_vs_monte_carlo():
    t0 = time.perf_counter()
    rng = np.random.default_rng(20240611)
    for k in range(12):
        y, z = rng.uniform(0.2, 5.0, 2)
        if abs(y - z) < 0.5:
            z = y + 0.5 + rng.uniform(0.0, 2.0)
        alpha = rng.uniform(-0.9, 0.9)
        weighted = bool(k % 2)
        ref = O.sphere_inv_alpha_weighted(y, z, alpha) if weighted else O.sphere_inv_alpha(y, z, alpha)
        est, se = O.mc_sphere_integral(y, z, alpha, weighted, O.SphereMCConfig(1_000_000, 1000 + k))
        assert abs(est - ref) <= 3 * se, (k, y, z, alpha, weighted)
    # at alpha = 0 the general forms collapse to the simple ones
    for y, z in ((1.0, 4.0), (0.3, 2.5), (3.0, 0.7), (2.0, 2.1)):
        m = max(y, z)
        assert O._f1(y, z, 0.0) == pytest.approx(4 * math.pi ** 2 * math.sqrt(2) / (math.sqrt(m) * abs(y - z)),
                                                 rel=1e-12)
        assert O._f2(y, z, 0.0) == pytest.approx(8 * math.pi ** 2 * math.sqrt(2) / (3 * m ** 1.5), rel=1e-12)
    assert time.perf_counter() - t0 <= 120.0


# 3 -------------------------------------------------------------------------------

def test_03_potential_constants(hat):
    assert P.diffusion_coefficient(hat) == pytest.approx(1.0, abs=1e-8)
    assert P.sup_linear_bound(hat) == pytest.approx(math.exp(-0.5) / math.sqrt(math.pi), abs=1e-6)
    eps = [2.0 ** -k for k in range(7)]
    cap = 1 / (2 * math.pi) + 1e-9
    seqs = [[P.tail_constant(hat, e) for e in eps]]
    seqs += [[P.moment_constant(hat, e, a) for e in eps] for a in (0.5, 1.0, 2.0)]
    for seq in seqs:
        assert all(0.0 <= v <= cap for v in seq)
        assert all(b <= a + 1e-9 for a, b in zip(seq, seq[1:]))
        assert seq[-1] < seq[0]


# 4 -------------------------------------------------------------------------------

@pytest.mark.parametrize("rho", [0.5, 1.0, 2.0, 4.0])
def test_04_potential_reconstruction(rho):
    # oracle: long-range sine transform by adaptive Gauss-Kronrod
    val, _ = integrate.quad(lambda r: r * math.exp(-r * r / 2) * math.sin(rho * r), 0, 60,
                            limit=500, epsabs=1e-14, epsrel=1e-13)
    oracle = val / (2 * math.pi ** 2 * rho)
    got = P.reconstruct_potential(P.gaussian(), rho)
    assert got == pytest.approx(oracle, abs=1e-6)
    assert got == pytest.approx((2 * math.pi) ** -1.5 * math.exp(-rho * rho / 2), abs=1e-6)


# 5 -------------------------------------------------------------------------------

def test_05_j_to_l_convergence(hat, ref_bump):
    t0 = time.perf_counter()
    for lam in (-1, 1, 0):
        cfg = L.LimitStudyConfig(eps_list=L.default_eps_list(0, 5), R=4.0, grid_n=8,
                                 test_functions=(ref_bump,), profile=hat, lam=lam)
        res = L.j_to_l_study(cfg)
        errs = res.column("sup_error")
        assert all(e > 0 for e in errs)
        ok, worst = L.monotone_with_tolerance(errs)
        assert ok, (lam, errs)
        assert errs[-1] <= 0.1 * errs[0], (lam, errs)
        assert all(g.passed for g in res.gates)
    assert time.perf_counter() - t0 <= 20 * 60


# 6 -------------------------------------------------------------------------------

def test_06_cubic_decay(hat, ref_bump):
    single = M.RadialMeasure(np.zeros(0), np.zeros(0), [(1.4, 1.0)])
    cfg = L.LimitStudyConfig(profile=hat, test_functions=(ref_bump,))
    assert all(v == 0.0 for v in L.cubic_decay_study(cfg, single).column("cubic"))
    two = cli.nodal_state(cli.resolve_config(None), cli.DEFAULTS["study"]["cubic_ic"])
    for lam in (-1, 1):
        res = L.cubic_decay_study(L.LimitStudyConfig(profile=hat, test_functions=(ref_bump,), lam=lam),
                                  two)
        gates = {g.name: g for g in res.gates}
        slope = gates["slope_lower"].value
        assert 0.8 <= slope <= 1.2, f"lambda={lam:+d}: fitted slope {slope:.3f}"


# 7 -------------------------------------------------------------------------------

def test_07_multilinearity(hat, ref_bump):
    F = M.RadialMeasure.from_function(np.linspace(0, 3, 5), lambda x: np.exp(-x), [(1.2, 0.4)])
    for lam in (-1, 1):
        q = K.QuantumProfile(hat, lam, 0.5)
        c1 = M.cubic_form(q, ref_bump, F)
        q1 = M.quadratic_form(q, ref_bump, F)
        assert M.cubic_form(q, ref_bump, F.scaled(2.0)) == pytest.approx(8 * c1, rel=1e-8)
        assert M.quadratic_form(q, ref_bump, F.scaled(2.0)) == pytest.approx(4 * q1, rel=1e-8)


# 8 -------------------------------------------------------------------------------

def test_08_conservation(ref_runs):
    for name in ("fd", "be", "mb", "fpl"):
        tr = ref_runs[name]
        assert tr.times[-1] == 1.0
        assert np.max(tr.column("drift")) <= 1e-13, name
        assert np.max(tr.column("correction")) <= 1e-5, name


# 9 -------------------------------------------------------------------------------

def test_09_h_theorem(ref_runs):
    for name in ("fd", "fpl"):
        ent = ref_runs[name].column("entropy")
        assert np.all(np.isfinite(ent))
        assert np.max(np.diff(ent)) <= 1e-6, name
        assert ent[-1] < ent[0]


# 10 ------------------------------------------------------------------------------

def test_10_fd_hard_bound(ref_runs):
    cap = REF_EPS ** -3
    for name in ("fd", "fd_dense"):
        for s in ref_runs[name].states:
            assert np.all(s.density >= 0.0) and np.all(s.density <= cap), name
    assert np.max(ref_runs["fd_dense"].column("max_f")) > 0.4 * cap


# 11 ------------------------------------------------------------------------------

def test_11_fpl_maxwellian_stationarity():
    drifts = []
    for n in (256, 512):
        f0 = S.fv_measure(n, 32.0, lambda x: np.exp(-x))
        tr = S.solve_fpl(f0, S.SolveConfig(t_end=1.0))
        drifts.append(max(np.max(np.abs(s.density - f0.density)) for s in tr.states))
    assert drifts[0] <= 5e-3
    assert drifts[1] <= 0.5 * drifts[0]


# 12 ------------------------------------------------------------------------------

def test_12_weak_strong_fpl_consistency():
    probes = [K.TestFunction.bump(c, w) for c, w in ((1.0, 0.75), (1.5, 1.0), (2.0, 1.0),
                                                     (3.0, 1.5), (4.0, 2.0))]
    b = K.TestFunction.bump(1.5, 1.0)
    x_max = 16.0
    consts = {}
    for n in (128, 256):
        tr = S.solve_fpl(S.fv_measure(n, x_max, lambda x: b(x) + 0.2 * np.exp(-x)),
                         S.SolveConfig(t_end=0.2))
        scale = (x_max / n) ** 2 + np.max(tr.column("dt")) ** 2
        stride = max(1, len(tr.times) // 20)
        consts[n] = [S.weak_consistency_check(tr, p, stride=stride) / scale for p in probes]
    for c_coarse, c_fine in zip(consts[128], consts[256]):
        assert 0.5 <= c_fine / c_coarse <= 2.0


# 13 ------------------------------------------------------------------------------

def test_13_solution_level_limit(hat, ref_bump):
    t0 = time.perf_counter()
    cfg = L.LimitStudyConfig(eps_list=L.default_eps_list(2, 5), profile=hat, lam=-1)
    f0 = S.uniform_measure(REF_N, REF_H, lambda x: ref_bump(x))
    probes = [K.TestFunction.bump(c, w) for c, w in ((1.0, 0.75), (2.0, 1.0), (3.0, 1.5))]
    res = L.solution_convergence_study(cfg, f0, 0.5, probes, n_times=5)
    assert [r[3] for r in res.rows] == ["ok"] * 4
    disc = res.column("max_discrepancy")
    assert all(b <= a for a, b in zip(disc[-4:], disc[-3:]))
    assert disc[-1] <= 0.2 * disc[0]
    assert any(n.startswith("heuristic") for n in res.notes)
    assert time.perf_counter() - t0 <= 30 * 60


# 14 ------------------------------------------------------------------------------

def test_14_determinism(tmp_path):
    configs = {
        "oracle-check": {"oracle": {"samples": 20000, "configs": 12}},
        "solve": {"model": "fpl", "grid": {"x_max": 32.0, "n": 64},
                  "ic": {"preset": "bump", "center": 1.5, "width": 1.0}, "solve": {"t_end": 0.2}},
    }
    for cmd, config in configs.items():
        path = tmp_path / f"{cmd}.json"
        path.write_text(json.dumps(config))
        outs = []
        for k in range(2):
            out = tmp_path / f"{cmd}-{k}"
            assert cli.main([cmd, "--config", str(path), "--out", str(out), "--seed", "42"]) == 0
            outs.append(out)
        files = sorted(p.name for p in outs[0].iterdir())
        assert files == sorted(p.name for p in outs[1].iterdir()) and files
        for f in files:
            assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes(), (cmd, f)
