import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from semiclassical import kernels as K, measures as M
from semiclassical.errors import ConstraintError, DomainError, UndefinedEntropyError

SQPI = math.sqrt(math.pi)


def maxwellian(n=4001, x_max=40.0):
    return M.RadialMeasure.from_function(np.linspace(0, x_max, n), lambda x: np.exp(-x))


def test_hat_weights_exact_for_sqrt_moments():
    rng = np.random.default_rng(3)
    grid = np.concatenate([[0.0], np.sort(rng.uniform(0, 9, 40)), [9.0]])
    w = M.hat_weights(grid)
    assert np.all(w >= 0)
    assert w.sum() == pytest.approx(2 / 3 * 9 ** 1.5, rel=1e-13)
    assert w @ grid == pytest.approx(2 / 5 * 9 ** 2.5, rel=1e-13)


def test_hat_weights_reject_bad_grid():
    with pytest.raises(DomainError):
        M.hat_weights([0.0, 2.0, 1.0])


def test_measure_validation():
    with pytest.raises(ConstraintError):
        M.RadialMeasure(np.array([0.0, 1.0]), np.array([1.0, -1.0]))
    with pytest.raises(ConstraintError):
        M.RadialMeasure(np.array([0.0, 1.0]), np.array([1.0, 1.0]), [(1.0, 0.0)])
    with pytest.raises(DomainError):
        M.RadialMeasure(np.array([0.0, 1.0]), np.array([1.0]))


def test_moment_examples():
    F = maxwellian()
    assert M.moment(F, [1.0]) == pytest.approx(SQPI / 2, rel=2e-5)
    atom = M.RadialMeasure(np.zeros(0), np.zeros(0), [(1.5, 2.0)])
    assert M.moment(atom, lambda x: x ** 2) == pytest.approx(2.0 * 2.25)


def test_moment_linear_and_additive(bump):
    F = maxwellian(401, 20.0)
    G = F.with_density(F.density, [(1.0, 0.3), (2.0, 0.1)])
    phi2 = K.TestFunction.bump(3.0, 1.0)
    lhs = M.moment(G, lambda x: 2 * bump(x) - phi2(x))
    rhs = 2 * M.moment(G, bump) - M.moment(G, phi2)
    assert lhs == pytest.approx(rhs, rel=1e-13)
    assert M.moment(G, bump) == pytest.approx(M.moment(F, bump) + 0.3 * bump(1.0) + 0.1 * bump(2.0))


def test_mass_energy_examples():
    assert M.mass_energy(M.RadialMeasure.empty()) == (0.0, 0.0)
    assert M.mass_energy(M.RadialMeasure(np.zeros(0), np.zeros(0), [(2.0, 3.0)])) == (3.0, 6.0)
    m, e = M.mass_energy(maxwellian())
    assert m == pytest.approx(SQPI / 2, rel=2e-5)
    assert e == pytest.approx(3 * SQPI / 4, rel=2e-5)


def test_entropy_classical_examples():
    F = maxwellian()
    assert M.entropy_classical(F) == pytest.approx(-3 * math.sqrt(2) * math.pi ** 1.5, rel=1e-5)
    assert M.entropy_classical(F.with_density(np.zeros_like(F.density))) == 0.0
    ones = M.RadialMeasure(np.linspace(0, 2, 5), np.ones(5))
    assert M.entropy_classical(ones) == 0.0
    with pytest.raises(UndefinedEntropyError):
        M.entropy_classical(F.with_density(F.density, [(1.0, 1.0)]))


def test_entropy_quantum_limits():
    F = maxwellian(801, 30.0)
    mass_term = M.ISO_FACTOR * math.fsum(F.quad_weights * F.density)
    H = M.entropy_classical(F)
    gaps = [abs(M.entropy_quantum(F, lam, e) + mass_term - H)
            for lam in (-1, 1) for e in (0.5, 0.25, 0.125)]
    assert gaps[0] > gaps[1] > gaps[2] and gaps[3] > gaps[4] > gaps[5]
    # leading correction is -lam eps^3 / 2 * int f^2
    e = 0.125
    corr = M.ISO_FACTOR * math.fsum(F.quad_weights * F.density ** 2) * e ** 3 / 2
    assert M.entropy_quantum(F, 1, e) + mass_term - H == pytest.approx(-corr, rel=1e-3)


def test_entropy_quantum_saturation_and_bound():
    eps = 0.5
    grid = np.linspace(0, 2, 5)
    full = M.RadialMeasure(grid, np.full(5, eps ** -3))
    st_ = M.FermiState(full, eps)
    assert math.isfinite(M.entropy_quantum(st_, -1))
    assert M.entropy_quantum(M.RadialMeasure(grid, np.zeros(5)), -1, eps) == 0.0
    with pytest.raises(ConstraintError):
        M.entropy_quantum(M.RadialMeasure(grid, np.full(5, 9.0)), -1, eps)
    with pytest.raises(ConstraintError):
        M.FermiState(M.RadialMeasure(grid, np.full(5, 9.0)), eps)


def test_json_roundtrip_bit_exact():
    rng = np.random.default_rng(5)
    F = M.RadialMeasure(np.cumsum(rng.uniform(0.1, 1, 9)), rng.uniform(0, 3, 9),
                        [(0.0, math.pi), (1 / 3, math.e)])
    G = M.RadialMeasure.from_json(F.to_json())
    assert np.array_equal(F.grid, G.grid) and np.array_equal(F.density, G.density)
    assert F.atoms == G.atoms
    assert set(json.loads(F.to_json())) == {"grid", "density", "atoms"}


def test_quadratic_form_conservation(hat):
    q = K.QuantumProfile(hat, -1, 0.5)
    F = M.RadialMeasure.from_function(np.linspace(0, 3, 7), lambda x: np.exp(-x))
    one = K.TestFunction.cutoff_polynomial([1.0], 8.0, 2.0)
    lin = K.TestFunction.cutoff_polynomial([0.0, 1.0], 8.0, 2.0)
    assert abs(M.quadratic_form(q, one, F)) < 1e-9
    assert abs(M.quadratic_form(q, lin, F)) < 1e-8


def test_quadratic_form_two_atoms_expansion(hat, bump):
    q = K.QuantumProfile(hat, 1, 0.5)
    (a1, m1), (a2, m2) = (1.0, 0.4), (2.2, 0.7)
    F = M.RadialMeasure(np.zeros(0), np.zeros(0), [(a1, m1), (a2, m2)])
    J = lambda y, z: K.j_functional(q, bump, y, z)  # noqa: E731
    ref = m1 * m2 * (J(a1, a2) + J(a2, a1)) + m1 ** 2 * J(a1, a1) + m2 ** 2 * J(a2, a2)
    assert M.quadratic_form(q, bump, F) == pytest.approx(ref, rel=1e-12)


def test_quadratic_form_threads_deterministic(hat, bump):
    q = K.QuantumProfile(hat, -1, 0.5)
    F = M.RadialMeasure.from_function(np.linspace(0, 3, 7), lambda x: np.exp(-x))
    assert M.quadratic_form(q, bump, F, threads=1) == M.quadratic_form(q, bump, F, threads=3)


def test_landau_form_examples(bump):
    lin = K.TestFunction.cutoff_polynomial([0.0, 1.0], 20.0, 2.0)
    F = maxwellian(201, 10.0)
    assert M.landau_form(lin, F) == pytest.approx(0.0, abs=1e-12)
    atom = M.RadialMeasure(np.zeros(0), np.zeros(0), [(1.2, 0.5)])
    assert M.landau_form(bump, atom) == pytest.approx(0.25 * K.landau_kernel(bump, 1.2, 1.2))


def test_landau_form_maxwellian_is_stationary(bump):
    F = maxwellian(3001, 30.0)
    assert abs(M.landau_form(bump, F)) < 1e-5


def test_landau_form_quadrature_oracle(bump):
    # independent 2D quadrature of L[phi](x, y) g(x) g(y) sqrt(xy), g not Maxwellian
    g = lambda x: math.exp(-(x - 1.0) ** 2)  # noqa: E731

    def inner(y):
        return integrate.quad(lambda x: K.landau_kernel(bump, x, y) * g(x) * math.sqrt(x),
                              0, 8, points=[0.5, 2.5, y], limit=200)[0]

    ref = integrate.quad(lambda y: inner(y) * g(y) * math.sqrt(y), 0, 8,
                         points=[0.5, 2.5], limit=200)[0]
    F = M.RadialMeasure.from_function(np.linspace(0, 8, 1601), lambda x: np.exp(-(x - 1.0) ** 2))
    assert M.landau_form(bump, F) == pytest.approx(ref, rel=2e-3)


def test_cubic_form_zero_cases(hat, bump):
    q = K.QuantumProfile(hat, -1, 0.5)
    atom = M.RadialMeasure(np.zeros(0), np.zeros(0), [(1.7, 2.0)])
    assert M.cubic_form(q, bump, atom) == 0.0
    assert math.copysign(1.0, M.cubic_form(q, bump, atom)) == 1.0
    assert M.cubic_form(K.QuantumProfile(hat, 0, 0.5), bump,
                        M.RadialMeasure(np.zeros(0), np.zeros(0), [(1.0, 1), (2.0, 1)])) == 0.0
    one = K.TestFunction.cutoff_polynomial([1.0], 8.0, 2.0)
    F = M.RadialMeasure.from_function(np.linspace(0, 3, 5), lambda x: np.exp(-x))
    assert abs(M.cubic_form(q, one, F)) < 1e-9


@settings(max_examples=5, deadline=None)
@given(st.floats(0.3, 3.0))
def test_forms_homogeneity(c):
    hat = K.QuantumProfile(__import__("semiclassical.potential", fromlist=["x"]).normalize(
        __import__("semiclassical.potential", fromlist=["x"]).gaussian()), 1, 0.5)
    bump = K.TestFunction.bump(1.5, 1.0)
    F = M.RadialMeasure(np.zeros(0), np.zeros(0), [(1.0, 0.5), (2.0, 0.3)])
    G = F.scaled(c)
    assert M.quadratic_form(hat, bump, G) == pytest.approx(c ** 2 * M.quadratic_form(hat, bump, F),
                                                           rel=1e-12)
    assert M.cubic_form(hat, bump, G) == pytest.approx(c ** 3 * M.cubic_form(hat, bump, F), rel=1e-12)


def test_quadratic_form_symmetrized_kernel(hat, bump):
    q = K.QuantumProfile(hat, -1, 0.5)
    F = M.RadialMeasure(np.zeros(0), np.zeros(0), [(0.8, 0.5), (1.9, 0.3), (2.6, 0.2)])
    pts, ms = F.point_masses()
    full = sum(K.j_functional(q, bump, a, b) * ma * mb for a, ma in zip(pts, ms) for b, mb in zip(pts, ms))
    assert M.quadratic_form(q, bump, F) == pytest.approx(full, rel=1e-12)


def test_self_convergence_under_refinement(hat, bump):
    q = K.QuantumProfile(hat, -1, 0.5)
    f = lambda x: np.exp(-x)  # noqa: E731
    a = M.landau_form(bump, M.RadialMeasure.from_function(np.linspace(0, 8, 161), f))
    b = M.landau_form(bump, M.RadialMeasure.from_function(np.linspace(0, 8, 321), f))
    c = M.landau_form(bump, M.RadialMeasure.from_function(np.linspace(0, 8, 641), f))
    assert abs(c - b) < 0.5 * abs(b - a)
    # weak continuity: a split atom approaches the merged one
    merged = M.quadratic_form(q, bump, M.RadialMeasure(np.zeros(0), np.zeros(0), [(1.2, 0.5)]))
    gaps = []
    for d in (0.2, 0.1, 0.05):
        split = M.RadialMeasure(np.zeros(0), np.zeros(0), [(1.2 - d, 0.25), (1.2 + d, 0.25)])
        gaps.append(abs(M.quadratic_form(q, bump, split) - merged))
    assert gaps[2] < gaps[1] < gaps[0]
