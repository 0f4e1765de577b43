"""Isotropic states and the scalar functionals evaluated on them.

A state is a measure on the energy half-line ``x = |v|^2/2``.  It has a
density part ``f(x) sqrt(x) dx``, stored as nodal values on a grid, and
optional point atoms.  Integrals of the density part use per-node weights
``w_i``.  The default weights integrate the piecewise-linear hat basis
exactly against ``sqrt(x) dx``.  The collision forms then treat the
``(y, z)`` variables as the discrete measure ``sum_p F_p delta_{x_p}`` with
``F_p = w_p f_p`` for nodes and ``F_p = m_a`` for atoms.  In the cubic form
the first variable is integrated adaptively against the hat interpolant of
``f``, because ``K`` concentrates on a scale ``eps`` and nodal sampling
would miss it.

All sums use compensated summation in a fixed order.  Results therefore do
not depend on thread count or evaluation order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, DomainError, UndefinedEntropyError
from .kernels import KernelQuadConfig, QuantumProfile, TestFunction, landau_kernel, _core_pair, _map

__all__ = [
    "hat_weights",
    "RadialMeasure",
    "FermiState",
    "moment",
    "mass_energy",
    "entropy_classical",
    "entropy_quantum",
    "quadratic_form",
    "landau_form",
    "cubic_form",
    "ISO_FACTOR",
]

ISO_FACTOR = 4.0 * math.pi * math.sqrt(2.0)

_GL3_X, _GL3_W = np.polynomial.legendre.leggauss(3)


def hat_weights(grid) -> np.ndarray:
    """``w_i = int hat_i(x) sqrt(x) dx`` for the piecewise-linear hats on ``grid``.

    With ``x = u^2`` each cell integral becomes a quartic polynomial in
    ``u``, which three-point Gauss-Legendre integrates exactly.  This avoids
    the cancellation of the closed form on narrow cells far from 0.
    """
    x = np.asarray(grid, dtype=float)
    if x.ndim != 1 or x.size < 2 or np.any(np.diff(x) <= 0) or x[0] < 0:
        raise DomainError("grid must be strictly increasing, nonnegative, with >= 2 nodes")
    ua, ub = np.sqrt(x[:-1]), np.sqrt(x[1:])
    mid, half = 0.5 * (ua + ub), 0.5 * (ub - ua)
    u = mid[:, None] + half[:, None] * _GL3_X[None, :]
    xx = u * u
    jac = 2.0 * u * u * half[:, None] * _GL3_W[None, :]  # sqrt(x) dx = 2 u^2 du
    h = (x[1:] - x[:-1])[:, None]
    left = ((x[1:, None] - xx) / h * jac).sum(axis=1)
    right = ((xx - x[:-1, None]) / h * jac).sum(axis=1)
    w = np.zeros_like(x)
    w[:-1] += left
    w[1:] += right
    return w


def _f17(v: float) -> float:
    return float(f"{v:.17g}")


@dataclass(frozen=True)
class RadialMeasure:
    """Density ``f sqrt(x) dx`` on a grid plus point atoms ``(location, mass)``."""

    grid: np.ndarray
    density: np.ndarray
    atoms: tuple = ()
    quad_weights: np.ndarray | None = field(default=None, compare=False)

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=float)
        dens = np.asarray(self.density, dtype=float)
        if grid.shape != dens.shape:
            raise DomainError("grid and density must have the same length")
        if grid.size:
            if grid.ndim != 1 or np.any(np.diff(grid) <= 0) or grid[0] < 0:
                raise DomainError("grid must be strictly increasing and nonnegative")
        if not np.all(np.isfinite(dens)) or np.any(dens < 0):
            raise ConstraintError("density must be finite and nonnegative")
        atoms = tuple((float(a), float(m)) for a, m in self.atoms)
        for a, m in atoms:
            if a < 0 or not m > 0:
                raise ConstraintError("atoms need location >= 0 and mass > 0")
        if self.quad_weights is None:
            w = hat_weights(grid) if grid.size >= 2 else np.zeros(grid.size)
        else:
            w = np.asarray(self.quad_weights, dtype=float)
            if w.shape != grid.shape or np.any(w < 0):
                raise DomainError("quad_weights must be nonnegative, one per node")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "density", dens)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "quad_weights", w)

    @classmethod
    def empty(cls):
        return cls(np.zeros(0), np.zeros(0))

    @classmethod
    def from_function(cls, grid, f, atoms=(), quad_weights=None):
        grid = np.asarray(grid, dtype=float)
        return cls(grid, np.asarray(f(grid), dtype=float), atoms, quad_weights)

    @property
    def atom_locations(self) -> np.ndarray:
        return np.array([a for a, _ in self.atoms], dtype=float)

    @property
    def atom_masses(self) -> np.ndarray:
        return np.array([m for _, m in self.atoms], dtype=float)

    def point_masses(self):
        """``(points, masses)``: nodes with ``w_i f_i`` followed by the atoms."""
        pts = np.concatenate([self.grid, self.atom_locations])
        ms = np.concatenate([self.quad_weights * self.density, self.atom_masses])
        return pts, ms

    def with_density(self, density, atoms=None) -> "RadialMeasure":
        atoms = self.atoms if atoms is None else atoms
        return RadialMeasure(self.grid, density, atoms, self.quad_weights)

    def scaled(self, factor: float) -> "RadialMeasure":
        return RadialMeasure(self.grid, factor * self.density,
                             [(a, factor * m) for a, m in self.atoms], self.quad_weights)

    def to_dict(self) -> dict:
        return {"grid": [_f17(v) for v in self.grid],
                "density": [_f17(v) for v in self.density],
                "atoms": [[_f17(a), _f17(m)] for a, m in self.atoms]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), separators=(",", ":"))

    @classmethod
    def from_dict(cls, data: dict, quad_weights=None) -> "RadialMeasure":
        return cls(np.array(data["grid"], dtype=float), np.array(data["density"], dtype=float),
                   [tuple(a) for a in data.get("atoms", [])], quad_weights)

    @classmethod
    def from_json(cls, text: str, quad_weights=None) -> "RadialMeasure":
        return cls.from_dict(json.loads(text), quad_weights)


@dataclass(frozen=True)
class FermiState:
    """Atom-free measure obeying the Fermi-Dirac bound ``0 <= f <= eps^-3``."""

    measure: RadialMeasure
    eps: float

    def __post_init__(self):
        if self.measure.atoms:
            raise ConstraintError("Fermi-Dirac states cannot carry atoms")
        if not self.eps > 0:
            raise DomainError("eps must be positive")
        if np.any(self.measure.density > self.eps ** -3):
            raise ConstraintError("density exceeds the Fermi-Dirac bound eps^-3")


def _as_measure(F) -> RadialMeasure:
    return F.measure if isinstance(F, FermiState) else F


def _evaluator(phi):
    if callable(phi):
        return lambda x: np.asarray(phi(np.asarray(x, dtype=float)), dtype=float) * np.ones_like(x)
    coeffs = np.asarray(phi, dtype=float)
    return lambda x: np.polynomial.polynomial.polyval(np.asarray(x, dtype=float), coeffs)


def moment(F, phi) -> float:
    """``int phi dF``.  ``phi`` is a callable or a list of polynomial coefficients."""
    F = _as_measure(F)
    ev = _evaluator(phi)
    pts, ms = F.point_masses()
    if pts.size == 0:
        return 0.0
    return math.fsum(ms * ev(pts))


def mass_energy(F) -> tuple[float, float]:
    return moment(F, [1.0]), moment(F, [0.0, 1.0])


def _xlogx(f):
    f = np.asarray(f, dtype=float)
    out = np.zeros_like(f)
    pos = f > 0
    out[pos] = f[pos] * np.log(f[pos])
    return out


def entropy_classical(F) -> float:
    """``H = 4 pi sqrt2 sum_i w_i f_i log f_i`` with ``0 log 0 = 0``."""
    F = _as_measure(F)
    if F.atoms:
        raise UndefinedEntropyError("entropy is undefined for measures with atoms")
    return ISO_FACTOR * math.fsum(F.quad_weights * _xlogx(F.density))


def entropy_quantum(state, lam: int, eps: float | None = None) -> float:
    """Quantum entropy ``H_{lam eps^3}``.

    ``state`` is a :class:`FermiState` or a measure; ``eps`` must then be
    given.  The pointwise integrand is
    ``f log f - (lam eps^3)^-1 (1 + lam eps^3 f) log(1 + lam eps^3 f)``.
    """
    if isinstance(state, FermiState):
        eps = state.eps if eps is None else eps
    F = _as_measure(state)
    if eps is None or not eps > 0:
        raise DomainError("eps must be given and positive")
    if lam not in (-1, 1):
        raise DomainError("lambda must be -1 or +1")
    if F.atoms:
        raise UndefinedEntropyError("entropy is undefined for measures with atoms")
    f = F.density
    d = lam * eps ** 3
    if lam == -1 and np.any(f > eps ** -3):
        raise ConstraintError("density exceeds the Fermi-Dirac bound eps^-3")
    g = 1.0 + d * f
    term = _xlogx(f) - _xlogx(g) / d
    return ISO_FACTOR * math.fsum(F.quad_weights * term)


def _pair_sum(fn, pts, ms, threads, symmetric=True):
    """``sum_{p,q} fn(p, q) m_p m_q`` over index pairs in a fixed order."""
    n = len(pts)
    pairs = [(p, q) for p in range(n) for q in range(p if symmetric else 0, n)
             if ms[p] != 0.0 and ms[q] != 0.0]
    vals = _map(lambda pq: fn(*pq), pairs, threads)
    terms = []
    for (p, q), v in zip(pairs, vals):
        mult = 2.0 if (symmetric and p != q) else 1.0
        terms.append(mult * v * ms[p] * ms[q])
    return math.fsum(terms)


def quadratic_form(q: QuantumProfile, phi: TestFunction, F, cfg: KernelQuadConfig | None = None,
                   threads: int = 1) -> float:
    """``int int J[phi](y, z) dF(y) dF(z)``.

    J on the axes (one argument 0) comes from the boundary branch of W.
    """
    F = _as_measure(F)
    mod, prof, tol = _core_pair(q, cfg)
    pts, ms = F.point_masses()

    def j(p, r):
        return mod.x_integral(prof, phi.breaks, phi.coeffs, pts[p], pts[r], tol)

    return _pair_sum(j, pts, ms, threads)


def landau_form(phi: TestFunction, F) -> float:
    """``int int L[phi](x, y) dF(x) dF(y)``."""
    F = _as_measure(F)
    pts, ms = F.point_masses()
    if pts.size == 0:
        return 0.0
    L = landau_kernel(phi, pts[:, None], pts[None, :])
    return math.fsum((np.atleast_2d(L) * np.outer(ms, ms)).ravel())


def cubic_form(q: QuantumProfile, phi: TestFunction, F, cfg: KernelQuadConfig | None = None,
               threads: int = 1) -> float:
    """``lam eps^3 int K[phi](x, y, z) dF(x) dF(y) dF(z)``.

    The ``x`` integral of the density part runs adaptively against the hat
    interpolant of ``f``.  Atoms in ``x`` contribute ``K(a, y, z)`` pointwise.
    ``(y, z)`` use the discrete measure of :meth:`RadialMeasure.point_masses`.
    Tuples where ``dphi`` vanishes identically are skipped by the core.
    """
    if q.lam == 0:
        return 0.0
    F = _as_measure(F)
    mod, prof, tol = _core_pair(q, cfg)
    pts, ms = F.point_masses()
    have_density = F.grid.size >= 2 and np.any(F.density > 0)
    locs, masses = F.atom_locations, F.atom_masses
    grid = np.ascontiguousarray(F.grid)
    dens = np.ascontiguousarray(F.density)

    def inner(p, r):
        y, z = pts[p], pts[r]
        val = 0.0
        if have_density:
            val = mod.x_integral(prof, phi.breaks, phi.coeffs, y, z, tol, grid, dens, 1.0)
        if masses.size:
            ka = [float(mod.w_value(prof, a, y, z, tol)) * _dphi(phi, a, y, z) for a in locs]
            val = math.fsum([val] + [k * m for k, m in zip(ka, masses)])
        return val

    return q.lam * q.eps ** 3 * _pair_sum(inner, pts, ms, threads) + 0.0  # no signed zero


def _dphi(phi, x, y, z):
    xs = max(y + z - x, 0.0)
    return float(phi(x) + phi(xs) - phi(y) - phi(z))
