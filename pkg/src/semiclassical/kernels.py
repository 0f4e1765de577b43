"""Collision kernels of the isotropic quantum Boltzmann equation.

The weak form of the isotropic Fermi-Dirac / Bose-Einstein equation tests
the collision operator against a function ``phi`` of the energy
``x = |v|^2/2``.  Everything reduces to the three-energy kernel

    W(x, y, z) = 4 pi / sqrt(xyz) int_{s_lo}^{s_hi} ds int_0^{2 pi} Phi(sqrt2 s, sqrt2 Y*) dtheta

and to the functionals built from it:

* ``K[phi](x, y, z) = W(x, y, z) * dphi(x, y, z)``,
* ``J[phi](y, z) = 1/2 int_0^{y+z} K[phi](x, y, z) sqrt(x) dx``,

whose semi-classical limit is the Landau kernel ``L[phi](x, y)``.

The numerical work happens in the kernel core (compiled when available).
It does not integrate the squared part of ``Phi`` in two dimensions.  For
a profile of the form ``(a + lam b)^2`` the squared terms reduce, after the
theta integration, to one-dimensional integrals of ``phi_hat^2`` over the
``s`` range and over the range with ``y`` and ``z`` exchanged.  These have
closed forms for the built-in profiles.  Only the cross term ``2 lam a b``
needs the full (s, theta) quadrature, and it is skipped where
``phi_hat(k |sqrt z - sqrt x|)`` underflows.  Setting ``direct=True`` in
:class:`KernelQuadConfig` integrates the full profile numerically instead.
The test suite uses that mode to validate the shortcut.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import BPoly, BSpline, PPoly

from . import _pycore
from ._backend import core_for
from .errors import DomainError
from .potential import HatPotential

__all__ = [
    "TestFunction",
    "QuantumProfile",
    "KernelQuadConfig",
    "SplineFamily",
    "GalerkinTensors",
    "phi_profile",
    "y_star",
    "w_kernel",
    "delta_phi",
    "k_functional",
    "j_functional",
    "j_grid",
    "clear_memo",
    "landau_kernel",
    "assemble_tensors",
]


# ---------------------------------------------------------------------------
# Test functions
# ---------------------------------------------------------------------------

def _ppoly_zero(pp: PPoly, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    inside = (x >= pp.x[0]) & (x <= pp.x[-1])
    if np.any(inside):
        out[inside] = pp(x[inside])
    return out


def _trim(pp: PPoly) -> PPoly:
    """Restrict to x >= 0 and drop identically zero end pieces."""
    x = np.asarray(pp.x, dtype=float)
    c = np.asarray(pp.c, dtype=float)
    if x[0] < 0.0:
        if x[-1] <= 0.0:
            raise DomainError("test function has no support on x >= 0")
        j = int(np.searchsorted(x, 0.0, side="right")) - 1
        first = c[:, j].copy()
        if x[j] < 0.0:
            # Taylor coefficients of piece j about the origin.
            piece = PPoly(c[:, j:j + 1], x[j:j + 2])
            deg = c.shape[0] - 1
            first = np.array([float(piece.derivative(m)(0.0)) / math.factorial(m) if m
                              else float(piece(0.0)) for m in range(deg, -1, -1)])
        c = c[:, j:].copy()
        c[:, 0] = first
        x = x[j:].copy()
        x[0] = 0.0
    nz = np.flatnonzero(np.any(c != 0.0, axis=0))
    if nz.size == 0:
        raise DomainError("test function vanishes identically")
    c = c[:, nz[0]:nz[-1] + 1]
    x = x[nz[0]:nz[-1] + 2]
    return PPoly(np.ascontiguousarray(c), np.ascontiguousarray(x))


class TestFunction:
    """A compactly supported C^2 test function held as a piecewise polynomial.

    The polynomial pieces (scipy ``PPoly`` layout) are what the kernel core
    consumes; ``f0``, ``f1`` and ``f2`` evaluate the function and its first
    two derivatives with zero extension outside the break points.
    """

    __test__ = False  # not a pytest class

    def __init__(self, pp: PPoly, label: str = "phi"):
        pp = _trim(pp)
        self.pp = pp
        self.label = label
        self._d1 = pp.derivative(1)
        self._d2 = pp.derivative(2)
        self.breaks = np.ascontiguousarray(pp.x, dtype=float)
        self.coeffs = np.ascontiguousarray(pp.c, dtype=float)
        self.support_radius = float(pp.x[-1])
        xs = np.concatenate([np.linspace(a, b, 65) for a, b in zip(pp.x[:-1], pp.x[1:])])
        self.sup_f2 = float(np.max(np.abs(self._d2(xs)))) if xs.size else 0.0

    def f0(self, x):
        return _ppoly_zero(self.pp, x)

    def f1(self, x):
        return _ppoly_zero(self._d1, x)

    def f2(self, x):
        return _ppoly_zero(self._d2, x)

    __call__ = f0

    def __repr__(self):
        return f"TestFunction({self.label!r}, support=[{self.breaks[0]:g}, {self.support_radius:g}])"

    # -- constructors -------------------------------------------------------

    @classmethod
    def bump(cls, center: float, width: float, height: float = 1.0) -> "TestFunction":
        """``height * (1 - t^2)^4`` with ``t = (x - center)/width`` (C^3, compact)."""
        if width <= 0.0:
            raise DomainError("bump width must be positive")
        u = Polynomial([-width, 1.0]) / width
        poly = height * (1 - u * u) ** 4
        c = poly.coef[::-1][:, None]
        pp = PPoly(c, np.array([center - width, center + width]))
        return cls(pp, label=f"bump({center:g},{width:g})")

    @classmethod
    def cutoff_polynomial(cls, coeffs, flat_until: float, taper: float) -> "TestFunction":
        """Polynomial ``sum coeffs[k] x^k`` on ``[0, flat_until]``, tapered to 0.

        The taper multiplies by ``1 - S((x - flat_until)/taper)`` with the C^2
        quintic smoothstep ``S(t) = 6t^5 - 15t^4 + 10t^3``.  With
        ``coeffs=[1]`` this is a function equal to 1 on a covering interval,
        with ``coeffs=[0, 1]`` one equal to ``x``.
        """
        p = Polynomial(coeffs)
        a = float(flat_until)
        w = float(taper)
        t = Polynomial([0.0, 1.0 / w])
        smooth = 1 - (6 * t ** 5 - 15 * t ** 4 + 10 * t ** 3)
        right = p(Polynomial([a, 1.0])) * smooth
        order = max(p.degree(), right.degree()) + 1
        c = np.zeros((order, 2))
        left_c = p.coef[::-1]
        c[order - len(left_c):, 0] = left_c
        right_c = right.coef[::-1]
        c[order - len(right_c):, 1] = right_c
        return cls(PPoly(c, np.array([0.0, a, a + w])),
                   label=f"cutoff-poly{tuple(np.round(coeffs, 6))}")

    @classmethod
    def bspline(cls, index: int, h: float, n: int) -> "TestFunction":
        """Member ``index`` of the folded cubic B-spline family (see SplineFamily)."""
        if not 0 <= index < n:
            raise DomainError("index out of range")
        # three padding knots on the right keep (n + 1) h inside the base interval
        t = h * (np.arange(n + 8) - 3.0)
        c = np.zeros(n + 4)
        c[index + 1] = 1.0
        if index == 0:
            c[0] = 2.0
        elif index == 1 and n > 1:
            c[0] = -1.0
        pp = PPoly.from_spline(BSpline(t, c, 3, extrapolate=False))
        stop = int(np.searchsorted(pp.x, (index + 2) * h * (1 + 1e-12)))
        pp = PPoly(pp.c[:, :stop - 1].copy(), pp.x[:stop].copy())
        return cls(pp, label=f"bspline({index},{h:g},{n})")

    @classmethod
    def from_callables(cls, f0, f1, f2, support_radius: float, pieces: int = 256,
                       label: str = "callable") -> "TestFunction":
        """Quintic Hermite interpolant matching ``f0, f1, f2`` on a uniform mesh.

        The interpolant is C^2 and agrees with the given function to
        O(mesh^6); it is the form the kernel core can integrate.
        """
        x = np.linspace(0.0, float(support_radius), pieces + 1)
        y = np.column_stack([f0(x), f1(x), f2(x)])
        bp = BPoly.from_derivatives(x, y)
        return cls(PPoly.from_bernstein_basis(bp), label=label)


# ---------------------------------------------------------------------------
# Profiles and quadrature configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class QuantumProfile:
    """Interaction profile together with the statistics sign and ``eps``."""

    hat: HatPotential
    lam: int
    eps: float

    def __post_init__(self):
        if self.lam not in (-1, 0, 1):
            raise DomainError("lambda must be -1, 0 or +1")
        if not self.eps > 0.0:
            raise DomainError("eps must be positive")

    def core(self):
        """Profile object for the kernel core."""
        mod = core_for(self.hat.core_kind)
        fn = self.hat.eval if self.hat.core_kind == _pycore.CALLABLE else None
        return mod, mod.Profile(self.hat.core_kind, self.hat.scale, self.eps, self.lam, fn=fn,
                                r_cut=self.hat.r_cut, phimax=self.hat.phimax)


@dataclass(frozen=True)
class KernelQuadConfig:
    """Tolerances of the nested (x, s, theta) quadratures."""

    abs_tol: float = 1e-10
    rel_tol: float = 1e-9
    max_depth: int = 16
    theta_points: int = 8
    s_points: int = 8
    direct: bool = False

    def __post_init__(self):
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise DomainError("tolerances must be positive")
        if self.theta_points < 4 or self.s_points < 4:
            raise DomainError("panel counts must be at least 4")
        if self.max_depth < 1:
            raise DomainError("max_depth must be positive")

    def tol(self, mod):
        return mod.Tol(self.abs_tol, self.rel_tol, self.max_depth, self.theta_points,
                       self.s_points, self.direct)

    def key(self):
        return [self.abs_tol, self.rel_tol, self.max_depth, self.theta_points, self.s_points,
                self.direct]


_DEFAULT_CFG = KernelQuadConfig()


def _core_pair(q: QuantumProfile, cfg: KernelQuadConfig | None):
    mod, prof = q.core()
    return mod, prof, (cfg or _DEFAULT_CFG).tol(mod)


# ---------------------------------------------------------------------------
# Pointwise kernels
# ---------------------------------------------------------------------------

def phi_profile(q: QuantumProfile, r: float, rho: float) -> float:
    """Collision profile ``Phi(r, rho)`` of the quantum kernel."""
    if r < 0 or rho < 0:
        raise DomainError("Phi needs nonnegative arguments")
    e = q.eps
    a = float(q.hat(r / e))
    b = float(q.hat(rho / e))
    if q.lam == 0:
        return (a * a + b * b) / e ** 4
    s = a + q.lam * b
    return s * s / e ** 4


def y_star(x: float, y: float, z: float, s: float, theta: float) -> float:
    """``Y* = |sqrt(A_+) + e^{i theta} sqrt(B_+)|``; 0 when ``s = 0``."""
    return _pycore.y_star(x, y, z, s, theta)


def w_kernel(q: QuantumProfile, x: float, y: float, z: float,
             cfg: KernelQuadConfig | None = None) -> float:
    """Reduced three-energy kernel ``W(x, y, z)``."""
    if min(x, y, z) < 0:
        raise DomainError("energies must be nonnegative")
    mod, prof, tol = _core_pair(q, cfg)
    return float(mod.w_value(prof, float(x), float(y), float(z), tol))


def delta_phi(phi: TestFunction, x, y, z):
    """``phi(x) + phi(x*) - phi(y) - phi(z)`` with ``x* = (y + z - x)_+``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    z = np.asarray(z, dtype=float)
    xs = np.maximum(y + z - x, 0.0)
    out = phi(x) + phi(xs) - phi(y) - phi(z)
    return float(out) if out.ndim == 0 else out


def k_functional(q: QuantumProfile, phi: TestFunction, x, y, z,
                 cfg: KernelQuadConfig | None = None) -> float:
    """``K[phi](x, y, z) = W(x, y, z) dphi(x, y, z)``."""
    d = delta_phi(phi, x, y, z)
    if d == 0.0:
        return 0.0
    return w_kernel(q, x, y, z, cfg) * d


def j_functional(q: QuantumProfile, phi: TestFunction, y: float, z: float,
                 cfg: KernelQuadConfig | None = None) -> float:
    """``J[phi](y, z) = 1/2 int_0^{y+z} K[phi](x, y, z) sqrt(x) dx``."""
    if y <= 0 or z <= 0:
        raise DomainError("J is defined for y, z > 0; use continuity for the axes")
    mod, prof, tol = _core_pair(q, cfg)
    return float(mod.x_integral(prof, phi.breaks, phi.coeffs, float(y), float(z), tol))


_MEMO: dict = {}
_MEMO_LOCK = threading.Lock()
_QUANT = 1e-12


def _memo_prefix(q: QuantumProfile, phi: TestFunction, cfg: KernelQuadConfig):
    h = hashlib.sha256()
    h.update(np.asarray(q.hat.samples(), dtype=float).tobytes())
    h.update(phi.breaks.tobytes())
    h.update(phi.coeffs.tobytes())
    h.update(repr((q.lam, q.eps, cfg.key())).encode())
    return h.hexdigest()


def clear_memo():
    """Drop all memoized J values."""
    with _MEMO_LOCK:
        _MEMO.clear()


def j_grid(q: QuantumProfile, phi: TestFunction, ys, zs,
           cfg: KernelQuadConfig | None = None, threads: int = 1,
           symmetric: bool = True, memo: bool = True) -> np.ndarray:
    """``J[phi]`` on the tensor grid ``ys x zs``.

    When the two grids coincide only the upper triangle is computed (J is
    symmetric in its arguments).  Work is spread over ``threads`` workers;
    the output does not depend on the thread count.  With ``memo`` the
    values are cached in-process under arguments quantized to 1e-12, so
    repeated studies over the same grid reuse them.
    """
    ys = np.asarray(ys, dtype=float)
    zs = np.asarray(zs, dtype=float)
    cfg = cfg or _DEFAULT_CFG
    mod, prof, tol = _core_pair(q, cfg)
    same = symmetric and ys.shape == zs.shape and np.array_equal(ys, zs)
    tasks = [(i, j) for i in range(len(ys)) for j in range(len(zs)) if not same or j >= i]
    prefix = _memo_prefix(q, phi, cfg) if memo else None

    def one(task):
        i, j = task
        if prefix is not None:
            a, b = sorted((round(ys[i] / _QUANT), round(zs[j] / _QUANT)))
            key = (prefix, a, b)
            with _MEMO_LOCK:
                hit = _MEMO.get(key)
            if hit is not None:
                return hit
        val = mod.x_integral(prof, phi.breaks, phi.coeffs, ys[i], zs[j], tol)
        if prefix is not None:
            with _MEMO_LOCK:
                _MEMO[key] = val
        return val

    vals = _map(one, tasks, threads)
    out = np.empty((len(ys), len(zs)))
    for (i, j), v in zip(tasks, vals):
        out[i, j] = v
        if same:
            out[j, i] = v
    return out


def landau_kernel(phi: TestFunction, x, y):
    """Landau kernel ``L[phi](x, y)`` with ``L(0, 0) = 0`` and ``sgn(0) = 0``."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    big = np.maximum(x, y)
    small = np.minimum(x, y)
    with np.errstate(divide="ignore", invalid="ignore"):
        val = 4.0 * math.pi / np.sqrt(big) * (
            (2.0 / 3.0) * (phi.f2(x) + phi.f2(y)) * small
            - (phi.f1(x) - phi.f1(y)) * np.sign(x - y))
    val = np.where(big > 0.0, val, 0.0)
    return float(val) if val.ndim == 0 else val


def _map(fn, items, threads):
    if threads and threads > 1 and len(items) > 1:
        with ThreadPoolExecutor(max_workers=int(threads)) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


# ---------------------------------------------------------------------------
# Galerkin tensors
# ---------------------------------------------------------------------------

@dataclass
class SplineFamily:
    """Folded cubic B-splines on the uniform grid ``x_i = i h`` plus extras.

    Members ``0..n-1`` are the B-splines ``B_i`` centred at ``i h`` with the
    ghost spline ``B_{-1}`` folded in (``phi_0 = B_0 + 2 B_{-1}``,
    ``phi_1 = B_1 - B_{-1}``).  On ``[0, (n - 2) h]`` they sum to 1 and
    ``sum_i (i h) phi_i(x) = x``, which is what makes the Galerkin schemes
    conserve mass and energy.  ``extras`` are further piecewise-polynomial
    test functions (used for the atoms of measure-valued states).
    """

    n: int
    h: float
    extras: list = field(default_factory=list)

    @property
    def size(self):
        return self.n + len(self.extras)

    def core_family(self):
        return _pycore.Family(self.n, self.h, [(t.breaks, t.coeffs) for t in self.extras])

    def member(self, i: int) -> TestFunction:
        if i < self.n:
            return TestFunction.bspline(i, self.h, self.n)
        return self.extras[i - self.n]

    def values(self, x) -> np.ndarray:
        """Matrix ``(len(x), size)`` of member values."""
        return self.core_family().dense(np.atleast_1d(np.asarray(x, dtype=float)))


@dataclass
class GalerkinTensors:
    """Collision tensors for a grid plus optional atom locations.

    ``points`` are the grid nodes followed by the atom locations; ``jt[i, p, q]``
    is ``J[phi_i](points[p], points[q])``.  When the cubic part is present,
    ``tt[i, l, p, q] = int W dphi_i hat_l(x) sqrt(x) dx`` (density in x) and
    ``at[i, a, p, q] = K[phi_i](atom_a, points[p], points[q])``.
    """

    points: np.ndarray
    jt: np.ndarray
    tt: np.ndarray | None
    at: np.ndarray | None


def _cache_dir() -> Path | None:
    env = os.environ.get("SEMICLASSICAL_CACHE_DIR")
    if env == "":
        return None
    if env:
        return Path(env)
    return Path.home() / ".cache" / "semiclassical"


_CACHE_VERSION = 1


def _tensor_key(q, fam, atoms, cfg, want_cubic):
    h = hashlib.sha256()
    h.update(np.asarray(q.hat.samples(), dtype=float).tobytes())
    h.update(json.dumps({
        "v": _CACHE_VERSION, "kind": q.hat.core_kind, "scale": repr(q.hat.scale),
        "lam": q.lam, "eps": repr(q.eps), "n": fam.n, "h": repr(fam.h),
        "atoms": [repr(float(a)) for a in atoms], "cfg": cfg.key(), "cubic": bool(want_cubic),
    }, sort_keys=True).encode())
    for t in fam.extras:
        h.update(t.breaks.tobytes())
        h.update(t.coeffs.tobytes())
    return h.hexdigest()


def assemble_tensors(q: QuantumProfile, fam: SplineFamily, atoms=(),
                     cfg: KernelQuadConfig | None = None, want_cubic: bool = True,
                     threads: int = 1, use_cache: bool = True) -> GalerkinTensors:
    """Assemble (and cache on disk) the Galerkin collision tensors.

    The grid nodes are ``i h`` for ``i < fam.n``.  Pairs ``p <= q`` are
    computed independently (J is symmetric) and may run on several threads;
    results are placed by index so the tensors do not depend on scheduling.
    """
    cfg = cfg or _DEFAULT_CFG
    atoms = np.asarray(atoms, dtype=float).ravel()
    want_cubic = bool(want_cubic) and q.lam != 0
    cache = _cache_dir() if use_cache else None
    path = None
    if cache is not None:
        path = cache / f"tensors-{_tensor_key(q, fam, atoms, cfg, want_cubic)}.npz"
        if path.exists():
            try:
                with np.load(path) as data:
                    return GalerkinTensors(data["points"], data["jt"],
                                           data["tt"] if want_cubic else None,
                                           data["at"] if want_cubic else None)
            except (OSError, KeyError, ValueError):
                pass
    mod, prof, tol = _core_pair(q, cfg)
    cfam = fam.core_family()
    points = np.concatenate([np.arange(fam.n) * fam.h, atoms])
    npts = len(points)
    size = fam.size
    jt = np.zeros((size, npts, npts))
    tt = np.zeros((size, fam.n, npts, npts)) if want_cubic else None
    at = np.zeros((size, len(atoms), npts, npts)) if want_cubic else None
    pairs = [(p, r) for p in range(npts) for r in range(p, npts)]

    def one(pair):
        p, r = pair
        return mod.assemble_pair(prof, cfam, points[p], points[r], tol, want_cubic,
                                 atoms if want_cubic else ())

    for (p, r), (jv, tm, am) in zip(pairs, _map(one, pairs, threads)):
        jt[:, p, r] = jv
        jt[:, r, p] = jv
        if want_cubic:
            tt[:, :, p, r] = tm
            tt[:, :, r, p] = tm
            at[:, :, p, r] = am
            at[:, :, r, p] = am
    out = GalerkinTensors(points, jt, tt, at)
    if path is not None:
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(f".{os.getpid()}.tmp.npz")
            np.savez(tmp, points=points, jt=jt,
                     tt=tt if want_cubic else np.zeros(0), at=at if want_cubic else np.zeros(0))
            os.replace(tmp, path)
        except OSError:
            pass
    return out
