"""Time integration of the isotropic collision equations.

Two families of discretizations are provided.

Quantum (MB / FD / BE), Galerkin weak form
    The unknowns are nodal values ``f_i`` on the uniform grid ``x_i = i h``.
    For the ``(y, z)`` integrals the measure is ``sum_p F_p delta_{x_p}``
    with ``F_p = w_p f_p``, where ``w_p`` are the hat weights.  The weak form
    is tested against the folded cubic B-splines ``phi_i`` and mass-lumped:

        w_i df_i/dt = sum_{p,q} J[phi_i](x_p, x_q) F_p F_q
                      + lam eps^3 sum_{p,q} (int K[phi_i](x, x_p, x_q) dF(x)) F_p F_q.

    Because ``sum_i phi_i = 1`` and ``sum_i x_i phi_i = x`` on the bulk of
    the grid, and every member is integrated on the same quadrature nodes,
    discrete mass and energy are conserved to rounding.  The exception is
    leakage through the last two cells.  Bose-Einstein states may carry
    atoms at fixed locations.  Each atom adds one unknown (its mass) and
    one narrow bump test function centred on it.

Fokker-Planck-Landau
    ``fv``: finite volumes with faces at ``j h`` and nodes at the
    ``sqrt(x)``-weighted cell centroids (so ``sum_i w_i x_i f_i`` is the
    exact energy of the piecewise-constant state).  The flux at face ``j``,

        G_j = 16 pi / 3 sum_k delta_k (x_j ^ x_k)^{3/2} (fbar_k Df_j - fbar_j Df_k),

    is antisymmetric in ``(j, k)``, which makes mass and energy conservation
    exact; the ``entropic`` variant uses log-mean face values and
    ``Dlog f`` so that ``H`` decreases exactly and Maxwellians are exact
    steady states.
    ``galerkin``: the weak form with the Landau kernel and the same
    B-spline family and lumping as the quantum scheme, used as the
    reference in the solution-level limit study.

Stepping is explicit Bogacki-Shampine 3(2) with step rejection on the
error estimate and on constraint violation.  The optional projection
``f <- f (alpha + beta x)`` restores mass and energy after every step.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConstraintError, DomainError, StiffFailureError
from .kernels import (KernelQuadConfig, QuantumProfile, SplineFamily, TestFunction,
                      assemble_tensors, landau_kernel)
from .measures import (RadialMeasure, entropy_classical, entropy_quantum, hat_weights,
                       landau_form, moment, quadratic_form, cubic_form)

__all__ = [
    "SolveConfig",
    "Trajectory",
    "QuantumGalerkin",
    "LandauGalerkin",
    "LandauFV",
    "fv_grid",
    "fv_measure",
    "uniform_measure",
    "assemble_quantum_rhs",
    "solve_quantum",
    "solve_bose_measure",
    "fpl_strong_rhs",
    "solve_fpl",
    "weak_consistency_check",
    "bs23_step",
]


@dataclass(frozen=True)
class SolveConfig:
    t_end: float = 1.0
    dt_init: float = 1e-3
    dt_min: float = 1e-12
    safety: float = 0.9
    conservation_tol: float = 1e-10
    projection: bool = True
    kernel_cfg: KernelQuadConfig = field(default_factory=KernelQuadConfig)
    rtol: float = 1e-6
    atol: float = 1e-10
    max_steps: int = 200_000
    threads: int = 1
    save_at: tuple = ()

    def __post_init__(self):
        if not self.t_end > 0:
            raise DomainError("t_end must be positive")
        if not 0 < self.dt_min <= self.dt_init:
            raise DomainError("need 0 < dt_min <= dt_init")
        if not 0 < self.safety <= 1:
            raise DomainError("safety must lie in (0, 1]")
        if not (self.rtol > 0 and self.atol > 0 and self.conservation_tol > 0):
            raise DomainError("tolerances must be positive")
        stops = tuple(sorted({float(t) for t in self.save_at}))
        if stops and not (stops[0] > 0 and stops[-1] <= self.t_end):
            raise DomainError("save_at times must lie in (0, t_end]")
        object.__setattr__(self, "save_at", stops)


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

def _f17(v):
    v = float(v)
    return float(f"{v:.17g}") if math.isfinite(v) else None


@dataclass
class Trajectory:
    """Stored states with per-step diagnostics.

    ``diagnostics[k]`` holds mass, energy, entropy, min_f, max_f, dt,
    drift (relative mass/energy deviation from the initial state),
    correction (projection magnitude ``max|alpha + beta x - 1|``) and
    momentum (identically 0 for isotropic states).
    """

    model: str
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    rejected: int = 0

    def column(self, key) -> np.ndarray:
        return np.array([d[key] if d[key] is not None else np.nan for d in self.diagnostics],
                        dtype=float)

    def jsonl(self) -> str:
        buf = io.StringIO()
        for t, s, d in zip(self.times, self.states, self.diagnostics):
            rec = {"t": _f17(t), "state": s.to_dict(),
                   "diagnostics": {k: (_f17(v) if isinstance(v, float) else v)
                                   for k, v in d.items()}}
            buf.write(json.dumps(rec, separators=(",", ":")) + "\n")
        return buf.getvalue()

    def summary_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t", "mass", "energy", "entropy", "drift", "dt"])
        for t, d in zip(self.times, self.diagnostics):
            w.writerow([_fmt(t)] + [_fmt(d[k]) for k in ("mass", "energy", "entropy", "drift", "dt")])
        return buf.getvalue()


def _fmt(v):
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "nan"
    return f"{float(v):.17g}"


# ---------------------------------------------------------------------------
# Grids
# ---------------------------------------------------------------------------

def uniform_measure(n: int, h: float, f, atoms=()) -> RadialMeasure:
    """Nodal state on ``x_i = i h`` (hat weights) from a callable density."""
    grid = np.arange(n) * float(h)
    return RadialMeasure(grid, np.asarray(f(grid), dtype=float), atoms)


def fv_grid(n: int, x_max: float):
    """Centroid nodes and cell weights of ``n`` equal cells on ``[0, x_max]``."""
    h = x_max / n
    a = np.arange(n) * h
    b = a + h
    w = (2.0 / 3.0) * (b ** 1.5 - a ** 1.5)
    x = (2.0 / 5.0) * (b ** 2.5 - a ** 2.5) / w
    return x, w


def fv_measure(n: int, x_max: float, f) -> RadialMeasure:
    x, w = fv_grid(n, x_max)
    return RadialMeasure(x, np.asarray(f(x), dtype=float), (), w)


def _uniform_spacing(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.size < 4 or grid[0] != 0.0:
        raise DomainError("the Galerkin schemes need a uniform grid starting at 0 (>= 4 nodes)")
    h = grid[1]
    if not np.allclose(grid, np.arange(grid.size) * h, rtol=0, atol=1e-12 * h * grid.size):
        raise DomainError("grid is not uniform")
    return float(h)


def _fv_spacing(grid):
    grid = np.asarray(grid, dtype=float)
    if grid.size < 4:
        raise DomainError("finite-volume grid needs >= 4 cells")
    if not grid[0] > 0:
        raise DomainError("state is not on a finite-volume grid (build it with fv_measure)")
    h = grid[0] / 0.6
    x, _ = fv_grid(grid.size, h * grid.size)
    if not np.allclose(x, grid, rtol=1e-12, atol=0):
        raise DomainError("state is not on a finite-volume grid (build it with fv_measure)")
    return h


# ---------------------------------------------------------------------------
# Semi-discrete systems
# ---------------------------------------------------------------------------

class _System:
    """Interface shared by the semi-discrete schemes."""

    model = "?"
    grid: np.ndarray
    weights: np.ndarray
    atom_locs: np.ndarray = np.zeros(0)

    def rhs(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def admissible(self, y: np.ndarray) -> bool:
        n = self.grid.size
        return bool(np.all(np.isfinite(y)) and np.all(y[:n] >= 0.0) and np.all(y[n:] > 0.0))

    def entropy(self, F: RadialMeasure):
        return entropy_classical(F)

    def measure(self, y: np.ndarray) -> RadialMeasure:
        n = self.grid.size
        atoms = list(zip(self.atom_locs.tolist(), y[n:].tolist()))
        return RadialMeasure(self.grid, y[:n].copy(), atoms, self.weights)

    def moments(self, y):
        n = self.grid.size
        f, m = y[:n], y[n:]
        mass = math.fsum(np.concatenate([self.weights * f, m]))
        energy = math.fsum(np.concatenate([self.weights * self.grid * f, m * self.atom_locs]))
        return mass, energy

    def project(self, y, target):
        """Restore ``(mass, energy)`` with the multiplier ``alpha + beta x``."""
        pts = np.concatenate([self.grid, self.atom_locs])
        wts = np.concatenate([self.weights, np.ones(self.atom_locs.size)])
        g = wts * y
        m0 = math.fsum(g)
        m1 = math.fsum(g * pts)
        m2 = math.fsum(g * pts * pts)
        det = m0 * m2 - m1 * m1
        if det <= 0.0 or not math.isfinite(det):
            return y, 0.0
        alpha = (target[0] * m2 - target[1] * m1) / det
        beta = (target[1] * m0 - target[0] * m1) / det
        mult = alpha + beta * pts
        support = y != 0.0
        corr = float(np.max(np.abs(mult[support] - 1.0))) if np.any(support) else 0.0
        return y * mult, corr


class QuantumGalerkin(_System):
    """Lumped Galerkin weak form of the MB / FD / BE equations."""

    def __init__(self, q: QuantumProfile, n: int, h: float, atoms=(),
                 cfg: KernelQuadConfig | None = None, threads: int = 1, use_cache: bool = True):
        self.q = q
        self.n = int(n)
        self.h = float(h)
        self.model = {-1: "fd", 0: "mb", 1: "be"}[q.lam]
        self.grid = np.arange(self.n) * self.h
        self.weights = hat_weights(self.grid)
        self.atom_locs = np.asarray(atoms, dtype=float).ravel()
        if self.atom_locs.size and q.lam != 1:
            raise DomainError("atoms are only allowed for Bose-Einstein states")
        extras = [TestFunction.bump(a, 0.5 * self.h) for a in self.atom_locs]
        self.family = SplineFamily(self.n, self.h, extras)
        self.tensors = assemble_tensors(q, self.family, self.atom_locs, cfg,
                                        want_cubic=q.lam != 0, threads=threads,
                                        use_cache=use_cache)
        na = self.atom_locs.size
        self.npts = self.n + na
        size = self.family.size
        self._jt = self.tensors.jt.reshape(size, -1)
        self._cubic = q.lam != 0
        if self._cubic:
            self._tt = self.tensors.tt.reshape(size * self.n, -1)
            self._at = self.tensors.at.reshape(size * na, -1) if na else None
        self._coef = q.lam * q.eps ** 3
        if na:
            # Rows: B-spline members (lumped density part + exact atom part),
            # then one row per atom bump.
            vals_nodes = self.family.values(self.grid)          # (n, size)
            vals_atoms = self.family.values(self.atom_locs)     # (na, size)
            M = np.zeros((size, self.n + na))
            M[:self.n, :self.n] = np.diag(self.weights)
            M[self.n:, :self.n] = (vals_nodes[:, self.n:] * self.weights[:, None]).T
            M[:, self.n:] = vals_atoms.T
            # The lumped node-0 mass already sits at x = 0, so an atom there
            # cannot be told apart from it (M would be singular).  Such an atom
            # absorbs the node-0 mass: its row pins f_0' = 0 and the folded
            # spline phi_0 (phi_0(0) = 1) acts as its test function.
            self._zero_rows = self.n + np.flatnonzero(self.atom_locs == 0.0)
            M[self._zero_rows] = 0.0
            M[self._zero_rows, 0] = 1.0
            self._lu = np.linalg.inv(M)
        else:
            self._lu = None
            self._zero_rows = np.zeros(0, dtype=int)

    def absorb_origin(self, y: np.ndarray) -> np.ndarray:
        """Move the node-0 density mass into an atom at 0 (if there is one)."""
        y = np.array(y, dtype=float)
        if self._zero_rows.size:
            y[self._zero_rows[0]] += self.weights[0] * y[0]
            y[0] = 0.0
        return y

    def entropy(self, F):
        if F.atoms:
            return None
        if self.q.lam == 0:
            return entropy_classical(F)
        return entropy_quantum(F, self.q.lam, self.q.eps)

    def admissible(self, y):
        if not super().admissible(y):
            return False
        if self.q.lam == -1 and np.any(y[:self.n] > self.q.eps ** -3):
            return False
        return True

    def collision(self, y):
        """Right-hand sides ``Q_i`` of the weak form (one per test function)."""
        f = y[:self.n]
        m = y[self.n:]
        F = np.concatenate([self.weights * f, m])
        FF = np.outer(F, F).ravel()
        Q = self._jt @ FF
        if self._cubic:
            size = self.family.size
            T = (self._tt @ FF).reshape(size, self.n)
            cub = T @ f
            if self._at is not None:
                cub = cub + (self._at @ FF).reshape(size, m.size) @ m
            Q = Q + self._coef * cub
        return Q

    def rhs(self, y):
        Q = self.collision(y)
        Q[self._zero_rows] = 0.0
        if self._lu is None:
            return Q / self.weights
        return self._lu @ Q


class LandauGalerkin(_System):
    """Weak FPL form with the Landau kernel on the B-spline family."""

    model = "fpl"

    def __init__(self, n: int, h: float):
        self.n = int(n)
        self.h = float(h)
        self.grid = np.arange(self.n) * self.h
        self.weights = hat_weights(self.grid)
        lt = np.empty((self.n, self.n, self.n))
        for i in range(self.n):
            lt[i] = landau_kernel(TestFunction.bspline(i, self.h, self.n),
                                  self.grid[:, None], self.grid[None, :])
        self._lt = lt.reshape(self.n, -1)

    def rhs(self, y):
        F = self.weights * y
        return (self._lt @ np.outer(F, F).ravel()) / self.weights


class LandauFV(_System):
    """Conservative finite-volume FPL operator (see module docstring)."""

    model = "fpl"

    def __init__(self, n: int, x_max: float, flux: str = "central"):
        if flux not in ("central", "entropic"):
            raise DomainError("flux must be 'central' or 'entropic'")
        self.flux = flux
        self.grid, self.weights = fv_grid(int(n), float(x_max))
        self.h = x_max / n
        faces = np.arange(1, n) * self.h
        self._delta = np.diff(self.grid)
        self._A = np.minimum(faces[:, None], faces[None, :]) ** 1.5
        self._c = 16.0 * math.pi / 3.0

    def face_flux(self, f):
        dl = self._delta
        if self.flux == "central":
            Df = np.diff(f) / dl
            fb = 0.5 * (f[1:] + f[:-1])
            return self._c * ((self._A @ (dl * fb)) * Df - (self._A @ (dl * Df)) * fb)
        with np.errstate(divide="ignore", invalid="ignore"):
            lf = np.log(f)
            dlog = np.diff(lf)
            fl, fr = f[:-1], f[1:]
            fb = np.where(np.abs(fr - fl) > 1e-12 * np.maximum(fl, fr), (fr - fl) / dlog,
                          0.5 * (fl + fr))
            fb = np.where((fl > 0) & (fr > 0), fb, 0.0)
            d = np.where(fb > 0, dlog / dl, 0.0)
        return self._c * fb * ((self._A @ (dl * fb)) * d - (self._A @ (dl * fb * d)))

    def rhs(self, y):
        G = self.face_flux(y)
        out = np.zeros_like(y)
        out[:-1] += G
        out[1:] -= G
        return out / self.weights


# ---------------------------------------------------------------------------
# Time stepping
# ---------------------------------------------------------------------------

def _record(traj, system, t, y, dt, corr, target):
    F = system.measure(y)
    mass, energy = system.moments(y)
    drift = max(abs(mass - target[0]) / max(abs(target[0]), 1e-300),
                abs(energy - target[1]) / max(abs(target[1]), 1e-300))
    ent = system.entropy(F)
    n = system.grid.size
    traj.times.append(float(t))
    traj.states.append(F)
    traj.diagnostics.append({
        "mass": mass, "energy": energy,
        "entropy": None if ent is None else float(ent),
        "min_f": float(np.min(y[:n])), "max_f": float(np.max(y[:n])),
        "dt": float(dt), "drift": float(drift), "correction": float(corr), "momentum": 0.0,
    })


def bs23_step(rhs, y: np.ndarray, h: float, k1: np.ndarray | None = None):
    """One Bogacki-Shampine 3(2) step.

    Returns ``(y_new, err, k4)`` where ``err`` is the embedded error
    estimate and ``k4 = rhs(y_new)`` (first stage of the next step).
    """
    if k1 is None:
        k1 = rhs(y)
    k2 = rhs(y + 0.5 * h * k1)
    k3 = rhs(y + 0.75 * h * k2)
    y_new = y + h * ((2.0 / 9.0) * k1 + (1.0 / 3.0) * k2 + (4.0 / 9.0) * k3)
    k4 = rhs(y_new)
    err = h * ((-5.0 / 72.0) * k1 + (1.0 / 12.0) * k2 + (1.0 / 9.0) * k3 - 0.125 * k4)
    return y_new, err, k4


def _integrate(system: _System, y0: np.ndarray, cfg: SolveConfig) -> Trajectory:
    traj = Trajectory(system.model)
    y = np.array(y0, dtype=float)
    if not system.admissible(y):
        raise ConstraintError("initial state violates the constraints of the model")
    target = system.moments(y)
    _record(traj, system, 0.0, y, 0.0, 0.0, target)
    t = 0.0
    dt = min(cfg.dt_init, cfg.t_end)
    k1 = system.rhs(y)
    steps = 0
    # steps are shortened so that every requested output time is hit exactly
    stops = [s for s in cfg.save_at if s < cfg.t_end] + [cfg.t_end]
    while t < cfg.t_end:
        if steps >= cfg.max_steps:
            raise StiffFailureError(f"max_steps={cfg.max_steps} reached at t={t:.6g}", traj)
        stop = stops[0]
        last = t + dt >= stop * (1 - 1e-14)
        h = stop - t if last else dt
        y_new, err, k4 = bs23_step(system.rhs, y, h, k1)
        scale = cfg.atol + cfg.rtol * np.maximum(np.abs(y), np.abs(y_new))
        enorm = float(np.max(np.abs(err) / scale)) if err.size else 0.0
        ok = math.isfinite(enorm) and enorm <= 1.0
        corr = 0.0
        if ok:
            if cfg.projection:
                y_new, corr = system.project(y_new, target)
            ok = system.admissible(y_new)
            if not ok:
                dt = 0.5 * h
        else:
            factor = 0.2 if not math.isfinite(enorm) else max(0.2, cfg.safety * enorm ** (-1.0 / 3.0))
            dt = h * factor
        if not ok:
            traj.rejected += 1
            if dt < cfg.dt_min:
                raise StiffFailureError(f"step size fell below dt_min at t={t:.6g}", traj)
            continue
        if last:
            t = stops.pop(0)
        else:
            t = t + h
        y = y_new
        steps += 1
        _record(traj, system, t, y, h, corr, target)
        growth = 5.0 if enorm == 0.0 else min(5.0, max(0.2, cfg.safety * enorm ** (-1.0 / 3.0)))
        dt = max(h * growth, cfg.dt_min)
        k1 = system.rhs(y) if cfg.projection else k4
    return traj


# ---------------------------------------------------------------------------
# Public entry points
# ---------------------------------------------------------------------------

@lru_cache(maxsize=8)
def _galerkin_system(q, n, h, atoms, cfg, threads):
    return QuantumGalerkin(q, n, h, atoms, cfg, threads)


def _quantum_system(q, F, cfg: SolveConfig | None):
    kcfg = cfg.kernel_cfg if cfg is not None else KernelQuadConfig()
    threads = cfg.threads if cfg is not None else 1
    h = _uniform_spacing(F.grid)
    return _galerkin_system(q, F.grid.size, h, tuple(F.atom_locations.tolist()), kcfg, threads)


def assemble_quantum_rhs(q: QuantumProfile, F: RadialMeasure,
                         cfg: SolveConfig | KernelQuadConfig | None = None) -> np.ndarray:
    """``df/dt`` of the lumped Galerkin weak form (atom mass rates appended)."""
    if isinstance(cfg, KernelQuadConfig):
        cfg = SolveConfig(kernel_cfg=cfg)
    system = _quantum_system(q, F, cfg)
    y = np.concatenate([F.density, F.atom_masses])
    return system.rhs(y)


def solve_quantum(q: QuantumProfile, f0: RadialMeasure, cfg: SolveConfig | None = None) -> Trajectory:
    """Evolve an atom-free state under the MB (lam=0), FD (-1) or BE (+1) weak form."""
    cfg = cfg or SolveConfig()
    if f0.atoms:
        raise DomainError("solve_quantum takes densities; use solve_bose_measure for atoms")
    if q.lam == -1 and np.any(f0.density > q.eps ** -3):
        raise ConstraintError("initial density exceeds the Fermi-Dirac bound eps^-3")
    system = _quantum_system(q, f0, cfg)
    return _integrate(system, f0.density, cfg)


def solve_bose_measure(q: QuantumProfile, F0: RadialMeasure, cfg: SolveConfig | None = None) -> Trajectory:
    """Bose-Einstein evolution of a density plus atoms at fixed locations.

    An atom at ``x = 0`` first absorbs the lumped node-0 density mass (same
    point, so mass and energy are unchanged) and ``f_0`` stays 0 afterwards.
    """
    if q.lam != 1:
        raise DomainError("solve_bose_measure needs lambda = +1")
    cfg = cfg or SolveConfig()
    system = _quantum_system(q, F0, cfg)
    y0 = system.absorb_origin(np.concatenate([F0.density, F0.atom_masses]))
    return _integrate(system, y0, cfg)


@lru_cache(maxsize=8)
def _fv_system(n, x_max, flux):
    return LandauFV(n, x_max, flux)


def fpl_strong_rhs(f: RadialMeasure, flux: str = "central") -> np.ndarray:
    """Finite-volume FPL rate ``df/dt`` for a state on an :func:`fv_grid`."""
    if f.atoms:
        raise DomainError("the strong FPL form takes densities only")
    h = _fv_spacing(f.grid)
    return _fv_system(f.grid.size, h * f.grid.size, flux).rhs(f.density)


def solve_fpl(f0: RadialMeasure, cfg: SolveConfig | None = None, scheme: str = "fv",
              flux: str = "central") -> Trajectory:
    """Evolve the isotropic FPL equation.

    ``scheme="fv"`` needs a state built with :func:`fv_measure`;
    ``scheme="galerkin"`` a nodal state on ``x_i = i h`` (the quantum grid).
    """
    cfg = cfg or SolveConfig()
    if f0.atoms:
        raise DomainError("solve_fpl takes densities only")
    if scheme == "fv":
        h = _fv_spacing(f0.grid)
        system = _fv_system(f0.grid.size, h * f0.grid.size, flux)
    elif scheme == "galerkin":
        h = _uniform_spacing(f0.grid)
        system = LandauGalerkin(f0.grid.size, h)
    else:
        raise DomainError("scheme must be 'fv' or 'galerkin'")
    return _integrate(system, f0.density, cfg)


def weak_consistency_check(traj: Trajectory, phi: TestFunction, model="fpl",
                           cfg: KernelQuadConfig | None = None, stride: int = 1) -> float:
    """Largest defect between ``d/dt int phi dF_t`` and the weak-form right side.

    The time derivative is the second-order three-point formula on the
    (possibly nonuniform) stored times.  ``model`` is ``"fpl"`` or a
    :class:`QuantumProfile`.  ``stride`` evaluates every ``stride``-th
    interior state (the quantum right side costs one J per grid pair).
    """
    if len(traj.times) < 3:
        raise DomainError("need at least 3 stored states")
    t = np.asarray(traj.times)
    m = np.array([moment(s, phi) for s in traj.states])
    worst = 0.0
    for k in range(1, len(t) - 1, max(1, int(stride))):
        h1, h2 = t[k] - t[k - 1], t[k + 1] - t[k]
        deriv = (-h2 / (h1 * (h1 + h2)) * m[k - 1] + (h2 - h1) / (h1 * h2) * m[k]
                 + h1 / (h2 * (h1 + h2)) * m[k + 1])
        F = traj.states[k]
        if isinstance(model, QuantumProfile):
            rhs = quadratic_form(model, phi, F, cfg) + cubic_form(model, phi, F, cfg)
        elif model == "fpl":
            rhs = landau_form(phi, F)
        else:
            raise DomainError("model must be 'fpl' or a QuantumProfile")
        worst = max(worst, abs(deriv - rhs))
    return float(worst)
