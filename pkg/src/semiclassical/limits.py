"""Semi-classical limit experiments.

This module runs three desk-scale studies.

* ``j_to_l_study`` measures the sup-distance between the quantum weak-form
  kernel ``J`` and the Landau kernel ``L`` on a box ``[delta, R]^2``.  The
  distance is computed for each ``eps`` in a decreasing list.
* ``cubic_decay_study`` tracks the size of the cubic (statistics) term as
  ``eps`` shrinks and fits its log-log slope.
* ``solution_convergence_study`` compares probe moments of Fermi-Dirac
  solutions with a Fokker-Planck-Landau solution from the same initial
  state.

Each study returns a :class:`StudyResult` holding a table and a list of
pass/fail gates.  ``StudyResult.verdict()`` turns these into the
machine-readable verdict block.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConstraintError, DomainError, SemiclassicalError
from .kernels import (KernelQuadConfig, QuantumProfile, TestFunction, j_grid, landau_kernel)
from .measures import RadialMeasure, cubic_form, moment
from .potential import HatPotential, gaussian, normalize, sup_linear_bound
from .solvers import SolveConfig, solve_fpl, solve_quantum

__all__ = [
    "LimitStudyConfig",
    "Gate",
    "StudyResult",
    "default_eps_list",
    "j_to_l_study",
    "cubic_decay_study",
    "solution_convergence_study",
    "monotone_with_tolerance",
    "lambda_independence",
]


def default_eps_list(k_min: int = 0, k_max: int = 6) -> tuple:
    return tuple(2.0 ** -k for k in range(k_min, k_max + 1))


def _default_phi():
    return (TestFunction.bump(1.5, 1.0),)


@dataclass(frozen=True)
class LimitStudyConfig:
    eps_list: tuple = field(default_factory=default_eps_list)
    R: float = 4.0
    grid_n: int = 8
    test_functions: tuple = field(default_factory=_default_phi)
    profile: HatPotential = field(default_factory=lambda: normalize(gaussian()))
    lam: int = -1
    kernel_cfg: KernelQuadConfig = field(default_factory=KernelQuadConfig)

    def __post_init__(self):
        eps = tuple(float(e) for e in self.eps_list)
        if not eps or any(e <= 0 for e in eps):
            raise DomainError("eps_list must contain positive values")
        if any(b >= a for a, b in zip(eps, eps[1:])):
            raise DomainError("eps_list must be strictly decreasing")
        if not self.R > 0:
            raise DomainError("R must be positive")
        if int(self.grid_n) < 1:
            raise DomainError("grid_n must be positive")
        if self.lam not in (-1, 0, 1):
            raise DomainError("lambda must be -1, 0 or +1")
        object.__setattr__(self, "eps_list", eps)
        object.__setattr__(self, "test_functions", tuple(self.test_functions))

    def profile_for(self, eps: float, lam: int | None = None) -> QuantumProfile:
        return QuantumProfile(self.profile, self.lam if lam is None else lam, eps)


@dataclass(frozen=True)
class Gate:
    name: str
    value: float | None
    threshold: float | None
    passed: bool | None
    note: str = ""

    def as_dict(self):
        out = {"name": self.name, "value": _num(self.value), "threshold": _num(self.threshold),
               "pass": self.passed}
        if self.note:
            out["note"] = self.note
        return out


def _num(v):
    if v is None:
        return None
    v = float(v)
    return float(f"{v:.17g}") if math.isfinite(v) else None


@dataclass
class StudyResult:
    study: str
    columns: list
    rows: list
    gates: list
    notes: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """True when no evaluated gate failed (unevaluated gates are ignored)."""
        return all(g.passed is not False for g in self.gates)

    def verdict(self) -> dict:
        return {"study": self.study, "gates": [g.as_dict() for g in self.gates]}

    def column(self, name) -> list:
        k = self.columns.index(name)
        return [r[k] for r in self.rows]


def monotone_with_tolerance(seq, rel: float = 0.05, allowed: int = 1):
    """Non-increasing check that tolerates ``allowed`` small inversions.

    Returns ``(ok, worst)`` where ``worst`` is the largest relative increase
    ``seq[k+1]/seq[k] - 1`` found (0 if the sequence never increases).
    """
    seq = [float(s) for s in seq]
    ups = [(b / a - 1.0) if a > 0 else math.inf for a, b in zip(seq, seq[1:]) if b > a]
    worst = max(ups, default=0.0)
    ok = len(ups) <= allowed and worst <= rel
    return ok, worst


def _axis_grid(cfg: LimitStudyConfig):
    delta = cfg.R / cfg.grid_n
    return delta * np.arange(1, cfg.grid_n + 1)


def j_to_l_study(cfg: LimitStudyConfig, threads: int = 1) -> StudyResult:
    """Sup-grid distance between ``J`` and ``L`` for every eps and test function."""
    g = _axis_grid(cfg)
    Y, Z = np.meshgrid(g, g, indexing="ij")
    env = np.sqrt(Y) + Y ** 0.25 + np.sqrt(Z) + Z ** 0.25
    rows, gates, notes = [], [], []
    for fi, phi in enumerate(cfg.test_functions):
        L = landau_kernel(phi, Y, Z)
        errs = []
        for eps in cfg.eps_list:
            q = cfg.profile_for(eps)
            failed = 0
            try:
                J = j_grid(q, phi, g, g, cfg.kernel_cfg, threads=threads)
            except (SemiclassicalError, ArithmeticError, ValueError) as exc:
                notes.append(f"eps={eps:g}, phi={phi.label}: {exc}")
                J = np.full_like(L, np.nan)
                failed = J.size
            bad = ~np.isfinite(J)
            failed = max(failed, int(bad.sum()))
            diff = np.where(bad, np.nan, np.abs(J - L))
            sup = float(np.nanmax(diff)) if np.any(~bad) else math.nan
            ratio = float(np.nanmax(np.abs(J) / env)) if np.any(~bad) else math.nan
            errs.append(sup)
            rows.append([phi.label, eps, cfg.lam, sup, ratio, failed])
        gates.extend(_convergence_gates(f"phi{fi}", errs))
    return StudyResult("j_to_l", ["phi", "eps", "lambda", "sup_error", "envelope_ratio", "failed_cells"],
                       rows, gates, notes)


def _convergence_gates(prefix, errs):
    finite = [e for e in errs if math.isfinite(e)]
    if len(finite) < 2:
        return [Gate(f"{prefix}_nonincreasing", None, 0.05, None, "insufficient points"),
                Gate(f"{prefix}_final_over_initial", None, 0.1, None, "insufficient points")]
    ok, worst = monotone_with_tolerance(errs)
    ratio = errs[-1] / errs[0] if errs[0] > 0 else math.inf
    return [Gate(f"{prefix}_nonincreasing", worst, 0.05, bool(ok and len(finite) == len(errs))),
            Gate(f"{prefix}_final_over_initial", ratio, 0.1, bool(ratio <= 0.1))]


def cubic_decay_study(cfg: LimitStudyConfig, F: RadialMeasure, phi: TestFunction | None = None,
                      threads: int = 1) -> StudyResult:
    """Size of the cubic term over the eps list and its fitted decay rate.

    Both normalizations of the constant are reported:
    ``|cubic| / (||phi''|| A ||F||_0^3 eps)`` and the same with ``A^2``.
    The slope is the least-squares fit of ``log|cubic|`` against ``log eps``
    over the four smallest eps values.
    """
    if cfg.lam == 0:
        raise DomainError("the cubic term needs lambda = -1 or +1")
    phi = phi or cfg.test_functions[0]
    mass = moment(F, [1.0])
    if not mass > 0:
        raise DomainError("F must have positive mass")
    A = sup_linear_bound(cfg.profile)
    scale = phi.sup_f2 * mass ** 3
    rows, vals = [], []
    for eps in cfg.eps_list:
        c = cubic_form(cfg.profile_for(eps), phi, F, cfg.kernel_cfg, threads=threads)
        c = c + 0.0  # normalize a signed zero
        vals.append(abs(c))
        rows.append([eps, cfg.lam, c, abs(c) / (scale * A * eps), abs(c) / (scale * A * A * eps)])
    gates = []
    eps = np.array(cfg.eps_list)
    v = np.array(vals)
    if np.all(v == 0.0):
        gates.append(Gate("slope_in_band", None, None, None, "cubic term identically zero"))
        gates.append(Gate("identically_zero", 0.0, 0.0, True))
        slope = None
    elif len(eps) < 2 or np.count_nonzero(v[-4:]) < 2:
        gates.append(Gate("slope_in_band", None, None, None, "insufficient points"))
        slope = None
    else:
        sel = slice(max(0, len(eps) - 4), None)
        mask = v[sel] > 0
        slope = float(np.polyfit(np.log(eps[sel][mask]), np.log(v[sel][mask]), 1)[0])
        gates.append(Gate("slope_lower", slope, 0.8, bool(slope >= 0.8)))
        gates.append(Gate("slope_upper", slope, 1.2, bool(slope <= 1.2)))
    if slope is not None:
        consts = np.array([r[3] for r in rows])
        gates.append(Gate("constant_bounded", float(consts.max()), None,
                          bool(np.all(np.isfinite(consts)))))
    result = StudyResult("cubic_decay", ["eps", "lambda", "cubic", "const_A", "const_A2"], rows, gates)
    result.notes.append(f"slope={slope}")
    return result


def solution_convergence_study(cfg: LimitStudyConfig, f0: RadialMeasure, T: float,
                               probes, solve_cfg: SolveConfig | None = None,
                               n_times: int = 5) -> StudyResult:
    """Probe-moment distance between quantum and FPL solutions.

    Every eps runs the lumped Galerkin quantum scheme.  The reference is the
    Galerkin Landau scheme on the same grid and basis.  The spatial
    discretization is therefore shared, and the measured discrepancy
    isolates the eps dependence.  States are compared at ``n_times``
    equally spaced times in ``(0, T]``.  The study is a heuristic desk-scale
    check, because convergence in the limit assumes an entropy equality the
    discrete solutions satisfy only approximately.
    """
    base = solve_cfg or SolveConfig()
    times = tuple(T * (k + 1) / n_times for k in range(n_times))
    scfg = SolveConfig(t_end=T, dt_init=base.dt_init, dt_min=base.dt_min, safety=base.safety,
                       conservation_tol=base.conservation_tol, projection=base.projection,
                       kernel_cfg=cfg.kernel_cfg, rtol=base.rtol, atol=base.atol,
                       max_steps=base.max_steps, threads=base.threads, save_at=times)
    probes = tuple(probes)

    def probe_table(traj):
        idx = [traj.times.index(t) for t in times]
        return np.array([[moment(traj.states[k], p) for p in probes] for k in idx])

    ref = probe_table(solve_fpl(f0, scfg, scheme="galerkin"))
    rows, disc, notes = [], [], []
    for eps in cfg.eps_list:
        q = cfg.profile_for(eps)
        if q.lam == -1 and np.any(f0.density > eps ** -3):
            notes.append(f"eps={eps:g} skipped: initial state above the Fermi-Dirac bound")
            rows.append([eps, cfg.lam, math.nan, "skipped"])
            continue
        try:
            traj = solve_quantum(q, f0, scfg)
        except (SemiclassicalError, ConstraintError) as exc:
            notes.append(f"eps={eps:g} failed: {exc}")
            rows.append([eps, cfg.lam, math.nan, "failed"])
            continue
        d = float(np.max(np.abs(probe_table(traj) - ref)))
        disc.append(d)
        rows.append([eps, cfg.lam, d, "ok"])
    gates = []
    if len(disc) < 2:
        gates.append(Gate("nonincreasing_last3", None, 0.0, None, "insufficient points"))
        gates.append(Gate("final_over_first", None, 0.2, None, "insufficient points"))
    else:
        tail = disc[-4:]
        worst = max([(b / a - 1.0) for a, b in zip(tail, tail[1:]) if b > a], default=0.0)
        gates.append(Gate("nonincreasing_last3", worst, 0.0, bool(worst == 0.0)))
        ratio = disc[-1] / disc[0]
        gates.append(Gate("final_over_first", ratio, 0.2, bool(ratio <= 0.2)))
    notes.append("heuristic: the discrete solutions satisfy the entropy equality only approximately")
    return StudyResult("solution_convergence", ["eps", "lambda", "max_discrepancy", "status"],
                       rows, gates, notes)


def lambda_independence(cfg: LimitStudyConfig, results: dict, threads: int = 1) -> list:
    """Compare the final-eps ``J`` grids of the ``lambda = -1`` and ``+1`` studies.

    ``results`` maps lambda to the :class:`StudyResult` of
    :func:`j_to_l_study`.  The gate passes when the largest grid difference
    is at most the sum of the two final sup-errors (per test function).
    """
    if -1 not in results or 1 not in results:
        return []
    g = _axis_grid(cfg)
    eps = cfg.eps_list[-1]
    gates = []
    for fi, phi in enumerate(cfg.test_functions):
        Jm = j_grid(cfg.profile_for(eps, -1), phi, g, g, cfg.kernel_cfg, threads=threads)
        Jp = j_grid(cfg.profile_for(eps, 1), phi, g, g, cfg.kernel_cfg, threads=threads)
        diff = float(np.nanmax(np.abs(Jm - Jp)))
        bound = 0.0
        for lam in (-1, 1):
            errs = [r[3] for r in results[lam].rows if r[0] == phi.label and r[1] == eps]
            bound += errs[0] if errs else math.nan
        ok = bool(math.isfinite(diff) and math.isfinite(bound) and diff <= bound)
        gates.append(Gate(f"phi{fi}_lambda_independence", diff, bound, ok))
    return gates
