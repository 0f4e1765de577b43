"""Command-line front-end.

Subcommands: ``oracle-check``, ``limit-study``, ``cubic-study``,
``convergence-study`` and ``solve``.  Every command reads an optional JSON
configuration, validates it against the bundled schema, merges it over the
defaults and writes CSV/JSON artifacts into the output directory.

Exit codes: 0 all gates pass, 1 a gate failed, 2 configuration error,
3 solver failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import io
import json
import math
import sys
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .errors import ConfigError, ConstraintError, DomainError, SemiclassicalError, StiffFailureError
from .kernels import KernelQuadConfig, QuantumProfile, TestFunction
from .limits import (Gate, LimitStudyConfig, cubic_decay_study, default_eps_list, j_to_l_study,
                     lambda_independence, solution_convergence_study)
from .measures import RadialMeasure
from .oracles import oracle_suite
from .potential import get_profile, normalize
from .solvers import (SolveConfig, fv_measure, solve_bose_measure, solve_fpl, solve_quantum,
                      uniform_measure)

SCHEMA_VERSION = 1

EXIT_PASS, EXIT_GATE, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3

DEFAULTS = {
    "schema_version": SCHEMA_VERSION,
    "profile": {"name": "gaussian", "normalized": True},
    "lambda": -1,
    "eps": 0.25,
    "eps_list": list(default_eps_list()),
    "model": "fd",
    "grid": {"x_max": 21.0, "n": 28},
    "ic": {"preset": "bump", "center": 1.5, "width": 1.0, "height": 1.0},
    "solve": {"t_end": 1.0, "dt_init": 1e-3, "dt_min": 1e-12, "safety": 0.9,
              "conservation_tol": 1e-10, "projection": True, "rtol": 1e-6, "atol": 1e-10,
              "max_steps": 200000, "fpl_scheme": "fv", "fpl_flux": "central"},
    "kernel": {"abs_tol": 1e-10, "rel_tol": 1e-9, "max_depth": 16, "theta_points": 8,
               "s_points": 8},
    "study": {"R": 4.0, "grid_n": 8, "test_functions": [{"center": 1.5, "width": 1.0}],
              "cubic_ic": {"preset": "two-bumps", "center": 1.0, "width": 0.5,
                           "center2": 2.5, "width2": 0.75, "height2": 0.5},
              "T": 0.5, "n_times": 5,
              "probes": [{"center": 1.0, "width": 0.75}, {"center": 2.0, "width": 1.0},
                         {"center": 3.0, "width": 1.5}]},
    "oracle": {"samples": 1_000_000, "configs": 12, "seed": 20240611},
    "output_dir": "out",
}

# per-step gate thresholds for ``solve``
PROJECTED_DRIFT_TOL = 1e-13
ENTROPY_TOL = 1e-6
CORRECTION_TOL = 1e-5

MODEL_LAMBDA = {"fd": -1, "mb": 0, "be": 1, "be-measure": 1}


def load_schema() -> dict:
    text = resources.files("semiclassical").joinpath("schemas/experiment.schema.json").read_text()
    return json.loads(text)


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        # initial-condition blocks are replaced whole so presets do not mix
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("ic", "cubic_ic"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def resolve_config(user: dict | None, out: str | None = None, seed: int | None = None) -> dict:
    """Validate ``user`` against the schema and merge it over :data:`DEFAULTS`."""
    user = {} if user is None else user
    schema = load_schema()
    try:
        jsonschema.validate(user, schema)
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigError(f"config invalid at {path}: {exc.message}") from None
    cfg = _merge(DEFAULTS, user)
    if out is not None:
        cfg["output_dir"] = out
    if seed is not None:
        if not 0 <= seed < 2 ** 64:
            raise ConfigError("--seed must be an unsigned 64-bit integer")
        cfg["oracle"]["seed"] = seed
    try:
        jsonschema.validate(cfg, schema)
    except jsonschema.ValidationError as exc:
        raise ConfigError(f"merged config invalid: {exc.message}") from None
    eps = cfg["eps_list"]
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError("eps_list must be strictly decreasing")
    return cfg


def config_hash(cfg: dict) -> str:
    payload = {k: v for k, v in cfg.items() if k != "output_dir"}
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def provenance(cfg: dict, command: str) -> dict:
    prof = cfg["profile"]
    name = prof["name"] + (" (normalized)" if prof["normalized"] else "")
    return {"config_sha256": config_hash(cfg), "profile": name, "schema_version": SCHEMA_VERSION,
            "command": command, "package_version": __version__}


# ---------------------------------------------------------------------------
# Formatting
# ---------------------------------------------------------------------------

def fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.17g}" if math.isfinite(v) else "nan"
    return str(v)


def csv_text(prov: dict, header: list, rows: list) -> str:
    buf = io.StringIO()
    for k, v in prov.items():
        buf.write(f"# {k}={v}\n")
    w = csv.writer(buf, lineterminator="\n", quoting=csv.QUOTE_MINIMAL)
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) for v in r])
    return buf.getvalue()


def _json_num(v):
    if isinstance(v, dict):
        return {k: _json_num(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_json_num(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return float(f"{v:.17g}") if math.isfinite(v) else None
    if isinstance(v, np.integer):
        return int(v)
    return v


def json_text(obj) -> str:
    return json.dumps(_json_num(obj), indent=2) + "\n"


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(text)


def _verdict_doc(prov, verdicts, warnings=()):
    ok = all(g["pass"] is not False for v in verdicts for g in v["gates"])
    doc = {"provenance": prov, "pass": ok, "verdicts": verdicts}
    if warnings:
        doc["warnings"] = list(warnings)
    return doc, ok


# ---------------------------------------------------------------------------
# Builders
# ---------------------------------------------------------------------------

def build_profile(cfg: dict):
    try:
        hat = get_profile(cfg["profile"]["name"])
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
    return normalize(hat) if cfg["profile"]["normalized"] else hat


def build_kernel_cfg(cfg: dict) -> KernelQuadConfig:
    return KernelQuadConfig(**cfg["kernel"])


def build_bump(spec: dict) -> TestFunction:
    return TestFunction.bump(spec["center"], spec["width"], spec.get("height", 1.0))


def initial_density(ic: dict):
    """Callable density and atom list of an initial-condition preset."""
    preset = ic["preset"]
    c, w, hgt = ic.get("center", 1.5), ic.get("width", 1.0), ic.get("height", 1.0)
    atoms = ()
    if preset == "bump":
        f = TestFunction.bump(c, w, hgt)
    elif preset == "maxwellian":
        a, temp = ic.get("amplitude", 1.0), ic.get("temperature", 1.0)

        def f(x):
            return a * np.exp(-np.asarray(x, dtype=float) / temp)
    elif preset == "two-bumps":
        b1 = TestFunction.bump(c, w, hgt)
        b2 = TestFunction.bump(ic.get("center2", c + 2 * w), ic.get("width2", w),
                               ic.get("height2", hgt))

        def f(x):
            return b1(x) + b2(x)
    elif preset == "atom+bump":
        f = TestFunction.bump(c, w, hgt)
        atoms = ((ic.get("atom_location", 0.0), ic.get("atom_mass", 0.1)),)
    else:  # the schema rejects anything else
        raise ConfigError(f"unknown initial condition preset {preset!r}")
    return f, atoms


def nodal_state(cfg: dict, ic: dict | None = None) -> RadialMeasure:
    f, atoms = initial_density(ic or cfg["ic"])
    n, x_max = cfg["grid"]["n"], cfg["grid"]["x_max"]
    return uniform_measure(n, x_max / n, f, atoms)


def build_solve_cfg(cfg: dict, **over) -> SolveConfig:
    s = {k: v for k, v in cfg["solve"].items() if k not in ("fpl_scheme", "fpl_flux")}
    s.update(over)
    return SolveConfig(kernel_cfg=build_kernel_cfg(cfg), **s)


def build_study_cfg(cfg: dict, lam: int | None = None, eps_list=None) -> LimitStudyConfig:
    st = cfg["study"]
    return LimitStudyConfig(eps_list=tuple(eps_list or cfg["eps_list"]), R=st["R"], grid_n=st["grid_n"],
                            test_functions=tuple(build_bump(b) for b in st["test_functions"]),
                            profile=build_profile(cfg), lam=cfg["lambda"] if lam is None else lam,
                            kernel_cfg=build_kernel_cfg(cfg))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_oracle_check(cfg: dict, threads: int = 1) -> int:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    prov = provenance(cfg, "oracle-check")
    o = cfg["oracle"]
    rows = oracle_suite(o["samples"], o["seed"], o["configs"], threads=threads)
    _write(out / "oracle_report.csv",
           csv_text(prov, ["name", "value", "reference", "error", "tolerance", "pass"],
                    [[r.name, r.value, r.reference, r.error, r.tolerance, r.passed] for r in rows]))
    gates = [Gate(r.name, r.error, r.tolerance, r.passed).as_dict() for r in rows]
    doc, ok = _verdict_doc(prov, [{"study": "oracles", "gates": gates}])
    _write(out / "verdict.json", json_text(doc))
    return EXIT_PASS if ok else EXIT_GATE


def _jl_rows(results):
    rows = []
    for lam, res in results.items():
        rows.extend(res.rows)
    return rows


def _run_cubic(cfg, threads):
    verdicts, rows, notes = [], [], []
    lams = [lam for lam in cfg.get("lambdas", [cfg["lambda"]]) if lam != 0] or [-1, 1]
    F = nodal_state(cfg, cfg["study"]["cubic_ic"])
    for lam in lams:
        res = cubic_decay_study(build_study_cfg(cfg, lam), F, threads=threads)
        rows.extend(res.rows)
        verdicts.append({"study": f"cubic_decay[lambda={lam:+d}]",
                         "gates": [g.as_dict() for g in res.gates]})
        notes.extend(res.notes)
    return verdicts, rows


def cmd_limit_study(cfg: dict, threads: int = 1) -> int:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    prov = provenance(cfg, "limit-study")
    lams = cfg.get("lambdas", [cfg["lambda"]])
    results = {}
    verdicts = []
    for lam in lams:
        scfg = build_study_cfg(cfg, lam)
        res = j_to_l_study(scfg, threads=threads)
        results[lam] = res
        verdicts.append({"study": f"j_to_l[lambda={lam:+d}]", "gates": [g.as_dict() for g in res.gates]})
    indep = lambda_independence(build_study_cfg(cfg), results, threads=threads)
    if indep:
        verdicts.append({"study": "lambda_independence", "gates": [g.as_dict() for g in indep]})
    _write(out / "jl_study.csv",
           csv_text(prov, ["phi", "eps", "lambda", "sup_error", "envelope_ratio", "failed_cells"],
                    _jl_rows(results)))
    cv, crows = _run_cubic(cfg, threads)
    verdicts.extend(cv)
    _write(out / "cubic_study.csv",
           csv_text(prov, ["eps", "lambda", "cubic", "const_A", "const_A2"], crows))
    doc, ok = _verdict_doc(prov, verdicts)
    _write(out / "verdict.json", json_text(doc))
    return EXIT_PASS if ok else EXIT_GATE


def cmd_cubic_study(cfg: dict, threads: int = 1) -> int:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    prov = provenance(cfg, "cubic-study")
    verdicts, rows = _run_cubic(cfg, threads)
    _write(out / "cubic_study.csv",
           csv_text(prov, ["eps", "lambda", "cubic", "const_A", "const_A2"], rows))
    doc, ok = _verdict_doc(prov, verdicts)
    _write(out / "verdict.json", json_text(doc))
    return EXIT_PASS if ok else EXIT_GATE


def cmd_convergence_study(cfg: dict, threads: int = 1) -> int:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    prov = provenance(cfg, "convergence-study")
    st = cfg["study"]
    scfg = build_study_cfg(cfg)
    f0 = nodal_state(cfg)
    if f0.atoms:
        raise ConfigError("the convergence study takes an atom-free initial condition")
    res = solution_convergence_study(scfg, f0, st["T"], [build_bump(p) for p in st["probes"]],
                                     build_solve_cfg(cfg, threads=threads), n_times=st["n_times"])
    _write(out / "convergence_study.csv",
           csv_text(prov, ["eps", "lambda", "max_discrepancy", "status"], res.rows))
    doc, ok = _verdict_doc(prov, [res.verdict()], res.notes)
    _write(out / "verdict.json", json_text(doc))
    return EXIT_PASS if ok else EXIT_GATE


def solve_gates(traj, cfg: dict, eps: float | None):
    """Conservation, entropy, correction and bound gates of one trajectory."""
    s = cfg["solve"]
    drift = float(np.nanmax(traj.column("drift")))
    tol = PROJECTED_DRIFT_TOL if s["projection"] else s["conservation_tol"]
    gates = [Gate("conservation_drift", drift, tol, bool(drift <= tol))]
    ent = traj.column("entropy")
    if np.all(np.isfinite(ent)) and ent.size > 1:
        rise = float(max(np.max(np.diff(ent)), 0.0))
        gates.append(Gate("entropy_nonincreasing", rise, ENTROPY_TOL, bool(rise <= ENTROPY_TOL)))
    else:
        gates.append(Gate("entropy_nonincreasing", None, ENTROPY_TOL, None,
                          "entropy undefined for states with atoms"))
    corr = float(np.max(traj.column("correction")))
    gates.append(Gate("projection_correction", corr, CORRECTION_TOL, bool(corr <= CORRECTION_TOL)))
    if traj.model == "fd":
        lo = float(np.min(traj.column("min_f")))
        hi = float(np.max(traj.column("max_f")))
        gates.append(Gate("fd_lower_bound", lo, 0.0, bool(lo >= 0.0)))
        gates.append(Gate("fd_upper_bound", hi, eps ** -3, bool(hi <= eps ** -3)))
    warnings = []
    if corr > 100 * s["conservation_tol"]:
        warnings.append("projection correction exceeds 100x conservation_tol: "
                        "the truncated domain is under-resolved")
    return gates, warnings


def cmd_solve(cfg: dict, threads: int = 1) -> int:
    out = Path(cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    prov = provenance(cfg, "solve")
    model = cfg["model"]
    scfg = build_solve_cfg(cfg, threads=threads)
    eps = cfg["eps"]
    failure = None
    try:
        if model == "fpl":
            f, atoms = initial_density(cfg["ic"])
            if atoms:
                raise ConfigError("the FPL solver takes an atom-free initial condition")
            scheme = cfg["solve"]["fpl_scheme"]
            f0 = fv_measure(cfg["grid"]["n"], cfg["grid"]["x_max"], f) if scheme == "fv" \
                else nodal_state(cfg)
            traj = solve_fpl(f0, scfg, scheme=scheme, flux=cfg["solve"]["fpl_flux"])
        else:
            q = QuantumProfile(build_profile(cfg), MODEL_LAMBDA[model], eps)
            f0 = nodal_state(cfg)
            if model == "be-measure":
                traj = solve_bose_measure(q, f0, scfg)
            else:
                if f0.atoms:
                    raise ConfigError("atoms are only allowed with model 'be-measure'")
                traj = solve_quantum(q, f0, scfg)
    except StiffFailureError as exc:
        traj, failure = exc.trajectory, str(exc)
    except (ConstraintError, DomainError) as exc:
        raise ConfigError(str(exc)) from None
    header = json.dumps(_json_num({"provenance": prov}), separators=(",", ":")) + "\n"
    _write(out / "trajectory.jsonl", header + traj.jsonl())
    summary = traj.summary_csv()
    _write(out / "summary.csv", "".join(f"# {k}={v}\n" for k, v in prov.items()) + summary)
    gates, warnings = solve_gates(traj, cfg, eps)
    if failure:
        warnings.append(f"solver failure: {failure}")
    doc, ok = _verdict_doc(prov, [{"study": f"solve[{model}]", "gates": [g.as_dict() for g in gates]}],
                           warnings)
    _write(out / "verdict.json", json_text(doc))
    if failure:
        return EXIT_SOLVER
    return EXIT_PASS if ok else EXIT_GATE


COMMANDS = {
    "oracle-check": cmd_oracle_check,
    "limit-study": cmd_limit_study,
    "cubic-study": cmd_cubic_study,
    "convergence-study": cmd_convergence_study,
    "solve": cmd_solve,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="semiclassical", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment configuration")
        p.add_argument("--out", help="output directory (overrides output_dir)")
        p.add_argument("--threads", type=int, default=1, help="worker thread cap")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed (oracle Monte Carlo)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        user = None
        if args.config is not None:
            try:
                user = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from None
        if args.threads < 1:
            raise ConfigError("--threads must be >= 1")
        cfg = resolve_config(user, args.out, args.seed)
        return COMMANDS[args.command](cfg, threads=args.threads)
    except (ConfigError, DomainError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except StiffFailureError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except SemiclassicalError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
