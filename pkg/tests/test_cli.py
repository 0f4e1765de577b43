import csv
import json

import pytest

from semiclassical import cli

FAST_ORACLE = {"oracle": {"samples": 20000, "configs": 12}}


def run(tmp_path, cmd, config=None, *extra, name="out"):
    out = tmp_path / name
    argv = [cmd, "--out", str(out)]
    if config is not None:
        path = tmp_path / f"{name.replace('/', '_')}.json"
        path.write_text(config if isinstance(config, str) else json.dumps(config))
        argv += ["--config", str(path)]
    return cli.main(argv + list(extra)), out


def verdict(out):
    return json.loads((out / "verdict.json").read_text())


def table(path):
    lines = path.read_text().splitlines()
    meta = [ln for ln in lines if ln.startswith("#")]
    body = list(csv.reader([ln for ln in lines if not ln.startswith("#")]))
    return meta, body


# -- configuration ---------------------------------------------------------------

def test_defaults_validate_against_schema():
    cfg = cli.resolve_config(None)
    assert cfg["grid"] == {"x_max": 21.0, "n": 28}
    assert cfg["eps_list"] == [2.0 ** -k for k in range(7)]


def test_merge_replaces_initial_condition_whole():
    cfg = cli.resolve_config({"ic": {"preset": "maxwellian", "temperature": 2.0}})
    assert cfg["ic"] == {"preset": "maxwellian", "temperature": 2.0}
    assert cfg["solve"]["t_end"] == 1.0


def test_config_hash_ignores_output_dir():
    a = cli.resolve_config({"eps": 0.5}, out="a")
    b = cli.resolve_config({"eps": 0.5}, out="b")
    assert cli.config_hash(a) == cli.config_hash(b)
    assert cli.config_hash(a) != cli.config_hash(cli.resolve_config({"eps": 0.25}))


@pytest.mark.parametrize("config", [
    {"oracle": {"samples": 100}},
    {"profile": {"name": "lorentzian"}},
    {"eps_list": [0.5, 1.0]},
    {"grid": {"n": 2}},
    {"unknown_key": 1},
    {"ic": {"preset": "three-bumps"}},
    "{not json",
])
def test_config_errors_exit_2(tmp_path, config):
    code, _ = run(tmp_path, "oracle-check", config)
    assert code == 2


def test_bad_flags_exit_2(tmp_path):
    assert run(tmp_path, "oracle-check", FAST_ORACLE, "--threads", "0")[0] == 2
    assert run(tmp_path, "oracle-check", FAST_ORACLE, "--seed", str(2 ** 64))[0] == 2
    assert cli.main(["solve", "--config", str(tmp_path / "missing.json")]) == 2


def test_float_formatting():
    assert cli.fmt(0.1) == "0.10000000000000001"
    assert cli.fmt(True) == "true" and cli.fmt(None) == "" and cli.fmt(float("nan")) == "nan"
    assert cli.fmt(3) == "3"


# -- oracle-check ------------------------------------------------------------------

def test_oracle_check_passes_and_creates_dirs(tmp_path):
    code, out = run(tmp_path, "oracle-check", FAST_ORACLE, name="deep/nested")
    assert code == 0
    meta, body = table(out / "oracle_report.csv")
    assert meta[0].startswith("# config_sha256=")
    assert any(m == "# profile=gaussian (normalized)" for m in meta)
    assert any(m == "# schema_version=1" for m in meta)
    assert body[0] == ["name", "value", "reference", "error", "tolerance", "pass"]
    assert len(body) - 1 >= 12
    v = verdict(out)
    assert v["pass"] is True
    assert list(v)[0] == "provenance"


def test_oracle_check_byte_identical(tmp_path):
    _, a = run(tmp_path, "oracle-check", FAST_ORACLE, "--seed", "7", name="a")
    _, b = run(tmp_path, "oracle-check", FAST_ORACLE, "--seed", "7", name="b")
    for f in ("oracle_report.csv", "verdict.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()
    _, c = run(tmp_path, "oracle-check", FAST_ORACLE, "--seed", "8", name="c")
    assert (a / "oracle_report.csv").read_bytes() != (c / "oracle_report.csv").read_bytes()


# -- studies ---------------------------------------------------------------------

def test_limit_study_single_eps_reports_insufficient_points(tmp_path):
    config = {"eps_list": [0.5], "lambdas": [-1], "study": {"grid_n": 2}}
    code, out = run(tmp_path, "limit-study", config)
    assert code == 0
    v = verdict(out)
    gates = [g for block in v["verdicts"] for g in block["gates"]]
    assert gates and all(g["pass"] is None for g in gates)
    assert all(g["note"] == "insufficient points" for g in gates)
    for f in ("jl_study.csv", "cubic_study.csv"):
        meta, body = table(out / f)
        assert meta[0].startswith("# config_sha256=") and len(body) == 2


def test_cubic_study_command(tmp_path):
    code, out = run(tmp_path, "cubic-study", {"eps_list": [0.5], "lambdas": [1]})
    assert code == 0
    _, body = table(out / "cubic_study.csv")
    assert body[0] == ["eps", "lambda", "cubic", "const_A", "const_A2"]
    assert body[1][:2] == ["0.5", "1"]


def test_convergence_study_command(tmp_path):
    config = {"eps_list": [0.5], "grid": {"x_max": 7.5, "n": 10},
              "study": {"T": 0.05, "n_times": 2}}
    code, out = run(tmp_path, "convergence-study", config)
    assert code == 0
    _, body = table(out / "convergence_study.csv")
    assert body[1][3] == "ok"
    assert any("heuristic" in w for w in verdict(out)["warnings"])


# -- solve -------------------------------------------------------------------------

FPL_MAXWELLIAN = {"model": "fpl", "grid": {"x_max": 32.0, "n": 64},
                  "ic": {"preset": "maxwellian"}, "solve": {"t_end": 0.5}}


def test_solve_fpl_maxwellian(tmp_path):
    code, out = run(tmp_path, "solve", FPL_MAXWELLIAN)
    assert code == 0
    lines = (out / "trajectory.jsonl").read_text().splitlines()
    head = json.loads(lines[0])
    assert set(head) == {"provenance"}
    first, last = json.loads(lines[1]), json.loads(lines[-1])
    assert last["t"] == 0.5
    change = max(abs(a - b) for a, b in zip(first["state"]["density"], last["state"]["density"]))
    assert change < 0.05
    meta, body = table(out / "summary.csv")
    assert meta[0].startswith("# config_sha256=")
    assert body[0] == ["t", "mass", "energy", "entropy", "drift", "dt"]
    assert verdict(out)["pass"] is True


def test_solve_is_byte_identical(tmp_path):
    _, a = run(tmp_path, "solve", FPL_MAXWELLIAN, name="a")
    _, b = run(tmp_path, "solve", FPL_MAXWELLIAN, name="b")
    for f in ("trajectory.jsonl", "summary.csv", "verdict.json"):
        assert (a / f).read_bytes() == (b / f).read_bytes()


def test_solve_fd_above_bound_exit_2(tmp_path):
    config = {"model": "fd", "eps": 0.5, "grid": {"x_max": 7.5, "n": 10},
              "ic": {"preset": "bump", "center": 1.5, "width": 1.0, "height": 10.0}}
    assert run(tmp_path, "solve", config)[0] == 2


def test_solve_atoms_need_be_measure(tmp_path):
    config = {"model": "fd", "eps": 0.5, "grid": {"x_max": 7.5, "n": 10},
              "ic": {"preset": "atom+bump", "center": 1.5, "width": 1.0}}
    assert run(tmp_path, "solve", config)[0] == 2


def test_solve_stiff_failure_exit_3_with_partial_output(tmp_path):
    config = dict(FPL_MAXWELLIAN, solve={"t_end": 0.5, "max_steps": 3})
    code, out = run(tmp_path, "solve", config)
    assert code == 3
    lines = (out / "trajectory.jsonl").read_text().splitlines()
    assert len(lines) == 1 + 4
    assert any(w.startswith("solver failure") for w in verdict(out)["warnings"])


def test_solve_be_measure_atom_preset(tmp_path):
    config = {"model": "be-measure", "eps": 0.5, "grid": {"x_max": 15.0, "n": 20},
              "ic": {"preset": "atom+bump", "center": 1.5, "width": 1.0,
                     "atom_location": 0.0, "atom_mass": 0.2},
              "solve": {"t_end": 0.5}}
    code, out = run(tmp_path, "solve", config)
    assert code == 0
    gates = {g["name"]: g for g in verdict(out)["verdicts"][0]["gates"]}
    assert gates["conservation_drift"]["value"] <= 1e-13
    assert gates["entropy_nonincreasing"]["pass"] is None
    last = json.loads((out / "trajectory.jsonl").read_text().splitlines()[-1])
    assert last["state"]["atoms"][0][0] == 0.0
