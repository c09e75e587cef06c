import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from nehari_bv import ConfigError, DiscreteDomain, Functional, ScalarField
from nehari_bv.cli import main, parse_config, run
from nehari_bv.io import field_from_csv, field_to_csv, field_to_pgm, pgm_to_array, sha256_bytes, write_atomic

MINIMAL = "[problem]\np = 1.5\n[grid]\nnx = 6\n"


# ---- files ----------------------------------------------------------------
@given(arrays(float, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.floats(-1e300, 1e300, allow_nan=False)))
def test_csv_round_trip_is_exact(a):
    assert np.array_equal(field_from_csv(field_to_csv(a)), a)


def test_csv_has_one_row_per_j():
    a = np.arange(6.0).reshape(3, 2)
    rows = field_to_csv(a).strip().splitlines()
    assert rows == ["0.0,2.0,4.0", "1.0,3.0,5.0"]
    u = field_from_csv(field_to_csv(a), DiscreteDomain(3, 2, 1.0))
    assert isinstance(u, ScalarField) and np.array_equal(u.values, a)


def test_pgm_is_min_max_normalized():
    a = np.array([[0.0, 1.0], [2.0, 4.0], [-4.0, 0.0]])
    text = field_to_pgm(a)
    assert text.startswith("P2\n3 2\n255\n")
    img = pgm_to_array(text)
    assert img.shape == a.shape and img.min() == 0 and img.max() == 255
    assert img[2, 0] == 0 and img[1, 1] == 255
    assert np.all(pgm_to_array(field_to_pgm(np.full((2, 2), 3.0))) == 0)
    with pytest.raises(ValueError):
        pgm_to_array("P5\n1 1\n255\n0\n")


def test_atomic_write_replaces_and_hashes(tmp_path):
    target = tmp_path / "x.txt"
    target.write_text("old")
    digest = write_atomic(target, "new")
    assert target.read_text() == "new" and digest == sha256_bytes(b"new")
    assert [p.name for p in tmp_path.iterdir()] == ["x.txt"]


# ---- config -------------------------------------------------------------
def test_minimal_config_gets_defaults(tmp_path):
    cfg = parse_config(MINIMAL, base_dir=tmp_path)
    assert cfg.commands == ("solve",)
    assert cfg.spec.functional is Functional.ONE_LAPLACIAN
    assert cfg.spec.domain == DiscreteDomain(6, 6, 1 / 6)
    assert cfg.solver.restarts == 16
    assert cfg.output_dir == tmp_path / "out"
    assert cfg.echo["solver"]["restarts"] == 16


def test_supercritical_exponent_rejected():
    with pytest.raises(ConfigError, match=r"p must lie in \(1, 2\) for N = 2") as info:
        parse_config("[problem]\np = 2.5\n[grid]\nnx = 6\n")
    assert info.value.field == "problem.p" and info.value.line == 2


def test_unknown_key_gets_a_suggestion():
    with pytest.raises(ConfigError, match="did you mean 'lambda'") as info:
        parse_config("[problem]\np = 1.5\nlamda = 0.5\n[grid]\nnx = 6\n")
    assert info.value.line == 3 and info.value.column == 9


@pytest.mark.parametrize("text,field", [
    ("p = 1.5\n", None),
    ("[problem]\np = 1.5\n", None),
    ("[problem]\np = 1.5\n[grid]\nnx = zero\n", "grid.nx"),
    ("[problem]\np = 1.5\n[grid]\nnx = 0\n", "grid.nx"),
    ("[problem]\np = 1.5\nlambda = 2\n[grid]\nnx = 4\n", "problem.lambda"),
    ("[problem]\nfunctional = mean_curvture\np = 1.5\n[grid]\nnx = 4\n", "problem.functional"),
    ("[problem]\np = 1.5\n[grid]\nnx = 4\n[solver]\nrestarts = 0\n", "solver"),
    ("[problem]\np = 1.5\n[grid]\nnx = 4\n[run]\ncommands = slove\n", "run.commands"),
    ("[problem]\np = 1.5\n[grid]\nnx = 4\n[run]\ncommands = certify\n", "run.commands"),
    ("[problem]\np = 1.5\n[grid]\nnx = 4\n[extra]\na = 1\n", "extra"),
    ("[problem]\nnonlinearity = power_sum\np = 1.2\nq = 1.8\n[grid]\nnx = 4\n", "problem.q"),
])
def test_invalid_configs(text, field):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    if field is not None:
        assert info.value.field == field


def test_commands_run_in_canonical_order():
    cfg = parse_config(MINIMAL + "[run]\ncommands = continuation, certify, solve, audit\n")
    assert cfg.commands == ("audit", "solve", "certify", "continuation")


def test_lambda_auto_only_for_mean_curvature():
    cfg = parse_config("[problem]\nfunctional = mean_curvature\np = 1.5\nlambda = auto\n[grid]\nnx = 4\n")
    assert cfg.lambda_auto
    with pytest.raises(ConfigError):
        parse_config("[problem]\np = 1.5\nlambda = auto\n[grid]\nnx = 4\n")


# ---- runs -----------------------------------------------------------------
def _write(tmp_path, body):
    path = tmp_path / "run.ini"
    path.write_text(body)
    return path


def test_audit_only_run(tmp_path):
    path = _write(tmp_path, MINIMAL)
    assert main(["audit", str(path), "--out", str(tmp_path / "a")]) == 0
    files = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert files == ["manifest.json"]
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["status"] == "ok" and man["files"] == {}
    assert all(c["passed"] for c in man["commands"]["audit"]["checks"])


def test_solve_run_writes_everything_with_matching_hashes(tmp_path):
    path = _write(tmp_path, MINIMAL + "[solver]\nrestarts = 2\n[run]\ncommands = audit, solve, certify\n")
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 0
    out = tmp_path / "o"
    man = json.loads((out / "manifest.json").read_text())
    assert {"field.csv", "field.pgm", "trace.csv", "certificate.json", "flux_x.csv", "flux_y.csv"} <= set(man["files"])
    for name, entry in man["files"].items():
        assert sha256_bytes((out / name).read_bytes()) == entry["sha256"]
    assert man["version"] and man["seed"] == 0 and man["wall_time"] > 0
    assert man["commands"]["certify"]["passed"]
    field = field_from_csv((out / "field.csv").read_text())
    assert field.shape == (6, 6)
    assert (out / "trace.csv").read_text().startswith("restart,stage,eps,iteration,psi\n")


def test_two_runs_same_seed_give_identical_manifests(tmp_path):
    body = MINIMAL + "[solver]\nrestarts = 2\nseed = 4\n"
    path = _write(tmp_path, body)
    mans = []
    for name in ("r1", "r2"):
        assert main(["run", str(path), "--out", str(tmp_path / name)]) == 0
        man = json.loads((tmp_path / name / "manifest.json").read_text())
        man.pop("wall_time")
        mans.append(man)
    assert mans[0] == mans[1]
    assert main(["run", str(path), "--out", str(tmp_path / "r3"), "--seed", "5"]) == 0
    other = json.loads((tmp_path / "r3" / "manifest.json").read_text())
    assert other["seed"] == 5
    assert other["files"]["field.csv"] != mans[0]["files"]["field.csv"]


def test_output_dir_override_from_environment(tmp_path, monkeypatch):
    path = _write(tmp_path, MINIMAL + "[run]\ncommands = audit\n")
    monkeypatch.setenv("NEHARI_BV_OUT", str(tmp_path / "env"))
    assert main(["run", str(path)]) == 0
    assert (tmp_path / "env" / "manifest.json").exists()


def test_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, "[problem]\np = 2.5\n[grid]\nnx = 4\n")
    assert main(["run", str(bad)]) == 2
    assert "p must lie in (1, 2)" in capsys.readouterr().err
    assert main(["run", str(tmp_path / "missing.ini")]) == 2
    hopeless = _write(tmp_path, "[problem]\nfunctional = mean_curvature\np = 1.5\nlambda = 1e12\n"
                                "[grid]\nnx = 4\n[solver]\nrestarts = 2\n")
    assert main(["run", str(hopeless), "--out", str(tmp_path / "f")]) == 3
    man = json.loads((tmp_path / "f" / "manifest.json").read_text())
    assert man["status"] == "failed" and man["error"].startswith("solve:")


def test_failed_command_keeps_earlier_files(tmp_path):
    out = tmp_path / "o"
    path = _write(tmp_path, MINIMAL + "[solver]\nrestarts = 1\n")
    assert main(["run", str(path), "--out", str(out)]) == 0
    before = (out / "field.csv").read_bytes()
    hopeless = _write(tmp_path, "[problem]\nfunctional = mean_curvature\np = 1.5\nlambda = 1e12\n"
                                "[grid]\nnx = 6\n[solver]\nrestarts = 1\n")
    assert main(["run", str(hopeless), "--out", str(out)]) == 3
    assert (out / "field.csv").read_bytes() == before
    assert not [p for p in out.iterdir() if p.name.startswith(".")]


def test_certify_a_stored_field(tmp_path):
    out = tmp_path / "o"
    path = _write(tmp_path, MINIMAL + "[solver]\nrestarts = 1\n")
    assert main(["run", str(path), "--out", str(out)]) == 0
    path2 = _write(tmp_path, MINIMAL + f"[run]\ncommands = certify\nfield = {out / 'field.csv'}\n")
    cfg = parse_config(path2.read_text(), base_dir=tmp_path)
    man = run(cfg.__class__(**{**cfg.__dict__, "output_dir": tmp_path / "c"}))
    assert man.commands["certify"]["subdiff_min_slack"] >= -1e-7
    assert Path(tmp_path / "c" / "certificate.json").exists()


def test_continuation_command(tmp_path):
    path = _write(tmp_path, "[problem]\np = 1.9\n[grid]\nnx = 4\n[solver]\nrestarts = 1\n"
                            "[run]\ncommands = continuation\ncontinuation_p = 1.8, 1.5\n")
    assert main(["run", str(path), "--out", str(tmp_path / "o")]) == 0
    man = json.loads((tmp_path / "o" / "manifest.json").read_text())
    assert [pt["status"] for pt in man["commands"]["continuation"]] == ["ok", "ok"]
