from __future__ import annotations

import json
import subprocess
import sys

import jsonschema
import pytest

from bfham.cli import main
from bfham.models import model_text
from bfham.report import schema

SIMPLE = """model oscillator
family space dim 3 epsilon letters i j k
field q coordinate space
field p momentum space
field u multiplier space
kinetic dot(q[i])*p[i]
constraint c[i] := p[i]
coupling u[i]*c[i]
hamiltonian 1/2*q[i]*q[i]
"""


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_analyze_builtin_json_is_valid_and_deterministic(capsys):
    code, first, _ = run(capsys, "analyze", "builtin:second_chern", "--format", "json")
    assert code == 0
    code2, second, _ = run(capsys, "analyze", "builtin:second_chern", "--format", "json")
    assert code2 == 0 and first == second
    report = json.loads(first)
    jsonschema.validate(report, schema())
    assert report["classification"]["second_class"] == []
    assert report["swap"]["second_chern"]["closes_on"] == ["psi"]
    assert report["swap"]["euler"]["closes_on"] == ["phi"]
    assert all(c["ok"] for c in report["fixture_checks"])


def test_analyze_user_file_text(tmp_path, capsys):
    path = tmp_path / "osc.model"
    path.write_text(SIMPLE)
    code, out, _ = run(capsys, "analyze", str(path))
    assert code == 0
    assert "first class:  c" in out
    assert "dof = " in out


def test_analyze_writes_output_file(tmp_path, capsys):
    path = tmp_path / "osc.model"
    path.write_text(SIMPLE)
    target = tmp_path / "report.json"
    code, out, _ = run(capsys, "analyze", str(path), "--format", "json", "-o", str(target))
    assert code == 0 and out == ""
    jsonschema.validate(json.loads(target.read_text()), schema())


def test_missing_file_is_a_usage_error(capsys):
    code, _, err = run(capsys, "analyze", "missing.model")
    assert code == 2
    assert "file not found: missing.model" in err


def test_unknown_builtin_is_a_usage_error(capsys):
    code, _, err = run(capsys, "analyze", "builtin:maxwell")
    assert code == 2 and "available" in err


def test_parse_error_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.model"
    path.write_text(SIMPLE.replace("kinetic dot(q[i])*p[i]", "kinetic dot(q[i])*p[i] + $"))
    code, _, err = run(capsys, "analyze", str(path))
    assert code == 2
    assert f"{path}:6:" in err


def test_validation_error_reports_position(tmp_path, capsys):
    path = tmp_path / "bad.model"
    path.write_text(SIMPLE.replace("constraint c[i] := p[i]", "constraint c[i] := p[i] + u[i]"))
    code, _, err = run(capsys, "analyze", str(path))
    assert code == 2
    assert f"{path}:7:" in err and "multiplier" in err


def test_bracket_command(capsys):
    code, out, _ = run(capsys, "bracket", "builtin:euler", "phi", "psi")
    assert code == 0
    assert "Xi" in out and "on phi:" in out
    code, out, _ = run(capsys, "bracket", "builtin:second_chern", "Psi", "Psi")
    assert code == 0 and "smeared:    0" in out


def test_bracket_unknown_label(capsys):
    code, _, err = run(capsys, "bracket", "builtin:bf_ym", "gamma", "nope")
    assert code == 2 and "gamma0" in err


def test_bracket_remainder_for_second_class_pair(capsys):
    code, out, _ = run(capsys, "bracket", "builtin:bf_ym", "chi", "phiB")
    assert code == 0 and "not weakly zero" in out


def test_verify_without_oracle(capsys):
    code, out, _ = run(capsys, "verify", "--only", "euler", "--oracle", "off")
    assert code == 0
    assert "FAIL" not in out and "0 failed" in out


def test_verify_catches_a_wrong_fixture(tmp_path, capsys):
    data = json.loads(
        (__import__("importlib.resources").resources.files("bfham.models") / "fixtures.json").read_text()
    )
    entry = data["models"]["second_chern"]["brackets"]["phi,psi"]
    entry["expected"] = "-" + entry["expected"]
    path = tmp_path / "fixtures.json"
    path.write_text(json.dumps(data))
    code, out, _ = run(capsys, "verify", "--only", "second_chern", "--oracle", "off",
                       "--fixtures", str(path), "--format", "json")
    assert code == 1
    report = json.loads(out)
    failed = [c for c in report["checks"] if not c["ok"]]
    assert [c["name"] for c in failed] == ["bracket {phi,psi}"]
    assert "expected -eps" in failed[0]["detail"]


def test_verify_unknown_model(capsys):
    code, _, err = run(capsys, "verify", "--only", "maxwell")
    assert code == 2


def test_schema_command(capsys):
    code, out, _ = run(capsys, "schema")
    assert code == 0 and json.loads(out) == schema()


def test_bad_arguments_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["analyze"])
    assert info.value.code == 2
    with pytest.raises(SystemExit) as info:
        main(["analyze", "builtin:euler", "--lattice", "1"])
    assert info.value.code == 2


def test_module_entry_point(tmp_path):
    path = tmp_path / "osc.model"
    path.write_text(SIMPLE)
    proc = subprocess.run([sys.executable, "-m", "bfham", "analyze", str(path), "--format", "json"],
                          capture_output=True, text=True, timeout=300)
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["model"]["name"] == "oscillator"


def test_builtin_text_parses_from_disk(tmp_path, capsys):
    path = tmp_path / "sc.model"
    path.write_text(model_text("bf_ym"))
    code, out, _ = run(capsys, "analyze", str(path), "--format", "json")
    assert code == 0
    assert "fixture_checks" not in json.loads(out)
