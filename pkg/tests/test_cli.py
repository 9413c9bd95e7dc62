import json
import subprocess
import sys

import numpy as np
import pytest

from qfekit.cli import DEMOS, EXIT_FAIL, EXIT_OK, EXIT_USAGE, main

H_JSON = {"quantum_inputs": 1, "classical_inputs": 0, "ancillas": [], "trace_out": [],
          "gates": [{"kind": "H", "wires": [0], "control": None}]}


def write(tmp_path, name, doc):
    p = tmp_path / name
    p.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return p


@pytest.mark.parametrize("name", DEMOS)
def test_every_demo_runs_and_writes_json(name, tmp_path, capsys):
    out = tmp_path / "demo.json"
    assert main(["demo", name, "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["schema_version"] == 1 and doc["demo"] == name
    assert f"[{name}]" in capsys.readouterr().out


def test_teleport_demo_reports_unit_fidelity(tmp_path, capsys):
    out = tmp_path / "t.json"
    main(["demo", "teleport", "--seed", "3", "--out", str(out)])
    doc = json.loads(out.read_text())
    assert doc["results"]["fidelity"] == pytest.approx(1.0, abs=1e-12)
    text = capsys.readouterr().out
    assert "correction key X^" in text and "fidelity 1.0000" in text


def test_qotp_demo_average_is_half_identity(tmp_path):
    out = tmp_path / "q.json"
    main(["demo", "qotp", "--out", str(out)])
    doc = json.loads(out.read_text())
    assert np.allclose(doc["results"]["averaged"], np.eye(2) / 2)


def test_unknown_demo_is_usage_error(capsys):
    assert main(["demo", "nope"]) == EXIT_USAGE


def test_bad_flags_are_usage_errors():
    assert main(["demo", "qotp", "--tol", "2"]) == EXIT_USAGE
    assert main(["demo", "qotp", "--seed", "-1"]) == EXIT_USAGE
    assert main(["demo", "qotp", "--max-qubits", "99"]) == EXIT_USAGE
    assert main([]) == EXIT_USAGE


def test_demo_is_deterministic(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    main(["demo", "ufe", "--seed", "4", "--out", str(a)])
    main(["demo", "ufe", "--seed", "4", "--out", str(b)])
    assert a.read_text() == b.read_text()


def test_suite_core_passes(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["suite", "core", "--out", str(out)]) == EXIT_OK
    doc = json.loads(out.read_text())
    assert doc["schema_version"] == 1
    assert doc["summary"]["failed"] == []
    assert all(c["ok"] for c in doc["checks"])


def test_suite_with_corrupted_tolerance_fails_listing_checks(tmp_path, capsys):
    out = tmp_path / "s.json"
    assert main(["suite", "core", "--tol", "1e-30", "--out", str(out)]) == EXIT_FAIL
    text = capsys.readouterr().out
    assert "failing checks:" in text
    doc = json.loads(out.read_text())
    assert doc["summary"]["failed"]


def test_circuit_eval_h(tmp_path, capsys):
    p = write(tmp_path, "h.json", H_JSON)
    assert main(["circuit", "eval", str(p)]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert np.allclose(doc["output"]["real"], 0.5)
    assert doc["schema_version"] == 1


def test_circuit_eval_identity_on_zero(tmp_path, capsys):
    p = write(tmp_path, "id.json", {"quantum_inputs": 1, "gates": []})
    assert main(["circuit", "eval", str(p), "--input", "0"]) == EXIT_OK
    doc = json.loads(capsys.readouterr().out)
    assert doc["output"]["real"] == [[1.0, 0.0], [0.0, 0.0]]


def test_circuit_eval_classical_bits(tmp_path, capsys):
    doc = {"quantum_inputs": 1, "classical_inputs": 1,
           "gates": [{"kind": "X", "wires": [0], "control": 0}]}
    p = write(tmp_path, "c.json", doc)
    assert main(["circuit", "eval", str(p), "--bits", "1"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["output"]["real"][1][1] == pytest.approx(1.0)


def test_circuit_validate(tmp_path, capsys):
    p = write(tmp_path, "h.json", H_JSON)
    assert main(["circuit", "validate", str(p)]) == EXIT_OK
    assert "valid" in capsys.readouterr().out


def test_malformed_gate_kind_gives_diagnostic(tmp_path, capsys):
    p = write(tmp_path, "bad.json", {"quantum_inputs": 1, "gates": [{"kind": "Q", "wires": [0]}]})
    assert main(["circuit", "validate", str(p)]) == EXIT_USAGE
    assert "bad.json" in capsys.readouterr().err


def test_json_syntax_error_reports_position(tmp_path, capsys):
    p = write(tmp_path, "syn.json", '{"quantum_inputs": 1,\n "gates": [}')
    assert main(["circuit", "eval", str(p)]) == EXIT_USAGE
    assert "line 2" in capsys.readouterr().err


def test_missing_file(tmp_path, capsys):
    assert main(["circuit", "eval", str(tmp_path / "none.json")]) == EXIT_USAGE


def test_input_width_mismatch(tmp_path, capsys):
    p = write(tmp_path, "h.json", H_JSON)
    assert main(["circuit", "eval", str(p), "--input", "01"]) == EXIT_USAGE


def test_module_entry_point(tmp_path):
    p = write(tmp_path, "h.json", H_JSON)
    res = subprocess.run([sys.executable, "-m", "qfekit", "circuit", "eval", str(p)],
                         capture_output=True, text=True)
    assert res.returncode == 0
    assert json.loads(res.stdout)["output"]["qubits"] == 1
