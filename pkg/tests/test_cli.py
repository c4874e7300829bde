import json

import pytest

from holonome.cli import main


def run(capsys, *argv):
    code = main(list(argv))
    return code, capsys.readouterr()


def test_toffoli_check(capsys):
    code, out = run(capsys, "toffoli-check")
    assert code == 0
    assert json.loads(out.out)["max_abs_dev"] < 1e-12


def test_verify_gate_z(capsys):
    code, out = run(capsys, "verify-gate", "--gate", "z", "--mode", "exact")
    assert code == 0
    assert json.loads(out.out)["fidelity"] > 1 - 1e-8


def test_verify_gate_encoded(capsys):
    code, out = run(capsys, "verify-gate", "--gate", "h", "--code", "bacon-shor-9")
    doc = json.loads(out.out)
    assert code == 0 and doc["max_weight"] == 2


def test_unknown_subcommand(capsys):
    code, out = run(capsys, "frobnicate")
    assert code == 2
    assert "usage" in out.err


def test_unknown_flag(capsys):
    assert run(capsys, "toffoli-check", "--bogus")[0] == 2


def test_unknown_gate(capsys):
    assert run(capsys, "verify-gate", "--gate", "q")[0] == 2


def test_finite_T_needs_ratio(capsys):
    assert run(capsys, "verify-gate", "--gate", "x", "--mode", "finite-T")[0] == 2


def test_holonomy_json(capsys):
    code, out = run(capsys, "holonomy", "--gate", "z", "--interp", "trig", "--samples", "2049")
    doc = json.loads(out.out)
    assert code == 0
    assert len(doc["holonomy"]) == 2 and len(doc["holonomy"][0][0]) == 2
    assert len(doc["berry_phases"]) == 4


def test_sweep_csv_is_deterministic(capsys, tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for path in (a, b):
        assert main(["sweep-adiabatic", "--schedule", "bump", "--ratios", "8.5,17", "--output", str(path)]) == 0
    assert a.read_bytes() == b.read_bytes()
    lines = a.read_text().splitlines()
    assert lines[0] == "schedule,T_over_Td,delta,gap_min,ratio"
    assert len(lines) == 3


def test_fault_scan_from_config(capsys, tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"gate": "z", "fractions": [0.5]}))
    code, out = run(capsys, "--config", str(cfg), "fault-scan")
    rows = out.out.splitlines()
    assert code == 0
    assert rows[0] == "qubit,pauli,segment,fraction,fidelity,verdict"
    assert all(r.endswith("pass") for r in rows[1:])


def test_weight_audit_program_file(capsys, tmp_path):
    from holonome.gate_programs import compile, program_to_json
    f = tmp_path / "p.json"
    f.write_text(program_to_json(compile("CNOT")))
    code, out = run(capsys, "weight-audit", "--program", str(f), "--budget", "2")
    assert code == 0 and json.loads(out.out)["max_weight"] == 2
    assert run(capsys, "weight-audit", "--program", str(f), "--budget", "1")[0] == 1


def test_bad_tolerance(capsys):
    assert run(capsys, "toffoli-check", "--tol", "-1")[0] == 2


def test_bad_config(capsys, tmp_path):
    f = tmp_path / "broken.json"
    f.write_text("{")
    assert run(capsys, "--config", str(f), "toffoli-check")[0] == 2
