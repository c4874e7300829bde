"""Acceptance criteria 1-10, one pass/fail line each.

Run under pytest (lines appear in the terminal summary) or directly with
``python3 tests/test_acceptance.py``.
"""

import time

import numpy as np
import pytest

from holonome._numerics import phase_fidelity
from holonome.codes import bs_qubit, build_bacon_shor
from holonome.evolution import exact_adiabatic_transport, local_operator, single_segment, theta_axis, v_theta
from holonome.fault_injection import ErrorEvent, fault_scan, run_with_fault
from holonome.gate_programs import (
    CATALOG, bs_encoded, bs_transversal_cnot, compile, program_unitary, toffoli_identity_check,
    toffoli_on_cat, verify, weight_audit,
)
from holonome.holonomy import z_gate_holonomy
from holonome.pauli_algebra import PauliOperator
from holonome.schedules import (
    diabatic_error_linear_tau, diabatic_error_numeric, slowdown_for_average, slowdown_for_delta,
    windowed_delta,
)

RESULTS: list[str] = []


def report(n: int, ok: bool, detail: str, started: float) -> None:
    RESULTS.append(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{time.perf_counter() - started:.2f} s]")
    assert ok, detail


def test_criterion_01_z_loop_phases():
    t0 = time.perf_counter()
    want = np.array([np.pi / 2, 3 * np.pi / 2])
    devs = {k: np.max(np.abs(z_gate_holonomy(k, 8192).holonomy.phases() - want)) for k in ("linear", "trig")}
    elapsed = time.perf_counter() - t0
    ok = max(devs.values()) < 1e-6 and elapsed < 10
    report(1, ok, f"phase deviation linear {devs['linear']:.1e}, trig {devs['trig']:.1e}", t0)


def test_criterion_02_berry_table():
    t0 = time.perf_counter()
    got = z_gate_holonomy("linear", 8193).berry_phases
    want = np.array([[0, 1j * np.pi], [0, 0], [0.5j * np.pi, 0], [0, 0.5j * np.pi]])
    dev = np.max(np.abs(got - want))
    report(2, dev < 1e-6, f"max deviation {dev:.1e}", t0)


def test_criterion_03_prop2_suite():
    t0 = time.perf_counter()
    worst = 1.0
    for g in ("IZ", "IZZ"):
        G = PauliOperator.from_string(g)
        for theta in (0.0, np.pi / 8, np.pi / 4, np.pi / 2):
            for sign in (1, -1):
                seg = single_segment(G.n, 0, (0, 0, 1), theta_axis(theta, sign), G)
                v = local_operator(v_theta(theta, sign), 0, seg.qubits)
                worst = min(worst, phase_fidelity(v, exact_adiabatic_transport(seg)))
    report(3, worst > 1 - 1e-8, f"worst fidelity deficit {1 - worst:.1e}", t0)


def test_criterion_04_gate_catalog():
    t0 = time.perf_counter()
    fids = {g: verify(compile(g)).fidelity for g in ("X", "Z", "S", "H", "T_pi8", "CNOT")}
    pre = program_unitary(compile("CNOT"), corrections=False, register=(0, 1))
    want = np.kron(np.diag([1, 0]), np.eye(2)) + 1j * np.kron(np.diag([0, 1]), [[0, 1], [1, 0]])
    pre_dev = np.max(np.abs(pre - want))
    worst = min(fids.values())
    ok = worst > 1 - 1e-8 and pre_dev < 1e-8
    report(4, ok, f"worst deficit {1 - worst:.1e}, pre-correction C-NOT deviation {pre_dev:.1e}", t0)


def test_criterion_05_linear_tau():
    t0 = time.perf_counter()
    devs = [abs(diabatic_error_linear_tau(e)[0] - diabatic_error_numeric("linear", 1 / e)) for e in (0.1, 0.05, 0.02)]
    averaged = slowdown_for_average(1e-4)
    windowed = windowed_delta("linear", 70.0)
    crossing = slowdown_for_delta("linear", 1e-4)
    elapsed = time.perf_counter() - t0
    ok = (max(devs) < 1e-6 and 0.5 * 70 <= averaged <= 2 * 70 and 0.5e-4 <= windowed <= 2e-4
          and 0.5 * 70 <= crossing <= 2 * 70 and elapsed < 30)
    report(5, ok, f"closed form vs ODE {max(devs):.1e}; averaged T/Td {averaged:.1f}; "
                  f"integrated delta(70) {windowed:.2e}; crossing at T/Td {crossing:.1f}", t0)


def test_criterion_06_smooth_bump():
    t0 = time.perf_counter()
    d = {r: diabatic_error_numeric("bump", r) for r in (8.5, 17.0, 34.0)}
    elapsed = time.perf_counter() - t0
    ok = d[17.0] <= 1e-5 and d[34.0] / d[17.0] < d[17.0] / d[8.5] and elapsed < 60
    report(6, ok, "delta " + ", ".join(f"{r}: {v:.2e}" for r, v in d.items()), t0)


def test_criterion_07_toffoli_identities():
    t0 = time.perf_counter()
    chk = toffoli_identity_check()
    ok = chk.flip_identity_dev < 1e-12 and chk.word_dev < 1e-12
    report(7, ok, f"flip identity {chk.flip_identity_dev:.1e}, word {chk.word_dev:.1e}", t0)


def test_criterion_08_weight_audit():
    t0 = time.perf_counter()
    code = build_bacon_shor()
    singles = {g: weight_audit(bs_encoded(g, code)).overall for g in ("X", "Y", "Z", "H")}
    cnot = weight_audit(bs_transversal_cnot(code)).overall
    tof = weight_audit(toffoli_on_cat()).overall
    ok = set(singles.values()) == {2} and cnot == 3 and tof == 3
    report(8, ok, f"single-qubit {sorted(set(singles.values()))}, transversal C-NOT {cnot}, Toffoli on cat {tof}", t0)


def test_criterion_09_fault_sweep():
    t0 = time.perf_counter()
    code = build_bacon_shor()
    worst, failures, events = 1.0, 0, 0
    for g in ("X", "Y", "Z", "H"):
        scan = fault_scan(bs_encoded(g, code), code)
        worst = min(worst, scan.worst_fidelity)
        failures += len(scan.failures)
        events += scan.events
    neg = run_with_fault(bs_encoded("Z", code), [ErrorEvent(bs_qubit(1, 1), "X", 1, 0.5),
                                                  ErrorEvent(bs_qubit(1, 2), "X", 1, 0.5)], code)
    elapsed = time.perf_counter() - t0
    ok = failures == 0 and worst > 1 - 1e-6 and not neg.verdict and elapsed < 300
    report(9, ok, f"{events} events, {failures} failures, worst fidelity deficit {1 - worst:.1e}; "
                  f"negative control {'fails' if not neg.verdict else 'PASSES (bad)'}", t0)


def test_criterion_10_exact_vs_discrete():
    t0 = time.perf_counter()
    devs = {}
    for name in CATALOG:
        p = compile(name)
        devs[name] = np.max(np.abs(program_unitary(p, method="discrete") - program_unitary(p, method="closed")))
    worst = max(devs, key=devs.get)
    report(10, devs[worst] < 1e-8, f"largest deviation {devs[worst]:.1e} ({worst})", t0)


if __name__ == "__main__":
    for name, fn in sorted(globals().items()):
        if name.startswith("test_criterion_"):
            try:
                fn()
            except AssertionError:
                pass
    print("\n".join(RESULTS))
