import numpy as np
import pytest

from holonome._numerics import phase_fidelity
from holonome.codes import TrackedGroup, build_bacon_shor
from holonome.evolution import pauli_segment
from holonome.gate_programs import (
    CATALOG, PathProgram, Stage, WeightBudgetError, bs_encoded, bs_transversal_cnot, compile,
    compose, ends_consistent, group_consistent, identity_route_context, parse_word, path_su2,
    program_from_json, program_to_json, program_unitary, single_qubit_via_identity, toffoli_identity_check,
    toffoli_matrix, toffoli_on_cat, verify, weight_audit, word_unitary,
)
from holonome.pauli_algebra import GATE_MATRICES, PauliSum

X = GATE_MATRICES["X"]
P0, P1 = np.diag([1, 0]), np.diag([0, 1])


@pytest.fixture(scope="module")
def code():
    return build_bacon_shor()


@pytest.fixture(scope="module")
def toffoli():
    return toffoli_on_cat()


@pytest.mark.parametrize("gate", ["X", "Y", "Z", "S", "Sdg", "H", "T_pi8", "Tdg"])
def test_single_qubit_catalog(gate):
    p = compile(gate)
    rep = verify(p)
    assert rep.fidelity > 1 - 1e-8
    assert rep.max_weight == 1
    assert ends_consistent(p)


def test_z_loop_shape():
    p = compile("Z")
    ends = [s.endpoint("start") for s in p.segments] + [p.segments[-1].endpoint("end")]
    for got, want in zip(ends, ["-Z", "-X", "Z", "Y", "-Z"]):
        assert got.equals(PauliSum.of(want))


def test_x_is_two_segments_giving_ix():
    p = compile("X")
    assert len(p.segments) == 2
    assert p.segments[0].endpoint("end").equals(PauliSum.of("-Y"))
    u = program_unitary(p, corrections=False)
    np.testing.assert_allclose(u, 1j * X, atol=1e-9)


def test_pi8_phase():
    u = program_unitary(compile("T_pi8"))
    assert phase_fidelity(np.diag([1, np.exp(0.25j * np.pi)]), u) > 1 - 1e-8


def test_empty_program():
    p = PathProgram("empty", 1, (), ())
    assert verify(p).fidelity == 1.0


def test_s_from_loops():
    np.testing.assert_allclose(path_su2([np.array(v) for v in ([0, 0, 1], [0, 0, 1])]), np.eye(2), atol=1e-12)
    assert phase_fidelity(GATE_MATRICES["S"], program_unitary(compile("S"))) > 1 - 1e-8


@pytest.mark.parametrize("gate", ["CNOT", "CNOT_xform"])
def test_cnot(gate):
    p = compile(gate)
    assert verify(p).fidelity > 1 - 1e-8
    assert p.max_weight == 2
    assert [c.label for c in p.phase_corrections] == ["Sdg"]


def test_cnot_pre_correction_form():
    pre = program_unitary(compile("CNOT"), corrections=False, register=(0, 1))
    want = np.kron(P0, np.eye(2)) + 1j * np.kron(P1, X)
    assert np.max(np.abs(pre - want)) < 1e-8


@pytest.mark.parametrize("inner", ["X", "H", "Z"])
def test_conditional_block_form(inner):
    p = compile(f"COND({inner})")
    u = program_unitary(p, register=(0, 1))
    want = np.kron(P0, np.eye(2)) + np.kron(P1, GATE_MATRICES[inner])
    assert phase_fidelity(want, u) > 1 - 1e-8


def test_cat_prep_state():
    u = program_unitary(compile("cat_prep"))
    cat = np.zeros(16)
    cat[[0, 15]] = 1 / np.sqrt(2)
    assert abs(np.vdot(cat, u[:, 0])) > 1 - 1e-8


def test_cat_parity():
    assert verify(compile("cat_parity")).fidelity > 1 - 1e-8


@pytest.mark.parametrize("v", ["Z", "H", "T"])
def test_identity_route(v):
    p = single_qubit_via_identity(v, identity_route_context(), 0)
    assert verify(p).fidelity > 1 - 1e-8
    assert p.max_weight <= 3


def test_identity_route_trivial_cases():
    ctx = identity_route_context()
    p = single_qubit_via_identity("I", ctx, 0)
    assert phase_fidelity(np.eye(8), program_unitary(p, register=range(3))) > 1 - 1e-8
    undo = single_qubit_via_identity("Z", ctx, 0, undo_only=True)
    assert phase_fidelity(np.eye(8), program_unitary(undo, register=range(3))) > 1 - 1e-8


@pytest.mark.parametrize("gate", ["X", "Z", "S", "H", "CNOT"])
def test_group_consistency(gate):
    assert group_consistent(compile(gate))


def test_toffoli_identities():
    chk = toffoli_identity_check()
    assert chk.passed
    assert chk.flip_identity_dev < 1e-12 and chk.word_dev < 1e-12
    t = toffoli_matrix()
    np.testing.assert_allclose(t @ t, np.eye(8))
    assert all(g in GATE_MATRICES for g, _ in parse_word())


def test_word_parser_rejects_garbage():
    with pytest.raises(ValueError):
        parse_word("H_3 Q_2")


def test_toffoli_on_cat(toffoli):
    assert weight_audit(toffoli).overall == 3
    u = program_unitary(toffoli, register=range(6))
    want = compose([(toffoli_matrix(), (0, 2, 4))], range(6))
    assert phase_fidelity(want, u) > 1 - 1e-8


@pytest.mark.parametrize("gate", ["X", "Y", "Z", "H"])
def test_bacon_shor_single_qubit_weight(code, gate):
    p = bs_encoded(gate, code)
    assert weight_audit(p).overall == 2
    assert verify(p).fidelity > 1 - 1e-8
    assert group_consistent(p)


def test_bacon_shor_transversal_cnot(code):
    p = bs_transversal_cnot(code)
    assert weight_audit(p).overall == 3
    assert verify(p).fidelity > 1 - 1e-8
    assert group_consistent(p)


def test_weight_four_fails_audit():
    seg = pauli_segment("-ZZZZ", "-XZZZ")
    p = PathProgram("heavy", 4, (seg,), (Stage("s", 0, 1, np.eye(2), (0,)),))
    with pytest.raises(WeightBudgetError):
        weight_audit(p, budget=3)


def test_finite_T_approaches_exact():
    rep = verify(compile("X"), T_values=[40.0])
    assert rep.finite_T[40.0] > 0.999


@pytest.mark.parametrize("gate", ["H", "CNOT", "COND(X)"])
def test_json_round_trip(gate):
    p = compile(gate)
    q = program_from_json(program_to_json(p))
    np.testing.assert_allclose(program_unitary(q), program_unitary(p), atol=1e-12)


def test_unknown_gate():
    with pytest.raises(ValueError):
        compile("FOO")


def test_catalog_names_compile():
    for name in CATALOG:
        assert compile(name).segments
