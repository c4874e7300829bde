import itertools

import pytest
from hypothesis import given, strategies as st

from holonome.codes import (
    CodeSpec, SearchFailure, TrackedGroup, bs_qubit, build_bacon_shor, check_correctable,
    find_starting_element, in_span, same_span, symplectic, track,
)
from holonome.pauli_algebra import PauliOperator, commutes, pauli_mul


@pytest.fixture(scope="module")
def bs():
    return build_bacon_shor()


def test_generator_counts(bs):
    assert len(bs.gauge_gens) == 12
    assert len(bs.stabilizer_gens) == 9 - 4 - 1


def test_every_qubit_covered_by_weight_two_gauge(bs):
    for q in range(9):
        kinds = {g.site(q) for g in bs.gauge_gens if g.weight == 2 and q in g.support}
        assert {"X", "Z"} <= kinds


def test_stabilizers_commute_with_gauge(bs):
    for s in bs.stabilizer_gens:
        assert all(commutes(s, g) for g in bs.gauge_gens)


def test_single_qubit_errors_correctable(bs):
    errs = [PauliOperator.single(9, q, p) for q in range(9) for p in "XYZ"]
    assert check_correctable(bs, errs)
    assert check_correctable(bs, [])


def test_gauge_pair_is_harmless(bs):
    pair = PauliOperator.from_sites(9, {bs_qubit(1, 1): "X", bs_qubit(2, 1): "X"})
    assert in_span([symplectic(g) for g in bs.gauge_gens], symplectic(pair))
    assert check_correctable(bs, [pair, PauliOperator.identity(9)])


def test_two_errors_in_block_not_correctable(bs):
    a = PauliOperator.single(9, bs_qubit(1, 1), "X")
    b = PauliOperator.single(9, bs_qubit(1, 2), "X")
    c = PauliOperator.single(9, bs_qubit(1, 3), "X")
    # X11 X12 and X13 share a syndrome and differ by the logical X
    assert not check_correctable(bs, [pauli_mul(a, b), c])


def test_json_round_trip(bs):
    again = CodeSpec.from_json(bs.to_json())
    assert again.stabilizer_gens == bs.stabilizer_gens
    assert again.gauge_gens == bs.gauge_gens


def test_starting_element_bacon_shor(bs):
    g = TrackedGroup.from_code(bs)
    e = find_starting_element(g, bs_qubit(1, 1), "Z")
    assert e.weight == 2
    assert e.unsigned() == PauliOperator.from_sites(9, {bs_qubit(1, 1): "Z", bs_qubit(1, 2): "Z"})


def test_starting_element_cat():
    e = find_starting_element(TrackedGroup.cat(4), 0, "Z")
    assert e.unsigned() == PauliOperator.from_string("ZZII")


def test_identity_search_fails_on_single_qubit():
    with pytest.raises(SearchFailure):
        find_starting_element(TrackedGroup.single_qubits(1), 0, "I")


def test_cnot_spreads_z_onto_control(bs):
    pair = TrackedGroup.from_code(bs, "t").tensor(TrackedGroup.from_code(bs, "c"))
    after = track(pair, "CNOT", [9 + bs_qubit(1, 1), bs_qubit(1, 1)])
    want = PauliOperator.from_sites(18, {bs_qubit(1, 1): "Z", 9 + bs_qubit(1, 1): "Z", bs_qubit(1, 2): "Z"})
    assert any(e == want for e in after.elements)


def test_hadamard_on_z():
    g = TrackedGroup.single_qubits(1)
    assert track(g, "H", [0]).elements == (PauliOperator.from_string("X"),)


_GATES = [("H", 1), ("S", 1), ("Sdg", 1), ("X", 1), ("CNOT", 2)]
_INV = {"S": "Sdg", "Sdg": "S"}


@given(st.lists(st.tuples(st.sampled_from(_GATES), st.permutations(range(3))), max_size=6))
def test_track_then_inverse_returns_group(word):
    g0 = TrackedGroup(3, (PauliOperator.from_string("ZZI"), PauliOperator.from_string("XXX")),
                      (PauliOperator.from_string("IZZ"),), {})
    g = g0
    for (name, k), perm in word:
        g = track(g, name, perm[:k])
    for (name, k), perm in reversed(word):
        g = track(g, _INV.get(name, name), perm[:k])
    assert g.stabilizers == g0.stabilizers and g.gauge == g0.gauge


@given(st.lists(st.tuples(st.sampled_from(_GATES), st.permutations(range(3))), max_size=6))
def test_tracking_preserves_commutation(word):
    gens = [PauliOperator.from_string(s) for s in ("ZZI", "XXX", "IZZ", "YIX")]
    g = TrackedGroup(3, tuple(gens), (), {})
    for (name, k), perm in word:
        g = track(g, name, perm[:k])
    for (a, b), (c, d) in zip(itertools.combinations(gens, 2), itertools.combinations(g.stabilizers, 2)):
        assert commutes(a, b) == commutes(c, d)
