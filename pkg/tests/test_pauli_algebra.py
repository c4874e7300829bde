import numpy as np
import pytest
from hypothesis import given, strategies as st

from holonome.pauli_algebra import (
    GATE_MATRICES, PauliOperator, PauliSum, clifford_conjugate, commutes, dense, pauli_mul,
)

labels = st.text(alphabet="IXYZ", min_size=1, max_size=4)


def paulis(n):
    return st.builds(lambda s, ph: PauliOperator.from_string(s).times_i(ph),
                     st.text(alphabet="IXYZ", min_size=n, max_size=n), st.integers(0, 3))


def test_xz_is_minus_i_y():
    p = pauli_mul(PauliOperator.from_string("X"), PauliOperator.from_string("Z"))
    assert p == PauliOperator.from_string("-iY")
    np.testing.assert_allclose(dense(p), GATE_MATRICES["X"] @ GATE_MATRICES["Z"])


def test_zz_squared_is_identity():
    zz = PauliOperator.from_string("ZZ")
    assert pauli_mul(zz, zz) == PauliOperator.identity(2)


def test_commutation_examples():
    assert not commutes(PauliOperator.from_string("XI"), PauliOperator.from_string("ZI"))
    assert commutes(PauliOperator.from_string("XX"), PauliOperator.from_string("ZZ"))


def test_dense_examples():
    np.testing.assert_allclose(dense(PauliOperator.from_string("Z")), np.diag([1, -1]))
    np.testing.assert_allclose(dense(PauliOperator.from_string("Y")), [[0, -1j], [1j, 0]])
    np.testing.assert_allclose(dense(PauliOperator.from_string("-ZZ")), np.diag([-1, 1, 1, -1]))


def test_clifford_examples():
    x, z = PauliOperator.from_string("X"), PauliOperator.from_string("Z")
    assert clifford_conjugate(x, "H", [0]) == z
    assert clifford_conjugate(z, "H", [0]) == x
    assert clifford_conjugate(x, "S", [0]) == PauliOperator.from_string("Y")
    assert clifford_conjugate(PauliOperator.from_string("XI"), "CNOT", [0, 1]) == PauliOperator.from_string("XX")


@given(paulis(3), paulis(3))
def test_product_matches_dense(a, b):
    np.testing.assert_allclose(dense(pauli_mul(a, b)), dense(a) @ dense(b), atol=1e-12)


@given(paulis(3), paulis(3))
def test_commutes_matches_dense(a, b):
    da, db = dense(a), dense(b)
    assert commutes(a, b) == np.allclose(da @ db, db @ da)


@given(paulis(2), st.sampled_from(["H", "S", "Sdg", "X", "Y", "Z", "CNOT"]), st.booleans())
def test_conjugation_matches_dense(p, gate, flip):
    qs = ([1, 0] if flip else [0, 1]) if gate == "CNOT" else [1 if flip else 0]
    out = clifford_conjugate(p, gate, qs)
    from holonome.gate_programs import compose
    u = compose([(GATE_MATRICES[gate], tuple(qs))], (0, 1))
    np.testing.assert_allclose(dense(out), u @ dense(p) @ u.conj().T, atol=1e-12)


@given(paulis(3), st.sampled_from(["H", "S", "X"]), st.integers(0, 2))
def test_single_qubit_clifford_keeps_weight(p, gate, q):
    assert clifford_conjugate(p, gate, [q]).weight == p.weight


@given(paulis(3), st.integers(0, 2), st.integers(0, 2))
def test_cnot_changes_weight_by_at_most_one(p, c, t):
    if c == t:
        return
    assert abs(clifford_conjugate(p, "CNOT", [c, t]).weight - p.weight) <= 1


def test_pauli_sum_dense_and_equality():
    s = PauliSum.of("ZI", "-XZ")
    np.testing.assert_allclose(s.dense(), dense(PauliOperator.from_string("ZI")) - dense(PauliOperator.from_string("XZ")))
    assert s.equals(PauliSum.of("-XZ", "ZI"))


def test_bad_label_rejected():
    with pytest.raises(ValueError):
        PauliOperator.from_string("XQ")
