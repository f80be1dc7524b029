import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from qecml.pauli import Gate, GateKind, PauliString, cnot, commutes, conjugate_all, conjugate_through, multiply

N = 5
paulis = st.text(alphabet="IXYZ", min_size=N, max_size=N).map(PauliString.from_str)
gates = st.one_of(
    st.tuples(st.integers(0, N - 1), st.integers(0, N - 1)).filter(lambda t: t[0] != t[1]).map(lambda t: cnot(*t)),
    st.builds(lambda k, q: Gate(k, (q,)), st.sampled_from([GateKind.H, GateKind.IDLE, GateKind.MEAS_Z,
                                                           GateKind.MEAS_X]), st.integers(0, N - 1)),
)


def P(s):
    return PauliString.from_str(s)


@pytest.mark.parametrize("a, b, want", [
    ("X", "X", "I"),
    ("X", "Z", "Y"),
    ("XZ", "ZZ", "YI"),
])
def test_multiply_examples(a, b, want):
    assert multiply(P(a), P(b)) == P(want)
    assert P(a) * P(b) == P(want)


@pytest.mark.parametrize("a, b, want", [
    ("X", "Z", False),
    ("X", "X", True),
    ("XX", "ZZ", True),
    ("YI", "ZI", False),
])
def test_commutes_examples(a, b, want):
    assert commutes(P(a), P(b)) is want


def test_size_mismatch_rejected():
    with pytest.raises(ValueError):
        multiply(P("X"), P("XX"))
    with pytest.raises(ValueError):
        commutes(P("X"), P("XX"))


def test_identity_has_no_bits():
    e = PauliString.identity(4)
    assert e.is_identity() and e.weight == 0 and str(e) == "IIII"


def test_immutable():
    p = P("XYZ")
    with pytest.raises(AttributeError):
        p.x = np.zeros(3, bool)
    with pytest.raises(ValueError):
        p.x[0] = False


@pytest.mark.parametrize("p, gate, want", [
    ("XI", cnot(0, 1), "XX"),
    ("IZ", cnot(0, 1), "ZZ"),
    ("ZI", cnot(0, 1), "ZI"),
    ("IX", cnot(0, 1), "IX"),
    ("YI", Gate(GateKind.H, (0,)), "YI"),
    ("XI", Gate(GateKind.H, (0,)), "ZI"),
    ("YZ", Gate(GateKind.PREP_Z, (0,)), "IZ"),
    ("YZ", Gate(GateKind.PREP_X, (1,)), "YI"),
    ("YZ", Gate(GateKind.MEAS_Z, (0,)), "YZ"),
    ("YZ", Gate(GateKind.IDLE, (1,)), "YZ"),
])
def test_conjugation_rules(p, gate, want):
    assert conjugate_through(P(p), gate) == P(want)


def test_operand_out_of_range():
    with pytest.raises(IndexError):
        conjugate_through(P("XX"), cnot(0, 2))


def test_gate_arity_and_parse():
    with pytest.raises(ValueError):
        Gate(GateKind.CNOT, (1, 1))
    with pytest.raises(ValueError):
        Gate(GateKind.H, (0, 1))
    g = Gate.parse("CNOT 3 7")
    assert g == cnot(3, 7) and str(g) == "CNOT 3 7" and g.arity == 2


@given(paulis, paulis, gates)
def test_conjugation_is_automorphism(a, b, g):
    assert conjugate_through(a * b, g) == conjugate_through(a, g) * conjugate_through(b, g)


@given(paulis, paulis, gates)
def test_conjugation_preserves_commutation(a, b, g):
    assert commutes(a, b) == commutes(conjugate_through(a, g), conjugate_through(b, g))


@given(paulis, paulis, paulis)
def test_group_laws(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * b == b * a
    assert (a * a).is_identity()


@given(paulis)
def test_cnot_twice_is_identity(a):
    assert conjugate_all(a, [cnot(0, 3), cnot(0, 3)]) == a
