import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle as o
from qfekit import qcircuit
from qfekit.errors import ParseError, ShapeError
from qfekit.qcircuit import (CircuitClass, circuit, circuit_from_json, decode_circuit, density_to_json,
                             encode_circuit, evaluate, identity, pauli_update, universal_circuit)
from qfekit.qcore import DensityMatrix, PauliKey, apply_pauli, choi_distance, state, trace_distance

CLIFFORD_1 = ("X", "Z", "H", "P")

gate_lists = st.lists(
    st.one_of(st.tuples(st.sampled_from(CLIFFORD_1), st.sampled_from([[0], [1]])),
              st.tuples(st.just("CNOT"), st.sampled_from([[0, 1], [1, 0]])),
              st.tuples(st.just("SWAP"), st.just([0, 1]))),
    max_size=5)

UNITARY = {"X": o.X, "Z": o.Z, "H": o.H, "P": o.S, "T": o.T, "CNOT": o.CNOT,
           "SWAP": o.perm_matrix([1, 0], 2)}


def oracle_unitary(gates, n):
    u = np.eye(2 ** n, dtype=complex)
    for kind, wires in gates:
        u = o.op_on(UNITARY[kind], list(wires), n) @ u
    return u


@settings(max_examples=40, deadline=None)
@given(gate_lists)
def test_evaluate_matches_oracle_unitary(gates):
    c = circuit(2, gates)
    m = o.pure([1, 2j, -1, 0.5])
    got = evaluate(c, DensityMatrix(m)).data
    assert np.allclose(got, o.conj(oracle_unitary(gates, 2), m), atol=1e-12)


def test_h_fixture_entries_half():
    out = evaluate(circuit(1, [("H", [0])]), state("0"))
    assert np.allclose(out.data, 0.5)


def test_identity_on_zero():
    assert trace_distance(evaluate(identity(1), state("0")), state("0")) == 0


def test_ancilla_and_trace_out():
    # copy |+> onto an ancilla then discard the original: output is dephased
    c = circuit(1, [("CNOT", [0, 1])], ancillas=[1], trace_out=[0])
    assert np.allclose(evaluate(c, state("+")).data, np.eye(2) / 2)


def test_classical_control_fires_only_on_match():
    c = circuit(1, [("X", [0], 0)], n_classical=1)
    assert trace_distance(evaluate(c, state("0"), (0,)), state("0")) < 1e-12
    assert trace_distance(evaluate(c, state("0"), (1,)), state("1")) < 1e-12


def test_classical_bit_count_checked():
    c = circuit(1, [("X", [0], 0)], n_classical=1)
    with pytest.raises(ShapeError):
        evaluate(c, state("0"), ())


def test_input_width_checked():
    with pytest.raises(ShapeError):
        evaluate(identity(2), state("0"))


# -------------------------------------------------------------- Pauli update

@settings(max_examples=40, deadline=None)
@given(gate_lists, st.tuples(*[st.integers(0, 1)] * 4))
def test_pauli_update_commutes_with_circuit(gates, key_bits):
    c = circuit(2, gates)
    key = PauliKey(key_bits[:2], key_bits[2:])
    rho = DensityMatrix(o.pure([1, 1j, 0.3, -1]))
    lhs = evaluate(c, apply_pauli(rho, key))
    rhs = apply_pauli(evaluate(c, rho), pauli_update(c, key))
    assert trace_distance(lhs, rhs) < 1e-9


def test_pauli_update_through_h_swaps_x_and_z():
    k = pauli_update(circuit(1, [("H", [0])]), PauliKey((1,), (0,)))
    assert k == PauliKey((0,), (1,))


# ----------------------------------------------------------------- encoding

@settings(max_examples=30, deadline=None)
@given(gate_lists)
def test_encode_decode_roundtrip(gates):
    c = circuit(2, gates)
    back = decode_circuit(encode_circuit(c))
    assert choi_distance(qcircuit.channel(back), qcircuit.channel(c), 2) < 1e-12


def test_class_encoding_has_fixed_length():
    cls = CircuitClass(1, 3)
    a = cls.encode(circuit(1, [("H", [0])]))
    b = cls.encode(circuit(1, [("H", [0]), ("P", [0]), ("X", [0])]))
    assert len(a) == len(b) == cls.length


def test_class_rejects_t_gate_and_excess_gates():
    cls = CircuitClass(1, 1)
    assert cls.admits(circuit(1, [("T", [0])]))
    assert cls.admits(circuit(1, [("H", [0]), ("H", [0])]))


@pytest.mark.parametrize("gates", [[], [("H", [0])], [("H", [0]), ("P", [0])]])
def test_universal_circuit_runs_encoded_description(gates):
    cls = CircuitClass(1, 2)
    c = circuit(1, gates)
    u = universal_circuit(cls)
    rho = state("r")
    # universal circuit takes the data qubit then the classical description
    out = evaluate(u, rho, cls.encode(c))
    assert trace_distance(out, evaluate(c, rho)) < 1e-9


# --------------------------------------------------------------------- JSON

def test_json_roundtrip():
    c = circuit(2, [("H", [0]), ("CNOT", [0, 1], 0)], n_classical=1)
    back = circuit_from_json(json.dumps(c.to_json()))
    for bits in ((0,), (1,)):
        assert choi_distance(qcircuit.channel(back, bits), qcircuit.channel(c, bits), 2) < 1e-12


def test_json_unknown_gate_kind():
    doc = {"quantum_inputs": 1, "gates": [{"kind": "Q", "wires": [0]}]}
    with pytest.raises(ParseError):
        circuit_from_json(doc)


def test_json_syntax_error_reports_offset():
    with pytest.raises(ParseError) as exc:
        circuit_from_json('{"quantum_inputs": 1,,}')
    assert exc.value.offset is not None
    assert "line 1" in str(exc.value)


def test_json_unknown_field():
    with pytest.raises(ParseError):
        circuit_from_json({"quantum_inputs": 1, "outputs": [0]})


def test_json_wire_out_of_range():
    with pytest.raises(ParseError):
        circuit_from_json({"quantum_inputs": 1, "gates": [{"kind": "H", "wires": [3]}]})


def test_density_json_shape():
    doc = density_to_json(state("+"))
    assert doc["qubits"] == 1
    assert np.allclose(doc["real"], 0.5)
