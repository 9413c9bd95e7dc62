import numpy as np
import pytest

import oracle as o
from qfekit import qmio
from qfekit.errors import KeyReuseError, QfeError, ShapeError, UnsupportedError
from qfekit.qcircuit import CircuitClass, channel, circuit, identity
from qfekit.qcore import (DensityMatrix, RandomSource, ScriptedSource, choi_distance, make_epr, state, tensor,
                          trace_distance)
from qfekit.suite import CNOT2, H1, QIO_FIXTURES, qio_channel


# ------------------------------------------------------------------- QMIFE

def test_qmife_two_inputs_cnot():
    keys = qmio.qmife_setup(2, 1, RandomSource(0))
    rng = RandomSource(1)
    c0 = qmio.qmife_enc(keys.eks[0], state("1"), rng)
    c1 = qmio.qmife_enc(keys.eks[1], state("0"), rng)
    out = qmio.qmife_dec(qmio.qmife_keygen(keys, CNOT2), [c0, c1])
    assert trace_distance(out, state("11")) < 1e-12


def test_qmife_entangled_inputs_across_positions():
    # both inputs are halves of one EPR pair held in a single register
    keys = qmio.qmife_setup(2, 1, RandomSource(0))
    reg = qmio.Register(make_epr(1), ["x", "y"])
    rng = RandomSource(2)
    c0 = qmio.qmife_enc_register(keys.eks[0], reg, ["x"], rng)
    c1 = qmio.qmife_enc_register(keys.eks[1], reg, ["y"], rng)
    out = qmio.qmife_dec(qmio.qmife_keygen(keys, CNOT2), [c0, c1])
    want = o.conj(o.CNOT, o.epr())
    assert np.allclose(out.data, want, atol=1e-12)


def test_qmife_classical_inputs():
    keys = qmio.qmife_setup(2, 1)
    fn = lambda joint, classical: DensityMatrix.basis((classical[0][0] ^ classical[1][0],))
    rng = RandomSource(0)
    cts = [qmio.qmife_enc(keys.eks[0], (1,), rng), qmio.qmife_enc(keys.eks[1], (1,), rng)]
    assert trace_distance(qmio.qmife_dec(qmio.qmife_keygen(keys, fn), cts), state("0")) == 0


def test_qmife_usage_bound():
    keys = qmio.qmife_setup(1, 2)
    rng = RandomSource(0)
    qmio.qmife_enc(keys.eks[0], state("0"), rng)
    qmio.qmife_enc(keys.eks[0], state("0"), rng)
    assert keys.counter(0) == 2
    with pytest.raises(KeyReuseError):
        qmio.qmife_enc(keys.eks[0], state("0"), rng)


def test_qmife_position_and_setup_checks():
    keys = qmio.qmife_setup(2, 1)
    other = qmio.qmife_setup(2, 1)
    rng = RandomSource(0)
    c0 = qmio.qmife_enc(keys.eks[0], state("0"), rng)
    c1 = qmio.qmife_enc(keys.eks[1], state("0"), rng)
    sk = qmio.qmife_keygen(keys, CNOT2)
    with pytest.raises(ShapeError):
        qmio.qmife_dec(sk, [c1, c0])
    with pytest.raises(ShapeError):
        qmio.qmife_dec(sk, [c0])
    with pytest.raises(QfeError):
        qmio.qmife_dec(qmio.qmife_keygen(other, CNOT2), [c0, c1])


def test_qmife_ciphertext_register_is_padded():
    # averaging the ciphertext over its pad gives I/2
    acc = np.zeros((2, 2), dtype=complex)
    for s in range(4):
        keys = qmio.qmife_setup(1, 1)
        reg = qmio.Register(state("0"), ["m"])
        qmio.qmife_enc_register(keys.eks[0], reg, ["m"], ScriptedSource(((s >> 1) & 1, s & 1)))
        acc += reg.state.data / 4
    assert np.allclose(acc, np.eye(2) / 2)


# --------------------------------------------------------------- trusted party

@pytest.mark.parametrize("bits", ["0", "1", "01", "11"])
def test_tp_copy_out_leaves_basis_messages(bits):
    n = len(bits)
    tp = qmio.TrustedParty(state(bits), n, 1)
    before = tp.held_state()
    ans = qmio.tp_query(tp, identity(n) if n == 1 else CNOT2, (0,) * n)
    assert trace_distance(tp.held_state(), before) < 1e-12
    got = tp.world.marginal(list(ans.answer_labels))
    want = state(bits) if n == 1 else DensityMatrix.basis((int(bits[0]), int(bits[0]) ^ int(bits[1])))
    assert trace_distance(got, want) < 1e-12


def test_tp_copy_out_decoheres_plus():
    tp = qmio.TrustedParty(state("+"), 1, 1)
    qmio.tp_query(tp, identity(1), (0,))
    # the held register is now entangled with the answer (no-cloning)
    assert np.allclose(tp.held_state().data, np.eye(2) / 2)


def test_tp_collapse_propagates():
    for seed in range(4):
        tp = qmio.TrustedParty(state("+"), 1, 1)
        a = qmio.tp_query(tp, identity(1), (0,))
        bit = tp.world.measure(list(a.answer_labels), RandomSource(seed))
        assert trace_distance(tp.held_state(), DensityMatrix.basis(bit)) < 1e-12
        b = qmio.tp_query(tp, H1, (0,))
        # H applied to the collapsed message, answer copied in the computational basis
        p1 = np.real(tp.world.marginal(list(b.answer_labels)).data[1, 1])
        assert abs(p1 - 0.5) < 1e-12


def test_tp_superposed_index():
    tp = qmio.TrustedParty(state("01"), 1, 2)
    ans = qmio.tp_query(tp, identity(1), {(0,): 1.0, (1,): 1.0})
    assert ans.index_labels
    joint = tp.world.marginal(list(ans.index_labels) + list(ans.answer_labels))
    # index and answer end up perfectly correlated
    assert abs(np.real(joint.data[0, 0]) - 0.5) < 1e-12
    assert abs(np.real(joint.data[3, 3]) - 0.5) < 1e-12


def test_tp_rejects_non_unitary_query():
    tp = qmio.TrustedParty(state("0"), 1, 1)
    with pytest.raises(UnsupportedError):
        qmio.tp_query(tp, circuit(1, [], ancillas=[1], trace_out=[0]), (0,))


def test_tp_index_range():
    tp = qmio.TrustedParty(state("0"), 1, 1)
    with pytest.raises(ShapeError):
        qmio.tp_query(tp, identity(1), (1,))


def test_tp_message_width_check():
    with pytest.raises(ShapeError):
        qmio.TrustedParty(state("00"), 1, 1)


# --------------------------------------------------------------------- qiO

@pytest.mark.parametrize("index", range(3), ids=["id", "H", "CNOT"])
def test_qio_channel_equals_circuit(index):
    c = QIO_FIXTURES[index]
    assert choi_distance(qio_channel(c), channel(c), c.n_quantum) < 1e-9


def test_qio_single_branch_is_exact():
    # every Bell outcome of the internal teleportation is corrected, not only on average
    prog = qmio.obf(H1, RandomSource(5))
    for _, p, out in qmio.eval_branches(prog, state("0")):
        if p > 0:
            assert trace_distance(out, state("+")) < 1e-9


def test_qio_single_use():
    prog = qmio.obf(H1, RandomSource(0))
    qmio.eval_program(prog, state("0"), RandomSource(1))
    with pytest.raises(KeyReuseError):
        qmio.eval_program(prog, state("0"), RandomSource(2))


def test_qio_input_width():
    prog = qmio.obf(CNOT2, RandomSource(0))
    with pytest.raises(ShapeError):
        qmio.eval_program(prog, state("0"), RandomSource(1))


def test_qio_size_is_polynomial():
    cls = CircuitClass(1, 1)
    prog = qmio.obf(H1, RandomSource(0), cls)
    assert prog.size_bits() <= qmio.program_size_bound(cls.length, 1)
    assert prog.counts()["arity"] == 3 * 1 + 1


def test_qio_equivalent_circuits_agree():
    # H.H and the identity are the same channel; their obfuscations evaluate alike
    hh = circuit(1, [("H", [0]), ("H", [0])])
    cls = CircuitClass(1, 2)
    for label in ("0", "+", "r"):
        a = qmio.eval_program(qmio.obf(hh, RandomSource(1), cls), state(label), RandomSource(2))
        b = qmio.eval_program(qmio.obf(identity(1), RandomSource(3), cls), state(label), RandomSource(4))
        assert trace_distance(a, b) < 1e-9


def test_slot_map_layout():
    m = qmio.slot_map(2)
    assert m == {"circuit": 0, "halves": (1, 2), "a": (3, 5), "b": (4, 6)}


def test_register_basics():
    reg = qmio.Register(tensor(state("0"), state("1")), ["p", "q"])
    assert trace_distance(reg.marginal(["q"]), state("1")) == 0
    with pytest.raises(ShapeError):
        qmio.Register(state("00"), ["p", "p"])
