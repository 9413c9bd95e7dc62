import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle as o
from qfekit.config import get_config, using
from qfekit.errors import ResourceError, ShapeError
from qfekit.qcore import (CQState, DensityMatrix, PauliKey, RandomSource, ScriptedSource, apply_gate,
                          apply_on, apply_pauli, bell_measure_all, bits_to_int, choi_distance, choi_of,
                          cq_mix, dephase, int_to_bits, make_epr, measure_all, partial_trace, permute,
                          qotp_average, random_state, state, teleport, teleport_all, tensor,
                          trace_distance, xor_bits)

seeds = st.integers(min_value=0, max_value=2**32 - 1)


def rand_dm(n, seed, rank=None):
    g = np.random.default_rng(seed)
    r = rank or 2 ** n
    a = g.normal(size=(2 ** n, r)) + 1j * g.normal(size=(2 ** n, r))
    m = a @ a.conj().T
    return m / np.trace(m)


# ------------------------------------------------------------------ bits / rng

@given(st.integers(min_value=0, max_value=2**20 - 1))
def test_int_bits_roundtrip(v):
    assert bits_to_int(int_to_bits(v, 20)) == v


def test_xor_length_mismatch():
    with pytest.raises(ShapeError):
        xor_bits((0, 1), (1,))


def test_random_source_is_deterministic():
    a, b = RandomSource(7), RandomSource(7)
    assert a.bits(64) == b.bits(64)
    assert a.spawn().bits(16) == b.spawn().bits(16)


def test_spawned_stream_differs_from_parent():
    r = RandomSource(3)
    child = r.spawn()
    assert child.bits(64) != RandomSource(3).bits(64)


def test_scripted_source_replays_and_rejects_floats():
    s = ScriptedSource((1, 0, 1, 1))
    assert s.bits(4) == (1, 0, 1, 1)
    with pytest.raises(Exception):
        ScriptedSource((1,)).random()


# -------------------------------------------------------------- density matrix

def test_density_validation_rejects_bad_trace():
    with pytest.raises(ShapeError):
        DensityMatrix(np.eye(2))


def test_density_validation_rejects_negative():
    with pytest.raises(ShapeError):
        DensityMatrix(np.diag([1.5, -0.5]))


def test_non_power_of_two():
    with pytest.raises(ShapeError):
        DensityMatrix(np.eye(3) / 3)


def test_qubit_budget():
    with using(get_config().__class__(max_qubits=3)):
        with pytest.raises(ResourceError):
            DensityMatrix.zero(4)


def test_labels_match_vectors():
    assert np.allclose(state("+").data, o.pure([1, 1]))
    assert np.allclose(state("r").data, o.pure([1, 1j]))
    assert np.allclose(state("01").data, o.kron(o.pure([1, 0]), o.pure([0, 1])))


@settings(max_examples=40, deadline=None)
@given(seeds)
def test_partial_trace_matches_oracle(seed):
    m = rand_dm(3, seed)
    rho = DensityMatrix(m)
    for drop in ([0], [1], [2], [0, 2]):
        keep = [q for q in range(3) if q not in drop]
        assert np.allclose(partial_trace(rho, drop).data, o.ptrace(m, keep, 3), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(seeds, st.permutations([0, 1, 2]))
def test_permute_matches_oracle(seed, order):
    m = rand_dm(3, seed)
    p = o.perm_matrix(order, 3)
    assert np.allclose(permute(DensityMatrix(m), order).data, p @ m @ p.T, atol=1e-12)


@pytest.mark.parametrize("name,u", [("X", o.X), ("Z", o.Z), ("H", o.H), ("P", o.S), ("T", o.T)])
def test_single_gates_match_oracle(name, u):
    m = rand_dm(2, 5)
    for w in (0, 1):
        got = apply_gate(DensityMatrix(m), name, [w]).data
        assert np.allclose(got, o.conj(o.op_on(u, [w], 2), m), atol=1e-12)


def test_cnot_both_orientations():
    m = rand_dm(3, 11)
    for wires in ([0, 1], [1, 0], [2, 0]):
        got = apply_gate(DensityMatrix(m), "CNOT", wires).data
        assert np.allclose(got, o.conj(o.op_on(o.CNOT, wires, 3), m), atol=1e-12)


def test_swap_is_permutation():
    m = DensityMatrix(rand_dm(2, 1))
    assert trace_distance(apply_gate(m, "SWAP", [0, 1]), permute(m, [1, 0])) < 1e-12


def test_apply_on_appends_output():
    rho = state("01")
    out = apply_on(rho, lambda r: apply_gate(r, "X", [0]), [0])
    # untouched qubit 1 first, then the channel output
    assert trace_distance(out, state("11")) < 1e-12


# -------------------------------------------------------------------- Paulis

@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(0, 3), st.integers(0, 3))
def test_pauli_key_xor_composes(seed, k1, k2):
    rho = DensityMatrix(rand_dm(2, seed))
    p1 = PauliKey(int_to_bits(k1, 2), (0, 1))
    p2 = PauliKey(int_to_bits(k2, 2), (1, 1))
    both = apply_pauli(apply_pauli(rho, p1), p2)
    assert trace_distance(both, apply_pauli(rho, p1 ^ p2)) < 1e-12


def test_pauli_flat_roundtrip():
    k = PauliKey((1, 0, 1), (0, 0, 1))
    assert PauliKey.from_flat(k.flat()) == k


@settings(max_examples=30, deadline=None)
@given(seeds, st.integers(1, 3))
def test_qotp_average_is_maximally_mixed(seed, n):
    rho = DensityMatrix(rand_dm(n, seed))
    assert trace_distance(qotp_average(rho), DensityMatrix.maximally_mixed(n)) < 1e-9


def test_qotp_average_by_explicit_keys():
    m = rand_dm(1, 2)
    acc = sum(o.conj(np.linalg.matrix_power(o.X, a) @ np.linalg.matrix_power(o.Z, b), m)
              for a in (0, 1) for b in (0, 1)) / 4
    assert np.allclose(acc, np.eye(2) / 2)
    assert np.allclose(qotp_average(DensityMatrix(m)).data, acc)


def test_qotp_partial_wires_keeps_correlation_with_rest():
    rho = make_epr(1)
    out = qotp_average(rho, [0])
    assert trace_distance(out, DensityMatrix.maximally_mixed(2)) < 1e-12
    assert trace_distance(partial_trace(out, [0]), partial_trace(rho, [0])) < 1e-12


# -------------------------------------------------------------- measurement

def test_measure_all_probabilities():
    out = measure_all(state("+0"), [0])
    assert sorted(round(p, 12) for _, p, _ in out) == [0.5, 0.5]


def test_dephase_kills_coherence():
    d = dephase(state("+"), [0]).data
    assert np.allclose(d, np.eye(2) / 2)


def test_bell_outcomes_uniform_on_epr_half():
    joint = tensor(state("0"), make_epr(1))
    outs = bell_measure_all(joint, 0, 1)
    assert len(outs) == 4
    assert all(abs(p - 0.25) < 1e-12 for _, p, _ in outs)


# --------------------------------------------------------------- teleport

@settings(max_examples=25, deadline=None)
@given(seeds)
def test_teleport_every_outcome_corrects(seed):
    psi = DensityMatrix(rand_dm(1, seed, rank=1))
    for key, p, post in teleport_all(tensor(psi, make_epr(1)), [0], [1]):
        assert abs(p - 0.25) < 1e-12
        assert trace_distance(apply_pauli(post, key), psi) < 1e-9


def test_teleport_entangled_payload_preserves_correlation():
    # payload is half of an EPR pair; the reference qubit must stay maximally entangled
    joint = tensor(make_epr(1), make_epr(1))             # ref, payload, e_a, e_b
    for key, p, post in teleport_all(joint, [1], [2]):
        fixed = apply_pauli(post, key, [1])
        assert trace_distance(fixed, make_epr(1)) < 1e-9


def test_teleport_sampled_matches_enumeration():
    psi = state("r")
    key, post = teleport(tensor(psi, make_epr(1)), [0], [1], RandomSource(4))
    assert trace_distance(apply_pauli(post, key), psi) < 1e-9


def test_teleport_rejects_mismatched_wires():
    with pytest.raises(ShapeError):
        teleport_all(tensor(state("0"), make_epr(1)), [0], [1, 2])


# ------------------------------------------------------------------ distances

@settings(max_examples=50, deadline=None)
@given(seeds)
def test_trace_distance_matches_oracle_and_axioms(seed):
    a, b, c = (rand_dm(2, seed + i) for i in range(3))
    ra, rb, rc = map(DensityMatrix, (a, b, c))
    d = trace_distance(ra, rb)
    assert abs(d - o.tdist(a, b)) < 1e-10
    assert 0 <= d <= 1 + 1e-12
    assert abs(d - trace_distance(rb, ra)) < 1e-12
    assert d <= trace_distance(ra, rc) + trace_distance(rc, rb) + 1e-12


@settings(max_examples=30, deadline=None)
@given(seeds)
def test_partial_trace_is_contractive(seed):
    a, b = DensityMatrix(rand_dm(2, seed)), DensityMatrix(rand_dm(2, seed + 99))
    assert trace_distance(partial_trace(a, [1]), partial_trace(b, [1])) <= trace_distance(a, b) + 1e-12


def test_orthogonal_states_distance_one():
    assert abs(trace_distance(state("0"), state("1")) - 1) < 1e-12
    assert abs(trace_distance(state("0"), state("+")) - np.sqrt(0.5)) < 1e-12


# ------------------------------------------------------------------- CQ

def test_cq_distance_blockwise():
    a = cq_mix([(0.5, "0", state("0")), (0.5, "1", state("1"))])
    b = cq_mix([(0.5, "0", state("0")), (0.5, "1", state("0"))])
    assert abs(trace_distance(a, b) - 0.5) < 1e-12


def test_cq_disjoint_labels_are_far():
    a = cq_mix([(1.0, "x", state("0"))])
    b = cq_mix([(1.0, "y", state("0"))])
    assert abs(trace_distance(a, b) - 1) < 1e-12


def test_cq_vs_plain_state_refused():
    with pytest.raises(ShapeError):
        trace_distance(cq_mix([(1.0, "", state("0"))]), state("0"))


def test_cq_marginal():
    a = cq_mix([(0.25, "0", state("0")), (0.75, "1", state("1"))])
    assert isinstance(a, CQState)
    assert np.allclose(a.marginal_quantum().data, np.diag([0.25, 0.75]))


# ------------------------------------------------------------------- Choi

def test_choi_of_identity_is_epr():
    c = choi_of(lambda r: r, 1)
    assert trace_distance(c.state, make_epr(1)) < 1e-12


def test_choi_distinguishes_h_from_identity():
    h = lambda r: apply_gate(r, "H", [0])
    assert choi_distance(h, lambda r: r, 1) > 0.5


def test_choi_matches_oracle_for_cnot():
    c = choi_of(lambda r: apply_gate(r, "CNOT", [0, 1]), 2)
    # reference qubits first, then outputs: (1 x U) |Phi>^{(x)2} with pairs (0,2) (1,3)
    phi = np.zeros(16, dtype=complex)
    for i, j in itertools.product((0, 1), repeat=2):
        phi[(i << 3) | (j << 2) | (i << 1) | j] = 0.5
    u = o.kron(np.eye(4), o.CNOT)
    assert np.allclose(c.state.data, o.conj(u, np.outer(phi, phi.conj())), atol=1e-12)


def test_random_state_rank():
    rho = random_state(2, RandomSource(1), rank=1)
    assert abs(rho.purity() - 1) < 1e-9

