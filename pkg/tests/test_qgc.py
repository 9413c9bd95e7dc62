import dataclasses
import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle as o
from qfekit import ensemble, qgc
from qfekit.errors import CorruptBundle, ShapeError, UnsupportedError
from qfekit.qfe import apply_with_spectators
from qfekit.qcircuit import channel, circuit, evaluate
from qfekit.qcore import DensityMatrix, RandomSource, choi_distance, random_state, state, trace_distance
from qfekit.suite import _qgc_views, qgc_fixtures

FIXTURES = qgc_fixtures()


def settings_of(c):
    return list(itertools.product((0, 1), repeat=c.n_classical))


def garbled_channel(c, bits, seed):
    return lambda rho: qgc.decode(qgc.encode(c, rho, bits, RandomSource(seed)))


@pytest.mark.parametrize("index", range(len(FIXTURES)))
def test_decode_encode_is_evaluate(index):
    c = FIXTURES[index]
    for bits in settings_of(c):
        for seed in (0, 1):
            assert choi_distance(garbled_channel(c, bits, seed), channel(c, bits), c.n_quantum) < 1e-9


def test_decode_of_bell_circuit_matches_oracle():
    c = circuit(2, [("H", [0]), ("CNOT", [0, 1])])
    out = qgc.decode(qgc.encode(c, state("00"), (), RandomSource(3)))
    assert np.allclose(out.data, o.epr(), atol=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31))
def test_spectator_entanglement_survives(seed):
    c = FIXTURES[1]
    rho = random_state(2, RandomSource(seed))          # input qubit + one spectator
    b = qgc.encode(c, rho, (), RandomSource(seed + 1), spectators=1)
    want = apply_with_spectators(lambda r: evaluate(c, r), rho, 1, 1)
    assert trace_distance(qgc.decode(b), want) < 1e-9


def test_manifest_is_clean_for_all_fixtures():
    rng = RandomSource(0)
    for c in FIXTURES:
        for bits in settings_of(c):
            assert qgc.check_manifest(qgc.encode(c, random_state(c.n_quantum, rng), bits, rng)) == []


def test_privacy_by_brute_force_enumeration():
    # fixture 0 uses four random bits per world, so every script is enumerated
    c = FIXTURES[0]
    rho = random_state(2, RandomSource(8))
    real, sim = _qgc_views(c, rho, (), 1)
    assert ensemble.count_randomness(real) <= 12
    d = trace_distance(ensemble.enumerate_view(real), ensemble.enumerate_view(sim))
    assert d < 1e-9


def test_privacy_affine_fit_agrees_with_enumeration_on_a_broken_view():
    # a simulator that ignores the output is detectably different
    c = FIXTURES[0]
    rho = DensityMatrix.basis((0, 0))
    real, _ = _qgc_views(c, rho, (), 1)
    _, wrong = _qgc_views(c, DensityMatrix.basis((1, 0)), (), 1)
    exact = trace_distance(ensemble.enumerate_view(real), ensemble.enumerate_view(wrong))
    assert exact > 0.5
    assert abs(exact - ensemble.view_distance(real, wrong)) < 1e-9


def test_offline_part_independent_of_input():
    # with the same randomness, the offline register and table do not depend on x
    c = FIXTURES[2]
    r = qgc.EncodingRandomness.sample(c, RandomSource(5))
    a = qgc.encode(c, state("00"), (0, 1), RandomSource(1), r=r)
    b = qgc.encode(c, state("1+"), (1, 0), RandomSource(1), r=r)
    assert a.offline.table == b.offline.table
    assert a.offline.final == b.offline.final


def test_randomness_serialisation_roundtrip():
    c = FIXTURES[4]
    r = qgc.EncodingRandomness.sample(c, RandomSource(2))
    assert qgc.randomness_from_bits(c, qgc.randomness_to_bits(r)) == r


def test_classical_piece_serialisation_roundtrip():
    c = FIXTURES[2]
    r = qgc.EncodingRandomness.sample(c, RandomSource(2))
    for i in range(c.n_classical):
        for v in (0, 1):
            piece = qgc.online_classical_piece(i, v, c, r)
            bits = qgc.classical_piece_to_bits(piece)
            assert len(bits) == qgc.classical_piece_len(c, i)
            assert qgc.classical_piece_from_bits(c, i, bits) == piece


def test_t_gate_rejected():
    with pytest.raises(UnsupportedError):
        qgc.encode(circuit(1, [("T", [0])]), state("0"), (), RandomSource(0))


def test_simulate_checks_output_width():
    with pytest.raises(ShapeError):
        qgc.simulate(state("00"), FIXTURES[0], (), RandomSource(0))


def test_truncated_bundle_is_refused():
    c = FIXTURES[2]
    b = qgc.encode(c, state("00"), (1, 1), RandomSource(0))
    broken = dataclasses.replace(b, online_c=b.online_c[:1])
    with pytest.raises(CorruptBundle):
        qgc.decode(broken)


def test_offline_epr_count_and_sizes():
    c = FIXTURES[2]
    assert qgc.offline_epr_count(c) == 0
    size = qgc.encoding_size(c)
    assert size["epr_pairs"] == c.n_quantum
    assert size["register_qubits"] == 2
