import itertools
from collections import Counter

import pytest
from hypothesis import given, strategies as st

from qfekit import cfe, ensemble
from qfekit.errors import KeyReuseError, ShapeError
from qfekit.qcore import RandomSource, ScriptedSource
from qfekit.suite import cfe_sim_views

F0 = lambda v: (v[0] ^ v[1], v[2])
F1 = lambda v: (v[0] & v[2], 1)

messages = st.lists(st.integers(0, 1), min_size=1, max_size=16).map(tuple)


@given(messages, st.integers(0, 2**31))
def test_idfe_correct(m, seed):
    keys = cfe.idfe_setup(len(m), RandomSource(seed))
    assert cfe.idfe_dec(cfe.idfe_keygen(keys), cfe.idfe_enc(keys, m)) == m


@pytest.mark.parametrize("b", [0, 1])
def test_twofe_correct_on_all_inputs(b):
    for x in itertools.product((0, 1), repeat=3):
        keys = cfe.twofe_setup(F0, F1, 2, RandomSource(sum(x)))
        got = cfe.twofe_dec(cfe.twofe_keygen(keys, b), cfe.twofe_enc(keys, x))
        assert got == tuple((F0, F1)[b](x))


def test_idfe_ciphertext_uniform_over_keys():
    # enumerate the whole key space: each ciphertext string appears equally often
    counts = Counter()
    for script in itertools.product((0, 1), repeat=3):
        keys = cfe.idfe_setup(3, ScriptedSource(script))
        counts[cfe.idfe_enc(keys, (1, 0, 1)).bits()] += 1
    assert len(counts) == 8 and set(counts.values()) == {1}


def test_idfe_single_key():
    keys = cfe.idfe_setup(2, RandomSource(0))
    cfe.idfe_keygen(keys)
    assert keys.consumed
    with pytest.raises(KeyReuseError):
        cfe.idfe_keygen(keys)


def test_idfe_pad_is_one_time():
    # the pad stand-in hides one ciphertext only: two under one key leak m xor m'
    keys = cfe.idfe_setup(3, RandomSource(4))
    a = cfe.idfe_enc(keys, (1, 0, 0)).bits()
    b = cfe.idfe_enc(keys, (0, 0, 1)).bits()
    assert tuple(x ^ y for x, y in zip(a, b)) == (1, 0, 1)


def test_twofe_single_key():
    keys = cfe.twofe_setup(F0, F1, 2, RandomSource(0))
    cfe.twofe_keygen(keys, 0)
    with pytest.raises(KeyReuseError):
        cfe.twofe_keygen(keys, 1)


def test_shape_errors():
    keys = cfe.idfe_setup(2, RandomSource(0))
    with pytest.raises(ShapeError):
        cfe.idfe_enc(keys, (1,))
    tk = cfe.twofe_setup(F0, F1, 2, RandomSource(0))
    with pytest.raises(ShapeError):
        cfe.twofe_keygen(tk, 2)


def test_function_output_length_enforced():
    keys = cfe.twofe_setup(lambda v: (1, 1, 1), F1, 2, RandomSource(0))
    with pytest.raises(ShapeError):
        cfe.twofe_enc(keys, (0, 0, 0))


@pytest.mark.parametrize("kind", ["idfe", "twofe"])
@pytest.mark.parametrize("order", ["key-first", "ciphertext-first"])
def test_simulation_is_perfect(kind, order):
    real, ideal = cfe_sim_views(kind, order)
    assert ensemble.enumerate_view(real).distance(ensemble.enumerate_view(ideal)) == 0.0


@pytest.mark.parametrize("x", list(itertools.product((0, 1), repeat=3)))
def test_twofe_simulation_every_input(x):
    real, ideal = cfe_sim_views("twofe", "ciphertext-first", x=x, b=0)
    assert ensemble.enumerate_view(real).distance(ensemble.enumerate_view(ideal)) == 0.0


def test_wrong_function_value_is_detected():
    # the ideal view with the other selector's value differs when the values differ
    x = (1, 1, 1)
    real, _ = cfe_sim_views("twofe", "key-first", x=x, b=0)
    _, ideal = cfe_sim_views("twofe", "key-first", x=x, b=1)
    assert ensemble.enumerate_view(real).distance(ensemble.enumerate_view(ideal)) == 1.0
