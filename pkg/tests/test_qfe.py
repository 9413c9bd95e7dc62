import pytest
from hypothesis import given, settings, strategies as st

from qfekit import ensemble, games, qfe
from qfekit.errors import KeyReuseError, ShapeError, UnsupportedError
from qfekit.qcircuit import CircuitClass, channel, circuit, evaluate, identity
from qfekit.qcore import (DensityMatrix, RandomSource, choi_distance, make_epr, partial_trace, random_state,
                          state, trace_distance)
from qfekit.suite import CNOT2, H1, oneqfe_sim_strategies, polyqfe_fixtures


def oneqfe_channel(c, seed):
    rng = RandomSource(seed)

    def ch(rho):
        keys = qfe.oneqfe_setup(c, rng)
        return qfe.oneqfe_dec(qfe.oneqfe_keygen(keys), qfe.oneqfe_enc(keys, rho, rng))
    return ch


# ------------------------------------------------------------------ OneQFE

@pytest.mark.parametrize("c", [identity(1), H1, CNOT2], ids=["id", "H", "CNOT"])
def test_oneqfe_roundtrip_channel(c):
    assert choi_distance(oneqfe_channel(c, 3), channel(c), c.n_quantum) < 1e-9


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31))
def test_oneqfe_roundtrip_with_spectator(seed):
    rng = RandomSource(seed)
    rho = random_state(2, rng)
    keys = qfe.oneqfe_setup(H1, rng)
    ct = qfe.oneqfe_enc(keys, rho, rng, spectators=1)
    out = qfe.oneqfe_dec(qfe.oneqfe_keygen(keys), ct)
    want = qfe.apply_with_spectators(lambda r: evaluate(H1, r), rho, 1, 1)
    assert trace_distance(out, want) < 1e-9


def test_oneqfe_ciphertext_hides_message_without_key():
    # exact average over all setup and encryption randomness: the padded register is I/2
    def view(rng):
        keys = qfe.oneqfe_setup(H1, rng)
        return (), qfe.oneqfe_enc(keys, state("0"), rng).rho_ct0
    avg = ensemble.enumerate_view(view).state("")
    assert trace_distance(avg, DensityMatrix.maximally_mixed(1)) < 1e-12


def test_oneqfe_single_key():
    keys = qfe.oneqfe_setup(H1, RandomSource(0))
    qfe.oneqfe_keygen(keys)
    with pytest.raises(KeyReuseError):
        qfe.oneqfe_keygen(keys)


def test_oneqfe_wrong_width():
    keys = qfe.oneqfe_setup(H1, RandomSource(0))
    with pytest.raises(ShapeError):
        qfe.oneqfe_enc(keys, state("00"), RandomSource(1))


@pytest.mark.parametrize("index", range(3))
def test_oneqfe_adaptive_simulation_exact(index):
    st_ = oneqfe_sim_strategies()[index]
    rep = games.run_sim_experiment(games.ONEQFE_HOOKS, st_, True, method="enumerate")
    assert rep.value < 1e-9


def test_oneqfe_nonadaptive_simulation_exact():
    st_ = games.SimStrategy("H-before", make_epr(1), 1, H1, "before")
    rep = games.run_sim_experiment(games.ONEQFE_HOOKS, st_, False, method="enumerate")
    assert rep.value < 1e-9


def test_sim_query_discipline():
    st_ = games.SimStrategy("H-after", make_epr(1), 1, H1, "after")
    with pytest.raises(Exception):
        games.run_sim_experiment(games.ONEQFE_HOOKS, st_, False)


def test_adaptive_sim_state_is_single_use():
    keys = qfe.oneqfe_setup(H1, RandomSource(0))
    _, sim_state = qfe.oneqfe_sim_adaptive_ct(keys, RandomSource(1))
    qfe.oneqfe_sim_adaptive_key(sim_state, state("+"), RandomSource(2))
    with pytest.raises(KeyReuseError):
        qfe.oneqfe_sim_adaptive_key(sim_state, state("+"), RandomSource(3))


def test_multi_message_adaptive_unsupported():
    assert qfe.multi_message_sim(lambda v: v * 2, [1, 2]) == [2, 4]
    with pytest.raises(UnsupportedError):
        qfe.multi_message_sim(lambda v: v, [1], mode="adaptive")


# ----------------------------------------------------------------- PolyQFE

@pytest.mark.parametrize("index", range(3))
def test_polyqfe_end_to_end(index):
    cls, c = polyqfe_fixtures()[index]
    rng = RandomSource(index)

    def ch(rho):
        keys = qfe.polyqfe_setup(cls, rng)
        sk = qfe.polyqfe_keygen(keys, c)
        return qfe.polyqfe_dec(sk, qfe.polyqfe_enc(keys, rho, rng), keys.universal)
    assert choi_distance(ch, channel(c), c.n_quantum) < 1e-9


def test_polyqfe_rejects_circuit_outside_class():
    keys = qfe.polyqfe_setup(CircuitClass(1, 1), RandomSource(0))
    with pytest.raises(Exception):
        qfe.polyqfe_keygen(keys, circuit(1, [("H", [0]), ("P", [0])]))


def test_hybrid_specs_layout():
    specs = qfe.hybrid_specs(3)
    assert len(specs) == 3 + 4
    assert specs[0] == qfe.HybridSpec(0, False, False, False)
    assert specs[-1] == qfe.HybridSpec(3, True, True, True)


@pytest.mark.parametrize("adaptive", [False, True])
def test_real_and_ideal_hybrids_coincide(adaptive):
    cls = CircuitClass(1, 1)
    build = qfe.hybrid_builder(cls, H1, random_state(1, RandomSource(2)), adaptive)
    d = ensemble.view_distance(build(0), build(build.count - 1))
    assert d < 1e-9


def test_hybrid_views_keep_spectator_marginal():
    cls = CircuitClass(1, 1)
    rho = make_epr(1)
    ct, sk, held = qfe.run_hybrid(qfe.hybrid_specs(cls.length)[-1], cls, H1, rho, RandomSource(0),
                                  adaptive=False, spectators=1)
    # the spectator alone is untouched by encryption
    ref = partial_trace(held, list(range(held.n - 1)))
    assert trace_distance(ref, DensityMatrix.maximally_mixed(1)) < 1e-9
