import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

import oracle as o
from qfekit import games
from qfekit.errors import QfeError, ShapeError
from qfekit.qcircuit import identity
from qfekit.qcore import DensityMatrix, state
from qfekit.suite import H1, mc_vs_exact

Z99 = 2.5758293035489004          # two-sided 99% normal quantile


def baseline_instance():
    return games.classical_messages_instance((0,), (1,), games.constant_circuit(1))


# ----------------------------------------------------------------- engine

@settings(max_examples=60)
@given(st.integers(1, 10**6), st.data())
def test_wilson_matches_closed_form(n, data):
    k = data.draw(st.integers(0, n))
    lo, hi = games.wilson_interval(k, n)
    p = k / n
    c = (p + Z99 ** 2 / (2 * n)) / (1 + Z99 ** 2 / n)
    h = Z99 * math.sqrt(p * (1 - p) / n + Z99 ** 2 / (4 * n * n)) / (1 + Z99 ** 2 / n)
    assert lo == pytest.approx(max(0, c - h), abs=1e-12)
    assert hi == pytest.approx(min(1, c + h), abs=1e-12)
    assert lo <= p <= hi


def test_wilson_rejects_bad_counts():
    with pytest.raises(ShapeError):
        games.wilson_interval(3, 2)
    with pytest.raises(ShapeError):
        games.wilson_interval(0, 0)


def test_exact_engine_on_a_fair_coin_game():
    rate, count = games.exact_win_rate(lambda rng: float(rng.bit() == rng.bit()))
    assert rate == 0.5 and count == 4


def test_exact_engine_refuses_too_many_bits():
    with pytest.raises(QfeError):
        games.exact_win_rate(lambda rng: float(rng.bits(25)[0]))


def test_auto_mode_falls_back_to_mc():
    rep = games.run_game("coin", lambda rng: 0.5 if rng.random() < 2 else 0.0, trials=200, seed=1)
    assert rep.mode == "monte-carlo" and rep.ci is not None


def test_report_mode_contract():
    with pytest.raises(ShapeError):
        games.ExperimentReport("x", "exact", 0.5, (0.4, 0.6), 1, 0, {})
    with pytest.raises(ShapeError):
        games.ExperimentReport("x", "monte-carlo", 0.5, None, 1, 0, {})


def test_report_json_is_versioned_and_scoped():
    rep = games.run_ind_experiment(games.ONEQFE_IND, games.random_guess_strategy(baseline_instance()),
                                   mode="exact")
    doc = json.loads(rep.to_json())
    assert doc["schema_version"] == games.SCHEMA_VERSION
    assert doc["scope"] == games.SCOPE
    assert doc["mode"] == "exact" and doc["ci"] is None


def test_mc_is_deterministic_given_seed():
    fn = games.ind_game(games.ONEQFE_IND, games.measure_ciphertext_strategy(baseline_instance()), False)
    assert games.mc_successes(fn, 300, 5) == games.mc_successes(fn, 300, 5)


# ---------------------------------------------------------- admissibility

def test_epr_halves_rejected_with_oracle_distance():
    s0 = o.kron(o.epr(), o.I2 / 2)
    p = o.perm_matrix([0, 2, 1], 3)
    want = o.tdist(s0, p @ s0 @ p.T)
    assert want == pytest.approx(math.sqrt(3) / 2, abs=1e-12)
    ok, d = games.check_admissible(games.epr_halves_instance())
    assert not ok
    assert d == pytest.approx(want, abs=1e-12)


def test_epr_halves_constant_counterpart_accepted():
    ok, d = games.check_admissible(games.epr_halves_constant_instance())
    assert ok and d < 1e-12


def test_classical_messages_with_h_are_distinguishable():
    ok, d = games.check_admissible(games.classical_messages_instance((0,), (1,), H1))
    assert not ok and d == pytest.approx(1.0)


def test_identical_messages_admissible():
    ok, _ = games.check_admissible(games.identical_messages_instance(state("+"), H1))
    assert ok


def test_inadmissible_challenge_refused():
    inst = games.epr_halves_instance()
    with pytest.raises(QfeError):
        games.run_ind_experiment(games.ONEQFE_IND, games.random_guess_strategy(inst), mode="exact")


def test_unknown_admissibility_variant():
    with pytest.raises(ShapeError):
        games.admissibility_distance(baseline_instance(), variant="weird")


# -------------------------------------------------------------------- IND

def test_random_guess_is_half_exactly():
    rep = games.run_ind_experiment(games.ONEQFE_IND, games.random_guess_strategy(baseline_instance()),
                                   mode="exact")
    assert rep.value == 0.5


def test_measuring_oneqfe_ciphertext_gains_nothing():
    rep = games.run_ind_experiment(games.ONEQFE_IND, games.measure_ciphertext_strategy(baseline_instance()),
                                   mode="exact")
    assert rep.value == pytest.approx(0.5, abs=1e-12)


def test_broken_scheme_is_detected():
    rep = games.run_ind_experiment(games.BROKEN_IND, games.measure_ciphertext_strategy(baseline_instance()),
                                   mode="exact")
    assert rep.value == pytest.approx(1.0)


def test_decrypting_gives_only_the_admissible_output():
    rep = games.run_ind_experiment(games.ONEQFE_IND, games.decrypt_and_measure_strategy(baseline_instance()),
                                   mode="exact")
    assert rep.value == pytest.approx(0.5, abs=1e-12)


# --------------------------------------------------------------- 2-player

def test_two_player_baselines():
    ind = games.run_2player_experiment(games.ONEQFE_2P, games.guessing_baseline(False), mode="exact")
    cor = games.run_2player_experiment(games.ONEQFE_2P, games.guessing_baseline(True), mode="exact")
    assert ind.value == pytest.approx(0.25, abs=1e-15)
    assert cor.value == pytest.approx(0.5, abs=1e-15)


def test_copy_attack_breaks_only_the_broken_scheme():
    broken = games.run_2player_experiment(games.BROKEN_2P, games.copy_attack(), mode="exact")
    real = games.run_2player_experiment(games.ONEQFE_2P, games.copy_attack(), mode="exact")
    assert broken.value == pytest.approx(1.0)
    assert real.value == pytest.approx(0.5, abs=1e-12)


def test_mc_agrees_with_exact_within_wilson():
    for name, exact, (lo, hi) in mc_vs_exact(seed=3, trials=2000):
        assert lo <= exact <= hi, name


# --------------------------------------------------------------------- UFE

def test_honest_ufe_strategy():
    rep = games.run_ufe_experiment(1, games.honest_ufe_strategy(1), trials=60, seed=2)
    assert rep.details["side_b_correct"] == 1.0
    assert rep.mode == "monte-carlo"


# ------------------------------------------------------------------ QMIFE

def _qmife(x0, x1, circuits, **kw):
    n = kw.pop("n", 1)
    k = kw.pop("k", 1)
    return games.QmifeStrategy("t", n, k, tuple(x0), tuple(x1), tuple(circuits), **kw)


def test_qmife_incompatible_challenge_rejected():
    s = _qmife([state("0")], [state("1")], [identity(1)], guess=lambda v: 0.5)
    ok, worst, _ = games.qmife_compatibility(s)
    assert not ok and worst == pytest.approx(1.0)
    with pytest.raises(QfeError):
        games.run_qmife_experiments(s)


def test_qmife_compatible_ind_is_half():
    const = games.constant_circuit(1)
    guess = lambda view: float(np.real(view.decrypt(0, (0,)).data[1, 1]))
    s = _qmife([state("0")], [state("1")], [const], guess=guess)
    rep = games.run_qmife_experiments(s, stat_mode="exact")
    assert rep.value == pytest.approx(0.5, abs=1e-12)


def test_qmife_sim_exact_on_basis_and_decoheres_plus():
    basis = _qmife([state("1")], [state("1")], [identity(1)], queries=((0, (0,)),))
    rep = games.run_qmife_experiments(basis, mode="SIM")
    assert rep.value < 1e-12 and rep.details["simulator_admissible"]
    plus = _qmife([state("+")], [state("+")], [identity(1)], queries=((0, (0,)),))
    assert games.run_qmife_experiments(plus, mode="SIM").value == pytest.approx(0.5, abs=1e-12)


def test_index_tuples():
    assert games.index_tuples(2, 2) == [(0, 0), (0, 1), (1, 0), (1, 1)]


# ----------------------------------------------------------------- helpers

def test_classical_map_and_prob_one():
    flip = games.classical_map(1, lambda b: (1 - b[0],))
    assert games.prob_one(flip(state("0"))) == pytest.approx(1.0)
    assert games.prob_one(games.constant_bit(0.25)(DensityMatrix.scalar())) == pytest.approx(0.25)
