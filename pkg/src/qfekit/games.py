"""Security-experiment harness.

Adversaries are explicit strategy objects built from finite channels, so
every number reported here is a statement about the strategies that were
run and never a security proof.  Win probabilities are computed by a single
engine: a game is a function that draws all of its randomness from a
:class:`RandomSource` and returns the exact probability of winning given
those draws.  Exact mode sums that function over every randomness script;
Monte-Carlo mode samples one Bernoulli outcome per trial.
"""

from __future__ import annotations

import itertools
import json
import math
import statistics
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from . import ensemble, qcircuit, qfe, qmio, ufe
from .config import get_config
from .errors import QfeError, ShapeError, UnsupportedError
from .qcircuit import CircuitClass, CircuitDesc, evaluate
from .qcore import (Bits, DensityMatrix, RandomSource, ScriptedSource, apply_on,
                    bits_to_int, int_to_bits, make_epr, partial_trace, permute, tensor,
                    trace_distance)

SCHEMA_VERSION = 1
SCOPE = "claims hold for the strategies implemented, not for all adversaries"
ADMISSIBILITY_TOL = 1e-9
EXACT_BRANCH_BITS = 20

Channel = Callable[[DensityMatrix], DensityMatrix]
WinFn = Callable[[RandomSource], float]


# =================================================================== reports

@dataclass(frozen=True)
class ExperimentReport:
    experiment: str
    mode: str                            # "exact" or "monte-carlo"
    value: float                         # win rate or trace distance
    ci: tuple[float, float] | None
    trials: int
    seed: int | None
    tolerances: Mapping[str, float]
    strategy: str = ""
    details: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.mode == "exact" and self.ci is not None:
            raise ShapeError("exact reports carry no interval")
        if self.mode == "monte-carlo" and self.ci is None:
            raise ShapeError("Monte-Carlo reports need an interval")

    def to_dict(self) -> dict[str, Any]:
        return {
            "schema_version": SCHEMA_VERSION,
            "experiment": self.experiment,
            "mode": self.mode,
            "value": self.value,
            "ci": None if self.ci is None else list(self.ci),
            "trials": self.trials,
            "seed": self.seed,
            "tolerances": dict(self.tolerances),
            "strategy": self.strategy,
            "details": dict(self.details),
            "scope": SCOPE,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _tolerances() -> dict[str, float]:
    tol = get_config().tol
    return {"algebraic": tol.algebraic, "eigen": tol.eigen, "admissibility": ADMISSIBILITY_TOL}


def wilson_interval(successes: int, trials: int, confidence: float = 0.99) -> tuple[float, float]:
    if trials <= 0:
        raise ShapeError("need at least one trial")
    if not 0 <= successes <= trials:
        raise ShapeError("successes out of range")
    z = statistics.NormalDist().inv_cdf(0.5 + confidence / 2)
    p = successes / trials
    denom = 1 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * math.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    # the endpoints are exact at 0 and n successes; rounding would otherwise exclude p
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi


# ------------------------------------------------------------ win engine

def randomness_bits(fn: WinFn) -> int:
    src = ScriptedSource()
    fn(src)
    return src.consumed


def exact_win_rate(fn: WinFn, max_bits: int = EXACT_BRANCH_BITS) -> tuple[float, int]:
    """Average of ``fn`` over every randomness script; returns (rate, script count)."""
    n = randomness_bits(fn)
    if n > max_bits:
        raise QfeError(f"{n} random bits exceed the enumeration limit of {max_bits}")
    total = 0.0
    for script in itertools.product((0, 1), repeat=n):
        src = ScriptedSource(script)
        total += fn(src)
        if src.consumed != n:
            raise QfeError("game consumed a script-dependent amount of randomness")
    return total / (1 << n), 1 << n


def mc_successes(fn: WinFn, trials: int, seed: int) -> int:
    """One independent Bernoulli(win probability) outcome per trial."""
    root = RandomSource(seed)
    wins = 0
    for _ in range(trials):
        rng = root.spawn()
        p = fn(rng)
        wins += rng.random() < p
    return wins


def _enumerable(fn: WinFn) -> bool:
    try:
        return randomness_bits(fn) <= EXACT_BRANCH_BITS
    except QfeError:
        return False         # the game makes draws a script cannot replay


def run_game(experiment: str, fn: WinFn, mode: str = "auto", trials: int = 10_000, seed: int = 0,
             strategy: str = "", details: Mapping[str, Any] | None = None) -> ExperimentReport:
    """Evaluate a game exactly or by Monte-Carlo; ``auto`` prefers exact."""
    if mode == "auto":
        mode = "exact" if _enumerable(fn) else "monte-carlo"
    details = dict(details or {})
    if mode == "exact":
        rate, count = exact_win_rate(fn)
        return ExperimentReport(experiment, "exact", rate, None, count, seed, _tolerances(),
                                strategy, details)
    if mode in ("mc", "monte-carlo"):
        wins = mc_successes(fn, trials, seed)
        details["successes"] = wins
        return ExperimentReport(experiment, "monte-carlo", wins / trials, wilson_interval(wins, trials),
                                trials, seed, _tolerances(), strategy, details)
    raise ShapeError(f"unknown mode {mode!r}")


# ---------------------------------------------------------- channel helpers

def classical_map(n_in: int, fn: Callable[[Bits], Bits]) -> Channel:
    """Measure every qubit and output the basis state ``fn(outcome)``."""
    def ch(rho: DensityMatrix) -> DensityMatrix:
        if rho.n != n_in:
            raise ShapeError(f"expected {n_in} qubits, got {rho.n}")
        probs = np.real(np.diag(rho.data))
        out = None
        for x, p in enumerate(probs):
            if p <= 0:
                continue
            term = p * DensityMatrix.basis(fn(int_to_bits(x, n_in))).data
            out = term if out is None else out + term
        return DensityMatrix._wrap(out)
    return ch


def constant_bit(p_one: float) -> Channel:
    """Discard the input and output 1 with probability ``p_one``."""
    out = DensityMatrix._wrap(np.diag([1.0 - p_one, p_one]).astype(complex))
    return lambda rho: out


def prob_one(rho: DensityMatrix, qubit: int = 0) -> float:
    """Probability that measuring ``qubit`` gives 1."""
    keep = partial_trace(rho, [q for q in range(rho.n) if q != qubit])
    return float(np.real(keep.data[1, 1]))


def _joint_guess(rho: DensityMatrix, wires_b: Sequence[int], ch_b: Channel,
                 wires_c: Sequence[int], ch_c: Channel) -> np.ndarray:
    """Outcome distribution P[b_B, b_C] of two isolated one-bit guesses."""
    wires_b, wires_c = list(wires_b), list(wires_c)
    if set(wires_b) & set(wires_c):
        raise QfeError("players B and C must receive disjoint registers")
    if sorted(wires_b + wires_c) != list(range(rho.n)):
        raise QfeError("the split must hand every register to exactly one player")
    # B acts first; its output lands after C's untouched wires
    mid = apply_on(rho, ch_b, wires_b) if wires_b else tensor(rho, ch_b(DensityMatrix.scalar()))
    c_now = list(range(len(wires_c)))
    out = apply_on(mid, ch_c, c_now) if wires_c else tensor(mid, ch_c(DensityMatrix.scalar()))
    if out.n != 2:
        raise ShapeError("each player must output exactly one qubit")
    return np.real(np.diag(out.data)).reshape(2, 2)


# ============================================================ admissibility

@dataclass(frozen=True)
class AdmissibilityTerm:
    """One term p * rho on registers E (encrypted), U (returned in the clear), A (adversary)."""

    p: float
    state: DensityMatrix
    e: int
    u: int
    a: int

    def __post_init__(self):
        if self.state.n != self.e + self.u + self.a:
            raise ShapeError(f"term state has {self.state.n} qubits, widths sum to "
                             f"{self.e + self.u + self.a}")

    @classmethod
    def product(cls, p: float, e: DensityMatrix, u: DensityMatrix | None = None,
                a: DensityMatrix | None = None) -> "AdmissibilityTerm":
        u = DensityMatrix.scalar() if u is None else u
        a = DensityMatrix.scalar() if a is None else a
        return cls(p, tensor(e, u, a), e.n, u.n, a.n)


@dataclass(frozen=True)
class AdmissibilityInstance:
    terms0: tuple[AdmissibilityTerm, ...]
    terms1: tuple[AdmissibilityTerm, ...]
    circuit: CircuitDesc
    tol: float = ADMISSIBILITY_TOL

    def widths(self) -> tuple[int, int, int]:
        shapes = {(t.e, t.u, t.a) for t in self.terms0 + self.terms1}
        if len(shapes) != 1:
            raise ShapeError(f"inconsistent register widths across terms: {sorted(shapes)}")
        (w,) = shapes
        return w


def _output_mixture(terms: Sequence[AdmissibilityTerm], circuit: CircuitDesc, variant: str) -> DensityMatrix:
    tol = get_config().tol.algebraic
    if any(t.p < -tol for t in terms) or abs(sum(t.p for t in terms) - 1) > tol:
        raise ShapeError("term weights must be a probability vector")
    acc = None
    for t in terms:
        if circuit.n_quantum != t.e:
            raise ShapeError(f"circuit takes {circuit.n_quantum} qubits, E register has {t.e}")
        out = qfe.apply_with_spectators(lambda r: evaluate(circuit, r), t.state, t.e, t.u + t.a)
        if variant == "no_u" and t.u:
            d = out.n - t.u - t.a
            out = partial_trace(out, range(d, d + t.u))
        acc = t.p * out.data if acc is None else acc + t.p * out.data
    return DensityMatrix._wrap(acc)


def admissibility_distance(inst: AdmissibilityInstance, variant: str = "full") -> float:
    """T(sum_i p_i C(E_i) (x) U_i (x) A_i, same for message 1).

    ``variant="no_u"`` drops the clear register U, which is the condition
    for schemes without a returned register.
    """
    if variant not in ("full", "no_u"):
        raise ShapeError(f"unknown variant {variant!r}")
    inst.widths()
    return trace_distance(_output_mixture(inst.terms0, inst.circuit, variant),
                          _output_mixture(inst.terms1, inst.circuit, variant))


def check_admissible(inst: AdmissibilityInstance, variant: str = "full") -> tuple[bool, float]:
    d = admissibility_distance(inst, variant)
    return d <= inst.tol, d


def constant_circuit(n: int) -> CircuitDesc:
    """Discard the n inputs and output |0>: every message has the same output."""
    return qcircuit.circuit(n, [], ancillas=(n,), trace_out=tuple(range(n)))


def epr_halves_instance(circuit: CircuitDesc | None = None) -> AdmissibilityInstance:
    """Message b is half of EPR pair b; the adversary keeps both partners.

    Registers: E = the encrypted half, A = (partner 0, partner 1).  The
    unused pair is entirely held by the adversary side as a maximally mixed
    partner.
    """
    circuit = qcircuit.identity(1) if circuit is None else circuit
    phi = make_epr(1)                                   # (E, partner)
    mixed = DensityMatrix.maximally_mixed(1)
    s0 = tensor(phi, mixed)                             # E, A0, A1
    s1 = permute(tensor(phi, mixed), [0, 2, 1])         # E, A0 (mixed), A1 (partner)
    return AdmissibilityInstance((AdmissibilityTerm(1.0, s0, 1, 0, 2),),
                                 (AdmissibilityTerm(1.0, s1, 1, 0, 2),), circuit)


def epr_halves_constant_instance() -> AdmissibilityInstance:
    """The same messages queried with a circuit whose output ignores the input."""
    return epr_halves_instance(constant_circuit(1))


def classical_messages_instance(m0: Sequence[int], m1: Sequence[int], circuit: CircuitDesc) -> AdmissibilityInstance:
    return AdmissibilityInstance((AdmissibilityTerm.product(1.0, DensityMatrix.basis(m0)),),
                                 (AdmissibilityTerm.product(1.0, DensityMatrix.basis(m1)),), circuit)


def identical_messages_instance(rho: DensityMatrix, circuit: CircuitDesc) -> AdmissibilityInstance:
    t = (AdmissibilityTerm.product(1.0, rho),)
    return AdmissibilityInstance(t, t, circuit)


def _term_mixture(terms: Sequence[AdmissibilityTerm]) -> DensityMatrix:
    acc = sum(t.p * t.state.data for t in terms)
    return DensityMatrix._wrap(acc)


# =========================================================== SIM experiment

@dataclass(frozen=True)
class SimStrategy:
    """Message (first ``n_msg`` qubits, then the adversary's reference) and one key query.

    ``query`` is "before" (key first), "after" (ciphertext first) or "none".
    """

    name: str
    message: DensityMatrix
    n_msg: int
    circuit: CircuitDesc
    query: str = "after"
    cls: CircuitClass | None = None

    @property
    def spectators(self) -> int:
        return self.message.n - self.n_msg


@dataclass(frozen=True)
class SimHooks:
    """Real and ideal view builders of one scheme (adversary view = label bits, held state)."""

    name: str
    real: Callable[[SimStrategy, bool], ensemble.ViewFn]
    ideal: Callable[[SimStrategy, bool], ensemble.ViewFn]


def _check_discipline(strategy: SimStrategy, adaptive: bool) -> None:
    if strategy.query not in ("before", "after", "none"):
        raise QfeError(f"unknown query timing {strategy.query!r}")
    if strategy.query == "after" and not adaptive:
        raise QfeError("a non-adaptive adversary must query its key before the ciphertext")
    if strategy.query == "before" and adaptive:
        raise QfeError("the adaptive experiment issues the ciphertext before the key query")
    if strategy.n_msg != strategy.circuit.n_quantum or strategy.spectators < 0:
        raise ShapeError("message width does not match the query circuit")


def _oneqfe_real(strategy: SimStrategy, adaptive: bool) -> ensemble.ViewFn:
    c, s = strategy.circuit, strategy.spectators

    def view(rng: RandomSource):
        keys = qfe.oneqfe_setup(c, rng)
        ct = qfe.oneqfe_enc(keys, strategy.message, rng, s)
        label = ct.classical_label()
        if strategy.query != "none":
            label += qfe.oneqfe_keygen(keys).classical_label()
        return label, ct.rho_ct0
    return view


def _oneqfe_ideal(strategy: SimStrategy, adaptive: bool) -> ensemble.ViewFn:
    c, s, n = strategy.circuit, strategy.spectators, strategy.n_msg

    def view(rng: RandomSource):
        keys = qfe.oneqfe_setup(c, rng)
        if strategy.query == "before":
            sk = qfe.oneqfe_keygen(keys)
            c_out = qfe.apply_with_spectators(lambda r: evaluate(c, r), strategy.message, n, s)
            ct = qfe.oneqfe_sim_nonadaptive(keys, c_out, rng, spectators=s)
            return ct.classical_label() + sk.classical_label(), ct.rho_ct0
        ct, st = qfe.oneqfe_sim_adaptive_ct(keys, rng)
        if strategy.query == "none":
            # V is empty: the simulator never sees C(m); the reference stays with the adversary
            ref = partial_trace(strategy.message, range(n)) if s else DensityMatrix.scalar()
            return ct.classical_label(), tensor(ct.rho_ct0, ref)
        c_out = qfe.apply_with_spectators(lambda r: evaluate(c, r), strategy.message, n, s)
        sk, held = qfe.oneqfe_sim_adaptive_key(st, c_out, rng, spectators=s)
        return ct.classical_label() + sk.classical_label(), held
    return view


ONEQFE_HOOKS = SimHooks("oneqfe", _oneqfe_real, _oneqfe_ideal)


def _poly_builder(strategy: SimStrategy, adaptive: bool):
    if strategy.cls is None:
        raise ShapeError("PolyQFE strategies need a circuit class")
    if strategy.query == "none":
        raise UnsupportedError("the PolyQFE hooks model strategies with one key query")
    return qfe.hybrid_builder(strategy.cls, strategy.circuit, strategy.message, adaptive,
                              strategy.spectators)


def _poly_real(strategy, adaptive):
    return _poly_builder(strategy, adaptive)(0)


def _poly_ideal(strategy, adaptive):
    build = _poly_builder(strategy, adaptive)
    return build(build.count - 1)


POLYQFE_HOOKS = SimHooks("polyqfe", _poly_real, _poly_ideal)


def run_sim_experiment(hooks: SimHooks, strategy: SimStrategy, adaptive: bool,
                       method: str = "auto", seed: int = 0) -> ExperimentReport:
    """Exact distance between the Real and Ideal adversary views.

    ``method`` is "enumerate" (brute force over every randomness script),
    "affine" (exact fit of the Pauli/XOR structure) or "auto".
    """
    _check_discipline(strategy, adaptive)
    real, ideal = hooks.real(strategy, adaptive), hooks.ideal(strategy, adaptive)
    if method == "auto":
        bits = max(ensemble.count_randomness(real), ensemble.count_randomness(ideal))
        method = "enumerate" if bits <= 18 else "affine"
    if method == "enumerate":
        a, b = ensemble.enumerate_view(real), ensemble.enumerate_view(ideal)
        dist = a.distance(b)
        branches = 1 << max(ensemble.count_randomness(real), ensemble.count_randomness(ideal))
    elif method == "affine":
        dist = ensemble.view_distance(real, ideal)
        branches = 0
    else:
        raise ShapeError(f"unknown method {method!r}")
    mode = "adaptive" if adaptive else "nonadaptive"
    return ExperimentReport(f"sim/{hooks.name}/{mode}", "exact", float(dist), None, branches, seed,
                            _tolerances(), strategy.name,
                            {"method": method, "query": strategy.query})


# =========================================================== IND experiment

@dataclass
class IndView:
    """What the guessing stage sees: classical label, ciphertext register (then U, A) and a key."""

    label: Bits
    state: DensityMatrix
    decrypt: Callable[[], DensityMatrix]


@dataclass(frozen=True)
class IndScheme:
    name: str
    # (circuit, joint E U A state, E width, rng, adaptive) -> view
    run: Callable[[CircuitDesc, DensityMatrix, int, RandomSource, bool], IndView]


def _oneqfe_ind(circuit, joint, e, rng, adaptive):
    keys = qfe.oneqfe_setup(circuit, rng)
    sk = None if adaptive else qfe.oneqfe_keygen(keys)
    ct = qfe.oneqfe_enc(keys, joint, rng, joint.n - e)
    sk = qfe.oneqfe_keygen(keys) if adaptive else sk
    return IndView(ct.classical_label() + sk.classical_label(), ct.rho_ct0,
                   lambda: qfe.oneqfe_dec(sk, ct))


def _broken_ind(circuit, joint, e, rng, adaptive):
    # pads disabled: the "ciphertext" is the plaintext itself
    out = qfe.apply_with_spectators(lambda r: evaluate(circuit, r), joint, e, joint.n - e)
    return IndView((), joint, lambda: out)


ONEQFE_IND = IndScheme("oneqfe", _oneqfe_ind)
BROKEN_IND = IndScheme("broken", _broken_ind)


@dataclass(frozen=True)
class IndStrategy:
    name: str
    instance: AdmissibilityInstance
    guess: Callable[[IndView], float]          # probability of answering 1


def ind_game(scheme: IndScheme, strategy: IndStrategy, adaptive: bool) -> WinFn:
    inst = strategy.instance
    e = inst.widths()[0]
    rho = (_term_mixture(inst.terms0), _term_mixture(inst.terms1))

    def game(rng: RandomSource) -> float:
        b = rng.bit()
        view = scheme.run(inst.circuit, rho[b], e, rng, adaptive)
        p1 = float(strategy.guess(view))
        return p1 if b else 1.0 - p1
    return game


def run_ind_experiment(scheme: IndScheme, strategy: IndStrategy, adaptive: bool = False,
                       mode: str = "auto", trials: int = 10_000, seed: int = 0,
                       variant: str = "full") -> ExperimentReport:
    ok, dist = check_admissible(strategy.instance, variant)
    if not ok:
        raise QfeError(f"inadmissible challenge: output distance {dist:.3g}")
    return run_game(f"ind/{scheme.name}", ind_game(scheme, strategy, adaptive), mode, trials, seed,
                    strategy.name, {"admissibility_distance": dist, "adaptive": adaptive})


def random_guess_strategy(instance: AdmissibilityInstance) -> IndStrategy:
    return IndStrategy("random-guess", instance, lambda view: 0.5)


def measure_ciphertext_strategy(instance: AdmissibilityInstance, qubit: int = 0) -> IndStrategy:
    """Answer with the computational-basis value of one ciphertext qubit."""
    return IndStrategy(f"measure-ct[{qubit}]", instance, lambda view: prob_one(view.state, qubit))


def decrypt_and_measure_strategy(instance: AdmissibilityInstance, qubit: int = 0) -> IndStrategy:
    return IndStrategy(f"decrypt-measure[{qubit}]", instance, lambda view: prob_one(view.decrypt(), qubit))


# ======================================================= 2-player experiment

@dataclass(frozen=True)
class PlayerInfo:
    """Classical information of one player: its key, the classical ciphertext, shared randomness."""

    key: Any
    ct_label: Bits
    shared: Bits


PlayerFactory = Callable[[PlayerInfo], Channel]      # channel: own register -> one guess qubit


@dataclass(frozen=True)
class TwoPlayerStrategy:
    """A = (messages, split channel); B and C = guessing channels built from their own info.

    ``split`` maps the quantum ciphertext register to B's ``width_b``
    qubits followed by C's qubits.
    """

    name: str
    m0: DensityMatrix
    m1: DensityMatrix
    circuit_b: CircuitDesc
    circuit_c: CircuitDesc
    split: Channel
    width_b: int
    player_b: PlayerFactory
    player_c: PlayerFactory
    shared_bits: int = 0


@dataclass(frozen=True)
class TwoPlayerScheme:
    name: str
    # (m, circuit_b, circuit_c, rng) -> (quantum ct, classical ct label, key_b, key_c)
    run: Callable[[DensityMatrix, CircuitDesc, CircuitDesc, RandomSource], tuple]


def _oneqfe_2p(m, cb, cc, rng):
    if cb != cc:
        raise UnsupportedError("OneQFE keys exist for its one fixed circuit only")
    keys = qfe.oneqfe_setup(cb, rng)
    ct = qfe.oneqfe_enc(keys, m, rng)
    sk = qfe.oneqfe_keygen(keys)            # classical: both players get a copy
    return ct.rho_ct0, ct.classical_label(), (sk, ct.ct1), (sk, ct.ct1)


def _broken_2p(m, cb, cc, rng):
    return m, (), cb, cc


ONEQFE_2P = TwoPlayerScheme("oneqfe", _oneqfe_2p)
BROKEN_2P = TwoPlayerScheme("broken", _broken_2p)


def two_player_game(scheme: TwoPlayerScheme, strategy: TwoPlayerStrategy) -> WinFn:
    def game(rng: RandomSource) -> float:
        b = rng.bit()
        shared = rng.bits(strategy.shared_bits)
        q, label, key_b, key_c = scheme.run(strategy.m1 if b else strategy.m0, strategy.circuit_b,
                                            strategy.circuit_c, rng)
        split = strategy.split(q)
        wb = strategy.width_b
        ch_b = strategy.player_b(PlayerInfo(key_b, label, shared))
        ch_c = strategy.player_c(PlayerInfo(key_c, label, shared))
        dist = _joint_guess(split, range(wb), ch_b, range(wb, split.n), ch_c)
        return float(dist[b, b])
    return game


def run_2player_experiment(scheme: TwoPlayerScheme, strategy: TwoPlayerStrategy, mode: str = "auto",
                           trials: int = 10_000, seed: int = 0) -> ExperimentReport:
    checks = {}
    for side, c in (("B", strategy.circuit_b), ("C", strategy.circuit_c)):
        inst = AdmissibilityInstance((AdmissibilityTerm.product(1.0, strategy.m0),),
                                     (AdmissibilityTerm.product(1.0, strategy.m1),), c)
        ok, d = check_admissible(inst)
        if not ok:
            raise QfeError(f"player {side}'s query is inadmissible: distance {d:.3g}")
        checks[side] = d
    return run_game(f"2p/{scheme.name}", two_player_game(scheme, strategy), mode, trials, seed,
                    strategy.name, {"admissibility": checks})


def discard_split(q: DensityMatrix) -> DensityMatrix:
    return DensityMatrix.scalar()


def copy_split(q: DensityMatrix) -> DensityMatrix:
    """Measure each qubit and give B and C one classical copy each."""
    n = q.n
    return classical_map(n, lambda x: x + x)(q)


def guessing_baseline(correlated: bool, width: int = 1) -> TwoPlayerStrategy:
    """No information: independent fair coins, or both players echo one shared coin."""
    m0, m1 = DensityMatrix.basis((0,) * width), DensityMatrix.basis((1,) * width)
    c = constant_circuit(width)
    if correlated:
        player = lambda info: constant_bit(float(info.shared[0]))
        return TwoPlayerStrategy("shared-coin", m0, m1, c, c, discard_split, 0, player, player, 1)
    player = lambda info: constant_bit(0.5)
    return TwoPlayerStrategy("independent-coins", m0, m1, c, c, discard_split, 0, player, player)


def copy_attack(width: int = 1) -> TwoPlayerStrategy:
    """Copy the ciphertext register classically and read the message off each copy."""
    m0, m1 = DensityMatrix.basis((0,) * width), DensityMatrix.basis((1,) * width)
    c = constant_circuit(width)
    player = lambda info: classical_map(width, lambda x: (x[0],))
    return TwoPlayerStrategy("copy-attack", m0, m1, c, c, copy_split, width, player, player)


# =========================================================== UFE experiments

@dataclass(frozen=True)
class UfePlayerInfo:
    key: ufe.UfeKey
    ct: ufe.UfeCiphertext | None          # only the holder gets the ciphertext register
    shared: Bits


@dataclass(frozen=True)
class UfeStrategy:
    """A hands the whole ciphertext register to one player (or to neither).

    The harness cannot split a slot-structured register, so quantum
    correlations between B and C are out of scope; given the shared
    randomness their guesses are independent and the joint win probability
    factorises exactly.
    """

    name: str
    m0: DensityMatrix
    m1: DensityMatrix
    circuit_b: CircuitDesc
    circuit_c: CircuitDesc
    holder: str | None                    # "B", "C" or None
    guess_b: Callable[[UfePlayerInfo], float]   # probability of answering 1
    guess_c: Callable[[UfePlayerInfo], float]
    shared_bits: int = 0


def _ufe_guess_pair(strategy: UfeStrategy, ct, key_b, key_c, shared, b: int) -> tuple[float, float]:
    if strategy.holder not in ("B", "C", None):
        raise ShapeError(f"unknown holder {strategy.holder!r}")
    info_b = UfePlayerInfo(key_b, ct if strategy.holder == "B" else None, shared)
    info_c = UfePlayerInfo(key_c, ct if strategy.holder == "C" else None, shared)
    pb, pc = strategy.guess_b(info_b), strategy.guess_c(info_c)
    right_b = pb if b else 1 - pb
    right_c = pc if b else 1 - pc
    return float(right_b), float(right_c)


def _ufe_run(experiment: str, game_core, mode, trials, seed, strategy) -> ExperimentReport:
    seen: list[tuple[float, float]] = []

    def game(rng):
        rb, rc = game_core(rng)
        seen.append((rb, rc))
        return rb * rc
    rep = run_game(experiment, game, mode, trials, seed, strategy.name)
    runs = seen[-rep.trials:]          # drop any counting run
    details = dict(rep.details)
    details.update({"side_b_correct": sum(r[0] for r in runs) / len(runs),
                    "side_c_correct": sum(r[1] for r in runs) / len(runs),
                    "holder": strategy.holder})
    return ExperimentReport(rep.experiment, rep.mode, rep.value, rep.ci, rep.trials, rep.seed,
                            rep.tolerances, rep.strategy, details)


def run_ufe_experiment(n: int, strategy: UfeStrategy, mode: str = "monte-carlo", trials: int = 200,
                       seed: int = 0) -> ExperimentReport:
    """Both players get a function key; the holder also gets the ciphertext.

    Unlike the 2-player QFE game, the queried circuits are unrestricted.
    """

    def core(rng):
        mpk, msk = ufe.ufe_setup(n, rng)
        b = rng.bit()
        shared = rng.bits(strategy.shared_bits)
        ct = ufe.ufe_enc(mpk, strategy.m1 if b else strategy.m0, rng)
        kb = ufe.ufe_keygen(msk, strategy.circuit_b, rng)
        kc = ufe.ufe_keygen(msk, strategy.circuit_c, rng)
        return _ufe_guess_pair(strategy, ct, kb, kc, shared, b)
    return _ufe_run("ufe/qfe-ue-ind", core, mode, trials, seed, strategy)


def run_pkeue(scheme: ufe.PkeUe, strategy: UfeStrategy, mode: str = "monte-carlo", trials: int = 200,
              seed: int = 0) -> ExperimentReport:
    """Variable-decryption-key game: keys (r, r0') and (r, r1') share the public key."""
    def core(rng):
        r, r0, r1 = (bits_to_int(rng.bits(32)) for _ in range(3))
        ek, dk_b = scheme.keygen(r, r0)
        _, dk_c = scheme.keygen(r, r1)
        b = rng.bit()
        shared = rng.bits(strategy.shared_bits)
        ct = scheme.enc(ek, strategy.m1 if b else strategy.m0, rng)
        return _ufe_guess_pair(strategy, ct, dk_b, dk_c, shared, b)
    return _ufe_run("ufe/ue-vdk", core, mode, trials, seed, strategy)


def honest_decryptor(info: UfePlayerInfo) -> float:
    """Decrypt if holding the ciphertext and read the first output qubit; otherwise guess."""
    if info.ct is None:
        return 0.5
    return prob_one(ufe.ufe_dec(info.key, info.ct), 0)


def honest_ufe_strategy(n: int = 1) -> UfeStrategy:
    m0, m1 = DensityMatrix.basis((0,) * n), DensityMatrix.basis((1,) * n)
    c = qcircuit.identity(n)
    return UfeStrategy("honest-B-guessing-C", m0, m1, c, c, "B", honest_decryptor, honest_decryptor)


# ------------------------------------------------------------ UEQ cloning

@dataclass(frozen=True)
class UeqCloningStrategy:
    """A splits the t-qubit ciphertext into B's ``width_b`` qubits and C's rest.

    Each player's channel acts on its own qubits followed by its copy of dk.
    """

    name: str
    split: Channel
    width_b: int
    player_b: Callable[[Bits], Channel]      # shared randomness -> channel
    player_c: Callable[[Bits], Channel]
    shared_bits: int = 0


def ueq_cloning_game(strategy: UeqCloningStrategy, key_len: int = ufe.DEFAULT_KEY_LEN) -> WinFn:
    def game(rng: RandomSource) -> float:
        keys = ufe.ueq_keys_for_basis(rng.bits(key_len))
        b = rng.bit()
        shared = rng.bits(strategy.shared_bits)
        ct = ufe.ueq_enc(keys.ek, b, rng)
        split = strategy.split(ct.state)
        wb = strategy.width_b
        wc = split.n - wb
        # append one dk copy per player: B's register is (B, dk_B), C's is (C, dk_C)
        joint = tensor(split, keys.dk, keys.dk)
        t = keys.dk.n
        wires_b = list(range(wb)) + list(range(wb + wc, wb + wc + t))
        wires_c = list(range(wb, wb + wc)) + list(range(wb + wc + t, wb + wc + 2 * t))
        order = wires_b + wires_c
        joint = permute(joint, order)
        dist = _joint_guess(joint, range(len(wires_b)), strategy.player_b(shared),
                            range(len(wires_b), joint.n), strategy.player_c(shared))
        return float(dist[b, b])
    return game


def run_ueq_cloning(strategy: UeqCloningStrategy, key_len: int = ufe.DEFAULT_KEY_LEN,
                    mode: str = "exact", trials: int = 10_000, seed: int = 0) -> ExperimentReport:
    return run_game("ueq/cloning", ueq_cloning_game(strategy, key_len), mode, trials, seed,
                    strategy.name, {"key_len": key_len})


def measure_and_forward(key_len: int = ufe.DEFAULT_KEY_LEN) -> UeqCloningStrategy:
    """Measure the ciphertext in the computational basis and forward the outcome to both.

    Each player answers the parity of what it received, ignoring dk; this
    is right whenever theta is all zeros and a shared coin otherwise.
    """
    t = key_len
    split = classical_map(t, lambda x: x + x)
    player = lambda shared: classical_map(2 * t, lambda x: (sum(x[:t]) % 2,))
    return UeqCloningStrategy("measure-and-forward", split, t, player, player)


# ========================================================= QMIFE experiments

@dataclass(frozen=True)
class QmifeStrategy:
    """Challenge vectors X^0, X^1 of n*k product messages (position-major) and queried circuits.

    For SIM runs ``queries`` pairs each circuit with the index tuple that
    is decrypted; ``guess`` maps an IND view to the probability of 1.
    """

    name: str
    n: int
    k: int
    x0: tuple[DensityMatrix, ...]
    x1: tuple[DensityMatrix, ...]
    circuits: tuple[CircuitDesc, ...]
    guess: Callable[["QmifeView"], float] | None = None
    queries: tuple[tuple[int, tuple[int, ...]], ...] = ()

    def message(self, b: int, i: int, j: int) -> DensityMatrix:
        return (self.x1 if b else self.x0)[i * self.k + j]


@dataclass
class QmifeView:
    keys: tuple[qmio.QmifeKey, ...]
    cts: tuple[tuple[qmio.QmifeCiphertext, ...], ...]    # cts[i][j]

    def decrypt(self, c: int, index: Sequence[int]) -> DensityMatrix:
        return qmio.qmife_dec(self.keys[c], [self.cts[i][j] for i, j in enumerate(index)])


def index_tuples(n: int, k: int) -> list[tuple[int, ...]]:
    return list(itertools.product(range(k), repeat=n))


def qmife_compatibility(strategy: QmifeStrategy) -> tuple[bool, float, dict[str, float]]:
    """Every circuit must agree on X^0 and X^1 for every index tuple."""
    if len(strategy.x0) != strategy.n * strategy.k or len(strategy.x1) != len(strategy.x0):
        raise ShapeError("challenge vectors must hold n*k messages")
    per: dict[str, float] = {}
    for c_idx, c in enumerate(strategy.circuits):
        for j in index_tuples(strategy.n, strategy.k):
            outs = [evaluate(c, tensor(*(strategy.message(b, i, v) for i, v in enumerate(j))))
                    for b in (0, 1)]
            per[f"{c_idx}:{''.join(map(str, j))}"] = trace_distance(*outs)
    worst = max(per.values(), default=0.0)
    return worst <= ADMISSIBILITY_TOL, worst, per


def qmife_ind_game(strategy: QmifeStrategy) -> WinFn:
    def game(rng: RandomSource) -> float:
        b = rng.bit()
        keys = qmio.qmife_setup(strategy.n, strategy.k, rng)
        cts = tuple(tuple(qmio.qmife_enc(keys.eks[i], strategy.message(b, i, j), rng)
                          for j in range(strategy.k)) for i in range(strategy.n))
        sks = tuple(qmio.qmife_keygen(keys, c) for c in strategy.circuits)
        p1 = float(strategy.guess(QmifeView(sks, cts)))
        return p1 if b else 1.0 - p1
    return game


def run_qmife_experiments(strategy: QmifeStrategy, mode: str = "IND", stat_mode: str = "auto",
                          trials: int = 10_000, seed: int = 0) -> ExperimentReport:
    if mode == "IND":
        ok, worst, per = qmife_compatibility(strategy)
        if not ok:
            raise QfeError(f"incompatible challenge vectors: distance {worst:.3g}")
        if strategy.guess is None:
            raise ShapeError("IND strategies need a guessing stage")
        return run_game("qmife/ind", qmife_ind_game(strategy), stat_mode, trials, seed,
                        strategy.name, {"compatibility": per})
    if mode == "SIM":
        return _qmife_sim(strategy, seed)
    raise ShapeError(f"unknown QMIFE mode {mode!r}")


def _qmife_sim(strategy: QmifeStrategy, seed: int) -> ExperimentReport:
    """Real decryptions versus trusted-party answers for the declared queries.

    The dealer backend removes its pads exactly, so the real outputs do not
    depend on the encryption randomness and one run suffices.
    """
    if not strategy.queries:
        raise ShapeError("SIM strategies declare at least one (circuit, index) query")
    rng = RandomSource(seed)
    keys = qmio.qmife_setup(strategy.n, strategy.k, rng)
    cts = tuple(tuple(qmio.qmife_enc(keys.eks[i], strategy.message(0, i, j), rng)
                      for j in range(strategy.k)) for i in range(strategy.n))
    view = QmifeView(tuple(qmio.qmife_keygen(keys, c) for c in strategy.circuits), cts)
    width = strategy.x0[0].n
    msgs = tensor(*strategy.x0)
    tp = qmio.TrustedParty(msgs, strategy.n, strategy.k, width)
    dists = []
    for c_idx, j in strategy.queries:
        real = view.decrypt(c_idx, j)
        ans = qmio.tp_query(tp, strategy.circuits[c_idx], j)
        ideal = tp.world.marginal(ans.answer_labels)
        dists.append(trace_distance(real, ideal))
    asked = {json.dumps(entry[1][0], sort_keys=True) for entry in tp.log}
    allowed = {json.dumps(c.to_json(), sort_keys=True) for c in strategy.circuits}
    admissible = asked <= allowed
    return ExperimentReport("qmife/sim", "exact", float(max(dists)), None, 1, seed, _tolerances(),
                            strategy.name, {"per_query": dists, "simulator_admissible": admissible,
                                            "tp_queries": len(tp.log)})


# =================================================== UFE reduction package

@dataclass(frozen=True)
class UfeReductionPackage:
    """Challenge pair and the two function queries of the reduction to the 2-player game."""

    layout: ufe.UfeLayout
    m_star0: ufe.SlotState
    m_star1: ufe.SlotState
    params_b: ufe.UParams
    params_c: ufe.UParams
    b: int
    distances: tuple[float, float]

    @property
    def admissible(self) -> bool:
        return max(self.distances) <= ADMISSIBILITY_TOL

    def width_report(self) -> dict[str, int]:
        return {"plaintext": self.m_star0.layout.total, "dk_slot": self.layout.dk_width,
                "key_a": len(self.params_b.a), "key_b": len(self.params_b.b)}


def build_ufe_reduction_strategy(m0: DensityMatrix, m1: DensityMatrix, circuit: CircuitDesc,
                                 seed: int = 0, rng: RandomSource | None = None,
                                 layout: ufe.UfeLayout | None = None) -> UfeReductionPackage:
    """m*_0 is the honest plaintext of m_b; m*_1 is the flag-1 plaintext with teleported keys.

    B's key uses the teleport corrections of slot 0, C's those of slot 1;
    each query is admissible when U gives the same output on both plaintexts.
    """
    layout = ufe.default_layout(m0.n) if layout is None else layout
    rng = RandomSource(seed) if rng is None else rng
    star = ufe.star_plaintext(layout, m0, m1, seed, rng)
    honest = ufe.honest_plaintext(layout, m1 if star.b else m0)
    pb = ufe.UParams(circuit, star.keys0.a, star.keys0.b)
    pc = ufe.UParams(circuit, star.keys1.a, star.keys1.b)
    dists = tuple(float(ufe.u_circuit_apply(p, honest).distance(ufe.u_circuit_apply(p, star.plaintext)))
                  for p in (pb, pc))
    return UfeReductionPackage(layout, honest, star.plaintext, pb, pc, star.b, dists)


def reduction_win_rate(p0: float, p1: float) -> float:
    """Win rate of the distinguisher built from the reduction: half of p0 + (1 - p1)."""
    return 0.5 * (p0 + 1.0 - p1)
