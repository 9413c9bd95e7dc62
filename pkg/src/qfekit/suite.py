"""Named acceptance checks grouped into suites, as run by ``qfekit suite``.

Every check returns a measured deviation and the limit it must stay
within; limits come from the active configuration, so shrinking the
tolerance turns passing checks into listed failures.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass
from typing import Callable

from . import cfe, ensemble, games, qfe, qgc, qmio, ufe
from .config import get_config
from .errors import KeyReuseError, QfeError
from .qcircuit import CircuitClass, channel, circuit, evaluate, identity
from .qcore import (DensityMatrix, RandomSource, apply_gate, choi_distance, cq_mix, make_epr,
                    partial_trace, qotp_average, random_state, state, teleport_all,
                    tensor, trace_distance)

SUITES = ("core", "qgc", "qfe", "ufe", "qmio", "games")


@dataclass(frozen=True)
class SuiteContext:
    seed: int = 0
    trials: int = 10_000


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    ok: bool
    value: float | None
    limit: float | None
    seconds: float
    detail: str = ""

    def to_dict(self) -> dict:
        return {"suite": self.suite, "name": self.name, "ok": self.ok, "value": self.value,
                "limit": self.limit, "seconds": round(self.seconds, 3), "detail": self.detail}


Check = Callable[[SuiteContext], tuple[float, float, str]]
_REGISTRY: dict[str, list[tuple[str, Check]]] = {s: [] for s in SUITES}


def check(suite: str, name: str):
    def deco(fn: Check) -> Check:
        _REGISTRY[suite].append((name, fn))
        return fn
    return deco


def _alg() -> float:
    return get_config().tol.algebraic


def _eig() -> float:
    return get_config().tol.eigen


def checks(suite: str) -> list[tuple[str, Check]]:
    return list(_REGISTRY[suite])


def run_suite(name: str, ctx: SuiteContext | None = None) -> list[CheckResult]:
    ctx = SuiteContext() if ctx is None else ctx
    names = SUITES if name == "all" else (name,)
    out = []
    for s in names:
        for cname, fn in _REGISTRY[s]:
            t0 = time.perf_counter()
            try:
                value, limit, detail = fn(ctx)
                ok = bool(value <= limit)
            except QfeError as exc:
                value, limit, detail, ok = None, None, f"{type(exc).__name__}: {exc}", False
            out.append(CheckResult(s, cname, ok, value, limit, time.perf_counter() - t0, detail))
    return out


# ===================================================================== core

@check("core", "qotp-average-maximally-mixed")
def _qotp(ctx):
    rng = RandomSource(ctx.seed)
    worst = 0.0
    for n in (1, 2, 3):
        for _ in range(5):
            rho = random_state(n, rng)
            worst = max(worst, trace_distance(qotp_average(rho), DensityMatrix.maximally_mixed(n)))
    return worst, _alg(), "1..3 qubits, 5 random states each"


@check("core", "teleport-all-outcomes")
def _teleport(ctx):
    rng = RandomSource(ctx.seed + 1)
    worst = 0.0
    # payload entangled with a reference: (ref, x) random, then one EPR pair (A, B)
    for _ in range(3):
        payload = random_state(2, rng)
        joint = tensor(payload, make_epr(1))           # ref, x, A, B
        for key, p, post in teleport_all(joint, [1], [2]):
            if post is None:
                continue
            fixed = post
            if key.a[0]:
                fixed = apply_gate(fixed, "X", [1])
            if key.b[0]:
                fixed = apply_gate(fixed, "Z", [1])
            worst = max(worst, trace_distance(fixed, payload))
    return worst, _alg(), "entangled payload, all four Bell outcomes"


@check("core", "trace-distance-axioms-contractivity")
def _axioms(ctx):
    rng = RandomSource(ctx.seed + 2)
    worst = 0.0
    for _ in range(200):
        a, b, c = (random_state(2, rng) for _ in range(3))
        dab, dba = trace_distance(a, b), trace_distance(b, a)
        worst = max(worst, abs(dab - dba), trace_distance(a, a),
                    dab - trace_distance(a, c) - trace_distance(c, b), -dab, dab - 1)
        # CPTP maps: partial trace and a Clifford unitary
        pt = trace_distance(partial_trace(a, [1]), partial_trace(b, [1]))
        ch = lambda r: apply_gate(apply_gate(r, "H", [0]), "CNOT", [0, 1])
        worst = max(worst, pt - dab, trace_distance(ch(a), ch(b)) - dab)
    return worst, _eig(), "200 random 2-qubit triples"


# ====================================================================== qgc

def qgc_fixtures():
    """Clifford circuits with at most 2 quantum inputs and 4 gates."""
    return [
        circuit(1, [("X", [0])]),
        circuit(1, [("H", [0]), ("P", [0])]),
        circuit(2, [("H", [0]), ("CNOT", [0, 1], 0), ("P", [1], ((0, 0), (1, 1)))], n_classical=2),
        circuit(1, [("H", [0]), ("CNOT", [0, 1])], ancillas=[1], trace_out=[0]),
        circuit(2, [("SWAP", [0, 1], 1), ("H", [1]), ("Z", [0]), ("CNOT", [1, 0])],
                trace_out=[1], n_classical=2),
    ]


def _settings(c):
    return list(itertools.product((0, 1), repeat=c.n_classical))


def _qgc_channel(c, bits, seed):
    def ch(rho):
        return qgc.decode(qgc.encode(c, rho, bits, RandomSource(seed)))
    return ch


@check("qgc", "decode-encode-equals-evaluate")
def _qgc_correct(ctx):
    worst = 0.0
    for c in qgc_fixtures():
        for bits in _settings(c):
            worst = max(worst, choi_distance(_qgc_channel(c, bits, ctx.seed), channel(c, bits), c.n_quantum))
    return worst, _alg(), "Choi distance, every fixture and classical setting"


@check("qgc", "manifest-decomposable")
def _qgc_manifest(ctx):
    rng = RandomSource(ctx.seed)
    bad = []
    for c in qgc_fixtures():
        for bits in _settings(c):
            b = qgc.encode(c, random_state(c.n_quantum, rng), bits, rng)
            bad += qgc.check_manifest(b)
    return float(len(bad)), 0.0, "; ".join(bad[:3])


def _qgc_views(c, rho, bits, spectators):
    out = qfe.apply_with_spectators(lambda r: evaluate(c, r, bits), rho, c.n_quantum, spectators)

    def real(s):
        b = qgc.encode(c, rho, bits, s, spectators=spectators)
        return b.classical_label(), b.register

    def ideal(s):
        b = qgc.simulate(out, c, bits, s, spectators=spectators)
        return b.classical_label(), b.register
    return real, ideal


@check("qgc", "real-vs-simulated-privacy")
def _qgc_privacy(ctx):
    rng = RandomSource(ctx.seed + 3)
    worst = 0.0
    for c in qgc_fixtures():
        for bits in _settings(c):
            rho = random_state(c.n_quantum + 1, rng)      # one spectator qubit
            worst = max(worst, ensemble.view_distance(*_qgc_views(c, rho, bits, 1)))
    return worst, _alg(), "exact ensembles with an entangled spectator"


@check("qgc", "privacy-brute-force-enumeration")
def _qgc_privacy_enum(ctx):
    # every random script enumerated; the affine fit must agree with it
    rng = RandomSource(ctx.seed + 4)
    worst, used = 0.0, 0
    for c in qgc_fixtures():
        for bits in _settings(c):
            rho = random_state(c.n_quantum + 1, rng)
            real, sim = _qgc_views(c, rho, bits, 1)
            if max(ensemble.count_randomness(real), ensemble.count_randomness(sim)) > 12:
                continue
            exact = trace_distance(ensemble.enumerate_view(real), ensemble.enumerate_view(sim))
            worst = max(worst, exact, abs(exact - ensemble.view_distance(real, sim)))
            used += 1
    return worst, _alg(), f"{used} fixture settings with at most 12 random bits"


# ====================================================================== qfe

@check("qfe", "idfe-twofe-correctness")
def _cfe_correct(ctx):
    errors = 0
    for m in itertools.product((0, 1), repeat=3):
        keys = cfe.idfe_setup(3, RandomSource(ctx.seed))
        errors += cfe.idfe_dec(cfe.idfe_keygen(keys), cfe.idfe_enc(keys, m)) != m
        f0 = lambda x: (x[0] ^ x[1], x[2])
        f1 = lambda x: (x[0] & x[2], 1)
        for b in (0, 1):
            tk = cfe.twofe_setup(f0, f1, 2, RandomSource(ctx.seed + 1))
            errors += cfe.twofe_dec(cfe.twofe_keygen(tk, b), cfe.twofe_enc(tk, m)) != tuple((f0, f1)[b](m))
    return float(errors), 0.0, "all 3-bit messages, both selectors"


def cfe_sim_views(kind: str, order: str, x=(1, 0, 1), b: int = 1):
    """Real and simulated views (ciphertext bits, key bits) for one classical FE block."""
    f0 = lambda v: (v[0] ^ v[1], v[2])
    f1 = lambda v: (v[0] & v[2], 1)

    def real(s):
        if kind == "idfe":
            keys = cfe.idfe_setup(len(x), s)
            if order == "key-first":
                sk = cfe.idfe_keygen(keys)
                ct = cfe.idfe_enc(keys, x)
            else:
                ct = cfe.idfe_enc(keys, x)
                sk = cfe.idfe_keygen(keys)
            return ct.bits() + sk.pad, DensityMatrix.scalar()
        keys = cfe.twofe_setup(f0, f1, 2, s)
        if order == "key-first":
            sk = cfe.twofe_keygen(keys, b)
            ct = cfe.twofe_enc(keys, x)
        else:
            ct = cfe.twofe_enc(keys, x)
            sk = cfe.twofe_keygen(keys, b)
        return ct.bits() + (sk.b,) + sk.pad, DensityMatrix.scalar()

    def ideal(s):
        # the simulator learns only the function value, and only at key time
        if kind == "idfe":
            ct, st = cfe.idfe_sim_ct(len(x), s)
            sk = cfe.idfe_sim_key(st, x)
            return ct.bits() + sk.pad, DensityMatrix.scalar()
        ct, st = cfe.twofe_sim_ct(2, s)
        sk = cfe.twofe_sim_key(st, b, (f0, f1)[b](x))
        return ct.bits() + (sk.b,) + sk.pad, DensityMatrix.scalar()
    return real, ideal


@check("qfe", "idfe-twofe-simulation")
def _cfe_sim(ctx):
    worst = 0.0
    for kind in ("idfe", "twofe"):
        for order in ("key-first", "ciphertext-first"):
            real, ideal = cfe_sim_views(kind, order)
            worst = max(worst, ensemble.enumerate_view(real).distance(ensemble.enumerate_view(ideal)))
    return worst, 0.0, "exact enumeration, both blocks, both query orders"


H1 = circuit(1, [("H", [0])])
CNOT2 = circuit(2, [("CNOT", [0, 1])])


@check("qfe", "oneqfe-roundtrip")
def _oneqfe_roundtrip(ctx):
    rng = RandomSource(ctx.seed)
    worst = 0.0
    for c in (identity(1), H1, CNOT2):
        def ch(rho, c=c):
            keys = qfe.oneqfe_setup(c, rng)
            ct = qfe.oneqfe_enc(keys, rho, rng)
            return qfe.oneqfe_dec(qfe.oneqfe_keygen(keys), ct)
        worst = max(worst, choi_distance(ch, channel(c), c.n_quantum))
    return worst, _alg(), "Choi distance for identity, H, CNOT"


def oneqfe_sim_strategies():
    """Three adaptive fixtures: entangled reference, 2-qubit output, no key query."""
    return [
        games.SimStrategy("H-on-EPR-half", make_epr(1), 1, H1, "after"),
        games.SimStrategy("CNOT-on-10", state("10"), 2, CNOT2, "after"),
        games.SimStrategy("no-query", make_epr(1), 1, H1, "none"),
    ]


@check("qfe", "oneqfe-adaptive-simulation")
def _oneqfe_sim(ctx):
    worst = 0.0
    for st in oneqfe_sim_strategies():
        rep = games.run_sim_experiment(games.ONEQFE_HOOKS, st, True, method="enumerate", seed=ctx.seed)
        worst = max(worst, rep.value)
    return worst, _alg(), "enumerated Real vs Ideal views"


def polyqfe_fixtures():
    return [
        (CircuitClass(1, 1), identity(1)),
        (CircuitClass(1, 1), H1),
        (CircuitClass(1, 2, (1,), (0,)), circuit(1, [("H", [0]), ("CNOT", [0, 1])], ancillas=[1],
                                                  trace_out=[0])),
    ]


@check("qfe", "polyqfe-end-to-end")
def _polyqfe(ctx):
    rng = RandomSource(ctx.seed)
    worst = 0.0
    for cls, c in polyqfe_fixtures():
        def ch(rho, cls=cls, c=c):
            keys = qfe.polyqfe_setup(cls, rng)
            sk = qfe.polyqfe_keygen(keys, c)
            return qfe.polyqfe_dec(sk, qfe.polyqfe_enc(keys, rho, rng), keys.universal)
        worst = max(worst, choi_distance(ch, channel(c), c.n_quantum))
    return worst, _alg(), "identity, single gate, ancilla with trace-out"


def hybrid_chain(adaptive: bool, seed: int = 0) -> list[float]:
    """Distances between adjacent hybrids on the 1-qubit fixture."""
    cls = CircuitClass(1, 2)
    c = circuit(1, [("H", [0]), ("P", [0])])
    rho = random_state(1, RandomSource(seed + 5))
    build = qfe.hybrid_builder(cls, c, rho, adaptive)
    fits = [ensemble.fit_affine(build(i)) for i in range(build.count)]
    return [ensemble.ensemble_distance(fits[i], fits[i + 1]) for i in range(build.count - 1)]


@check("qfe", "polyqfe-hybrid-chain")
def _chain(ctx):
    worst = max(max(hybrid_chain(False, ctx.seed)), max(hybrid_chain(True, ctx.seed)))
    return worst, _alg(), "adjacent hybrids, both query orders"


# ====================================================================== ufe

@check("ufe", "mode0-decryption")
def _ufe_mode0(ctx):
    rng = RandomSource(ctx.seed)
    worst = 0.0
    for c in (identity(1), H1):
        rho = random_state(1, rng)
        mpk, msk = ufe.ufe_setup(1, rng)
        ct = ufe.ufe_enc(mpk, rho, rng)
        for _ in range(2):
            sk = ufe.ufe_keygen(msk, c, rng)
            worst = max(worst, trace_distance(ufe.ufe_dec(sk, ct), evaluate(c, rho)))
    return worst, _alg(), "two independent keys per circuit"


def star_decryptions(seed: int, rng_seed: int, c=H1):
    """(b, key-0 output distance, key-1 output distance, prefix collision) for one Enc* run."""
    m0, m1 = state("0"), state("+")
    mpk, msk = ufe.ufe_setup(1)
    ct, k0, k1, b = ufe.enc_star(mpk, m0, m1, seed, RandomSource(rng_seed))
    want = evaluate(c, (m0, m1)[b])
    out = []
    for k in (k0, k1):
        res = ufe.ufe_dec_full(ufe.ufe_keygen_with(msk, c, k.a, k.b), ct)
        out.append(res.distance(cq_mix([(1.0, ufe.OK, want)])))
    lam = mpk.layout.prefix_len
    return b, out[0], out[1], k0.a[:lam] == k1.a[:lam]


@check("ufe", "mode1-decryption")
def _ufe_mode1(ctx):
    worst = 0.0
    skipped = 0
    for s in range(6):
        b, d0, d1, collide = star_decryptions(11, ctx.seed + 100 + s)
        worst = max(worst, d0)
        if collide:
            skipped += 1
        else:
            worst = max(worst, d1)
    return worst, _alg(), f"both keys; {skipped} run(s) with a prefix collision excluded for key 1"


def false_accept_rate(layout: ufe.UfeLayout | None = None) -> float:
    """Acceptance weight of dk slot 0 under a key derived for another teleportation.

    Enumerates every Bell outcome of teleporting the zero prefix; slot 1 is
    set so that the key always rejects it, so the accepted weight is the
    probability that the prefix of slot 0 corrects to all zeros.
    """
    layout = ufe.default_layout(1) if layout is None else layout
    lam, t = layout.prefix_len, layout.key_len
    theta = (0,) * t
    key_a = (0,) * layout.dk_width
    key_b = (0,) * layout.dk_width
    params = ufe.UParams(identity(1), key_a, key_b)
    one = tensor(DensityMatrix.basis((0,)), make_epr(1))
    per_qubit = [(k.a[0], p, post) for k, p, post in teleport_all(one, [0], [1])]
    dk1 = DensityMatrix.basis((1,) * lam + theta)
    total = 0.0
    for combo in itertools.product(per_qubit, repeat=lam):
        p = math.prod(c[1] for c in combo)
        half = tensor(*(c[2] for c in combo), DensityMatrix.basis(theta))
        plain = ufe.SlotState.product(layout, {"m0": state("0"), "m1": state("1"), "dk0": half,
                                               "dk1": dk1, "ue": DensityMatrix.basis(theta),
                                               "flag": DensityMatrix.basis((1,))})
        total += p * (1.0 - ufe.rejection_probability(ufe.u_circuit_apply(params, plain)))
    return total


@check("ufe", "zero-prefix-false-accept")
def _ufe_false_accept(ctx):
    lam = ufe.default_layout(1).prefix_len
    rate = false_accept_rate()
    return abs(rate - 2.0 ** -lam), _alg(), f"rate {rate!r} at prefix length {lam}"


def teleport_key_counts(bits) -> dict[tuple[int, ...], float]:
    """Exact distribution of the correction key when teleporting a basis string."""
    dist: dict[tuple[int, ...], float] = {(): 1.0}
    for v in bits:
        joint = tensor(DensityMatrix.basis((v,)), make_epr(1))
        outs = [(k.a + k.b, p) for k, p, _ in teleport_all(joint, [0], [2])]
        dist = {key + o: p * q for key, p in dist.items() for o, q in outs}
    return dist


@check("ufe", "teleport-key-uniform")
def _ufe_uniform(ctx):
    layout = ufe.default_layout(1)
    bits = (0,) * layout.prefix_len + (1, 0)
    dist = teleport_key_counts(bits)
    want = 4.0 ** -len(bits)
    dev = max(abs(p - want) for p in dist.values())
    missing = (1 << (2 * len(bits))) - len(dist)
    return dev + missing, _alg(), f"{len(dist)} keys"


@check("ufe", "reduction-admissibility")
def _ufe_reduction(ctx):
    pkg = games.build_ufe_reduction_strategy(state("0"), state("1"), H1, seed=ctx.seed)
    return max(pkg.distances), _alg(), f"b={pkg.b}, widths {pkg.width_report()}"


@check("ufe", "ueq-measure-and-forward")
def _ueq(ctx):
    rep = games.run_ueq_cloning(games.measure_and_forward())
    return abs(rep.value - 0.625), _alg(), f"rate {rep.value!r}"


# ===================================================================== qmio

QIO_FIXTURES = (identity(1), H1, CNOT2)


def qio_channel(c, seeds=range(3)):
    """x -> average over obfuscation seeds of the exact Eval output."""
    def ch(rho):
        acc = None
        for s in seeds:
            branches = qmio.eval_branches(qmio.obf(c, RandomSource(s)), rho)
            out = sum(p * o.data for _, p, o in branches)
            acc = out if acc is None else acc + out
        return DensityMatrix._wrap(acc / len(seeds))
    return ch


@check("qmio", "qio-eval-equals-circuit")
def _qio(ctx):
    worst = max(choi_distance(qio_channel(c), channel(c), c.n_quantum) for c in QIO_FIXTURES)
    return worst, _alg(), "identity, H, CNOT"


@check("qmio", "qio-single-use")
def _qio_once(ctx):
    prog = qmio.obf(H1, RandomSource(ctx.seed))
    qmio.eval_program(prog, state("0"), RandomSource(1))
    try:
        qmio.eval_program(prog, state("0"), RandomSource(2))
    except KeyReuseError:
        return 0.0, 0.0, "second evaluation refused"
    return 1.0, 0.0, "second evaluation was allowed"


@check("qmio", "tp-copy-out-held-unchanged")
def _tp_held(ctx):
    worst = 0.0
    for bits in ("0", "1", "01", "11"):
        n = len(bits)
        g = identity(n) if n == 1 else CNOT2
        tp = qmio.TrustedParty(state(bits), n, 1, 1)
        before = tp.held_state()
        qmio.tp_query(tp, g, (0,) * tp.n)
        worst = max(worst, trace_distance(before, tp.held_state()))
    return worst, _alg(), "basis-state messages"


@check("qmio", "tp-collapse-propagation")
def _tp_collapse(ctx):
    rng = RandomSource(ctx.seed)
    tp = qmio.TrustedParty(state("+"), 1, 1)
    a = qmio.tp_query(tp, identity(1), (0,))
    bit = tp.world.measure(list(a.answer_labels), rng)
    held = tp.held_state()
    b = qmio.tp_query(tp, identity(1), (0,))
    again = tp.world.marginal(list(b.answer_labels))
    want = DensityMatrix.basis(bit)
    return max(trace_distance(held, want), trace_distance(again, want)), _alg(), f"measured {bit}"


# ==================================================================== games

def _baseline_instance():
    return games.classical_messages_instance((0,), (1,), games.constant_circuit(1))


@check("games", "baselines-exact")
def _baselines(ctx):
    inst = _baseline_instance()
    rg = games.run_ind_experiment(games.ONEQFE_IND, games.random_guess_strategy(inst), mode="exact").value
    ind = games.run_2player_experiment(games.ONEQFE_2P, games.guessing_baseline(False), mode="exact").value
    cor = games.run_2player_experiment(games.ONEQFE_2P, games.guessing_baseline(True), mode="exact").value
    dev = max(abs(rg - 0.5), abs(ind - 0.25), abs(cor - 0.5))
    return dev, 1e-15, f"random {rg!r}, independent {ind!r}, correlated {cor!r}"


def mc_vs_exact(seed: int, trials: int) -> list[tuple[str, float, tuple[float, float]]]:
    inst = _baseline_instance()
    runs = [
        ("ind-random-guess", lambda m: games.run_ind_experiment(
            games.ONEQFE_IND, games.random_guess_strategy(inst), mode=m, trials=trials, seed=seed)),
        ("ind-measure-ct", lambda m: games.run_ind_experiment(
            games.ONEQFE_IND, games.measure_ciphertext_strategy(inst), mode=m, trials=trials, seed=seed)),
        ("2p-independent", lambda m: games.run_2player_experiment(
            games.ONEQFE_2P, games.guessing_baseline(False), mode=m, trials=trials, seed=seed)),
    ]
    out = []
    for name, fn in runs:
        exact = fn("exact").value
        mc = fn("monte-carlo")
        out.append((name, exact, mc.ci))
    return out


@check("games", "mc-within-wilson")
def _mc(ctx):
    misses = [name for name, exact, (lo, hi) in mc_vs_exact(ctx.seed, ctx.trials) if not lo <= exact <= hi]
    return float(len(misses)), 0.0, ", ".join(misses) or f"{ctx.trials} trials each"


@check("games", "epr-halves-admissibility")
def _epr(ctx):
    bad_ok, bad_d = games.check_admissible(games.epr_halves_instance())
    good_ok, good_d = games.check_admissible(games.epr_halves_constant_instance())
    fails = (bad_ok is True) + (good_ok is False)
    return float(fails) + good_d, _alg(), f"attack distance {bad_d:.12f}, counterpart {good_d:.3g}"


@check("games", "broken-scheme-detected")
def _broken(ctx):
    inst = _baseline_instance()
    rate = games.run_ind_experiment(games.BROKEN_IND, games.measure_ciphertext_strategy(inst), mode="exact").value
    copy = games.run_2player_experiment(games.BROKEN_2P, games.copy_attack(), mode="exact").value
    return max(1 - rate, 1 - copy), _alg(), f"IND {rate!r}, 2-player {copy!r}"


def summarize(results: list[CheckResult]) -> dict:
    failed = [f"{r.suite}/{r.name}" for r in results if not r.ok]
    return {"passed": sum(r.ok for r in results), "failed": failed, "total": len(results),
            "seconds": round(sum(r.seconds for r in results), 3)}
