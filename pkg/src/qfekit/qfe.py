"""Single-query quantum functional encryption.

``OneQFE`` serves one fixed channel: the encryptor evaluates it, pads the
quantum output with a QOTP (and a classical output with an XOR pad) and
encrypts the pad keys under IdFE.

``PolyQFE`` serves every circuit of a :class:`~qfekit.qcircuit.CircuitClass`
through the universal circuit U.  Encryption garbles U on the message with
fresh randomness R: the piece for description bit i is put under TwoFE
instance i (its two functions are the pieces for bit value 0 and 1), the
online quantum piece goes under OneQFE ``f_in`` and the offline part under
OneQFE ``f_off``.  A key for C opens TwoFE instance i on selector C[i].

For every description bit i an EPR pair is measured on one side, giving t_i;
the released pads are XORed with t_i and the other half (a basis state,
carried as a classical bit) travels inside the offline ciphertext so the
decoder can remove it.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

from . import qgc
from .cfe import (CfeCiphertext, CfeSimState, IdFeKeys, IdFeSecretKey, TwoFeKeys, TwoFeSecretKey,
                  idfe_dec, idfe_enc, idfe_keygen, idfe_setup, idfe_sim_ct, idfe_sim_key,
                  twofe_dec, twofe_enc, twofe_keygen, twofe_setup, twofe_sim_ct, twofe_sim_key)
from .errors import KeyReuseError, ShapeError, UnsupportedError
from .qcircuit import CircuitClass, CircuitDesc, evaluate, universal_circuit
from .qcore import (Bits, DensityMatrix, PauliKey, RandomSource, apply_on, apply_pauli, as_bits,
                    make_epr, permute, teleport, tensor, xor_bits)

Channel = Callable[[DensityMatrix], "DensityMatrix | tuple[DensityMatrix, Bits]"]


def apply_with_spectators(channel: Callable[[DensityMatrix], DensityMatrix], rho: DensityMatrix,
                          n_in: int, spectators: int) -> DensityMatrix:
    """Apply ``channel`` to the first ``n_in`` qubits; result is output then spectators."""
    if rho.n != n_in + spectators:
        raise ShapeError(f"expected {n_in} message qubits plus {spectators} spectators, got {rho.n}")
    if not spectators:
        return channel(rho)
    out = apply_on(rho, channel, list(range(n_in)))
    d = out.n - spectators
    return permute(out, [spectators + i for i in range(d)] + list(range(spectators)))


# =================================================================== OneQFE

@dataclass
class OneQfeKeys:
    channel: Channel | None
    n_in: int
    d: int          # quantum output qubits
    c_len: int      # classical output bits
    idfe: IdFeKeys

    @property
    def key_len(self) -> int:
        return 2 * self.d + self.c_len


@dataclass(frozen=True)
class OneQfeCiphertext:
    rho_ct0: DensityMatrix       # padded output, then spectators
    c_ct0: Bits                  # padded classical output
    ct1: CfeCiphertext           # IdFE encryption of (a, b, classical pad)
    spectators: int = 0

    def classical_label(self) -> Bits:
        return self.c_ct0 + self.ct1.bits()


@dataclass(frozen=True)
class OneQfeKey:
    idfe: IdFeSecretKey

    def classical_label(self) -> Bits:
        return self.idfe.pad


def oneqfe_setup(circuit: CircuitDesc | Channel | None, rng: RandomSource, n_in: int | None = None,
                 d: int | None = None, c_len: int = 0) -> OneQfeKeys:
    """Keys for one fixed circuit.

    ``circuit`` is a :class:`CircuitDesc` (sizes taken from it) or a callable
    channel with explicit ``n_in`` and ``d``; ``c_len`` > 0 means the channel
    returns ``(state, bits)``.  ``None`` sets up keys for outputs computed by
    the caller (see :func:`oneqfe_encrypt_output`).
    """
    if isinstance(circuit, CircuitDesc):
        if circuit.n_classical:
            raise UnsupportedError("the fixed circuit must not take classical inputs")
        desc = circuit
        n_in, d = desc.n_quantum, desc.topology.n_outputs
        channel: Channel | None = lambda rho: evaluate(desc, rho)
    else:
        channel = circuit
        if n_in is None or d is None:
            raise ShapeError("callable channels need explicit n_in and d")
    return OneQfeKeys(channel, n_in, d, c_len, idfe_setup(2 * d + c_len, rng))


def oneqfe_encrypt_output(keys: OneQfeKeys, out_q: DensityMatrix, out_c: Sequence[int],
                          rng: RandomSource, spectators: int = 0) -> OneQfeCiphertext:
    """Pad an already computed output (``out_q`` holds output then spectators)."""
    out_c = as_bits(out_c)
    if out_q.n != keys.d + spectators or len(out_c) != keys.c_len:
        raise ShapeError("output does not match the key sizes")
    a, b, pad = rng.bits(keys.d), rng.bits(keys.d), rng.bits(keys.c_len)
    rho = apply_pauli(out_q, PauliKey(a, b), list(range(keys.d))) if keys.d else out_q
    ct1 = idfe_enc(keys.idfe, a + b + pad)
    return OneQfeCiphertext(rho, xor_bits(out_c, pad), ct1, spectators)


def oneqfe_enc(keys: OneQfeKeys, rho_m: DensityMatrix, rng: RandomSource,
               spectators: int = 0) -> OneQfeCiphertext:
    if keys.channel is None:
        raise UnsupportedError("these keys have no channel; use oneqfe_encrypt_output")
    if keys.c_len:
        if spectators:
            raise UnsupportedError("spectators are only supported for purely quantum outputs")
        out_q, out_c = keys.channel(rho_m)
    else:
        out_q, out_c = apply_with_spectators(keys.channel, rho_m, keys.n_in, spectators), ()
    return oneqfe_encrypt_output(keys, out_q, out_c, rng, spectators)


def oneqfe_keygen(keys: OneQfeKeys) -> OneQfeKey:
    return OneQfeKey(idfe_keygen(keys.idfe))


def oneqfe_dec_full(sk: OneQfeKey, ct: OneQfeCiphertext) -> tuple[DensityMatrix, Bits]:
    keybits = idfe_dec(sk.idfe, ct.ct1)
    d = (len(keybits) - len(ct.c_ct0)) // 2
    if 2 * d + len(ct.c_ct0) != len(keybits) or ct.rho_ct0.n != d + ct.spectators:
        raise ShapeError("ciphertext does not match the key")
    a, b, pad = keybits[:d], keybits[d:2 * d], keybits[2 * d:]
    rho = apply_pauli(ct.rho_ct0, PauliKey(a, b), list(range(d))) if d else ct.rho_ct0
    return rho, xor_bits(ct.c_ct0, pad)


def oneqfe_dec(sk: OneQfeKey, ct: OneQfeCiphertext):
    """The output state, or ``(state, bits)`` when the circuit has classical output."""
    rho, bits = oneqfe_dec_full(sk, ct)
    return (rho, bits) if ct.c_ct0 else rho


def oneqfe_sim_nonadaptive(keys: OneQfeKeys, c_out: DensityMatrix, rng: RandomSource,
                           c_bits: Sequence[int] = (), spectators: int = 0) -> OneQfeCiphertext:
    """Simulated ciphertext when the key was issued first: encrypt the known output."""
    return oneqfe_encrypt_output(keys, c_out, c_bits, rng, spectators)


@dataclass
class OneQfeSimState:
    keys: OneQfeKeys
    epr: DensityMatrix           # pairs (A_i, B_i); A halves were sent out
    c_slot: Bits
    idfe: CfeSimState
    used: bool = False


def oneqfe_sim_adaptive_ct(keys: OneQfeKeys, rng: RandomSource) -> tuple[OneQfeCiphertext, OneQfeSimState]:
    """Ciphertext before any key: EPR halves plus a simulated IdFE ciphertext."""
    epr = make_epr(keys.d) if keys.d else DensityMatrix.scalar()
    c_slot = rng.bits(keys.c_len)
    ct1, st = idfe_sim_ct(keys.key_len, rng)
    halves = DensityMatrix.maximally_mixed(keys.d)
    return OneQfeCiphertext(halves, c_slot, ct1), OneQfeSimState(keys, epr, c_slot, st)


def oneqfe_sim_adaptive_key(state: OneQfeSimState, c_out: DensityMatrix, rng: RandomSource,
                            c_bits: Sequence[int] = (), spectators: int = 0
                            ) -> tuple[OneQfeKey, DensityMatrix]:
    """Teleport the output into the sent halves and program the key.

    Returns the key and the state now held in the ciphertext register
    (sent halves, then the spectators that were attached to ``c_out``).
    """
    if state.used:
        raise KeyReuseError("adaptive simulator state already used")
    state.used = True
    d = state.keys.d
    if c_out.n != d + spectators:
        raise ShapeError("output does not match the simulated ciphertext")
    if d:
        joint = tensor(state.epr, c_out)        # A0 B0 .. A_{d-1} B_{d-1}, output, spectators
        key, held = teleport(joint, [2 * d + i for i in range(d)], [2 * i + 1 for i in range(d)], rng)
    else:
        key, held = PauliKey.zero(0), c_out
    pad = xor_bits(state.c_slot, as_bits(c_bits))
    sk = OneQfeKey(idfe_sim_key(state.idfe, key.a + key.b + pad))
    return sk, held


# ================================================================== PolyQFE

@dataclass
class PolyQfeKeys:
    cls: CircuitClass
    universal: CircuitDesc
    twofe: tuple[TwoFeKeys, ...]
    k_in: OneQfeKeys
    k_off: OneQfeKeys
    used: bool = False

    @property
    def l(self) -> int:
        return self.cls.length

    @property
    def r_len(self) -> int:
        return len(qgc.randomness_to_bits(_zero_randomness(self.universal)))


def _zero_randomness(u: CircuitDesc) -> qgc.EncodingRandomness:
    from .qcore import ScriptedSource
    return qgc.EncodingRandomness.sample(u, ScriptedSource())


def _piece_function(u: CircuitDesc, i: int, value: int):
    """TwoFE function for bit i: the online piece for C[i] = value, pads XOR t_i.

    Its input is (serialised R, t_i).
    """
    slices = qgc.piece_slices(u, i, value)

    def f(x: Bits) -> Bits:
        t = x[-1]
        out = [value]
        for start, w in slices:
            out += [b ^ t for b in x[start:start + w]]
        return tuple(out)
    return f


def _fold(piece_bits: Bits, t: int) -> Bits:
    # the leading bit is the description bit itself, the rest are pads
    return piece_bits[:1] + tuple(b ^ t for b in piece_bits[1:])


@lru_cache(maxsize=32)
def _universal(cls: CircuitClass) -> CircuitDesc:
    return universal_circuit(cls)


def polyqfe_setup(cls: CircuitClass, rng: RandomSource) -> PolyQfeKeys:
    u = _universal(cls)
    twofe = tuple(twofe_setup(_piece_function(u, i, 0), _piece_function(u, i, 1),
                              qgc.classical_piece_len(u, i), rng) for i in range(cls.length))
    k_in = oneqfe_setup(None, rng, n_in=cls.n_quantum, d=0, c_len=2 * cls.n_quantum)
    k_off = oneqfe_setup(None, rng, n_in=0, d=cls.n_lines,
                         c_len=qgc.offline_classical_len(u) + cls.length)
    return PolyQfeKeys(cls, u, twofe, k_in, k_off)


@dataclass(frozen=True)
class PolyQfeCiphertext:
    cts: tuple[CfeCiphertext, ...]
    ct_in: OneQfeCiphertext
    ct_off: OneQfeCiphertext
    spectators: int = 0
    t: Bits = field(default=(), compare=False, repr=False)

    def classical_label(self) -> Bits:
        out: list[int] = []
        for ct in self.cts:
            out += list(ct.bits())
        return tuple(out) + self.ct_in.classical_label() + self.ct_off.classical_label()

    @property
    def quantum(self) -> DensityMatrix:
        return self.ct_off.rho_ct0


@dataclass(frozen=True)
class PolyQfeKey:
    circuit: CircuitDesc
    sks: tuple[TwoFeSecretKey, ...]
    sk_in: OneQfeKey
    sk_off: OneQfeKey

    def classical_label(self) -> Bits:
        out: list[int] = []
        for sk in self.sks:
            out += [sk.b] + list(sk.pad)
        return tuple(out) + self.sk_in.classical_label() + self.sk_off.classical_label()


@dataclass(frozen=True)
class QrePieces:
    """The garbled pieces of U as plaintexts of the sub-schemes."""

    piece_bits: tuple[Bits, ...]     # TwoFE values, one per description bit (folded)
    kappa: Bits                      # f_in output
    off_q: DensityMatrix             # f_off quantum output (+ spectators)
    off_c: Bits                      # f_off classical output (offline record + t)


def real_pieces(keys: PolyQfeKeys, rho_m: DensityMatrix, bits: Sequence[int], rng: RandomSource,
                spectators: int = 0) -> tuple[QrePieces, Bits, Bits]:
    """Honest garbling: returns the pieces for description ``bits``, R and t."""
    u = keys.universal
    r = qgc.EncodingRandomness.sample(u, rng)
    t = tuple(rng.bit() for _ in range(keys.l))       # E^l first halves measured
    online_q, halves = qgc.teleport_inputs(u, rho_m, spectators, r, rng)
    off = qgc.offline_part(u, halves, spectators, r)
    kappa = tuple(b for p in online_q for b in p.kappa.flat())
    piece_bits = tuple(_fold(qgc.classical_piece_to_bits(qgc.online_classical_piece(i, bits[i], u, r)), t[i])
                       for i in range(keys.l))
    pieces = QrePieces(piece_bits, kappa, off.register, qgc.offline_classical_bits(off) + t)
    return pieces, qgc.randomness_to_bits(r), t


def simulated_pieces(keys: PolyQfeKeys, c_out: DensityMatrix, bits: Sequence[int], rng: RandomSource,
                     spectators: int = 0) -> QrePieces:
    """Pieces from the garbling simulator (t is uniform and independent)."""
    u = keys.universal
    bundle = qgc.simulate(c_out, u, bits, rng, spectators)
    t = tuple(rng.bit() for _ in range(keys.l))
    kappa = tuple(b for p in bundle.online_q for b in p.kappa.flat())
    piece_bits = tuple(_fold(qgc.classical_piece_to_bits(p), t[p.index]) for p in bundle.online_c)
    return QrePieces(piece_bits, kappa, bundle.register, qgc.offline_classical_bits(bundle.offline) + t)


def polyqfe_enc(keys: PolyQfeKeys, rho_m: DensityMatrix, rng: RandomSource,
                spectators: int = 0) -> PolyQfeCiphertext:
    u = keys.universal
    r = qgc.EncodingRandomness.sample(u, rng)
    rbits = qgc.randomness_to_bits(r)
    t = tuple(rng.bit() for _ in range(keys.l))
    cts = tuple(twofe_enc(keys.twofe[i], rbits + (t[i],)) for i in range(keys.l))
    online_q, halves = qgc.teleport_inputs(u, rho_m, spectators, r, rng)
    kappa = tuple(b for p in online_q for b in p.kappa.flat())
    ct_in = oneqfe_encrypt_output(keys.k_in, DensityMatrix.scalar(), kappa, rng)
    off = qgc.offline_part(u, halves, spectators, r)
    ct_off = oneqfe_encrypt_output(keys.k_off, off.register, qgc.offline_classical_bits(off) + t,
                                   rng, spectators)
    return PolyQfeCiphertext(cts, ct_in, ct_off, spectators, t)


def polyqfe_keygen(keys: PolyQfeKeys, circuit: CircuitDesc) -> PolyQfeKey:
    bits = keys.cls.encode(circuit)
    if keys.used:
        raise KeyReuseError("PolyQFE master key already used for a key query")
    keys.used = True
    sks = tuple(twofe_keygen(keys.twofe[i], bits[i]) for i in range(keys.l))
    return PolyQfeKey(circuit, sks, oneqfe_keygen(keys.k_in), oneqfe_keygen(keys.k_off))


def polyqfe_dec(sk: PolyQfeKey, ct: PolyQfeCiphertext, universal: CircuitDesc) -> DensityMatrix:
    """Decrypt to C(rho_m) (then spectators).  ``universal`` is the public U of the class."""
    l = len(ct.cts)
    values = [twofe_dec(sk.sks[i], ct.cts[i]) for i in range(l)]
    _, kappa = oneqfe_dec_full(sk.sk_in, ct.ct_in)
    register, off_c = oneqfe_dec_full(sk.sk_off, ct.ct_off)
    return _decode_pieces(universal, QrePieces(tuple(values), kappa, register, off_c), ct.spectators)


def _decode_pieces(u: CircuitDesc, p: QrePieces, spectators: int) -> DensityMatrix:
    l = len(p.piece_bits)
    rec, t = p.off_c[:-l], p.off_c[-l:]
    online_c = tuple(qgc.classical_piece_from_bits(u, i, _fold(p.piece_bits[i], t[i])) for i in range(l))
    online_q = tuple(qgc.OnlineQuantumPiece(i, PauliKey.from_flat(p.kappa[2 * i:2 * i + 2]))
                     for i in range(len(p.kappa) // 2))
    bundle = qgc.EncodingBundle(u, qgc.offline_from_parts(u, p.off_q, rec), online_q, online_c, spectators)
    return qgc.decode(bundle)


# ------------------------------------------------------------- simulation

@dataclass
class PolyQfeSimState:
    keys: PolyQfeKeys
    two: tuple[CfeSimState, ...]
    st_in: OneQfeSimState
    st_off: OneQfeSimState
    spectators: int
    used: bool = False


def _twofe_sim_nonadaptive(sk: TwoFeSecretKey, y: Bits, rng: RandomSource) -> CfeCiphertext:
    """TwoFE ciphertext for an already issued key: opens to ``y``, other slot uniform."""
    slots = [None, None]
    slots[sk.b] = xor_bits(y, sk.pad)
    slots[1 - sk.b] = rng.bits(len(y))
    return CfeCiphertext(tuple(slots))


def polyqfe_sim_nonadaptive(keys: PolyQfeKeys, sk: PolyQfeKey, c_out: DensityMatrix,
                            rng: RandomSource, spectators: int = 0) -> PolyQfeCiphertext:
    """Ideal ciphertext given the view (C, sk_C, C(rho_m))."""
    bits = keys.cls.encode(sk.circuit)
    p = simulated_pieces(keys, c_out, bits, rng, spectators)
    cts = tuple(_twofe_sim_nonadaptive(sk.sks[i], p.piece_bits[i], rng) for i in range(keys.l))
    ct_in = oneqfe_sim_nonadaptive(keys.k_in, DensityMatrix.scalar(), rng, p.kappa)
    ct_off = oneqfe_sim_nonadaptive(keys.k_off, p.off_q, rng, p.off_c, spectators)
    return PolyQfeCiphertext(cts, ct_in, ct_off, spectators)


def polyqfe_sim_adaptive_ct(keys: PolyQfeKeys, rng: RandomSource,
                            spectators: int = 0) -> tuple[PolyQfeCiphertext, PolyQfeSimState]:
    """Ideal ciphertext before any key query (knows only sizes)."""
    two = []
    cts = []
    for tf in keys.twofe:
        ct, st = twofe_sim_ct(tf.out_len, rng)
        cts.append(ct)
        two.append(st)
    ct_in, st_in = oneqfe_sim_adaptive_ct(keys.k_in, rng)
    ct_off, st_off = oneqfe_sim_adaptive_ct(keys.k_off, rng)
    state = PolyQfeSimState(keys, tuple(two), st_in, st_off, spectators)
    return PolyQfeCiphertext(tuple(cts), ct_in, ct_off, spectators), state


def polyqfe_sim_adaptive_key(state: PolyQfeSimState, circuit: CircuitDesc, c_out: DensityMatrix,
                             rng: RandomSource) -> tuple[PolyQfeKey, DensityMatrix]:
    """Program the key once C and C(rho_m) are known.

    Returns the key and the state now held in the offline ciphertext register.
    """
    if state.used:
        raise KeyReuseError("simulator state already used")
    state.used = True
    keys = state.keys
    bits = keys.cls.encode(circuit)
    p = simulated_pieces(keys, c_out, bits, rng, state.spectators)
    return _program_key(state, circuit, bits, p, rng)


def _program_key(state: PolyQfeSimState, circuit: CircuitDesc, bits: Bits, p: QrePieces,
                 rng: RandomSource) -> tuple[PolyQfeKey, DensityMatrix]:
    sks = tuple(twofe_sim_key(state.two[i], bits[i], p.piece_bits[i]) for i in range(len(bits)))
    sk_in, _ = oneqfe_sim_adaptive_key(state.st_in, DensityMatrix.scalar(), rng, p.kappa)
    sk_off, held = oneqfe_sim_adaptive_key(state.st_off, p.off_q, rng, p.off_c, state.spectators)
    return PolyQfeKey(circuit, sks, sk_in, sk_off), held


# ---------------------------------------------------------------- hybrids

@dataclass(frozen=True)
class HybridSpec:
    """Which components of the PolyQFE experiment are simulated."""

    twofe_simulated: int       # first this many TwoFE ciphertexts come from the simulator
    in_simulated: bool
    off_simulated: bool
    qre_simulated: bool


def hybrid_specs(l: int) -> list[HybridSpec]:
    """Hybrid 0 (real) .. Hybrid l+3 (ideal)."""
    out = [HybridSpec(i, False, False, False) for i in range(l + 1)]
    out.append(HybridSpec(l, True, False, False))
    out.append(HybridSpec(l, True, True, False))
    out.append(HybridSpec(l, True, True, True))
    return out


def run_hybrid(spec: HybridSpec, cls: CircuitClass, circuit: CircuitDesc, rho_m: DensityMatrix,
               rng: RandomSource, adaptive: bool, spectators: int = 0
               ) -> tuple[PolyQfeCiphertext, PolyQfeKey, DensityMatrix]:
    """One run of the SIM experiment with the given components simulated.

    Returns the ciphertext, the key and the final state of the offline
    ciphertext register (with spectators), which together form the
    adversary's view.  The adversary's strategy is fixed: message ``rho_m``
    and, for its single query, ``circuit``.
    """
    keys = polyqfe_setup(cls, rng)
    l, k = keys.l, spec.twofe_simulated
    bits = cls.encode(circuit)
    c_out = apply_with_spectators(lambda r: evaluate(circuit, r), rho_m, circuit.n_quantum, spectators)
    if not adaptive:
        sk = polyqfe_keygen(keys, circuit)
    if spec.qre_simulated:
        p, rbits, t = simulated_pieces(keys, c_out, bits, rng, spectators), (), ()
    else:
        p, rbits, t = real_pieces(keys, rho_m, bits, rng, spectators)

    def honest(i: int) -> CfeCiphertext:
        return twofe_enc(keys.twofe[i], rbits + (t[i],))

    if not adaptive:
        cts = tuple(_twofe_sim_nonadaptive(sk.sks[i], p.piece_bits[i], rng) if i < k else honest(i)
                    for i in range(l))
        # the non-adaptive OneQFE simulator is honest encryption of the output,
        # so hybrids l, l+1 and l+2 coincide here
        ct_in = oneqfe_encrypt_output(keys.k_in, DensityMatrix.scalar(), p.kappa, rng)
        ct_off = oneqfe_encrypt_output(keys.k_off, p.off_q, p.off_c, rng, spectators)
        ct = PolyQfeCiphertext(cts, ct_in, ct_off, spectators)
        return ct, sk, ct_off.rho_ct0

    # adaptive: ciphertext first, then the key query
    cts, states = [], []
    for i in range(l):
        if i < k:
            c, st = twofe_sim_ct(keys.twofe[i].out_len, rng)
            cts.append(c)
            states.append(st)
        else:
            cts.append(honest(i))
    if spec.in_simulated:
        ct_in, st_in = oneqfe_sim_adaptive_ct(keys.k_in, rng)
    else:
        ct_in = oneqfe_encrypt_output(keys.k_in, DensityMatrix.scalar(), p.kappa, rng)
    if spec.off_simulated:
        ct_off, st_off = oneqfe_sim_adaptive_ct(keys.k_off, rng)
    else:
        ct_off = oneqfe_encrypt_output(keys.k_off, p.off_q, p.off_c, rng, spectators)
    keys.used = True
    sks = tuple(twofe_sim_key(states[i], bits[i], p.piece_bits[i]) if i < k
                else twofe_keygen(keys.twofe[i], bits[i]) for i in range(l))
    if spec.in_simulated:
        sk_in, _ = oneqfe_sim_adaptive_key(st_in, DensityMatrix.scalar(), rng, p.kappa)
    else:
        sk_in = oneqfe_keygen(keys.k_in)
    if spec.off_simulated:
        sk_off, held = oneqfe_sim_adaptive_key(st_off, p.off_q, rng, p.off_c, spectators)
    else:
        sk_off, held = oneqfe_keygen(keys.k_off), ct_off.rho_ct0
    ct = PolyQfeCiphertext(tuple(cts), ct_in, ct_off, spectators)
    return ct, PolyQfeKey(circuit, sks, sk_in, sk_off), held


def hybrid_builder(cls: CircuitClass, circuit: CircuitDesc, rho_m: DensityMatrix, adaptive: bool,
                   spectators: int = 0):
    """``build(index)`` gives the adversary-view function of Hybrid ``index``.

    A view function maps a randomness source to (classical label, quantum
    state); Hybrid 0 is the real experiment and Hybrid l+3 the ideal one.
    """
    specs = hybrid_specs(cls.length)

    def build(index: int):
        spec = specs[index]

        def view(rng: RandomSource):
            ct, sk, held = run_hybrid(spec, cls, circuit, rho_m, rng, adaptive, spectators)
            return ct.classical_label() + sk.classical_label(), held
        return view
    build.count = len(specs)
    return build


# ----------------------------------------------------------- multi-message

def multi_message_sim(single_sim: Callable, views: Sequence, mode: str = "nonadaptive") -> list:
    """Simulate several ciphertexts by calling the single-message simulator per view."""
    if mode != "nonadaptive":
        raise UnsupportedError("multi-message simulation only carries over for non-adaptive queries")
    return [single_sim(v) for v in views]
