"""Unclonable functional encryption over a dealer QFE backend.

The plaintext of the backend scheme is laid out in slots

    m0 (n) | m1 (n) | dk0 (p+t) | dk1 (p+t) | ue (t) | flag (1)

where p is the zero-prefix length and t the UEQ key length.  Function keys
carry a program U_(C,a,b): with flag 0 it outputs C(m0); with flag 1 it
undoes X^a Z^b on both dk slots, accepts the first slot whose prefix
measures to zero, decrypts the UEQ ciphertext with the rest of that slot and
outputs C(m_b).

Plaintexts are held as a product of independent blocks (``SlotState``), so
the default layout of 14 qubits never has to be materialised.  The dealer
backend is correctness-grade only.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence


from . import qcircuit
from .config import get_config
from .errors import QfeError, ShapeError
from .qcircuit import CircuitDesc
from .qcore import (Bits, CQState, DensityMatrix, GateKind, PauliKey, RandomSource, apply_gate,
                    apply_pauli, as_bits, cq_mix, make_epr, measure_all, partial_trace, permute,
                    teleport, tensor)

SLOTS = ("m0", "m1", "dk0", "dk1", "ue", "flag")
OK, BOT = "ok", "bot"
DEFAULT_KEY_LEN = 2


@dataclass(frozen=True)
class UfeLayout:
    n: int
    prefix_len: int
    key_len: int = DEFAULT_KEY_LEN

    @property
    def dk_width(self) -> int:
        return self.prefix_len + self.key_len

    def widths(self) -> dict[str, int]:
        dk = self.dk_width
        return {"m0": self.n, "m1": self.n, "dk0": dk, "dk1": dk, "ue": self.key_len, "flag": 1}

    @property
    def total(self) -> int:
        return sum(self.widths().values())

    def qubits(self, slot: str) -> tuple[int, ...]:
        start = 0
        for name, w in self.widths().items():
            if name == slot:
                return tuple(range(start, start + w))
            start += w
        raise ShapeError(f"unknown slot {slot!r}")


def default_layout(n: int, key_len: int = DEFAULT_KEY_LEN) -> UfeLayout:
    return UfeLayout(n, get_config().prefix_len, key_len)


# ----------------------------------------------------------- slot states

class SlotState:
    """State on a layout as a tensor product of blocks.

    Each block is ``(qubits, rho)`` with ``rho``'s qubit k sitting at layout
    position ``qubits[k]``; the blocks partition the layout.  Operations
    touch only the blocks they need.
    """

    __slots__ = ("layout", "blocks")

    def __init__(self, layout: UfeLayout, blocks: Sequence[tuple[Sequence[int], DensityMatrix]]):
        blocks = tuple((tuple(q), rho) for q, rho in blocks)
        seen = sorted(q for qs, _ in blocks for q in qs)
        if seen != list(range(layout.total)):
            raise ShapeError("blocks do not partition the layout")
        for qs, rho in blocks:
            if rho.n != len(qs):
                raise ShapeError(f"block on {len(qs)} positions holds a {rho.n}-qubit state")
        self.layout = layout
        self.blocks = blocks

    @classmethod
    def from_dense(cls, layout: UfeLayout, rho: DensityMatrix) -> "SlotState":
        if rho.n != layout.total:
            raise ShapeError(f"layout has {layout.total} qubits, state has {rho.n}")
        return cls(layout, [(range(layout.total), rho)])

    @classmethod
    def product(cls, layout: UfeLayout, parts: Mapping[str, DensityMatrix]) -> "SlotState":
        """One block per slot; missing slots are |0...0>."""
        blocks = []
        for slot, w in layout.widths().items():
            rho = parts.get(slot)
            if rho is None:
                rho = DensityMatrix.zero(w)
            elif rho.n != w:
                raise ShapeError(f"slot {slot} has width {w}, got a {rho.n}-qubit state")
            blocks.append((layout.qubits(slot), rho))
        return cls(layout, blocks)

    def _split(self, qubits: Sequence[int]) -> dict[int, list[tuple[int, int]]]:
        """block index -> [(position in request, local wire)]"""
        where = {q: (i, k) for i, (qs, _) in enumerate(self.blocks) for k, q in enumerate(qs)}
        out: dict[int, list[tuple[int, int]]] = {}
        for pos, q in enumerate(qubits):
            if q not in where:
                raise ShapeError(f"qubit {q} is outside the layout")
            i, k = where[q]
            out.setdefault(i, []).append((pos, k))
        return out

    def _replace(self, updates: Mapping[int, tuple[Sequence[int], DensityMatrix]]) -> "SlotState":
        blocks = [updates.get(i, b) for i, b in enumerate(self.blocks)]
        return SlotState(self.layout, blocks)

    def apply_pauli(self, qubits: Sequence[int], key: PauliKey) -> "SlotState":
        if key.n != len(qubits):
            raise ShapeError(f"key of length {key.n} for {len(qubits)} qubits")
        updates = {}
        for i, hits in self._split(qubits).items():
            qs, rho = self.blocks[i]
            sub = PauliKey(tuple(key.a[p] for p, _ in hits), tuple(key.b[p] for p, _ in hits))
            updates[i] = (qs, apply_pauli(rho, sub, [k for _, k in hits]))
        return self._replace(updates)

    def apply_gate(self, kind: GateKind, qubit: int) -> "SlotState":
        (i, hits), = self._split([qubit]).items()
        qs, rho = self.blocks[i]
        return self._replace({i: (qs, apply_gate(rho, kind, [hits[0][1]]))})

    def measure_all(self, qubits: Sequence[int]) -> list[tuple[Bits, float, "SlotState"]]:
        """Computational-basis outcomes on ``qubits`` (kept in place as basis states).

        Zero-probability outcomes are dropped.
        """
        qubits = list(qubits)
        per_block = []
        for i, hits in self._split(qubits).items():
            qs, rho = self.blocks[i]
            local = [k for _, k in hits]
            rest = [q for k, q in enumerate(qs) if k not in local]
            opts = []
            for outcome, p, post in measure_all(rho, local):
                if post is None:
                    continue
                new = tensor(post, DensityMatrix.basis(outcome)) if rest else DensityMatrix.basis(outcome)
                opts.append((outcome, p, (tuple(rest) + tuple(qs[k] for k in local), new)))
            per_block.append((i, [p for p, _ in hits], opts))
        out = []
        for combo in itertools.product(*(opts for _, _, opts in per_block)):
            bits = [0] * len(qubits)
            prob = 1.0
            updates = {}
            for (i, positions, _), (outcome, p, blk) in zip(per_block, combo):
                prob *= p
                for pos, v in zip(positions, outcome):
                    bits[pos] = v
                updates[i] = blk
            if prob > 1e-15:
                out.append((tuple(bits), prob, self._replace(updates)))
        return out

    def marginal(self, qubits: Sequence[int]) -> DensityMatrix:
        """Reduced state on ``qubits`` in the requested order."""
        qubits = list(qubits)
        if not qubits:
            return DensityMatrix.scalar()
        parts, order = [], []
        for i, hits in sorted(self._split(qubits).items()):
            qs, rho = self.blocks[i]
            keep = [k for _, k in hits]
            red = partial_trace(rho, [k for k in range(rho.n) if k not in keep]) if len(keep) < rho.n else rho
            # partial_trace keeps the survivors in increasing local order
            kept_sorted = sorted(keep)
            parts.append(red)
            order += [qs[k] for k in kept_sorted]
        joint = tensor(*parts)
        return permute(joint, [order.index(q) for q in qubits])

    def slot(self, name: str) -> DensityMatrix:
        return self.marginal(self.layout.qubits(name))

    def dense(self) -> DensityMatrix:
        return self.marginal(range(self.layout.total))


# ------------------------------------------------------------------- UEQ

@dataclass(frozen=True)
class UeqKeys:
    """Conjugate-coding keys: ek is the basis string, dk = |theta>."""

    theta: Bits
    seed: int
    dk: DensityMatrix = field(compare=False, repr=False)

    @property
    def ek(self) -> Bits:
        return self.theta


@dataclass(frozen=True)
class UeqCiphertext:
    state: DensityMatrix


def ueq_keygen(seed: int, key_len: int = DEFAULT_KEY_LEN) -> UeqKeys:
    """Pseudodeterministic: the same seed regenerates the same dk."""
    theta = RandomSource(seed).bits(key_len)
    return UeqKeys(theta, seed, DensityMatrix.basis(theta))


def ueq_keys_for_basis(theta: Sequence[int]) -> UeqKeys:
    """Keys for an explicit basis string (used to enumerate key choices)."""
    theta = as_bits(theta)
    return UeqKeys(theta, -1, DensityMatrix.basis(theta))


def ueq_enc(ek: Sequence[int], bit: int, rng: RandomSource) -> UeqCiphertext:
    """H^theta |p> with a uniform p of parity ``bit``."""
    theta = as_bits(ek)
    if bit not in (0, 1):
        raise ShapeError("UEQ encrypts a single bit")
    if not theta:
        raise ShapeError("empty basis string")
    head = rng.bits(len(theta) - 1)
    p = head + ((sum(head) + bit) % 2,)
    rho = DensityMatrix.basis(p)
    for i, t in enumerate(theta):
        if t:
            rho = apply_gate(rho, GateKind.H, [i])
    return UeqCiphertext(rho)


def ueq_dec_dist(dk: DensityMatrix, ct: UeqCiphertext) -> tuple[float, float]:
    """Exact output distribution of Dec: measure dk for theta, then each qubit in basis theta_i."""
    if dk.n != ct.state.n:
        raise ShapeError(f"key on {dk.n} qubits, ciphertext on {ct.state.n}")
    probs = [0.0, 0.0]
    for theta, pk, _ in measure_all(dk, range(dk.n)):
        if pk <= 1e-15:
            continue
        rho = ct.state
        for i, t in enumerate(theta):
            if t:
                rho = apply_gate(rho, GateKind.H, [i])
        for p, pp, _ in measure_all(rho, range(rho.n)):
            probs[sum(p) % 2] += pk * pp
    return probs[0], probs[1]


def ueq_dec(dk: DensityMatrix, ct: UeqCiphertext, rng: RandomSource) -> int:
    return rng.choice(ueq_dec_dist(dk, ct))


# ------------------------------------------------------------ U program

@dataclass(frozen=True)
class UParams:
    circuit: CircuitDesc
    a: Bits
    b: Bits

    @property
    def key(self) -> PauliKey:
        return PauliKey(self.a, self.b)


def _check_params(params: UParams, layout: UfeLayout) -> None:
    if len(params.a) != layout.dk_width or len(params.b) != layout.dk_width:
        raise ShapeError(f"correction strings must have length {layout.dk_width}")
    if params.circuit.n_quantum != layout.n or params.circuit.n_classical:
        raise ShapeError(f"circuit must act on {layout.n} message qubits without classical inputs")


def _u_branches(params: UParams, st: SlotState) -> list[tuple[float, str, DensityMatrix]]:
    lay = st.layout
    c = qcircuit.channel(params.circuit)
    n_out = params.circuit.topology.n_outputs
    bot = DensityMatrix.zero(n_out)
    out: list[tuple[float, str, DensityMatrix]] = []
    for (f,), pf, s in st.measure_all(lay.qubits("flag")):
        if f == 0:
            out.append((pf, OK, c(s.slot("m0"))))
            continue
        s = s.apply_pauli(lay.qubits("dk0"), params.key).apply_pauli(lay.qubits("dk1"), params.key)
        accepted: list[tuple[float, str, SlotState]] = []
        prefix0 = lay.qubits("dk0")[:lay.prefix_len]
        prefix1 = lay.qubits("dk1")[:lay.prefix_len]
        for bits0, p0, s0 in s.measure_all(prefix0):
            if not any(bits0):
                accepted.append((p0, "dk0", s0))
                continue
            for bits1, p1, s1 in s0.measure_all(prefix1):
                if not any(bits1):
                    accepted.append((p0 * p1, "dk1", s1))
                else:
                    out.append((pf * p0 * p1, BOT, bot))
        for p, name, s2 in accepted:
            suffix = lay.qubits(name)[lay.prefix_len:]
            for theta, pt, s3 in s2.measure_all(suffix):
                s4 = s3
                for q, t in zip(lay.qubits("ue"), theta):
                    if t:
                        s4 = s4.apply_gate(GateKind.H, q)
                for bits, pu, s5 in s4.measure_all(lay.qubits("ue")):
                    slot = "m1" if sum(bits) % 2 else "m0"
                    out.append((pf * p * pt * pu, OK, c(s5.slot(slot))))
    return out


def u_circuit_apply(params: UParams, joint: SlotState | DensityMatrix,
                    layout: UfeLayout | None = None) -> CQState:
    """Run U_(C,a,b) on a plaintext; the label ``bot`` marks the rejecting branch.

    The ``bot`` block carries |0...0> on the output register.
    """
    if isinstance(joint, DensityMatrix):
        if layout is None:
            raise ShapeError("a dense plaintext needs an explicit layout")
        joint = SlotState.from_dense(layout, joint)
    _check_params(params, joint.layout)
    return _merge(_u_branches(params, joint))


def _merge(parts: list[tuple[float, str, DensityMatrix]]) -> CQState:
    total = sum(p for p, _, _ in parts)
    return cq_mix((p / total, label, rho) for p, label, rho in parts)


def accepted_output(out: CQState, tol: float | None = None) -> DensityMatrix:
    """The output register, insisting that the program did not reject."""
    tol = get_config().tol.algebraic if tol is None else tol
    if out.weight(BOT) > tol:
        raise QfeError(f"program rejected with probability {out.weight(BOT):.3g}")
    return out.state(OK)


def rejection_probability(out: CQState) -> float:
    return out.weight(BOT)


# ------------------------------------------------------- dealer backend

class _Dealer:
    """Challenger-side pad registry shared by the keys of one setup."""

    def __init__(self):
        self.pads: dict[int, PauliKey] = {}

    def register(self, key: PauliKey) -> int:
        handle = len(self.pads)
        self.pads[handle] = key
        return handle


@dataclass(frozen=True)
class UfePublicKey:
    layout: UfeLayout
    dealer: _Dealer = field(repr=False, compare=False)


@dataclass(frozen=True)
class UfeMasterKey:
    layout: UfeLayout
    dealer: _Dealer = field(repr=False, compare=False)


@dataclass(frozen=True)
class UfeKey:
    params: UParams
    dealer: _Dealer = field(repr=False, compare=False)


@dataclass(frozen=True)
class UfeCiphertext:
    handle: int
    state: SlotState = field(repr=False)

    @property
    def layout(self) -> UfeLayout:
        return self.state.layout


def ufe_setup(n: int, rng: RandomSource | None = None, layout: UfeLayout | None = None
              ) -> tuple[UfePublicKey, UfeMasterKey]:
    # the dealer draws no setup randomness; rng is accepted for interface symmetry
    layout = default_layout(n) if layout is None else layout
    if layout.n != n:
        raise ShapeError("layout message width differs from n")
    d = _Dealer()
    return UfePublicKey(layout, d), UfeMasterKey(layout, d)


def ufe_keygen(msk: UfeMasterKey, circuit: CircuitDesc, rng: RandomSource) -> UfeKey:
    w = msk.layout.dk_width
    return ufe_keygen_with(msk, circuit, rng.bits(w), rng.bits(w))


def ufe_keygen_with(msk: UfeMasterKey, circuit: CircuitDesc, a: Sequence[int], b: Sequence[int]) -> UfeKey:
    """Key for U_(C,a,b) with explicit correction strings."""
    params = UParams(circuit, as_bits(a), as_bits(b))
    _check_params(params, msk.layout)
    return UfeKey(params, msk.dealer)


def encrypt_plaintext(mpk: UfePublicKey, plaintext: SlotState, rng: RandomSource) -> UfeCiphertext:
    """Backend QFE encryption of a full slot-layout plaintext."""
    if plaintext.layout != mpk.layout:
        raise ShapeError("plaintext layout differs from the public key's")
    key = PauliKey.random(mpk.layout.total, rng)
    padded = plaintext.apply_pauli(range(mpk.layout.total), key)
    return UfeCiphertext(mpk.dealer.register(key), padded)


def honest_plaintext(layout: UfeLayout, rho_m: DensityMatrix) -> SlotState:
    return SlotState.product(layout, {"m0": rho_m})


def ufe_enc(mpk: UfePublicKey, rho_m: DensityMatrix, rng: RandomSource) -> UfeCiphertext:
    return encrypt_plaintext(mpk, honest_plaintext(mpk.layout, rho_m), rng)


def ufe_dec_full(sk: UfeKey, ct: UfeCiphertext) -> CQState:
    pad = sk.dealer.pads.get(ct.handle)
    if pad is None:
        raise QfeError("ciphertext was not produced under this key's setup")
    plain = ct.state.apply_pauli(range(ct.layout.total), pad)
    return u_circuit_apply(sk.params, plain)


def ufe_dec(sk: UfeKey, ct: UfeCiphertext) -> DensityMatrix:
    return accepted_output(ufe_dec_full(sk, ct))


# --------------------------------------------------------------- Enc*

@dataclass(frozen=True)
class StarPlaintext:
    plaintext: SlotState
    keys0: PauliKey
    keys1: PauliKey
    b: int


def _teleport_basis(bits: Bits, rng: RandomSource) -> tuple[PauliKey, DensityMatrix]:
    """Teleport a computational basis state qubit by qubit.

    Returns the correction key and the receiver's uncorrected qubits.
    """
    a, bb, parts = [], [], []
    for v in bits:
        joint = tensor(DensityMatrix.basis((v,)), make_epr(1))   # payload, A, B
        key, post = teleport(joint, [0], [2], rng)               # receiver keeps A
        a += key.a
        bb += key.b
        parts.append(post)
    return PauliKey(tuple(a), tuple(bb)), tensor(*parts)


def star_plaintext(layout: UfeLayout, rho_m0: DensityMatrix, rho_m1: DensityMatrix, seed: int,
                   rng: RandomSource) -> StarPlaintext:
    """The flag-1 plaintext of Enc* with the dk teleportations already performed.

    The teleportations act on the retained B halves only, so they commute
    with the backend encryption of the A halves.
    """
    if rho_m0.n != layout.n or rho_m1.n != layout.n:
        raise ShapeError(f"messages must have {layout.n} qubits")
    k0 = ueq_keygen(seed, layout.key_len)
    k1 = ueq_keygen(seed, layout.key_len)
    b = rng.bit()
    ue = ueq_enc(k0.ek, b, rng)
    zeros = (0,) * layout.prefix_len
    key0, half0 = _teleport_basis(zeros + k0.theta, rng)
    key1, half1 = _teleport_basis(zeros + k1.theta, rng)
    plain = SlotState.product(layout, {"m0": rho_m0, "m1": rho_m1, "dk0": half0, "dk1": half1,
                                       "ue": ue.state, "flag": DensityMatrix.basis((1,))})
    return StarPlaintext(plain, key0, key1, b)


def enc_star(mpk: UfePublicKey, rho_m0: DensityMatrix, rho_m1: DensityMatrix, seed: int,
             rng: RandomSource) -> tuple[UfeCiphertext, PauliKey, PauliKey, int]:
    star = star_plaintext(mpk.layout, rho_m0, rho_m1, seed, rng)
    return encrypt_plaintext(mpk, star.plaintext, rng), star.keys0, star.keys1, star.b


# ------------------------------------------------- PK-UE with variable keys

class PkeUe:
    """Public-key unclonable encryption with variable decryption keys.

    ``keygen(r, r_prime)`` derives the shared public key from ``r`` and the
    key-specific correction strings from ``r_prime``; every decryption key
    is a UFE key for the identity circuit.
    """

    def __init__(self, n: int, layout: UfeLayout | None = None):
        self.n = n
        self.layout = default_layout(n) if layout is None else layout
        self._setups: dict[int, tuple[UfePublicKey, UfeMasterKey]] = {}

    def _setup(self, r: int) -> tuple[UfePublicKey, UfeMasterKey]:
        if r not in self._setups:
            self._setups[r] = ufe_setup(self.n, RandomSource(r), self.layout)
        return self._setups[r]

    def keygen(self, r: int, r_prime: int) -> tuple[UfePublicKey, UfeKey]:
        mpk, msk = self._setup(r)
        return mpk, ufe_keygen(msk, qcircuit.identity(self.n), RandomSource(r_prime))

    def enc(self, ek: UfePublicKey, m: Sequence[int] | DensityMatrix, rng: RandomSource) -> UfeCiphertext:
        rho = m if isinstance(m, DensityMatrix) else DensityMatrix.basis(as_bits(m))
        return ufe_enc(ek, rho, rng)

    def dec(self, dk: UfeKey, ct: UfeCiphertext) -> DensityMatrix:
        return ufe_dec(dk, ct)

    def dec_bits(self, dk: UfeKey, ct: UfeCiphertext, rng: RandomSource) -> Bits:
        rho = self.dec(dk, ct)
        branches = measure_all(rho, range(rho.n))
        return branches[rng.choice([p for _, p, _ in branches])][0]


def derive_pkeue(n: int, layout: UfeLayout | None = None) -> PkeUe:
    return PkeUe(n, layout)


# ------------------------------------------------------- PolyQFE demo

def flag0_program(circuit: CircuitDesc) -> CircuitDesc:
    """The flag-0 branch of U on the reduced plaintext (m0, flag): C on m0, flag discarded."""
    _, anc, trace, gates = circuit.lines()
    if anc or trace:
        raise ShapeError("the demonstration takes circuits without ancillas or trace-out")
    n = circuit.n_quantum
    return qcircuit.circuit(n + 1, [(g.kind, g.wires) for g in gates], trace_out=(n,))


def polyqfe_flag0_demo(circuit: CircuitDesc, rho_m: DensityMatrix, rng: RandomSource) -> DensityMatrix:
    """Encrypt (rho_m, flag=0) under PolyQFE and decrypt with the flag-0 program.

    Restricted to Clifford C; the dk and ue slots are omitted since the
    flag-0 branch discards them.
    """
    from . import qfe

    prog = flag0_program(circuit)
    _, anc, trace, gates = prog.lines()
    cls = qcircuit.CircuitClass(prog.n_quantum, max(1, len(gates)), tuple(anc), tuple(trace))
    keys = qfe.polyqfe_setup(cls, rng)
    sk = qfe.polyqfe_keygen(keys, prog)
    ct = qfe.polyqfe_enc(keys, tensor(rho_m, DensityMatrix.zero(1)), rng)
    return qfe.polyqfe_dec(sk, ct, keys.universal)
