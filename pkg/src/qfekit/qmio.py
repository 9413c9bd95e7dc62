"""Multi-input QFE (dealer reference), the trusted-party oracle, and qiO.

Quantum plaintexts live in shared ``Register`` objects so that a ciphertext
can hold one half of an entangled pair while the other half stays loose;
ciphertexts refer to their qubits by label.  The dealer keeps every pad and
strips them inside ``qmife_dec``; correctness is exact, security is not
claimed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import qcircuit
from .config import get_config
from .errors import KeyReuseError, QfeError, ResourceError, ShapeError, UnsupportedError
from .qcircuit import CircuitClass, CircuitDesc
from .qcore import (GATE_MATRICES, Bits, DensityMatrix, GateKind, PauliKey, RandomSource,
                    apply_pauli, apply_unitary, as_bits, int_to_bits, make_epr, measure,
                    partial_trace, permute, teleport, teleport_all, tensor, xor_bits)


# ------------------------------------------------------------- registers

class Register:
    """Mutable joint state whose qubits carry string labels."""

    def __init__(self, state: DensityMatrix, labels: Sequence[str]):
        if state.n != len(labels) or len(set(labels)) != len(labels):
            raise ShapeError("one distinct label per qubit is required")
        self.state = state
        self.labels = list(labels)

    def wires(self, labels: Sequence[str]) -> list[int]:
        try:
            return [self.labels.index(l) for l in labels]
        except ValueError as exc:
            raise ShapeError(f"label not in register: {exc}") from None

    def attach(self, rho: DensityMatrix, labels: Sequence[str]) -> None:
        if rho.n != len(labels) or set(labels) & set(self.labels):
            raise ShapeError("attached labels must be fresh, one per qubit")
        self.state = tensor(self.state, rho)
        self.labels += list(labels)

    def marginal(self, labels: Sequence[str]) -> DensityMatrix:
        keep = self.wires(labels)
        drop = [w for w in range(len(self.labels)) if w not in keep]
        red = partial_trace(self.state, drop) if drop else self.state
        survivors = sorted(keep)
        return permute(red, [survivors.index(w) for w in keep])

    def discard(self, labels: Sequence[str]) -> None:
        drop = self.wires(labels)
        self.state = partial_trace(self.state, drop)
        self.labels = [l for w, l in enumerate(self.labels) if w not in drop]

    def measure(self, labels: Sequence[str], rng: RandomSource) -> Bits:
        """Computational-basis measurement; the measured qubits are removed."""
        wires = self.wires(labels)
        outcome, post = measure(self.state, wires, rng)
        self.state = post
        self.labels = [l for w, l in enumerate(self.labels) if w not in wires]
        return outcome


_fresh = itertools.count()


def _labels(prefix: str, n: int) -> list[str]:
    tag = next(_fresh)
    return [f"{prefix}{tag}.{q}" for q in range(n)]


# --------------------------------------------------------------- QMIFE

@dataclass
class _Dealer:
    arity: int
    limit: int
    counters: list[int]
    pads: dict[int, PauliKey | Bits] = field(default_factory=dict)

    def register(self, pad) -> int:
        h = len(self.pads)
        self.pads[h] = pad
        return h


@dataclass(frozen=True)
class EncryptionKey:
    index: int
    dealer: _Dealer = field(repr=False, compare=False)


@dataclass(frozen=True)
class QmifeKeys:
    """Master secret key together with the encryption keys ek_1..ek_n."""

    msk: _Dealer = field(repr=False)
    eks: tuple[EncryptionKey, ...]

    @property
    def arity(self) -> int:
        return self.msk.arity

    @property
    def limit(self) -> int:
        return self.msk.limit

    def counter(self, i: int) -> int:
        return self.msk.counters[i]


@dataclass(frozen=True)
class QmifeCiphertext:
    """Ciphertext for input position ``slot``.

    Quantum payloads are the labelled qubits of a register, classical ones
    a padded bit string.
    """

    slot: int
    handle: int
    register: Register | None = field(default=None, repr=False, compare=False)
    labels: tuple[str, ...] = ()
    bits: Bits | None = None

    @property
    def classical(self) -> bool:
        return self.bits is not None


# quantum slots in position order, classical slots by position
MultiInputFn = Callable[[DensityMatrix, Mapping[int, Bits]], DensityMatrix]


@dataclass(frozen=True)
class QmifeKey:
    fn: MultiInputFn
    arity: int
    dealer: _Dealer = field(repr=False, compare=False)


def qmife_setup(n: int, k: int, rng: RandomSource | None = None) -> QmifeKeys:
    """Arity ``n``; each encryption key produces at most ``k`` ciphertexts."""
    if n < 1 or k < 1:
        raise ShapeError("arity and usage bound must be positive")
    d = _Dealer(n, k, [0] * n)
    return QmifeKeys(d, tuple(EncryptionKey(i, d) for i in range(n)))


def _count(ek: EncryptionKey) -> None:
    d = ek.dealer
    if d.counters[ek.index] >= d.limit:
        raise KeyReuseError(f"encryption key {ek.index} already produced {d.limit} ciphertext(s)")
    d.counters[ek.index] += 1


def qmife_enc(ek: EncryptionKey, msg: DensityMatrix | Sequence[int], rng: RandomSource) -> QmifeCiphertext:
    if isinstance(msg, DensityMatrix):
        labels = _labels(f"m{ek.index}_", msg.n)
        return qmife_enc_register(ek, Register(msg, labels), labels, rng)
    _count(ek)
    bits = as_bits(msg)
    pad = rng.bits(len(bits))
    return QmifeCiphertext(ek.index, ek.dealer.register(pad), bits=xor_bits(bits, pad))


def qmife_enc_register(ek: EncryptionKey, register: Register, labels: Sequence[str],
                       rng: RandomSource) -> QmifeCiphertext:
    """Encrypt qubits in place inside a (possibly entangled) register."""
    _count(ek)
    labels = tuple(labels)
    key = PauliKey.random(len(labels), rng)
    register.state = apply_pauli(register.state, key, register.wires(labels))
    return QmifeCiphertext(ek.index, ek.dealer.register(key), register, labels)


def qmife_keygen(keys: QmifeKeys, fn: CircuitDesc | MultiInputFn) -> QmifeKey:
    """Key for a circuit on the tensor product of all (quantum) inputs, or for a
    function of (joint quantum inputs, classical inputs)."""
    if isinstance(fn, CircuitDesc):
        desc = fn
        qcircuit.check(desc)

        def run(joint: DensityMatrix, classical: Mapping[int, Bits]) -> DensityMatrix:
            if classical:
                raise ShapeError("circuit keys take quantum inputs only")
            return qcircuit.evaluate(desc, joint)
        return QmifeKey(run, keys.arity, keys.msk)
    return QmifeKey(fn, keys.arity, keys.msk)


def qmife_dec(sk: QmifeKey, cts: Sequence[QmifeCiphertext]) -> DensityMatrix:
    if len(cts) != sk.arity:
        raise ShapeError(f"key takes {sk.arity} ciphertexts, got {len(cts)}")
    classical: dict[int, Bits] = {}
    regs: dict[int, tuple[Register, DensityMatrix]] = {}
    order: list[tuple[int, str]] = []
    for pos, ct in enumerate(cts):
        if ct.slot != pos:
            raise ShapeError(f"ciphertext for position {ct.slot} supplied at position {pos}")
        pad = sk.dealer.pads.get(ct.handle)
        if pad is None:
            raise QfeError("ciphertext was not produced under this setup")
        if ct.classical:
            classical[pos] = xor_bits(ct.bits, pad)
            continue
        reg = ct.register
        rid = id(reg)
        cur = regs[rid][1] if rid in regs else reg.state
        regs[rid] = (reg, apply_pauli(cur, pad, reg.wires(ct.labels)))
        order += [(rid, l) for l in ct.labels]
    if not order:
        return sk.fn(DensityMatrix.scalar(), classical)
    # assemble the referenced qubits of every register in position order
    parts, labels = [], []
    for rid, (reg, rho) in regs.items():
        mine = [l for r, l in order if r == rid]
        tmp = Register(rho, reg.labels)
        parts.append(tmp.marginal(mine))
        labels += [(rid, l) for l in mine]
    joint = tensor(*parts)
    return sk.fn(permute(joint, [labels.index(o) for o in order]), classical)


# ---------------------------------------------------------- trusted party

def _op_matrix(ops: Sequence[tuple[np.ndarray, Sequence[int]]], n: int) -> np.ndarray:
    """Unitary of a gate sequence on ``n`` wires (qubit 0 most significant)."""
    dim = 1 << n
    m = np.eye(dim, dtype=complex).reshape((2,) * n + (dim,))
    for u, wires in ops:
        k = len(wires)
        t = np.tensordot(u.reshape((2,) * (2 * k)), m, axes=(list(range(k, 2 * k)), list(wires)))
        m = np.moveaxis(t, list(range(k)), list(wires))
    return m.reshape(dim, dim)


@dataclass(frozen=True)
class QueryAnswer:
    index_labels: tuple[str, ...]
    answer_labels: tuple[str, ...]


class TrustedParty:
    """Ideal-world oracle holding the messages m_{i,j} (i in [n], j in [k]).

    The world register holds the messages and every register handed out in
    answers, so later measurements by the caller act on the same joint
    state the trusted party evaluates.
    """

    def __init__(self, messages: DensityMatrix, n: int, k: int, width: int = 1):
        if messages.n != n * k * width:
            raise ShapeError(f"expected {n * k * width} message qubits, got {messages.n}")
        self.n, self.k, self.width = n, k, width
        self.held = {(i, j): [f"m{i}.{j}.{q}" for q in range(width)] for i in range(n) for j in range(k)}
        labels = [l for i in range(n) for j in range(k) for l in self.held[(i, j)]]
        self.world = Register(messages, labels)
        self.log: list[tuple[str, object]] = []

    def held_labels(self) -> list[str]:
        return [l for i in range(self.n) for j in range(self.k) for l in self.held[(i, j)]]

    def held_state(self) -> DensityMatrix:
        return self.world.marginal(self.held_labels())

    def index_bits(self) -> int:
        return (self.k - 1).bit_length()

    def supports_superposed(self, extra: int = 0) -> bool:
        need = len(self.world.labels) + self.n * self.index_bits() + extra
        return need <= get_config().max_qubits


def _unitary_circuit(g: CircuitDesc) -> list[tuple[GateKind, tuple[int, ...]]]:
    n_lines, anc, trace, gates = g.lines()
    if anc or trace or g.n_classical:
        raise UnsupportedError("trusted-party queries need a unitary circuit (no ancillas, "
                               "trace-out or classical inputs)")
    return [(gt.kind, gt.wires) for gt in gates]


def tp_query(tp: TrustedParty, g: CircuitDesc,
             index: Sequence[int] | Mapping[tuple[int, ...], complex]) -> QueryAnswer:
    """Evaluate g on the selected held messages, CNOT-copy the output out, uncompute.

    ``index`` is a classical tuple (j_1..j_n) or a superposition given as
    {tuple: amplitude}.
    """
    gates = _unitary_circuit(g)
    if g.n_quantum != tp.n * tp.width:
        raise ShapeError(f"query circuit must take {tp.n * tp.width} qubits")
    superposed = isinstance(index, Mapping)
    terms = dict(index) if superposed else {tuple(index): 1.0}
    if superposed and tp.index_bits() == 0:
        superposed = False      # k = 1: the only index is (0, ..., 0)
    for j in terms:
        if len(j) != tp.n or any(not 0 <= v < tp.k for v in j):
            raise ShapeError(f"index {j} out of range for n={tp.n}, k={tp.k}")
    out_w = g.n_quantum
    ans = _labels("ans", out_w)
    tp.world.attach(DensityMatrix.zero(out_w), ans)
    idx_labels: list[str] = []
    if superposed:
        ib = tp.index_bits()
        if not tp.supports_superposed():
            raise ResourceError("superposed query exceeds the qubit budget; use classical indices")
        amps = np.array(list(terms.values()), dtype=complex)
        amps = amps / np.linalg.norm(amps)
        vec = np.zeros(1 << (ib * tp.n), dtype=complex)
        for (j, _), a in zip(terms.items(), amps):
            code = sum(((v >> (ib - 1 - b)) & 1) << (ib * (tp.n - 1 - i) + ib - 1 - b)
                       for i, v in enumerate(j) for b in range(ib))
            vec[code] = a
        idx_labels = _labels("idx", ib * tp.n)
        tp.world.attach(DensityMatrix.from_ket(vec), idx_labels)

    def unitary_for(j: tuple[int, ...], wires_of: Callable[[Sequence[str]], list[int]], n: int) -> np.ndarray:
        inputs = [w for i, v in enumerate(j) for w in wires_of(tp.held[(i, v)])]
        ans_w = wires_of(ans)
        fwd = [(GATE_MATRICES[k], tuple(inputs[w] for w in ws)) for k, ws in gates]
        copy = [(GATE_MATRICES[GateKind.CNOT], (inputs[q], ans_w[q])) for q in range(out_w)]
        back = [(u.conj().T, ws) for u, ws in reversed(fwd)]
        return _op_matrix(fwd + copy + back, n)

    world = tp.world
    n_all = len(world.labels)
    if not superposed:
        j, = terms
        u = unitary_for(j, world.wires, n_all)
    else:
        # block-diagonal in the index register; unlisted index values act trivially
        ib = tp.index_bits()
        others = [l for l in world.labels if l not in idx_labels]
        sub_wires = lambda labs: [others.index(l) for l in labs]
        dim_o = 1 << len(others)
        u_sub = np.zeros((1 << len(idx_labels), 1 << len(idx_labels), dim_o, dim_o), dtype=complex)
        for code in range(1 << len(idx_labels)):
            bits = int_to_bits(code, len(idx_labels))
            j = tuple(int("".join(map(str, bits[i * ib:(i + 1) * ib])) or "0", 2) for i in range(tp.n))
            if all(v < tp.k for v in j) and j in terms:
                u_sub[code, code] = unitary_for(j, sub_wires, len(others))
            else:
                u_sub[code, code] = np.eye(dim_o)
        full = u_sub.transpose(0, 2, 1, 3).reshape(dim_o << len(idx_labels), dim_o << len(idx_labels))
        order = [world.labels.index(l) for l in idx_labels + others]
        world.state = permute(world.state, order)
        world.labels = idx_labels + others
        u = full
    world.state = apply_unitary(world.state, u, list(range(len(world.labels))))
    tp.log.append(("query", (g.to_json(), terms if superposed else next(iter(terms)))))
    return QueryAnswer(tuple(idx_labels), tuple(ans))


# ------------------------------------------------------------------- qiO

def slot_map(n: int) -> dict[str, object]:
    """Input positions of U: circuit, teleport halves, then a_1, b_1, ..., a_n, b_n."""
    return {"circuit": 0, "halves": tuple(range(1, n + 1)),
            "a": tuple(n + 1 + 2 * i for i in range(n)), "b": tuple(n + 2 + 2 * i for i in range(n))}


@dataclass
class ObfuscatedProgram:
    sk_u: QmifeKey = field(repr=False)
    ct_c: QmifeCiphertext = field(repr=False)
    bit_cts: tuple[tuple[QmifeCiphertext, QmifeCiphertext], ...] = field(repr=False)
    half_cts: tuple[QmifeCiphertext, ...] = field(repr=False)
    register: Register = field(repr=False)
    free_halves: tuple[str, ...]
    n: int
    cls: CircuitClass
    used: bool = False

    def counts(self) -> dict[str, int]:
        return {"bit_ciphertexts": 2 * len(self.bit_cts), "teleport_slots": len(self.half_cts),
                "circuit_ciphertexts": 1, "arity": self.sk_u.arity}

    def size_bits(self) -> int:
        """Classical payload plus one unit per qubit of the program."""
        classical = len(self.ct_c.bits) + sum(len(c.bits) for pair in self.bit_cts for c in pair)
        return classical + 2 * self.n


def program_size_bound(length: int, n: int) -> int:
    """Size of obf(C) for an encoding of ``length`` bits on ``n`` inputs."""
    return length + 4 * n + 2 * n


def _u_function(cls: CircuitClass) -> MultiInputFn:
    u = qcircuit.universal_circuit(cls)
    slots = slot_map(cls.n_quantum)

    def run(joint: DensityMatrix, classical: Mapping[int, Bits]) -> DensityMatrix:
        key = PauliKey(tuple(classical[p][0] for p in slots["a"]),
                       tuple(classical[p][0] for p in slots["b"]))
        return qcircuit.evaluate(u, apply_pauli(joint, key), classical[slots["circuit"]])
    return run


def obf(circuit: CircuitDesc, rng: RandomSource, cls: CircuitClass | None = None) -> ObfuscatedProgram:
    n = circuit.n_quantum
    if cls is None:
        _, anc, trace, gates = circuit.lines()
        cls = CircuitClass(n, max(1, len(gates)), tuple(anc), tuple(trace))
    desc_bits = cls.encode(circuit)
    slots = slot_map(n)
    keys = qmife_setup(3 * n + 1, 2, rng)
    sk_u = qmife_keygen(keys, _u_function(cls))
    bit_positions = [p for i in range(n) for p in (slots["a"][i], slots["b"][i])]
    bit_cts = tuple((qmife_enc(keys.eks[p], (0,), rng), qmife_enc(keys.eks[p], (1,), rng))
                    for p in bit_positions)
    a_labels, b_labels = _labels("eA", n), _labels("eB", n)
    epr = make_epr(n)   # (A1, B1, A2, B2, ...)
    reg = Register(epr, [l for pair in zip(a_labels, b_labels) for l in pair])
    half_cts = tuple(qmife_enc_register(keys.eks[slots["halves"][i]], reg, [a_labels[i]], rng)
                     for i in range(n))
    ct_c = qmife_enc(keys.eks[slots["circuit"]], desc_bits, rng)
    return ObfuscatedProgram(sk_u, ct_c, bit_cts, half_cts, reg, tuple(b_labels), n, cls)


def _select(prog: ObfuscatedProgram, key: PauliKey) -> list[QmifeCiphertext]:
    cts: list[QmifeCiphertext] = [prog.ct_c, *prog.half_cts]
    for i in range(prog.n):
        cts.append(prog.bit_cts[2 * i][key.a[i]])
        cts.append(prog.bit_cts[2 * i + 1][key.b[i]])
    return cts


def _consume(prog: ObfuscatedProgram) -> None:
    if prog.used:
        raise KeyReuseError("obfuscated program already evaluated; it supports a single use")
    prog.used = True


def eval_program(prog: ObfuscatedProgram, rho_x: DensityMatrix, rng: RandomSource) -> DensityMatrix:
    """Teleport rho_x into the encrypted halves and decrypt with sk_U."""
    if rho_x.n != prog.n:
        raise ShapeError(f"program takes {prog.n} qubits, got {rho_x.n}")
    _consume(prog)
    reg = prog.register
    x_labels = _labels("x", prog.n)
    reg.attach(rho_x, x_labels)
    key, post = teleport(reg.state, reg.wires(x_labels), reg.wires(prog.free_halves), rng)
    gone = set(x_labels) | set(prog.free_halves)
    reg.state, reg.labels = post, [l for l in reg.labels if l not in gone]
    return qmife_dec(prog.sk_u, _select(prog, key))


def eval_branches(prog: ObfuscatedProgram, rho_x: DensityMatrix) -> list[tuple[PauliKey, float, DensityMatrix]]:
    """Eval on every Bell outcome (the program is consumed once)."""
    if rho_x.n != prog.n:
        raise ShapeError(f"program takes {prog.n} qubits, got {rho_x.n}")
    _consume(prog)
    reg = prog.register
    x_labels = _labels("x", prog.n)
    joint = tensor(reg.state, rho_x)
    labels = reg.labels + x_labels
    wires = lambda labs: [labels.index(l) for l in labs]
    gone = set(x_labels) | set(prog.free_halves)
    rest = [l for l in labels if l not in gone]
    out = []
    for key, p, post in teleport_all(joint, wires(x_labels), wires(prog.free_halves)):
        if post is None:
            continue
        branch = Register(post, rest)
        cts = [prog.ct_c]
        cts += [QmifeCiphertext(c.slot, c.handle, branch, c.labels) for c in prog.half_cts]
        for i in range(prog.n):
            cts.append(prog.bit_cts[2 * i][key.a[i]])
            cts.append(prog.bit_cts[2 * i + 1][key.b[i]])
        out.append((key, p, qmife_dec(prog.sk_u, cts)))
    return out
