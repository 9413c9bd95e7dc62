"""Decomposable randomized encoding of Clifford circuits (a toy quantum garbling).

The construction keeps a secret Pauli frame.  Each quantum input is
teleported into the offline register; the Bell outcome is the true Pauli key
of that line and the online piece publishes it XOR a secret mask ``m0``.
Ancilla lines start as |0> under a random Pauli.  The decoder applies the
gates itself and tracks the *masked* key ``k ^ m``:

* an uncontrolled Clifford maps both key and mask linearly, so no data is
  needed;
* a classically controlled slot refreshes the mask on its wires.  The table
  holds two rows ``M_{G^v}(m_prev) ^ m_next`` (v = fire / no fire), each
  encrypted under a one-time pad that only the matching classical input
  values release.

The final record reveals the mask on the kept lines only, so the decoder can
undo the frame there, while traced-out lines stay uniformly keyed.  The
resulting view depends only on the output, the classical input bits and the
circuit, which is what :func:`simulate` uses.

Row pads for a conjunctive control "bits s equal v_s": every bit s releases
``K_s`` when its literal holds and ``R`` otherwise.  The fire row is padded
with the XOR of all ``K_s`` and the no-fire row with ``R``; whichever row is
not selected keeps at least one unreleased uniform pad.
"""

from __future__ import annotations

import inspect
from dataclasses import dataclass, field
from typing import Sequence

from .errors import CorruptBundle, ShapeError, UnsupportedError
from .qcircuit import CircuitDesc, Gate, conjugate_key
from .qcore import (Bits, DensityMatrix, GATE_MATRICES, PauliKey, RandomSource, apply_gate,
                    apply_pauli, apply_unitary, as_bits, make_epr, partial_trace, permute,
                    teleport, tensor, xor_bits)

CHECK_BITS = 4   # zero bits appended to each table row to detect corruption


# ---------------------------------------------------------------- randomness

@dataclass(frozen=True)
class SlotPads:
    literal_pads: tuple[Bits, ...]   # K_s for each literal of the control, in order
    nofire_pad: Bits                 # R


@dataclass(frozen=True)
class EncodingRandomness:
    m0: PauliKey                     # initial mask on every line
    ancilla_pads: PauliKey           # random Pauli on the ancilla lines
    fresh: tuple[PauliKey, ...]      # new mask on the wires of each controlled slot
    pads: tuple[SlotPads, ...]

    @classmethod
    def sample(cls, desc: CircuitDesc, rng: RandomSource) -> "EncodingRandomness":
        n_lines, anc, _, gates = desc.lines()
        m0 = PauliKey.random(n_lines, rng)
        anc_pads = PauliKey.random(len(anc), rng)
        fresh, pads = [], []
        for g in gates:
            if not g.control:
                continue
            fresh.append(PauliKey.random(len(g.wires), rng))
            width = _row_len(g)
            lits = tuple(rng.bits(width) for _ in g.control)
            pads.append(SlotPads(lits, rng.bits(width)))
        return cls(m0, anc_pads, tuple(fresh), tuple(pads))


def _row_len(g: Gate) -> int:
    return 2 * len(g.wires) + CHECK_BITS


@dataclass(frozen=True)
class EprPool:
    """Index maps of the EPR pairs consumed by one encoding."""

    e1: tuple[tuple[int, int], ...] = ()
    e2: tuple[tuple[int, int], ...] = ()
    e3: tuple[tuple[int, int], ...] = ()

    @classmethod
    def for_circuit(cls, desc: CircuitDesc, offset: int = 0) -> "EprPool":
        n = desc.n_quantum
        e2 = tuple((offset + 2 * i, offset + 2 * i + 1) for i in range(n))
        return cls(e2=e2)

    @property
    def size(self) -> int:
        return len(self.e1) + len(self.e2) + len(self.e3)

    def disjoint(self) -> bool:
        flat = [q for part in (self.e1, self.e2, self.e3) for pair in part for q in pair]
        return len(flat) == len(set(flat))


def offline_epr_count(desc: CircuitDesc) -> int:
    """Gadget pairs used by the offline part.

    The Pauli-frame layout needs none: gates act directly on the offline
    register, so the count is 0 for every circuit (and trivially doubles for
    controlled slots).  Input teleportation uses one pair per quantum input.
    """
    _require_clifford(desc)
    return 0


# ------------------------------------------------------------------- bundle

@dataclass(frozen=True)
class TableEntry:
    slot: int                        # gate index in line order
    rows: tuple[Bits, Bits]          # (no fire, fire)


@dataclass(frozen=True)
class OfflinePart:
    register: DensityMatrix          # lines in order, then spectator qubits
    ancilla_keys: PauliKey           # masked initial keys of the ancilla lines
    table: tuple[TableEntry, ...]
    final: PauliKey                  # mask on the kept lines after the last gate


@dataclass(frozen=True)
class OnlineQuantumPiece:
    index: int
    kappa: PauliKey                  # Bell outcome XOR m0 on this input line


@dataclass(frozen=True)
class OnlineClassicalPiece:
    index: int
    value: int
    pads: tuple[tuple[int, Bits], ...]   # (table position, released pad)


@dataclass(frozen=True)
class EncodingBundle:
    circuit: CircuitDesc
    offline: OfflinePart
    online_q: tuple[OnlineQuantumPiece, ...]
    online_c: tuple[OnlineClassicalPiece, ...]
    spectators: int = 0
    manifest: tuple[dict, ...] = field(default=(), compare=False)

    def classical_label(self) -> Bits:
        """Every classical value of the bundle, flattened in a fixed order."""
        out: list[int] = list(self.offline.ancilla_keys.flat())
        for t in self.offline.table:
            out += list(t.rows[0]) + list(t.rows[1])
        out += list(self.offline.final.flat())
        for p in self.online_q:
            out += list(p.kappa.flat())
        for c in self.online_c:
            out.append(c.value)
            for _, pad in c.pads:
                out += list(pad)
        return tuple(out)

    @property
    def register(self) -> DensityMatrix:
        return self.offline.register


def _require_clifford(desc: CircuitDesc) -> None:
    if not desc.clifford_only:
        raise UnsupportedError("garbling supports Clifford circuits only (T gate present)")


def _controlled_slots(gates: Sequence[Gate]) -> list[int]:
    return [j for j, g in enumerate(gates) if g.control]


# ------------------------------------------------------------ encode pieces

def online_quantum_piece(joint: DensityMatrix, x_wire: int, pair: tuple[int, int],
                         m0_i: PauliKey, rng: RandomSource) -> tuple[OnlineQuantumPiece, DensityMatrix]:
    """Teleport input qubit ``x_wire`` through ``pair``; publish the masked outcome.

    Only ``x_wire`` and the first half of ``pair`` are measured.  Returns
    the piece (index filled by the caller) and the post-measurement state
    with both measured qubits removed.
    """
    key, post = teleport(joint, [x_wire], [pair[0]], rng)
    return OnlineQuantumPiece(-1, key ^ m0_i), post


def online_classical_piece(index: int, value: int, desc: CircuitDesc,
                           r: EncodingRandomness) -> OnlineClassicalPiece:
    """Release, for each controlled slot reading bit ``index``, the pad selected by ``value``."""
    _, _, _, gates = desc.lines()
    pads = []
    for pos, j in enumerate(_controlled_slots(gates)):
        for li, (s, want) in enumerate(gates[j].control):
            if s == index:
                sp = r.pads[pos]
                pads.append((pos, sp.literal_pads[li] if value == want else sp.nofire_pad))
    return OnlineClassicalPiece(index, value, tuple(pads))


def offline_table(desc: CircuitDesc, r: EncodingRandomness) -> tuple[tuple[TableEntry, ...], PauliKey]:
    """Encrypted mask-update rows and the final unmask record."""
    n_lines, _, trace, gates = desc.lines()
    ma, mb = list(r.m0.a), list(r.m0.b)
    table = []
    pos = 0
    for j, g in enumerate(gates):
        if not g.control:
            conjugate_key(g.kind, g.wires, ma, mb)
            continue
        fresh, sp = r.fresh[pos], r.pads[pos]
        rows = []
        for v in (0, 1):
            ua, ub = list(ma), list(mb)
            if v:
                conjugate_key(g.kind, g.wires, ua, ub)
            delta = []
            for i, q in enumerate(g.wires):
                delta += [ua[q] ^ fresh.a[i], ub[q] ^ fresh.b[i]]
            plain = tuple(delta) + (0,) * CHECK_BITS
            pad = sp.nofire_pad if v == 0 else _xor_all(sp.literal_pads, len(plain))
            rows.append(xor_bits(plain, pad))
        for i, q in enumerate(g.wires):
            ma[q], mb[q] = fresh.a[i], fresh.b[i]
        table.append(TableEntry(j, (rows[0], rows[1])))
        pos += 1
    kept = [q for q in range(n_lines) if q not in trace]
    final = PauliKey(tuple(ma[q] for q in kept), tuple(mb[q] for q in kept))
    return tuple(table), final


def _xor_all(pads: Sequence[Bits], width: int) -> Bits:
    acc = (0,) * width
    for p in pads:
        acc = xor_bits(acc, p)
    return acc


def _manifest_entry(piece: str, fn, qubits: Sequence[str], randomness: Sequence[str]) -> dict:
    return {"piece": piece, "function": fn.__name__,
            "parameters": tuple(inspect.signature(fn).parameters),
            "qubits": tuple(qubits), "randomness": tuple(randomness)}


def _input_lines(desc: CircuitDesc) -> list[int]:
    n_lines, anc, _, _ = desc.lines()
    return [q for q in range(n_lines) if q not in anc]


def teleport_inputs(desc: CircuitDesc, rho_x: DensityMatrix, spectators: int, r: EncodingRandomness,
                    rng: RandomSource) -> tuple[tuple[OnlineQuantumPiece, ...], DensityMatrix]:
    """Teleport every quantum input through its own fresh EPR pair.

    Returns the online quantum pieces and the leftover state: spectators
    followed by the EPR second halves in input order.
    """
    n = desc.n_quantum
    if rho_x.n != n + spectators:
        raise ShapeError(f"expected {n} input qubits plus {spectators} spectators, got {rho_x.n}")
    lines = _input_lines(desc)
    joint = tensor(rho_x, make_epr(n)) if n else rho_x
    pieces = []
    for i in range(n):
        # unmeasured so far: x_i..x_{n-1}, spectators, B_0..B_{i-1}, then pairs i..n-1
        pair_start = (n - i) + spectators + i
        piece, joint = online_quantum_piece(joint, 0, (pair_start, pair_start + 1),
                                            r.m0.restrict([lines[i]]), rng)
        pieces.append(OnlineQuantumPiece(i, piece.kappa))
    return tuple(pieces), joint


# -------------------------------------------------------------------- encode

def encode(desc: CircuitDesc, rho_x: DensityMatrix, c_bits: Sequence[int], rng: RandomSource,
           r: EncodingRandomness | None = None, spectators: int = 0) -> EncodingBundle:
    """Encode ``desc`` on quantum input ``rho_x`` and classical input ``c_bits``.

    ``rho_x`` may carry ``spectators`` trailing qubits (a reference system);
    they pass through untouched and end up after the register lines.
    Randomness ``r`` is sampled from ``rng`` when omitted; Bell outcomes
    always come from ``rng``.
    """
    _require_clifford(desc)
    bits = as_bits(c_bits)
    if len(bits) != desc.n_classical:
        raise ShapeError(f"expected {desc.n_classical} classical bits, got {len(bits)}")
    if r is None:
        r = EncodingRandomness.sample(desc, rng)
    pieces, joint = teleport_inputs(desc, rho_x, spectators, r, rng)
    manifest = [_manifest_entry(f"online_q[{i}]", online_quantum_piece, [f"x[{i}]", f"e2[{i}].A"],
                                [f"m0[{q}]"]) for i, q in enumerate(_input_lines(desc))]
    online_c = []
    for s, v in enumerate(bits):
        online_c.append(online_classical_piece(s, v, desc, r))
        manifest.append(_manifest_entry(f"online_c[{s}]", online_classical_piece,
                                        [], ["row pads"]))
    offline = offline_part(desc, joint, spectators, r)
    manifest.append(_manifest_entry("offline", offline_part, ["e2.B", "ancillas"],
                                    ["m0", "ancilla pads", "fresh masks", "row pads"]))
    return EncodingBundle(desc, offline, tuple(pieces), tuple(online_c), spectators, tuple(manifest))


def check_manifest(bundle: EncodingBundle) -> list[str]:
    """Problems with the dependency manifest; empty means every piece is decomposable.

    Quantum piece i may touch only x[i] and the A half of its own pair and
    use only the mask m0 of its line; classical pieces touch no qubits.
    """
    problems = []
    lines = _input_lines(bundle.circuit)
    seen_q, seen_c = 0, 0
    for e in bundle.manifest:
        name = e["piece"]
        if name.startswith("online_q["):
            i = int(name[9:-1])
            if e["function"] != "online_quantum_piece":
                problems.append(f"{name}: built by {e['function']}")
            if set(e["qubits"]) != {f"x[{i}]", f"e2[{i}].A"}:
                problems.append(f"{name}: touches {e['qubits']}")
            if tuple(e["randomness"]) != (f"m0[{lines[i]}]",):
                problems.append(f"{name}: uses randomness {e['randomness']}")
            seen_q += 1
        elif name.startswith("online_c["):
            if e["function"] != "online_classical_piece" or e["qubits"]:
                problems.append(f"{name}: not a classical computation")
            seen_c += 1
        elif name == "offline":
            if any(q.startswith("x[") for q in e["qubits"]):
                problems.append("offline part touches an input qubit")
        else:
            problems.append(f"unknown piece {name}")
    if seen_q != bundle.circuit.n_quantum or seen_c != bundle.circuit.n_classical:
        problems.append("piece counts do not match the topology")
    return problems


def offline_part(desc: CircuitDesc, halves: DensityMatrix, spectators: int,
                 r: EncodingRandomness) -> OfflinePart:
    """Assemble the register from the EPR second halves and padded ancillas.

    ``halves`` holds the spectators followed by one EPR second half per
    quantum input (in input order).
    """
    n_lines, anc, _, _ = desc.lines()
    n = desc.n_quantum
    anc_state = DensityMatrix.zero(len(anc))
    if anc:
        anc_state = apply_pauli(anc_state, r.ancilla_pads)
    full = tensor(halves, anc_state)       # spectators, B_0.., ancillas
    # current positions: spectators 0..s-1, inputs s..s+n-1, ancillas after
    input_lines = [q for q in range(n_lines) if q not in anc]
    src_of_line = {}
    for i, q in enumerate(input_lines):
        src_of_line[q] = spectators + i
    for i, q in enumerate(anc):
        src_of_line[q] = spectators + n + i
    order = [src_of_line[q] for q in range(n_lines)] + list(range(spectators))
    register = permute(full, order)
    table, final = offline_table(desc, r)
    anc_keys = r.ancilla_pads ^ r.m0.restrict(list(anc)) if anc else PauliKey.zero(0)
    return OfflinePart(register, anc_keys, table, final)


# -------------------------------------------------------------------- decode

def decode(bundle: EncodingBundle) -> DensityMatrix:
    """Evaluate the encoded circuit; the result holds kept lines then spectators."""
    desc = bundle.circuit
    n_lines, anc, trace, gates = desc.lines()
    bits = _bits_from(bundle)
    ka, kb = _masked_initial_key(bundle)
    reg = bundle.offline.register
    released = _released_pads(bundle)
    ctrl = _controlled_slots(gates)
    if len(bundle.offline.table) != len(ctrl):
        raise CorruptBundle("table size does not match the circuit")
    for pos, j in enumerate(ctrl):
        if bundle.offline.table[pos].slot != j:
            raise CorruptBundle(f"table entry {pos} refers to slot {bundle.offline.table[pos].slot}")
    pos = 0
    for j, g in enumerate(gates):
        fire = g.fires(bits)
        if fire:
            reg = apply_gate(reg, g.kind, g.wires)
            conjugate_key(g.kind, g.wires, ka, kb)
        if not g.control:
            continue
        delta = _open_row(bundle.offline.table[pos], g, fire, released.get(pos, {}), bits, pos)
        for i, q in enumerate(g.wires):
            ka[q] ^= delta[2 * i]
            kb[q] ^= delta[2 * i + 1]
        pos += 1
    kept = [q for q in range(n_lines) if q not in trace]
    fin = bundle.offline.final
    if fin.n != len(kept):
        raise CorruptBundle("final record has the wrong length")
    corr = PauliKey(tuple(ka[q] ^ fin.a[i] for i, q in enumerate(kept)),
                    tuple(kb[q] ^ fin.b[i] for i, q in enumerate(kept)))
    reg = apply_pauli(reg, corr, kept)
    return partial_trace(reg, trace)


def _bits_from(bundle: EncodingBundle) -> Bits:
    pieces = sorted(bundle.online_c, key=lambda p: p.index)
    if [p.index for p in pieces] != list(range(bundle.circuit.n_classical)):
        raise CorruptBundle("classical pieces do not cover the classical inputs")
    return tuple(p.value for p in pieces)


def _masked_initial_key(bundle: EncodingBundle) -> tuple[list[int], list[int]]:
    n_lines, anc, _, _ = bundle.circuit.lines()
    ka, kb = [0] * n_lines, [0] * n_lines
    input_lines = [q for q in range(n_lines) if q not in anc]
    if len(bundle.online_q) != len(input_lines):
        raise CorruptBundle("quantum pieces do not cover the quantum inputs")
    for piece in bundle.online_q:
        q = input_lines[piece.index]
        ka[q], kb[q] = piece.kappa.a[0], piece.kappa.b[0]
    for i, q in enumerate(anc):
        ka[q], kb[q] = bundle.offline.ancilla_keys.a[i], bundle.offline.ancilla_keys.b[i]
    return ka, kb


def _released_pads(bundle: EncodingBundle) -> dict[int, dict[int, Bits]]:
    out: dict[int, dict[int, Bits]] = {}
    for piece in bundle.online_c:
        for pos, pad in piece.pads:
            out.setdefault(pos, {})[piece.index] = pad
    return out


def _open_row(entry: TableEntry, g: Gate, fire: bool, pads: dict[int, Bits], bits: Bits, pos: int) -> Bits:
    width = _row_len(g)
    missing = [s for s, _ in g.control if s not in pads]
    if missing:
        raise CorruptBundle(f"no pad released for slot {pos} by classical inputs {missing}")
    if fire:
        pad = _xor_all([pads[s] for s, _ in g.control], width)
    else:
        nofire = {pads[s] for s, want in g.control if bits[s] != want}
        if len(nofire) != 1:
            raise CorruptBundle(f"inconsistent no-fire pads for slot {pos}")
        pad = nofire.pop()
    row = entry.rows[1 if fire else 0]
    if len(row) != width or len(pad) != width:
        raise CorruptBundle(f"table row for slot {pos} has the wrong width")
    plain = xor_bits(row, pad)
    if any(plain[-CHECK_BITS:]):
        raise CorruptBundle(f"table row for slot {pos} fails the pad check")
    return plain[:-CHECK_BITS]


# ----------------------------------------------------------------- simulate

def simulate(f_out: DensityMatrix, desc: CircuitDesc, leaked_bits: Sequence[int], rng: RandomSource,
             spectators: int = 0) -> EncodingBundle:
    """Bundle distributed like :func:`encode`, built from the output only.

    Uses the circuit (public), the classical input bits and ``f_out`` (kept
    lines followed by ``spectators`` reference qubits).
    """
    _require_clifford(desc)
    bits = as_bits(leaked_bits)
    n_lines, anc, trace, gates = desc.lines()
    kept = [q for q in range(n_lines) if q not in trace]
    if f_out.n != len(kept) + spectators:
        raise ShapeError(f"output should have {len(kept) + spectators} qubits, got {f_out.n}")
    if len(bits) != desc.n_classical:
        raise ShapeError("leaked bits do not match the classical inputs")
    input_lines = [q for q in range(n_lines) if q not in anc]
    init = PauliKey.random(n_lines, rng)
    online_q = tuple(OnlineQuantumPiece(i, init.restrict([q])) for i, q in enumerate(input_lines))
    anc_keys = init.restrict(list(anc)) if anc else PauliKey.zero(0)
    ka, kb = list(init.a), list(init.b)
    ctrl = _controlled_slots(gates)
    table = []
    released: dict[int, list[tuple[int, Bits]]] = {s: [] for s in range(len(bits))}
    pos = 0
    for j, g in enumerate(gates):
        fire = g.fires(bits)
        if fire:
            conjugate_key(g.kind, g.wires, ka, kb)
        if not g.control:
            continue
        width = _row_len(g)
        delta = rng.bits(2 * len(g.wires))
        lit = [rng.bits(width) for _ in g.control]
        nofire = rng.bits(width)
        for li, (s, want) in enumerate(g.control):
            released[s].append((pos, lit[li] if bits[s] == want else nofire))
        opened = xor_bits(delta + (0,) * CHECK_BITS, _xor_all(lit, width) if fire else nofire)
        other = rng.bits(width)
        table.append(TableEntry(j, (other, opened) if fire else (opened, other)))
        for i, q in enumerate(g.wires):
            ka[q] ^= delta[2 * i]
            kb[q] ^= delta[2 * i + 1]
        pos += 1
    assert pos == len(ctrl)
    final = PauliKey.random(len(kept), rng)
    key = PauliKey(tuple(ka[q] ^ final.a[i] for i, q in enumerate(kept)),
                   tuple(kb[q] ^ final.b[i] for i, q in enumerate(kept)))
    # kept lines carry the padded output, traced lines are maximally mixed
    padded = apply_pauli(f_out, key, list(range(len(kept))))
    full = tensor(padded, DensityMatrix.maximally_mixed(len(trace))) if trace else padded
    # positions: kept lines, spectators, traced lines -> lines in order, spectators
    src = {q: i for i, q in enumerate(kept)}
    for i, q in enumerate(trace):
        src[q] = len(kept) + spectators + i
    order = [src[q] for q in range(n_lines)] + [len(kept) + i for i in range(spectators)]
    reg = permute(full, order)
    for g in reversed(gates):
        if g.fires(bits):
            reg = apply_unitary(reg, GATE_MATRICES[g.kind].conj().T, g.wires)
    online_c = tuple(OnlineClassicalPiece(s, v, tuple(released[s])) for s, v in enumerate(bits))
    offline = OfflinePart(reg, anc_keys, tuple(table), final)
    return EncodingBundle(desc, offline, online_q, online_c, spectators)


def encoding_size(desc: CircuitDesc) -> dict[str, int]:
    """Coarse size accounting of a bundle: qubits and classical bits."""
    n_lines, _, _, gates = desc.lines()
    table_bits = sum(2 * _row_len(g) for g in gates if g.control)
    pad_bits = sum(_row_len(g) * len(g.control) for g in gates if g.control)
    return {"register_qubits": n_lines, "epr_pairs": desc.n_quantum + offline_epr_count(desc),
            "table_bits": table_bits, "online_pad_bits": pad_bits}


# ------------------------------------------------------------ serialisation

def randomness_to_bits(r: EncodingRandomness) -> Bits:
    out = list(r.m0.flat()) + list(r.ancilla_pads.flat())
    for fresh, sp in zip(r.fresh, r.pads):
        out += list(fresh.flat())
        for p in sp.literal_pads:
            out += list(p)
        out += list(sp.nofire_pad)
    return tuple(out)


def randomness_from_bits(desc: CircuitDesc, bits: Sequence[int]) -> EncodingRandomness:
    """Inverse of :func:`randomness_to_bits` for the layout of ``desc``."""
    src = _Reader(as_bits(bits))
    n_lines, anc, _, gates = desc.lines()
    m0 = PauliKey.from_flat(src.take(2 * n_lines))
    anc_pads = PauliKey.from_flat(src.take(2 * len(anc)))
    fresh, pads = [], []
    for g in gates:
        if not g.control:
            continue
        fresh.append(PauliKey.from_flat(src.take(2 * len(g.wires))))
        width = _row_len(g)
        lits = tuple(src.take(width) for _ in g.control)
        pads.append(SlotPads(lits, src.take(width)))
    src.done()
    return EncodingRandomness(m0, anc_pads, tuple(fresh), tuple(pads))


def piece_slices(desc: CircuitDesc, index: int, value: int) -> tuple[tuple[int, int], ...]:
    """Where, inside :func:`randomness_to_bits`, the pads released by (index, value) sit.

    Gives (start, width) per released pad in piece order, so a piece can be
    cut straight out of serialised randomness.
    """
    n_lines, anc, _, gates = desc.lines()
    pos = 2 * n_lines + 2 * len(anc)
    out = []
    for j in _controlled_slots(gates):
        g = gates[j]
        w = _row_len(g)
        pos += 2 * len(g.wires)
        lit_start = pos
        nofire = pos + w * len(g.control)
        for li, (s, want) in enumerate(g.control):
            if s == index:
                out.append((lit_start + li * w, w) if value == want else (nofire, w))
        pos = nofire + w
    return tuple(out)


def classical_piece_layout(desc: CircuitDesc, index: int) -> tuple[tuple[int, int], ...]:
    """(table position, pad width) of each pad released by classical input ``index``."""
    _, _, _, gates = desc.lines()
    out = []
    for pos, j in enumerate(_controlled_slots(gates)):
        for s, _ in gates[j].control:
            if s == index:
                out.append((pos, _row_len(gates[j])))
    return tuple(out)


def classical_piece_len(desc: CircuitDesc, index: int) -> int:
    return 1 + sum(w for _, w in classical_piece_layout(desc, index))


def classical_piece_to_bits(piece: OnlineClassicalPiece) -> Bits:
    out = [piece.value]
    for _, pad in piece.pads:
        out += list(pad)
    return tuple(out)


def classical_piece_from_bits(desc: CircuitDesc, index: int, bits: Sequence[int]) -> OnlineClassicalPiece:
    src = _Reader(as_bits(bits))
    value = src.take(1)[0]
    pads = tuple((pos, src.take(w)) for pos, w in classical_piece_layout(desc, index))
    src.done()
    return OnlineClassicalPiece(index, value, pads)


def offline_classical_len(desc: CircuitDesc) -> int:
    n_lines, anc, trace, gates = desc.lines()
    table = sum(2 * _row_len(g) for g in gates if g.control)
    return 2 * len(anc) + table + 2 * (n_lines - len(trace))


def offline_classical_bits(off: OfflinePart) -> Bits:
    out = list(off.ancilla_keys.flat())
    for t in off.table:
        out += list(t.rows[0]) + list(t.rows[1])
    return tuple(out + list(off.final.flat()))


def offline_from_parts(desc: CircuitDesc, register: DensityMatrix, bits: Sequence[int]) -> OfflinePart:
    """Rebuild the offline part from its register and classical bits."""
    src = _Reader(as_bits(bits))
    n_lines, anc, trace, gates = desc.lines()
    anc_keys = PauliKey.from_flat(src.take(2 * len(anc)))
    table = []
    for j in _controlled_slots(gates):
        w = _row_len(gates[j])
        table.append(TableEntry(j, (src.take(w), src.take(w))))
    final = PauliKey.from_flat(src.take(2 * (n_lines - len(trace))))
    src.done()
    return OfflinePart(register, anc_keys, tuple(table), final)


class _Reader:
    def __init__(self, bits: Bits):
        self.bits, self.pos = bits, 0

    def take(self, k: int) -> Bits:
        if self.pos + k > len(self.bits):
            raise CorruptBundle(f"truncated bit string at offset {self.pos}")
        out = self.bits[self.pos:self.pos + k]
        self.pos += k
        return out

    def done(self) -> None:
        if self.pos != len(self.bits):
            raise CorruptBundle(f"{len(self.bits) - self.pos} unexpected trailing bits")
