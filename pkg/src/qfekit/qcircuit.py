"""Classical descriptions of quantum circuits.

A :class:`Topology` is the placeholder graph: wires, quantum input terminals,
ancilla wires (initialised to |0>), ordered outputs, a trace-out subset and
gate placeholders with matching in/out wire lists.  A :class:`CircuitDesc`
assigns a gate kind and an optional classical control to every placeholder.

Most code works with the equivalent *line form*: lines 0..N-1, each gate
acting on line indices in list order.  :meth:`CircuitDesc.from_lines` builds
the graph form from it and :meth:`CircuitDesc.lines` linearises any valid
graph back.

Bit encoding (all integers big-endian)::

    header   n_lines:4  n_classical:4  ancilla_mask:N  trace_mask:N  n_records:8
    record   opcode:3  wire1:w  wire2:w  control:cw  has_control:1

with ``w = ceil(log2 N)`` and ``cw = ceil(log2 n_classical)`` (0 when there
is at most one line / classical input).  Opcodes: 000 identity (padding
only), 001 X, 010 Z, 011 H, 100 P, 101 T, 110 CNOT, 111 SWAP.  In canonical
form unused fields are zero and there are no identity records.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from .errors import ParseError, ShapeError, UnsupportedError
from .qcore import (Bits, DensityMatrix, GateKind, PauliKey, apply_gate, as_bits,
                    bits_to_int, gate_kind, int_to_bits, partial_trace, permute, tensor)

# a control is a conjunction of (classical input index, required value)
Control = tuple[tuple[int, int], ...]


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


@dataclass(frozen=True)
class Topology:
    wires: int
    inputs: tuple[int, ...]
    ancillas: tuple[int, ...]
    outputs: tuple[int, ...]
    trace_out: tuple[int, ...]
    inwire: tuple[tuple[int, ...], ...]
    outwire: tuple[tuple[int, ...], ...]
    n_classical: int = 0

    @property
    def n_inputs(self) -> int:
        return len(self.inputs)

    @property
    def kept_outputs(self) -> tuple[int, ...]:
        return tuple(w for w in self.outputs if w not in self.trace_out)

    @property
    def n_outputs(self) -> int:
        return len(self.kept_outputs)


@dataclass(frozen=True)
class Gate:
    kind: GateKind
    wires: tuple[int, ...]
    control: Control = ()

    def fires(self, bits: Sequence[int]) -> bool:
        return all(bits[i] == v for i, v in self.control)


@dataclass(frozen=True)
class CircuitDesc:
    topology: Topology
    kinds: tuple[GateKind, ...]
    controls: tuple[Control, ...]
    _lines: tuple = field(default=None, compare=False, repr=False)

    @property
    def clifford_only(self) -> bool:
        return all(k.clifford for k in self.kinds)

    @property
    def n_quantum(self) -> int:
        return self.topology.n_inputs

    @property
    def n_classical(self) -> int:
        return self.topology.n_classical

    # -- line form ------------------------------------------------------

    @classmethod
    def from_lines(cls, n_quantum: int, gates: Iterable, ancillas: Sequence[int] = (),
                   trace_out: Sequence[int] = (), n_classical: int = 0) -> "CircuitDesc":
        """Build a circuit on ``n_quantum + len(ancillas)`` lines.

        ``gates`` holds :class:`Gate` objects or tuples (kind, wires[, control])
        where control is None, a classical index, or a conjunction.  Lines not
        listed in ``ancillas`` carry the quantum inputs in increasing order;
        outputs are the lines in increasing order minus ``trace_out``.
        """
        n_lines = n_quantum + len(ancillas)
        gl = [_coerce_gate(g) for g in gates]
        anc = tuple(ancillas)
        ins = [q for q in range(n_lines) if q not in anc]
        current = list(range(n_lines))   # wire currently on each line
        next_wire = n_lines
        inw, outw = [], []
        for g in gl:
            for q in g.wires:
                if not 0 <= q < n_lines:
                    raise ShapeError(f"gate {g.kind.value} uses line {q} outside 0..{n_lines - 1}")
            inw.append(tuple(current[q] for q in g.wires))
            produced = []
            for q in g.wires:
                current[q] = next_wire
                produced.append(next_wire)
                next_wire += 1
            outw.append(tuple(produced))
        for q in trace_out:
            if not 0 <= q < n_lines:
                raise ShapeError(f"trace-out line {q} out of range")
        topo = Topology(
            wires=next_wire,
            inputs=tuple(ins[:n_quantum]) if len(ins) >= n_quantum else tuple(ins),
            ancillas=anc,
            outputs=tuple(current),
            trace_out=tuple(current[q] for q in sorted(set(trace_out))),
            inwire=tuple(inw),
            outwire=tuple(outw),
            n_classical=n_classical,
        )
        lines = (n_lines, tuple(anc), tuple(sorted(set(trace_out))), tuple(gl))
        return cls(topo, tuple(g.kind for g in gl), tuple(g.control for g in gl), lines)

    def lines(self) -> tuple[int, tuple[int, ...], tuple[int, ...], tuple[Gate, ...]]:
        """(n_lines, ancilla lines, trace-out lines, gates) of a valid circuit."""
        if self._lines is not None:
            return self._lines
        diags = validate(self)
        if diags:
            raise ShapeError(str(diags[0]))
        t = self.topology
        order = _topo_order(t)
        # a line is the path from a source wire to an output; trace it back
        source_of = {w: w for w in list(t.inputs) + list(t.ancillas)}
        for j in order:
            for w_in, w_out in zip(t.inwire[j], t.outwire[j]):
                source_of[w_out] = source_of[w_in]
        # lines are numbered by output position
        line_of_source = {source_of[w]: i for i, w in enumerate(t.outputs)}
        n_lines = len(t.outputs)
        input_lines = [line_of_source[w] for w in t.inputs]
        anc = tuple(sorted(line_of_source[w] for w in t.ancillas))
        if input_lines != sorted(input_lines):
            raise UnsupportedError("outputs permute the inputs; insert explicit SWAP gates")
        gates = tuple(Gate(self.kinds[j], tuple(line_of_source[source_of[w]] for w in t.inwire[j]),
                           self.controls[j]) for j in order)
        trace = tuple(sorted(t.outputs.index(w) for w in t.trace_out))
        return (n_lines, anc, trace, gates)

    def gates(self) -> tuple[Gate, ...]:
        return self.lines()[3]

    @property
    def n_lines(self) -> int:
        return self.lines()[0]

    # -- JSON ---------------------------------------------------------------

    def to_json(self) -> dict[str, Any]:
        n_lines, anc, trace, gates = self.lines()
        out = []
        for g in gates:
            if len(g.control) > 1 or (g.control and g.control[0][1] != 1):
                raise UnsupportedError("only single positive controls have a JSON form")
            out.append({"kind": g.kind.value, "wires": list(g.wires),
                        "control": g.control[0][0] if g.control else None})
        return {"quantum_inputs": self.n_quantum, "classical_inputs": self.n_classical,
                "ancillas": list(anc), "trace_out": list(trace), "gates": out}


def _coerce_gate(g) -> Gate:
    if isinstance(g, Gate):
        return g
    kind, wires, *rest = g
    ctrl = rest[0] if rest else None
    return Gate(gate_kind(kind), tuple(int(w) for w in wires), _coerce_control(ctrl))


def _coerce_control(ctrl) -> Control:
    if ctrl is None:
        return ()
    if isinstance(ctrl, int):
        return ((ctrl, 1),)
    return tuple((int(i), int(v)) for i, v in ctrl)


def _topo_order(t: Topology) -> list[int]:
    producer = {}
    for j, outs in enumerate(t.outwire):
        for w in outs:
            producer[w] = j
    deps = [{producer[w] for w in ins if w in producer} for ins in t.inwire]
    order, done = [], set()
    pending = list(range(len(t.inwire)))
    while pending:
        ready = [j for j in pending if deps[j] <= done]
        if not ready:
            raise ShapeError("placeholder graph has a cycle")
        for j in ready:
            order.append(j)
            done.add(j)
        pending = [j for j in pending if j not in done]
    return order


def circuit(n_quantum: int, gates: Iterable = (), ancillas: Sequence[int] = (),
            trace_out: Sequence[int] = (), n_classical: int = 0) -> CircuitDesc:
    """Shorthand for :meth:`CircuitDesc.from_lines`."""
    return CircuitDesc.from_lines(n_quantum, gates, ancillas, trace_out, n_classical)


def identity(n: int) -> CircuitDesc:
    return circuit(n)


# ------------------------------------------------------------- validation

def validate(desc: CircuitDesc) -> list[Diagnostic]:
    """All topology and assignment violations (empty list means valid)."""
    t = desc.topology
    diags: list[Diagnostic] = []
    nb = len(t.inwire)
    if len(t.outwire) != nb or len(desc.kinds) != nb or len(desc.controls) != nb:
        return [Diagnostic("assignment", "placeholder, kind and control lists differ in length")]
    all_wires = set(range(t.wires))
    for name, seq in (("inputs", t.inputs), ("ancillas", t.ancillas), ("outputs", t.outputs),
                      ("trace_out", t.trace_out)):
        bad = [w for w in seq if w not in all_wires]
        if bad:
            diags.append(Diagnostic("wire-range", f"{name} reference unknown wires {bad}"))
    if not set(t.trace_out) <= set(t.outputs):
        diags.append(Diagnostic("trace-out", "trace-out set is not a subset of the outputs"))
    if set(t.inputs) & set(t.ancillas):
        diags.append(Diagnostic("ancilla", "a wire is both an input and an ancilla"))
    producers: dict[int, list[str]] = {w: [] for w in all_wires}
    consumers: dict[int, list[str]] = {w: [] for w in all_wires}
    for w in t.inputs:
        if w in producers:
            producers[w].append("input")
    for w in t.ancillas:
        if w in producers:
            producers[w].append("ancilla")
    for w in t.outputs:
        if w in consumers:
            consumers[w].append("output")
    for j, (ins, outs) in enumerate(zip(t.inwire, t.outwire)):
        kind = desc.kinds[j]
        if len(ins) != len(outs):
            diags.append(Diagnostic("arity", f"placeholder {j} has {len(ins)} inwires and {len(outs)} outwires"))
            continue
        if len(ins) != kind.arity:
            diags.append(Diagnostic("arity", f"placeholder {j} is {kind.value} (arity {kind.arity}) on {len(ins)} wires"))
        if len(set(ins)) != len(ins) or len(set(outs)) != len(outs):
            diags.append(Diagnostic("arity", f"placeholder {j} repeats a wire"))
        for w in ins:
            if w in consumers:
                consumers[w].append(f"gate {j}")
        for w in outs:
            if w in producers:
                producers[w].append(f"gate {j}")
        for idx, val in desc.controls[j]:
            if not 0 <= idx < t.n_classical or val not in (0, 1):
                diags.append(Diagnostic("control", f"placeholder {j} controlled by invalid classical input {idx}"))
    for w in sorted(all_wires):
        if len(producers[w]) != 1:
            diags.append(Diagnostic("wire-source", f"wire {w} has {len(producers[w])} sources"))
        if len(consumers[w]) > 1:
            diags.append(Diagnostic("wire-sink", f"wire {w} is consumed {len(consumers[w])} times"))
        if not consumers[w] and producers[w]:
            diags.append(Diagnostic("dangling", f"wire {w} is neither consumed nor an output"))
    try:
        _topo_order(t)
    except ShapeError:
        diags.append(Diagnostic("dag", "placeholder graph has a cycle"))
    return diags


def check(desc: CircuitDesc) -> None:
    diags = validate(desc)
    if diags:
        raise ShapeError("; ".join(map(str, diags)))


# -------------------------------------------------------------- evaluation

def prepare_lines(desc: CircuitDesc, rho: DensityMatrix) -> DensityMatrix:
    """Place ``rho`` on the input lines and |0> on the ancilla lines."""
    n_lines, anc, _, _ = desc.lines()
    if rho.n != desc.n_quantum:
        raise ShapeError(f"circuit takes {desc.n_quantum} qubits, input has {rho.n}")
    if not anc:
        return rho
    full = tensor(rho, DensityMatrix.zero(len(anc)))
    ins = [q for q in range(n_lines) if q not in anc]
    src = ins + list(anc)   # current position p holds line src[p]
    order = [src.index(q) for q in range(n_lines)]
    return permute(full, order)


def evaluate(desc: CircuitDesc, rho: DensityMatrix, classical_bits: Sequence[int] = ()) -> DensityMatrix:
    """Apply the circuit: add ancillas, run gates in order, trace out."""
    bits = as_bits(classical_bits)
    if len(bits) != desc.n_classical:
        raise ShapeError(f"circuit takes {desc.n_classical} classical bits, got {len(bits)}")
    _, _, trace, gates = desc.lines()
    cur = prepare_lines(desc, rho)
    for g in gates:
        if g.fires(bits):
            cur = apply_gate(cur, g.kind, g.wires)
    return partial_trace(cur, trace)


def channel(desc: CircuitDesc, classical_bits: Sequence[int] = ()):
    return lambda rho: evaluate(desc, rho, classical_bits)


# ----------------------------------------------------------- Pauli updates

def conjugate_key(kind: GateKind, wires: Sequence[int], a: list[int], b: list[int]) -> None:
    """In place: the Pauli X^a Z^b conjugated by the gate (up to phase)."""
    if kind in (GateKind.X, GateKind.Z):
        return
    if kind is GateKind.H:
        q, = wires
        a[q], b[q] = b[q], a[q]
    elif kind is GateKind.P:
        q, = wires
        b[q] ^= a[q]
    elif kind is GateKind.CNOT:
        c, t = wires
        a[t] ^= a[c]
        b[c] ^= b[t]
    elif kind is GateKind.SWAP:
        p, q = wires
        a[p], a[q] = a[q], a[p]
        b[p], b[q] = b[q], b[p]
    else:
        raise UnsupportedError(f"{kind.value} does not normalise the Pauli group")


def pauli_update(desc: CircuitDesc, key_in: PauliKey, classical_bits: Sequence[int] = ()) -> PauliKey:
    """Output key k' with C(P_k rho P_k) = P_k' C(rho) P_k' on the kept outputs."""
    if not desc.clifford_only:
        raise UnsupportedError("Pauli update needs a Clifford-only circuit")
    if key_in.n != desc.n_quantum:
        raise ShapeError("key length differs from the number of quantum inputs")
    bits = as_bits(classical_bits)
    n_lines, anc, trace, gates = desc.lines()
    a = [0] * n_lines
    b = [0] * n_lines
    ins = [q for q in range(n_lines) if q not in anc]
    for i, q in enumerate(ins):
        a[q], b[q] = key_in.a[i], key_in.b[i]
    for g in gates:
        if g.fires(bits):
            conjugate_key(g.kind, g.wires, a, b)
    kept = [q for q in range(n_lines) if q not in trace]
    return PauliKey(tuple(a[q] for q in kept), tuple(b[q] for q in kept))


# ------------------------------------------------------------- bit encoding

OPCODES: dict[GateKind | None, int] = {
    None: 0, GateKind.X: 1, GateKind.Z: 2, GateKind.H: 3, GateKind.P: 4,
    GateKind.T: 5, GateKind.CNOT: 6, GateKind.SWAP: 7,
}
KIND_OF = {v: k for k, v in OPCODES.items()}
HEADER_FIXED = 4 + 4 + 8


def _width(count: int) -> int:
    return 0 if count <= 1 else math.ceil(math.log2(count))


@dataclass(frozen=True)
class EncodingLayout:
    n_lines: int
    n_classical: int

    @property
    def wire_bits(self) -> int:
        return _width(self.n_lines)

    @property
    def control_bits(self) -> int:
        return _width(self.n_classical)

    @property
    def header_len(self) -> int:
        return HEADER_FIXED + 2 * self.n_lines

    @property
    def record_len(self) -> int:
        return 3 + 2 * self.wire_bits + self.control_bits + 1

    def length(self, records: int) -> int:
        return self.header_len + records * self.record_len

    def record_offset(self, k: int) -> int:
        return self.header_len + k * self.record_len

    def field_offsets(self, k: int) -> dict[str, tuple[int, int]]:
        """Bit ranges (start, width) of each field of record ``k``."""
        o = self.record_offset(k)
        w, cw = self.wire_bits, self.control_bits
        return {"opcode": (o, 3), "wire1": (o + 3, w), "wire2": (o + 3 + w, w),
                "control": (o + 3 + 2 * w, cw), "flag": (o + 3 + 2 * w + cw, 1)}


@dataclass(frozen=True)
class CircuitEncoding:
    bits: Bits

    def __len__(self) -> int:
        return len(self.bits)


def encode_circuit(desc: CircuitDesc, pad_to: int | None = None) -> CircuitEncoding:
    """Fixed-width encoding; ``pad_to`` appends identity records up to that count."""
    n_lines, anc, trace, gates = desc.lines()
    if n_lines >= 16 or desc.n_classical >= 16:
        raise UnsupportedError("encoding supports at most 15 lines and 15 classical inputs")
    lay = EncodingLayout(n_lines, desc.n_classical)
    count = len(gates) if pad_to is None else pad_to
    if count < len(gates) or count >= 256:
        raise UnsupportedError(f"cannot encode {len(gates)} gates in {count} records")
    out = list(int_to_bits(n_lines, 4)) + list(int_to_bits(desc.n_classical, 4))
    out += [1 if q in anc else 0 for q in range(n_lines)]
    out += [1 if q in trace else 0 for q in range(n_lines)]
    out += list(int_to_bits(count, 8))
    w, cw = lay.wire_bits, lay.control_bits
    for g in gates:
        if len(g.control) > 1 or (g.control and g.control[0][1] != 1):
            raise UnsupportedError("conjunctive or negated controls are not encodable")
        w1 = g.wires[0]
        w2 = g.wires[1] if len(g.wires) > 1 else 0
        ctrl = g.control[0][0] if g.control else 0
        out += list(int_to_bits(OPCODES[g.kind], 3)) + list(int_to_bits(w1, w))
        out += list(int_to_bits(w2, w)) + list(int_to_bits(ctrl, cw)) + [1 if g.control else 0]
    out += [0] * (lay.record_len * (count - len(gates)))
    return CircuitEncoding(tuple(out))


def decode_circuit(bits: Sequence[int] | CircuitEncoding) -> CircuitDesc:
    if isinstance(bits, CircuitEncoding):
        bits = bits.bits
    try:
        bits = as_bits(bits)
    except ValueError as exc:
        raise ParseError(str(exc), 0) from None
    pos = 0

    def take(k: int, what: str) -> int:
        nonlocal pos
        if pos + k > len(bits):
            raise ParseError(f"truncated while reading {what}", pos)
        v = bits_to_int(bits[pos:pos + k])
        pos += k
        return v

    n_lines = take(4, "line count")
    n_classical = take(4, "classical input count")
    anc_mask = [take(1, "ancilla mask") for _ in range(n_lines)]
    trace_mask = [take(1, "trace-out mask") for _ in range(n_lines)]
    count = take(8, "record count")
    lay = EncodingLayout(n_lines, n_classical)
    gates = []
    for k in range(count):
        start = pos
        op = take(3, f"opcode of record {k}")
        w1 = take(lay.wire_bits, f"wire1 of record {k}")
        w2 = take(lay.wire_bits, f"wire2 of record {k}")
        ctrl = take(lay.control_bits, f"control of record {k}")
        flag = take(1, f"control flag of record {k}")
        kind = KIND_OF[op]
        if kind is None:
            if w1 or w2 or ctrl or flag:
                raise ParseError("identity record with non-zero fields", start)
            continue
        if w1 >= n_lines or (kind.arity == 2 and (w2 >= n_lines or w2 == w1)):
            raise ParseError(f"invalid wire index in record {k}", start)
        if kind.arity == 1 and w2:
            raise ParseError(f"non-canonical wire2 field in record {k}", start)
        if flag and ctrl >= n_classical:
            raise ParseError(f"control index {ctrl} out of range in record {k}", start)
        if not flag and ctrl:
            raise ParseError(f"non-canonical control field in record {k}", start)
        wires = (w1,) if kind.arity == 1 else (w1, w2)
        gates.append(Gate(kind, wires, ((ctrl, 1),) if flag else ()))
    if pos != len(bits):
        raise ParseError("trailing bits after the last record", pos)
    anc = [q for q in range(n_lines) if anc_mask[q]]
    trace = [q for q in range(n_lines) if trace_mask[q]]
    return CircuitDesc.from_lines(n_lines - len(anc), gates, anc, trace, n_classical)


# -------------------------------------------------------- universal circuit

@dataclass(frozen=True)
class CircuitClass:
    """Circuits sharing a topology frame: inputs, ancillas, trace-out, gate bound."""

    n_quantum: int
    max_gates: int
    ancillas: tuple[int, ...] = ()
    trace_out: tuple[int, ...] = ()

    @property
    def n_lines(self) -> int:
        return self.n_quantum + len(self.ancillas)

    @property
    def layout(self) -> EncodingLayout:
        return EncodingLayout(self.n_lines, 0)

    @property
    def length(self) -> int:
        return self.layout.length(self.max_gates)

    @property
    def n_outputs(self) -> int:
        return self.n_lines - len(self.trace_out)

    def admits(self, desc: CircuitDesc) -> list[str]:
        problems = []
        n_lines, anc, trace, gates = desc.lines()
        if desc.n_quantum != self.n_quantum:
            problems.append("input count differs")
        if tuple(anc) != tuple(self.ancillas) or tuple(trace) != tuple(sorted(self.trace_out)):
            problems.append("ancilla or trace-out frame differs")
        if len(gates) > self.max_gates:
            problems.append(f"{len(gates)} gates exceed the bound {self.max_gates}")
        if desc.n_classical:
            problems.append("classically controlled circuits are not in the class")
        if not desc.clifford_only:
            problems.append("T gates are not in the class")
        return problems

    def encode(self, desc: CircuitDesc) -> Bits:
        problems = self.admits(desc)
        if problems:
            raise UnsupportedError("; ".join(problems))
        return encode_circuit(desc, pad_to=self.max_gates).bits


def universal_circuit(cls: CircuitClass) -> CircuitDesc:
    """Circuit U with U(rho, encode(C)) = C(rho) for every C in ``cls``.

    Each record gets one classically controlled slot per admissible gate
    choice; a slot's control is the conjunction "record fields equal this
    choice", so at most one slot per record fires.
    """
    lay = cls.layout
    n = cls.n_lines
    gates: list[Gate] = []
    for k in range(cls.max_gates):
        f = lay.field_offsets(k)

        def lits(name: str, value: int) -> Control:
            start, width = f[name]
            return tuple((start + i, b) for i, b in enumerate(int_to_bits(value, width)))

        for kind in (GateKind.X, GateKind.Z, GateKind.H, GateKind.P, GateKind.CNOT, GateKind.SWAP):
            op = lits("opcode", OPCODES[kind])
            if kind.arity == 1:
                for w1 in range(n):
                    gates.append(Gate(kind, (w1,), op + lits("wire1", w1)))
            else:
                for w1 in range(n):
                    for w2 in range(n):
                        if w1 != w2:
                            gates.append(Gate(kind, (w1, w2), op + lits("wire1", w1) + lits("wire2", w2)))
    return CircuitDesc.from_lines(cls.n_quantum, gates, cls.ancillas, cls.trace_out, n_classical=cls.length)


def universal_circuit_for(l: int, n: int) -> CircuitDesc:
    """Universal circuit for n-qubit circuits without ancillas whose encoding has length l."""
    lay = EncodingLayout(n, 0)
    g, rem = divmod(l - lay.header_len, lay.record_len)
    if rem or g < 0:
        raise UnsupportedError(f"length {l} does not match the record layout for {n} lines")
    return universal_circuit(CircuitClass(n, g))


# -------------------------------------------------------------------- JSON

def circuit_from_json(obj: dict[str, Any] | str) -> CircuitDesc:
    """Parse the circuit JSON format; raises :class:`ParseError` on bad input."""
    if isinstance(obj, str):
        try:
            obj = json.loads(obj)
        except json.JSONDecodeError as exc:
            raise ParseError(f"invalid JSON: {exc.msg} (line {exc.lineno}, column {exc.colno})", exc.pos) from None
    if not isinstance(obj, dict):
        raise ParseError("circuit must be a JSON object")
    allowed = {"quantum_inputs", "classical_inputs", "ancillas", "trace_out", "gates"}
    extra = set(obj) - allowed
    if extra:
        raise ParseError(f"unknown fields {sorted(extra)}")
    try:
        nq = int(obj["quantum_inputs"])
        nc = int(obj.get("classical_inputs", 0))
        anc = [int(x) for x in obj.get("ancillas", [])]
        trace = [int(x) for x in obj.get("trace_out", [])]
        raw = obj.get("gates", [])
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"malformed header field: {exc}") from None
    n_lines = nq + len(anc)
    if nq < 0 or nc < 0 or any(not 0 <= a < n_lines for a in anc) or len(set(anc)) != len(anc):
        raise ParseError("invalid ancilla specification")
    gates = []
    for i, g in enumerate(raw):
        if not isinstance(g, dict) or "kind" not in g or "wires" not in g:
            raise ParseError(f"gate {i}: expected an object with kind and wires")
        try:
            kind = gate_kind(g["kind"])
        except ShapeError:
            raise ParseError(f"gate {i}: unknown gate kind {g['kind']!r}") from None
        wires = g["wires"]
        if not isinstance(wires, list) or not all(isinstance(w, int) for w in wires):
            raise ParseError(f"gate {i}: wires must be a list of integers")
        if len(wires) != kind.arity or len(set(wires)) != len(wires):
            raise ParseError(f"gate {i}: {kind.value} needs {kind.arity} distinct wire(s)")
        if any(not 0 <= w < n_lines for w in wires):
            raise ParseError(f"gate {i}: wire index out of range")
        ctrl = g.get("control")
        if ctrl is not None and (not isinstance(ctrl, int) or not 0 <= ctrl < nc):
            raise ParseError(f"gate {i}: control must reference a classical input")
        gates.append(Gate(kind, tuple(wires), _coerce_control(ctrl)))
    if any(not 0 <= t < n_lines for t in trace):
        raise ParseError("trace_out index out of range")
    desc = CircuitDesc.from_lines(nq, gates, anc, trace, nc)
    diags = validate(desc)
    if diags:
        raise ParseError(str(diags[0]))
    return desc


def density_to_json(rho: DensityMatrix) -> dict[str, Any]:
    d = np.round(rho.data, 12)
    return {"qubits": rho.n, "real": d.real.tolist(), "imag": d.imag.tolist()}
