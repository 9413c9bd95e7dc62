"""Dense density-matrix toolkit: states, gates, measurements, EPR pairs,
the quantum one-time pad, teleportation and distance measures.

Qubit 0 is the most significant tensor factor, so ``|01>`` means qubit 0 is
in ``|0>`` and qubit 1 in ``|1>``.  Every sampling operation has an
``*_all`` twin that returns all branches with their probabilities.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from .config import get_config
from .errors import QfeError, ResourceError, ShapeError

Bits = tuple[int, ...]


# ---------------------------------------------------------------- bit helpers

def as_bits(seq: Iterable[int]) -> Bits:
    out = tuple(map(int, seq))
    if not set(out) <= {0, 1}:
        raise ValueError(f"not a bit-string: {out!r}")
    return out


def xor_bits(a: Sequence[int], b: Sequence[int]) -> Bits:
    if len(a) != len(b):
        raise ShapeError(f"xor of bit-strings with lengths {len(a)} and {len(b)}")
    return tuple(x ^ y for x, y in zip(a, b))


def int_to_bits(value: int, width: int) -> Bits:
    if value < 0 or value >= (1 << width):
        raise ValueError(f"{value} does not fit in {width} bits")
    return tuple((value >> (width - 1 - i)) & 1 for i in range(width))


def bits_to_int(bits: Sequence[int]) -> int:
    v = 0
    for x in bits:
        v = (v << 1) | int(x)
    return v


def bits_str(bits: Sequence[int]) -> str:
    return "".join(str(int(x)) for x in bits)


# ------------------------------------------------------------------ randomness

class RandomSource:
    """Seeded source of all protocol randomness.

    Wraps a numpy PCG64 generator; identical seeds give identical draw
    sequences.  The handle is mutable and meant to have a single owner.
    """

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & ((1 << 64) - 1)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))
        self.draws = 0

    def bits(self, k: int) -> Bits:
        self.draws += 1
        if k == 0:
            return ()
        return tuple(int(x) for x in self._gen.integers(0, 2, size=k))

    def bit(self) -> int:
        return self.bits(1)[0]

    def choice(self, probs: Sequence[float]) -> int:
        """Sample an index from a probability vector."""
        self.draws += 1
        p = np.asarray(probs, dtype=float)
        u = self._gen.random() * p.sum()
        idx = int(np.searchsorted(np.cumsum(p), u, side="right"))
        return min(idx, len(p) - 1)

    def random(self) -> float:
        self.draws += 1
        return float(self._gen.random())

    def spawn(self) -> "RandomSource":
        """Independent child stream, derived deterministically from this one."""
        return RandomSource(int(self._gen.integers(0, 2**63)))


class ScriptedSource(RandomSource):
    """A source that replays a fixed bit script.

    Used to evaluate protocols at chosen points of their randomness space.
    ``choice`` is only allowed on uniform distributions over 2^m outcomes,
    which is exactly the case for Bell and computational measurements of EPR
    halves; anything else raises, so a scripted run never silently reweights
    branches.  Without a script the source yields zeros and just counts.
    """

    def __init__(self, script: Sequence[int] | None = None):
        self.seed = 0
        self.draws = 0
        self._script = None if script is None else as_bits(script)
        self.consumed = 0

    def _take(self, k: int) -> Bits:
        if self._script is None:
            out = (0,) * k
        else:
            if self.consumed + k > len(self._script):
                raise QfeError("scripted randomness exhausted")
            out = self._script[self.consumed:self.consumed + k]
        self.consumed += k
        return out

    def bits(self, k: int) -> Bits:
        self.draws += 1
        return self._take(k)

    def choice(self, probs: Sequence[float]) -> int:
        self.draws += 1
        p = np.asarray(probs, dtype=float)
        m = int(round(math.log2(len(p))))
        if (1 << m) != len(p) or np.max(np.abs(p - 1.0 / len(p))) > 1e-9:
            raise QfeError("scripted choice requires a uniform power-of-two distribution")
        return bits_to_int(self._take(m))

    def random(self) -> float:
        raise QfeError("continuous draws are not scriptable")

    def spawn(self) -> "RandomSource":
        return self


# --------------------------------------------------------------------- states

def _check_budget(n: int) -> None:
    if n > get_config().max_qubits:
        raise ResourceError(f"{n} qubits exceeds the configured maximum of {get_config().max_qubits}")


class DensityMatrix:
    """Immutable n-qubit density operator (complex128, dimension 2^n)."""

    __slots__ = ("data", "n")

    def __init__(self, data, check: bool = True):
        arr = np.array(data, dtype=np.complex128, copy=True)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ShapeError(f"density matrix must be square, got {arr.shape}")
        dim = arr.shape[0]
        n = dim.bit_length() - 1
        if (1 << n) != dim:
            raise ShapeError(f"dimension {dim} is not a power of two")
        _check_budget(n)
        arr.setflags(write=False)
        self.data = arr
        self.n = n
        if check:
            self.validate()

    @classmethod
    def _wrap(cls, arr: np.ndarray) -> "DensityMatrix":
        obj = cls.__new__(cls)
        arr = np.ascontiguousarray(arr, dtype=np.complex128)
        n = arr.shape[0].bit_length() - 1
        _check_budget(n)
        arr.setflags(write=False)
        obj.data = arr
        obj.n = n
        return obj

    # constructors
    @classmethod
    def from_ket(cls, ket) -> "DensityMatrix":
        v = np.asarray(ket, dtype=np.complex128).reshape(-1)
        v = v / np.linalg.norm(v)
        return cls(np.outer(v, v.conj()))

    @classmethod
    def basis(cls, bits: Sequence[int]) -> "DensityMatrix":
        bits = as_bits(bits)
        dim = 1 << len(bits)
        arr = np.zeros((dim, dim), dtype=np.complex128)
        i = bits_to_int(bits)
        arr[i, i] = 1.0
        return cls._wrap(arr)

    @classmethod
    def zero(cls, n: int) -> "DensityMatrix":
        return cls.basis((0,) * n)

    @classmethod
    def maximally_mixed(cls, n: int) -> "DensityMatrix":
        dim = 1 << n
        return cls._wrap(np.eye(dim, dtype=np.complex128) / dim)

    @classmethod
    def scalar(cls) -> "DensityMatrix":
        return cls._wrap(np.ones((1, 1), dtype=np.complex128))

    # properties
    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def trace(self) -> complex:
        return complex(np.trace(self.data))

    def purity(self) -> float:
        return float(np.real(np.vdot(self.data, self.data)))

    def validate(self, tol: float | None = None) -> None:
        tol = get_config().tol.eigen if tol is None else tol
        d = self.data
        if np.max(np.abs(d - d.conj().T), initial=0.0) > tol:
            raise ShapeError("density matrix is not Hermitian")
        if abs(np.trace(d) - 1.0) > tol:
            raise ShapeError(f"density matrix trace {np.trace(d).real:.3g} != 1")
        if self.n <= 10 and np.linalg.eigvalsh(d).min() < -tol:
            raise ShapeError("density matrix is not positive semidefinite")

    def close_to(self, other: "DensityMatrix", tol: float | None = None) -> bool:
        tol = get_config().tol.algebraic if tol is None else tol
        return self.n == other.n and trace_distance(self, other) <= tol

    def __repr__(self) -> str:
        return f"DensityMatrix(n={self.n})"


def ket(label: str) -> np.ndarray:
    """State vector for a label over the alphabet 0, 1, +, -, r (|+i>), l (|-i>)."""
    single = {
        "0": np.array([1, 0], dtype=complex),
        "1": np.array([0, 1], dtype=complex),
        "+": np.array([1, 1], dtype=complex) / math.sqrt(2),
        "-": np.array([1, -1], dtype=complex) / math.sqrt(2),
        "r": np.array([1, 1j], dtype=complex) / math.sqrt(2),
        "l": np.array([1, -1j], dtype=complex) / math.sqrt(2),
    }
    v = np.ones(1, dtype=complex)
    for ch in label:
        v = np.kron(v, single[ch])
    return v


def state(label: str) -> DensityMatrix:
    return DensityMatrix.from_ket(ket(label))


def random_state(n: int, rng: RandomSource, rank: int | None = None) -> DensityMatrix:
    """Random mixed state (Ginibre ensemble) for property tests."""
    dim = 1 << n
    rank = dim if rank is None else rank
    g = rng._gen.normal(size=(dim, rank)) + 1j * rng._gen.normal(size=(dim, rank))
    m = g @ g.conj().T
    return DensityMatrix(m / np.trace(m))


# ----------------------------------------------------------- tensor structure

def tensor(*states: DensityMatrix) -> DensityMatrix:
    total = sum(s.n for s in states)
    _check_budget(total)
    out = np.ones((1, 1), dtype=np.complex128)
    for s in states:
        out = np.kron(out, s.data)
    return DensityMatrix._wrap(out)


def _as_tensor(rho: DensityMatrix) -> np.ndarray:
    return rho.data.reshape((2,) * (2 * rho.n))


def _from_tensor(t: np.ndarray, n: int) -> DensityMatrix:
    dim = 1 << n
    return DensityMatrix._wrap(t.reshape(dim, dim))


def _check_wires(n: int, wires: Sequence[int]) -> None:
    if len(set(wires)) != len(wires):
        raise ShapeError(f"repeated qubit index in {list(wires)}")
    for w in wires:
        if not 0 <= w < n:
            raise ShapeError(f"qubit index {w} out of range for {n} qubits")


def partial_trace(rho: DensityMatrix, discard: Iterable[int]) -> DensityMatrix:
    discard = sorted(set(discard))
    _check_wires(rho.n, discard)
    if not discard:
        return rho
    n = rho.n
    keep = [q for q in range(n) if q not in discard]
    t = _as_tensor(rho)
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    row = letters[:n]
    col = letters[n:]
    for q in discard:
        col[q] = row[q]
    out = "".join(row[q] for q in keep) + "".join(col[q] for q in keep)
    res = np.einsum("".join(row) + "".join(col) + "->" + out, t)
    return _from_tensor(res, len(keep))


def permute(rho: DensityMatrix, order: Sequence[int]) -> DensityMatrix:
    """Reorder qubits: new qubit i is old qubit ``order[i]``."""
    order = list(order)
    if sorted(order) != list(range(rho.n)):
        raise ShapeError(f"{order} is not a permutation of {rho.n} qubits")
    t = _as_tensor(rho).transpose(order + [rho.n + q for q in order])
    return _from_tensor(t, rho.n)


def apply_unitary(rho: DensityMatrix, u: np.ndarray, wires: Sequence[int]) -> DensityMatrix:
    """rho -> U rho U^dagger with U acting on ``wires`` (in that order)."""
    wires = list(wires)
    _check_wires(rho.n, wires)
    k = len(wires)
    if u.shape != (1 << k, 1 << k):
        raise ShapeError(f"operator of shape {u.shape} does not act on {k} qubits")
    if k == 0:
        return rho
    n = rho.n
    ut = u.reshape((2,) * (2 * k))
    t = _as_tensor(rho)
    t = np.tensordot(ut, t, axes=(list(range(k, 2 * k)), wires))
    t = np.moveaxis(t, list(range(k)), wires)
    t = np.tensordot(ut.conj(), t, axes=(list(range(k, 2 * k)), [n + w for w in wires]))
    t = np.moveaxis(t, list(range(k)), [n + w for w in wires])
    return _from_tensor(t, n)


# ---------------------------------------------------------------------- gates

class GateKind(enum.Enum):
    X = "X"
    Z = "Z"
    H = "H"
    P = "P"
    T = "T"
    CNOT = "CNOT"
    SWAP = "SWAP"

    @property
    def arity(self) -> int:
        return 2 if self in (GateKind.CNOT, GateKind.SWAP) else 1

    @property
    def clifford(self) -> bool:
        return self is not GateKind.T


_S2 = 1 / math.sqrt(2)
GATE_MATRICES: dict[GateKind, np.ndarray] = {
    GateKind.X: np.array([[0, 1], [1, 0]], dtype=complex),
    GateKind.Z: np.array([[1, 0], [0, -1]], dtype=complex),
    GateKind.H: np.array([[_S2, _S2], [_S2, -_S2]], dtype=complex),
    GateKind.P: np.array([[1, 0], [0, 1j]], dtype=complex),
    GateKind.T: np.array([[1, 0], [0, np.exp(1j * math.pi / 4)]], dtype=complex),
    GateKind.CNOT: np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex),
    GateKind.SWAP: np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex),
}
for _m in GATE_MATRICES.values():
    _m.setflags(write=False)


def gate_kind(name: "GateKind | str") -> GateKind:
    if isinstance(name, GateKind):
        return name
    try:
        return GateKind(str(name).upper())
    except ValueError:
        raise ShapeError(f"unknown gate kind {name!r}") from None


def apply_gate(rho: DensityMatrix, gate: "GateKind | str", wires: Sequence[int]) -> DensityMatrix:
    g = gate_kind(gate)
    if len(wires) != g.arity:
        raise ShapeError(f"{g.value} takes {g.arity} wire(s), got {len(wires)}")
    return apply_unitary(rho, GATE_MATRICES[g], wires)


# ------------------------------------------------------------- one-time pad

@dataclass(frozen=True)
class PauliKey:
    """Pair of bit-strings (a, b) standing for X^a Z^b on each qubit."""

    a: Bits
    b: Bits

    def __post_init__(self):
        object.__setattr__(self, "a", as_bits(self.a))
        object.__setattr__(self, "b", as_bits(self.b))
        if len(self.a) != len(self.b):
            raise ShapeError("Pauli key halves differ in length")

    @property
    def n(self) -> int:
        return len(self.a)

    @classmethod
    def zero(cls, n: int) -> "PauliKey":
        return cls((0,) * n, (0,) * n)

    @classmethod
    def random(cls, n: int, rng: RandomSource) -> "PauliKey":
        return cls(rng.bits(n), rng.bits(n))

    @classmethod
    def from_flat(cls, bits: Sequence[int]) -> "PauliKey":
        """Inverse of :meth:`flat` (a-bits followed by b-bits)."""
        h = len(bits) // 2
        return cls(tuple(bits[:h]), tuple(bits[h:]))

    def flat(self) -> Bits:
        return self.a + self.b

    def __xor__(self, other: "PauliKey") -> "PauliKey":
        return PauliKey(xor_bits(self.a, other.a), xor_bits(self.b, other.b))

    def __add__(self, other: "PauliKey") -> "PauliKey":
        """Concatenate keys on disjoint registers."""
        return PauliKey(self.a + other.a, self.b + other.b)

    def restrict(self, wires: Sequence[int]) -> "PauliKey":
        return PauliKey(tuple(self.a[w] for w in wires), tuple(self.b[w] for w in wires))

    def matrix(self) -> np.ndarray:
        m = np.ones((1, 1), dtype=complex)
        for ai, bi in zip(self.a, self.b):
            m = np.kron(m, _pauli_1q(ai, bi))
        return m


def _pauli_1q(a: int, b: int) -> np.ndarray:
    m = np.eye(2, dtype=complex)
    if b:
        m = GATE_MATRICES[GateKind.Z] @ m
    if a:
        m = GATE_MATRICES[GateKind.X] @ m
    return m


def apply_pauli(rho: DensityMatrix, key: PauliKey, wires: Sequence[int] | None = None) -> DensityMatrix:
    """Conjugate ``wires`` (default: all qubits) by X^a Z^b."""
    wires = list(range(rho.n)) if wires is None else list(wires)
    if key.n != len(wires):
        raise ShapeError(f"key of length {key.n} for {len(wires)} qubits")
    _check_wires(rho.n, wires)
    out = rho
    for w, ai, bi in zip(wires, key.a, key.b):
        if ai or bi:
            out = apply_unitary(out, _pauli_1q(ai, bi), [w])
    return out


def qotp_apply(rho: DensityMatrix, key: PauliKey) -> DensityMatrix:
    """Quantum one-time pad; the same call decrypts."""
    if key.n != rho.n:
        raise ShapeError(f"key of length {key.n} for a {rho.n}-qubit state")
    return apply_pauli(rho, key)


def qotp_average(rho: DensityMatrix, wires: Sequence[int] | None = None) -> DensityMatrix:
    """Uniform average of the pad over all keys on ``wires``."""
    wires = list(range(rho.n)) if wires is None else list(wires)
    out = rho
    for w in wires:
        acc = np.zeros_like(out.data)
        for a, b in itertools.product((0, 1), repeat=2):
            acc = acc + apply_pauli(out, PauliKey((a,), (b,)), [w]).data
        out = DensityMatrix._wrap(acc / 4)
    return out


# ---------------------------------------------------------------- EPR pairs

_EPR = np.zeros((4, 4), dtype=np.complex128)
_EPR[0, 0] = _EPR[0, 3] = _EPR[3, 0] = _EPR[3, 3] = 0.5


def make_epr(pairs: int) -> DensityMatrix:
    """``pairs`` EPR pairs in the layout (A1, B1, A2, B2, ...)."""
    if pairs < 1:
        raise ShapeError("need at least one EPR pair")
    _check_budget(2 * pairs)
    return tensor(*([DensityMatrix._wrap(_EPR)] * pairs))


# -------------------------------------------------------------- measurements

def _project(rho: DensityMatrix, wires: Sequence[int], outcome: Bits) -> tuple[float, np.ndarray]:
    """Unnormalised post-measurement block with the measured qubits removed."""
    n = rho.n
    t = _as_tensor(rho)
    index: list = [slice(None)] * (2 * n)
    for w, v in zip(wires, outcome):
        index[w] = v
        index[n + w] = v
    block = t[tuple(index)]
    m = n - len(wires)
    block = block.reshape(1 << m, 1 << m)
    return float(np.real(np.trace(block))), block


def measure_all(rho: DensityMatrix, wires: Sequence[int]) -> list[tuple[Bits, float, DensityMatrix | None]]:
    """All computational-basis outcomes on ``wires`` with probabilities.

    The post-measurement state drops the measured qubits; it is ``None`` for
    zero-probability outcomes.
    """
    wires = list(wires)
    _check_wires(rho.n, wires)
    out = []
    for outcome in itertools.product((0, 1), repeat=len(wires)):
        p, block = _project(rho, wires, outcome)
        post = DensityMatrix._wrap(block / p) if p > 1e-15 else None
        out.append((outcome, max(p, 0.0), post))
    return out


def measure(rho: DensityMatrix, wires: Sequence[int], rng: RandomSource) -> tuple[Bits, DensityMatrix]:
    branches = measure_all(rho, wires)
    idx = rng.choice([p for _, p, _ in branches])
    outcome, _, post = branches[idx]
    return outcome, post


def dephase(rho: DensityMatrix, wires: Sequence[int]) -> DensityMatrix:
    """Measure ``wires`` in the computational basis and keep the record in place."""
    n = rho.n
    t = np.array(_as_tensor(rho))
    for w in wires:
        idx = [slice(None)] * (2 * n)
        for v in (0, 1):
            idx[w] = v
            idx[n + w] = 1 - v
            t[tuple(idx)] = 0
    return _from_tensor(t, n)


def _bell_rotate(rho: DensityMatrix, wire_x: int, wire_e: int) -> DensityMatrix:
    out = apply_gate(rho, GateKind.CNOT, [wire_x, wire_e])
    return apply_gate(out, GateKind.H, [wire_x])


def bell_measure_all(rho: DensityMatrix, wire_x: int, wire_e: int) -> list[tuple[PauliKey, float, DensityMatrix | None]]:
    """All four Bell outcomes (a, b) with probabilities and post-states.

    The outcome is reported as the correction key: the partner of ``wire_e``
    must be conjugated by X^a Z^b to complete a teleportation.
    """
    if wire_x == wire_e:
        raise ShapeError("Bell measurement needs two distinct qubits")
    _check_wires(rho.n, [wire_x, wire_e])
    rotated = _bell_rotate(rho, wire_x, wire_e)
    out = []
    for (bx, be), p, post in measure_all(rotated, [wire_x, wire_e]):
        out.append((PauliKey((be,), (bx,)), p, post))
    # order outcomes as (a, b) = 00, 01, 10, 11
    out.sort(key=lambda r: (r[0].a, r[0].b))
    return out


def bell_measure(rho: DensityMatrix, wire_x: int, wire_e: int, rng: RandomSource) -> tuple[PauliKey, DensityMatrix]:
    branches = bell_measure_all(rho, wire_x, wire_e)
    idx = rng.choice([p for _, p, _ in branches])
    key, _, post = branches[idx]
    return key, post


def _shifted(index: int, removed: Sequence[int]) -> int:
    return index - sum(1 for r in removed if r < index)


def remaining_index(n: int, removed: Sequence[int], q: int) -> int:
    """Position of original qubit ``q`` after ``removed`` qubits are dropped."""
    if q in removed or not 0 <= q < n:
        raise ShapeError(f"qubit {q} was removed or is out of range")
    return _shifted(q, removed)


def teleport(rho: DensityMatrix, payload: Sequence[int], epr_halves: Sequence[int],
             rng: RandomSource) -> tuple[PauliKey, DensityMatrix]:
    """Bell-measure each payload qubit with its EPR half.

    Returns the correction key and the uncorrected post-state; payload and
    half qubits are removed and the rest keep their relative order.  Applying
    X^a Z^b to the partner qubits completes the teleportation.
    """
    payload, epr_halves = list(payload), list(epr_halves)
    _check_teleport(rho, payload, epr_halves)
    a, b = [], []
    removed: list[int] = []
    cur = rho
    for x, e in zip(payload, epr_halves):
        key, cur = bell_measure(cur, _shifted(x, removed), _shifted(e, removed), rng)
        removed += [x, e]
        a += key.a
        b += key.b
    return PauliKey(tuple(a), tuple(b)), cur


def teleport_all(rho: DensityMatrix, payload: Sequence[int], epr_halves: Sequence[int]
                 ) -> list[tuple[PauliKey, float, DensityMatrix | None]]:
    payload, epr_halves = list(payload), list(epr_halves)
    _check_teleport(rho, payload, epr_halves)
    branches = [(PauliKey((), ()), 1.0, rho, [])]
    for x, e in zip(payload, epr_halves):
        nxt = []
        for key, p, cur, removed in branches:
            if cur is None:
                continue
            for k2, p2, post in bell_measure_all(cur, _shifted(x, removed), _shifted(e, removed)):
                nxt.append((key + k2, p * p2, post, removed + [x, e]))
        branches = nxt
    return [(k, p, s) for k, p, s, _ in branches]


def _check_teleport(rho, payload, halves):
    if len(payload) != len(halves):
        raise ShapeError("payload and EPR halves differ in length")
    _check_wires(rho.n, payload + halves)


# ----------------------------------------------------------------- distances

def trace_norm(m: np.ndarray) -> float:
    return float(np.sum(np.abs(np.linalg.eigvalsh((m + m.conj().T) / 2))))


def trace_distance(rho, sigma) -> float:
    """Half the trace norm of the difference; CQ states are compared blockwise."""
    if isinstance(rho, CQState) and isinstance(sigma, CQState):
        return rho.distance(sigma)
    if isinstance(rho, CQState) or isinstance(sigma, CQState):
        raise ShapeError("cannot compare a CQ state with a plain density matrix")
    if rho.n != sigma.n:
        raise ShapeError(f"states on {rho.n} and {sigma.n} qubits")
    return 0.5 * trace_norm(rho.data - sigma.data)


# ---------------------------------------------------------------- CQ states

class CQState:
    """Classically labelled ensemble sum_l p_l |l><l| (x) rho_l.

    Stored as unnormalised blocks p_l * rho_l keyed by label string.
    """

    __slots__ = ("blocks", "n")

    def __init__(self, blocks: dict[str, np.ndarray], n: int):
        self.blocks = blocks
        self.n = n

    @property
    def labels(self) -> list[str]:
        return sorted(self.blocks)

    def weight(self, label: str) -> float:
        b = self.blocks.get(label)
        return 0.0 if b is None else float(np.real(np.trace(b)))

    def state(self, label: str) -> DensityMatrix:
        b = self.blocks[label]
        return DensityMatrix._wrap(b / np.trace(b).real)

    def total(self) -> float:
        return sum(self.weight(l) for l in self.blocks)

    def marginal_quantum(self) -> DensityMatrix:
        acc = sum(self.blocks.values())
        return DensityMatrix._wrap(acc)

    def marginal_labels(self) -> dict[str, float]:
        return {l: self.weight(l) for l in self.labels}

    def map(self, fn: Callable[[DensityMatrix], DensityMatrix]) -> "CQState":
        """Apply a (linear) channel blockwise."""
        out: dict[str, np.ndarray] = {}
        n = None
        for l, b in self.blocks.items():
            w = float(np.real(np.trace(b)))
            if w <= 0:
                continue
            s = fn(DensityMatrix._wrap(b / w))
            n = s.n
            out[l] = w * s.data
        return CQState(out, self.n if n is None else n)

    def relabel(self, fn: Callable[[str], str]) -> "CQState":
        out: dict[str, np.ndarray] = {}
        for l, b in self.blocks.items():
            k = fn(l)
            out[k] = out[k] + b if k in out else b
        return CQState(out, self.n)

    def distance(self, other: "CQState") -> float:
        if self.n != other.n:
            raise ShapeError("CQ states with different qubit counts")
        total = 0.0
        for label in set(self.blocks) | set(other.blocks):
            a = self.blocks.get(label)
            b = other.blocks.get(label)
            if a is None:
                total += trace_norm(b)
            elif b is None:
                total += trace_norm(a)
            else:
                total += trace_norm(a - b)
        return 0.5 * total


def cq_mix(parts: Iterable[tuple[float, str, DensityMatrix]]) -> CQState:
    """Build a CQ state from (probability, label, state) triples."""
    parts = list(parts)
    tol = get_config().tol.algebraic
    blocks: dict[str, np.ndarray] = {}
    n = None
    total = 0.0
    for p, label, rho in parts:
        if p < -tol:
            raise ShapeError(f"negative probability {p}")
        if n is None:
            n = rho.n
        elif rho.n != n:
            raise ShapeError("CQ parts on different qubit counts")
        total += p
        if p <= 0:
            continue
        blocks[label] = blocks[label] + p * rho.data if label in blocks else p * rho.data
    if abs(total - 1.0) > tol:
        raise ShapeError(f"probabilities sum to {total}, not 1")
    return CQState(blocks, 0 if n is None else n)


# ----------------------------------------------------------------- channels

@dataclass(frozen=True)
class ChoiMatrix:
    n_in: int
    n_out: int
    state: DensityMatrix  # reference qubits first, then channel output


# |i><j| for one qubit as a combination of the probe states |0>,|1>,|+>,|+i>
_PROBES = ("0", "1", "+", "r")
_UNIT_COEFFS = {
    (0, 0): np.array([1, 0, 0, 0], dtype=complex),
    (1, 1): np.array([0, 1, 0, 0], dtype=complex),
    (0, 1): np.array([-(1 + 1j) / 2, -(1 + 1j) / 2, 1, 1j]),
    (1, 0): np.array([-(1 - 1j) / 2, -(1 - 1j) / 2, 1, -1j]),
}


def choi_of(channel: Callable[[DensityMatrix], DensityMatrix], n_in: int) -> ChoiMatrix:
    """Choi state of a linear channel on ``n_in`` qubits.

    Numerically equal to feeding the first halves of ``n_in`` EPR pairs
    through the channel; it is assembled by linearity from the 4^n product
    probe states built from |0>, |1>, |+>, |+i>, so the channel only ever
    sees valid density matrices.
    """
    outputs: dict[tuple[int, ...], np.ndarray] = {}
    n_out = None
    for combo in itertools.product(range(4), repeat=n_in):
        out = channel(state("".join(_PROBES[c] for c in combo)) if n_in else DensityMatrix.scalar())
        if n_out is None:
            n_out = out.n
        elif out.n != n_out:
            raise ShapeError("channel output width differs across probe states")
        outputs[combo] = out.data
    _check_budget(n_in + n_out)
    dim_in = 1 << n_in
    choi = np.zeros((dim_in << n_out, dim_in << n_out), dtype=complex)
    for i in range(dim_in):
        for j in range(dim_in):
            bi, bj = int_to_bits(i, n_in), int_to_bits(j, n_in)
            acc = np.zeros((1 << n_out, 1 << n_out), dtype=complex)
            for combo, data in outputs.items():
                c = 1.0 + 0j
                for q, k in enumerate(combo):
                    c *= _UNIT_COEFFS[(bi[q], bj[q])][k]
                    if c == 0:
                        break
                if c != 0:
                    acc += c * data
            unit = np.zeros((dim_in, dim_in), dtype=complex)
            unit[i, j] = 1.0
            choi += np.kron(unit, acc)
    return ChoiMatrix(n_in, n_out, DensityMatrix._wrap(choi / dim_in))


def choi_distance(a, b, n_in: int | None = None) -> float:
    """Trace distance between Choi states (channels are accepted directly)."""
    if not isinstance(a, ChoiMatrix):
        a = choi_of(a, n_in)
    if not isinstance(b, ChoiMatrix):
        b = choi_of(b, n_in)
    if (a.n_in, a.n_out) != (b.n_in, b.n_out):
        raise ShapeError("Choi matrices of channels with different signatures")
    return trace_distance(a.state, b.state)


def apply_on(rho: DensityMatrix, channel: Callable[[DensityMatrix], DensityMatrix],
             wires: Sequence[int]) -> DensityMatrix:
    """Apply a linear channel to a subsystem of ``rho``.

    The output of the channel replaces ``wires`` and is appended after the
    untouched qubits.  Evaluated blockwise through the operator basis, so it
    handles inputs entangled with the rest of ``rho``.
    """
    wires = list(wires)
    _check_wires(rho.n, wires)
    k = len(wires)
    rest = [q for q in range(rho.n) if q not in wires]
    ordered = permute(rho, rest + wires)
    c = choi_of(channel, k)
    n_out = c.n_out
    m = len(rest)
    _check_budget(m + n_out)
    # rho_out = sum_ij  rho_{rest}[.., i, .., j] (x) Phi(|i><j|)
    t = ordered.data.reshape(1 << m, 1 << k, 1 << m, 1 << k)
    phi = c.state.data.reshape(1 << k, 1 << n_out, 1 << k, 1 << n_out) * (1 << k)
    res = np.einsum("aibj,icjd->acbd", t, phi)
    dim = (1 << m) << n_out
    return DensityMatrix._wrap(res.reshape(dim, dim))
