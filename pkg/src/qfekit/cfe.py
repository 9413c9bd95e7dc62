"""Single-query classical functional encryption from one-time pads.

``IdFE`` reveals its message to the holder of the (single) functional key;
``TwoFE`` is fixed at setup to a pair of functions ``(f0, f1)`` and a key for
selector ``b`` decrypts to ``f_b(x)``.  Both are secret-key schemes whose
ciphertexts are XOR-padded slots, which makes adaptive single-query
simulation exact: the simulator emits uniform slots and later programs the
key so the chosen slot opens to the ideal value.

Each key object allows one ``keygen``; simulator states allow one
programming call.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

from .errors import KeyReuseError, ShapeError
from .qcore import Bits, RandomSource, as_bits, xor_bits

BitFn = Callable[[Bits], Sequence[int]]


@dataclass
class _Once:
    used: bool = False

    def consume(self, what: str) -> None:
        if self.used:
            raise KeyReuseError(f"{what} already used; this scheme supports a single query")
        self.used = True


@dataclass(frozen=True)
class CfeCiphertext:
    slots: tuple[Bits, ...]

    def bits(self) -> Bits:
        return tuple(b for s in self.slots for b in s)


# --------------------------------------------------------------------- IdFE

@dataclass
class IdFeKeys:
    length: int
    pad: Bits
    handle: int
    _once: _Once = field(default_factory=_Once, repr=False)

    @property
    def consumed(self) -> bool:
        return self._once.used


@dataclass(frozen=True)
class IdFeSecretKey:
    pad: Bits


def idfe_setup(length: int, rng: RandomSource) -> IdFeKeys:
    return IdFeKeys(length, rng.bits(length), id(rng) & 0xFFFF)


def idfe_enc(keys: IdFeKeys, m: Sequence[int]) -> CfeCiphertext:
    m = as_bits(m)
    if len(m) != keys.length:
        raise ShapeError(f"message has {len(m)} bits, scheme expects {keys.length}")
    return CfeCiphertext((xor_bits(m, keys.pad),))


def idfe_keygen(keys: IdFeKeys) -> IdFeSecretKey:
    keys._once.consume("IdFE master key")
    return IdFeSecretKey(keys.pad)


def idfe_dec(sk: IdFeSecretKey, ct: CfeCiphertext) -> Bits:
    if len(ct.slots) != 1 or len(ct.slots[0]) != len(sk.pad):
        raise ShapeError("ciphertext does not match the key length")
    return xor_bits(ct.slots[0], sk.pad)


@dataclass
class CfeSimState:
    slots: tuple[Bits, ...]
    _once: _Once = field(default_factory=_Once, repr=False)


def idfe_sim_ct(length: int, rng: RandomSource) -> tuple[CfeCiphertext, CfeSimState]:
    slot = rng.bits(length)
    return CfeCiphertext((slot,)), CfeSimState((slot,))


def idfe_sim_key(state: CfeSimState, m: Sequence[int]) -> IdFeSecretKey:
    """Key that opens the simulated ciphertext to ``m``."""
    state._once.consume("IdFE simulator state")
    m = as_bits(m)
    if len(m) != len(state.slots[0]):
        raise ShapeError("message length differs from the simulated ciphertext")
    return IdFeSecretKey(xor_bits(state.slots[0], m))


# -------------------------------------------------------------------- TwoFE

@dataclass
class TwoFeKeys:
    f0: BitFn
    f1: BitFn
    out_len: int
    pads: tuple[Bits, Bits]
    handle: int
    _once: _Once = field(default_factory=_Once, repr=False)

    @property
    def consumed(self) -> bool:
        return self._once.used


@dataclass(frozen=True)
class TwoFeSecretKey:
    b: int
    pad: Bits


def twofe_setup(f0: BitFn, f1: BitFn, out_len: int, rng: RandomSource) -> TwoFeKeys:
    """Instance for the function pair; both must return ``out_len`` bits."""
    pads = (rng.bits(out_len), rng.bits(out_len))
    return TwoFeKeys(f0, f1, out_len, pads, id(rng) & 0xFFFF)


def twofe_enc(keys: TwoFeKeys, x: Sequence[int]) -> CfeCiphertext:
    x = as_bits(x)
    slots = []
    for f, pad in ((keys.f0, keys.pads[0]), (keys.f1, keys.pads[1])):
        y = as_bits(f(x))
        if len(y) != keys.out_len:
            raise ShapeError(f"function output has {len(y)} bits, expected {keys.out_len}")
        slots.append(xor_bits(y, pad))
    return CfeCiphertext(tuple(slots))


def twofe_keygen(keys: TwoFeKeys, b: int) -> TwoFeSecretKey:
    if b not in (0, 1):
        raise ShapeError("selector must be 0 or 1")
    keys._once.consume("TwoFE master key")
    return TwoFeSecretKey(b, keys.pads[b])


def twofe_dec(sk: TwoFeSecretKey, ct: CfeCiphertext) -> Bits:
    slot = ct.slots[sk.b]
    if len(slot) != len(sk.pad):
        raise ShapeError("slot length does not match the key")
    return xor_bits(slot, sk.pad)


def twofe_sim_ct(out_len: int, rng: RandomSource) -> tuple[CfeCiphertext, CfeSimState]:
    slots = (rng.bits(out_len), rng.bits(out_len))
    return CfeCiphertext(slots), CfeSimState(slots)


def twofe_sim_key(state: CfeSimState, b: int, y: Sequence[int]) -> TwoFeSecretKey:
    """Key for selector ``b`` that opens the simulated ciphertext to ``y``."""
    if b not in (0, 1):
        raise ShapeError("selector must be 0 or 1")
    state._once.consume("TwoFE simulator state")
    y = as_bits(y)
    if len(y) != len(state.slots[b]):
        raise ShapeError("value length differs from the simulated slot")
    return TwoFeSecretKey(b, xor_bits(state.slots[b], y))
