"""Exact evaluation of protocol views that are affine in their randomness.

A *view function* takes a :class:`RandomSource`, runs a protocol and returns
``(label bits, state)``: the classical transcript seen by an adversary and
the quantum registers it holds (plus any spectator).  All constructions in
this package only ever (i) XOR uniform bits into classical strings and
(ii) conjugate registers by Pauli operators chosen from such bits or from
uniform Bell outcomes.  Such a view is described exactly by

    label(r) = L r + c,   state(r) = P(A r) rho_0 P(A r)^dagger   over GF(2),

with r uniform.  :func:`fit_affine` recovers (L, c, A, rho_0) by running the
protocol on the zero script and on every unit script, then checks the model
on random scripts.  :func:`ensemble_distance` computes the blockwise trace
distance of two such ensembles exactly by working modulo the twirling
subgroup, so it never walks the 2^N randomness space.  :func:`enumerate_view`
is the brute-force reference used to cross-check small cases.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .qcore import (Bits, CQState, DensityMatrix, PauliKey, RandomSource, ScriptedSource,
                    apply_pauli, bits_str, int_to_bits, trace_norm)
from .errors import QfeError, ShapeError

ViewFn = Callable[[RandomSource], tuple[Bits, DensityMatrix]]


def count_randomness(fn: ViewFn) -> int:
    src = ScriptedSource()
    fn(src)
    return src.consumed


def _run(fn: ViewFn, script: Sequence[int]) -> tuple[Bits, DensityMatrix]:
    src = ScriptedSource(script)
    label, rho = fn(src)
    if src.consumed != len(script):
        raise QfeError("view function consumed a script-dependent amount of randomness")
    return tuple(label), rho


def enumerate_view(fn: ViewFn, max_bits: int = 18) -> CQState:
    """Brute-force CQ state over every randomness script."""
    n_bits = count_randomness(fn)
    if n_bits > max_bits:
        raise QfeError(f"{n_bits} random bits is too many to enumerate")
    blocks: dict[str, np.ndarray] = {}
    w = 2.0 ** -n_bits
    n = 0
    for script in itertools.product((0, 1), repeat=n_bits):
        label, rho = _run(fn, script)
        key = bits_str(label)
        n = rho.n
        blocks[key] = blocks[key] + w * rho.data if key in blocks else w * rho.data
    return CQState(blocks, n)


# ----------------------------------------------------------- Pauli matching

def _pauli_coefficients(rho: np.ndarray) -> np.ndarray:
    """Tr(X^x Z^z rho) for all x, z (as integers, qubit 0 = most significant)."""
    dim = rho.shape[0]
    j = np.arange(dim)
    m = np.stack([rho[j, j ^ x] for x in range(dim)])
    # Walsh-Hadamard transform along the second axis
    h = 1
    m = m.copy()
    while h < dim:
        m = m.reshape(dim, -1, 2, h)
        a = m[:, :, 0, :].copy()
        b = m[:, :, 1, :].copy()
        m[:, :, 0, :] = a + b
        m[:, :, 1, :] = a - b
        m = m.reshape(dim, dim)
        h *= 2
    return m


def _parity(v: int) -> int:
    return bin(v).count("1") & 1


def find_pauli(rho0: DensityMatrix, rho1: DensityMatrix, tol: float = 1e-9) -> tuple[int, int]:
    """(x, z) such that X^x Z^z rho0 (..)^dagger = rho1, or raise."""
    if rho0.n != rho1.n:
        raise ShapeError("states of different width")
    q = rho0.n
    c0 = _pauli_coefficients(rho0.data)
    c1 = _pauli_coefficients(rho1.data)
    if np.max(np.abs(np.abs(c0) - np.abs(c1))) > tol * (1 << q):
        raise QfeError("states are not related by a Pauli conjugation")
    # unknown u = (ux, uz) packed as ux << q | uz ; equation: ux.z + uz.x = flip
    pivots: dict[int, tuple[int, int]] = {}
    xs, zs = np.nonzero(np.abs(c0) > tol)
    for x, z in zip(xs.tolist(), zs.tolist()):
        ratio = c1[x, z] / c0[x, z]
        if abs(ratio - 1) < 1e-6:
            rhs = 0
        elif abs(ratio + 1) < 1e-6:
            rhs = 1
        else:
            raise QfeError("states are not related by a Pauli conjugation")
        row = (z << q) | x
        while row:
            top = row.bit_length() - 1
            if top not in pivots:
                pivots[top] = (row, rhs)
                break
            prow, prhs = pivots[top]
            row ^= prow
            rhs ^= prhs
        else:
            if rhs:
                raise QfeError("inconsistent Pauli sign pattern")
    # back-substitute with free variables set to zero
    sol = 0
    for top in sorted(pivots):
        row, rhs = pivots[top]
        val = rhs ^ _parity(row & sol & ~(1 << top))
        if val:
            sol |= 1 << top
    return sol >> q, sol & ((1 << q) - 1)


def _pauli_from_int(u: int, q: int) -> PauliKey:
    return PauliKey(int_to_bits(u >> q, q), int_to_bits(u & ((1 << q) - 1), q))


def _conj(rho: np.ndarray, u: int, q: int) -> np.ndarray:
    if u == 0:
        return rho
    return apply_pauli(DensityMatrix._wrap(rho), _pauli_from_int(u, q)).data


# ------------------------------------------------------------ affine model

@dataclass(frozen=True)
class AffineEnsemble:
    """label = sum_i r_i l_i + c,  state = P(sum_i r_i u_i) rho0 P(..)^dagger."""

    n_vars: int
    label_len: int
    cols: tuple[tuple[int, int], ...]   # per variable: (label vector, Pauli vector)
    const: int
    rho0: DensityMatrix

    @property
    def q(self) -> int:
        return self.rho0.n

    def point(self, r: Sequence[int]) -> tuple[int, int]:
        lab, pu = self.const, 0
        for ri, (l, u) in zip(r, self.cols):
            if ri:
                lab ^= l
                pu ^= u
        return lab, pu

    def to_cq(self) -> CQState:
        """Explicit CQ state (only for small ensembles)."""
        if self.n_vars > 18:
            raise QfeError("ensemble too large to expand")
        blocks: dict[str, np.ndarray] = {}
        w = 2.0 ** -self.n_vars
        for r in itertools.product((0, 1), repeat=self.n_vars):
            lab, pu = self.point(r)
            key = bits_str(int_to_bits(lab, self.label_len))
            blk = w * _conj(self.rho0.data, pu, self.q)
            blocks[key] = blocks[key] + blk if key in blocks else blk
        return CQState(blocks, self.q)


def _bits_to_vec(bits: Sequence[int]) -> int:
    v = 0
    for b in bits:
        v = (v << 1) | int(b)
    return v


def fit_affine(fn: ViewFn, checks: int = 6, seed: int = 12345) -> AffineEnsemble:
    """Recover the affine model of a view function and validate it."""
    n_vars = count_randomness(fn)
    zero = (0,) * n_vars
    lab0, rho0 = _run(fn, zero)
    m = len(lab0)
    c = _bits_to_vec(lab0)
    q = rho0.n
    cols = []
    for i in range(n_vars):
        script = [0] * n_vars
        script[i] = 1
        lab, rho = _run(fn, script)
        if len(lab) != m or rho.n != q:
            raise ShapeError("view shape depends on the randomness")
        ux, uz = find_pauli(rho0, rho)
        cols.append((_bits_to_vec(lab) ^ c, (ux << q) | uz))
    ens = AffineEnsemble(n_vars, m, tuple(cols), c, rho0)
    rng = np.random.default_rng(seed)
    for _ in range(checks if n_vars else 0):
        r = rng.integers(0, 2, size=n_vars).tolist()
        lab, rho = _run(fn, r)
        elab, pu = ens.point(r)
        if _bits_to_vec(lab) != elab:
            raise QfeError("classical view is not affine in the randomness")
        pred = _conj(rho0.data, pu, q)
        if 0.5 * trace_norm(pred - rho.data) > 1e-9:
            raise QfeError("quantum view is not a Pauli-affine function of the randomness")
    return ens


# ---------------------------------------------------------- GF(2) helpers

class _Basis:
    """Incremental row-echelon basis of GF(2) vectors stored as ints."""

    def __init__(self):
        self.rows: dict[int, int] = {}

    def reduce(self, v: int) -> int:
        while v:
            top = v.bit_length() - 1
            r = self.rows.get(top)
            if r is None:
                return v
            v ^= r
        return 0

    def add(self, v: int) -> bool:
        v = self.reduce(v)
        if v:
            self.rows[v.bit_length() - 1] = v
            return True
        return False

    @property
    def rank(self) -> int:
        return len(self.rows)


def _twirl(rho: np.ndarray, gens: Sequence[int], q: int) -> np.ndarray:
    out = rho
    for g in gens:
        out = 0.5 * (out + _conj(out, g, q))
    return out


def _analyse(ens: AffineEnsemble):
    """Rank of the label map and generators of the twirling subgroup."""
    shift = 2 * ens.q
    basis = _Basis()
    twirl = _Basis()
    for l, u in ens.cols:
        v = basis.reduce((l << shift) | u)
        if v >> shift:
            basis.add(v)
        elif v:
            twirl.add(v)
    return basis, twirl


def ensemble_distance(e1: AffineEnsemble, e2: AffineEnsemble) -> float:
    """Exact blockwise trace distance between two affine ensembles."""
    if e1.label_len != e2.label_len or e1.q != e2.q:
        raise ShapeError("ensembles have different view layouts")
    q = e1.q
    shift = 2 * q
    b1, s1 = _analyse(e1)
    b2, s2 = _analyse(e2)
    r1, r2 = b1.rank, b2.rank
    tau1 = _twirl(e1.rho0.data, list(s1.rows.values()), q)
    tau2 = _twirl(e2.rho0.data, list(s2.rows.values()), q)
    s_all = _Basis()
    for g in list(s1.rows.values()) + list(s2.rows.values()):
        s_all.add(g)

    # Joint variables (lambda1, lambda2) with constraint L1 l1 + c1 = L2 l2 + c2.
    # Track for each combination: (constraint residue | label part | delta part).
    lab_shift = shift
    con_shift = shift + e1.label_len
    gens = []
    for l, u in e1.cols:
        gens.append((l << con_shift) | (l << lab_shift) | u)
    for l, u in e2.cols:
        gens.append((l << con_shift) | u)
    target = (e1.const ^ e2.const) << con_shift
    # eliminate on the constraint part to find a particular solution and the kernel
    pivots: dict[int, int] = {}
    kernel = []
    for g in gens:
        v = g
        while v >> con_shift:
            top = v.bit_length() - 1
            if top not in pivots:
                pivots[top] = v
                break
            v ^= pivots[top]
        else:
            kernel.append(v)
    t = target
    part = 0
    while t >> con_shift:
        top = t.bit_length() - 1
        if top not in pivots:
            return 1.0  # label supports are disjoint
        t ^= pivots[top]
        part ^= pivots[top]
    # `part` carries constraint bits equal to the target; its lower bits give
    # the label/delta of one common point (up to the constant offsets).
    y0_delta = part & ((1 << shift) - 1)
    # kernel vectors: split into label directions and pure delta directions
    delta_dirs = []
    lab_basis: dict[int, int] = {}
    dim_y = 0
    for k in kernel:
        v = k & ((1 << con_shift) - 1)
        while v >> lab_shift:
            top = v.bit_length() - 1
            if top not in lab_basis:
                lab_basis[top] = v
                dim_y += 1
                break
            v ^= lab_basis[top]
        else:
            if s_all.reduce(v):
                raise QfeError("internal: kernel delta outside the twirling group")
    for v in lab_basis.values():
        delta_dirs.append(v & ((1 << shift) - 1))
    # distinct delta values modulo the twirl group
    reps_basis = _Basis()
    for g in s_all.rows.values():
        reps_basis.add(g)
    free = []
    for d in delta_dirs:
        if reps_basis.add(d):
            free.append(d)
    r = len(free)
    mult = 2.0 ** (dim_y - r)
    w1 = 2.0 ** (-r1)
    w2 = 2.0 ** (-r2)
    total = 0.0
    base = y0_delta
    for combo in itertools.product((0, 1), repeat=r):
        d = base
        for bit, f in zip(combo, free):
            if bit:
                d ^= f
        x = mult * w1 * tau1 - mult * w2 * _conj(tau2, d, q)
        total += trace_norm(x)
    inter1 = 2.0 ** (dim_y - r1)
    inter2 = 2.0 ** (dim_y - r2)
    return 0.5 * total + 0.5 * ((1 - inter1) + (1 - inter2))


def view_distance(fn1: ViewFn, fn2: ViewFn) -> float:
    """Exact distance between the ensembles produced by two view functions."""
    return ensemble_distance(fit_affine(fn1), fit_affine(fn2))
