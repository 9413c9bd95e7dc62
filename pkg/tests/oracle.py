"""Independent dense-matrix reference built from numpy only.

Nothing here imports qfekit; tests compare the package against these.
"""

import numpy as np

I2 = np.eye(2, dtype=complex)
X = np.array([[0, 1], [1, 0]], dtype=complex)
Z = np.array([[1, 0], [0, -1]], dtype=complex)
Y = 1j * X @ Z
H = np.array([[1, 1], [1, -1]], dtype=complex) / np.sqrt(2)
S = np.diag([1, 1j])
T = np.diag([1, np.exp(1j * np.pi / 4)])
CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)


def kron(*ms):
    out = np.eye(1, dtype=complex)
    for m in ms:
        out = np.kron(out, m)
    return out


def perm_matrix(order, n):
    """Unitary sending old qubit order[i] to new position i."""
    dim = 2 ** n
    p = np.zeros((dim, dim))
    for i in range(dim):
        bits = [(i >> (n - 1 - q)) & 1 for q in range(n)]
        j = 0
        for q in order:
            j = (j << 1) | bits[q]
        p[j, i] = 1
    return p


def op_on(u, wires, n):
    """Embed u acting on ``wires`` (in that order) into n qubits, qubit 0 most significant."""
    rest = [q for q in range(n) if q not in wires]
    p = perm_matrix(list(wires) + rest, n)
    return p.T @ kron(u, np.eye(2 ** len(rest))) @ p


def conj(u, rho):
    return u @ rho @ u.conj().T


def ptrace(rho, keep, n):
    """Reduced state on ``keep`` (sorted) of an n-qubit matrix."""
    t = rho.reshape([2] * (2 * n))
    drop = [q for q in range(n) if q not in keep]
    for off, q in enumerate(sorted(drop)):
        q2 = q - off
        m = t.ndim // 2
        t = np.trace(t, axis1=q2, axis2=q2 + m)
    d = 2 ** len(keep)
    return t.reshape(d, d)


def epr():
    v = np.array([1, 0, 0, 1], dtype=complex) / np.sqrt(2)
    return np.outer(v, v.conj())


def tdist(a, b):
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(a - b))))


def pure(v):
    v = np.asarray(v, dtype=complex)
    v = v / np.linalg.norm(v)
    return np.outer(v, v.conj())
