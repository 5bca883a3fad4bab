"""Dense qubit-register algebra: Pauli matrices, embeddings, partial traces.

The four-qubit register is always ordered ``A, P, Q, C``; qubit ``A`` is the
most significant tensor factor.  Operators are plain complex ``numpy`` arrays.
"""

from __future__ import annotations

import enum
import itertools
from functools import reduce

import numpy as np

HERMITIAN_TOL = 1e-12


class Qubit(enum.IntEnum):
    """Position of a qubit in the register."""

    A = 0
    P = 1
    Q = 2
    C = 3


REGISTER = (Qubit.A, Qubit.P, Qubit.Q, Qubit.C)
N_QUBITS = len(REGISTER)

IDENTITY = np.eye(2, dtype=complex)
_PAULI = (
    np.array([[0, 1], [1, 0]], dtype=complex),
    np.array([[0, -1j], [1j, 0]], dtype=complex),
    np.array([[1, 0], [0, -1]], dtype=complex),
)


def pauli(i: int) -> np.ndarray:
    """Pauli matrix ``sigma_i`` for ``i`` in {1, 2, 3}; ``i = 0`` gives the identity."""
    if i == 0:
        return IDENTITY.copy()
    if i not in (1, 2, 3):
        raise ValueError(f"Pauli axis must be 0, 1, 2 or 3, got {i!r}")
    return _PAULI[i - 1].copy()


def delta(a: int, b: int) -> int:
    return int(a == b)


def levi_civita(a: int, b: int, c: int) -> int:
    """Totally antisymmetric symbol on {1, 2, 3} with ``eps(1, 2, 3) = 1``."""
    for v in (a, b, c):
        if v not in (1, 2, 3):
            raise ValueError("indices must lie in {1, 2, 3}")
    return (a - b) * (b - c) * (c - a) // 2


def _qubit(at) -> Qubit:
    if isinstance(at, str):
        try:
            return Qubit[at.upper()]
        except KeyError:
            raise ValueError(f"unknown qubit {at!r}") from None
    try:
        return Qubit(int(at))
    except ValueError:
        raise ValueError(f"qubit index must be in 0..3, got {at!r}") from None


def kron(*ops) -> np.ndarray:
    return reduce(np.kron, ops)


def embed(op, at) -> np.ndarray:
    """Act with the 2x2 operator ``op`` on qubit ``at`` and with identity elsewhere."""
    op = np.asarray(op, dtype=complex)
    if op.shape != (2, 2):
        raise ValueError(f"expected a 2x2 operator, got shape {op.shape}")
    q = _qubit(at)
    return kron(*(op if k == q else IDENTITY for k in REGISTER))


def embed_many(ops: dict) -> np.ndarray:
    """Tensor product of single-qubit operators ``{qubit: op}`` (identity elsewhere)."""
    placed = {_qubit(k): np.asarray(v, dtype=complex) for k, v in ops.items()}
    for v in placed.values():
        if v.shape != (2, 2):
            raise ValueError("every operator must be 2x2")
    return kron(*(placed.get(k, IDENTITY) for k in REGISTER))


def embed_pair(op, first, second) -> np.ndarray:
    """Embed a two-qubit operator acting on ``first`` (major) and ``second``.

    The two qubits need not be adjacent; the operator is expanded in the
    Pauli product basis and each term embedded separately.
    """
    op = np.asarray(op, dtype=complex)
    if op.shape != (4, 4):
        raise ValueError("expected a 4x4 operator")
    q1, q2 = _qubit(first), _qubit(second)
    if q1 == q2:
        raise ValueError("the two qubits must differ")
    out = np.zeros((16, 16), dtype=complex)
    for i, j in itertools.product(range(4), repeat=2):
        basis = np.kron(pauli(i), pauli(j))
        coef = np.trace(basis @ op) / 4
        if coef != 0:
            out += coef * embed_many({q1: pauli(i), q2: pauli(j)})
    return out


def dot_sigma(vec, at) -> np.ndarray:
    """``vec . sigma`` acting on qubit ``at``."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (3,):
        raise ValueError("expected a 3-vector")
    return embed(sum(v * pauli(i + 1) for i, v in enumerate(vec)), at)


def sigma_dot_sigma(first, second) -> np.ndarray:
    """``sum_i sigma_i^first sigma_i^second`` on the register."""
    return sum(embed_many({first: pauli(i), second: pauli(i)}) for i in (1, 2, 3))


def partial_trace(M, keep) -> np.ndarray:
    """Trace out every qubit not listed in ``keep``.

    The result is ordered like the register restricted to ``keep``.

    Parameters
    ----------
    M : array_like, shape (16, 16)
    keep : iterable of qubit labels (``Qubit``, index or letter)
    """
    M = np.asarray(M, dtype=complex)
    if M.shape != (2 ** N_QUBITS,) * 2:
        raise ValueError(f"expected a 16x16 register operator, got {M.shape}")
    kept = sorted({_qubit(k) for k in keep})
    if not kept:
        raise ValueError("keep must name at least one qubit")
    T = M.reshape((2,) * (2 * N_QUBITS))
    # contract traced qubits from the highest index down so axis numbers stay valid
    n = N_QUBITS
    for q in sorted(set(REGISTER) - set(kept), reverse=True):
        T = np.trace(T, axis1=int(q), axis2=int(q) + n)
        n -= 1
    d = 2 ** len(kept)
    return T.reshape(d, d)


def dagger(M) -> np.ndarray:
    return np.conj(np.asarray(M)).T


def is_hermitian(M, tol: float = HERMITIAN_TOL) -> bool:
    M = np.asarray(M)
    return M.ndim == 2 and M.shape[0] == M.shape[1] and np.max(np.abs(M - dagger(M)), initial=0.0) <= tol


def eigh(M, tol: float = HERMITIAN_TOL):
    """Eigen-decomposition of a Hermitian matrix, ascending eigenvalues.

    Raises
    ------
    ValueError
        If ``M`` is not Hermitian to ``tol``.
    """
    M = np.asarray(M, dtype=complex)
    if not is_hermitian(M, tol * max(1.0, np.max(np.abs(M), initial=0.0))):
        raise ValueError("matrix is not Hermitian")
    return np.linalg.eigh(0.5 * (M + dagger(M)))


def is_density_matrix(rho, tol: float = 1e-10) -> bool:
    """Hermitian, unit trace and positive semidefinite (to ``tol``)."""
    rho = np.asarray(rho, dtype=complex)
    if not is_hermitian(rho, tol):
        return False
    if abs(np.trace(rho) - 1) > tol:
        return False
    return bool(eigh(rho, tol)[0][0] >= -tol)
