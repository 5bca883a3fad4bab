"""Explicit four-qubit complex model of the three-observer network.

Two singlet sources feed qubits ``A, P`` and ``Q, C``.  The central observer
measures ``P, Q`` with four projectors ``B_b`` and the outer observers measure
``a . sigma`` and ``c . sigma``.  Correlations conditioned on ``b`` are
available both from full matrix traces and from their closed forms::

    <AC||b> = (1/4) sum_i eps[b, i] a_i c_i,   eps[b, i] = -1 if b in (0, i) else +1
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg_core import Qubit, dot_sigma, is_density_matrix, partial_trace, pauli

N_OUTCOMES = 4
UNIT_TOL = 1e-12


def outcome_signs() -> np.ndarray:
    """``eps[b, i]``: sign of ``sigma_i sigma_i`` in projector ``B_b`` (4 x 3)."""
    eps = np.ones((N_OUTCOMES, 3))
    eps[0, :] = -1
    for i in range(3):
        eps[i + 1, i] = -1
    return eps


def _pair_dot(eps=(1.0, 1.0, 1.0)) -> np.ndarray:
    """``sum_i eps_i sigma_i (x) sigma_i`` on two qubits."""
    return sum(e * np.kron(pauli(i), pauli(i)) for e, i in zip(eps, (1, 2, 3)))


@dataclass(frozen=True)
class SourceStates:
    rho_L: np.ndarray     # 4x4 on (A, P)
    rho_R: np.ndarray     # 4x4 on (Q, C)

    @property
    def joint(self) -> np.ndarray:
        """``rho_L (x) rho_R`` on the register ``A, P, Q, C``."""
        return np.kron(self.rho_L, self.rho_R)


@dataclass(frozen=True)
class BMeasurement:
    projectors: tuple     # four 4x4 projectors on (P, Q)

    def register(self, b: int) -> np.ndarray:
        """``B_b`` embedded in the register (identity on A and C)."""
        return np.kron(np.kron(np.eye(2), self.projectors[b]), np.eye(2))


def build_network() -> tuple[SourceStates, BMeasurement]:
    """Singlet sources ``(1 - sigma . sigma)/4`` and ``B_b = (1 + sum_i eps[b, i] sigma_i^P sigma_i^Q)/4``."""
    eye = np.eye(4, dtype=complex)
    rho = (eye - _pair_dot()) / 4
    eps = outcome_signs()
    proj = tuple((eye + _pair_dot(eps[b])) / 4 for b in range(N_OUTCOMES))
    return SourceStates(rho, rho.copy()), BMeasurement(proj)


def _unit(vectors, name) -> np.ndarray:
    v = np.atleast_2d(np.asarray(vectors, dtype=float))
    if v.shape[-1] != 3:
        raise ValueError(f"{name} settings must be 3-vectors")
    norms = np.linalg.norm(v, axis=1)
    if np.any(np.abs(norms - 1) > UNIT_TOL * 10):
        raise ValueError(f"{name} settings must have unit norm (got norms {norms})")
    return v


@dataclass
class CorrelationTensor:
    """Outcome-resolved correlations for every setting pair.

    ``corr[b, x, z] = <A_x C_z || b>``.  The marginals ``<A_x||b>``,
    ``<C_z||b>`` and ``p(b)`` are stored per setting pair (``*_xz`` arrays of
    shape ``(4, n_x, n_z)``), which is what the no-signaling check needs; the
    setting-free views average over the idle index.
    """

    corr: np.ndarray
    margA_xz: np.ndarray
    margC_xz: np.ndarray
    pb_xz: np.ndarray

    @property
    def margA(self) -> np.ndarray:
        return self.margA_xz.mean(axis=2)

    @property
    def margC(self) -> np.ndarray:
        return self.margC_xz.mean(axis=1)

    @property
    def pb(self) -> np.ndarray:
        return self.pb_xz.mean(axis=(1, 2))

    @classmethod
    def from_probabilities(cls, P: np.ndarray) -> "CorrelationTensor":
        """From ``P[x, z, a, b, c]`` with outcome index 0 for +1 and 1 for -1."""
        P = np.asarray(P, dtype=float)
        s = np.array([1.0, -1.0])
        corr = np.einsum("xzabc,a,c->bxz", P, s, s)
        mA = np.einsum("xzabc,a->bxz", P, s)
        mC = np.einsum("xzabc,c->bxz", P, s)
        pb = np.einsum("xzabc->bxz", P)
        return cls(corr, mA, mC, pb)

    def to_dict(self) -> dict:
        return {"corr": self.corr.tolist(), "margA": self.margA.tolist(),
                "margC": self.margC.tolist(), "pb": self.pb.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def correlations_closed_form(a, c) -> CorrelationTensor:
    """Closed-form tensor; marginals vanish and ``p(b) = 1/4``."""
    a = _unit(a, "A")
    c = _unit(c, "C")
    eps = outcome_signs()
    corr = np.einsum("bi,xi,zi->bxz", eps, a, c) / 4
    shape = (N_OUTCOMES, len(a), len(c))
    return CorrelationTensor(corr, np.zeros(shape), np.zeros(shape), np.full(shape, 0.25))


def correlations_trace(a, c, network=None) -> CorrelationTensor:
    """Tensor from ``Tr(A C B_b rho_L rho_R)`` on the full register."""
    a = _unit(a, "A")
    c = _unit(c, "C")
    src, meas = network or build_network()
    rho = src.joint
    Bs = [meas.register(b) @ rho for b in range(N_OUTCOMES)]
    A_ops = [dot_sigma(v, Qubit.A) for v in a]
    C_ops = [dot_sigma(v, Qubit.C) for v in c]
    shape = (N_OUTCOMES, len(a), len(c))
    corr, mA, mC, pb = (np.zeros(shape) for _ in range(4))
    for b, Bb in enumerate(Bs):
        p = np.trace(Bb).real
        tA = [np.trace(Ax @ Bb).real for Ax in A_ops]
        tC = [np.trace(Cz @ Bb).real for Cz in C_ops]
        for x, Ax in enumerate(A_ops):
            for z, Cz in enumerate(C_ops):
                corr[b, x, z] = np.trace(Ax @ Cz @ Bb).real
                mA[b, x, z] = tA[x]
                mC[b, x, z] = tC[z]
                pb[b, x, z] = p
    return CorrelationTensor(corr, mA, mC, pb)


def correlations(a, c) -> CorrelationTensor:
    """Correlation tensor for settings ``a`` (3 vectors) and ``c`` (3 or 4 vectors)."""
    c_arr = np.atleast_2d(np.asarray(c, dtype=float))
    if len(np.atleast_2d(np.asarray(a, dtype=float))) != 3 or len(c_arr) not in (3, 4):
        raise ValueError("expected 3 A-settings and 3 or 4 C-settings")
    return correlations_closed_form(a, c)


def probabilities(a, c, network=None) -> np.ndarray:
    """Full table ``P[x, z, a, b, c] = p(a, b, c | x, z)`` by register traces.

    Outcome index 0 stands for +1 and 1 for -1.
    """
    a = _unit(a, "A")
    c = _unit(c, "C")
    src, meas = network or build_network()
    rho = src.joint
    eye = np.eye(16)
    P = np.zeros((len(a), len(c), 2, N_OUTCOMES, 2))
    for x, av in enumerate(a):
        A = dot_sigma(av, Qubit.A)
        PA = [(eye + A) / 2, (eye - A) / 2]
        for z, cv in enumerate(c):
            C = dot_sigma(cv, Qubit.C)
            PC = [(eye + C) / 2, (eye - C) / 2]
            for i in range(2):
                for b in range(N_OUTCOMES):
                    Bb = meas.register(b)
                    for k in range(2):
                        P[x, z, i, b, k] = np.trace(PA[i] @ Bb @ PC[k] @ rho).real
    return P


def conditional_state(b: int, network=None) -> np.ndarray:
    """``Tr_PQ(B_b rho_L rho_R)``, the unnormalized post-measurement state of A, C."""
    src, meas = network or build_network()
    return partial_trace(meas.register(b) @ src.joint, keep=(Qubit.A, Qubit.C))


@dataclass
class NoSignalingReport:
    max_dev_margA: float       # spread of <A_x||b> over z
    max_dev_margC: float       # spread of <C_z||b> over x
    max_dev_pb: float          # spread of p(b) over (x, z)
    flagged: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.flagged


def check_nosignaling(t: CorrelationTensor, tol: float = 1e-12) -> NoSignalingReport:
    """Deviation of each marginal from independence of the remote setting."""
    devA = np.ptp(t.margA_xz, axis=2)      # (b, x)
    devC = np.ptp(t.margC_xz, axis=1)      # (b, z)
    devP = np.ptp(t.pb_xz.reshape(N_OUTCOMES, -1), axis=1)
    flagged = []
    for b, x in zip(*np.nonzero(devA > tol)):
        flagged.append(f"<A_{x + 1}||{b}> depends on z (spread {devA[b, x]:.3e})")
    for b, z in zip(*np.nonzero(devC > tol)):
        flagged.append(f"<C_{z + 1}||{b}> depends on x (spread {devC[b, z]:.3e})")
    for b in np.flatnonzero(devP > tol):
        flagged.append(f"p({b}) depends on (x, z) (spread {devP[b]:.3e})")
    return NoSignalingReport(float(devA.max(initial=0)), float(devC.max(initial=0)),
                             float(devP.max(initial=0)), flagged)


def check_states(tol: float = 1e-10) -> bool:
    """Both embedded sources give a valid joint density matrix; projectors are complete."""
    src, meas = build_network()
    total = sum(meas.projectors)
    ok = is_density_matrix(src.rho_L, tol) and is_density_matrix(src.rho_R, tol)
    ok &= is_density_matrix(src.joint, tol)
    ok &= np.allclose(total, np.eye(4), atol=tol)
    for B in meas.projectors:
        ok &= np.allclose(B @ B, B, atol=tol) and np.allclose(B, B.conj().T, atol=tol)
    return bool(ok)
