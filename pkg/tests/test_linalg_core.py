import itertools

import numpy as np
import pytest

from realsep import linalg_core as lc
from realsep.linalg_core import Qubit


def test_pauli_products_follow_structure_constants():
    for a, b in itertools.product((1, 2, 3), repeat=2):
        expected = lc.delta(a, b) * np.eye(2) + 1j * sum(
            lc.levi_civita(a, b, c) * lc.pauli(c) for c in (1, 2, 3))
        np.testing.assert_array_equal(lc.pauli(a) @ lc.pauli(b), expected)


def test_pauli_examples():
    np.testing.assert_array_equal(lc.pauli(1) @ lc.pauli(2), 1j * lc.pauli(3))
    np.testing.assert_array_equal(lc.pauli(3) @ lc.pauli(3), np.eye(2))
    np.testing.assert_array_equal(lc.pauli(0), np.eye(2))


@pytest.mark.parametrize("bad", [4, -1, 1.5])
def test_pauli_rejects_bad_axis(bad):
    with pytest.raises(ValueError):
        lc.pauli(bad)


def test_levi_civita_contraction_identity():
    r = (1, 2, 3)
    for b, c, d, e in itertools.product(r, repeat=4):
        lhs = sum(lc.levi_civita(a, b, c) * lc.levi_civita(a, d, e) for a in r)
        rhs = lc.delta(b, d) * lc.delta(c, e) - lc.delta(b, e) * lc.delta(c, d)
        assert lhs == rhs


def test_embed_identity_trace_and_commutation():
    for q in lc.REGISTER:
        np.testing.assert_array_equal(lc.embed(np.eye(2), q), np.eye(16))
    assert lc.embed(lc.pauli(3), Qubit.A).trace() == 0
    xa = lc.embed(lc.pauli(1), "A")
    xc = lc.embed(lc.pauli(1), "C")
    np.testing.assert_array_equal(xa @ xc, xc @ xa)


def test_embed_register_order():
    # A is the most significant factor
    np.testing.assert_array_equal(lc.embed(lc.pauli(3), Qubit.A),
                                  np.kron(lc.pauli(3), np.eye(8)))
    np.testing.assert_array_equal(lc.embed(lc.pauli(3), Qubit.C),
                                  np.kron(np.eye(8), lc.pauli(3)))


def test_embed_rejects_wrong_size():
    with pytest.raises(ValueError):
        lc.embed(np.eye(3), Qubit.A)
    with pytest.raises(ValueError):
        lc.embed(np.eye(2), 7)


def test_embed_pair_matches_adjacent_kron(rng):
    op = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    np.testing.assert_allclose(lc.embed_pair(op, Qubit.P, Qubit.Q),
                               np.kron(np.kron(np.eye(2), op), np.eye(2)), atol=1e-12)


def test_partial_trace_identity():
    np.testing.assert_allclose(lc.partial_trace(np.eye(16), keep={Qubit.A, Qubit.C}),
                               4 * np.eye(4))


def test_partial_trace_of_products(rng):
    for _ in range(20):
        X = rng.normal(size=(2, 2)) + 1j * rng.normal(size=(2, 2))
        Y = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        np.testing.assert_allclose(lc.partial_trace(np.kron(X, Y), keep=[Qubit.A]),
                                   np.trace(Y) * X, atol=1e-12)
        Z = rng.normal(size=(4, 4))
        W = rng.normal(size=(4, 4))
        np.testing.assert_allclose(lc.partial_trace(np.kron(Z, W), keep=["Q", "C"]),
                                   np.trace(Z) * W, atol=1e-12)


def test_partial_trace_non_adjacent_keeps_register_order(rng):
    ops = {q: rng.normal(size=(2, 2)) for q in lc.REGISTER}
    M = lc.kron(*(ops[q] for q in lc.REGISTER))
    expected = np.trace(ops[Qubit.P]) * np.trace(ops[Qubit.Q]) * np.kron(ops[Qubit.A], ops[Qubit.C])
    np.testing.assert_allclose(lc.partial_trace(M, keep=[Qubit.C, Qubit.A]), expected, atol=1e-12)


def test_partial_trace_errors():
    with pytest.raises(ValueError):
        lc.partial_trace(np.eye(16), keep=[])
    with pytest.raises(ValueError):
        lc.partial_trace(np.eye(8), keep=[Qubit.A])


def test_eigh_reconstructs_and_density_spectrum(rng):
    for _ in range(20):
        G = rng.normal(size=(16, 16)) + 1j * rng.normal(size=(16, 16))
        H = G + G.conj().T
        w, V = lc.eigh(H)
        np.testing.assert_allclose(V @ np.diag(w) @ V.conj().T, H, atol=1e-10)
        rho = G @ G.conj().T
        rho /= np.trace(rho)
        assert lc.eigh(rho)[0][0] >= -1e-10
        assert lc.is_density_matrix(rho)


def test_eigh_rejects_non_hermitian():
    with pytest.raises(ValueError):
        lc.eigh(np.array([[0, 1], [0, 0]]))


def test_dot_sigma_squares_to_identity(rng):
    v = rng.normal(size=3)
    v /= np.linalg.norm(v)
    S = lc.dot_sigma(v, Qubit.P)
    np.testing.assert_allclose(S @ S, np.eye(16), atol=1e-12)
