import numpy as np
import pytest

from realsep import network as nw
from realsep import witness
from realsep.linalg_core import Qubit, embed_many, eigh, partial_trace, pauli

from conftest import random_unit

X = np.array([1.0, 0, 0])
Y = np.array([0, 1.0, 0])
Z = np.array([0, 0, 1.0])


def test_b0_is_singlet_projector():
    _, meas = nw.build_network()
    B0 = meas.projectors[0]
    expected = (np.eye(4) - sum(np.kron(pauli(i), pauli(i)) for i in (1, 2, 3))) / 4
    np.testing.assert_allclose(B0, expected, atol=1e-15)


def test_projectors_complete_and_idempotent():
    _, meas = nw.build_network()
    np.testing.assert_allclose(sum(meas.projectors), np.eye(4), atol=1e-12)
    for B in meas.projectors:
        np.testing.assert_allclose(B @ B, B, atol=1e-12)
        np.testing.assert_allclose(B, B.conj().T, atol=1e-12)
        assert np.isclose(np.trace(B).real, 1.0)


def test_source_states_are_states():
    src, _ = nw.build_network()
    w, _ = eigh(src.rho_L)
    np.testing.assert_allclose(w, [0, 0, 0, 1], atol=1e-12)
    assert nw.check_states()
    assert np.isclose(np.trace(src.joint).real, 1.0)


@pytest.mark.parametrize("b, signs", [
    (0, (-1, -1, -1)), (1, (-1, 1, 1)), (2, (1, -1, 1)), (3, (1, 1, -1))])
def test_conditional_states_match_displayed_forms(b, signs):
    direct = (np.eye(4) + sum(s * np.kron(pauli(i), pauli(i)) for s, i in zip(signs, (1, 2, 3)))) / 16
    np.testing.assert_allclose(nw.conditional_state(b), direct, atol=1e-12)
    # same operator built on the register and reduced: Tr_PQ(O_AC) = 4 O
    reg = (np.eye(16) + sum(s * embed_many({Qubit.A: pauli(i), Qubit.C: pauli(i)})
                            for s, i in zip(signs, (1, 2, 3)))) / 64
    np.testing.assert_allclose(partial_trace(reg, keep=(Qubit.A, Qubit.C)), direct, atol=1e-12)


def test_closed_form_examples():
    t = nw.correlations_closed_form([X], [X])
    np.testing.assert_allclose(t.corr[:, 0, 0], [-0.25, -0.25, 0.25, 0.25], atol=1e-15)
    assert nw.correlations_closed_form([X], [Z]).corr[0, 0, 0] == 0
    np.testing.assert_allclose(t.pb, 0.25)


def test_trace_and_closed_forms_agree(rng):
    for _ in range(1000):
        a, c = random_unit(rng, 1), random_unit(rng, 1)
        tc = nw.correlations_closed_form(a, c)
        tt = nw.correlations_trace(a, c)
        np.testing.assert_allclose(tt.corr, tc.corr, atol=1e-12)
        np.testing.assert_allclose(tt.margA_xz, 0, atol=1e-12)
        np.testing.assert_allclose(tt.pb_xz, 0.25, atol=1e-12)


def test_closed_form_of_zero_outcome(rng):
    a, c = random_unit(rng), random_unit(rng)
    assert np.isclose(nw.correlations(np.array([a, a, a]), np.array([c, c, c])).corr[0, 0, 0],
                      -a @ c / 4, atol=1e-15)


def test_unconditional_correlation_vanishes(rng):
    t = nw.correlations(random_unit(rng, 3), random_unit(rng, 4))
    np.testing.assert_allclose(t.corr.sum(axis=0), 0, atol=1e-12)


def test_correlations_validate_settings():
    with pytest.raises(ValueError):
        nw.correlations([X * 1.1, Y, Z], [X, Y, Z])
    with pytest.raises(ValueError):
        nw.correlations([X, Y], [X, Y, Z])
    with pytest.raises(ValueError):
        nw.correlations([X, Y, Z], [X, Y])


def test_probabilities_normalized_and_reconstruct(rng):
    a, c = random_unit(rng, 3), random_unit(rng, 3)
    P = nw.probabilities(a, c)
    assert P.min() >= -1e-14
    np.testing.assert_allclose(P.sum(axis=(2, 3, 4)), 1, atol=1e-12)
    t = nw.CorrelationTensor.from_probabilities(P)
    np.testing.assert_allclose(t.corr, nw.correlations(a, c).corr, atol=1e-12)
    assert np.all(np.abs(t.corr) <= t.pb_xz + 1e-12)
    P1 = nw.probabilities([X], [X])
    s = np.array([1, -1])
    assert np.isclose(np.einsum("abc,a,c->", P1[0, 0][:, :1, :], s, s), -0.25, atol=1e-12)


def test_nosignaling_exact_model(rng):
    t = nw.CorrelationTensor.from_probabilities(nw.probabilities(random_unit(rng, 3), random_unit(rng, 3)))
    rep = nw.check_nosignaling(t)
    assert rep.ok
    assert max(rep.max_dev_margA, rep.max_dev_margC, rep.max_dev_pb) < 1e-12


def test_nosignaling_tetrahedron_settings():
    res = witness.optimize_settings(witness.TETRAHEDRON.matrix(), seed=1)
    t = nw.CorrelationTensor.from_probabilities(nw.probabilities(res.a, res.c))
    assert nw.check_nosignaling(t).ok


def test_nosignaling_flags_perturbation(rng):
    P = nw.probabilities(random_unit(rng, 3), random_unit(rng, 3))
    # raise corr[0][1][1] by 0.1 by moving weight from (a=-, c=+) to (a=+, c=+) at b = 0
    P[1, 1, 0, 0, 0] += 0.05
    P[1, 1, 1, 0, 0] -= 0.05
    t = nw.CorrelationTensor.from_probabilities(P)
    rep = nw.check_nosignaling(t)
    assert not rep.ok
    assert any("<A_2||0>" in msg for msg in rep.flagged)
    assert not any("p(" in msg for msg in rep.flagged)
    assert rep.max_dev_margA == pytest.approx(0.1)


def test_tensor_json_round_trip(rng):
    import json
    t = nw.correlations(random_unit(rng, 3), random_unit(rng, 3))
    d = json.loads(t.to_json())
    np.testing.assert_allclose(d["corr"], t.corr)
