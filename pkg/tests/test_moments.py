import json

import numpy as np
import pytest

from realsep import network as nw
from realsep import sdp, witness
from realsep.moments import (RelaxationLevel, SolverFailure, build_moment_problem, canonicalize,
                             export_problem, parse_word, real_bound, word_str)

from conftest import F_MINUS2, F_NEAR, F_TETRA, random_unit

SIGN = witness.RESOLVED_SIGN_TABLE


def _fr(f, level=(2, 2), **kw):
    return real_bound(f, SIGN, RelaxationLevel(*level), **kw)


# -- words -----------------------------------------------------------------------

def test_canonicalize_examples():
    assert canonicalize([("A", 1), ("A", 1)]) == ()
    assert canonicalize([("C", 2), ("A", 1)]) == (("A", 1), ("C", 2))
    assert canonicalize([("A", 1), ("A", 2), ("A", 2), ("C", 1), ("C", 1)]) == (("A", 1),)
    with pytest.raises(ValueError):
        canonicalize([("B", 1)])


def _reduce_random_order(letters, rng):
    """Independent reducer: bubble C past A, then cancel a random adjacent pair at a time."""
    w = list(letters)
    changed = True
    while changed:
        changed = False
        for i in range(len(w) - 1):
            if w[i][0] == "C" and w[i + 1][0] == "A":
                w[i], w[i + 1] = w[i + 1], w[i]
                changed = True
    while True:
        pairs = [i for i in range(len(w) - 1) if w[i] == w[i + 1]]
        if not pairs:
            return tuple(w)
        i = pairs[rng.integers(len(pairs))]
        del w[i:i + 2]


def test_canonicalize_idempotent_and_confluent(rng):
    alphabet = [("A", 1), ("A", 2), ("A", 3), ("C", 1), ("C", 2), ("C", 3)]
    for _ in range(500):
        word = [alphabet[k] for k in rng.integers(0, 6, size=rng.integers(0, 10))]
        w = canonicalize(word)
        assert canonicalize(w) == w
        assert _reduce_random_order(word, rng) == w
        assert parse_word(word_str(w)) == w


# -- assembly ---------------------------------------------------------------------

def test_level_one_index_and_blocks():
    mp = build_moment_problem(F_MINUS2, SIGN, RelaxationLevel(1, 1))
    assert len(mp.index) == 16
    assert mp.n_blocks == 4


def test_level_two_variable_count_regression():
    mp = build_moment_problem(F_MINUS2, SIGN, RelaxationLevel(2, 2))
    assert len(mp.index) == 100
    assert mp.n_keys == 1108
    assert mp.n_vars == 4432


def test_unsupported_level():
    with pytest.raises(ValueError):
        RelaxationLevel(4, 2)


def test_objective_uses_only_degree_one_one_moments():
    mp = build_moment_problem(F_TETRA, SIGN, RelaxationLevel(2, 2))
    for v in np.flatnonzero(mp.objective):
        a, c = mp.keys[v % mp.n_keys]
        assert len(a) == 1 and len(c) == 1


def test_moment_blocks_are_symmetric():
    mp = build_moment_problem(F_MINUS2, SIGN, RelaxationLevel(2, 2))
    np.testing.assert_array_equal(mp.entry_key, mp.entry_key.T)


def test_export_problem(tmp_path):
    mp = build_moment_problem(F_MINUS2, SIGN, RelaxationLevel(1, 1))
    p = tmp_path / "sdp.json"
    export_problem(mp, p)
    inst = sdp.SdpInstance.from_json(p)
    assert sdp.solve(inst).primal_obj == pytest.approx(_fr(F_MINUS2, (1, 1)).value, abs=1e-7)
    d = json.loads(json.dumps(mp.to_dict()))
    assert d["level"] == [1, 1]


# -- bounds -----------------------------------------------------------------------

@pytest.mark.parametrize("f, expected, tol", [
    (F_MINUS2, 13.677, 0.02), (F_TETRA, 3.7367, 0.02), (F_NEAR, 21.607, 0.05)])
def test_published_real_bounds(f, expected, tol):
    rb = _fr(f)
    assert rb.status == sdp.OPTIMAL
    assert rb.value == pytest.approx(expected, abs=tol)
    assert rb.verification.ok
    assert rb.rel_gap <= 1e-8
    assert rb.certified_upper_bound >= rb.value - 1e-9


def test_frozen_real_bound_values():
    # regression constants of this relaxation (b-summed transpose constraint)
    assert _fr(F_MINUS2).value == pytest.approx(13.66772088, abs=1e-6)
    assert _fr(F_TETRA).value == pytest.approx(3.73668943, abs=1e-6)
    assert _fr(F_NEAR).value == pytest.approx(21.6090352, abs=1e-6)


def test_per_block_variant_collapses_to_classical():
    for f in (F_MINUS2, F_TETRA, F_NEAR):
        strict = _fr(f, per_block_ppt=True)
        assert strict.value == pytest.approx(witness.classical_bound(f)[0], abs=1e-6)
        assert strict.value <= _fr(f).value + 1e-7


def test_symmetry_reduction_preserves_value():
    assert _fr(F_MINUS2, symmetry="parity").value == pytest.approx(_fr(F_MINUS2).value, abs=1e-7)
    assert (_fr(F_TETRA, (1, 1), symmetry="none").value
            == pytest.approx(_fr(F_TETRA, (1, 1)).value, abs=1e-7))


def test_levels_are_monotone():
    assert _fr(F_MINUS2, (1, 1)).value >= _fr(F_MINUS2, (2, 2)).value - 1e-7


def test_scaling(rng):
    f = rng.uniform(-1, 1, size=(3, 3))
    base = _fr(f).value
    for lam in (0.5, 3.0):
        assert _fr(lam * f).value == pytest.approx(lam * base, rel=1e-7, abs=1e-7)


def test_real_plane_models_respect_the_bound(rng):
    bound = _fr(F_MINUS2).value
    for _ in range(50):
        a, c = random_unit(rng, 3), random_unit(rng, 3)
        a[:, 1] = 0
        c[:, 1] = 0
        a /= np.linalg.norm(a, axis=1, keepdims=True)
        c /= np.linalg.norm(c, axis=1, keepdims=True)
        assert witness.eval_F(F_MINUS2, SIGN, nw.correlations(a, c)) <= bound + 1e-7


def test_certificate_contents():
    rb = _fr(F_TETRA)
    cert = rb.certificate()
    assert cert["dual_objective"] == pytest.approx(rb.value, abs=1e-7)
    for blk in cert["blocks"]:
        assert np.linalg.eigvalsh(np.array(blk["X"]))[0] >= -1e-8
    assert rb.summary()["verified"]


def test_moments_are_consistent():
    rb = _fr(F_MINUS2)
    y = rb.moments()
    mp = rb.problem
    one = mp.var
    total = sum(y[one(b, ((), ()))] for b in range(4))
    assert total == pytest.approx(1.0, abs=1e-9)
    for b in range(4):
        assert np.linalg.eigvalsh(mp.moment_matrix(y, b))[0] >= -1e-8


def test_solver_failure_is_raised():
    with pytest.raises(SolverFailure) as exc:
        _fr(F_MINUS2, tol=sdp.Tolerances(max_iter=2))
    assert exc.value.result.status != sdp.OPTIMAL
    rb = _fr(F_MINUS2, tol=sdp.Tolerances(max_iter=2), raise_on_failure=False)
    assert rb.status != sdp.OPTIMAL
