import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ksum_adversary.hamming import elementary_projectors, make_eigenbasis, weight_projector
from ksum_adversary.operators import InvalidParameterError

from oracles import projector_by_definition


@pytest.mark.parametrize("q", [2, 3, 4, 9, 16])
def test_eigenbasis_orthonormal_with_uniform_first_column(q):
    b = make_eigenbasis(q).vectors
    np.testing.assert_allclose(b.T @ b, np.eye(q), atol=1e-12)
    assert np.all(b[:, 0] == 1 / math.sqrt(q))


def test_eigenbasis_q2_second_vector():
    b = make_eigenbasis(2).vectors
    assert abs(abs(b[0, 1]) - 1 / math.sqrt(2)) < 1e-15
    assert b[0, 1] == pytest.approx(-b[1, 1], abs=1e-15)


def test_eigenbasis_q9_first_column_orthogonal_to_rest():
    b = make_eigenbasis(9).vectors
    assert b[:, 0] @ b[:, 0] == pytest.approx(1.0, abs=1e-12)
    np.testing.assert_allclose(b[:, 0] @ b[:, 1:], 0.0, atol=1e-12)


def test_eigenbasis_deterministic():
    assert np.array_equal(make_eigenbasis(7).vectors, make_eigenbasis(7).vectors)


@pytest.mark.parametrize("q", [1, 0, -3])
def test_eigenbasis_rejects_small_alphabet(q):
    with pytest.raises(InvalidParameterError):
        make_eigenbasis(q)


def test_elementary_projectors_q2():
    e0, e1 = elementary_projectors(2)
    np.testing.assert_allclose(e1, [[0.5, -0.5], [-0.5, 0.5]])


@pytest.mark.parametrize("q", [2, 4, 7])
def test_elementary_projectors_entries(q):
    e0, e1 = elementary_projectors(q)
    assert np.all(e0 == 1 / q)
    np.testing.assert_allclose(np.diag(e1), 1 - 1 / q)
    np.testing.assert_allclose(e1[~np.eye(q, dtype=bool)], -1 / q)
    np.testing.assert_allclose(e0 + e1, np.eye(q), atol=1e-15)
    np.testing.assert_allclose(e0 @ e1, 0.0, atol=1e-15)


def test_weight_projector_single_coordinate_is_uniform():
    np.testing.assert_allclose(weight_projector(1, 0, 3).dense(), np.full((3, 3), 1 / 3), atol=1e-15)


def test_weight_projector_trace_n2_m1_q3():
    assert np.trace(weight_projector(2, 1, 3).dense()) == pytest.approx(4.0, abs=1e-12)


def test_weight_projectors_complete_n2_q2():
    total = sum(weight_projector(2, m, 2).dense() for m in range(3))
    np.testing.assert_allclose(total, np.eye(4), atol=1e-12)


def test_weight_projector_rejects_bad_weight():
    with pytest.raises(InvalidParameterError):
        weight_projector(2, 3, 3)
    with pytest.raises(InvalidParameterError):
        weight_projector(2, -1, 3)


@pytest.mark.parametrize("q", [2, 3, 4, 5])
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_weight_projectors_rank_orthogonality_and_definition(n, q):
    basis = make_eigenbasis(q).vectors
    mats = [weight_projector(n, m, q).dense() for m in range(n + 1)]
    for m, p in enumerate(mats):
        assert round(np.trace(p)) == math.comb(n, m) * (q - 1) ** m
        np.testing.assert_allclose(p, p.T, atol=1e-12)
        np.testing.assert_allclose(p @ p, p, atol=1e-12)
        if q**n <= 256:
            np.testing.assert_allclose(p, projector_by_definition(n, m, basis), atol=1e-12)
        for p2 in mats[m + 1:]:
            np.testing.assert_allclose(p @ p2, 0.0, atol=1e-12)
    np.testing.assert_allclose(sum(mats), np.eye(q**n), atol=1e-12)


def _qr_completion(q):
    # a different completion of the uniform vector: Gram-Schmidt on [1, I]
    a = np.column_stack([np.ones(q), np.eye(q)[:, 1:]])
    b, _ = np.linalg.qr(a)
    return b * np.sign(b[0, 0])


@pytest.mark.parametrize("n,q", [(1, 3), (2, 4), (3, 3), (2, 5)])
def test_projectors_do_not_depend_on_completion(n, q):
    alt = _qr_completion(q)
    np.testing.assert_allclose(alt.T @ alt, np.eye(q), atol=1e-12)
    for m in range(n + 1):
        a = weight_projector(n, m, q).dense()
        b = weight_projector(n, m, q, basis=alt).dense()
        np.testing.assert_allclose(a, b, atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=st.integers(1, 3), q=st.integers(2, 5), seed=st.integers(0, 2**32 - 1))
def test_weight_projector_apply_matches_dense(n, q, seed):
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(q**n)
    for m in range(n + 1):
        p = weight_projector(n, m, q)
        np.testing.assert_allclose(p.matvec(v), p.dense() @ v, rtol=1e-10, atol=1e-12)
