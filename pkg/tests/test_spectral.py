import math

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from ksum_adversary.arrays import ArrayAssignment, distinctness_array
from ksum_adversary.construction import (
    build_gamma_tilde,
    build_gamma_tilde_1,
    constant_alphas,
    legal_mask,
    make_instance,
    restrict_columns,
)
from ksum_adversary.hamming import weight_projector
from ksum_adversary.operators import InvalidParameterError, TooLargeError
from ksum_adversary.spectral import (
    Check,
    DenseOp,
    adversary_value,
    certified_bound_closed_form,
    choose_mode,
    lemma_bounds,
    lemma_ii_terms,
    spectral_norm_dense,
    spectral_norm_iter,
    witness_lower_bound,
)


def test_all_ones_norm():
    assert spectral_norm_dense(np.ones((3, 3))).value == pytest.approx(3.0, abs=1e-12)
    assert spectral_norm_iter(np.ones((3, 3))).value == pytest.approx(3.0, rel=1e-8)


def test_projector_has_unit_norm():
    p = weight_projector(3, 1, 3)
    assert spectral_norm_dense(p.dense()).value == pytest.approx(1.0, abs=1e-12)
    assert spectral_norm_iter(p).value == pytest.approx(1.0, rel=1e-7)


def test_iterative_matches_dense_on_random_matrix():
    M = np.random.default_rng(3).standard_normal((20, 30))
    exact = spectral_norm_dense(M).value
    est = spectral_norm_iter(M, tol=1e-12)
    assert est.converged
    assert est.value <= exact * (1 + 1e-12)
    assert est.value == pytest.approx(exact, rel=1e-6)


def test_gram_path_agrees_with_svd():
    M = np.random.default_rng(4).standard_normal((700, 650))
    assert spectral_norm_dense(M).value == pytest.approx(scipy.linalg.svdvals(M)[0], rel=1e-12)


@pytest.mark.parametrize("method", ["lanczos", "power"])
def test_restart_escapes_bad_start_vector(method):
    M = np.diag([3.0, 1.0, 1.0])
    v0 = np.array([0.0, 0.0, 1.0])
    r = spectral_norm_iter(M, v0=v0, method=method)
    assert r.value == pytest.approx(3.0, rel=1e-7)
    assert r.method == method


@pytest.mark.parametrize("method", ["lanczos", "power"])
def test_tiny_operators(method):
    assert spectral_norm_iter(np.array([[2.0]]), method=method).value == pytest.approx(2.0)
    assert spectral_norm_iter(np.array([[0.0, 5.0]]), method=method).value == pytest.approx(5.0)
    r = spectral_norm_iter(np.zeros((2, 4)), method=method)
    assert r.value == 0.0 and r.converged


def test_iteration_cap_reports_non_convergence():
    M = np.diag(np.linspace(1.0, 1.001, 50))
    r = spectral_norm_iter(M, method="power", max_iter=3)
    assert not r.converged
    assert r.value <= 1.001


@settings(max_examples=25, deadline=None)
@given(rows=st.integers(1, 40), cols=st.integers(1, 40), seed=st.integers(0, 2**32 - 1))
def test_lanczos_never_exceeds_exact_norm(rows, cols, seed):
    M = np.random.default_rng(seed).standard_normal((rows, cols))
    exact = spectral_norm_dense(M).value
    r = spectral_norm_iter(M)
    assert r.converged
    assert r.value <= exact * (1 + 1e-12)
    assert r.value == pytest.approx(exact, rel=1e-8)


def test_unknown_method():
    with pytest.raises(InvalidParameterError):
        spectral_norm_iter(np.eye(3), method="arnoldi")


def test_dense_cap_enforced():
    with pytest.raises(TooLargeError):
        spectral_norm_dense(np.ones((10, 10)), cap=50)


def test_iterative_is_deterministic():
    inst = make_instance(3, 2, 4)
    a = spectral_norm_iter(build_gamma_tilde(inst))
    b = spectral_norm_iter(build_gamma_tilde(inst))
    assert a == b


def test_witness_on_all_ones():
    assert witness_lower_bound(DenseOp(np.ones((2, 3)))) == pytest.approx(math.sqrt(6))


@pytest.mark.parametrize("n,k,q", [(2, 1, 4), (3, 2, 4), (3, 2, 9), (3, 1, 9)])
def test_witness_values(n, k, q):
    inst = make_instance(n, k, q)
    gt = build_gamma_tilde(inst)
    mask = legal_mask(inst)
    c = math.comb(n, k)
    a0 = inst.alphas[0]
    assert witness_lower_bound(gt) == pytest.approx(a0 * math.sqrt(c), rel=1e-12)
    expected = a0 * math.sqrt(c * mask.fraction)
    assert witness_lower_bound(gt, mask) == pytest.approx(expected, rel=1e-12)
    assert witness_lower_bound(restrict_columns(gt, mask), mask) == pytest.approx(expected, rel=1e-12)


def test_witness_rejects_mismatched_mask():
    inst = make_instance(3, 2, 4)
    with pytest.raises(ValueError):
        witness_lower_bound(build_gamma_tilde(inst), legal_mask(make_instance(3, 2, 3)))


def test_lemma_ii_terms_closed_form_n8_k2():
    alphas = np.array([1, 0.875, 0.75, 0.625, 0.5, 0.375, 0.25])
    s1, s2 = lemma_ii_terms(alphas, 8, 2)
    # alpha_m^2 (m + 1) peaks at m = 2: 0.75^2 * 3
    assert s1 == pytest.approx(1.6875)
    assert s2 == pytest.approx(4 * 21 / 64)


def test_check_strict_and_slack():
    assert Check("a", 1.0, 1.0 - 1e-12, 1e-9).passed
    assert not Check("a", 1.0, 0.9, 1e-9).passed
    assert not Check("b", 0.0, 0.0, 0.0, strict=True).passed
    assert Check("b", 0.0, 1e-30, 0.0, strict=True).passed


def test_choose_mode():
    inst = make_instance(3, 2, 4)
    assert choose_mode(inst) == "dense"
    assert choose_mode(inst, "auto", cap=10) == "structured"
    with pytest.raises(TooLargeError):
        choose_mode(inst, "dense", cap=10)
    with pytest.raises(InvalidParameterError):
        choose_mode(inst, "sparse")


@pytest.mark.parametrize("n,k,q", [(2, 2, 4), (3, 2, 4), (3, 1, 9), (3, 2, 3), (2, 1, 16)])
def test_lemma_checks_pass_dense(n, k, q):
    r = lemma_bounds(make_instance(n, k, q), mode="dense")
    assert r.all_passed, r.flags
    assert r.converged
    assert set(r.flags) == {"i_lower", "i_upper", "ii", "iii_submatrix", "iii_remap",
                            "iv_union_bound", "iv_witness", "v_positive", "v_ratio"}
    assert r.delta_coordinates == list(range(1, n + 1))
    assert r.certified_ratio_lower_bound <= r.ratio


def test_lemma_checks_distinctness():
    inst = make_instance(2, 2, 4, ArrayAssignment(uniform=distinctness_array(4)))
    r = lemma_bounds(inst, mode="dense")
    assert r.all_passed
    assert r.legal_fraction == 0.75
    # swapping the two coordinates maps the instance to itself
    assert r.norms["gamma_delta_1"].value == pytest.approx(r.norms["gamma_delta_2"].value, abs=1e-9)


@pytest.mark.parametrize("n,k,q", [(3, 2, 4), (4, 2, 3), (3, 1, 4)])
def test_constant_schedule_attains_bound_ii(n, k, q):
    r = lemma_bounds(make_instance(n, k, q, alphas=constant_alphas(n, k, 1.0)), mode="dense")
    assert r.bound_ii_s2 == 0.0
    assert r.bound_ii_s1 == math.comb(n - 1, k - 1)
    assert r.norm_gamma_tilde_1**2 == pytest.approx(r.bound_ii_s1, rel=1e-10)
    assert r.all_passed


def test_structured_mode_agrees_with_dense():
    inst = make_instance(3, 2, 4)
    d = lemma_bounds(inst, mode="dense")
    s = lemma_bounds(inst, mode="structured")
    assert s.all_passed
    assert s.ratio is None and "v_ratio" not in s.flags
    assert s.delta_coordinates == [1]
    for name in ("gamma_tilde", "gamma", "gamma_tilde_1", "gamma_tilde_delta_1", "gamma_delta_1"):
        assert s.norms[name].value == pytest.approx(d.norms[name].value, rel=1e-6)
        assert s.norms[name].value <= d.norms[name].value * (1 + 1e-9)
    assert s.certified_ratio_lower_bound == d.certified_ratio_lower_bound


def test_remapped_norm_matches_operator():
    inst = make_instance(3, 2, 9)
    r = lemma_bounds(inst, mode="dense")
    direct = spectral_norm_dense(build_gamma_tilde_1(inst, 0).dense()).value
    assert r.norm_gamma_tilde_1 == direct


def test_report_flags_follow_from_fields():
    r = lemma_bounds(make_instance(3, 2, 9), mode="dense")
    assert r.flags["ii"] == (r.norm_gamma_tilde_1**2 <= r.bound_ii * (1 + 1e-9))
    assert r.flags["iv_union_bound"] == (r.legal_fraction >= r.legal_fraction_union_bound)
    assert r.certified_ratio_lower_bound == pytest.approx(
        r.alpha_0 * math.sqrt(3 * r.legal_fraction) / (2 * math.sqrt(r.bound_ii)))
    assert r.legal_fraction == 512 / 729


def test_adversary_value_trivial():
    norm, max_delta, ratio = adversary_value(make_instance(1, 1, 2))
    assert norm == pytest.approx(math.sqrt(2))
    assert ratio == pytest.approx(1.0)


def test_adversary_value_matches_report():
    inst = make_instance(3, 2, 9)
    r = lemma_bounds(inst, mode="dense")
    norm, max_delta, ratio = adversary_value(inst)
    assert norm == r.norm_gamma and max_delta == r.max_norm_gamma_delta and ratio == r.ratio


@pytest.mark.parametrize("k", [2, 3])
def test_closed_form_exponent(k):
    ns = np.unique(np.round(np.logspace(3, 6, 13)).astype(int))
    vals = [certified_bound_closed_form(int(n), k) for n in ns]
    slope = np.polyfit(np.log(ns), np.log(vals), 1)[0]
    assert abs(slope - k / (k + 1)) <= 0.02


def test_closed_form_matches_report_at_small_scale():
    inst = make_instance(3, 2, 9)
    r = lemma_bounds(inst, mode="dense")
    assert certified_bound_closed_form(3, 2, r.legal_fraction) == pytest.approx(r.certified_ratio_lower_bound, rel=1e-12)


def test_iterative_gamma_tilde_n3_k2_q3():
    op = build_gamma_tilde(make_instance(3, 2, 3))
    exact = spectral_norm_dense(op.dense()).value
    assert spectral_norm_iter(op).value == pytest.approx(exact, rel=1e-6)
