from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_pair, pinv_abs, reference_geninv
from gencond import dense
from gencond.errors import InvalidProblemError, ShapeError
from gencond.geninv import (
    RELAXED,
    ProblemPair,
    Signature,
    apply_derivative,
    apply_derivative_adjoint,
    apply_derivative_adjoint_vec,
    apply_derivative_vec,
    build_bundle,
    derivative_blocks,
    generalized_inverse,
    ilsep_apply_derivative,
    ilsep_derivative_matrix,
    ilsep_solve,
    load_archive,
    save_archive,
    validate,
)

DIMS = [(6, 3, 5, 2), (10, 5, 8, 4), (7, 2, 4, 4), (5, 0, 4, 1)]


def relerr(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny)


# signature / pair


def test_signature():
    sig = Signature(2, 1)
    assert sig.m == 3
    np.testing.assert_array_equal(sig.J, np.diag([1.0, 1.0, -1.0]))
    with pytest.raises(ValueError):
        Signature(0, 0)


def test_pair_rejects_bad_mode():
    with pytest.raises(ValueError):
        ProblemPair(np.eye(2), np.eye(2), Signature(2, 0), mode="lenient")


def test_data_norm():
    pair = ProblemPair(3 * np.eye(1), 4 * np.eye(1), Signature(1, 0))
    assert pair.data_norm == pytest.approx(5.0)


# validation


def test_validate_tiny_example(tiny_example):
    rep = validate(tiny_example)
    assert rep.passed
    assert rep.rank_AC == 2
    assert rep.min_eig_Q == pytest.approx(1.0)


def test_validate_zero_A_strict_fails():
    pair = ProblemPair(np.zeros((3, 2)), np.array([[1.0, 0.0]]), Signature(2, 1))
    with pytest.raises(InvalidProblemError) as exc:
        validate(pair)
    assert exc.value.assumption == "positive_definite"


def test_validate_zero_A_relaxed_passes():
    pair = ProblemPair(np.zeros((3, 2)), np.eye(2), Signature(2, 1), RELAXED)
    assert validate(pair).passed


def test_validate_rank_failure():
    # a rank defect in [A; C] also makes Q singular; relaxed mode still reports the rank
    A = np.array([[1.0, 0.0], [0.0, 0.0]])
    pair = ProblemPair(A, np.zeros((1, 2)), Signature(2, 0))
    with pytest.raises(InvalidProblemError):
        validate(pair)
    rep = validate(pair.with_mode(RELAXED))
    assert rep.rank_AC == 1 and rep.passed


def test_validate_dimension_mismatch_always_raises():
    pair = ProblemPair(np.eye(3, 2), np.ones((1, 3)), Signature(2, 1), RELAXED)
    with pytest.raises(InvalidProblemError) as exc:
        validate(pair)
    assert exc.value.assumption == "dimensions"
    pair = ProblemPair(np.eye(3, 2), np.ones((1, 2)), Signature(1, 1), RELAXED)
    with pytest.raises(InvalidProblemError):
        validate(pair)


# generalized inverse


def test_tiny_example_value(tiny_example):
    b = build_bundle(tiny_example)
    np.testing.assert_allclose(b.X, [[1.0], [0.0]], atol=1e-15)
    np.testing.assert_allclose(b.P, np.diag([0.0, 1.0]), atol=1e-15)


@pytest.mark.parametrize("dims", DIMS)
@pytest.mark.parametrize("stream", range(3))
def test_matches_reference(dims, stream):
    pair = make_pair(*dims, stream=stream)
    X = generalized_inverse(pair.A, pair.C, pair.sig.p, pair.sig.q)
    assert relerr(X, reference_geninv(pair.A, pair.C, pair.sig.p, pair.sig.q)) < 1e-10


def test_zero_A_reduces_to_pinv():
    rng = np.random.default_rng(7)
    for _ in range(5):
        C = rng.standard_normal((6, 4))
        pair = ProblemPair(np.zeros((3, 4)), C, Signature(2, 1), RELAXED)
        b = build_bundle(pair)
        assert relerr(b.X, np.linalg.pinv(C)) < 1e-12


def test_bundle_identities_hold(small_pair):
    res = build_bundle(small_pair).identity_residuals()
    for name in ("P_idempotent", "P_symmetric", "PD_eq_D", "DP_eq_D", "C_D_zero", "DQP_eq_P"):
        assert res[name] < 1e-12, name


@pytest.mark.xfail(strict=True, reason="(PQP)^+ C^+_A is not zero for general pairs; see README")
def test_pqp_dagger_annihilates_geninv(small_pair):
    assert build_bundle(small_pair).identity_residuals()["D_X_zero"] < 1e-9


def test_generalized_inverse_is_a_left_inverse_on_range_of_C(small_pair):
    # C C^+_A = C C^+ because C (PQP)^+ = 0
    b = build_bundle(small_pair)
    C = small_pair.C
    assert relerr(C @ b.X, C @ np.linalg.pinv(C)) < 1e-12


def test_strict_bundle_rejects_invalid_pair():
    pair = ProblemPair(np.zeros((3, 2)), np.array([[1.0, 0.0]]), Signature(2, 1))
    with pytest.raises(InvalidProblemError):
        build_bundle(pair)


# derivative


@pytest.mark.parametrize("dims", DIMS)
def test_dense_blocks_match_matrix_free(dims):
    pair = make_pair(*dims, stream=11)
    b = build_bundle(pair)
    W = derivative_blocks(b).W
    rng = np.random.default_rng(0)
    for _ in range(5):
        z = rng.standard_normal(W.shape[1])
        assert relerr(apply_derivative_vec(b, z), W @ z) < 1e-12
        y = rng.standard_normal(W.shape[0])
        assert relerr(apply_derivative_adjoint_vec(b, y), W.T @ y) < 1e-12


def test_zero_perturbation(small_pair):
    b = build_bundle(small_pair)
    out = apply_derivative(b, np.zeros_like(small_pair.A), np.zeros_like(small_pair.C))
    assert not np.any(out)


def test_perturbation_shape_checked(small_pair):
    b = build_bundle(small_pair)
    with pytest.raises(ShapeError):
        apply_derivative(b, np.zeros((2, 2)), small_pair.C)
    with pytest.raises(ShapeError):
        apply_derivative_adjoint(b, np.zeros((1, 1)))


def _central_difference(pair, dA, dC, t):
    p, q = pair.sig.p, pair.sig.q
    plus = reference_geninv(pair.A + t * dA, pair.C + t * dC, p, q)
    minus = reference_geninv(pair.A - t * dA, pair.C - t * dC, p, q)
    return (plus - minus) / (2 * t)


@pytest.mark.parametrize("stream", range(4))
def test_derivative_against_finite_differences(stream):
    pair = make_pair(6, 3, 5, 2, stream=stream)
    b = build_bundle(pair)
    rng = np.random.default_rng(stream)
    dA = rng.standard_normal(pair.A.shape)
    dC = rng.standard_normal(pair.C.shape)
    exact = apply_derivative(b, dA, dC)
    e1 = relerr(_central_difference(pair, dA, dC, 1e-4), exact)
    e2 = relerr(_central_difference(pair, dA, dC, 1e-5), exact)
    # truncation error is O(t^2): a tenfold smaller step gains about two digits
    assert e1 < 1e-4 and e2 < 1e-6
    assert e2 < e1 / 20


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.sampled_from(DIMS))
def test_adjoint_identity(seed, dims):
    pair = make_pair(*dims, stream=seed)
    b = build_bundle(pair)
    rng = np.random.default_rng(seed)
    dA, dC = rng.standard_normal(pair.A.shape), rng.standard_normal(pair.C.shape)
    E = rng.standard_normal(b.X.shape)
    EA, EC = apply_derivative_adjoint(b, E)
    lhs = np.sum(apply_derivative(b, dA, dC) * E)
    rhs = np.sum(dA * EA) + np.sum(dC * EC)
    assert abs(lhs - rhs) <= 1e-10 * (abs(lhs) + np.linalg.norm(E) * np.linalg.norm(b.X) ** 2 + 1)


def test_derivative_blocks_zero_A_reduction():
    rng = np.random.default_rng(3)
    s, n = 6, 4
    C = rng.standard_normal((s, n))
    pair = ProblemPair(np.zeros((3, n)), C, Signature(2, 1), RELAXED)
    blocks = derivative_blocks(build_bundle(pair))
    assert not np.any(blocks.WA)
    Cp = np.linalg.pinv(C)
    Pi = dense.vec_perm(s, n).to_dense()
    expect = -np.kron(Cp.T, Cp) + np.kron(np.eye(s) - C @ Cp, np.linalg.inv(C.T @ C)) @ Pi
    assert relerr(blocks.WC, expect) < 1e-12


@pytest.mark.parametrize("stream", range(5))
def test_q_zero_full_row_rank_reduction(stream):
    pair = make_pair(7, 0, 5, 3, stream=stream)
    b = build_bundle(pair)
    AP = pair.A @ b.P
    assert relerr(b.PQPdag @ pair.A.T, np.linalg.pinv(AP)) < 1e-9


def test_capacity_guard(small_pair):
    from gencond.errors import CapacityError

    with pytest.raises(CapacityError):
        derivative_blocks(build_bundle(small_pair), budget=64)


# ILSEP


def test_ilsep_zero_rhs(small_pair):
    b = build_bundle(small_pair)
    data = ilsep_solve(b, np.zeros(small_pair.m), np.zeros(small_pair.s))
    assert not np.any(data.x)


def test_ilsep_tiny_example(tiny_example):
    data = ilsep_solve(build_bundle(tiny_example), [0.0, 3.0, 0.0], [2.0])
    np.testing.assert_allclose(data.x, [2.0, 3.0], atol=1e-15)


def test_ilsep_rhs_length_checked(small_pair):
    with pytest.raises(ShapeError):
        ilsep_solve(build_bundle(small_pair), np.zeros(2), np.zeros(small_pair.s))


@pytest.mark.parametrize("stream", range(5))
def test_ilsep_optimality(stream):
    pair = make_pair(10, 5, 8, 4, stream=stream)
    b = build_bundle(pair)
    rng = np.random.default_rng(stream)
    data = ilsep_solve(b, rng.standard_normal(pair.m), rng.standard_normal(pair.s))
    scale = np.linalg.norm(pair.A) * (np.linalg.norm(data.g) + np.linalg.norm(pair.A) * np.linalg.norm(data.x))
    # stationary in the null space of C
    assert np.linalg.norm(b.P @ pair.A.T @ data.s_vec) <= 1e-10 * scale
    # and a least squares solution of the constraint
    assert np.linalg.norm(pair.C.T @ (data.h - pair.C @ data.x)) <= 1e-10 * np.linalg.norm(pair.C) * (
        np.linalg.norm(data.h) + np.linalg.norm(pair.C) * np.linalg.norm(data.x)
    )


def _ilsep_reference(pair, g, h):
    p, q = pair.sig.p, pair.sig.q
    J = np.diag(np.r_[np.ones(p), -np.ones(q)])
    n = pair.n
    P = np.eye(n) - np.linalg.pinv(pair.C) @ pair.C
    Q = pair.A.T @ J @ pair.A
    return reference_geninv(pair.A, pair.C, p, q) @ h + pinv_abs(P @ Q @ P, 1e-10 * np.linalg.norm(Q, 2)) @ pair.A.T @ J @ g


@pytest.mark.parametrize("stream", range(4))
def test_ilsep_derivative_finite_differences(stream):
    pair = make_pair(6, 3, 5, 2, stream=stream)
    b = build_bundle(pair)
    rng = np.random.default_rng(100 + stream)
    g, h = rng.standard_normal(pair.m), rng.standard_normal(pair.s)
    data = ilsep_solve(b, g, h)
    dA, dC = rng.standard_normal(pair.A.shape), rng.standard_normal(pair.C.shape)
    dg, dh = rng.standard_normal(pair.m), rng.standard_normal(pair.s)
    t = 1e-5
    fd = (
        _ilsep_reference(ProblemPair(pair.A + t * dA, pair.C + t * dC, pair.sig), g + t * dg, h + t * dh)
        - _ilsep_reference(ProblemPair(pair.A - t * dA, pair.C - t * dC, pair.sig), g - t * dg, h - t * dh)
    ) / (2 * t)
    dx = ilsep_apply_derivative(b, data, dA, dC, dg, dh)
    assert relerr(dx, fd) < 1e-6
    M = ilsep_derivative_matrix(b, data)
    z = np.concatenate([dense.vec(dA), dense.vec(dC), dg, dh])
    assert relerr(M @ z, dx) < 1e-12


def test_ilsep_g_and_h_blocks(small_pair):
    b = build_bundle(small_pair)
    rng = np.random.default_rng(9)
    data = ilsep_solve(b, rng.standard_normal(small_pair.m), rng.standard_normal(small_pair.s))
    zA, zC = np.zeros_like(small_pair.A), np.zeros_like(small_pair.C)
    dg = rng.standard_normal(small_pair.m)
    dh = rng.standard_normal(small_pair.s)
    np.testing.assert_allclose(
        ilsep_apply_derivative(b, data, zA, zC, dg, np.zeros(small_pair.s)), b.G @ dg, atol=1e-14
    )
    np.testing.assert_allclose(
        ilsep_apply_derivative(b, data, zA, zC, np.zeros(small_pair.m), dh), b.X @ dh, atol=1e-14
    )


# archives


def test_archive_roundtrip(tmp_path, small_pair):
    save_archive(tmp_path / "prob", small_pair, {"note": 1})
    back = load_archive(tmp_path / "prob")
    np.testing.assert_array_equal(back.A, small_pair.A)
    np.testing.assert_array_equal(back.C, small_pair.C)
    assert back.sig == small_pair.sig and back.mode == small_pair.mode
    assert load_archive(tmp_path / "prob", RELAXED).mode == RELAXED


def test_archive_missing_file(tmp_path, small_pair):
    save_archive(tmp_path / "prob", small_pair)
    (tmp_path / "prob" / "C.mat").unlink()
    with pytest.raises(FileNotFoundError, match="C.mat"):
        load_archive(tmp_path / "prob")
