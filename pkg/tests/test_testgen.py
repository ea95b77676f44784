from __future__ import annotations

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st

from gencond.errors import GenerationFailure, ParameterError
from gencond.geninv import validate
from gencond.testgen import (
    ARITHMETIC,
    GEOMETRIC,
    GenSpec,
    generate,
    generate_pair,
    make_rng,
    random_j_orthogonal,
    random_lower_triangular,
    random_orthogonal,
    random_with_condition,
    singular_value_grid,
)


def J_of(p, q):
    return np.diag(np.r_[np.ones(p), -np.ones(q)])


# orthogonal / J-orthogonal


def test_orthogonal_dim_one():
    vals = {float(random_orthogonal(1, make_rng(0, i))[0, 0]) for i in range(40)}
    assert vals == {1.0, -1.0}


def test_orthogonal_dim_fifty():
    Q = random_orthogonal(50, make_rng(1))
    assert np.linalg.norm(Q.T @ Q - np.eye(50)) <= 1e-12
    P, L, U = scipy.linalg.lu(Q)
    det = np.linalg.det(P) * np.prod(np.diag(U))
    assert min(abs(det - 1), abs(det + 1)) <= 1e-10


def test_j_orthogonal_unit_kappa():
    H = random_j_orthogonal(3, 2, 1.0, make_rng(2))
    assert np.linalg.norm(H.T @ H - np.eye(5)) <= 1e-12
    assert np.linalg.norm(H.T @ J_of(3, 2) @ H - J_of(3, 2)) <= 1e-12


def test_j_orthogonal_definite_signature():
    H = random_j_orthogonal(4, 0, 50.0, make_rng(3))
    assert np.linalg.norm(H.T @ H - np.eye(4)) <= 1e-12


def test_j_orthogonal_condition():
    H = random_j_orthogonal(3, 3, 100.0, make_rng(4))
    assert 95 <= np.linalg.cond(H) <= 105
    assert np.linalg.norm(H.T @ J_of(3, 3) @ H - J_of(3, 3)) <= 1e-8 * 100


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.floats(1.0, 1e4), st.integers(0, 2**31))
def test_j_orthogonal_property(p, q, kappa, seed):
    H = random_j_orthogonal(p, q, kappa, make_rng(seed))
    J = J_of(p, q)
    assert np.linalg.norm(H.T @ J @ H - J) <= 1e-8 * kappa
    assert np.linalg.cond(H) == pytest.approx(kappa, rel=1e-6)


def test_j_orthogonal_rejects_bad_input():
    with pytest.raises(ParameterError):
        random_j_orthogonal(0, 0, 1.0, make_rng(0))
    with pytest.raises(ParameterError):
        random_j_orthogonal(2, 2, 0.5, make_rng(0))


# singular values


def test_grid_unit_kappa():
    np.testing.assert_array_equal(singular_value_grid(5, 1.0), np.ones(5))


def test_grid_geometric():
    np.testing.assert_allclose(
        singular_value_grid(4, 100.0, GEOMETRIC), [1, 100 ** (-1 / 3), 100 ** (-2 / 3), 0.01]
    )


def test_grid_arithmetic():
    np.testing.assert_allclose(singular_value_grid(3, 4.0, ARITHMETIC), [1.0, 0.625, 0.25])


def test_grid_rejects_bad_input():
    with pytest.raises(ParameterError):
        singular_value_grid(3, 0.5)
    with pytest.raises(ParameterError):
        singular_value_grid(1, 3.0)
    with pytest.raises(ParameterError):
        singular_value_grid(3, 3.0, "cubic")


@pytest.mark.parametrize("mode", [GEOMETRIC, ARITHMETIC])
@pytest.mark.parametrize("kappa", [1.0, 10.0, 1e4])
def test_random_with_condition(mode, kappa):
    M = random_with_condition(7, 5, kappa, mode, make_rng(5))
    assert np.linalg.cond(M) == pytest.approx(kappa, rel=1e-10)


def test_lower_triangular_keeps_condition():
    L = random_lower_triangular(6, 1e3, GEOMETRIC, make_rng(6))
    assert np.all(np.triu(L, 1) == 0)
    assert np.linalg.cond(L) == pytest.approx(1e3, rel=1e-9)


# specs and pairs


@pytest.mark.parametrize(
    "dims",
    [(2, 0, 5, 2), (3, 3, 5, 2), (6, 3, 5, 0), (6, 3, 5, 6), (6, -1, 5, 2)],
)
def test_spec_rejects_bad_dimensions(dims):
    with pytest.raises(ParameterError):
        GenSpec(*dims)


def test_spec_p_plus_q_message():
    with pytest.raises(ParameterError, match="p\\+q >= n"):
        GenSpec(2, 0, 5, 2)


def test_small_spec_unit_targets():
    gen = generate(GenSpec(6, 3, 5, 2, 0, 0, kappa_H=1.0), 0)
    assert validate(gen.pair).passed
    assert gen.kappa_C == pytest.approx(1.0, abs=1e-8)


def test_large_scale_condition_of_C():
    gen = generate(GenSpec(50, 30, 40, 20, 1, 2), 0)
    assert 0.95 * 400 <= gen.kappa_C <= 1.05 * 400


def test_factors_reassemble():
    gen = generate(GenSpec(10, 5, 8, 4, 1, 1, seed=3), 2)
    np.testing.assert_allclose(gen.H @ gen.L @ gen.Q.T, gen.pair.A, atol=1e-12)
    assert np.linalg.cond(gen.L[gen.spec.p - 4 : gen.spec.p, 4:]) == pytest.approx(8.0, rel=1e-9)
    J = J_of(10, 5)
    np.testing.assert_allclose(gen.H.T @ J @ gen.H, J, atol=1e-10)


def test_determinism():
    spec = GenSpec(10, 5, 8, 4, 2, 1, seed=42)
    a, b = generate_pair(spec, 3), generate_pair(spec, 3)
    assert np.array_equal(a.A, b.A) and np.array_equal(a.C, b.C)
    c = generate_pair(spec, 4)
    assert not np.array_equal(a.A, c.A)


def test_generation_failure_reports_spec():
    spec = GenSpec(6, 3, 5, 2, pd_tol=2.0)  # no positive definite Q can pass this
    with pytest.raises(GenerationFailure) as exc:
        generate(spec)
    assert exc.value.spec == spec


@settings(max_examples=25, deadline=None)
@given(
    st.integers(1, 6).flatmap(
        lambda n: st.tuples(
            st.integers(n, n + 4), st.integers(0, 4), st.just(n), st.integers(1, n)
        )
    ),
    st.sampled_from([0.0, 1.0, 2.0]),
    st.integers(0, 1000),
)
def test_generated_pairs_are_valid(dims, l2, stream):
    p, q, n, s = dims
    spec = GenSpec(p, q, n, s, 1.0, l2 if s > 1 else 0.0)
    gen = generate(spec, stream)
    assert validate(gen.pair).passed
    if s > 1:
        assert gen.kappa_C == pytest.approx(spec.kappa_K11, rel=0.05)
