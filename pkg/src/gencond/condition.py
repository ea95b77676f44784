"""Exact condition numbers of ``C^+_A``, their cheap upper bounds, and ILSEP conditioning.

Normwise, mixed and componentwise numbers all come from the Frechet derivative
``W = [W_A, W_C]`` of ``(A, C) -> vec(C^+_A)``:

* normwise      ``||W||_2 ||[vec A; vec C]||_2 / ||vec C^+_A||_2``
* mixed         ``|| |W| |a| ||_inf / ||vec C^+_A||_inf``
* componentwise ``|| (|W| |a|) / vec C^+_A ||_inf`` (dagger division)

Two Kronecker-free normwise forms are provided. :func:`gram_operator` applies
``V = W W^T`` exactly through the matrix-free derivative and its adjoint.
:func:`build_v_matrix` assembles a cheaper ``n x n`` closed form; it is
kept for comparison and does **not** reproduce ``||W||_2`` in general.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from . import dense
from .dense import check_capacity, dagger_div, infnorm
from .errors import DegenerateOutputError
from .geninv import (
    GenInvBundle,
    IlsepData,
    ProblemPair,
    apply_derivative,
    apply_derivative_adjoint,
    build_bundle,
    derivative_blocks,
    ilsep_derivative_matrix,
)

#: Matrix-free spectral norms: relative tolerance and iteration cap.
ITER_TOL = 1e-12
ITER_MAXITER = 5000


@dataclass(frozen=True)
class ConditionTriple:
    normwise: float
    mixed: float
    componentwise: float

    def as_dict(self) -> dict[str, float]:
        return {"normwise": self.normwise, "mixed": self.mixed, "componentwise": self.componentwise}


@dataclass(frozen=True)
class BoundTriple:
    n_upper: float
    m_upper: float
    c_upper: float

    def as_dict(self) -> dict[str, float]:
        return {"n_upper": self.n_upper, "m_upper": self.m_upper, "c_upper": self.c_upper}


def ensure_bundle(obj: GenInvBundle | ProblemPair) -> GenInvBundle:
    """Accept either a pair or a prebuilt bundle."""
    if isinstance(obj, GenInvBundle):
        return obj
    return build_bundle(obj)


def _normwise_scale(bundle: GenInvBundle) -> float:
    nx = np.linalg.norm(bundle.X)
    if nx == 0:
        raise DegenerateOutputError("C^+_A is zero; relative condition numbers are undefined")
    return bundle.pair.data_norm / nx


# ---------------------------------------------------------------------------
# |W| |a| without Kronecker products


def abs_derivative_action(bundle: GenInvBundle) -> np.ndarray:
    """``|W_A| vec|A| + |W_C| vec|C|`` as an ``n x s`` matrix, one column of ``C^+_A`` at a time.

    Row ``(i, j)`` of ``W_A`` reshaped to ``m x n`` is
    ``-outer(G[i], X[:, j]) - outer(JAX[:, j], D[i])``; row ``(i, j)`` of ``W_C``
    reshaped to ``s x n`` is ``-outer(X[i], X[:, j]) + outer(R[:, j], XCdagT[i])
    + outer(CdagTQX[:, j], D[i])``.
    """
    pair = bundle.pair
    X, D, G = bundle.X, bundle.PQPdag, bundle.G
    absA, absC = np.abs(pair.A), np.abs(pair.C)
    n, s = X.shape
    out = np.empty((n, s))
    for j in range(s):
        # axes: (i, row-of-data, col-of-data)
        TA = -G[:, :, None] * X[None, None, :, j] - bundle.JAX[None, :, j, None] * D[:, None, :]
        TC = (
            -X[:, :, None] * X[None, None, :, j]
            + bundle.R[None, :, j, None] * bundle.XCdagT[:, None, :]
            + bundle.CdagTQX[None, :, j, None] * D[:, None, :]
        )
        out[:, j] = np.einsum("iab,ab->i", np.abs(TA), absA) + np.einsum(
            "iab,ab->i", np.abs(TC), absC
        )
    return out


# ---------------------------------------------------------------------------
# exact (Kronecker) condition numbers


def derivative_norm(bundle: GenInvBundle, method: str = "auto", budget: int | None = None) -> float:
    """``||[W_A, W_C]||_2`` by dense Kronecker blocks or by Lanczos on ``W W^T``."""
    pair = bundle.pair
    ns, t = pair.n * pair.s, pair.m * pair.n + pair.s * pair.n
    if method == "auto":
        try:
            check_capacity((ns, t), budget)
            method = "dense"
        except MemoryError:
            method = "iterative"
    if method == "dense":
        W = derivative_blocks(bundle, budget).W
        if ns <= t:
            gram = W @ W.T
        else:
            gram = W.T @ W
        return float(np.sqrt(max(np.linalg.eigvalsh(gram)[-1], 0.0)))
    if method == "svd":
        return dense.spectral(derivative_blocks(bundle, budget).W)
    if method == "iterative":
        return float(np.sqrt(max(gram_spectral_norm(bundle), 0.0)))
    raise ValueError(f"unknown norm method {method!r}")


def exact_condition_numbers(
    obj: GenInvBundle | ProblemPair, method: str = "auto", budget: int | None = None
) -> ConditionTriple:
    """Normwise, mixed and componentwise condition numbers of ``C^+_A``.

    ``method="dense"`` (and ``"auto"`` when the blocks fit in ``budget``) forms
    ``[W_A, W_C]`` explicitly; ``"iterative"`` never does.
    """
    bundle = ensure_bundle(obj)
    pair = bundle.pair
    scale = _normwise_scale(bundle)
    ns, t = pair.n * pair.s, pair.m * pair.n + pair.s * pair.n
    if method == "auto":
        try:
            check_capacity((ns, t), budget)
            method = "dense"
        except MemoryError:
            method = "iterative"
    if method in ("dense", "svd"):
        W = derivative_blocks(bundle, budget).W
        if method == "svd":
            wnorm = dense.spectral(W)
        else:
            gram = W @ W.T if ns <= t else W.T @ W
            wnorm = float(np.sqrt(max(np.linalg.eigvalsh(gram)[-1], 0.0)))
        num = np.abs(W) @ np.abs(pair.data_vector())
    elif method == "iterative":
        wnorm = derivative_norm(bundle, "iterative")
        num = dense.vec(abs_derivative_action(bundle))
    else:
        raise ValueError(f"unknown method {method!r}")
    xv = dense.vec(bundle.X)
    return ConditionTriple(
        normwise=wnorm * scale,
        mixed=infnorm(num) / infnorm(xv),
        componentwise=infnorm(dagger_div(num, np.abs(xv))),
    )


# ---------------------------------------------------------------------------
# Kronecker-free normwise forms


def gram_apply(bundle: GenInvBundle, E) -> np.ndarray:
    """``V E`` with ``V = W W^T`` acting on ``n x s`` matrices (``vec`` ordering)."""
    EA, EC = apply_derivative_adjoint(bundle, E)
    return apply_derivative(bundle, EA, EC)


def gram_operator(bundle: GenInvBundle) -> LinearOperator:
    n, s = bundle.X.shape

    def mv(v):
        v = np.asarray(v, dtype=np.float64).reshape(-1)
        return dense.vec(gram_apply(bundle, dense.unvec(v, n, s)))

    return LinearOperator((n * s, n * s), matvec=mv, rmatvec=mv, dtype=np.float64)


def gram_matrix(bundle: GenInvBundle) -> np.ndarray:
    """Dense ``ns x ns`` matrix ``W W^T`` assembled column by column from :func:`gram_apply`."""
    op = gram_operator(bundle)
    N = op.shape[0]
    V = np.column_stack([op.matvec(e) for e in np.eye(N)])
    return 0.5 * (V + V.T)


def gram_spectral_norm(bundle: GenInvBundle) -> float:
    """``||W W^T||_2`` matrix-free (ARPACK Lanczos), dense for tiny operators."""
    op = gram_operator(bundle)
    N = op.shape[0]
    if N <= 64:
        return float(np.linalg.eigvalsh(gram_matrix(bundle))[-1])
    val = eigsh(op, k=1, which="LA", tol=ITER_TOL, maxiter=ITER_MAXITER, return_eigenvectors=False)
    return float(val[0])


def build_v_matrix(obj: GenInvBundle | ProblemPair) -> np.ndarray:
    """The ``n x n`` closed-form surrogate for ``W W^T``, scalar summands read as multiples of ``I_n``.

    ``V = (||JAX||^2 + ||C^+T Q X||^2) D^2 + ||X||^2 (||G||^2 I + X X^T)
    + ||I - C C^+||^2 ||X C^+T||^2 I`` with ``X = C^+_A``, ``D = (PQP)^+``,
    ``G = D A^T J``. Symmetric positive semidefinite by construction.
    """
    b = ensure_bundle(obj)
    n = b.X.shape[0]
    nrm = dense.spectral
    I = np.eye(n)
    D2 = b.PQPdag @ b.PQPdag
    V = (
        (nrm(b.JAX) ** 2 + nrm(b.CdagTQX) ** 2) * D2
        + nrm(b.X) ** 2 * (nrm(b.G) ** 2 * I + b.X @ b.X.T)
        + nrm(b.R) ** 2 * nrm(b.XCdagT) ** 2 * I
    )
    return 0.5 * (V + V.T)


def normwise_from_v_norm(obj: GenInvBundle | ProblemPair, v_norm: float) -> float:
    """``sqrt(||V||_2) ||[A, C]||_F / ||C^+_A||_F``."""
    b = ensure_bundle(obj)
    return float(np.sqrt(max(v_norm, 0.0))) * _normwise_scale(b)


def normwise_kron_free(obj: GenInvBundle | ProblemPair, form: str = "gram") -> float:
    """Normwise condition number without forming Kronecker products.

    ``form="gram"`` uses the exact operator ``W W^T``; ``form="closed"`` uses
    :func:`build_v_matrix`.
    """
    b = ensure_bundle(obj)
    if form == "gram":
        return normwise_from_v_norm(b, gram_spectral_norm(b))
    if form == "closed":
        return normwise_from_v_norm(b, float(np.linalg.eigvalsh(build_v_matrix(b))[-1]))
    raise ValueError(f"unknown form {form!r}")


# ---------------------------------------------------------------------------
# upper bounds


def upper_bound_matrix(b: GenInvBundle) -> np.ndarray:
    """Entrywise bound on ``|W| |a|`` reshaped ``n x s``; no Kronecker products."""
    a = np.abs
    A, C = b.pair.A, b.pair.C
    return (
        a(b.G) @ a(A) @ a(b.X)
        + a(b.PQPdag) @ a(A.T) @ a(b.JAX)
        + a(b.X) @ a(C) @ a(b.X)
        + a(b.XCdagT) @ a(C.T) @ a(b.R)
        + a(b.PQPdag) @ a(C.T) @ a(b.CdagTQX)
    )


def upper_bounds(obj: GenInvBundle | ProblemPair) -> BoundTriple:
    b = ensure_bundle(obj)
    nrm = dense.spectral
    d_norm = nrm(b.PQPdag)
    x_norm = nrm(b.X)
    n_upper = (
        x_norm * nrm(b.G)
        + nrm(b.JAX) * d_norm
        + x_norm**2
        + nrm(b.R) * nrm(b.XCdagT)
        + nrm(b.CdagTQX) * d_norm
    ) * _normwise_scale(b)
    T = upper_bound_matrix(b)
    return BoundTriple(
        n_upper=float(n_upper),
        m_upper=dense.maxnorm(T) / dense.maxnorm(b.X),
        c_upper=dense.maxnorm(dagger_div(T, np.abs(b.X))),
    )


# ---------------------------------------------------------------------------
# ILSEP solution


def ilsep_condition_numbers(
    bundle: GenInvBundle, data: IlsepData, budget: int | None = None
) -> ConditionTriple:
    """Condition numbers of the ILSEP solution ``x`` as a function of ``(A, C, g, h)``."""
    x = data.x
    if not np.any(x):
        raise DegenerateOutputError("ILSEP solution is zero; condition numbers are undefined")
    M = ilsep_derivative_matrix(bundle, data, budget)
    a = np.concatenate([bundle.pair.data_vector(), data.g, data.h])
    num = np.abs(M) @ np.abs(a)
    return ConditionTriple(
        normwise=dense.spectral(M) * np.linalg.norm(a) / np.linalg.norm(x),
        mixed=infnorm(num) / infnorm(x),
        componentwise=infnorm(dagger_div(num, np.abs(x))),
    )
