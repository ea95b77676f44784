"""Dense matrix kernel.

Matrices are plain ``float64`` numpy arrays; :func:`as_mat` and :func:`as_vec`
are the validating entry points used at module boundaries. Everything here is a
pure function of its inputs.

The ``vec`` operator stacks columns, so ``vec(A)[i + j*m] == A[i, j]`` for an
``m x n`` matrix ``A``. All derivative-block orderings in the package follow
from that choice.
"""

from __future__ import annotations

import os
import sys
from pathlib import Path

import numpy as np

from .errors import CapacityError, NumericalFailure, ShapeError

#: Default upper bound for any single dense Kronecker-sized allocation (bytes).
DEFAULT_MEMORY_BUDGET = 2 * 1024**3

_EPS = np.finfo(np.float64).eps


def as_mat(M, name: str = "matrix") -> np.ndarray:
    """Return ``M`` as a finite 2-D float64 array with at least one row and column."""
    a = np.asarray(M, dtype=np.float64)
    if a.ndim != 2:
        raise ShapeError(f"{name} must be 2-D, got shape {a.shape}")
    if a.shape[0] < 1 or a.shape[1] < 1:
        raise ShapeError(f"{name} must have at least one row and column, got {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def as_vec(v, name: str = "vector") -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.ndim != 1:
        raise ShapeError(f"{name} must be 1-D, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError(f"{name} contains non-finite entries")
    return a


def check_capacity(shape: tuple[int, ...], budget: int | None = None, what: str = "array") -> None:
    """Raise :class:`CapacityError` if a float64 array of ``shape`` would not fit."""
    count = 1
    for d in shape:
        count *= int(d)
    if count > sys.maxsize:
        raise CapacityError(f"{what} of shape {shape} overflows the platform index range")
    limit = DEFAULT_MEMORY_BUDGET if budget is None else budget
    if 8 * count > limit:
        raise CapacityError(
            f"{what} of shape {shape} needs {8 * count} bytes, budget is {limit} bytes"
        )


# ---------------------------------------------------------------------------
# pseudoinverse


def pinv(M, rank_tol: float = 0.0) -> np.ndarray:
    """Moore-Penrose inverse through the SVD.

    Singular values ``<= rank_tol * sigma_max`` are treated as zero. ``rank_tol=0``
    selects the default ``max(rows, cols) * eps``. Subnormal singular values are
    always dropped.
    """
    M = as_mat(M)
    if rank_tol < 0:
        raise ValueError("rank_tol must be nonnegative")
    try:
        U, sv, Vt = np.linalg.svd(M, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc
    tol = rank_tol if rank_tol > 0 else max(M.shape) * _EPS
    smax = sv[0] if sv.size else 0.0
    # subnormal singular values would overflow on inversion
    keep = sv > max(tol * smax, np.finfo(float).tiny)
    if not np.any(keep):
        return np.zeros((M.shape[1], M.shape[0]))
    inv = 1.0 / sv[keep]
    return (Vt[keep].T * inv) @ U[:, keep].T


def numerical_rank(M, rank_tol: float = 0.0) -> int:
    sv = np.linalg.svd(as_mat(M), compute_uv=False)
    tol = rank_tol if rank_tol > 0 else max(np.shape(M)) * _EPS
    return int(np.sum(sv > tol * sv[0])) if sv[0] > 0 else 0


# ---------------------------------------------------------------------------
# Kronecker and vec machinery


def kron(A, B, budget: int | None = None) -> np.ndarray:
    """Kronecker product ``A (x) B`` with block ``(i, j)`` equal to ``a_ij * B``."""
    A = as_mat(A, "A")
    B = as_mat(B, "B")
    shape = (A.shape[0] * B.shape[0], A.shape[1] * B.shape[1])
    check_capacity(shape, budget, "Kronecker product")
    return np.kron(A, B)


def vec(M) -> np.ndarray:
    """Column-stacking vectorization."""
    return np.asarray(M, dtype=np.float64).reshape(-1, order="F")


def unvec(v, rows: int, cols: int) -> np.ndarray:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim != 1 or v.size != rows * cols:
        raise ShapeError(f"cannot unvec length {v.size} into {rows}x{cols}")
    return v.reshape((rows, cols), order="F")


class VecPerm:
    """The vec-permutation matrix ``Pi_mn`` with ``Pi_mn vec(A) = vec(A^T)``.

    Stored as an index map; ``(Pi v) == v[perm]``. Dense materialization is only
    meant for test oracles.
    """

    __slots__ = ("m", "n", "perm")

    def __init__(self, m: int, n: int):
        if m < 1 or n < 1:
            raise ValueError("vec_perm dimensions must be positive")
        self.m = int(m)
        self.n = int(n)
        # perm[j + i*n] = i + j*m
        self.perm = np.arange(m * n).reshape((m, n), order="F").ravel(order="C")
        self.perm.flags.writeable = False

    @property
    def size(self) -> int:
        return self.m * self.n

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v)
        if v.shape[0] != self.size:
            raise ShapeError(f"Pi_{self.m},{self.n} needs length {self.size}, got {v.shape[0]}")
        return v[self.perm]

    def transpose(self) -> VecPerm:
        return VecPerm(self.n, self.m)

    T = property(transpose)

    def right_multiply(self, M) -> np.ndarray:
        """Return ``M @ Pi`` without forming ``Pi``."""
        M = np.asarray(M)
        if M.shape[-1] != self.size:
            raise ShapeError(f"cannot right-multiply {M.shape} by Pi of size {self.size}")
        out = np.empty_like(M)
        out[..., self.perm] = M
        return out

    def to_dense(self) -> np.ndarray:
        P = np.zeros((self.size, self.size))
        P[np.arange(self.size), self.perm] = 1.0
        return P

    def __repr__(self) -> str:
        return f"VecPerm(m={self.m}, n={self.n})"


def vec_perm(m: int, n: int) -> VecPerm:
    return VecPerm(m, n)


def dagger_inverse(c) -> np.ndarray:
    """Entrywise ``c^+``: ``1/c`` where ``c != 0`` and ``1`` where ``c == 0``."""
    c = np.asarray(c, dtype=np.float64)
    out = np.ones_like(c)
    nz = c != 0
    out[nz] = 1.0 / c[nz]
    return out


def dagger_div(a, b) -> np.ndarray:
    """Entrywise division ``a / b`` in which a zero denominator passes the numerator through."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeError(f"dagger_div shape mismatch {a.shape} vs {b.shape}")
    return dagger_inverse(b) * a


def relative_distance(a, b) -> float:
    """``||(a - b) / b||_inf`` with the zero-denominator convention of :func:`dagger_div`."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    return infnorm(dagger_div(a - b, b))


# ---------------------------------------------------------------------------
# norms


def spectral(M) -> float:
    M = np.asarray(M, dtype=np.float64)
    if M.size == 0:
        return 0.0
    try:
        return float(np.linalg.norm(M, 2))
    except np.linalg.LinAlgError as exc:
        raise NumericalFailure(f"SVD did not converge: {exc}") from exc


def frobenius(M) -> float:
    return float(np.linalg.norm(np.asarray(M, dtype=np.float64)))


def maxnorm(M) -> float:
    M = np.asarray(M, dtype=np.float64)
    return float(np.max(np.abs(M))) if M.size else 0.0


def infnorm(v) -> float:
    v = np.asarray(v, dtype=np.float64)
    return float(np.max(np.abs(v))) if v.size else 0.0


# ---------------------------------------------------------------------------
# text format: "rows cols" header then one row per line, 17 significant digits


def format_matrix(M) -> str:
    M = as_mat(M)
    lines = [f"{M.shape[0]} {M.shape[1]}"]
    lines.extend(" ".join(f"{x:.17g}" for x in row) for row in M)
    return "\n".join(lines) + "\n"


def parse_matrix(text: str) -> np.ndarray:
    rows_text = [ln for ln in text.splitlines() if ln.strip()]
    if not rows_text:
        raise ShapeError("empty matrix file")
    try:
        r, c = (int(t) for t in rows_text[0].split())
    except ValueError as exc:
        raise ShapeError(f"bad matrix header {rows_text[0]!r}") from exc
    body = rows_text[1:]
    if len(body) != r:
        raise ShapeError(f"header says {r} rows, found {len(body)}")
    data = np.array([[float(t) for t in ln.split()] for ln in body], dtype=np.float64)
    if data.shape != (r, c):
        raise ShapeError(f"header says {r}x{c}, body is {data.shape}")
    return as_mat(data)


def write_matrix(path: str | os.PathLike, M) -> None:
    Path(path).write_text(format_matrix(M))


def read_matrix(path: str | os.PathLike) -> np.ndarray:
    return parse_matrix(Path(path).read_text())
