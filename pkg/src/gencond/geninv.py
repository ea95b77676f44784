"""The generalized inverse ``C^+_A = (I - (PQP)^+ Q) C^+`` and its derivative.

Here ``Q = A^T J A`` with ``J = diag(I_p, -I_q)`` and ``P = I - C^+ C``. A
:class:`GenInvBundle` caches every factor the condition-number formulas reuse,
so downstream code never recomputes a pseudoinverse.

The Frechet derivative of ``(A, C) -> C^+_A`` is available both as dense
Kronecker blocks (:func:`derivative_blocks`, for oracles and small problems) and
matrix-free (:func:`apply_derivative` and its adjoint), which is what the
estimators use.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import dense
from .dense import as_mat, as_vec, check_capacity, kron, vec_perm
from .errors import InvalidProblemError, ShapeError

DEFAULT_PD_TOL = 1e-12

STRICT = "strict"
RELAXED = "relaxed"


@dataclass(frozen=True)
class Signature:
    """Inertia ``(p, q)`` of the signature matrix ``J = diag(I_p, -I_q)``."""

    p: int
    q: int

    def __post_init__(self):
        if self.p < 0 or self.q < 0 or self.p + self.q < 1:
            raise ValueError(f"invalid signature ({self.p}, {self.q})")

    @property
    def m(self) -> int:
        return self.p + self.q

    @property
    def diag(self) -> np.ndarray:
        return np.concatenate([np.ones(self.p), -np.ones(self.q)])

    @property
    def J(self) -> np.ndarray:
        return np.diag(self.diag)


@dataclass(frozen=True, eq=False)
class ProblemPair:
    """The data ``(A, C, J)`` of one problem.

    ``mode="strict"`` enforces the uniqueness assumptions when validated;
    ``"relaxed"`` checks only dimensions (used for the ``A = 0`` reduction).
    """

    A: np.ndarray
    C: np.ndarray
    sig: Signature
    mode: str = STRICT

    def __post_init__(self):
        object.__setattr__(self, "A", as_mat(self.A, "A"))
        object.__setattr__(self, "C", as_mat(self.C, "C"))
        if self.mode not in (STRICT, RELAXED):
            raise ValueError(f"unknown validation mode {self.mode!r}")

    @property
    def m(self) -> int:
        return self.A.shape[0]

    @property
    def n(self) -> int:
        return self.A.shape[1]

    @property
    def s(self) -> int:
        return self.C.shape[0]

    @property
    def data_norm(self) -> float:
        """``||[vec(A); vec(C)]||_2``, which equals ``||[A, C]||_F``."""
        return float(np.hypot(np.linalg.norm(self.A), np.linalg.norm(self.C)))

    def data_vector(self) -> np.ndarray:
        return np.concatenate([dense.vec(self.A), dense.vec(self.C)])

    def with_mode(self, mode: str) -> ProblemPair:
        return ProblemPair(self.A, self.C, self.sig, mode)

    def scaled(self, alpha: float) -> ProblemPair:
        return ProblemPair(alpha * self.A, alpha * self.C, self.sig, self.mode)


@dataclass(frozen=True)
class ValidationReport:
    mode: str
    min_eig_Q: float
    norm_Q: float
    rank_AC: int
    n: int
    failures: tuple[str, ...] = ()

    @property
    def passed(self) -> bool:
        return not self.failures


def _check_dims(pair: ProblemPair) -> None:
    if pair.A.shape[0] != pair.sig.m:
        raise InvalidProblemError(
            f"A has {pair.A.shape[0]} rows but p+q = {pair.sig.m}", "dimensions"
        )
    if pair.C.shape[1] != pair.n:
        raise InvalidProblemError(
            f"A has {pair.n} columns but C has {pair.C.shape[1]}", "dimensions"
        )


def validate(
    pair: ProblemPair, pd_tol: float = DEFAULT_PD_TOL, rank_tol: float = 0.0
) -> ValidationReport:
    """Check ``Q = A^T J A`` positive definite and ``rank([A; C]) = n``.

    Strict-mode violations raise :class:`InvalidProblemError`; in relaxed mode the
    same numbers are reported but only the dimension check can fail.
    """
    _check_dims(pair)
    Q = pair.A.T @ (pair.sig.diag[:, None] * pair.A)
    Q = 0.5 * (Q + Q.T)
    eigs = np.linalg.eigvalsh(Q)
    norm_Q = float(np.max(np.abs(eigs)))
    rank = dense.numerical_rank(np.vstack([pair.A, pair.C]), rank_tol)
    failures = []
    if not eigs[0] > pd_tol * norm_Q or norm_Q == 0.0:
        failures.append("positive_definite")
    if rank != pair.n:
        failures.append("rank")
    report = ValidationReport(pair.mode, float(eigs[0]), norm_Q, rank, pair.n, tuple(failures))
    if pair.mode == STRICT and failures:
        what = failures[0]
        if what == "positive_definite":
            msg = f"Q = A^T J A is not positive definite (min eigenvalue {eigs[0]:.3e})"
        else:
            msg = f"rank([A; C]) = {rank} < n = {pair.n}"
        raise InvalidProblemError(msg, what)
    if pair.mode == RELAXED:
        report = ValidationReport(pair.mode, float(eigs[0]), norm_Q, rank, pair.n, ())
    return report


@dataclass(frozen=True, eq=False)
class GenInvBundle:
    """``C^+_A`` together with the factors that the derivative formulas reuse.

    Naming: ``X`` is ``C^+_A``; ``G`` is ``(PQP)^+ A^T J``; ``R`` is ``I - C C^+``.
    """

    pair: ProblemPair
    Cdag: np.ndarray
    P: np.ndarray
    Q: np.ndarray
    PQPdag: np.ndarray
    X: np.ndarray
    G: np.ndarray
    R: np.ndarray
    JAX: np.ndarray
    XCdagT: np.ndarray
    CdagTQX: np.ndarray
    rank_C: int

    @property
    def CddagA(self) -> np.ndarray:
        return self.X

    def identity_residuals(self) -> dict[str, float]:
        """Relative residuals of the algebraic identities the bundle must satisfy."""
        P, D, Q, X = self.P, self.PQPdag, self.Q, self.X
        scale_D = max(np.linalg.norm(D), np.finfo(float).tiny)
        out = {
            "P_idempotent": np.linalg.norm(P @ P - P) / max(np.linalg.norm(P), 1.0),
            "P_symmetric": np.linalg.norm(P - P.T) / max(np.linalg.norm(P), 1.0),
            "PD_eq_D": np.linalg.norm(P @ D - D) / scale_D,
            "DP_eq_D": np.linalg.norm(D @ P - D) / scale_D,
            "C_D_zero": np.linalg.norm(self.pair.C @ D)
            / max(np.linalg.norm(self.pair.C) * scale_D, np.finfo(float).tiny),
            "D_X_zero": np.linalg.norm(D @ X)
            / max(scale_D * np.linalg.norm(X), np.finfo(float).tiny),
        }
        if self.pair.mode == STRICT:
            out["DQP_eq_P"] = np.linalg.norm(D @ Q @ P - P) / max(np.linalg.norm(P), 1.0)
        return {k: float(v) for k, v in out.items()}


def build_bundle(
    pair: ProblemPair, rank_tol: float = 0.0, check: bool = True, pd_tol: float = DEFAULT_PD_TOL
) -> GenInvBundle:
    """Form ``C^+_A`` and its cached factors from one SVD of ``C``.

    ``(PQP)^+`` is evaluated as ``N (N^T Q N)^+ N^T`` where ``N`` is an orthonormal
    basis of ``null(C)``, so the projector structure holds to rounding level.
    """
    if check:
        validate(pair, pd_tol, rank_tol)
    else:
        _check_dims(pair)
    A, C, jd = pair.A, pair.C, pair.sig.diag
    n = pair.n
    U, sv, Vt = np.linalg.svd(C, full_matrices=True)
    tol = (rank_tol if rank_tol > 0 else max(C.shape) * np.finfo(float).eps) * sv[0]
    r = int(np.sum(sv > tol)) if sv[0] > 0 else 0
    Cdag = (Vt[:r].T / sv[:r]) @ U[:, :r].T
    N = Vt[r:].T
    P = N @ N.T
    Q = A.T @ (jd[:, None] * A)
    Q = 0.5 * (Q + Q.T)
    if N.shape[1]:
        inner = N.T @ Q @ N
        inner = 0.5 * (inner + inner.T)
        PQPdag = N @ dense.pinv(inner) @ N.T
        PQPdag = 0.5 * (PQPdag + PQPdag.T)
    else:
        PQPdag = np.zeros((n, n))
    X = Cdag - PQPdag @ (Q @ Cdag)
    G = PQPdag @ A.T * jd[None, :]
    R = np.eye(C.shape[0]) - C @ Cdag
    JAX = jd[:, None] * (A @ X)
    return GenInvBundle(
        pair=pair,
        Cdag=Cdag,
        P=P,
        Q=Q,
        PQPdag=PQPdag,
        X=X,
        G=G,
        R=R,
        JAX=JAX,
        XCdagT=X @ Cdag.T,
        CdagTQX=Cdag.T @ Q @ X,
        rank_C=r,
    )


def generalized_inverse(A, C, p: int, q: int, mode: str = STRICT) -> np.ndarray:
    """Convenience wrapper returning ``C^+_A`` only."""
    return build_bundle(ProblemPair(A, C, Signature(p, q), mode)).X


# ---------------------------------------------------------------------------
# derivative


@dataclass(frozen=True)
class DerivativeBlocks:
    """Dense Frechet derivative ``[W_A, W_C]`` of ``vec(C^+_A)``; shapes ``ns x mn`` and ``ns x sn``."""

    WA: np.ndarray
    WC: np.ndarray

    @property
    def W(self) -> np.ndarray:
        return np.hstack([self.WA, self.WC])


def derivative_blocks(bundle: GenInvBundle, budget: int | None = None) -> DerivativeBlocks:
    pair = bundle.pair
    m, n, s = pair.m, pair.n, pair.s
    check_capacity((n * s, m * n + s * n), budget, "derivative blocks [W_A, W_C]")
    X, D = bundle.X, bundle.PQPdag
    pi_mn = vec_perm(m, n)
    pi_sn = vec_perm(s, n)
    WA = -(kron(X.T, bundle.G) + pi_mn.right_multiply(kron(bundle.JAX.T, D)))
    WC = -(
        kron(X.T, X)
        - pi_sn.right_multiply(kron(bundle.R.T, bundle.XCdagT))
        - pi_sn.right_multiply(kron(bundle.CdagTQX.T, D))
    )
    return DerivativeBlocks(WA, WC)


def _check_perturbation(bundle: GenInvBundle, dA, dC) -> tuple[np.ndarray, np.ndarray]:
    dA = np.asarray(dA, dtype=np.float64)
    dC = np.asarray(dC, dtype=np.float64)
    if dA.shape != bundle.pair.A.shape or dC.shape != bundle.pair.C.shape:
        raise ShapeError(
            f"perturbation shapes {dA.shape}, {dC.shape} do not match "
            f"A {bundle.pair.A.shape}, C {bundle.pair.C.shape}"
        )
    return dA, dC


def apply_derivative(bundle: GenInvBundle, dA, dC) -> np.ndarray:
    """Directional derivative ``d(C^+_A)`` along ``(dA, dC)``; no Kronecker products."""
    dA, dC = _check_perturbation(bundle, dA, dC)
    X, D, jd = bundle.X, bundle.PQPdag, bundle.pair.sig.diag
    JA = jd[:, None] * bundle.pair.A
    return (
        -X @ (dC @ X)
        + bundle.XCdagT @ (dC.T @ bundle.R)
        + D @ (dC.T @ bundle.CdagTQX)
        - bundle.G @ (dA @ X)
        - D @ (dA.T @ (JA @ X))
    )


def apply_derivative_adjoint(bundle: GenInvBundle, E) -> tuple[np.ndarray, np.ndarray]:
    """``[W_A, W_C]^T vec(E)`` returned as the matrix pair ``(E_A, E_C)``."""
    E = np.asarray(E, dtype=np.float64)
    X, D = bundle.X, bundle.PQPdag
    if E.shape != X.shape:
        raise ShapeError(f"adjoint input must be {X.shape}, got {E.shape}")
    ED = E.T @ D
    EA = -bundle.G.T @ (E @ X.T) - bundle.JAX @ ED
    EC = (
        -X.T @ (E @ X.T)
        + bundle.R @ (E.T @ bundle.XCdagT)
        + bundle.CdagTQX @ ED
    )
    return EA, EC


def apply_derivative_vec(bundle: GenInvBundle, z) -> np.ndarray:
    """``[W_A, W_C] z`` for a stacked perturbation ``z = [vec(dA); vec(dC)]``."""
    pair = bundle.pair
    m, n, s = pair.m, pair.n, pair.s
    z = np.asarray(z, dtype=np.float64)
    if z.shape[0] != m * n + s * n:
        raise ShapeError(f"stacked perturbation must have length {m * n + s * n}")
    dA = dense.unvec(z[: m * n], m, n)
    dC = dense.unvec(z[m * n :], s, n)
    return dense.vec(apply_derivative(bundle, dA, dC))


def apply_derivative_adjoint_vec(bundle: GenInvBundle, y) -> np.ndarray:
    pair = bundle.pair
    EA, EC = apply_derivative_adjoint(bundle, dense.unvec(y, pair.n, pair.s))
    return np.concatenate([dense.vec(EA), dense.vec(EC)])


# ---------------------------------------------------------------------------
# indefinite least squares with equality constraint


@dataclass(frozen=True)
class IlsepData:
    g: np.ndarray
    h: np.ndarray
    x: np.ndarray
    r: np.ndarray
    s_vec: np.ndarray
    rho: np.ndarray


def ilsep_solve(bundle: GenInvBundle, g, h) -> IlsepData:
    """``x = C^+_A h + (PQP)^+ A^T J g`` with residual ``r``, ``s = J r`` and ``rho = (I - C C^+) h``."""
    pair = bundle.pair
    g = as_vec(g, "g")
    h = as_vec(h, "h")
    if g.size != pair.m or h.size != pair.s:
        raise ShapeError(f"g must have length {pair.m} and h length {pair.s}")
    x = bundle.X @ h + bundle.G @ g
    r = g - pair.A @ x
    return IlsepData(g=g, h=h, x=x, r=r, s_vec=pair.sig.diag * r, rho=bundle.R @ h)


def ilsep_derivative_matrix(
    bundle: GenInvBundle, data: IlsepData, budget: int | None = None
) -> np.ndarray:
    """Jacobian of ``x`` with respect to ``[vec(A); vec(C); g; h]``, shape ``n x (mn+sn+m+s)``."""
    pair = bundle.pair
    m, n, s = pair.m, pair.n, pair.s
    check_capacity((n, m * n + s * n + m + s), budget, "ILSEP derivative")
    D = bundle.PQPdag
    x = data.x[None, :]
    sv = data.s_vec[None, :]
    rho = data.rho[None, :]
    t = (bundle.Cdag.T @ (pair.A.T @ data.s_vec))[None, :]
    MA = -kron(x, bundle.G) + vec_perm(m, n).right_multiply(kron(sv, D))
    MC = (
        -kron(x, bundle.X)
        + vec_perm(s, n).right_multiply(kron(rho, bundle.XCdagT))
        - vec_perm(s, n).right_multiply(kron(t, D))
    )
    return np.hstack([MA, MC, bundle.G, bundle.X])


def ilsep_apply_derivative(bundle: GenInvBundle, data: IlsepData, dA, dC, dg, dh) -> np.ndarray:
    """Matrix-free ``dx`` for a perturbation of ``(A, C, g, h)``."""
    dA, dC = _check_perturbation(bundle, dA, dC)
    D, x = bundle.PQPdag, data.x
    return (
        -bundle.X @ (dC @ x)
        + bundle.XCdagT @ (dC.T @ data.rho)
        - D @ (dC.T @ (bundle.Cdag.T @ (bundle.pair.A.T @ data.s_vec)))
        - bundle.G @ (dA @ x)
        + D @ (dA.T @ data.s_vec)
        + bundle.G @ np.asarray(dg, dtype=np.float64)
        + bundle.X @ np.asarray(dh, dtype=np.float64)
    )


# ---------------------------------------------------------------------------
# problem archives: A.mat, C.mat and meta.json in one directory


def save_archive(path: str | os.PathLike, pair: ProblemPair, extra: dict | None = None) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    dense.write_matrix(out / "A.mat", pair.A)
    dense.write_matrix(out / "C.mat", pair.C)
    meta = {"p": pair.sig.p, "q": pair.sig.q, "mode": pair.mode}
    if extra:
        meta.update(extra)
    (out / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return out


def load_archive(path: str | os.PathLike, mode: str | None = None) -> ProblemPair:
    root = Path(path)
    for name in ("A.mat", "C.mat", "meta.json"):
        if not (root / name).is_file():
            raise FileNotFoundError(f"problem archive {root} is missing {name}")
    meta = json.loads((root / "meta.json").read_text())
    return ProblemPair(
        dense.read_matrix(root / "A.mat"),
        dense.read_matrix(root / "C.mat"),
        Signature(int(meta["p"]), int(meta["q"])),
        mode or meta.get("mode", STRICT),
    )

