"""Random test problems with prescribed conditioning.

Pairs are built from their factors::

    A = H [L11 0; L21 L22; 0 0] Q^T,    C = U [K11 0] Q^T

with ``H`` J-orthogonal, ``Q`` and ``U`` orthogonal, and ``L22``/``K11`` lower
triangular with condition numbers ``n**l1`` and ``s**l2``. The nonzero rows of
the middle factor occupy the ``p`` positive rows of ``J``, so
``A^T J A = Q L^T L Q^T`` is positive definite whenever ``L`` has full column
rank. That is also why ``p >= n`` is required: ``A^T J A`` has at most ``p``
positive eigenvalues.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import GenerationFailure, InvalidProblemError, ParameterError
from .geninv import DEFAULT_PD_TOL, STRICT, ProblemPair, Signature, validate

GEOMETRIC = "geometric"
ARITHMETIC = "arithmetic"

MAX_RETRIES = 10


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; ``(seed, stream)`` pairs give independent, reproducible streams."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, int(stream)])
    return np.random.Generator(np.random.Philox(ss))


def random_orthogonal(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed orthogonal matrix (QR of a Gaussian with sign-fixed ``R`` diagonal)."""
    if dim < 1:
        raise ParameterError("dimension must be positive")
    Z = rng.standard_normal((dim, dim))
    Qm, R = np.linalg.qr(Z)
    d = np.sign(np.diag(R))
    d[d == 0] = 1.0
    return Qm * d


def _orthonormal_columns(rows: int, cols: int, rng: np.random.Generator) -> np.ndarray:
    return random_orthogonal(rows, rng)[:, :cols]


def singular_value_grid(count: int, kappa: float, sv_mode: str = GEOMETRIC) -> np.ndarray:
    """Singular values from 1 down to ``1/kappa``."""
    if kappa < 1:
        raise ParameterError(f"condition number must be >= 1, got {kappa}")
    if count == 1:
        if not math.isclose(kappa, 1.0):
            raise ParameterError("a single column always has condition number 1")
        return np.ones(1)
    if sv_mode == GEOMETRIC:
        return kappa ** (-np.arange(count) / (count - 1))
    if sv_mode == ARITHMETIC:
        return np.linspace(1.0, 1.0 / kappa, count)
    raise ParameterError(f"unknown singular value mode {sv_mode!r}")


def random_with_condition(
    rows: int, cols: int, kappa: float, sv_mode: str, rng: np.random.Generator
) -> np.ndarray:
    """Full-column-rank ``rows x cols`` matrix with singular values spanning ``[1/kappa, 1]``."""
    if rows < cols:
        raise ParameterError(f"need rows >= cols, got {rows}x{cols}")
    sv = singular_value_grid(cols, kappa, sv_mode)
    U = _orthonormal_columns(rows, cols, rng)
    V = random_orthogonal(cols, rng)
    return (U * sv) @ V.T


def random_lower_triangular(dim: int, kappa: float, sv_mode: str, rng: np.random.Generator):
    """Lower-triangular matrix with the singular values of :func:`random_with_condition`.

    The transposed ``R`` factor of a QR keeps the singular values intact.
    """
    M = random_with_condition(dim, dim, kappa, sv_mode, rng)
    R = np.linalg.qr(M, mode="r")
    return np.tril(R.T)


def random_j_orthogonal(p: int, q: int, kappa_H: float, rng: np.random.Generator) -> np.ndarray:
    """Random ``H`` with ``H^T J H = J`` and ``cond_2(H) = kappa_H``.

    Hyperbolic CS form ``diag(U1, U2) Sigma diag(V1, V2)^T``; ``Sigma`` couples
    ``min(p, q)`` index pairs through cosh/sinh blocks whose largest angle is
    ``ln(kappa_H) / 2``.
    """
    if p < 0 or q < 0 or p + q < 1:
        raise ParameterError(f"invalid signature ({p}, {q})")
    if kappa_H < 1:
        raise ParameterError(f"kappa_H must be >= 1, got {kappa_H}")
    if p == 0 or q == 0:
        return random_orthogonal(p + q, rng)
    r = min(p, q)
    theta_max = 0.5 * math.log(kappa_H)
    theta = rng.uniform(0.0, theta_max, size=r)
    theta[0] = theta_max
    S = np.eye(p + q)
    idx_p = np.arange(r)
    idx_q = p + np.arange(r)
    S[idx_p, idx_p] = np.cosh(theta)
    S[idx_q, idx_q] = np.cosh(theta)
    S[idx_p, idx_q] = np.sinh(theta)
    S[idx_q, idx_p] = np.sinh(theta)

    def blockdiag(X1, X2):
        B = np.zeros((p + q, p + q))
        B[:p, :p] = X1
        B[p:, p:] = X2
        return B

    left = blockdiag(random_orthogonal(p, rng), random_orthogonal(q, rng))
    right = blockdiag(random_orthogonal(p, rng), random_orthogonal(q, rng))
    return left @ S @ right.T


@dataclass(frozen=True)
class GenSpec:
    p: int
    q: int
    n: int
    s: int
    l1: float = 1.0
    l2: float = 0.0
    sv_mode: str = GEOMETRIC
    kappa_H: float = 10.0
    seed: int = 0
    pd_tol: float = DEFAULT_PD_TOL

    def __post_init__(self):
        if self.q < 0 or self.s < 1:
            raise ParameterError(f"invalid dimensions in {self}")
        if self.p + self.q < self.n:
            raise ParameterError(f"need p+q >= n, got p+q={self.p + self.q} < n={self.n}")
        if not self.n >= self.s >= 1:
            raise ParameterError(f"need n >= s >= 1, got n={self.n}, s={self.s}")
        if self.p < self.n:
            raise ParameterError(
                f"need p >= n for A^T J A to be positive definite, got p={self.p} < n={self.n}"
            )
        if self.kappa_H < 1:
            raise ParameterError("kappa_H must be >= 1")
        if self.sv_mode not in (GEOMETRIC, ARITHMETIC):
            raise ParameterError(f"unknown sv_mode {self.sv_mode!r}")

    @property
    def kappa_L22(self) -> float:
        return float(self.n) ** self.l1

    @property
    def kappa_K11(self) -> float:
        return float(self.s) ** self.l2

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class GeneratedPair:
    pair: ProblemPair
    spec: GenSpec
    H: np.ndarray
    Q: np.ndarray
    U: np.ndarray
    L: np.ndarray
    K11: np.ndarray
    attempts: int

    @property
    def kappa_A(self) -> float:
        return float(np.linalg.cond(self.pair.A))

    @property
    def kappa_C(self) -> float:
        return float(np.linalg.cond(self.pair.C))


def _triangular_block(dim: int, kappa: float, sv_mode: str, rng: np.random.Generator):
    # a 1 x 1 block is perfectly conditioned whatever the target
    if dim == 1:
        return np.ones((1, 1)) * rng.choice([-1.0, 1.0])
    return random_lower_triangular(dim, kappa, sv_mode, rng)


def _draw(spec: GenSpec, rng: np.random.Generator):
    p, q, n, s = spec.p, spec.q, spec.n, spec.s
    top = p - (n - s)
    L11 = rng.standard_normal((top, s)) / math.sqrt(top)
    L21 = rng.standard_normal((n - s, s)) / math.sqrt(max(n - s, 1))
    L22 = _triangular_block(n - s, spec.kappa_L22, spec.sv_mode, rng) if n > s else None
    L = np.zeros((p + q, n))
    L[:top, :s] = L11
    if n > s:
        L[top:p, :s] = L21
        L[top:p, s:] = L22
    K11 = _triangular_block(s, spec.kappa_K11, spec.sv_mode, rng)
    Qo = random_orthogonal(n, rng)
    U = random_orthogonal(s, rng)
    H = random_j_orthogonal(p, q, spec.kappa_H, rng)
    A = H @ L @ Qo.T
    Kfull = np.zeros((s, n))
    Kfull[:, :s] = K11
    C = U @ Kfull @ Qo.T
    return A, C, H, Qo, U, L, K11


def generate(spec: GenSpec, stream: int = 0) -> GeneratedPair:
    """Draw a strict-valid pair, retrying up to ``MAX_RETRIES`` times on validation failure."""
    rng = make_rng(spec.seed, stream)
    last = None
    for attempt in range(1, MAX_RETRIES + 1):
        A, C, H, Qo, U, L, K11 = _draw(spec, rng)
        pair = ProblemPair(A, C, Signature(spec.p, spec.q), STRICT)
        try:
            validate(pair, pd_tol=spec.pd_tol)
        except InvalidProblemError as exc:
            last = exc
            continue
        return GeneratedPair(pair, spec, H, Qo, U, L, K11, attempt)
    raise GenerationFailure(
        f"{MAX_RETRIES} consecutive draws failed validation ({last}) for {spec}", spec
    )


def generate_pair(spec: GenSpec, stream: int = 0) -> ProblemPair:
    return generate(spec, stream).pair
