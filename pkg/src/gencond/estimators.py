"""Statistical estimation of the condition numbers of ``C^+_A``.

* :func:`estimate_normwise_probabilistic` - Lanczos on ``V`` with a guaranteed
  lower bound and a probabilistic upper bound for ``||V||_2``.
* :func:`estimate_normwise_ssce` - small-sample statistical condition estimation
  (SSCE) of the normwise number.
* :func:`estimate_mixed_componentwise_ssce` - SSCE of the mixed and
  componentwise numbers through matrix-free products ``W z``.

``V`` is selected by ``form``. ``"gram"`` (default) is the exact ``W W^T``, so
the normwise estimate targets the true condition number. ``"closed"`` is the
``n x n`` closed form of :func:`gencond.condition.build_v_matrix`, and
``"printed"`` (SSCE only) is a variant of that closed form with
``||X||^2 (D A^T A D + X X^T) + ||I - C C^+||^2 (X X^T)^2`` in place of the last
two summands, kept for compatibility.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import optimize, stats

from . import dense
from .condition import build_v_matrix, ensure_bundle, gram_apply
from .errors import ParameterError
from .geninv import (
    GenInvBundle,
    ProblemPair,
    apply_derivative_adjoint,
    apply_derivative_vec,
)
from .testgen import make_rng

FORMS = ("gram", "closed", "printed")


@dataclass(frozen=True)
class EstimatorConfig:
    delta: float = 0.01
    epsilon: float = 0.001
    k: int = 3
    seed: int = 0
    max_iter: int | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ParameterError("delta must be positive")
        if not 0 < self.epsilon < 1:
            raise ParameterError("epsilon must lie in (0, 1)")
        if self.k < 1:
            raise ParameterError("sample size k must be >= 1")
        if self.max_iter is not None and self.max_iter < 1:
            raise ParameterError("max_iter must be >= 1")

    def rng(self, stream: int = 0) -> np.random.Generator:
        return make_rng(self.seed, stream)


def unit_sphere(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample from the unit sphere in ``R^dim`` (normalized Gaussian)."""
    if dim < 1:
        raise ParameterError("dimension must be >= 1")
    while True:
        v = rng.standard_normal(dim)
        nv = np.linalg.norm(v)
        if nv > 0:
            return v / nv


def omega(j: int) -> float:
    """Wallis factor approximation ``sqrt(2 / (pi (j - 1/2)))``."""
    return math.sqrt(2.0 / (math.pi * (j - 0.5)))


def _orthonormal_sample(dim: int, k: int, rng: np.random.Generator) -> np.ndarray:
    Z = np.column_stack([unit_sphere(dim, rng) for _ in range(k)])
    Qz, _ = np.linalg.qr(Z)
    return Qz


# ---------------------------------------------------------------------------
# probabilistic spectral norm


@dataclass(frozen=True)
class SpectralNormBounds:
    alpha1: float
    alpha2: float
    converged: bool
    iterations: int
    history: tuple[float, ...] = ()


def _failure_radius(dim: int, epsilon: float) -> float:
    """``delta`` with ``P(|v_1| < delta) = epsilon`` for ``v`` uniform on the unit sphere."""
    if dim == 1:
        return 1.0
    return math.sqrt(stats.beta.ppf(epsilon, 0.5, 0.5 * (dim - 1)))


def _upper_from_polynomial(ritz: np.ndarray, log_target: float) -> float:
    """Smallest ``t > max(ritz)`` where the monic Lanczos polynomial reaches ``exp(log_target)``."""
    top = float(ritz.max())
    width = max(top - float(ritz.min()), abs(top), np.finfo(float).tiny)

    def f(t):
        return float(np.sum(np.log(t - ritz))) - log_target

    lo = top + 1e-15 * width
    if f(lo) >= 0:
        return lo
    hi = top + width
    while f(hi) < 0:
        hi = top + 2 * (hi - top)
    return optimize.brentq(f, lo, hi, xtol=1e-15 * abs(hi), rtol=1e-14)


def prob_spectral_norm(
    apply_V: Callable[[np.ndarray], np.ndarray],
    dim: int,
    delta: float = 0.01,
    epsilon: float = 0.001,
    max_iter: int | None = None,
    rng: np.random.Generator | None = None,
) -> SpectralNormBounds:
    """Bracket ``||V||_2`` for a symmetric positive semidefinite operator.

    Runs Lanczos (full reorthogonalization) from a uniformly random unit vector.
    ``alpha1`` is the largest Ritz value. ``alpha2`` is where the monic Lanczos
    polynomial ``p_k`` reaches ``||p_k(V) v0|| / delta_eps``. If ``||V||_2`` were
    larger, the start vector's component along the top eigenvector would be
    below ``delta_eps``, an event of probability ``epsilon``. Iteration stops once
    ``alpha2 <= (1 + delta) alpha1``.
    """
    rng = rng if rng is not None else make_rng(0)
    max_iter = dim if max_iter is None else min(max_iter, dim)
    log_radius = math.log(_failure_radius(dim, epsilon))
    v = unit_sphere(dim, rng)
    basis = [v]
    alphas: list[float] = []
    betas: list[float] = []
    history: list[float] = []
    log_beta_sum = 0.0
    alpha1 = alpha2 = 0.0
    for it in range(1, max_iter + 1):
        w = np.asarray(apply_V(basis[-1]), dtype=np.float64)
        a = float(basis[-1] @ w)
        alphas.append(a)
        Vb = np.column_stack(basis)
        w = w - Vb @ (Vb.T @ w)
        w = w - Vb @ (Vb.T @ w)
        b = float(np.linalg.norm(w))
        T = np.diag(alphas)
        if betas:
            T += np.diag(betas, 1) + np.diag(betas, -1)
        ritz = np.linalg.eigvalsh(T)
        alpha1 = max(float(ritz[-1]), alpha1)
        history.append(alpha1)
        scale = max(abs(a), alpha1, np.finfo(float).tiny)
        if b <= 1e-13 * scale or it == dim:
            # Krylov space is invariant: the Ritz values are exact eigenvalues
            return SpectralNormBounds(alpha1, alpha1, True, it, tuple(history))
        log_beta_sum += math.log(b)
        alpha2 = _upper_from_polynomial(ritz, log_beta_sum - log_radius)
        if alpha2 <= (1.0 + delta) * alpha1:
            return SpectralNormBounds(alpha1, alpha2, True, it, tuple(history))
        betas.append(b)
        basis.append(w / b)
    return SpectralNormBounds(alpha1, alpha2, False, max_iter, tuple(history))


def v_operator(bundle: GenInvBundle, form: str = "gram") -> tuple[Callable, int]:
    """``(apply, dim)`` for the selected ``V``."""
    n, s = bundle.X.shape
    if form == "gram":

        def apply(v):
            return dense.vec(gram_apply(bundle, dense.unvec(v, n, s)))

        return apply, n * s
    if form == "closed":
        V = build_v_matrix(bundle)
        return (lambda v: V @ v), n
    raise ValueError(f"unknown V form {form!r}")


@dataclass(frozen=True)
class NormEstimate:
    alpha1: float
    alpha2: float
    value: float
    converged: bool
    iterations: int


def estimate_normwise_probabilistic(
    obj: GenInvBundle | ProblemPair,
    cfg: EstimatorConfig = EstimatorConfig(),
    form: str = "gram",
    stream: int = 0,
) -> NormEstimate:
    """Normwise condition number from the ``||V||_2`` bracket: ``sqrt((a1 + a2)/2) ||[A,C]||_F / ||C^+_A||_F``."""
    bundle = ensure_bundle(obj)
    apply, dim = v_operator(bundle, form)
    res = prob_spectral_norm(apply, dim, cfg.delta, cfg.epsilon, cfg.max_iter, cfg.rng(stream))
    scale = bundle.pair.data_norm / np.linalg.norm(bundle.X)
    value = math.sqrt(0.5 * (res.alpha1 + res.alpha2)) * scale
    return NormEstimate(res.alpha1, res.alpha2, value, res.converged, res.iterations)


# ---------------------------------------------------------------------------
# SSCE


def _printed_quadratic(bundle: GenInvBundle) -> np.ndarray:
    b = bundle
    nrm = dense.spectral
    D2 = b.PQPdag @ b.PQPdag
    XXt = b.X @ b.X.T
    M = (
        (nrm(b.JAX) ** 2 + nrm(b.CdagTQX) ** 2) * D2
        + nrm(b.X) ** 2 * (b.PQPdag @ b.pair.A.T @ b.pair.A @ b.PQPdag.T + XXt)
        + nrm(b.R) ** 2 * (XXt @ XXt)
    )
    return 0.5 * (M + M.T)


def estimate_normwise_ssce(
    obj: GenInvBundle | ProblemPair,
    cfg: EstimatorConfig = EstimatorConfig(),
    form: str = "gram",
    stream: int = 0,
) -> float:
    """SSCE normwise estimate ``(w_k / w_N) sqrt(sum_i sigma_i) ||[A,C]||_F / ||C^+_A||_F``.

    ``sigma_i = z_i^T V z_i`` over ``k`` orthonormalized uniform directions in
    ``R^N``, where ``N`` is the dimension of the chosen ``V``.
    """
    bundle = ensure_bundle(obj)
    n, s = bundle.X.shape
    if form == "gram":
        dim = n * s

        def sigma(z):
            EA, EC = _adjoint(bundle, z)
            return float(np.sum(EA * EA) + np.sum(EC * EC))

    elif form in ("closed", "printed"):
        dim = n
        M = build_v_matrix(bundle) if form == "closed" else _printed_quadratic(bundle)

        def sigma(z):
            return float(z @ M @ z)

    else:
        raise ValueError(f"unknown form {form!r}")
    if cfg.k > dim:
        raise ParameterError(f"sample size k={cfg.k} exceeds the dimension {dim}")
    Z = _orthonormal_sample(dim, cfg.k, cfg.rng(stream))
    sig = np.array([sigma(Z[:, i]) for i in range(cfg.k)])
    scale = bundle.pair.data_norm / np.linalg.norm(bundle.X)
    per_sample = np.sqrt(np.maximum(sig, 0.0)) * scale
    return omega(cfg.k) / omega(dim) * float(np.sqrt(np.sum(per_sample**2)))


def _adjoint(bundle: GenInvBundle, z: np.ndarray):
    n, s = bundle.X.shape
    return apply_derivative_adjoint(bundle, dense.unvec(z, n, s))


def ssce_kappa(
    obj: GenInvBundle | ProblemPair, cfg: EstimatorConfig = EstimatorConfig(), stream: int = 0
) -> np.ndarray:
    """Entrywise SSCE sensitivity vector ``(w_k / w_t) sqrt(sum_i u_i**2)`` with ``u_i = W z_i``."""
    bundle = ensure_bundle(obj)
    pair = bundle.pair
    t = pair.m * pair.n + pair.s * pair.n
    if cfg.k > t:
        raise ParameterError(f"sample size k={cfg.k} exceeds t = mn + sn = {t}")
    Z = _orthonormal_sample(t, cfg.k, cfg.rng(stream))
    acc = np.zeros(pair.n * pair.s)
    for i in range(cfg.k):
        u = apply_derivative_vec(bundle, Z[:, i])
        acc += u * u
    return omega(cfg.k) / omega(t) * np.sqrt(acc)


def estimate_mixed_componentwise_ssce(
    obj: GenInvBundle | ProblemPair, cfg: EstimatorConfig = EstimatorConfig(), stream: int = 0
) -> tuple[float, float]:
    bundle = ensure_bundle(obj)
    kappa = ssce_kappa(bundle, cfg, stream)
    xv = dense.vec(bundle.X)
    return (
        dense.infnorm(kappa) / dense.infnorm(xv),
        dense.infnorm(dense.dagger_div(kappa, np.abs(xv))),
    )
