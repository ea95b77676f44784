from __future__ import annotations

import numpy as np
import pytest

from gencond.testgen import GenSpec, generate


def reference_geninv(A, C, p, q):
    """Textbook evaluation with numpy's pinv only; shares no code with the package."""
    J = np.diag(np.r_[np.ones(p), -np.ones(q)])
    n = A.shape[1]
    Cp = np.linalg.pinv(C)
    P = np.eye(n) - Cp @ C
    Q = A.T @ J @ A
    return (np.eye(n) - pinv_abs(P @ Q @ P, 1e-10 * np.linalg.norm(Q, 2)) @ Q) @ Cp


def pinv_abs(M, tol):
    """Pseudoinverse with an absolute cutoff, so a rounding-level ``PQP`` counts as zero."""
    U, sv, Vt = np.linalg.svd(M)
    keep = sv > tol
    return (Vt[keep].T / sv[keep]) @ U[:, keep].T


def make_pair(p, q, n, s, stream=0, seed=1234, l1=1.0, l2=0.0, kappa_H=10.0):
    return generate(GenSpec(p, q, n, s, l1, l2, kappa_H=kappa_H, seed=seed), stream).pair


@pytest.fixture
def small_pair():
    return make_pair(6, 3, 5, 2)


@pytest.fixture
def tiny_example():
    """A = [[1,0],[0,1],[0,0]] with J = diag(1,1,-1) and C = [1, 0]."""
    from gencond import ProblemPair, Signature

    A = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    C = np.array([[1.0, 0.0]])
    return ProblemPair(A, C, Signature(2, 1))


#: one "criterion N: PASS|FAIL ..." line per acceptance check, echoed at session end
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
