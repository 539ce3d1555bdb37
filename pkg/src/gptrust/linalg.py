"""Dense SPD linear algebra: jittered Cholesky, solves, quadratic forms, log-determinants."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import InputError, NumericalError

__all__ = ["CholFactor", "chol_jittered", "solve_spd", "quad_form", "logdet"]

DEFAULT_JITTER = 1e-9
LADDER_DECADES = 6


@dataclass(frozen=True)
class CholFactor:
    """Lower factor of ``A + jitter_used * I``."""

    lower: np.ndarray
    jitter_used: float = 0.0

    @property
    def n(self) -> int:
        return self.lower.shape[0]


def chol_jittered(A, base_jitter: float = DEFAULT_JITTER) -> CholFactor:
    """Cholesky factor of ``A``, adding the smallest rung of diagonal jitter that works.

    The ladder is ``0, b, 10 b, ..., 1e6 b`` with ``b = base_jitter * max(diag(A))``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InputError(f"expected a square matrix, got shape {A.shape}")
    n = A.shape[0]
    if n == 0:
        return CholFactor(np.zeros((0, 0)), 0.0)
    if not np.all(np.isfinite(A)):
        raise InputError("matrix has non-finite entries")
    scale = np.max(np.abs(A))
    if np.max(np.abs(A - A.T)) > 1e-10 * scale:
        raise InputError("matrix is not symmetric")
    if base_jitter < 0:
        raise InputError("base_jitter must be nonnegative")

    base = base_jitter * float(np.max(np.diag(A)))
    ladder = [0.0] + [base * 10.0**k for k in range(LADDER_DECADES + 1)]
    for jitter in ladder:
        try:
            L = np.linalg.cholesky(A + jitter * np.eye(n) if jitter else A)
        except np.linalg.LinAlgError:
            continue
        if np.all(np.diag(L) > 0):
            L.flags.writeable = False
            return CholFactor(L, jitter)
    raise NumericalError(
        f"Cholesky failed at every jitter level up to {ladder[-1]:.3g}", jitter_ladder=ladder
    )


def _check_rows(factor, B):
    if B.shape[0] != factor.n:
        raise InputError(f"dimension mismatch: factor is {factor.n}x{factor.n}, right side has {B.shape[0]} rows")


def solve_spd(factor: CholFactor, B) -> np.ndarray:
    """Solve ``(A + jI) X = B`` by two triangular solves."""
    B = np.asarray(B, dtype=float)
    _check_rows(factor, B)
    if factor.n == 0:
        return np.zeros_like(B)
    return sla.cho_solve((factor.lower, True), B, check_finite=False)


def quad_form(factor: CholFactor, v) -> float:
    """``v^T (A + jI)^{-1} v`` as the squared norm of ``L^{-1} v``."""
    v = np.asarray(v, dtype=float)
    if v.ndim != 1:
        raise InputError("quad_form takes a vector")
    _check_rows(factor, v)
    if factor.n == 0:
        return 0.0
    w = sla.solve_triangular(factor.lower, v, lower=True, check_finite=False)
    return float(w @ w)


def logdet(factor: CholFactor) -> float:
    return 2.0 * float(np.sum(np.log(np.diag(factor.lower))))
