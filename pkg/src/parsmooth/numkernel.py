"""Dense matrix kernel with a deterministic flop-cost model.

Every arithmetic routine takes an optional :class:`FlopLedger` and credits it
according to a fixed model:

* matrix product ``(m x k)(k x n)``: ``2 m k n``
* elementwise add/sub of an ``m x n`` array: ``m n``
* LU factorisation of an ``n x n`` matrix: ``ceil(2/3 n^3)``
* pair of triangular solves: ``2 n^2`` per right-hand side
* scalar operations: 1 each

Matrices and vectors are plain ``numpy`` arrays; a 1-D array is treated as a
column vector wherever a matrix product needs one.
"""
from __future__ import annotations

import math
import warnings
from collections import Counter
from typing import Iterable, Optional

import numpy as np
import scipy.linalg

PIVOT_RTOL = 1e-12


class SingularMatrixError(ArithmeticError):
    """A linear system could not be solved because a pivot vanished."""


class FlopLedger:
    """Additive flop counter keyed by operation tag."""

    def __init__(self, records: Optional[Iterable[tuple[str, int]]] = None):
        self._flops: Counter = Counter()
        if records:
            for tag, flops in records:
                self.charge(tag, flops)

    def charge(self, tag: str, flops: int) -> None:
        if flops < 0:
            raise ValueError(f"negative flop count {flops} for {tag!r}")
        self._flops[tag] += int(flops)

    def merge(self, other: "FlopLedger") -> "FlopLedger":
        self._flops.update(other._flops)
        return self

    @property
    def records(self) -> list[tuple[str, int]]:
        return sorted(self._flops.items())

    @property
    def total(self) -> int:
        return sum(self._flops.values())

    def __repr__(self) -> str:
        return f"FlopLedger(total={self.total}, tags={len(self._flops)})"


def _charge(ledger: Optional[FlopLedger], tag: str, flops: int) -> None:
    if ledger is not None:
        ledger.charge(tag, flops)


def _as_2d(x: np.ndarray) -> np.ndarray:
    return x[:, None] if x.ndim == 1 else x


def matmul(A: np.ndarray, B: np.ndarray, ledger: Optional[FlopLedger] = None) -> np.ndarray:
    """Product ``A @ B``; credits ``2 m k n`` flops."""
    if A.ndim != 2 or B.ndim not in (1, 2):
        raise ValueError(f"matmul expects a matrix times a matrix/vector, got {A.shape} and {B.shape}")
    m, k = A.shape
    if B.shape[0] != k:
        raise ValueError(f"matmul dimension mismatch: ({m}x{k}) times {B.shape}")
    n = 1 if B.ndim == 1 else B.shape[1]
    _charge(ledger, "matmul", 2 * m * k * n)
    return A @ B


def add(A: np.ndarray, B: np.ndarray, ledger: Optional[FlopLedger] = None) -> np.ndarray:
    if A.shape != B.shape:
        raise ValueError(f"add shape mismatch: {A.shape} vs {B.shape}")
    _charge(ledger, "add", A.size)
    return A + B


def sub(A: np.ndarray, B: np.ndarray, ledger: Optional[FlopLedger] = None) -> np.ndarray:
    if A.shape != B.shape:
        raise ValueError(f"sub shape mismatch: {A.shape} vs {B.shape}")
    _charge(ledger, "sub", A.size)
    return A - B


def sym(A: np.ndarray) -> np.ndarray:
    """Symmetric part ``(A + A^T) / 2``. Not charged."""
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"sym expects a square matrix, got shape {A.shape}")
    return 0.5 * (A + A.T)


def lu_cost(n: int) -> int:
    return math.ceil(2 * n**3 / 3)


def solve_cost(n: int, r: int) -> int:
    return lu_cost(n) + 2 * n * n * r


def _lu(A: np.ndarray, ledger: Optional[FlopLedger]):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"solve expects a square matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("solve: matrix has non-finite entries")
    n = A.shape[0]
    scale = np.max(np.abs(A)) if A.size else 0.0
    if scale == 0.0:
        raise SingularMatrixError(f"solve: {n}x{n} matrix is zero")
    with warnings.catch_warnings():
        # exact zero pivots are reported below as SingularMatrixError
        warnings.simplefilter("ignore", scipy.linalg.LinAlgWarning)
        lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    pivots = np.abs(np.diag(lu))
    if np.min(pivots) < PIVOT_RTOL * scale:
        raise SingularMatrixError(
            f"solve: {n}x{n} matrix is singular to tolerance "
            f"(min pivot {np.min(pivots):.3e}, scale {scale:.3e})"
        )
    _charge(ledger, "lu", lu_cost(n))
    return lu, piv


def solve(A: np.ndarray, B: np.ndarray, ledger: Optional[FlopLedger] = None) -> np.ndarray:
    """Solve ``A X = B`` by LU with partial pivoting.

    Raises :class:`SingularMatrixError` when a pivot falls below
    ``1e-12`` times the largest absolute entry of ``A``.
    """
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"solve dimension mismatch: A is {A.shape}, B is {B.shape}")
    lu, piv = _lu(A, ledger)
    r = 1 if B.ndim == 1 else B.shape[1]
    _charge(ledger, "trisolve", 2 * A.shape[0] ** 2 * r)
    return scipy.linalg.lu_solve((lu, piv), B, check_finite=False)


def solve_logdet(
    A: np.ndarray, B: np.ndarray, ledger: Optional[FlopLedger] = None
) -> tuple[np.ndarray, float]:
    """Like :func:`solve` but also returns ``log|det A|`` from the same LU."""
    if B.shape[0] != A.shape[0]:
        raise ValueError(f"solve dimension mismatch: A is {A.shape}, B is {B.shape}")
    lu, piv = _lu(A, ledger)
    n = A.shape[0]
    r = 1 if B.ndim == 1 else B.shape[1]
    _charge(ledger, "trisolve", 2 * n * n * r)
    _charge(ledger, "scalar", 2 * n)
    logdet = float(np.sum(np.log(np.abs(np.diag(lu)))))
    return scipy.linalg.lu_solve((lu, piv), B, check_finite=False), logdet


def dot(x: np.ndarray, y: np.ndarray, ledger: Optional[FlopLedger] = None) -> float:
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"dot expects equal-length vectors, got {x.shape} and {y.shape}")
    _charge(ledger, "matmul", 2 * x.size)
    return float(x @ y)


def gaussian_logpdf(
    y: np.ndarray, mean: np.ndarray, cov: np.ndarray, ledger: Optional[FlopLedger] = None
) -> float:
    """``log N(y; mean, cov)`` through one LU of ``cov``."""
    v = sub(y, mean, ledger)
    w, logdet = solve_logdet(cov, v, ledger)
    quad = dot(v, w, ledger)
    _charge(ledger, "scalar", 3)
    return -0.5 * (quad + logdet + y.size * math.log(2.0 * math.pi))
