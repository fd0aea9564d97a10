"""Parallel RTS smoother.

Step ``k`` is represented by ``p(x_k | y_{1:k}, x_{k+1}) = N(E x_{k+1} + g, L)``.
Suffix products ``a_k ⊗ ... ⊗ a_n`` are the smoothing distributions, and
because ``E_n = 0`` their ``(g, L)`` are the smoothed mean and covariance.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import numkernel as nk
from .numkernel import FlopLedger
from .scan import Monoid, ScanReport, Schedule, reverse_scan
from .sequential import GaussianMoment
from .ssm import LGSSM


@dataclass(frozen=True)
class SmoothElement:
    E: np.ndarray
    g: np.ndarray
    L: np.ndarray

    @classmethod
    def identity(cls, n_x: int) -> "SmoothElement":
        return cls(np.eye(n_x), np.zeros(n_x), np.zeros((n_x, n_x)))


def smooth_element(model: LGSSM, filtered: GaussianMoment, k: int, n: Optional[int] = None,
                   ledger: Optional[FlopLedger] = None) -> SmoothElement:
    n = model.n if n is None else n
    if not 1 <= k <= n:
        raise IndexError(f"step {k} outside 1..{n}")
    x, P = filtered.mean, filtered.cov
    if k == n:
        return SmoothElement(np.zeros((x.shape[0], x.shape[0])), x, P)
    F, u, Q = model.transition(k + 1)
    FP = nk.matmul(F, P, ledger)
    Pp = nk.sym(nk.add(nk.matmul(FP, F.T, ledger), Q, ledger))
    try:
        E = nk.solve(Pp, FP, ledger).T  # P F^T Pp^{-1}; Pp symmetric
    except nk.SingularMatrixError as exc:
        raise nk.SingularMatrixError(f"predicted covariance singular at step {k + 1}: {exc}") from None
    g = nk.sub(x, nk.matmul(E, nk.add(nk.matmul(F, x, ledger), u, ledger), ledger), ledger)
    L = nk.sym(nk.sub(P, nk.matmul(E, FP, ledger), ledger))
    return SmoothElement(E, g, L)


def combine_smooth(ei: SmoothElement, ej: SmoothElement,
                   ledger: Optional[FlopLedger] = None) -> SmoothElement:
    E = nk.matmul(ei.E, ej.E, ledger)
    g = nk.add(nk.matmul(ei.E, ej.g, ledger), ei.g, ledger)
    L = nk.sym(nk.add(nk.matmul(nk.matmul(ei.E, ej.L, ledger), ei.E.T, ledger), ei.L, ledger))
    return SmoothElement(E, g, L)


def smooth_monoid(n_x: int) -> Monoid[SmoothElement]:
    return Monoid(combine_smooth, SmoothElement.identity(n_x), "gaussian-smooth")


@dataclass
class ParallelSmootherResult:
    smoothed: list[GaussianMoment]
    report: ScanReport


def parallel_smoother(model: LGSSM, filtered: Sequence[GaussianMoment], block: int = 1,
                      workers: int = 1) -> ParallelSmootherResult:
    """Smoothed moments from filtered ones (sequential or parallel filter output)."""
    n = len(filtered)
    if n != model.n:
        raise ValueError(f"got {n} filtered moments for a {model.n}-step model")
    with Schedule(workers) as sched:
        elems = sched.map(lambda k, led: smooth_element(model, filtered[k - 1], k, n, led),
                          range(1, n + 1), "elements")
        report = reverse_scan(elems, smooth_monoid(model.n_x), block, schedule=sched)
    return ParallelSmootherResult([GaussianMoment(e.g, e.L) for e in report.results], report)
