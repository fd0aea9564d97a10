"""Parallel Kalman filter.

Each step ``k`` becomes an element ``(A, b, C, eta, J)`` describing the
conditional ``p(x_k | y_k, x_{k-1}) = N(A x_{k-1} + b, C)`` and the
likelihood ``p(y_k | x_{k-1})`` in information form, up to a constant.
Prefix products of these elements give the filtering distributions: the
first element has ``A = 0``, so every prefix starting at step 1 has
``A = 0`` and its ``(b, C)`` is the filtered mean and covariance.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import numkernel as nk
from .numkernel import FlopLedger
from .scan import Monoid, ScanReport, Schedule, addition, par_scan
from .sequential import GaussianMoment, _check_measurements
from .ssm import LGSSM


@dataclass(frozen=True)
class FilterElement:
    A: np.ndarray
    b: np.ndarray
    C: np.ndarray
    eta: np.ndarray
    J: np.ndarray

    @classmethod
    def identity(cls, n_x: int) -> "FilterElement":
        z = np.zeros((n_x, n_x))
        return cls(np.eye(n_x), np.zeros(n_x), z, np.zeros(n_x), z.copy())


def filter_element(model: LGSSM, y: np.ndarray, k: int,
                   ledger: Optional[FlopLedger] = None) -> FilterElement:
    F, u, Q = model.transition(k)
    H, d, R = model.measurement(k)
    n_x = model.n_x
    if k == 1:
        m = nk.add(nk.matmul(F, model.m0, ledger), u, ledger)
        P = nk.sym(nk.add(nk.matmul(nk.matmul(F, model.P0, ledger), F.T, ledger), Q, ledger))
    else:
        m, P = u, Q
    HP = nk.matmul(H, P, ledger)
    S = nk.add(nk.matmul(HP, H.T, ledger), R, ledger)
    HF = nk.matmul(H, F, ledger)
    resid = nk.sub(y, nk.add(nk.matmul(H, m, ledger), d, ledger), ledger)
    # the likelihood part always uses y - H u - d, also at k = 1
    resid_lik = resid
    if k == 1:
        resid_lik = nk.sub(y, nk.add(nk.matmul(H, u, ledger), d, ledger), ledger)
    try:
        # one LU of S serves K^T = S^{-1} H P, S^{-1} H F and S^{-1} resid_lik
        sol = nk.solve(S, np.column_stack([HP, HF, resid_lik]), ledger)
    except nk.SingularMatrixError as exc:
        raise nk.SingularMatrixError(f"innovation covariance singular at step {k}: {exc}") from None
    Kt, SinvHF, Sinv_resid = sol[:, :n_x], sol[:, n_x:2 * n_x], sol[:, -1]

    b = nk.add(m, nk.matmul(Kt.T, resid, ledger), ledger)
    C = nk.sym(nk.sub(P, nk.matmul(Kt.T, HP, ledger), ledger))
    if k == 1:
        A = np.zeros((n_x, n_x))
    else:
        A = nk.sub(F, nk.matmul(Kt.T, HF, ledger), ledger)
    eta = nk.matmul(HF.T, Sinv_resid, ledger)
    J = nk.sym(nk.matmul(HF.T, SinvHF, ledger))
    return FilterElement(A, b, C, eta, J)


def combine_filter(ei: FilterElement, ej: FilterElement,
                   ledger: Optional[FlopLedger] = None) -> FilterElement:
    n_x = ei.b.shape[0]
    I = np.eye(n_x)
    # X = A_j (I + C_i J_j)^{-1}, solved as (I + C_i J_j)^T X^T = A_j^T
    M = nk.add(I, nk.matmul(ei.C, ej.J, ledger), ledger)
    try:
        X = nk.solve(M.T, ej.A.T, ledger).T
        # Y = A_i^T (I + J_j C_i)^{-1}
        N = nk.add(I, nk.matmul(ej.J, ei.C, ledger), ledger)
        Y = nk.solve(N.T, ei.A, ledger).T
    except nk.SingularMatrixError as exc:
        raise nk.SingularMatrixError(f"filter combine: {exc}") from None

    A = nk.matmul(X, ei.A, ledger)
    b = nk.add(nk.matmul(X, nk.add(ei.b, nk.matmul(ei.C, ej.eta, ledger), ledger), ledger), ej.b, ledger)
    C = nk.sym(nk.add(nk.matmul(nk.matmul(X, ei.C, ledger), ej.A.T, ledger), ej.C, ledger))
    eta = nk.add(nk.matmul(Y, nk.sub(ej.eta, nk.matmul(ej.J, ei.b, ledger), ledger), ledger), ei.eta, ledger)
    J = nk.sym(nk.add(nk.matmul(nk.matmul(Y, ej.J, ledger), ei.A, ledger), ei.J, ledger))
    return FilterElement(A, b, C, eta, J)


def filter_monoid(n_x: int) -> Monoid[FilterElement]:
    return Monoid(combine_filter, FilterElement.identity(n_x), "gaussian-filter")


@dataclass
class ParallelFilterResult:
    filtered: list[GaussianMoment]
    report: ScanReport


def parallel_filter(model: LGSSM, ys, block: int = 1, workers: int = 1) -> ParallelFilterResult:
    """Filtering moments for all steps via elements and a parallel scan."""
    ys = _check_measurements(model, ys)
    with Schedule(workers) as sched:
        elems = sched.map(lambda k, led: filter_element(model, ys[k - 1], k, led),
                          range(1, model.n + 1), "elements")
        report = par_scan(elems, filter_monoid(model.n_x), block, schedule=sched)
    moments = [GaussianMoment(e.b, e.C) for e in report.results]
    return ParallelFilterResult(moments, report)


def predictive_moments(model: LGSSM, filtered: Optional[GaussianMoment], k: int,
                       ledger: Optional[FlopLedger] = None) -> GaussianMoment:
    """``p(x_k | y_{1:k-1})`` from the filtered moment at ``k - 1``.

    For ``k = 1`` pass ``filtered=None``; the prior ``(m0, P0)`` is used.
    """
    F, u, Q = model.transition(k)
    if k == 1:
        filtered = GaussianMoment(model.m0, model.P0)
    elif filtered is None:
        raise ValueError("a filtered moment is required for k >= 2")
    m = nk.add(nk.matmul(F, filtered.mean, ledger), u, ledger)
    P = nk.sym(nk.add(nk.matmul(nk.matmul(F, filtered.cov, ledger), F.T, ledger), Q, ledger))
    return GaussianMoment(m, P)


@dataclass
class ParallelLoglik:
    log_terms: np.ndarray
    prefix: np.ndarray
    report: ScanReport

    @property
    def loglik(self) -> float:
        return float(self.prefix[-1])


def parallel_loglik(model: LGSSM, filtered: list[GaussianMoment], ys,
                    workers: int = 1) -> ParallelLoglik:
    """Per-step ``log p(y_k | y_{1:k-1})`` in one parallel level, then prefix sums."""
    ys = _check_measurements(model, ys)
    if len(filtered) != model.n:
        raise ValueError(f"got {len(filtered)} filtered moments for {model.n} steps")

    def term(k, led):
        prev = filtered[k - 2] if k > 1 else None
        pred = predictive_moments(model, prev, k, led)
        H, d, R = model.measurement(k)
        mean = nk.add(nk.matmul(H, pred.mean, led), d, led)
        cov = nk.add(nk.matmul(nk.matmul(H, pred.cov, led), H.T, led), R, led)
        try:
            return nk.gaussian_logpdf(ys[k - 1], mean, cov, led)
        except nk.SingularMatrixError as exc:
            raise nk.SingularMatrixError(f"innovation covariance singular at step {k}: {exc}") from None

    with Schedule(workers) as sched:
        terms = sched.map(term, range(1, model.n + 1), "loglik-terms")
        report = par_scan(terms, addition, schedule=sched)
    return ParallelLoglik(np.array(terms), np.array(report.results, dtype=float), report)
