"""Parallel filtering and smoothing for finite-state HMMs.

The general filtering and smoothing operators reduce to finite sums here,
so the parallel results can be checked against exhaustive enumeration to
round-off. Likelihood vectors are kept in the log domain.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .numkernel import FlopLedger
from .scan import Monoid, ScanReport, Schedule, par_scan, reverse_scan
from .ssm import HmmModel


@dataclass(frozen=True)
class HmmFilterElement:
    f: np.ndarray      # f[z, x] = p(x_k = x | y_k, x_{k-1} = z)
    log_g: np.ndarray  # log p(y_k | x_{k-1} = z)

    @classmethod
    def identity(cls, n_s: int) -> "HmmFilterElement":
        return cls(np.eye(n_s), np.zeros(n_s))


@dataclass(frozen=True)
class HmmSmoothElement:
    m: np.ndarray  # m[z, x] = p(x_k = x | y_{1:k}, x_{k+1} = z)

    @classmethod
    def identity(cls, n_s: int) -> "HmmSmoothElement":
        return cls(np.eye(n_s))


def _charge(ledger, tag, flops):
    if ledger is not None:
        ledger.charge(tag, flops)


def hmm_filter_element(model: HmmModel, k: int,
                       ledger: Optional[FlopLedger] = None) -> HmmFilterElement:
    if not 1 <= k <= model.n:
        raise IndexError(f"step {k} outside 1..{model.n}")
    lik = model.likelihoods[k - 1]
    ns = model.n_states
    if k == 1:
        # p(x_1 | y_1, x_0) = p(x_1 | y_1): every row is the same posterior
        rows = np.tile(model.initial @ model.transition, (ns, 1))
        _charge(ledger, "matmul", 2 * ns * ns)
    else:
        rows = model.transition
    joint = rows * lik
    norm = joint.sum(axis=1)
    _charge(ledger, "hmm", 3 * ns * ns)
    if np.any(norm <= 0):
        raise ValueError(f"step {k}: measurement has zero probability from some previous state")
    return HmmFilterElement(joint / norm[:, None], np.log(norm))


def combine_hmm_filter(ei: HmmFilterElement, ej: HmmFilterElement,
                       ledger: Optional[FlopLedger] = None) -> HmmFilterElement:
    shift = np.max(ej.log_g)
    w = np.exp(ej.log_g - shift)
    fw = ei.f * w                 # f_i(y | z) g_j(y)
    denom = fw.sum(axis=1)
    if np.any(denom <= 0):
        raise ValueError("filter combine: zero normaliser")
    f = (fw @ ej.f) / denom[:, None]
    ns = w.shape[0]
    _charge(ledger, "hmm", 2 * ns**3 + 4 * ns * ns + 3 * ns)
    return HmmFilterElement(f, ei.log_g + np.log(denom) + shift)


def hmm_filter_monoid(n_s: int) -> Monoid[HmmFilterElement]:
    return Monoid(combine_hmm_filter, HmmFilterElement.identity(n_s), "hmm-filter")


def hmm_smooth_element(model: HmmModel, filtered: np.ndarray, k: int, n: Optional[int] = None,
                       ledger: Optional[FlopLedger] = None) -> HmmSmoothElement:
    n = model.n if n is None else n
    ns = model.n_states
    if k == n:
        return HmmSmoothElement(np.tile(filtered, (ns, 1)))
    joint = model.transition.T * filtered   # [z, x] = Pi[x, z] alpha_k(x)
    norm = joint.sum(axis=1)
    _charge(ledger, "hmm", 3 * ns * ns)
    if np.any(norm <= 0):
        raise ValueError(f"step {k}: next state unreachable from the filtered distribution")
    return HmmSmoothElement(joint / norm[:, None])


def combine_hmm_smooth(ei: HmmSmoothElement, ej: HmmSmoothElement,
                       ledger: Optional[FlopLedger] = None) -> HmmSmoothElement:
    # a_ij(x | z) = sum_y a_i(x | y) a_j(y | z)
    ns = ei.m.shape[0]
    _charge(ledger, "matmul", 2 * ns**3)
    return HmmSmoothElement(ej.m @ ei.m)


def hmm_smooth_monoid(n_s: int) -> Monoid[HmmSmoothElement]:
    return Monoid(combine_hmm_smooth, HmmSmoothElement.identity(n_s), "hmm-smooth")


@dataclass
class HmmParallelResult:
    marginals: np.ndarray
    loglik_prefix: Optional[np.ndarray]
    report: ScanReport

    @property
    def loglik(self) -> Optional[float]:
        return None if self.loglik_prefix is None else float(self.loglik_prefix[-1])


def parallel_hmm_filter(model: HmmModel, block: int = 1, workers: int = 1) -> HmmParallelResult:
    with Schedule(workers) as sched:
        elems = sched.map(lambda k, led: hmm_filter_element(model, k, led),
                          range(1, model.n + 1), "elements")
        report = par_scan(elems, hmm_filter_monoid(model.n_states), block, schedule=sched)
    # prefixes from step 1 have identical rows; row 0 is the marginal
    marginals = np.stack([e.f[0] for e in report.results])
    prefix = np.array([e.log_g[0] for e in report.results])
    return HmmParallelResult(marginals, prefix, report)


def parallel_hmm_smoother(model: HmmModel, filtered: np.ndarray, block: int = 1,
                          workers: int = 1) -> HmmParallelResult:
    n = model.n
    if filtered.shape != (n, model.n_states):
        raise ValueError(f"filtered has shape {filtered.shape}; expected {(n, model.n_states)}")
    with Schedule(workers) as sched:
        elems = sched.map(lambda k, led: hmm_smooth_element(model, filtered[k - 1], k, n, led),
                          range(1, n + 1), "elements")
        report = reverse_scan(elems, hmm_smooth_monoid(model.n_states), block, schedule=sched)
    marginals = np.stack([e.m[0] for e in report.results])
    return HmmParallelResult(marginals, None, report)
