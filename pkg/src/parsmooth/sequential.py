"""Sequential reference algorithms.

Kalman filter, RTS smoother, scaled HMM forward/backward recursions and an
exhaustive-enumeration posterior for tiny HMMs. These are the oracles the
parallel drivers are checked against.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from . import numkernel as nk
from .numkernel import FlopLedger
from .ssm import LGSSM, HmmModel

ENUMERATION_LIMIT = 10**7


@dataclass(frozen=True)
class GaussianMoment:
    mean: np.ndarray
    cov: np.ndarray


@dataclass(frozen=True)
class FilterRun:
    filtered: list[GaussianMoment]
    predicted: list[GaussianMoment]
    log_terms: np.ndarray  # log p(y_k | y_{1:k-1})

    @property
    def loglik_prefix(self) -> np.ndarray:
        return np.cumsum(self.log_terms)

    @property
    def loglik(self) -> float:
        return float(np.sum(self.log_terms))


def stack_moments(moments: Sequence[GaussianMoment]) -> tuple[np.ndarray, np.ndarray]:
    """``(means, covs)`` arrays of shape ``(n, nx)`` and ``(n, nx, nx)``."""
    return (np.stack([m.mean for m in moments]), np.stack([m.cov for m in moments]))


def _check_measurements(model: LGSSM, ys: np.ndarray) -> np.ndarray:
    ys = np.asarray(ys, dtype=float)
    if ys.ndim == 1 and model.n_y == 1:
        ys = ys[:, None]
    if ys.shape != (model.n, model.n_y):
        raise ValueError(f"measurements have shape {ys.shape}; model expects {(model.n, model.n_y)}")
    return ys


def kalman_filter(model: LGSSM, ys, ledger: Optional[FlopLedger] = None) -> FilterRun:
    ys = _check_measurements(model, ys)
    m, P = model.m0, model.P0
    filtered, predicted = [], []
    log_terms = np.empty(model.n)
    for k in range(1, model.n + 1):
        F, u, Q = model.transition(k)
        H, d, R = model.measurement(k)
        # predict
        m = nk.add(nk.matmul(F, m, ledger), u, ledger)
        P = nk.sym(nk.add(nk.matmul(nk.matmul(F, P, ledger), F.T, ledger), Q, ledger))
        predicted.append(GaussianMoment(m, P))
        # update
        HP = nk.matmul(H, P, ledger)
        S = nk.add(nk.matmul(HP, H.T, ledger), R, ledger)
        v = nk.sub(ys[k - 1], nk.add(nk.matmul(H, m, ledger), d, ledger), ledger)
        try:
            # K^T = S^{-1} H P, with v appended so one LU serves both
            sol, logdet = nk.solve_logdet(S, np.column_stack([HP, v]), ledger)
        except nk.SingularMatrixError as exc:
            raise nk.SingularMatrixError(f"innovation covariance singular at step {k}: {exc}") from None
        Kt, w = sol[:, :-1], sol[:, -1]
        log_terms[k - 1] = -0.5 * (nk.dot(v, w, ledger) + logdet + model.n_y * np.log(2 * np.pi))
        m = nk.add(m, nk.matmul(Kt.T, v, ledger), ledger)
        P = nk.sym(nk.sub(P, nk.matmul(Kt.T, HP, ledger), ledger))
        filtered.append(GaussianMoment(m, P))
    return FilterRun(filtered, predicted, log_terms)


def rts_smoother(model: LGSSM, run: FilterRun, ledger: Optional[FlopLedger] = None) -> list[GaussianMoment]:
    """Backward RTS pass reusing the filter's predicted moments."""
    n = len(run.filtered)
    if n != model.n:
        raise ValueError(f"filter run has {n} steps; model has {model.n}")
    smoothed = [run.filtered[-1]]
    ms, Ps = run.filtered[-1].mean, run.filtered[-1].cov
    for k in range(n - 1, 0, -1):
        F, _, _ = model.transition(k + 1)
        mf, Pf = run.filtered[k - 1].mean, run.filtered[k - 1].cov
        mp, Pp = run.predicted[k].mean, run.predicted[k].cov
        FP = nk.matmul(F, Pf, ledger)
        try:
            Gt = nk.solve(Pp, FP, ledger)  # G^T, G = P F^T Pp^{-1}
        except nk.SingularMatrixError as exc:
            raise nk.SingularMatrixError(f"predicted covariance singular at step {k + 1}: {exc}") from None
        G = Gt.T
        ms = nk.add(mf, nk.matmul(G, nk.sub(ms, mp, ledger), ledger), ledger)
        dP = nk.matmul(nk.matmul(G, nk.sub(Ps, Pp, ledger), ledger), Gt, ledger)
        Ps = nk.sym(nk.add(Pf, dP, ledger))
        smoothed.append(GaussianMoment(ms, Ps))
    smoothed.reverse()
    return smoothed


# --- discrete-state models ---------------------------------------------------

@dataclass(frozen=True)
class HmmForward:
    filtered: np.ndarray        # (n, ns): p(x_k | y_{1:k})
    log_normalizers: np.ndarray  # (n,): log p(y_k | y_{1:k-1})

    @property
    def loglik_prefix(self) -> np.ndarray:
        return np.cumsum(self.log_normalizers)

    @property
    def loglik(self) -> float:
        return float(np.sum(self.log_normalizers))


def hmm_forward(model: HmmModel) -> HmmForward:
    alpha = model.initial
    filtered = np.empty((model.n, model.n_states))
    log_c = np.empty(model.n)
    for k in range(model.n):
        unnorm = (alpha @ model.transition) * model.likelihoods[k]
        c = unnorm.sum()
        if not c > 0:
            raise ValueError(f"measurement at step {k + 1} has zero probability under the model")
        alpha = unnorm / c
        filtered[k] = alpha
        log_c[k] = np.log(c)
    return HmmForward(filtered, log_c)


def hmm_backward_smooth(model: HmmModel, forward: HmmForward) -> np.ndarray:
    """Smoothed marginals ``p(x_k | y_{1:n})`` as an ``(n, ns)`` array."""
    Pi = model.transition
    smoothed = np.empty_like(forward.filtered)
    smoothed[-1] = forward.filtered[-1]
    for k in range(model.n - 2, -1, -1):
        pred = forward.filtered[k] @ Pi
        ratio = np.divide(smoothed[k + 1], pred, out=np.zeros_like(pred), where=pred > 0)
        s = forward.filtered[k] * (Pi @ ratio)
        smoothed[k] = s / s.sum()
    return smoothed


@dataclass(frozen=True)
class Posterior:
    smoothed: np.ndarray  # (n, ns)
    filtered: np.ndarray  # (n, ns)
    loglik: float
    loglik_prefix: np.ndarray


def brute_force_posterior(model: HmmModel) -> Posterior:
    """Exact marginals by summing the joint over every path ``x_{0:n}``."""
    ns, n = model.n_states, model.n
    if ns ** (n + 1) > ENUMERATION_LIMIT:
        raise ValueError(f"{ns}^{n + 1} paths exceed the enumeration limit {ENUMERATION_LIMIT}")
    paths = np.array(list(itertools.product(range(ns), repeat=n + 1)))
    with np.errstate(divide="ignore"):
        logP = np.log(model.transition)
        logL = np.log(model.likelihoods)
        logw = np.log(model.initial)[paths[:, 0]]
    filtered = np.empty((n, ns))
    prefix = np.empty(n)
    for k in range(1, n + 1):
        logw = logw + logP[paths[:, k - 1], paths[:, k]] + logL[k - 1, paths[:, k]]
        # logw is log p(x_{0:k}, y_{1:k}) replicated over the unused tail states;
        # each distinct prefix appears ns^(n-k) times.
        dup = (n - k) * np.log(ns)
        prefix[k - 1] = logsumexp(logw) - dup
        for s in range(ns):
            filtered[k - 1, s] = np.exp(logsumexp(logw[paths[:, k] == s]) - dup - prefix[k - 1])
    total = prefix[-1]
    smoothed = np.empty((n, ns))
    for k in range(1, n + 1):
        for s in range(ns):
            smoothed[k - 1, s] = np.exp(logsumexp(logw[paths[:, k] == s]) - total)
    return Posterior(smoothed, filtered, float(total), prefix)
