"""End-to-end verification checks.

Each ``check_*`` function runs one acceptance criterion against an
independent reference (sequential recursions, exhaustive enumeration,
quadrature, or hand-derived values) and returns a :class:`CheckResult`.
``python -m parsmooth verify`` and the acceptance tests both call these.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import integrate

from . import bench
from .numkernel import matmul
from .hmm_par import (
    HmmFilterElement, HmmSmoothElement, combine_hmm_filter, combine_hmm_smooth,
    hmm_filter_element, hmm_filter_monoid, hmm_smooth_element, hmm_smooth_monoid,
    parallel_hmm_filter, parallel_hmm_smoother,
)
from .pkf import FilterElement, combine_filter, filter_element, filter_monoid, parallel_filter, parallel_loglik
from .prts import SmoothElement, combine_smooth, parallel_smoother, smooth_element, smooth_monoid
from .scan import Monoid, addition, par_scan, seq_scan
from .sequential import brute_force_posterior, hmm_forward, kalman_filter, rts_smoother, stack_moments
from .ssm import LGSSM, make_random_hmm, make_random_lgssm, make_tracking_model, simulate

ORACLE_NS = (1, 2, 3, 7, 64, 1000)
SCAN_NS = (1, 2, 3, 4, 5, 6, 7, 8, 9, 16, 17, 64, 1000)
BLOCKS = (1, 2, 4, 8)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


# --- error metrics -----------------------------------------------------------

def rel_err(a, b) -> float:
    """Norm-wise relative error of ``a`` against reference ``b``."""
    a, b = np.asarray(a, float), np.asarray(b, float)
    denom = np.linalg.norm(b)
    diff = np.linalg.norm(a - b)
    return diff / denom if denom > 0 else diff


def moment_errors(test, ref) -> tuple[float, float]:
    """Worst per-step relative mean error and relative Frobenius covariance error."""
    (tm, tc), (rm, rc) = stack_moments(test), stack_moments(ref)
    return (max(rel_err(a, b) for a, b in zip(tm, rm)),
            max(rel_err(a, b) for a, b in zip(tc, rc)))


def _fields(e) -> np.ndarray:
    return np.concatenate([np.ravel(getattr(e, f)) for f in e.__dataclass_fields__])


def element_err(a, b) -> float:
    return rel_err(_fields(a), _fields(b))


# --- monoid registry ---------------------------------------------------------

def _rand_psd(rng, dim, scale=1.0):
    G = rng.standard_normal((dim, dim)) * scale / math.sqrt(dim)
    return G @ G.T


def random_filter_element(rng, n_x=3) -> FilterElement:
    return FilterElement(rng.standard_normal((n_x, n_x)) / math.sqrt(n_x),
                         rng.standard_normal(n_x), _rand_psd(rng, n_x),
                         rng.standard_normal(n_x), _rand_psd(rng, n_x))


def random_smooth_element(rng, n_x=3) -> SmoothElement:
    return SmoothElement(rng.standard_normal((n_x, n_x)) / math.sqrt(n_x),
                         rng.standard_normal(n_x), _rand_psd(rng, n_x))


def _random_stochastic(rng, n_s):
    return rng.dirichlet(np.ones(n_s), size=n_s) * (1 - n_s * 1e-3) + 1e-3


def random_hmm_filter_element(rng, n_s=3) -> HmmFilterElement:
    return HmmFilterElement(_random_stochastic(rng, n_s), np.log(rng.uniform(0.05, 1.0, n_s)))


def random_hmm_smooth_element(rng, n_s=3) -> HmmSmoothElement:
    return HmmSmoothElement(_random_stochastic(rng, n_s))


def _scalar_err(a, b):
    return abs(a - b) / max(abs(b), 1.0)


def _model_filter_elements(rng, n):
    seed = int(rng.integers(2**31))
    model = make_random_lgssm(3, 2, n, seed)
    ys = simulate(model, seed).measurements
    return [filter_element(model, ys[k - 1], k) for k in range(1, n + 1)]


def _model_smooth_elements(rng, n):
    seed = int(rng.integers(2**31))
    model = make_random_lgssm(3, 2, n, seed)
    run = kalman_filter(model, simulate(model, seed).measurements)
    return [smooth_element(model, run.filtered[k - 1], k) for k in range(1, n + 1)]


def _model_hmm_filter_elements(rng, n):
    model, _ = make_random_hmm(3, n, int(rng.integers(2**31)))
    return [hmm_filter_element(model, k) for k in range(1, n + 1)]


def _model_hmm_smooth_elements(rng, n):
    model, _ = make_random_hmm(3, n, int(rng.integers(2**31)))
    alpha = hmm_forward(model).filtered
    return [hmm_smooth_element(model, alpha[k - 1], k) for k in range(1, n + 1)]


def _orthogonal_matrices(rng, n):
    return [np.linalg.qr(rng.standard_normal((3, 3)))[0] for _ in range(n)]


matrix_product: Monoid = Monoid(matmul, np.eye(3), "matmul3")


@dataclass(frozen=True)
class RegisteredMonoid:
    name: str
    monoid: Monoid
    sample: Callable  # (rng, n) -> elements
    distance: Callable
    tol: float


def registered_monoids() -> list[RegisteredMonoid]:
    return [
        RegisteredMonoid("addition", addition,
                         lambda rng, n: list(rng.integers(-100, 100, n)), lambda a, b: abs(a - b), 0.0),
        RegisteredMonoid("matrix-product", matrix_product, _orthogonal_matrices, rel_err, 1e-10),
        RegisteredMonoid("gaussian-filter", filter_monoid(3), _model_filter_elements, element_err, 1e-9),
        RegisteredMonoid("gaussian-smooth", smooth_monoid(3), _model_smooth_elements, element_err, 1e-9),
        RegisteredMonoid("hmm-filter", hmm_filter_monoid(3), _model_hmm_filter_elements, element_err, 1e-10),
        RegisteredMonoid("hmm-smooth", hmm_smooth_monoid(3), _model_hmm_smooth_elements, element_err, 1e-12),
    ]


# --- criteria ----------------------------------------------------------------

def _oracle_model(i: int, n: int) -> LGSSM:
    return make_random_lgssm(1 + i % 6, 1 + i % 4, n, seed=1000 + i, time_varying=(i % 3 == 2))


@lru_cache(maxsize=1)
def _oracle_sweep(count: int = 50) -> dict:
    worst = {"filter": [0.0, 0.0], "smoother": [0.0, 0.0]}
    t0 = time.perf_counter()
    for i in range(count):
        for n in ORACLE_NS:
            model = _oracle_model(i, n)
            ys = simulate(model, seed=i).measurements
            run = kalman_filter(model, ys)
            pf = parallel_filter(model, ys)
            em, ec = moment_errors(pf.filtered, run.filtered)
            worst["filter"] = [max(worst["filter"][0], em), max(worst["filter"][1], ec)]
            ref = rts_smoother(model, run)
            ps = parallel_smoother(model, pf.filtered)
            em, ec = moment_errors(ps.smoothed, ref)
            worst["smoother"] = [max(worst["smoother"][0], em), max(worst["smoother"][1], ec)]
    worst["seconds"] = time.perf_counter() - t0
    return worst


def check_filter_oracle() -> CheckResult:
    w = _oracle_sweep()
    em, ec = w["filter"]
    ok = em <= 1e-8 and ec <= 1e-7 and w["seconds"] < 120
    return CheckResult("1 filter oracle equivalence", ok,
                       f"mean rel {em:.2e} (<=1e-8), cov rel {ec:.2e} (<=1e-7), "
                       f"sweep {w['seconds']:.1f}s (<120s)")


def check_smoother_oracle() -> CheckResult:
    w = _oracle_sweep()
    em, ec = w["smoother"]
    ok = em <= 1e-8 and ec <= 1e-7
    return CheckResult("2 smoother oracle equivalence", ok,
                       f"mean rel {em:.2e} (<=1e-8), cov rel {ec:.2e} (<=1e-7)")


def scalar_model(n: int = 2) -> LGSSM:
    one = np.ones((1, 1))
    return LGSSM(one, np.zeros(1), one, one, np.zeros(1), one, np.zeros(1), one, n)


def check_scalar_case() -> CheckResult:
    model = scalar_model()
    ys = np.array([[1.0], [0.0]])
    run = kalman_filter(model, ys)
    pf = parallel_filter(model, ys)
    expected_f = [(2 / 3, 2 / 3), (1 / 4, 5 / 8)]
    errs = []
    for moments in (run.filtered, pf.filtered):
        for mom, (m, P) in zip(moments, expected_f):
            errs += [abs(mom.mean[0] - m), abs(mom.cov[0, 0] - P)]
    for sm in (rts_smoother(model, run)[0], parallel_smoother(model, pf.filtered).smoothed[0],
               parallel_smoother(model, run.filtered).smoothed[0]):
        errs += [abs(sm.mean[0] - 0.5), abs(sm.cov[0, 0] - 0.5)]
    worst = max(errs)
    return CheckResult("3 hand-derived scalar case", worst <= 1e-12, f"max abs error {worst:.2e} (<=1e-12)")


def check_discrete_exactness(instances: int = 100) -> CheckResult:
    worst = 0.0
    for i in range(instances):
        n_s, n = 2 + i % 2, 1 + i % 6
        model, _ = make_random_hmm(n_s, n, seed=i)
        exact = brute_force_posterior(model)
        pf = parallel_hmm_filter(model)
        ps = parallel_hmm_smoother(model, pf.marginals)
        worst = max(worst,
                    np.max(np.abs(pf.marginals - exact.filtered)),
                    np.max(np.abs(ps.marginals - exact.smoothed)),
                    np.max(np.abs(pf.loglik_prefix - exact.loglik_prefix)))
    return CheckResult("4 discrete exactness vs enumeration", worst <= 1e-12,
                       f"{instances} HMMs, max abs error {worst:.2e} (<=1e-12)")


def check_scan(seed: int = 0) -> CheckResult:
    worked = seq_scan([1, 2, 3, 4], addition).results == [1, 3, 6, 10] == \
        par_scan([1, 2, 3, 4], addition).results
    rng = np.random.default_rng(seed)
    worst = {}
    ok = worked
    for reg in registered_monoids():
        w = 0.0
        for n in SCAN_NS:
            elems = reg.sample(rng, n)
            ref = seq_scan(elems, reg.monoid).results
            got = par_scan(elems, reg.monoid).results
            w = max(w, max(reg.distance(a, b) for a, b in zip(got, ref)))
        worst[reg.name] = w
        ok = ok and w <= reg.tol
    detail = "(1,2,3,4)->(1,3,6,10) " + ("ok" if worked else "WRONG") + "; " + \
        ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    return CheckResult("5 scan correctness", ok, detail)


def check_associativity(triples: int = 1000, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    ops = [
        ("gaussian-filter", combine_filter, random_filter_element, 1e-9),
        ("gaussian-smooth", combine_smooth, random_smooth_element, 1e-9),
        ("hmm-filter", combine_hmm_filter, random_hmm_filter_element, 1e-12),
        ("hmm-smooth", combine_hmm_smooth, random_hmm_smooth_element, 1e-12),
    ]
    ok, parts = True, []
    for name, op, sample, tol in ops:
        w = 0.0
        for _ in range(triples):
            n = int(rng.integers(1, 6))
            a, b, c = sample(rng, n), sample(rng, n), sample(rng, n)
            lhs, rhs = op(op(a, b), c), op(a, op(b, c))
            d = element_err(lhs, rhs) if tol > 1e-12 else np.max(np.abs(_fields(lhs) - _fields(rhs)))
            w = max(w, d)
        ok = ok and w <= tol
        parts.append(f"{name} {w:.1e} (<={tol:g})")
    return CheckResult("6 associativity", ok, f"{triples} triples each: " + ", ".join(parts))


def check_marginal_likelihood(n: int = 1000, seed: int = 0) -> CheckResult:
    model = make_tracking_model(n=n)
    ys = simulate(model, seed).measurements
    run = kalman_filter(model, ys)
    ll = parallel_loglik(model, parallel_filter(model, ys).filtered, ys)
    worst = float(np.max(np.abs(ll.prefix - run.loglik_prefix)))
    return CheckResult("7 parallel marginal likelihood", worst <= 1e-8,
                       f"tracking n={n}, max abs prefix error {worst:.2e} (<=1e-8)")


def check_block_invariance(n: int = 100, seed: int = 0) -> CheckResult:
    model = make_tracking_model(n=n)
    ys = simulate(model, seed).measurements
    base_f = parallel_filter(model, ys).filtered
    base_s = parallel_smoother(model, base_f).smoothed
    hmm, _ = make_random_hmm(3, n, seed)
    base_hf = parallel_hmm_filter(hmm)
    base_hs = parallel_hmm_smoother(hmm, base_hf.marginals)
    worst = 0.0
    for block in (*BLOCKS, n):
        f = parallel_filter(model, ys, block).filtered
        s = parallel_smoother(model, base_f, block).smoothed
        hf = parallel_hmm_filter(hmm, block)
        hs = parallel_hmm_smoother(hmm, base_hf.marginals, block)
        worst = max(worst, *moment_errors(f, base_f), *moment_errors(s, base_s),
                    np.max(np.abs(hf.marginals - base_hf.marginals)),
                    np.max(np.abs(hs.marginals - base_hs.marginals)),
                    _scalar_err(hf.loglik, base_hf.loglik))
    return CheckResult("8 block invariance", worst <= 1e-9,
                       f"blocks {(*BLOCKS, n)}, max rel deviation {worst:.2e} (<=1e-9)")


FLOP_SWEEP = tuple(2**p for p in range(4, 13))


def check_flop_shape(ns=FLOP_SWEEP) -> CheckResult:
    records = bench.run_bench(make_tracking_model(), ns, seeds=(0,))
    s = bench.summarize(records)
    f, r = s["filter"], s["smoother"]
    kf_ratio = [f["work_ratio"][str(n)] for n in f["n"] if n >= 256]
    rts_ratio = [r["work_ratio"][str(n)] for n in r["n"] if n >= 256]
    by = {(x.algorithm, x.n): x for x in records}
    span_f = all(by["pkf", n].span_flops < by["kf", n].work_flops for n in ns if n >= 64)
    span_s = all(by["prts", n].span_flops < by["rts", n].work_flops for n in ns if n >= 32)
    growth = [g for n, g in list(f["span_growth"].items()) + list(r["span_growth"].items())
              if int(n) >= 1024]
    checks = {
        "PKF/KF work in [5,12]": all(5 <= x <= 12 for x in kf_ratio),
        "PRTS/RTS work in [2.5,6]": all(2.5 <= x <= 6 for x in rts_ratio),
        "span PKF < work KF (n>=64)": span_f,
        "span PRTS < work RTS (n>=32)": span_s,
        "span(2n)/span(n) <= 1.35 (n>=1024)": bool(growth) and all(g <= 1.35 for g in growth),
    }
    detail = (f"PKF/KF {min(kf_ratio):.2f}..{max(kf_ratio):.2f}, "
              f"PRTS/RTS {min(rts_ratio):.2f}..{max(rts_ratio):.2f}, "
              f"crossovers {f['crossover_n']}/{r['crossover_n']}, "
              f"max span growth {max(growth):.3f}; "
              + "; ".join(k for k, v in checks.items() if not v))
    return CheckResult("9 flop-shape reproduction", all(checks.values()), detail.rstrip("; "))


# --- Gaussian product / marginalisation identities ----------------------------

def info_logkernel(y, eta, J) -> float:
    """Log of the unnormalised information-form Gaussian ``exp(-y'Jy/2 + eta'y)``."""
    return float(-0.5 * y @ J @ y + eta @ y)


def gauss_logpdf(y, m, C) -> float:
    r = y - m
    _, logdet = np.linalg.slogdet(C)
    return float(-0.5 * (r @ np.linalg.solve(C, r) + logdet + len(y) * math.log(2 * math.pi)))


def _const_ratio_dev(log_lhs, log_rhs) -> float:
    r = np.asarray(log_lhs) - np.asarray(log_rhs)
    return float(np.max(np.abs(np.expm1(r - r[0]))))


def identity_deviations(points: int = 100, seed: int = 0) -> dict[str, float]:
    rng = np.random.default_rng(seed)
    dev = {}

    dim = 3
    eta, J = rng.standard_normal(dim), _rand_psd(rng, dim)
    m, C = rng.standard_normal(dim), _rand_psd(rng, dim) + 0.5 * np.eye(dim)
    Ci = np.linalg.inv(C)
    cov = np.linalg.inv(J + Ci)
    mean = cov @ (eta + Ci @ m)
    ys = rng.standard_normal((points, dim))
    dev["product info x moment"] = _const_ratio_dev(
        [info_logkernel(y, eta, J) + gauss_logpdf(y, m, C) for y in ys],
        [gauss_logpdf(y, mean, cov) for y in ys])

    eta2, J2 = rng.standard_normal(dim), _rand_psd(rng, dim)
    dev["product info x info"] = _const_ratio_dev(
        [info_logkernel(y, eta, J) + info_logkernel(y, eta2, J2) for y in ys],
        [info_logkernel(y, eta + eta2, J + J2) for y in ys])

    # marginalisation, 1-D y by adaptive quadrature
    nz = 2
    A, b = rng.standard_normal((1, nz)), rng.standard_normal(1)
    e1, J1, C1 = rng.standard_normal(1), _rand_psd(rng, 1), _rand_psd(rng, 1) + 0.5 * np.eye(1)
    zs = rng.standard_normal((points, nz))

    def lhs_1d(z):
        mu, sd = float((A @ z + b)[0]), math.sqrt(C1[0, 0])
        f = lambda y: math.exp(-0.5 * J1[0, 0] * y * y + e1[0] * y - 0.5 * ((y - mu) / sd) ** 2) \
            / (sd * math.sqrt(2 * math.pi))
        val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=0, epsrel=1e-13, limit=200)
        return math.log(val)

    dev["marginalisation (1-D quadrature)"] = _const_ratio_dev(
        [lhs_1d(z) for z in zs], [_marginal_rhs(z, e1, J1, A, b, C1) for z in zs])

    # marginalisation, 2-D y by tensor Gauss-Hermite under N(Az + b, C)
    A2, b2 = rng.standard_normal((2, nz)) * 0.7, rng.standard_normal(2)
    e2, J2b = rng.standard_normal(2) * 0.5, _rand_psd(rng, 2, 0.7)
    C2 = _rand_psd(rng, 2, 0.7) + 0.3 * np.eye(2)
    x, w = np.polynomial.hermite_e.hermegauss(80)
    X = np.stack(np.meshgrid(x, x, indexing="ij"), -1).reshape(-1, 2)
    W = np.outer(w, w).ravel() / (2 * math.pi)
    Lc = np.linalg.cholesky(C2)

    def lhs_2d(z):
        Y = (A2 @ z + b2) + X @ Lc.T
        vals = np.exp(-0.5 * np.einsum("ij,jk,ik->i", Y, J2b, Y) + Y @ e2)
        return math.log(float(W @ vals))

    dev["marginalisation (2-D Gauss-Hermite)"] = _const_ratio_dev(
        [lhs_2d(z) for z in zs], [_marginal_rhs(z, e2, J2b, A2, b2, C2) for z in zs])
    return dev


def _marginal_rhs(z, eta, J, A, b, C) -> float:
    M = np.linalg.inv(np.eye(len(eta)) + J @ C)
    return info_logkernel(z, A.T @ M @ (eta - J @ b), A.T @ M @ J @ A)


def check_gaussian_identities() -> CheckResult:
    dev = identity_deviations()
    worst = max(dev.values())
    return CheckResult("10 Gaussian identities", worst <= 1e-8,
                       ", ".join(f"{k} {v:.1e}" for k, v in dev.items()) + " (<=1e-8)")


ALL_CHECKS = (
    check_filter_oracle, check_smoother_oracle, check_scalar_case, check_discrete_exactness,
    check_scan, check_associativity, check_marginal_likelihood, check_block_invariance,
    check_flop_shape, check_gaussian_identities,
)


def run_all(echo: Callable[[str], None] = print) -> list[CheckResult]:
    results = []
    for check in ALL_CHECKS:
        res = check()
        echo(res.line())
        results.append(res)
    return results
