"""State-space model definitions, random generators and simulation.

Linear-Gaussian models follow

    x_k = F_{k-1} x_{k-1} + u_{k-1} + q_{k-1},   q ~ N(0, Q_{k-1})
    y_k = H_k x_k + d_k + r_k,                   r ~ N(0, R_k)

with ``x_0 ~ N(m0, P0)`` and ``k = 1..n``. Parameters are stored either once
(stationary, broadcast over steps) or as per-step stacks with a leading
axis of length ``n``; entry ``k - 1`` of a stack is the parameter used when
producing step ``k``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Optional

import numpy as np

PSD_TOL = 1e-10


def _check_sym_psd(name: str, M: np.ndarray, definite: bool = False) -> None:
    mats = M if M.ndim == 3 else M[None]
    for S in mats:
        if not np.allclose(S, S.T, rtol=0.0, atol=1e-12 * max(1.0, np.max(np.abs(S)))):
            raise ValueError(f"{name} is not symmetric")
        lo = np.min(np.linalg.eigvalsh(S))
        scale = max(1.0, np.max(np.abs(S)))
        if definite and lo <= 0.0:
            raise ValueError(f"{name} is not positive definite (min eigenvalue {lo:.3e})")
        if lo < -PSD_TOL * scale:
            raise ValueError(f"{name} is not positive semidefinite (min eigenvalue {lo:.3e})")


@dataclass(frozen=True)
class LGSSM:
    F: np.ndarray
    u: np.ndarray
    Q: np.ndarray
    H: np.ndarray
    d: np.ndarray
    R: np.ndarray
    m0: np.ndarray
    P0: np.ndarray
    n: int

    def __post_init__(self):
        for name in ("F", "u", "Q", "H", "d", "R", "m0", "P0"):
            value = np.asarray(getattr(self, name), dtype=float)
            if not np.all(np.isfinite(value)):
                raise ValueError(f"{name} has non-finite entries")
            object.__setattr__(self, name, value)
        if self.n < 1:
            raise ValueError(f"step count must be >= 1, got {self.n}")
        nx, ny = self.n_x, self.n_y
        expected = {
            "F": (nx, nx), "u": (nx,), "Q": (nx, nx),
            "H": (ny, nx), "d": (ny,), "R": (ny, ny),
        }
        for name, shape in expected.items():
            value = getattr(self, name)
            if value.shape != shape and value.shape != (self.n, *shape):
                raise ValueError(
                    f"{name} has shape {value.shape}; expected {shape} or {(self.n, *shape)}"
                )
        if self.P0.shape != (nx, nx):
            raise ValueError(f"P0 has shape {self.P0.shape}; expected {(nx, nx)}")
        _check_sym_psd("Q", self.Q)
        _check_sym_psd("R", self.R)
        _check_sym_psd("P0", self.P0)

    @property
    def n_x(self) -> int:
        return self.m0.shape[0]

    @property
    def n_y(self) -> int:
        return self.H.shape[-2]

    @property
    def stationary(self) -> bool:
        return all(getattr(self, k).ndim == nd for k, nd in
                   (("F", 2), ("u", 1), ("Q", 2), ("H", 2), ("d", 1), ("R", 2)))

    def _at(self, name: str, k: int, base_ndim: int) -> np.ndarray:
        value = getattr(self, name)
        return value if value.ndim == base_ndim else value[k - 1]

    def transition(self, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(F, u, Q)`` that carry ``x_{k-1}`` to ``x_k``."""
        if not 1 <= k <= self.n:
            raise IndexError(f"transition step {k} outside 1..{self.n}")
        return self._at("F", k, 2), self._at("u", k, 1), self._at("Q", k, 2)

    def measurement(self, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """``(H, d, R)`` of the measurement at step ``k``."""
        if not 1 <= k <= self.n:
            raise IndexError(f"measurement step {k} outside 1..{self.n}")
        return self._at("H", k, 2), self._at("d", k, 1), self._at("R", k, 2)

    def with_steps(self, n: int) -> "LGSSM":
        if not self.stationary:
            raise ValueError("only stationary models can be resized")
        return LGSSM(self.F, self.u, self.Q, self.H, self.d, self.R, self.m0, self.P0, n)

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"n": self.n, "n_x": self.n_x, "n_y": self.n_y}
        for name in ("F", "u", "Q", "H", "d", "R", "m0", "P0"):
            out[name] = getattr(self, name).tolist()
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "LGSSM":
        try:
            return cls(**{k: np.asarray(data[k], dtype=float)
                          for k in ("F", "u", "Q", "H", "d", "R", "m0", "P0")},
                       n=int(data["n"]))
        except KeyError as exc:
            raise ValueError(f"model document is missing field {exc.args[0]!r}") from None


@dataclass(frozen=True)
class HmmModel:
    """Finite-state HMM with per-step emission likelihoods.

    ``transition[i, j] = p(x_k = j | x_{k-1} = i)``; ``likelihoods[k - 1, s]``
    is ``p(y_k | x_k = s)``; ``initial`` is the law of ``x_0``.
    """

    transition: np.ndarray
    likelihoods: np.ndarray
    initial: np.ndarray

    def __post_init__(self):
        P = np.asarray(self.transition, dtype=float)
        L = np.asarray(self.likelihoods, dtype=float)
        p0 = np.asarray(self.initial, dtype=float)
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "likelihoods", L)
        object.__setattr__(self, "initial", p0)
        ns = p0.shape[0]
        if P.shape != (ns, ns):
            raise ValueError(f"transition has shape {P.shape}; expected {(ns, ns)}")
        if L.ndim != 2 or L.shape[1] != ns or L.shape[0] < 1:
            raise ValueError(f"likelihoods has shape {L.shape}; expected (n, {ns})")
        if np.any(P < 0) or np.max(np.abs(P.sum(axis=1) - 1.0)) > 1e-12:
            raise ValueError("transition rows must be nonnegative and sum to 1")
        if np.any(p0 < 0) or abs(p0.sum() - 1.0) > 1e-12:
            raise ValueError("initial distribution must be nonnegative and sum to 1")
        if np.any(L < 0) or not np.all(np.isfinite(L)):
            raise ValueError("emission likelihoods must be finite and nonnegative")

    @property
    def n_states(self) -> int:
        return self.initial.shape[0]

    @property
    def n(self) -> int:
        return self.likelihoods.shape[0]


@dataclass(frozen=True)
class SimResult:
    states: np.ndarray        # (n, n_x): x_1..x_n
    measurements: np.ndarray  # (n, n_y): y_1..y_n
    seed: int
    initial_state: Optional[np.ndarray] = None


def make_tracking_model(
    dt: float = 0.1,
    q: float = 1.0,
    sigma: float = 0.5,
    m0=(0.0, 0.0, 1.0, -1.0),
    P0=None,
    n: int = 100,
) -> LGSSM:
    """Constant-velocity 2D tracking model observed through noisy positions.

    State is ``(u, v, du, dv)``. ``q = 0`` is accepted and gives a
    noiseless transition.
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if q < 0:
        raise ValueError(f"q must be nonnegative, got {q}")
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    F = np.array([[1, 0, dt, 0],
                  [0, 1, 0, dt],
                  [0, 0, 1, 0],
                  [0, 0, 0, 1]], dtype=float)
    Q = q * np.array([[dt**3 / 3, 0, dt**2 / 2, 0],
                      [0, dt**3 / 3, 0, dt**2 / 2],
                      [dt**2 / 2, 0, dt, 0],
                      [0, dt**2 / 2, 0, dt]], dtype=float)
    H = np.array([[1, 0, 0, 0],
                  [0, 1, 0, 0]], dtype=float)
    R = sigma**2 * np.eye(2)
    P0 = np.eye(4) if P0 is None else P0
    return LGSSM(F, np.zeros(4), Q, H, np.zeros(2), R, np.asarray(m0, float), P0, n)


def _sqrt_cov(S: np.ndarray) -> np.ndarray:
    # Cholesky when definite; semidefinite covariances fall back to an
    # eigen-square-root so that zero-noise models still simulate.
    try:
        return np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(S)
        return V * np.sqrt(np.clip(w, 0.0, None))


def simulate(model: LGSSM, seed: int) -> SimResult:
    """Draw one trajectory and its measurements with ``numpy``'s PCG64."""
    rng = np.random.default_rng(seed)
    x = model.m0 + _sqrt_cov(model.P0) @ rng.standard_normal(model.n_x)
    x0 = x.copy()
    states = np.empty((model.n, model.n_x))
    ys = np.empty((model.n, model.n_y))
    for k in range(1, model.n + 1):
        F, u, Q = model.transition(k)
        H, d, R = model.measurement(k)
        x = F @ x + u + _sqrt_cov(Q) @ rng.standard_normal(model.n_x)
        states[k - 1] = x
        ys[k - 1] = H @ x + d + _sqrt_cov(R) @ rng.standard_normal(model.n_y)
    return SimResult(states, ys, seed, x0)


def _random_spd(rng: np.random.Generator, dim: int, eps: float) -> np.ndarray:
    G = rng.standard_normal((dim, dim)) / np.sqrt(dim)
    return G @ G.T + eps * np.eye(dim)


def make_random_lgssm(
    n_x: int, n_y: int, n: int, seed: int, time_varying: bool = False, eps: float = 1e-2
) -> LGSSM:
    """Random stable model for fixtures.

    ``F`` is rescaled to spectral radius at most 0.99; ``Q`` and ``P0`` are
    ``G G^T + eps I`` and ``R`` is ``G G^T + I``.
    """
    if n_x < 1 or n_y < 1:
        raise ValueError("n_x and n_y must be >= 1")
    rng = np.random.default_rng(seed)
    steps = n if time_varying else 1

    def transition_matrix():
        F = rng.standard_normal((n_x, n_x))
        rho = np.max(np.abs(np.linalg.eigvals(F)))
        target = rng.uniform(0.5, 0.99)
        return F * (target / rho) if rho > 0 else F

    F = np.stack([transition_matrix() for _ in range(steps)])
    u = rng.standard_normal((steps, n_x)) * 0.1
    Q = np.stack([_random_spd(rng, n_x, eps) for _ in range(steps)])
    H = rng.standard_normal((steps, n_y, n_x))
    d = rng.standard_normal((steps, n_y)) * 0.1
    R = np.stack([_random_spd(rng, n_y, 1.0) for _ in range(steps)])
    m0 = rng.standard_normal(n_x)
    P0 = _random_spd(rng, n_x, eps)
    if not time_varying:
        F, u, Q, H, d, R = (a[0] for a in (F, u, Q, H, d, R))
    return LGSSM(F, u, Q, H, d, R, m0, P0, n)


def make_random_hmm(
    n_s: int, n: int, seed: int, n_obs: Optional[int] = None, floor: float = 1e-3
) -> tuple[HmmModel, np.ndarray]:
    """Random HMM with a simulated observation sequence.

    Returns the model (whose likelihood table is already evaluated at the
    observations) and the integer observation symbols.
    """
    if n_s < 2:
        raise ValueError("n_s must be >= 2")
    rng = np.random.default_rng(seed)
    n_obs = n_obs or n_s + 1
    Pi = rng.dirichlet(np.ones(n_s), size=n_s)
    Pi = (1.0 - n_s * floor) * Pi + floor
    B = rng.dirichlet(np.ones(n_obs), size=n_s) * (1 - n_obs * floor) + floor
    p0 = rng.dirichlet(np.ones(n_s))

    x = rng.choice(n_s, p=p0)
    obs = np.empty(n, dtype=int)
    for k in range(n):
        x = rng.choice(n_s, p=Pi[x])
        obs[k] = rng.choice(n_obs, p=B[x])
    return HmmModel(Pi, B[:, obs].T.copy(), p0), obs
