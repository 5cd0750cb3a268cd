"""Recursive variance-reduced local gradient estimators.

At checkpoints (``t % q == 0``) the estimator is reset from a large batch:
the whole local dataset (full refresh) or an adaptively sized subsample.
In between, it is corrected recursively from a mini-batch evaluated at
both the current and the previous iterate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum
from typing import Sequence

import numpy as np

from .problems import MinMaxProblem


class Mode(str, Enum):
    PRECISION = "precision"
    PRECISION_PLUS = "precision_plus"


@dataclass
class ComplexityCounters:
    """Cumulative IFO calls (one call = one per-sample gradient pair) and
    communication rounds (one per synchronous iteration)."""

    ifo_calls: int = 0
    comm_rounds: int = 0

    def charge(self, samples: int) -> None:
        self.ifo_calls += int(samples)

    def round(self) -> None:
        self.comm_rounds += 1


@dataclass(frozen=True)
class AdaptiveBatchConfig:
    c_gamma: float
    c_epsilon: float
    sigma2: float
    epsilon: float

    def __post_init__(self):
        for name in ("c_gamma", "c_epsilon", "epsilon"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.sigma2 < 0:
            raise ValueError("sigma2 must be nonnegative")


def refresh_batch_size(cfg: AdaptiveBatchConfig, gamma_t: float, n: int) -> int:
    """Checkpoint batch ``min(c_gamma sigma2 / gamma_t, c_eps sigma2 / eps, n)``,
    rounded up and clamped to ``[1, n]``. The consensus term is dropped when
    ``gamma_t`` is 0 or infinite."""
    if n < 1:
        raise ValueError("n must be positive")
    terms = [cfg.c_epsilon * cfg.sigma2 / cfg.epsilon, float(n)]
    if 0.0 < gamma_t < math.inf:
        terms.append(cfg.c_gamma * cfg.sigma2 / gamma_t)
    size = math.ceil(min(terms))
    return int(min(max(size, 1), n))


def gamma_update(window: Sequence[float], q: int) -> float:
    """Epoch average of squared consensus gaps of the prox points.

    Divides by ``q`` even when the epoch is partial.
    """
    if len(window) == 0 or len(window) > q:
        raise ValueError(f"window must hold between 1 and q={q} entries")
    return float(sum(window)) / q


def estimate_sigma2(problem: MinMaxProblem, x: np.ndarray, y: np.ndarray) -> float:
    """Largest over agents of the population variance of per-sample gradient
    pairs at ``(x, y)``."""
    worst = 0.0
    for i in range(problem.m):
        gx = np.stack([problem.grad_x_sample(i, j, x, y) for j in range(problem.n)])
        gy = np.stack([problem.grad_y_sample(i, j, x, y) for j in range(problem.n)])
        var = np.mean(np.sum((gx - gx.mean(0)) ** 2, 1) + np.sum((gy - gy.mean(0)) ** 2, 1))
        worst = max(worst, float(var))
    return worst


@dataclass
class EstimatorState:
    """Per-agent ``(v, u)`` estimator with the point where it was last evaluated.

    ``t`` is the index of the next iterate to be evaluated; ``t == 0`` is the
    initialization checkpoint.
    """

    q: int
    mode: Mode = Mode.PRECISION
    v: np.ndarray | None = None
    u: np.ndarray | None = None
    prev_x: np.ndarray | None = None
    prev_y: np.ndarray | None = None
    t: int = 0
    last_batch: int = 0
    gamma: float = math.inf

    def __post_init__(self):
        if self.q < 1:
            raise ValueError("epoch length q must be at least 1")
        self.mode = Mode(self.mode)


def _draw(rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    if size > n:
        raise ValueError(f"batch of {size} exceeds local dataset of {n}")
    if size == n:
        return np.arange(n)
    # Sorted so the reduction order does not depend on the draw order.
    return np.sort(rng.choice(n, size=size, replace=False))


def estimator_step(state: EstimatorState, problem: MinMaxProblem, agent: int,
                   x_t: np.ndarray, y_t: np.ndarray, rng: np.random.Generator,
                   counters: ComplexityCounters, *,
                   adaptive: AdaptiveBatchConfig | None = None,
                   minibatch: int | None = None) -> EstimatorState:
    """Advance one agent's estimator to iterate ``(x_t, y_t)``.

    ``minibatch`` is the size of the recursive-correction batch (default ``q``).
    In PRECISION+ mode the checkpoint batch size uses ``state.gamma``.
    """
    n = problem.n
    if state.t % state.q == 0:
        if state.mode is Mode.PRECISION_PLUS:
            if adaptive is None:
                raise ValueError("adaptive mode needs an AdaptiveBatchConfig")
            size = refresh_batch_size(adaptive, state.gamma, n)
        else:
            size = n
        idx = _draw(rng, n, size)
        v, u = problem.batch_grads(agent, idx, x_t, y_t)
    else:
        size = state.q if minibatch is None else minibatch
        idx = _draw(rng, n, size)
        gx_new, gy_new = problem.batch_grads(agent, idx, x_t, y_t)
        gx_old, gy_old = problem.batch_grads(agent, idx, state.prev_x, state.prev_y)
        v = state.v + (gx_new - gx_old)
        u = state.u + (gy_new - gy_old)
    counters.charge(size)
    return replace(state, v=v, u=u, prev_x=np.array(x_t, copy=True),
                   prev_y=np.array(y_t, copy=True), t=state.t + 1, last_batch=size)
