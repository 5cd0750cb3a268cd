"""PRECISION / PRECISION+ and the two stripped-down baselines.

All agents are simulated in lock-step. Agent iterates are stored as stacked
arrays with one row per agent, so a communication round is a left
multiplication by the mixing matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .estimators import (AdaptiveBatchConfig, ComplexityCounters, EstimatorState, Mode,
                         estimator_step, gamma_update)
from .metrics import compute_metric, global_loss
from .problems import BoxSet, MinMaxProblem, Regularizer
from .topology import ConsensusMatrix

DIVERGENCE_THRESHOLD = 1e12


class DivergenceError(RuntimeError):
    def __init__(self, iteration: int, message: str = ""):
        self.iteration = iteration
        super().__init__(message or f"iterates diverged at iteration {iteration}")


@dataclass(frozen=True)
class HyperParams:
    """Step sizes and loop lengths.

    ``nu``/``eta`` weight the local move towards the prox points, ``tau`` is
    the prox curvature for ``x``, ``alpha`` the ascent magnitude for ``y``.
    ``beta`` is only used by :func:`check_stepsize_conditions` and the
    potential diagnostic.
    """

    nu: float = 0.1
    eta: float = 0.1
    alpha: float = 1.0
    tau: float = 1.0
    q: int = 1
    beta: float = 1.0 / 12.0
    T: int = 1000

    def __post_init__(self):
        for name in ("nu", "eta", "alpha", "tau", "beta"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.nu > 1 or self.eta > 1:
            raise ValueError("nu and eta must lie in (0, 1]")
        if self.q < 1 or self.T < 0:
            raise ValueError("q must be >= 1 and T >= 0")


@dataclass(frozen=True)
class AgentState:
    """One agent's view of the network state."""

    x: np.ndarray
    y: np.ndarray
    x_tilde: np.ndarray
    y_tilde: np.ndarray
    p: np.ndarray
    d: np.ndarray
    estimator: EstimatorState | None


@dataclass
class NetworkState:
    """Stacked per-agent arrays (row ``i`` belongs to agent ``i``)."""

    x: np.ndarray
    y: np.ndarray
    p: np.ndarray
    d: np.ndarray
    v: np.ndarray
    u: np.ndarray
    x_tilde: np.ndarray | None = None
    y_tilde: np.ndarray | None = None
    estimators: list[EstimatorState] = field(default_factory=list)

    def agent(self, i: int) -> AgentState:
        return AgentState(self.x[i], self.y[i],
                          None if self.x_tilde is None else self.x_tilde[i],
                          None if self.y_tilde is None else self.y_tilde[i],
                          self.p[i], self.d[i],
                          self.estimators[i] if self.estimators else None)


@dataclass(frozen=True)
class IterationRecord:
    iter: int
    ifo_calls: int
    comm_rounds: int
    loss: float
    metric_paper: float
    metric_stationarity: float
    consensus_x: float
    consensus_y: float
    saddle_err: float
    grad_norm2: float
    batch_size: int
    consensus_x_tilde: float = 0.0
    payload_floats: int = 0


CSV_COLUMNS = ("iter", "ifo_calls", "comm_rounds", "loss", "metric_paper",
               "metric_stationarity", "consensus_x", "consensus_y", "saddle_err",
               "grad_norm2", "batch_size")


class Recorder:
    """Collects an :class:`IterationRecord` every ``stride`` iterations.

    ``callback(t, state)`` is invoked at every iteration after the tracker
    update, with the live :class:`NetworkState`.
    """

    def __init__(self, stride: int = 1, callback: Callable[[int, NetworkState], None] | None = None):
        if stride < 1:
            raise ValueError("stride must be positive")
        self.stride = stride
        self.callback = callback
        self.records: list[IterationRecord] = []

    def wants(self, t: int) -> bool:
        return t % self.stride == 0

    def add(self, t, problem, x, y, x_tilde, counters, batch_size, payload):
        mb = compute_metric(x, y, x_tilde, problem)
        self.records.append(IterationRecord(
            iter=t, ifo_calls=counters.ifo_calls, comm_rounds=counters.comm_rounds,
            loss=global_loss(x, y, problem), metric_paper=mb.metric_paper,
            metric_stationarity=mb.metric_stationarity, consensus_x=mb.consensus_x,
            consensus_y=mb.consensus_y, saddle_err=mb.saddle_err, grad_norm2=mb.grad_norm2,
            batch_size=int(batch_size), consensus_x_tilde=mb.consensus_x_tilde,
            payload_floats=payload,
        ))


@dataclass
class RunResult:
    records: list[IterationRecord]
    state: NetworkState
    counters: ComplexityCounters

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records])


# ---------------------------------------------------------------------------
# Building blocks
# ---------------------------------------------------------------------------

def soft_threshold(z: np.ndarray, thresh: float) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - thresh, 0.0)


def prox_x(x_t: np.ndarray, p_t: np.ndarray, tau: float, h: Regularizer,
           box: BoxSet) -> np.ndarray:
    """``argmin_{x in box} <p, x - x_t> + tau/2 |x - x_t|^2 + h(x)``.

    The subproblem is separable, so clipping the unconstrained minimizer
    coordinatewise is exact. Works row-wise on stacked inputs.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    z = x_t - p_t / tau
    if h.kind == "l1":
        z = soft_threshold(z, h.weight / tau)
    elif h.kind != "none":
        raise ValueError(f"unsupported regularizer {h.kind!r}")
    return box.project(z)


def prox_y(y_t: np.ndarray, d_t: np.ndarray, alpha: float, box: BoxSet) -> np.ndarray:
    """Projection of the ascent point ``y_t + alpha d_t`` onto the box."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    return box.project(y_t + alpha * d_t)


def consensus_mix(x: np.ndarray, y: np.ndarray, x_tilde: np.ndarray, y_tilde: np.ndarray,
                  M: ConsensusMatrix, nu: float, eta: float) -> tuple[np.ndarray, np.ndarray]:
    """Neighbour averaging plus a local step towards the prox points."""
    W = M.entries
    return W @ x + nu * (x_tilde - x), W @ y + eta * (y_tilde - y)


def tracker_update(p: np.ndarray, d: np.ndarray, M: ConsensusMatrix,
                   v_new: np.ndarray, v_old: np.ndarray,
                   u_new: np.ndarray, u_old: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Gradient tracking: mix the old trackers, add the change in local estimates."""
    W = M.entries
    return W @ p + (v_new - v_old), W @ d + (u_new - u_old)


def agent_rngs(seed: int, m: int) -> list[np.random.Generator]:
    """Independent per-agent streams: ``SeedSequence([seed, i])`` hashes the
    agent index into the master seed."""
    return [np.random.default_rng(np.random.SeedSequence([int(seed), i])) for i in range(m)]


def _initial_point(problem: MinMaxProblem, x0, y0) -> tuple[np.ndarray, np.ndarray]:
    """Common starting pair, broadcast from scalars if needed and projected."""
    dx, dy = problem.initial_point()
    x = dx if x0 is None else np.broadcast_to(np.asarray(x0, float), (problem.dim_x,))
    y = dy if y0 is None else np.broadcast_to(np.asarray(y0, float), (problem.dim_y,))
    x, y = problem.x_box.project(x), problem.y_box.project(y)
    return np.tile(x, (problem.m, 1)), np.tile(y, (problem.m, 1))


def _check_finite(t: int, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)) or np.max(np.abs(a)) > DIVERGENCE_THRESHOLD:
            raise DivergenceError(t)


def _payload(problem: MinMaxProblem, trackers: bool) -> int:
    base = problem.dim_x + problem.dim_y
    return 2 * base if trackers else base


# ---------------------------------------------------------------------------
# Algorithms
# ---------------------------------------------------------------------------

def run_precision(problem: MinMaxProblem, M: ConsensusMatrix, hp: HyperParams,
                  mode: Mode | str = Mode.PRECISION, adaptive: AdaptiveBatchConfig | None = None,
                  seed: int = 0, recorder: Recorder | None = None, x0=None, y0=None,
                  minibatch: int | None = None) -> RunResult:
    """Run ``hp.T`` iterations of PRECISION (full refresh every ``q`` steps)
    or PRECISION+ (adaptive refresh).

    Iteration ``t``: prox points from ``(x_t, p_t)`` and ``(y_t, d_t)``, one
    communication round to mix, estimator update at ``(x_{t+1}, y_{t+1})``,
    tracker update. Record ``t`` describes ``(x_t, y_t)`` and its prox points,
    with the counters spent to reach that state.
    """
    mode = Mode(mode)
    if mode is Mode.PRECISION_PLUS and adaptive is None:
        raise ValueError("PRECISION+ requires an AdaptiveBatchConfig")
    if M.m != problem.m:
        raise ValueError(f"mixing matrix is {M.m}x{M.m} but the problem has {problem.m} agents")
    recorder = recorder or Recorder()
    rngs = agent_rngs(seed, problem.m)
    counters = ComplexityCounters()
    X, Y = _initial_point(problem, x0, y0)

    ests = [estimator_step(EstimatorState(q=hp.q, mode=mode), problem, i, X[i], Y[i],
                           rngs[i], counters, adaptive=adaptive, minibatch=minibatch)
            for i in range(problem.m)]
    V = np.stack([e.v for e in ests])
    U = np.stack([e.u for e in ests])
    state = NetworkState(X, Y, V.copy(), U.copy(), V, U, estimators=ests)
    payload = _payload(problem, trackers=True)
    window: list[float] = []

    for t in range(hp.T):
        X, Y, P, D = state.x, state.y, state.p, state.d
        Xt = prox_x(X, P, hp.tau, problem.reg, problem.x_box)
        Yt = prox_y(Y, D, hp.alpha, problem.y_box)
        state.x_tilde, state.y_tilde = Xt, Yt
        if recorder.wants(t):
            batch = round(np.mean([e.last_batch for e in state.estimators]))
            recorder.add(t, problem, X, Y, Xt, counters, batch, payload)
        window.append(float(np.sum((Xt - X.mean(axis=0)) ** 2)))

        X_new, Y_new = consensus_mix(X, Y, Xt, Yt, M, hp.nu, hp.eta)
        counters.round()

        ests = state.estimators
        if mode is Mode.PRECISION_PLUS and (t + 1) % hp.q == 0:
            gamma = gamma_update(window, hp.q)
            window = []
            for e in ests:
                e.gamma = gamma
        ests = [estimator_step(ests[i], problem, i, X_new[i], Y_new[i], rngs[i], counters,
                               adaptive=adaptive, minibatch=minibatch)
                for i in range(problem.m)]
        V_new = np.stack([e.v for e in ests])
        U_new = np.stack([e.u for e in ests])
        P_new, D_new = tracker_update(P, D, M, V_new, state.v, U_new, state.u)
        state = NetworkState(X_new, Y_new, P_new, D_new, V_new, U_new, estimators=ests)
        _check_finite(t + 1, X_new, Y_new, P_new, D_new)
        if recorder.callback is not None:
            recorder.callback(t, state)

    return RunResult(recorder.records, state, counters)


def _minibatch_grads(problem, X, Y, rngs, batch, counters):
    gx = np.empty_like(X)
    gy = np.empty_like(Y)
    for i in range(problem.m):
        if batch >= problem.n:
            idx = np.arange(problem.n)
        else:
            idx = np.sort(rngs[i].choice(problem.n, size=batch, replace=False))
        gx[i], gy[i] = problem.batch_grads(i, idx, X[i], Y[i])
        counters.charge(idx.size)
    return gx, gy


def _baseline_batch_column(problem, batch):
    return 0 if batch >= problem.n else batch


def run_prox_gt_sgda(problem: MinMaxProblem, M: ConsensusMatrix, hp: HyperParams, batch: int,
                     seed: int = 0, recorder: Recorder | None = None, x0=None, y0=None) -> RunResult:
    """Same prox / mixing / tracking pipeline as PRECISION, but ``(v, u)`` are
    fresh mini-batch gradients every iteration (no variance reduction)."""
    if not 1 <= batch <= problem.n:
        raise ValueError(f"batch must lie in [1, {problem.n}]")
    recorder = recorder or Recorder()
    rngs = agent_rngs(seed, problem.m)
    counters = ComplexityCounters()
    X, Y = _initial_point(problem, x0, y0)
    V, U = _minibatch_grads(problem, X, Y, rngs, batch, counters)
    state = NetworkState(X, Y, V.copy(), U.copy(), V, U)
    payload = _payload(problem, trackers=True)
    col = _baseline_batch_column(problem, batch)

    for t in range(hp.T):
        X, Y, P, D = state.x, state.y, state.p, state.d
        Xt = prox_x(X, P, hp.tau, problem.reg, problem.x_box)
        Yt = prox_y(Y, D, hp.alpha, problem.y_box)
        state.x_tilde, state.y_tilde = Xt, Yt
        if recorder.wants(t):
            recorder.add(t, problem, X, Y, Xt, counters, col, payload)
        X_new, Y_new = consensus_mix(X, Y, Xt, Yt, M, hp.nu, hp.eta)
        counters.round()
        V_new, U_new = _minibatch_grads(problem, X_new, Y_new, rngs, batch, counters)
        P_new, D_new = tracker_update(P, D, M, V_new, state.v, U_new, state.u)
        state = NetworkState(X_new, Y_new, P_new, D_new, V_new, U_new)
        _check_finite(t + 1, X_new, Y_new, P_new, D_new)
        if recorder.callback is not None:
            recorder.callback(t, state)

    return RunResult(recorder.records, state, counters)


def run_prox_dsgda(problem: MinMaxProblem, M: ConsensusMatrix, step_gamma: float,
                   step_eta: float, batch: int, T: int, seed: int = 0,
                   recorder: Recorder | None = None, x0=None, y0=None) -> RunResult:
    """Decentralized proximal SGDA without tracking or variance reduction.

    ``x <- prox_h(M x - gamma g_x)`` and ``y <- proj(M y + eta g_y)``, with
    mini-batch gradients at each agent's current iterate. The recorded prox
    point is the agent's local step ``prox_h(x_i - gamma g_x,i)``.
    """
    if not 1 <= batch <= problem.n:
        raise ValueError(f"batch must lie in [1, {problem.n}]")
    if step_gamma <= 0 or step_eta <= 0:
        raise ValueError("step sizes must be positive")
    recorder = recorder or Recorder()
    rngs = agent_rngs(seed, problem.m)
    counters = ComplexityCounters()
    X, Y = _initial_point(problem, x0, y0)
    col = _baseline_batch_column(problem, batch)
    payload = _payload(problem, trackers=False)
    zeros_x = np.zeros_like(X)
    gx, gy = np.zeros_like(X), np.zeros_like(Y)

    for t in range(T):
        gx, gy = _minibatch_grads(problem, X, Y, rngs, batch, counters)
        Xt = prox_x(X - step_gamma * gx, zeros_x, 1.0 / step_gamma, problem.reg, problem.x_box)
        if recorder.wants(t):
            recorder.add(t, problem, X, Y, Xt, counters, col, payload)
        W = M.entries
        X_new = prox_x(W @ X - step_gamma * gx, zeros_x, 1.0 / step_gamma, problem.reg, problem.x_box)
        Y_new = problem.y_box.project(W @ Y + step_eta * gy)
        counters.round()
        _check_finite(t + 1, X_new, Y_new)
        X, Y = X_new, Y_new
        if recorder.callback is not None:
            recorder.callback(t, NetworkState(X, Y, gx, gy, gx, gy))

    return RunResult(recorder.records, NetworkState(X, Y, gx, gy, gx, gy), counters)


# ---------------------------------------------------------------------------
# Step-size feasibility
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class StepSizeReport:
    c1: float
    eta_terms: dict[str, float]
    nu_terms: dict[str, float]
    eta_max: float
    nu_max: float
    checks: dict[str, bool]

    @property
    def feasible(self) -> bool:
        return all(self.checks.values())


def check_stepsize_conditions(lf: float, mu: float, lam: float, m: int, tau: float,
                              alpha: float, beta: float, eta: float, nu: float,
                              q: int, n: int) -> StepSizeReport:
    """Evaluate the convergence-theorem conditions on the step sizes.

    ``nu_max`` is computed with the given ``eta``; pass ``eta=report.eta_max``
    in a second call to get the largest jointly feasible pair.
    """
    if not 0.0 <= lam < 1.0:
        raise ValueError("lambda must lie in [0, 1)")
    c1 = (1.0 - lam**2) / (1.0 + lam**2)
    eta_terms = {
        "1/8": 1.0 / 8.0,
        "c1*m*mu/(375*alpha*Lf^2)": c1 * m * mu / (375.0 * alpha * lf**2),
        "15*Lf^2/(beta*mu*alpha^2*c1)": 15.0 * lf**2 / (beta * mu * alpha**2 * c1),
        "3*c1^2*m/(10*(1+c1)*mu*alpha)": 3.0 * c1**2 * m / (10.0 * (1.0 + c1) * mu * alpha),
    }
    nu_terms = {
        "c1*m*beta/(40*Lf^2)": c1 * m * beta / (40.0 * lf**2),
        "2*c1*m*beta/(5*tau)": 2.0 * c1 * m * beta / (5.0 * tau),
        "2*c1*beta*mu^2*m/(375*Lf^4)": 2.0 * c1 * beta * mu**2 * m / (375.0 * lf**4),
        "5*tau/(3*m*c1)": 5.0 * tau / (3.0 * m * c1),
        "tau/(6*m*(1+1/c1))": tau / (6.0 * m * (1.0 + 1.0 / c1)),
        "3*mu*eta*alpha*tau/(17*Lf^2)": 3.0 * mu * eta * alpha * tau / (17.0 * lf**2),
        "tau/(3*(Lf+Lf^2/mu))": tau / (3.0 * (lf + lf**2 / mu)),
    }
    eta_max = min(eta_terms.values())
    nu_max = min(nu_terms.values())
    checks = {
        "beta <= min(tau/12, 1/3)": beta <= min(tau / 12.0, 1.0 / 3.0),
        "alpha <= 1/(4*Lf)": alpha <= 1.0 / (4.0 * lf),
        "q == ceil(sqrt(n))": q == math.ceil(math.sqrt(n)),
        "eta <= eta_max": eta <= eta_max,
        "nu <= nu_max": nu <= nu_max,
    }
    return StepSizeReport(c1, eta_terms, nu_terms, eta_max, nu_max, checks)


def min_c_gamma(hp: HyperParams, mu: float, m: int) -> float:
    """Smallest adaptive-batch constant ``c_gamma`` allowed by the PRECISION+ analysis."""
    return (75.0 * hp.eta * hp.alpha / (8.0 * mu * m) + hp.nu / (hp.beta * m)) * hp.nu * hp.tau / 12.0


def feasible_hyperparams(lf: float, mu: float, lam: float, m: int, n: int, tau: float = 1.0,
                         T: int = 1000) -> HyperParams:
    """Largest step sizes satisfying every condition, with ``alpha = 1/(4 Lf)``,
    ``beta = min(tau/12, 1/3)`` and ``q = ceil(sqrt(n))``."""
    alpha = 1.0 / (4.0 * lf)
    beta = min(tau / 12.0, 1.0 / 3.0)
    q = math.ceil(math.sqrt(n))
    eta = check_stepsize_conditions(lf, mu, lam, m, tau, alpha, beta, 1.0, 1.0, q, n).eta_max
    eta = min(eta, 1.0)
    nu = min(check_stepsize_conditions(lf, mu, lam, m, tau, alpha, beta, eta, 1.0, q, n).nu_max, 1.0)
    return HyperParams(nu=nu, eta=eta, alpha=alpha, tau=tau, q=q, beta=beta, T=T)
