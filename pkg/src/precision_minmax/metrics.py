"""Stationarity measures, the inner maximizer oracle and diagnostics."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .problems import MinMaxProblem


class AscentDidNotConverge(RuntimeError):
    pass


@dataclass(frozen=True)
class MetricBreakdown:
    """Components of the convergence measures at one iteration.

    ``consensus_x`` and ``consensus_y`` carry the ``1/m`` factor;
    ``consensus_x_tilde`` does not. ``metric_paper`` sums the four
    trajectory terms without ``1/m``; ``metric_stationarity`` is the
    epsilon-stationarity measure (with ``1/m``) plus the gradient term.
    """

    consensus_x_tilde: float
    consensus_x: float
    consensus_y: float
    saddle_err: float
    grad_norm2: float
    metric_paper: float
    metric_stationarity: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


def projected_ascent(problem: MinMaxProblem, x_bar: np.ndarray, y0: np.ndarray | None = None,
                     tol: float = 1e-10, max_iter: int = 1_000_000) -> np.ndarray:
    """Maximize ``F(x_bar, .)`` over ``y_box`` by projected gradient ascent with step ``1/lf``."""
    step = 1.0 / problem.lf
    y = problem.y_box.project(np.zeros(problem.dim_y) if y0 is None else np.asarray(y0, float))
    for _ in range(max_iter):
        _, gy = problem.global_grads(x_bar, y)
        y_next = problem.y_box.project(y + step * gy)
        if np.linalg.norm(y_next - y) < tol:
            return y_next
        y = y_next
    raise AscentDidNotConverge(
        f"projected ascent exceeded {max_iter} iterations; check mu and lf"
    )


def y_star(problem: MinMaxProblem, x_bar: np.ndarray, **ascent_kw) -> np.ndarray:
    """``argmax_{y in Y} F(x_bar, y)``: closed form when the problem has one."""
    closed = problem.y_star_closed_form(np.asarray(x_bar, dtype=float))
    if closed is not None:
        return closed
    return projected_ascent(problem, x_bar, **ascent_kw)


def _sq_dev(Z: np.ndarray) -> float:
    return float(np.sum((Z - Z.mean(axis=0)) ** 2))


def compute_metric(x: np.ndarray, y: np.ndarray, x_tilde: np.ndarray,
                   problem: MinMaxProblem) -> MetricBreakdown:
    """Metric components for stacked agent iterates ``x``, ``y`` (one row per
    agent) and the prox points ``x_tilde`` of the same iteration."""
    m = x.shape[0]
    x_bar = x.mean(axis=0)
    y_bar = y.mean(axis=0)
    cxt = float(np.sum((x_tilde - x_bar) ** 2))
    cx_total = _sq_dev(x)
    cy_total = _sq_dev(y)
    ys = y_star(problem, x_bar)
    saddle = float(np.sum((ys - y_bar) ** 2))
    gx, _ = problem.global_grads(x_bar, y_bar)
    g2 = float(gx @ gx)
    return MetricBreakdown(
        consensus_x_tilde=cxt,
        consensus_x=cx_total / m,
        consensus_y=cy_total / m,
        saddle_err=saddle,
        grad_norm2=g2,
        metric_paper=cxt + cx_total + cy_total + saddle,
        metric_stationarity=cx_total / m + cy_total / m + saddle + g2,
    )


def global_loss(x: np.ndarray, y: np.ndarray, problem: MinMaxProblem) -> float:
    """``(1/m) sum_i F_i(x_i, y_i) + h(x_bar)``."""
    local = np.mean([problem.local_value(i, x[i], y[i]) for i in range(problem.m)])
    return float(local) + problem.reg.value(x.mean(axis=0))


def primal_value(problem: MinMaxProblem, x_bar: np.ndarray) -> float:
    """``Q(x) = max_y F(x, y) + h(x)``."""
    return problem.global_value(x_bar, y_star(problem, x_bar)) + problem.reg.value(x_bar)


def potential_diagnostic(x: np.ndarray, y: np.ndarray, problem: MinMaxProblem, hp) -> float:
    """Lyapunov-style potential combining ``Q(x_bar)``, the dual gap and consensus errors.

    ``hp`` supplies ``nu``, ``eta`` and ``beta`` (see ``HyperParams``).
    """
    nu, eta, beta = hp.nu, hp.eta, hp.beta
    m = x.shape[0]
    x_bar = x.mean(axis=0)
    y_bar = y.mean(axis=0)
    ys = y_star(problem, x_bar)
    weight = 4.0 * nu * problem.lf**2 / (beta * problem.mu * eta**2)
    return (primal_value(problem, x_bar) + weight * float(np.sum((y_bar - ys) ** 2))
            + (_sq_dev(x) + _sq_dev(y)) / m)
