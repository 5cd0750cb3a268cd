"""Finite-sum min-max objectives distributed over agents.

Every problem stores ``m`` local datasets of ``n`` samples each. Agent ``i``
owns ``F_i(x, y) = (1/n) sum_j f_ij(x, y)``; the global objective is
``F(x, y) = (1/m) sum_i F_i(x, y)`` plus a convex regularizer ``h(x)``.
Per-sample functions are defined so that averaging the per-sample
gradients over a local dataset gives ``grad F_i`` exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .data import Dataset


@dataclass(frozen=True)
class BoxSet:
    """Coordinatewise interval constraints; infinite bounds are allowed."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError("box bounds must be 1-D arrays of equal length")
        if np.any(lo > hi):
            raise ValueError("box lower bound exceeds upper bound")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def uniform(cls, dim: int, lo: float, hi: float) -> "BoxSet":
        return cls(np.full(dim, float(lo)), np.full(dim, float(hi)))

    @classmethod
    def unbounded(cls, dim: int) -> "BoxSet":
        return cls.uniform(dim, -np.inf, np.inf)

    @property
    def dim(self) -> int:
        return self.lower.size

    @property
    def bounded(self) -> bool:
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def project(self, v: np.ndarray) -> np.ndarray:
        return np.clip(v, self.lower, self.upper)

    def contains(self, v: np.ndarray, tol: float = 0.0) -> bool:
        v = np.asarray(v)
        return bool(np.all(v >= self.lower - tol) and np.all(v <= self.upper + tol))

    def sample(self, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
        """Uniform point in the box; coordinates with infinite bounds are Gaussian."""
        lo = np.where(np.isfinite(self.lower), self.lower, np.nan)
        hi = np.where(np.isfinite(self.upper), self.upper, np.nan)
        u = rng.random(self.dim)
        g = scale * rng.standard_normal(self.dim)
        both = np.isfinite(lo) & np.isfinite(hi)
        out = np.where(both, lo + u * (hi - lo), g)
        out = np.where(np.isfinite(lo) & ~np.isfinite(hi), lo + np.abs(g), out)
        out = np.where(~np.isfinite(lo) & np.isfinite(hi), hi - np.abs(g), out)
        return out


@dataclass(frozen=True)
class Regularizer:
    """Non-smooth convex term ``h``: ``"none"`` or ``"l1"`` (``weight * ||x||_1``)."""

    kind: str = "none"
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in ("none", "l1"):
            raise ValueError(f"unsupported regularizer {self.kind!r}")
        if self.weight < 0:
            raise ValueError("regularizer weight must be nonnegative")

    def value(self, x: np.ndarray) -> float:
        if self.kind == "l1":
            return self.weight * float(np.abs(x).sum())
        return 0.0


class MinMaxProblem:
    """Base class. Subclasses implement :meth:`batch_grads` and :meth:`sample_values`."""

    name = "abstract"
    m: int
    n: int
    dim_x: int
    dim_y: int
    x_box: BoxSet
    y_box: BoxSet
    mu: float
    lf: float
    reg: Regularizer = Regularizer()

    # -- per-sample oracles -------------------------------------------------
    def batch_grads(self, agent: int, idx: np.ndarray, x: np.ndarray,
                    y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean of ``(grad_x f_ij, grad_y f_ij)`` over samples ``j in idx``."""
        raise NotImplementedError

    def sample_values(self, agent: int, idx: np.ndarray, x: np.ndarray,
                      y: np.ndarray) -> np.ndarray:
        """Values ``f_ij(x, y)`` for ``j in idx``."""
        raise NotImplementedError

    def grad_x_sample(self, agent: int, sample: int, x, y) -> np.ndarray:
        return self.batch_grads(agent, np.array([sample]), x, y)[0]

    def grad_y_sample(self, agent: int, sample: int, x, y) -> np.ndarray:
        return self.batch_grads(agent, np.array([sample]), x, y)[1]

    # -- local and global aggregates -----------------------------------------
    def full_local_grads(self, agent: int, x, y) -> tuple[np.ndarray, np.ndarray]:
        return self.batch_grads(agent, np.arange(self.n), x, y)

    def local_value(self, agent: int, x, y) -> float:
        return float(self.sample_values(agent, np.arange(self.n), x, y).mean())

    def global_value(self, x, y) -> float:
        """``F(x, y)``, excluding ``h``."""
        return float(np.mean([self.local_value(i, x, y) for i in range(self.m)]))

    def global_grads(self, x, y) -> tuple[np.ndarray, np.ndarray]:
        gx = np.zeros(self.dim_x)
        gy = np.zeros(self.dim_y)
        for i in range(self.m):
            a, b = self.full_local_grads(i, x, y)
            gx += a
            gy += b
        return gx / self.m, gy / self.m

    def y_star_closed_form(self, x: np.ndarray) -> np.ndarray | None:
        """Maximizer of ``F(x, .)`` over ``y_box`` if known in closed form."""
        return None

    def initial_point(self) -> tuple[np.ndarray, np.ndarray]:
        """Default common starting pair: the origin projected onto the boxes."""
        return self.x_box.project(np.zeros(self.dim_x)), self.y_box.project(np.zeros(self.dim_y))


# ---------------------------------------------------------------------------
# Nonconvex robust logistic regression with a distributionally-robust dual.
# ---------------------------------------------------------------------------

class RobustRegression(MinMaxProblem):
    """``f_ij = y_j * l_ij(x) - V(y) + g(x)`` with

    * ``l_ij(x) = log(1 + exp(-b_ij a_ij.x))``
    * ``V(y) = lambda1 / 2 * ||n y - 1||^2``
    * ``g(x) = lambda2 * sum_k alpha x_k^2 / (1 + alpha x_k^2)``

    ``y`` has one weight per local sample (``dim_y = n``).
    """

    name = "regression"

    def __init__(self, features: np.ndarray, labels: np.ndarray, lambda1: float,
                 lambda2: float, alpha_reg: float, x_bound: float = 10.0,
                 y_bound: float = 10.0):
        A = np.asarray(features, dtype=float)
        b = np.asarray(labels, dtype=float)
        if A.ndim != 3 or b.shape != A.shape[:2]:
            raise ValueError("features must be (m, n, d) and labels (m, n)")
        if not np.all(np.isin(b, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        self.A, self.b = A, b
        self.m, self.n, d = A.shape
        self.dim_x, self.dim_y = d, self.n
        self.lambda1, self.lambda2, self.alpha_reg = float(lambda1), float(lambda2), float(alpha_reg)
        self.x_box = BoxSet.uniform(d, 0.0, x_bound)
        self.y_box = BoxSet.uniform(self.n, 0.0, y_bound)
        self.reg = Regularizer()
        self.mu = self.lambda1 * self.n**2
        amax = float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", A, A))))
        hxx = y_bound * amax**2 / 4.0 + 2.0 * self.lambda2 * self.alpha_reg
        self.lf = max(hxx, self.mu) + amax

    def _g(self, x):
        ax2 = self.alpha_reg * x**2
        return self.lambda2 * float(np.sum(ax2 / (1.0 + ax2)))

    def _g_grad(self, x):
        return self.lambda2 * 2.0 * self.alpha_reg * x / (1.0 + self.alpha_reg * x**2) ** 2

    def _V(self, y):
        return 0.5 * self.lambda1 * float(np.sum((self.n * y - 1.0) ** 2))

    def _V_grad(self, y):
        return self.lambda1 * self.n * (self.n * y - 1.0)

    def initial_point(self):
        # Uniform sample weights, where the dual penalty V vanishes.
        return np.zeros(self.dim_x), np.full(self.dim_y, 1.0 / self.n)

    def losses(self, agent, idx, x):
        z = self.b[agent, idx] * (self.A[agent, idx] @ x)
        return np.logaddexp(0.0, -z)

    def sample_values(self, agent, idx, x, y):
        idx = np.asarray(idx)
        return y[idx] * self.losses(agent, idx, x) - self._V(y) + self._g(x)

    def batch_grads(self, agent, idx, x, y):
        idx = np.asarray(idx)
        k = idx.size
        A = self.A[agent, idx]
        b = self.b[agent, idx]
        z = b * (A @ x)
        weights = y[idx] * (-b * expit(-z))
        gx = weights @ A / k + self._g_grad(x)
        gy = -self._V_grad(y)
        np.add.at(gy, idx, np.logaddexp(0.0, -z) / k)
        return gx, gy

    def y_star_closed_form(self, x):
        # F(x, .) is separable in y with curvature lambda1 n^2 per coordinate,
        # so clipping the unconstrained maximizer is exact.
        z = self.b * np.einsum("ijk,k->ij", self.A, x)
        mean_loss = np.logaddexp(0.0, -z).mean(axis=0)
        y = (mean_loss / (self.lambda1 * self.n**2) + 1.0) / self.n
        return self.y_box.project(y)


def _stack_partitions(parts: list[Dataset]) -> tuple[np.ndarray, np.ndarray]:
    n = len(parts[0])
    if any(len(p) != n for p in parts):
        raise ValueError("every agent must hold the same number of samples")
    return np.stack([p.features for p in parts]), np.stack([p.labels for p in parts])


def _as_agent_arrays(features, labels, m):
    """Accept either ``(m, n, d)``/``(m, n)`` arrays or flat ``(N, d)``/``(N,)``
    arrays that are split in order into ``m`` equal blocks."""
    if isinstance(features, (list, tuple)) and features and isinstance(features[0], Dataset):
        return _stack_partitions(list(features))
    X = np.asarray(features, dtype=float)
    y = np.asarray(labels, dtype=float)
    if X.ndim == 3:
        return X, y
    if X.shape[0] < m:
        raise ValueError(f"need at least m={m} samples, got {X.shape[0]}")
    n = X.shape[0] // m
    return X[: m * n].reshape(m, n, -1), y[: m * n].reshape(m, n)


def build_robust_regression(features, labels, m: int, lambda1: float | None = None,
                            lambda2: float = 1e-3, alpha_reg: float = 10.0) -> RobustRegression:
    """Regression benchmark on ``[0, 10]^d x [0, 10]^n``.

    ``lambda1`` defaults to ``1 / n^2``, which makes the dual curvature 1.
    """
    X, y = _as_agent_arrays(features, labels, m)
    if not np.all(np.isin(y, (-1.0, 1.0))):
        raise ValueError("labels must be -1 or +1")
    n = X.shape[1]
    if lambda1 is None:
        lambda1 = 1.0 / n**2
    return RobustRegression(X, y, lambda1, lambda2, alpha_reg)


# ---------------------------------------------------------------------------
# AUC maximization (square-loss surrogate) with a linear scorer.
# ---------------------------------------------------------------------------

class AUCMaximization(MinMaxProblem):
    """Min over ``x = (w, c1, c2)``, max over a scalar ``y``.

    With ``s = w.a`` and ``tau`` the positive ratio::

        f = (1-tau)(s-c1)^2 [b=+1] + tau (s-c2)^2 [b=-1] - tau(1-tau) y^2
            + 2(1+y) tau s [b=-1] - 2(1+y)(1-tau) s [b=+1]
    """

    name = "auc"

    def __init__(self, features: np.ndarray, labels: np.ndarray, bound: float = 10.0):
        A = np.asarray(features, dtype=float)
        b = np.asarray(labels, dtype=float)
        if not np.all(np.isin(b, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        tau = float(np.mean(b == 1.0))
        if tau in (0.0, 1.0):
            raise ValueError("AUC objective needs both classes (positive ratio must be in (0, 1))")
        self.A, self.b, self.tau = A, b, tau
        self.m, self.n, d = A.shape
        self.d = d
        self.dim_x, self.dim_y = d + 2, 1
        self.x_box = BoxSet.uniform(d + 2, -bound, bound)
        self.y_box = BoxSet.uniform(1, -bound, bound)
        self.reg = Regularizer()
        self.mu = 2.0 * tau * (1.0 - tau)
        amax = float(np.sqrt(np.max(np.einsum("ijk,ijk->ij", A, A))))
        c = max(tau, 1.0 - tau)
        self.lf = max(2.0 * c * (amax**2 + 1.0), self.mu) + 2.0 * c * amax

    def _parts(self, agent, idx, x):
        A = self.A[agent, idx]
        b = self.b[agent, idx]
        pos = (b == 1.0).astype(float)
        neg = 1.0 - pos
        s = A @ x[: self.d]
        return A, pos, neg, s

    def sample_values(self, agent, idx, x, y):
        idx = np.asarray(idx)
        _, pos, neg, s = self._parts(agent, idx, x)
        t, c1, c2, yy = self.tau, x[self.d], x[self.d + 1], y[0]
        return ((1 - t) * (s - c1) ** 2 * pos + t * (s - c2) ** 2 * neg - t * (1 - t) * yy**2
                + 2 * (1 + yy) * t * s * neg - 2 * (1 + yy) * (1 - t) * s * pos)

    def batch_grads(self, agent, idx, x, y):
        idx = np.asarray(idx)
        A, pos, neg, s = self._parts(agent, idx, x)
        t, c1, c2, yy = self.tau, x[self.d], x[self.d + 1], y[0]
        coef = (2 * (1 - t) * (s - c1) * pos + 2 * t * (s - c2) * neg
                + 2 * (1 + yy) * t * neg - 2 * (1 + yy) * (1 - t) * pos)
        gx = np.empty(self.dim_x)
        gx[: self.d] = coef @ A / idx.size
        gx[self.d] = np.mean(-2 * (1 - t) * (s - c1) * pos)
        gx[self.d + 1] = np.mean(-2 * t * (s - c2) * neg)
        gy = np.array([np.mean(-2 * t * (1 - t) * yy + 2 * t * s * neg - 2 * (1 - t) * s * pos)])
        return gx, gy

    def y_star_closed_form(self, x):
        s = np.einsum("ijk,k->ij", self.A, x[: self.d])
        t = self.tau
        lin = np.mean(2 * t * s * (self.b == -1.0) - 2 * (1 - t) * s * (self.b == 1.0))
        return self.y_box.project(np.array([lin / (2 * t * (1 - t))]))


def build_auc_maximization(features, labels, m: int, bound: float = 10.0) -> AUCMaximization:
    X, y = _as_agent_arrays(features, labels, m)
    return AUCMaximization(X, y, bound=bound)


# ---------------------------------------------------------------------------
# Synthetic quadratic saddle with known solution (test oracle).
# ---------------------------------------------------------------------------

class SyntheticSaddle(MinMaxProblem):
    """``f_ij = x'A_ij x / 2 + x'B_ij y - mu_s |y|^2 / 2 + c_ij'x``.

    Individual ``A_ij`` may be indefinite; the maximizer over ``y`` is
    ``B_bar' x / mu_s`` with ``B_bar`` the mean coupling over all samples.
    """

    name = "synthetic"

    def __init__(self, A: np.ndarray, B: np.ndarray, c: np.ndarray, mu_s: float,
                 x_box: BoxSet | None = None, y_box: BoxSet | None = None,
                 reg: Regularizer | None = None):
        self.A = np.asarray(A, dtype=float)
        self.B = np.asarray(B, dtype=float)
        self.c = np.asarray(c, dtype=float)
        if mu_s <= 0:
            raise ValueError("mu_s must be positive")
        self.m, self.n, p1, p2 = self.B.shape
        self.dim_x, self.dim_y = p1, p2
        self.mu = float(mu_s)
        self.x_box = x_box or BoxSet.unbounded(p1)
        self.y_box = y_box or BoxSet.unbounded(p2)
        self.reg = reg or Regularizer()
        self.A_bar = self.A.mean(axis=(0, 1))
        self.B_bar = self.B.mean(axis=(0, 1))
        self.c_bar = self.c.mean(axis=(0, 1))
        # Exact smoothness constant: largest |eigenvalue| of any per-sample Hessian.
        H = np.zeros((self.m * self.n, p1 + p2, p1 + p2))
        H[:, :p1, :p1] = self.A.reshape(-1, p1, p1)
        H[:, :p1, p1:] = self.B.reshape(-1, p1, p2)
        H[:, p1:, :p1] = np.swapaxes(H[:, :p1, p1:], 1, 2)
        H[:, p1:, p1:] = -self.mu * np.eye(p2)
        self.lf = float(np.max(np.abs(np.linalg.eigvalsh(H))))

    def sample_values(self, agent, idx, x, y):
        idx = np.asarray(idx)
        A, B, c = self.A[agent, idx], self.B[agent, idx], self.c[agent, idx]
        return (0.5 * np.einsum("i,kij,j->k", x, A, x) + np.einsum("i,kij,j->k", x, B, y)
                - 0.5 * self.mu * y @ y + c @ x)

    def batch_grads(self, agent, idx, x, y):
        idx = np.asarray(idx)
        A = self.A[agent, idx].mean(axis=0)
        B = self.B[agent, idx].mean(axis=0)
        c = self.c[agent, idx].mean(axis=0)
        return A @ x + B @ y + c, B.T @ x - self.mu * y

    def y_star_closed_form(self, x):
        # Isotropic curvature in y: clipping the unconstrained maximizer is exact.
        return self.y_box.project(self.B_bar.T @ x / self.mu)

    def stationary_point(self) -> tuple[np.ndarray, np.ndarray]:
        """Unconstrained saddle ``(x*, y*(x*))`` of the global objective."""
        H = self.A_bar + self.B_bar @ self.B_bar.T / self.mu
        x = np.linalg.solve(H, -self.c_bar)
        return x, self.B_bar.T @ x / self.mu


def _sym(rng, k, p):
    G = rng.standard_normal((k, p, p)) / np.sqrt(p)
    return 0.5 * (G + np.swapaxes(G, 1, 2))


def build_synthetic_saddle(m: int, n: int, dim_x: int, dim_y: int, seed: int,
                           mu_s: float = 0.2, curvature: float = 0.15, coupling: float = 0.05,
                           noise: float = 0.05, offset: float | None = None,
                           zero_coupling: bool = False) -> SyntheticSaddle:
    """Random heterogeneous quadratic saddle.

    The mean Hessian in ``x`` is positive definite (eigenvalues in
    ``curvature * [0.5, 1]``) while per-sample Hessians are perturbed by
    symmetric noise and may be indefinite. Agent-level offsets make the local
    objectives differ from each other. ``offset`` scales the mean linear term
    (default ``curvature``), which sets the distance of the saddle from 0.
    """
    if min(m, n, dim_x, dim_y) < 1:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    Q, _ = np.linalg.qr(rng.standard_normal((dim_x, dim_x)))
    S = curvature * (Q * rng.uniform(0.5, 1.0, dim_x)) @ Q.T

    def centered(arr):
        return arr - arr.mean(axis=(0, 1), keepdims=True)

    E = _sym(rng, m * n, dim_x).reshape(m, n, dim_x, dim_x)
    E = noise * (centered(E) + centered(_sym(rng, m, dim_x)[:, None]))
    A = S + E
    if zero_coupling:
        B = np.zeros((m, n, dim_x, dim_y))
    else:
        B0 = coupling * rng.standard_normal((dim_x, dim_y)) / np.sqrt(dim_x)
        B = B0 + noise * rng.standard_normal((m, n, dim_x, dim_y)) / np.sqrt(dim_x)
    offset = curvature if offset is None else offset
    c0 = offset * rng.standard_normal(dim_x) / np.sqrt(dim_x)
    c = c0 + noise * (rng.standard_normal((m, n, dim_x)) + rng.standard_normal((m, 1, dim_x)))
    return SyntheticSaddle(A, B, c, mu_s)
