"""Independent reference implementations used as test oracles."""

import numpy as np


def reference_prox_gt_gda(problem, W, hp, T):
    """Deterministic decentralized prox-GDA with gradient tracking (full local
    gradients, box constraints, no regularizer). Returns the ``(X, Y)`` path."""
    m = problem.m
    x0, y0 = problem.initial_point()
    X, Y = np.tile(x0, (m, 1)), np.tile(y0, (m, 1))

    def grads(X, Y):
        pairs = [problem.full_local_grads(i, X[i], Y[i]) for i in range(m)]
        return np.array([a for a, _ in pairs]), np.array([b for _, b in pairs])

    V, U = grads(X, Y)
    P, D = V.copy(), U.copy()
    path = []
    for _ in range(T):
        Xt = np.clip(X - P / hp.tau, problem.x_box.lower, problem.x_box.upper)
        Yt = np.clip(Y + hp.alpha * D, problem.y_box.lower, problem.y_box.upper)
        X, Y = W @ X + hp.nu * (Xt - X), W @ Y + hp.eta * (Yt - Y)
        V2, U2 = grads(X, Y)
        P, D = W @ P + V2 - V, W @ D + U2 - U
        V, U = V2, U2
        path.append((X.copy(), Y.copy()))
    return path
