"""Scikit-learn compatible linear classifier trained by decentralized min-max."""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import unique_labels
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .algorithms import HyperParams, Recorder, min_c_gamma, run_precision, run_prox_dsgda, run_prox_gt_sgda
from .data import Dataset, partition_equal
from .estimators import AdaptiveBatchConfig, Mode, estimate_sigma2
from .problems import build_auc_maximization, build_robust_regression
from .topology import generate_erdos_renyi, laplacian_consensus_matrix


class DecentralizedMinMaxClassifier(ClassifierMixin, BaseEstimator):
    """Binary linear classifier fit over a simulated peer-to-peer network.

    The training set is shuffled and split evenly across ``n_agents``
    agents connected by a random Erdos-Renyi graph. The agents then solve a
    min-max training objective with the chosen decentralized algorithm.

    Parameters
    ----------
    objective : {"regression", "auc"}
        Distributionally robust logistic regression or AUC maximization.
    algorithm : {"precision", "precision_plus", "prox_dsgda", "prox_gt_sgda"}
    n_agents : int
        Number of agents. Samples beyond a multiple of ``n_agents`` are dropped.
    edge_prob : float
        Edge probability of the communication graph.
    nu, eta, alpha, tau : float
        Step sizes (see ``HyperParams``).
    q : int or None
        Epoch length; ``None`` means ``ceil(sqrt(n))`` with ``n`` samples per agent.
    batch : int or None
        Mini-batch size; ``None`` means ``q``.
    n_iter : int
        Number of synchronous iterations.
    c_gamma, c_epsilon, epsilon, sigma2 : float or None
        Adaptive-batch constants for ``precision_plus``. ``None`` for
        ``c_gamma`` or ``sigma2`` derives them from the problem.
    record_every : int
        Trace stride.
    random_state : int
        Seeds the data split, the graph and the sampling streams.

    Attributes
    ----------
    classes_ : ndarray of shape (2,)
    coef_ : ndarray of shape (n_features,)
    intercept_ : float
        Nonzero only for ``auc``, where it is the midpoint of the two class score centers.
    dual_ : ndarray
        Network-average dual variable.
    trace_ : list of IterationRecord
    n_ifo_calls_, n_comm_rounds_ : int
    """

    def __init__(self, objective="regression", algorithm="precision", n_agents=5, edge_prob=0.6,
                 nu=0.1, eta=0.1, alpha=1.0, tau=1.0, q=None, batch=None, n_iter=200,
                 c_gamma=None, c_epsilon=1.0, epsilon=1e-4, sigma2=None, record_every=1,
                 random_state=0):
        self.objective = objective
        self.algorithm = algorithm
        self.n_agents = n_agents
        self.edge_prob = edge_prob
        self.nu = nu
        self.eta = eta
        self.alpha = alpha
        self.tau = tau
        self.q = q
        self.batch = batch
        self.n_iter = n_iter
        self.c_gamma = c_gamma
        self.c_epsilon = c_epsilon
        self.epsilon = epsilon
        self.sigma2 = sigma2
        self.record_every = record_every
        self.random_state = random_state

    def _build(self, X, y_pm):
        seed = 0 if self.random_state is None else int(self.random_state)
        parts = partition_equal(Dataset(X, y_pm), self.n_agents, seed)
        if self.objective == "regression":
            return build_robust_regression(parts, None, self.n_agents)
        if self.objective == "auc":
            return build_auc_maximization(parts, None, self.n_agents)
        raise ValueError(f"unknown objective {self.objective!r}")

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        self.classes_ = unique_labels(y)
        if self.classes_.size != 2:
            raise ValueError(f"expected two classes, got {self.classes_.size}")
        self.n_features_in_ = X.shape[1]
        y_pm = np.where(y == self.classes_[1], 1.0, -1.0)
        if X.shape[0] < self.n_agents:
            raise ValueError("need at least one sample per agent")

        seed = 0 if self.random_state is None else int(self.random_state)
        problem = self._build(X, y_pm)
        M = laplacian_consensus_matrix(generate_erdos_renyi(self.n_agents, self.edge_prob, seed))
        q = self.q or math.ceil(math.sqrt(problem.n))
        hp = HyperParams(nu=self.nu, eta=self.eta, alpha=self.alpha, tau=self.tau, q=q, T=self.n_iter)
        batch = self.batch or q
        recorder = Recorder(stride=self.record_every)
        if self.algorithm in ("precision", "precision_plus"):
            adaptive = None
            if self.algorithm == "precision_plus":
                x0, y0 = problem.initial_point()
                sigma2 = self.sigma2 if self.sigma2 is not None else estimate_sigma2(problem, x0, y0)
                c_gamma = self.c_gamma or min_c_gamma(hp, problem.mu, problem.m)
                adaptive = AdaptiveBatchConfig(c_gamma, self.c_epsilon, sigma2, self.epsilon)
            result = run_precision(problem, M, hp, mode=Mode(self.algorithm), adaptive=adaptive,
                                   seed=seed, recorder=recorder, minibatch=self.batch)
        elif self.algorithm == "prox_gt_sgda":
            result = run_prox_gt_sgda(problem, M, hp, batch, seed=seed, recorder=recorder)
        elif self.algorithm == "prox_dsgda":
            result = run_prox_dsgda(problem, M, self.nu, self.eta, batch, self.n_iter,
                                    seed=seed, recorder=recorder)
        else:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")

        x_bar = result.state.x.mean(axis=0)
        d = self.n_features_in_
        self.coef_ = x_bar[:d].copy()
        self.intercept_ = -0.5 * float(x_bar[d] + x_bar[d + 1]) if self.objective == "auc" else 0.0
        self.dual_ = result.state.y.mean(axis=0)
        self.trace_ = result.records
        self.n_ifo_calls_ = result.counters.ifo_calls
        self.n_comm_rounds_ = result.counters.comm_rounds
        return self

    def decision_function(self, X):
        check_is_fitted(self, "coef_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, expected {self.n_features_in_}")
        return X @ self.coef_ + self.intercept_

    def predict(self, X):
        scores = self.decision_function(X)
        return self.classes_[(scores > 0).astype(int)]
