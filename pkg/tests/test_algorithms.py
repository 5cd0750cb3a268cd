import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reference import reference_prox_gt_gda
from precision_minmax.algorithms import (DivergenceError, HyperParams, Recorder,
                                         check_stepsize_conditions, consensus_mix,
                                         feasible_hyperparams, min_c_gamma, prox_x, prox_y,
                                         run_precision, run_prox_dsgda, run_prox_gt_sgda,
                                         tracker_update)
from precision_minmax.data import generate_synthetic_classification, partition_equal
from precision_minmax.estimators import AdaptiveBatchConfig
from precision_minmax.problems import (BoxSet, Regularizer, SyntheticSaddle,
                                       build_robust_regression, build_synthetic_saddle)
from precision_minmax.topology import (ConsensusMatrix, generate_erdos_renyi,
                                       laplacian_consensus_matrix)

BOX = BoxSet.uniform(1, 0.0, 10.0)
NONE = Regularizer()
SINGLE = ConsensusMatrix(np.ones((1, 1)), 0.0)
PAIR = ConsensusMatrix(np.array([[2 / 3, 1 / 3], [1 / 3, 2 / 3]]), 1 / 3)


# -- building blocks ----------------------------------------------------------

@pytest.mark.parametrize("x_t,p,tau,expected", [(3.0, 0.0, 2.0, 3.0), (0.0, -4.0, 2.0, 2.0),
                                                (0.0, -60.0, 2.0, 10.0), (1.0, 5.0, 1.0, 0.0)])
def test_prox_x_box(x_t, p, tau, expected):
    assert prox_x(np.array([x_t]), np.array([p]), tau, NONE, BOX)[0] == pytest.approx(expected)


def test_prox_x_l1_matches_grid_search():
    tau, lam = 1.5, 1.5
    box = BoxSet.uniform(1, -10, 10)
    got = prox_x(np.array([2.0]), np.array([0.0]), tau, Regularizer("l1", lam), box)[0]
    assert got == pytest.approx(1.0)
    grid = np.linspace(-10, 10, 2_000_001)
    obj = tau / 2 * (grid - 2.0) ** 2 + lam * np.abs(grid)
    assert got == pytest.approx(grid[np.argmin(obj)], abs=1e-5)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-10, 10), p=st.floats(-50, 50), tau=st.floats(0.1, 10), lam=st.floats(0, 5))
def test_prox_x_is_the_minimizer(x, p, tau, lam):
    box = BoxSet.uniform(1, -3, 4)
    reg = Regularizer("l1", lam)
    z = prox_x(np.array([x]), np.array([p]), tau, reg, box)[0]
    grid = np.linspace(-3, 4, 7001)
    obj = lambda v: p * (v - x) + tau / 2 * (v - x) ** 2 + lam * np.abs(v)
    assert obj(z) <= obj(grid).min() + 1e-9


def test_prox_x_rejects_bad_inputs():
    with pytest.raises(ValueError):
        prox_x(np.zeros(1), np.zeros(1), 0.0, NONE, BOX)
    bad = Regularizer.__new__(Regularizer)
    object.__setattr__(bad, "kind", "l2")
    object.__setattr__(bad, "weight", 1.0)
    with pytest.raises(ValueError):
        prox_x(np.zeros(1), np.zeros(1), 1.0, bad, BOX)


@pytest.mark.parametrize("y,ad,expected", [(5.0, 0.0, 5.0), (5.0, 10.0, 10.0), (5.0, -2.0, 3.0)])
def test_prox_y(y, ad, expected):
    assert prox_y(np.array([y]), np.array([ad]), 1.0, BOX)[0] == expected


def test_consensus_mix_examples():
    x = np.array([[2.0]])
    xn, _ = consensus_mix(x, x, np.array([[4.0]]), x, SINGLE, 0.25, 0.5)
    assert xn[0, 0] == pytest.approx(2.5)
    same = np.ones((2, 3))
    xn, yn = consensus_mix(same, same, same, same, PAIR, 0.7, 0.3)
    np.testing.assert_array_equal(xn, same)
    x = np.array([[0.0], [3.0]])
    xn, _ = consensus_mix(x, x, x, x, PAIR, 0.9, 0.9)
    np.testing.assert_allclose(xn, [[1.0], [2.0]])


def test_tracker_update_examples():
    rng = np.random.default_rng(0)
    vs = rng.standard_normal((5, 1, 2))
    p = vs[0].copy()
    for k in range(1, 5):
        p, _ = tracker_update(p, p, SINGLE, vs[k], vs[k - 1], vs[k], vs[k - 1])
        np.testing.assert_allclose(p, vs[k], atol=1e-14)

    M = laplacian_consensus_matrix(generate_erdos_renyi(6, 0.5, 1))
    P = rng.standard_normal((6, 2))
    V = rng.standard_normal((6, 2))
    for _ in range(300):
        P, _ = tracker_update(P, P, M, V, V, V, V)
    np.testing.assert_allclose(P, np.tile(P.mean(0), (6, 1)), atol=1e-10)


# -- full runs ------------------------------------------------------------------

@pytest.fixture(scope="module")
def regression3():
    ds = generate_synthetic_classification(150, 4, seed=0)
    return build_robust_regression(partition_equal(ds, 3, seed=0), None, 3)


@pytest.fixture(scope="module")
def mixing3():
    return laplacian_consensus_matrix(generate_erdos_renyi(3, 0.6, 0))


def _path_recorder():
    path = []
    return path, Recorder(callback=lambda t, s: path.append((s.x.copy(), s.y.copy())))


def test_deterministic_reduction(regression3, mixing3):
    hp = HyperParams(q=1, T=60)
    ref = reference_prox_gt_gda(regression3, mixing3.entries, hp, hp.T)
    a, rec_a = _path_recorder()
    run_precision(regression3, mixing3, hp, seed=1, recorder=rec_a)
    b, rec_b = _path_recorder()
    run_prox_gt_sgda(regression3, mixing3, hp, batch=regression3.n, seed=2, recorder=rec_b)
    for (xr, yr), (xa, ya), (xb, yb) in zip(ref, a, b):
        np.testing.assert_allclose(xa, xr, rtol=0, atol=1e-12)
        np.testing.assert_allclose(ya, yr, rtol=0, atol=1e-12)
        np.testing.assert_allclose(xb, xr, rtol=0, atol=1e-12)
        np.testing.assert_allclose(yb, yr, rtol=0, atol=1e-12)


def test_single_agent_matches_scalar_spider_gda():
    rng = np.random.default_rng(3)
    n, mu, q, b = 6, 0.8, 3, 2
    a_s = rng.uniform(-1, 2, n)
    b_s = rng.uniform(-1, 1, n)
    c_s = rng.uniform(-1, 1, n)
    prob = SyntheticSaddle(a_s.reshape(1, n, 1, 1), b_s.reshape(1, n, 1, 1),
                           c_s.reshape(1, n, 1), mu)
    hp = HyperParams(nu=0.3, eta=0.4, alpha=0.5, tau=2.0, q=q, T=40)
    path, rec = _path_recorder()
    run_precision(prob, SINGLE, hp, seed=5, recorder=rec, x0=1.0, y0=-1.0, minibatch=b)

    # Scalar recursion with the same sampling contract (sorted draws without replacement).
    draw = np.random.default_rng(np.random.SeedSequence([5, 0]))
    gx = lambda j, x, y: a_s[j] * x + b_s[j] * y + c_s[j]
    gy = lambda j, x, y: b_s[j] * x - mu * y
    x, y = 1.0, -1.0
    v = np.mean(gx(np.arange(n), x, y))
    u = np.mean(gy(np.arange(n), x, y))
    p, d = v, u
    for t in range(hp.T):
        xt, yt = x - p / hp.tau, y + hp.alpha * d
        xn, yn = x + hp.nu * (xt - x), y + hp.eta * (yt - y)
        if (t + 1) % q == 0:
            vn, un = np.mean(gx(np.arange(n), xn, yn)), np.mean(gy(np.arange(n), xn, yn))
        else:
            S = np.sort(draw.choice(n, size=b, replace=False))
            vn = v + np.mean(gx(S, xn, yn) - gx(S, x, y))
            un = u + np.mean(gy(S, xn, yn) - gy(S, x, y))
        p, d = p + vn - v, d + un - u
        x, y, v, u = xn, yn, vn, un
        assert path[t][0][0, 0] == pytest.approx(x, abs=1e-12)
        assert path[t][1][0, 0] == pytest.approx(y, abs=1e-12)


def test_tracker_mean_preservation(mixing3, regression3):
    worst = [0.0]

    def check(t, s):
        worst[0] = max(worst[0], np.abs(s.p.mean(0) - s.v.mean(0)).max(),
                       np.abs(s.d.mean(0) - s.u.mean(0)).max())

    hp = HyperParams(q=7, T=80)
    run_precision(regression3, mixing3, hp, seed=0, recorder=Recorder(callback=check))
    run_prox_gt_sgda(regression3, mixing3, hp, batch=5, seed=0, recorder=Recorder(callback=check))
    assert worst[0] <= 1e-12


@settings(max_examples=15, deadline=None)
@given(nu=st.floats(0.01, 1 / 3), eta=st.floats(0.01, 1 / 3), seed=st.integers(0, 100))
def test_iterates_stay_in_boxes(regression3, mixing3, nu, eta, seed):
    # Mixing plus the local step is a convex combination whenever nu and eta
    # do not exceed the smallest diagonal weight, which is above 1/3 here.
    assert np.diag(mixing3.entries).min() > 1 / 3
    ok = []

    def check(t, s):
        ok.append(regression3.x_box.contains(s.x, 1e-12) and regression3.y_box.contains(s.y, 1e-12))

    hp = HyperParams(nu=nu, eta=eta, alpha=5.0, tau=0.2, q=4, T=30)
    run_precision(regression3, mixing3, hp, seed=seed, recorder=Recorder(callback=check))
    run_prox_dsgda(regression3, mixing3, 1.0, 1.0, 5, 30, seed=seed, recorder=Recorder(callback=check))
    assert all(ok)


def test_diagonal_weights_exceed_one_third():
    for seed in range(20):
        M = laplacian_consensus_matrix(generate_erdos_renyi(10, 0.5, seed))
        assert np.diag(M.entries).min() > 1 / 3


def test_ifo_and_round_counts_match_closed_form(regression3, mixing3):
    for T, q, b in [(0, 5, 5), (1, 5, 5), (23, 5, 3), (30, 6, 6)]:
        hp = HyperParams(q=q, T=T)
        res = run_precision(regression3, mixing3, hp, seed=0, minibatch=b)
        per_agent = sum(regression3.n if s % q == 0 else b for s in range(T + 1))
        assert res.counters.ifo_calls == regression3.m * per_agent
        assert res.counters.comm_rounds == T
        assert len(res.records) == T
        if T:
            assert np.all(np.diff(res.column("ifo_calls")) >= 0)
            assert res.column("comm_rounds").tolist() == list(range(T))


def test_single_agent_converges_to_saddle():
    prob = build_synthetic_saddle(1, 20, 4, 3, seed=0)
    hp = HyperParams(q=1, T=5000)
    res = run_precision(prob, SINGLE, hp, seed=0, recorder=Recorder(stride=100))
    assert res.records[-1].metric_paper < 1e-6
    x_star, _ = prob.stationary_point()
    np.testing.assert_allclose(res.state.x[0], x_star, atol=1e-3)


def test_stationary_point_is_a_fixed_point():
    base = build_synthetic_saddle(1, 10, 4, 2, seed=1)
    m = 4
    # Identical local data on every agent so the local gradients vanish at x*.
    prob = SyntheticSaddle(np.tile(base.A, (m, 1, 1, 1)), np.tile(base.B, (m, 1, 1, 1)),
                           np.tile(base.c, (m, 1, 1)), base.mu)
    M = laplacian_consensus_matrix(generate_erdos_renyi(m, 0.6, 0))
    x_star, y_star = prob.stationary_point()
    res = run_precision(prob, M, HyperParams(q=3, T=100), seed=0, x0=x_star, y0=y_star, minibatch=2)
    assert max(res.column("metric_paper")) < 1e-10


def test_precision_plus_runs_and_never_exceeds_full_batches(regression3, mixing3):
    hp = HyperParams(q=7, T=50)
    cfg = AdaptiveBatchConfig(c_gamma=min_c_gamma(hp, regression3.mu, 3), c_epsilon=1.0,
                              sigma2=2.0, epsilon=0.1)
    plus = run_precision(regression3, mixing3, hp, mode="precision_plus", adaptive=cfg, seed=0)
    full = run_precision(regression3, mixing3, hp, seed=0)
    assert plus.counters.ifo_calls <= full.counters.ifo_calls
    assert plus.records[0].batch_size == 20  # c_eps * sigma2 / eps with infinite gamma
    with pytest.raises(ValueError):
        run_precision(regression3, mixing3, hp, mode="precision_plus")


def test_runs_are_deterministic(regression3, mixing3):
    hp = HyperParams(q=4, T=20)
    for run in (lambda s: run_precision(regression3, mixing3, hp, seed=s),
                lambda s: run_prox_gt_sgda(regression3, mixing3, hp, batch=4, seed=s),
                lambda s: run_prox_dsgda(regression3, mixing3, 0.1, 0.1, 4, 20, seed=s)):
        a, b = run(7), run(7)
        assert a.records == b.records
        assert a.state.x.tobytes() == b.state.x.tobytes()


def test_dsgda_monotone_on_convex_quadratic():
    rng = np.random.default_rng(0)
    n = 5
    A = np.tile(np.eye(2) * 0.5, (1, n, 1, 1))
    prob = SyntheticSaddle(A, np.zeros((1, n, 2, 1)), rng.standard_normal((1, n, 2)), 1.0)
    res = run_prox_dsgda(prob, SINGLE, 0.1, 0.1, n, 60, seed=0, x0=5.0, y0=0.0)
    loss = res.column("loss")
    assert np.all(np.diff(loss) < 0)


def test_dsgda_zero_gradient_is_fixed():
    n = 3
    prob = SyntheticSaddle(np.zeros((2, n, 2, 2)), np.zeros((2, n, 2, 1)),
                           np.zeros((2, n, 2)), 1.0)
    res = run_prox_dsgda(prob, PAIR, 0.1, 0.1, 2, 10, seed=0, x0=1.5, y0=0.0)
    np.testing.assert_array_equal(res.state.x, 1.5)
    np.testing.assert_array_equal(res.state.y, 0.0)


def test_baseline_batch_column(regression3, mixing3):
    hp = HyperParams(q=4, T=3)
    assert run_prox_gt_sgda(regression3, mixing3, hp, batch=50).column("batch_size").tolist() == [0] * 3
    assert run_prox_gt_sgda(regression3, mixing3, hp, batch=7).column("batch_size").tolist() == [7] * 3


def test_divergence_is_reported():
    n = 2
    prob = SyntheticSaddle(np.tile(-np.eye(1) * 50, (1, n, 1, 1)), np.zeros((1, n, 1, 1)),
                           np.ones((1, n, 1)), 1.0)
    with pytest.raises(DivergenceError) as info:
        run_precision(prob, SINGLE, HyperParams(nu=1, tau=0.01, q=1, T=200), seed=0)
    assert info.value.iteration > 0


def test_mixing_size_mismatch(regression3):
    with pytest.raises(ValueError):
        run_precision(regression3, PAIR, HyperParams(T=1))


def test_hyperparam_validation():
    with pytest.raises(ValueError):
        HyperParams(nu=1.5)
    with pytest.raises(ValueError):
        HyperParams(q=0)
    with pytest.raises(ValueError):
        HyperParams(alpha=0)


# -- step-size checker ------------------------------------------------------------

def test_stepsize_worked_example():
    r = check_stepsize_conditions(1.0, 1.0, 1 / 3, 5, 1.0, 0.25, 1 / 12, 0.01, 0.001, 3, 9)
    assert abs(r.c1 - 0.8) < 1e-12
    assert abs(r.eta_terms["c1*m*mu/(375*alpha*Lf^2)"] - 4 / 93.75) < 1e-12
    assert r.checks["beta <= min(tau/12, 1/3)"]
    bad = check_stepsize_conditions(1.0, 1.0, 1 / 3, 5, 1.0, 0.25, 1.0, 0.01, 0.001, 3, 9)
    assert not bad.checks["beta <= min(tau/12, 1/3)"] and not bad.feasible


def test_stepsize_lambda_zero_and_range():
    assert check_stepsize_conditions(1, 1, 0.0, 2, 1, 0.25, 1 / 12, 0.1, 0.1, 1, 1).c1 == 1.0
    with pytest.raises(ValueError):
        check_stepsize_conditions(1, 1, 1.0, 2, 1, 0.25, 1 / 12, 0.1, 0.1, 1, 1)


@settings(max_examples=40, deadline=None)
@given(lf=st.floats(0.1, 10), ratio=st.floats(0.01, 1), lam=st.floats(0, 0.95),
       m=st.integers(1, 30), n=st.integers(1, 1000), tau=st.floats(0.1, 10))
def test_feasible_hyperparams_pass_checker(lf, ratio, lam, m, n, tau):
    mu = ratio * lf
    hp = feasible_hyperparams(lf, mu, lam, m, n, tau=tau)
    r = check_stepsize_conditions(lf, mu, lam, m, tau, hp.alpha, hp.beta, hp.eta, hp.nu, hp.q, n)
    assert r.feasible
