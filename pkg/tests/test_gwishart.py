"""G-Wishart constants, marginals, and samplers against independent oracles."""

import math

import numpy as np
import pytest
from scipy import integrate
from scipy.special import gammaln

from dynggm.graphs import Graph
from dynggm.gwishart import (
    GWishartParams,
    MarginalEvaluator,
    SegmentStatistics,
    log_marginal_likelihood,
    log_norm_const,
    log_norm_const_complete,
    log_norm_const_mc,
    sample_gwishart,
)
from dynggm.rng import StreamFactory, stream

from conftest import random_graph

LOG_SQRT_2PI = 0.5 * math.log(2 * math.pi)


# ---------------------------------------------------------------------------
# analytic constant for complete components
# ---------------------------------------------------------------------------


def test_univariate_constant():
    # 1-d integral: int_0^inf w^{1/2} e^{-w/2} dw = sqrt(2 pi)
    assert log_norm_const_complete(3.0, np.array([[1.0]])) == pytest.approx(
        LOG_SQRT_2PI, abs=1e-12
    )


def test_univariate_scale_property():
    val = log_norm_const_complete(3.0, np.array([[4.0]]))
    assert val == pytest.approx(LOG_SQRT_2PI - 1.5 * math.log(4), abs=1e-12)


def test_bivariate_constant_vs_quadrature():
    # integral of |W|^{1/2} exp(-tr(W)/2) over 2x2 PD matrices
    def inner(w11, w22):
        lim = math.sqrt(w11 * w22)
        val, _ = integrate.quad(
            lambda w12: math.sqrt(max(w11 * w22 - w12 * w12, 0.0))
            * math.exp(-0.5 * (w11 + w22)),
            -lim,
            lim,
        )
        return val

    outer, _ = integrate.dblquad(inner, 0, 60, lambda _: 0, lambda _: 60)
    expected = log_norm_const_complete(3.0, np.eye(2))
    assert math.log(outer) == pytest.approx(expected, abs=1e-4)


# ---------------------------------------------------------------------------
# Monte-Carlo constant
# ---------------------------------------------------------------------------


def test_mc_exact_on_complete_graph():
    params = GWishartParams(3.0, np.array([[2.0, 0.3], [0.3, 1.0]]))
    est = log_norm_const_mc(Graph.complete(2), params, n_mc=100, rng=stream(1, 0))
    assert est.se == 0.0
    assert est.value == pytest.approx(
        log_norm_const_complete(3.0, params.D), abs=1e-10
    )


def test_mc_single_node_exact_any_n():
    params = GWishartParams(3.0, np.array([[1.0]]))
    est = log_norm_const_mc(Graph.empty(1), params, n_mc=3, rng=stream(2, 0))
    assert est.value == pytest.approx(LOG_SQRT_2PI, abs=1e-12)
    assert est.se == 0.0


def test_mc_four_cycle_reproducible_across_seeds():
    g = Graph.from_edges(4, [(1, 2), (2, 3), (3, 4), (1, 4)])
    params = GWishartParams(3.0, np.eye(4))
    a = log_norm_const_mc(g, params, n_mc=100_000, rng=stream(11, 0))
    b = log_norm_const_mc(g, params, n_mc=100_000, rng=stream(12, 0))
    combined = math.hypot(a.se, b.se)
    assert abs(a.value - b.value) <= 3 * combined


def test_mc_matches_analytic_on_decomposable(rng):
    # whole-graph MC vs factorized analytic on random decomposable graphs
    from dynggm.graphs import is_decomposable

    found = 0
    while found < 6:
        p = int(rng.integers(2, 7))
        g = random_graph(p, rng, density=0.5)
        if not is_decomposable(g):
            continue
        found += 1
        params = GWishartParams(3.0, np.eye(p))
        exact = log_norm_const(g, params, n_mc=1, rng=stream(0, found))
        assert exact.se == 0.0  # all components complete -> analytic
        est = log_norm_const_mc(g, params, n_mc=40_000, rng=stream(5, found))
        tol = 3 * est.se if est.se > 0 else 1e-9
        assert abs(est.value - exact.value) <= max(tol, 1e-9)


# ---------------------------------------------------------------------------
# factorized constant
# ---------------------------------------------------------------------------


def test_factorized_path_graph():
    g = Graph.from_edges(3, [(1, 2), (2, 3)])
    params = GWishartParams(3.0, np.eye(3))
    got = log_norm_const(g, params, n_mc=1, rng=stream(3, 0))
    expect = (
        log_norm_const_complete(3.0, np.eye(2)) * 2
        - log_norm_const_complete(3.0, np.eye(1))
    )
    assert got.value == pytest.approx(expect, abs=1e-12)
    assert got.se == 0.0


def test_factorized_empty_graph():
    params = GWishartParams(3.0, np.eye(3))
    got = log_norm_const(Graph.empty(3), params, n_mc=1, rng=stream(4, 0))
    assert got.value == pytest.approx(3 * LOG_SQRT_2PI, abs=1e-12)


def test_factorized_four_cycle_uses_single_mc():
    g = Graph.from_edges(4, [(1, 2), (2, 3), (3, 4), (1, 4)])
    params = GWishartParams(3.0, np.eye(4))
    got = log_norm_const(g, params, n_mc=20_000, rng=stream(6, 0))
    assert got.se > 0.0
    # cross-check against an independent whole-graph run
    est = log_norm_const_mc(g, params, n_mc=20_000, rng=stream(7, 0))
    assert abs(got.value - est.value) <= 3 * math.hypot(got.se, est.se)


# ---------------------------------------------------------------------------
# marginal likelihood
# ---------------------------------------------------------------------------


def complete_marginal_reference(Y: np.ndarray, d: float, D: np.ndarray) -> float:
    """Independent closed form for the complete-graph marginal."""
    n, p = Y.shape
    H = Y.T @ Y

    def wishart_const(dd, M):
        m = M.shape[0]
        a = 0.5 * (dd + m - 1)
        lg = (m * (m - 1) / 4) * math.log(math.pi) + sum(
            gammaln(a - 0.5 * i) for i in range(m)
        )
        sign, logdet = np.linalg.slogdet(M)
        assert sign > 0
        return a * m * math.log(2) + lg - a * logdet

    return (
        -0.5 * n * p * math.log(2 * math.pi)
        + wishart_const(d + n, D + H)
        - wishart_const(d, D)
    )


def test_marginal_single_point_univariate():
    g = Graph.empty(1)
    stats = SegmentStatistics.from_data(np.array([[0.0]]))
    params = GWishartParams(3.0, np.array([[1.0]]))
    got = log_marginal_likelihood(g, stats, params)
    assert got == pytest.approx(math.log(2 / math.pi), abs=1e-10)


def test_marginal_empty_graph_is_product_of_univariates():
    rng = np.random.default_rng(7)
    Y = rng.standard_normal((6, 2))
    params2 = GWishartParams(3.0, np.eye(2))
    params1 = GWishartParams(3.0, np.eye(1))
    got = log_marginal_likelihood(Graph.empty(2), SegmentStatistics.from_data(Y), params2)
    parts = sum(
        log_marginal_likelihood(
            Graph.empty(1), SegmentStatistics.from_data(Y[:, [j]]), params1
        )
        for j in range(2)
    )
    assert got == pytest.approx(parts, abs=1e-10)


def test_marginal_complete_graph_vs_reference():
    rng = np.random.default_rng(21)
    Y = rng.standard_normal((5, 2))
    D = np.array([[1.0, 0.2], [0.2, 2.0]])
    got = log_marginal_likelihood(
        Graph.complete(2), SegmentStatistics.from_data(Y), GWishartParams(3.0, D)
    )
    assert got == pytest.approx(complete_marginal_reference(Y, 3.0, D), abs=1e-9)


def test_marginal_order_invariance():
    rng = np.random.default_rng(3)
    Y = rng.standard_normal((8, 3))
    params = GWishartParams(3.0, np.eye(3))
    g = Graph.from_edges(3, [(1, 2)])
    a = log_marginal_likelihood(g, SegmentStatistics.from_data(Y), params)
    b = log_marginal_likelihood(g, SegmentStatistics.from_data(Y[::-1]), params)
    assert a == pytest.approx(b, abs=1e-10)


def test_conjugate_chaining_exact_on_complete():
    rng = np.random.default_rng(9)
    Y = rng.standard_normal((10, 2))
    params = GWishartParams(3.0, np.eye(2))
    g = Graph.complete(2)
    whole = log_marginal_likelihood(g, SegmentStatistics.from_data(Y), params)
    first = SegmentStatistics.from_data(Y[:4])
    split = log_marginal_likelihood(g, first, params) + log_marginal_likelihood(
        g,
        SegmentStatistics.from_data(Y[4:]),
        GWishartParams(params.d + first.n, params.D + first.H),
    )
    assert whole == pytest.approx(split, abs=1e-9)


# ---------------------------------------------------------------------------
# caching evaluator
# ---------------------------------------------------------------------------


def test_evaluator_matches_functional_path():
    rng = np.random.default_rng(4)
    Y = rng.standard_normal((12, 3))
    params = GWishartParams(3.0, np.eye(3))
    ev = MarginalEvaluator(Y, params, n_mc=500, streams=StreamFactory(99))
    g = Graph.from_edges(3, [(1, 2), (2, 3)])
    got = ev.log_marginal(g, 3, 9)
    want = log_marginal_likelihood(
        g, SegmentStatistics.from_data(Y[2:8]), params
    )
    assert got == pytest.approx(want, abs=1e-10)


def test_evaluator_values_stable_within_run():
    rng = np.random.default_rng(5)
    Y = rng.standard_normal((20, 4))
    params = GWishartParams(3.0, np.eye(4))
    g = Graph.from_edges(4, [(1, 2), (2, 3), (3, 4), (1, 4)])  # non-decomposable
    ev1 = MarginalEvaluator(Y, params, n_mc=200, streams=StreamFactory(7))
    ev2 = MarginalEvaluator(Y, params, n_mc=200, streams=StreamFactory(7))
    v1 = ev1.log_marginal(g, 1, 21)
    assert ev1.log_marginal(g, 1, 21) == v1  # cached
    # fresh evaluator, same seed: identical value (keyed randomness)
    assert ev2.log_marginal(g, 1, 21) == v1
    # different seed: different MC value
    ev3 = MarginalEvaluator(Y, params, n_mc=200, streams=StreamFactory(8))
    assert ev3.log_marginal(g, 1, 21) != v1


def test_evaluator_nondecomposable_matches_reference_estimator():
    # compiled path vs the numpy reference estimator at high n_mc
    rng = np.random.default_rng(17)
    Y = rng.standard_normal((25, 4))
    params = GWishartParams(3.0, np.eye(4))
    g = Graph.from_edges(4, [(1, 2), (2, 3), (3, 4), (1, 4)])
    ev = MarginalEvaluator(Y, params, n_mc=50_000, streams=StreamFactory(2))
    got = ev.log_marginal(g, 1, 26)
    want = log_marginal_likelihood(
        g, SegmentStatistics.from_data(Y), params, n_mc=50_000, rng=stream(3, 3)
    )
    assert got == pytest.approx(want, abs=0.1)


def test_evaluator_cache_eviction_preserves_values():
    # key-seeded randomness makes recomputation after eviction bit-identical
    rng = np.random.default_rng(31)
    Y = rng.standard_normal((30, 4))
    params = GWishartParams(3.0, np.eye(4))
    graphs = [Graph(4, m) for m in range(50)]
    ev_big = MarginalEvaluator(Y, params, n_mc=100, streams=StreamFactory(5))
    ev_tiny = MarginalEvaluator(
        Y, params, n_mc=100, streams=StreamFactory(5), max_cache_entries=10
    )
    vals_big = [ev_big.log_marginal(g, 3, 27) for g in graphs]
    vals_tiny = [ev_tiny.log_marginal(g, 3, 27) for g in graphs]
    assert ev_tiny.cache_evictions > 0
    assert vals_big == vals_tiny
    # re-query after eviction: still identical
    assert [ev_tiny.log_marginal(g, 3, 27) for g in graphs] == vals_big


def test_evaluator_thread_determinism():
    from concurrent.futures import ThreadPoolExecutor

    rng = np.random.default_rng(6)
    Y = rng.standard_normal((30, 4))
    params = GWishartParams(3.0, np.eye(4))
    graphs = [Graph(4, m) for m in range(40)]

    def run(workers):
        ev = MarginalEvaluator(Y, params, n_mc=100, streams=StreamFactory(3))
        with ThreadPoolExecutor(max_workers=workers) as ex:
            vals = list(ex.map(lambda g: ev.log_marginal(g, 5, 25), graphs))
        return vals

    assert run(1) == run(4)


def test_compiled_mc_kernel_matches_reference():
    """The evaluator's compiled estimator agrees with the numpy reference
    and the analytic constant."""
    from dynggm._fastpath import mc_exponent_moments

    # decomposable graph: whole-graph MC must match the exact factorized value
    g = Graph.from_edges(4, [(1, 2), (2, 3), (3, 4)])
    params = GWishartParams(3.0, np.eye(4))
    exact = log_norm_const(g, params, n_mc=1, rng=stream(0, 0)).value

    adj = g.adjacency().astype(bool)
    nu = np.array([int(adj[i, i + 1 :].sum()) for i in range(4)])
    T = np.eye(4)
    t_diag = np.ones(4)
    import math as _math
    from scipy.special import gammaln as _gl

    log_c = float(
        np.sum(0.5 * (3.0 + nu) * _math.log(2.0) + _gl(0.5 * (3.0 + nu)))
        + 0.5 * int(nu.sum()) * _math.log(2 * _math.pi)
    )
    exps = mc_exponent_moments(123, 3.0, T, t_diag, nu, adj, 200_000)
    vmax = exps.max()
    w = np.exp(exps - vmax)
    est = log_c + vmax + _math.log(w.mean())
    se = w.std(ddof=1) / (w.mean() * _math.sqrt(len(w)))
    assert abs(est - exact) <= max(3 * se, 1e-9)

    # non-decomposable: compiled vs numpy estimator within combined error
    g4 = Graph.from_edges(4, [(1, 2), (2, 3), (3, 4), (1, 4)])
    ref = log_norm_const_mc(g4, params, n_mc=200_000, rng=stream(9, 9))
    adj4 = g4.adjacency().astype(bool)
    nu4 = np.array([int(adj4[i, i + 1 :].sum()) for i in range(4)])
    log_c4 = float(
        np.sum(0.5 * (3.0 + nu4) * _math.log(2.0) + _gl(0.5 * (3.0 + nu4)))
        + 0.5 * int(nu4.sum()) * _math.log(2 * _math.pi)
    )
    exps4 = mc_exponent_moments(77, 3.0, T, t_diag, nu4, adj4, 200_000)
    vmax4 = exps4.max()
    w4 = np.exp(exps4 - vmax4)
    est4 = log_c4 + vmax4 + _math.log(w4.mean())
    se4 = w4.std(ddof=1) / (w4.mean() * _math.sqrt(len(w4)))
    assert abs(est4 - ref.value) <= 3 * _math.hypot(se4, ref.se)


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def test_sample_univariate_gamma_moments():
    params = GWishartParams(3.0, np.array([[1.0]]))
    r = stream(100, 0)
    draws = np.array(
        [sample_gwishart(Graph.empty(1), params, r)[0, 0] for _ in range(20_000)]
    )
    # Gamma(shape 3/2, rate 1/2): mean 3, var 6
    assert draws.mean() == pytest.approx(3.0, abs=0.08)
    assert draws.var() == pytest.approx(6.0, rel=0.08)


def test_sample_empty_graph_diagonal():
    params = GWishartParams(3.0, np.eye(3))
    om = sample_gwishart(Graph.empty(3), params, stream(101, 0))
    off = om[~np.eye(3, dtype=bool)]
    assert np.all(off == 0.0)
    assert np.all(np.diag(om) > 0)


def test_sample_complete_moments():
    d = 3.0
    D = np.array([[1.0, 0.4], [0.4, 2.0]])
    params = GWishartParams(d, D)
    r = stream(102, 0)
    acc = np.zeros((2, 2))
    n = 20_000
    for _ in range(n):
        acc += sample_gwishart(Graph.complete(2), params, r)
    mean = acc / n
    expected = (d + 2 - 1) * np.linalg.inv(D)
    assert np.allclose(mean, expected, rtol=0.05, atol=0.05)


def test_sample_decomposable_path_moments():
    d = 3.0
    params = GWishartParams(d, np.eye(3))
    g = Graph.from_edges(3, [(1, 2), (2, 3)])
    r = stream(103, 0)
    n = 20_000
    acc = np.zeros((3, 3))
    for _ in range(n):
        om = sample_gwishart(g, params, r)
        assert om[0, 2] == 0.0 and om[2, 0] == 0.0
        acc += om
    mean = acc / n
    # E[Omega] = sum_m nu_m pad(inv(D_Cm)) - sum nu_S pad(inv(D_S))
    expected_diag = np.array([4.0, 5.0, 4.0])
    assert np.allclose(np.diag(mean), expected_diag, rtol=0.05)
    assert abs(mean[0, 1]) < 0.05 and abs(mean[1, 2]) < 0.05


def test_sample_nondecomposable_structure():
    g = Graph.from_edges(4, [(1, 2), (2, 3), (3, 4), (1, 4)])
    params = GWishartParams(3.0, np.eye(4))
    r = stream(104, 0)
    for _ in range(10):
        om = sample_gwishart(g, params, r, gibbs_burn_in=50)
        np.linalg.cholesky(om)  # PD
        assert om[0, 2] == 0.0 and om[1, 3] == 0.0  # structural zeros
        assert np.allclose(om, om.T)


def test_params_validation():
    with pytest.raises(ValueError):
        GWishartParams(2.0, np.eye(2))
    with pytest.raises(np.linalg.LinAlgError):
        GWishartParams(3.0, np.array([[1.0, 2.0], [2.0, 1.0]]))
