import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvegraph.graph import ball, cycle_graph, random_graph
from curvegraph.operators import (MissingValueError, NonPositiveError, gamma, gamma2,
                                  gamma2_tilde, laplace_log, laplacian, restrict,
                                  vertex_function)

from conftest import random_graphs
from oracles import Brute, relerr


@pytest.mark.parametrize("op", [laplacian, gamma, gamma2])
def test_constant_is_annihilated(op, rng):
    g = random_graph(rng, 9, loops=True, random_measure=True)
    np.testing.assert_allclose(op(g, np.full(g.n, 3.7)), 0.0, atol=1e-14)


@pytest.mark.parametrize("op", [gamma2_tilde, laplace_log])
def test_constant_positive_is_annihilated(op, rng):
    g = random_graph(rng, 9, loops=True, random_measure=True)
    np.testing.assert_allclose(op(g, np.full(g.n, 3.7)), 0.0, atol=1e-14)


def test_edge_hand_values(edge):
    f = vertex_function(edge, {"a": 0.0, "b": 1.0})
    assert laplacian(edge, f, at="a") == 1.0
    assert laplacian(edge, f, at="b") == -1.0
    assert gamma(edge, f, at="a") == 0.5
    assert gamma2(edge, f, at="a") == 1.0


def test_edge_tilde_and_log(edge):
    assert gamma2_tilde(edge, np.array([1.0, 2.0]), at="a") == pytest.approx(9 / 8, abs=1e-15)
    assert laplace_log(edge, np.array([1.0, math.e]), at="a") == pytest.approx(1.0, abs=1e-15)


def test_loops_do_not_change_operators():
    from curvegraph.graph import add_loops
    g = cycle_graph(7)
    h = add_loops(g, 2.5).with_measure("unit")
    f = np.sin(np.arange(7.0))
    np.testing.assert_allclose(laplacian(g, f), laplacian(h, f), atol=1e-15)
    np.testing.assert_allclose(gamma2(g, f), gamma2(h, f), atol=1e-14)


def test_against_brute_force():
    rng = np.random.default_rng(7)
    for g in random_graphs(1, 15, loops=False, random_measure=True):
        b = Brute(g)
        for _ in range(3):
            f = rng.uniform(0.2, 3.0, g.n)
            assert relerr(laplacian(g, f), b.lap(f)) < 1e-12
            assert relerr(gamma(g, f), b.gam(f)) < 1e-12
            assert relerr(gamma2(g, f), b.gam2(f)) < 1e-12
            assert relerr(gamma2_tilde(g, f), b.gam2_tilde(f)) < 1e-12
            assert relerr(laplace_log(g, f), b.lap_log(f)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_product_rule(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(2, 10)), loops=True, random_measure=True)
    f, h = rng.normal(size=(2, g.n))
    lhs = 2 * gamma(g, f, h)
    rhs = laplacian(g, f * h) - f * laplacian(g, h) - h * laplacian(g, f)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12 * (1 + np.abs(lhs).max()))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_every_graph_has_cd_2_minus_1(seed):
    # normalized setting: mu = m, so D_mu = 1
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(2, 10)), loops=bool(seed % 2), measure_mode="degree")
    f = rng.normal(size=g.n)
    res = gamma2(g, f) - 0.5 * laplacian(g, f) ** 2 + gamma(g, f)
    assert res.min() >= -1e-10


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_cd_2_scales_with_d_mu(seed):
    from curvegraph.graph import d_mu
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(2, 10)), random_measure=True)
    f = rng.normal(size=g.n)
    res = gamma2(g, f) - 0.5 * laplacian(g, f) ** 2 + d_mu(g) * gamma(g, f)
    assert res.min() >= -1e-10


def test_cd_2_minus_1_fails_beyond_normalized_measure():
    # unit measure on a star: D_mu = 6 and the constant -1 is too weak
    from curvegraph.graph import star_graph
    g = star_graph(6)
    f = np.zeros(g.n)
    f[g.idx("0")] = 1.0
    res = gamma2(g, f) - 0.5 * laplacian(g, f) ** 2 + gamma(g, f)
    assert res.min() < 0


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_log_laplacian_below_ratio(seed):
    rng = np.random.default_rng(seed)
    g = random_graph(rng, int(rng.integers(2, 10)), random_measure=True)
    f = rng.uniform(0.1, 5.0, g.n)
    assert np.all(laplace_log(g, f) <= laplacian(g, f) / f + 1e-12)


def test_positivity_is_validated(edge):
    with pytest.raises(NonPositiveError):
        gamma2_tilde(edge, np.array([1.0, 0.0]))
    with pytest.raises(NonPositiveError):
        laplace_log(edge, np.array([-1.0, 2.0]))


def test_partial_function_propagates_nan():
    g = cycle_graph(12)
    B = ball(g, "0", 3)
    f = restrict(g, np.arange(12.0), B.members)
    L = laplacian(g, f)
    assert np.isfinite(L[g.idx("2")])
    assert np.isnan(L[g.idx("3")])
    G2 = gamma2(g, f)
    assert np.isfinite(G2[g.idx("1")])
    assert np.isnan(G2[g.idx("2")])
    with pytest.raises(MissingValueError):
        gamma2(g, f, at="2")


def test_vertex_function_shape_check(edge):
    with pytest.raises(ValueError):
        vertex_function(edge, [1.0, 2.0, 3.0])
