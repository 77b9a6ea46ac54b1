import math

import numpy as np
import pytest
from scipy import optimize

from curvegraph.curvature import certify_nonnegative
from curvegraph.estimates import (G_profile, binomial_decomposition, coefficient_compare,
                                  cutoff, derivative_identity_error, doubling_report,
                                  exp_integrability, gaussian_fit, harnack_check,
                                  harnack_constant_D, integrated_schedule,
                                  integrated_variational_check, li_yau_bound, li_yau_check,
                                  li_yau_derivative_form, lipschitz_constant, make_report,
                                  on_diagonal_bounds, phi_integral, poincare_constant,
                                  variational_check, volume_profile)
from curvegraph.graph import (GraphError, add_loops, complete_graph, cycle_graph, path_graph,
                              torus_graph)
from curvegraph.heat import discrete_kernel_matrix, mollify, semigroup_apply
from curvegraph.operators import laplacian


@pytest.fixture(scope="module")
def torus8():
    g = torus_graph(8, "degree")
    n0 = certify_nonnegative(g, range(2, 17), sample_budget=32, vertices=["0,0"]).n0
    return g, n0


def test_report_serialization():
    rep = make_report("x", {"a": 1}, [0.5, -0.1, 0.2], 0.05)
    d = rep.to_dict()
    assert d["residuals"] == {"min": -0.1, "max": 0.5, "mean": pytest.approx(0.2)}
    assert d["pass"] is False
    assert set(d) == {"kind", "params", "residuals", "constants", "samples", "tolerance",
                      "pass", "diagnostics"}


# ---------------------------------------------------------------------------
# Li-Yau family


def test_li_yau_bound_reduces_to_graph_form():
    rng = np.random.default_rng(0)
    P, L = rng.uniform(0.5, 2, 10), rng.normal(size=10)
    np.testing.assert_allclose(li_yau_bound(3.0, 0.0, 1.0, 2.0, P, L),
                               0.5 * L / P + 3.0 / (2 * 2.0), rtol=1e-15)


def test_li_yau_on_torus(torus8):
    g, n0 = torus8
    f = mollify(g, "0,0")
    for T in (0.25, 1.0, 4.0):
        rep = li_yau_check(g, f, T, n0, certified=True)
        assert rep.passed, rep.residual_min


def test_li_yau_large_time_residual_positive(torus8):
    g, n0 = torus8
    rep = li_yau_check(g, mollify(g, "0,0"), 200.0, n0)
    assert rep.residual_min > 0
    assert rep.residual_min == pytest.approx(n0 / 400, rel=1e-3)


def test_li_yau_derivative_form(torus8):
    g, n0 = torus8
    f = mollify(g, "0,0")
    for t in (0.5, 2.0):
        assert np.all(li_yau_derivative_form(g, f, t) <= n0 / (2 * t) + 1e-6)


@pytest.mark.parametrize("kw", [{"b": 0.5}, {"K": -3.0, "T": 1.0}])
def test_li_yau_parameter_domain(kw, edge):
    args = {"T": 1.0, "n": 2.0, "K": 0.0, "b": 1.0}
    args.update(kw)
    with pytest.raises(ValueError):
        li_yau_check(edge, np.ones(2), **args)


def test_li_yau_needs_positive_data(edge):
    with pytest.raises(ValueError):
        li_yau_check(edge, np.array([1.0, 0.0]), 1.0, 2.0)


# ---------------------------------------------------------------------------
# variational inequality


def test_derivative_identity_on_cycle(c6):
    f = mollify(c6, 0, 0.3)
    for t in (0.2, 0.5, 0.8):
        assert derivative_identity_error(c6, f, 1.0, t) <= 1e-5


def test_integrated_form_on_torus(torus8):
    g, n0 = torus8
    f = mollify(g, "0,0")
    for tau in (0.1, 1.0, 5.0):
        assert integrated_variational_check(g, f, 1.0, tau, n0).residual_min >= -1e-8


def test_pointwise_variational_schedule(torus8):
    g, n0 = torus8
    f = mollify(g, "0,0", 0.1)
    alpha, alpha_p, gam = integrated_schedule(1.0, 0.5, n0)
    rep = variational_check(g, f, 1.0, [0.25, 0.5, 0.75], n0, 0.0, alpha, alpha_p, gam)
    assert rep.passed
    assert rep.constants["identity_max_error"] <= 1e-5


def test_variational_rejects_positive_gamma(c6):
    with pytest.raises(ValueError):
        variational_check(c6, np.ones(6), 1.0, [0.5], 2.0, 0.0, lambda t: 1.0,
                          lambda t: 0.0, lambda t: 0.1)


# ---------------------------------------------------------------------------
# Harnack


def test_harnack_equal_points_constant(torus8):
    g, _ = torus8
    n = 3.0
    rep = harnack_check(g, n, [(0.5, 1.0, 0, 5, 5)])
    key, t, lhs, rhs, _ = rep.rows[0]
    p_s = semigroup_apply(g, np.eye(g.n)[5] / g.measure[5], 1.0)[0]
    assert rhs / p_s == pytest.approx(2 ** n, rel=1e-12)


def test_harnack_random_tuples(torus8):
    g, n0 = torus8
    rng = np.random.default_rng(1)
    tuples = []
    for _ in range(200):
        t = rng.uniform(0.1, 3)
        tuples.append((t, t + rng.uniform(0.1, 3), *rng.integers(0, g.n, 3)))
    assert harnack_check(g, n0, tuples).residual_min >= -1e-10
    assert harnack_constant_D(g) == 4.0


def test_harnack_requires_ordered_times(torus8):
    with pytest.raises(ValueError):
        harnack_check(torus8[0], 2.0, [(1.0, 1.0, 0, 0, 0)])


# ---------------------------------------------------------------------------
# exponential integrability


def test_G_vanishes_at_zero():
    assert G_profile(1e-8, 4.0) < 1e-4
    assert G_profile(0.0 + 1e-300, 4.0) >= 0


def test_phi_integral_decreases_to_zero():
    vals = [phi_integral(A, 4.0) for A in np.geomspace(1.0, 1e-6, 13)]
    assert np.all(np.diff(vals) < 0)
    assert vals[-1] < 1e-2


def test_lipschitz_constant_solves_fixed_point():
    lam, C = lipschitz_constant(3.0, 1.0)
    assert lam * C == pytest.approx(1 / 3, rel=1e-13)


def test_exp_integrability_on_torus(torus8):
    g, n0 = torus8
    rep = exp_integrability(g, "0,0", 3.0, n0)
    assert rep.passed
    assert rep.constants["measured"] >= rep.constants["rho"]


def test_exp_integrability_radius_domain(edge):
    with pytest.raises(ValueError):
        exp_integrability(edge, "a", 0.5, 2.0)


# ---------------------------------------------------------------------------
# volumes


def test_small_radius_ratio_is_one():
    g = torus_graph(12)
    V = volume_profile(g, 0, [0.2, 0.4, 0.49])
    V2 = volume_profile(g, 0, [0.4, 0.8, 0.98])
    np.testing.assert_array_equal(V2 / V, 1.0)


def test_doubling_on_large_torus():
    g = torus_graph(40)
    rep = doubling_report(g, centers=["0,0"], r_max=8)
    assert rep.constants["C_doubling"] <= 5 + 1e-9
    assert rep.constants["argmax"] == ["0,0", 0.5]
    assert rep.passed
    r = np.arange(0, 9)
    np.testing.assert_array_equal(volume_profile(g, 0, r), 2 * r * r + 2 * r + 1)


def test_on_diagonal_band():
    g = torus_graph(30)
    lower, upper = [], []
    for r in (1, 2, 3):
        rep = on_diagonal_bounds(g, "0,0", r)
        assert rep.passed
        lower.append(rep.constants["lower_ratio"])
        upper.append(rep.constants["upper_ratio"])
    for vals in (lower, upper):
        assert max(vals) / min(vals) <= 100


def test_cutoff_profile():
    g = path_graph(9)
    h = cutoff(g, "4", 2.0)
    np.testing.assert_allclose(h, [0, 0, 0, 1, 1, 1, 0, 0, 0])


# ---------------------------------------------------------------------------
# discrete kernels


def test_coefficient_anchor():
    out = coefficient_compare(0.25, 4, 1.0)
    assert out["c"][0] == pytest.approx(math.exp(3) / 256, abs=1e-12)


def test_coefficients_bounded_and_window_stable():
    res = {n: coefficient_compare(0.25, n, 1.0) for n in (100, 1000, 10000)}
    cmax = [res[n]["c_max"] for n in res]
    wmin = [res[n]["window_min"] for n in res]
    assert max(cmax) / min(cmax) <= 1.1
    assert min(wmin) > 0
    assert max(wmin) / min(wmin) <= 1.5


def test_coefficient_domain():
    with pytest.raises(ValueError):
        coefficient_compare(0.3, 10, 1.0)
    with pytest.raises(ValueError):
        coefficient_compare(0.25, 2.5, 1.0)


def test_binomial_decomposition_is_power(looped_triangle):
    g = add_loops(cycle_graph(7), 1.0).with_measure("degree")
    for n in (1, 4, 9):
        np.testing.assert_allclose(binomial_decomposition(g, 0.2, n),
                                   discrete_kernel_matrix(g, n), atol=1e-13)


def test_gaussian_parity_on_loopless_k2():
    rep = gaussian_fit(complete_graph(2, "degree"), 10)
    assert not rep.passed
    assert rep.diagnostics[0]["name"] == "parity"


def test_gaussian_fit_on_looped_torus():
    g = add_loops(torus_graph(31), 1.0).with_measure("degree")
    rep = gaussian_fit(g, 12, sources=["0,0"])
    assert rep.passed
    c = rep.constants
    assert c["coverage"] == 1.0
    assert all(0 < c[k] < np.inf for k in ("c_l", "C_l", "C_r", "c_r"))


def test_gaussian_fit_needs_degree_measure():
    with pytest.raises(GraphError):
        gaussian_fit(cycle_graph(5), 4)


# ---------------------------------------------------------------------------
# Poincare


def _poincare_by_ascent(g, x0, r, starts=20, seed=0):
    """Maximize the Poincare quotient directly from its sums."""
    from curvegraph.graph import ball
    B1, B2 = ball(g, x0, r), ball(g, x0, 2 * r)
    inner = list(B1.members)
    outer = list(B2.members)
    m = g.degree
    W = g.offdiag.toarray()

    def quotient(vals):
        f = dict(zip(outer, vals))
        fb = sum(m[v] * f[v] for v in inner) / sum(m[v] for v in inner)
        num = sum(m[v] * (f[v] - fb) ** 2 for v in inner)
        den = sum(W[a, b] * (f[a] - f[b]) ** 2 for a in outer for b in outer if W[a, b])
        return num / (r * r * den)

    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(starts):
        res = optimize.minimize(lambda v: -quotient(v), rng.normal(size=len(outer)),
                                method="BFGS", options={"gtol": 1e-12})
        best = max(best, -res.fun)
    return best


def test_poincare_path_matches_ascent():
    g = path_graph(3, "degree")
    C = poincare_constant(g, "1", 1.0).constants["C_poincare"]
    assert C == pytest.approx(_poincare_by_ascent(g, "1", 1.0), abs=1e-8)


def test_poincare_cycle_matches_ascent():
    g = cycle_graph(9, "degree")
    C = poincare_constant(g, "0", 2.0).constants["C_poincare"]
    assert C == pytest.approx(_poincare_by_ascent(g, "0", 2.0), abs=1e-8)


def test_poincare_bounded_on_torus():
    g = torus_graph(40, "degree")
    vals = [poincare_constant(g, "0,0", r).constants["C_poincare"] for r in range(2, 9)]
    assert max(vals) <= 1.0
    assert min(vals) > 0.1


def test_poincare_needs_degree_measure():
    with pytest.raises(GraphError):
        poincare_constant(cycle_graph(5), 0, 1.0)
