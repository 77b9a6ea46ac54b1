"""
Positive-curvature consequences: metrics, entropy, log-Sobolev profile,
decay of the semigroup, a global kernel bound and diameter bounds.

The curvature parameter ``K`` and the kernel limit refer to a probability
measure. :func:`normalize_probability` divides mu by ``Z = mu(V)``; under
that change ``L -> Z L``, ``K -> Z K``, ``D_mu -> Z D_mu`` and
``p(t) -> Z p(Z t)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize
from scipy.sparse import csgraph, csr_matrix

from .estimates import FD_STEP, make_report
from .graph import WeightedGraph, d_mu as graph_d_mu
from .heat import semigroup_apply, spectral_kernel
from .operators import gamma, laplacian


# ---------------------------------------------------------------------------
# metrics


@dataclass
class MetricReport:
    """Distances and diameter information (fields filled as computed)."""

    rho_tilde: np.ndarray | None = field(default=None, repr=False)
    rho_slack: np.ndarray | None = field(default=None, repr=False)
    canonical_lower: dict = field(default_factory=dict)
    diameters: dict = field(default_factory=dict)
    bound_values: dict = field(default_factory=dict)
    diagnostics: list = field(default_factory=list)

    def to_dict(self, names=None):
        out = {"canonical_lower": {f"{a}|{b}": v for (a, b), v in self.canonical_lower.items()},
               "diameters": self.diameters, "bound_values": self.bound_values,
               "diagnostics": list(self.diagnostics)}
        if self.rho_tilde is not None:
            out["rho_tilde_max"] = float(self.rho_tilde.max())
            out["intrinsic_slack_min"] = float(self.rho_slack.min())
        return out


def intrinsic_lengths(g):
    """Edge lengths ``min(sqrt(mu(x)/m(x)), sqrt(mu(y)/m(y)))`` as CSR."""
    r, c, _ = g.edge_arrays
    s = np.sqrt(g.measure / g.degree)
    return csr_matrix((np.minimum(s[r], s[c]), (r, c)), shape=(g.n, g.n))


def intrinsic_rho(g):
    """All-pairs intrinsic distance and per-vertex slack ``mu - sum w rho^2``."""
    L = intrinsic_lengths(g)
    rho = csgraph.shortest_path(L, method="D", directed=False)
    r, c, w = g.edge_arrays
    load = np.bincount(r, weights=w * np.asarray(L[r, c]).ravel() ** 2, minlength=g.n)
    return MetricReport(rho_tilde=rho, rho_slack=g.measure - load)


def _feasible_start(g, x, y, free, rho):
    if free.all():
        return math.sqrt(2.0) * rho[:, y]
    # distance to the complement of the domain
    to_out = rho[:, ~free].min(axis=1)
    return math.sqrt(2.0) * np.minimum(rho[:, y], to_out)


def canonical_distance(g, x, y, domain=None, maxiter=300, tol=1e-10):
    """Certified lower bound on ``sup |f(x) - f(y)|`` over ``G(f) <= 1``.

    ``f`` is supported on ``domain`` (default: every vertex) and all
    constraints ``G(f)(v) <= 1`` are imposed on the whole graph, so a larger
    domain never lowers the value. The start ``sqrt(2) rho~(., y)`` is
    feasible; SLSQP improves it and a final rescaling restores exact
    feasibility.

    Returns
    -------
    value : float
    witness : ndarray
    converged : bool
    """
    xi, yi = g.idx(x), g.idx(y)
    if xi == yi:
        return 0.0, np.zeros(g.n), True
    free = np.zeros(g.n, dtype=bool)
    free[np.arange(g.n) if domain is None else [g.idx(v) for v in domain]] = True
    rho = intrinsic_rho(g).rho_tilde
    f0 = _feasible_start(g, xi, yi, free, rho)
    idx = np.flatnonzero(free)
    r, c, w = g.edge_arrays
    mu = g.measure

    def full(z):
        f = np.zeros(g.n)
        f[idx] = z
        return f

    # constraint rows: vertices whose gamma involves a free vertex
    touched = np.unique(np.concatenate([idx, c[np.isin(r, idx)]]))

    def cons(z):
        return 1.0 - gamma(g, full(z))[touched]

    def cons_jac(z):
        f = full(z)
        d = f[c] - f[r]
        J = np.zeros((g.n, g.n))
        np.add.at(J, (r, c), w * d / mu[r])
        np.add.at(J, (r, r), -w * d / mu[r])
        return -J[np.ix_(touched, idx)]

    sel = np.zeros(idx.size)
    if free[xi]:
        sel[np.searchsorted(idx, xi)] += 1.0
    if free[yi]:
        sel[np.searchsorted(idx, yi)] -= 1.0
    res = optimize.minimize(lambda z: -sel @ z, f0[idx], jac=lambda z: -sel,
                            constraints=[{"type": "ineq", "fun": cons, "jac": cons_jac}],
                            method="SLSQP", options={"maxiter": maxiter, "ftol": tol})
    best, best_val = np.zeros(g.n), 0.0
    for cand in (full(res.x), f0):
        gmax = gamma(g, cand).max()
        cand = cand / math.sqrt(max(gmax, 1.0)) * (1.0 - 1e-14)
        val = cand[xi] - cand[yi]
        if gamma(g, cand).max() <= 1.0 and val > best_val:
            best, best_val = cand, val
    return float(best[xi] - best[yi]), best, bool(res.success)


# ---------------------------------------------------------------------------
# entropy and log-Sobolev


def entropy(g, f):
    """``sum mu f ln f - (sum mu f) ln(sum mu f)`` with ``0 ln 0 = 0``."""
    f = np.asarray(f, dtype=float)
    if np.any(f < 0):
        raise ValueError("entropy needs a nonnegative function")
    mass = float(np.sum(g.measure * f))
    if not mass > 0:
        raise ValueError("entropy needs positive total mass")
    with np.errstate(divide="ignore", invalid="ignore"):
        flogf = np.where(f > 0, f * np.log(np.where(f > 0, f, 1.0)), 0.0)
    return float(np.sum(g.measure * flogf) - mass * math.log(mass))


@dataclass(frozen=True)
class LsiProfile:
    """Log-Sobolev profile for dimension ``n`` and curvature ``K > 0``.

    ``theta`` defaults to ``2K/3``.
    """

    n: float
    K: float
    theta: float | None = None

    def __post_init__(self):
        if not self.K > 0:
            raise ValueError("K must be positive")
        if self.theta is None:
            object.__setattr__(self, "theta", 2.0 * self.K / 3.0)
        if not 0 < self.theta < self.K:
            raise ValueError("theta must lie in (0, K)")

    def phi(self, x):
        """``2n[(1+s) ln(1+s) - s ln s]`` with ``s = x/(theta n)``."""
        x = np.asarray(x, dtype=float)
        s = x / (self.theta * self.n)
        with np.errstate(divide="ignore", invalid="ignore"):
            slogs = np.where(s > 0, s * np.log(np.where(s > 0, s, 1.0)), 0.0)
        return 2.0 * self.n * ((1 + s) * np.log1p(s) - slogs)

    def dphi(self, x):
        return (2.0 / self.theta) * np.log1p(self.theta * self.n / np.asarray(x, float))

    def d2phi(self, x):
        x = np.asarray(x, float)
        return -2.0 * self.n / (x * (x + self.theta * self.n))

    def M(self, t):
        """Log of the kernel bound, ``-n ln(1 - e^{-theta t})``."""
        return -self.n * math.log(-math.expm1(-self.theta * t))

    def C1(self, t0, D_mu):
        r = 2.0 * self.K / self.theta
        if not r > 2:
            raise ValueError("need 2K/theta > 2")
        return math.sqrt(D_mu + self.n * self.theta * (r - 1) ** 2
                         / (8.0 * (r - 2) * math.expm1(self.theta * t0)))

    def C2(self, t0, D_mu):
        return 2.0 * math.sqrt(2.0 * D_mu) * self.C1(t0, D_mu)


def normalize_probability(g):
    """Same weights with ``mu / mu(V)``; returns ``(graph, Z)``."""
    Z = float(g.measure.sum())
    return WeightedGraph(g.names, g.weights, "custom", g.measure / Z), Z


def _is_probability(g, tol=1e-12):
    return abs(g.measure.sum() - 1.0) <= tol


def lsi_check(g, fs, profile, tol=1e-8, t_grid=None):
    """Residual ``Phi(sum mu G(f)) - sum mu f^2 ln f^2`` over test functions.

    ``g`` is renormalized to a probability measure when needed (the factor is
    recorded). Each ``f`` is rescaled to ``||f||_2 = 1`` with a note. With
    ``t_grid`` the bound ``E(f^2) <= 2t sum mu G(f) + 2 M(t)`` is checked too.
    """
    notes = []
    Z = 1.0
    if not _is_probability(g):
        g, Z = normalize_probability(g)
        notes.append(f"measure renormalized by {Z:g}")
    res, rows = [], []
    rescaled = 0
    for i, f in enumerate(np.atleast_2d(np.asarray(fs, dtype=float))):
        f = np.abs(f)
        nrm = math.sqrt(float(np.sum(g.measure * f * f)))
        if abs(nrm - 1.0) > 1e-10:
            f = f / nrm
            rescaled += 1
        energy = float(np.sum(g.measure * gamma(g, f)))
        f2 = f * f
        lhs = entropy(g, f2)
        rhs = float(profile.phi(energy))
        res.append(rhs - lhs)
        rows.append((str(i), energy, lhs, rhs, rhs - lhs))
        for t in (t_grid if t_grid is not None else ()):
            rhs_t = 2 * t * energy + 2 * profile.M(t)
            res.append(rhs_t - lhs)
            rows.append((f"{i}@t", float(t), lhs, rhs_t, rhs_t - lhs))
    if rescaled:
        notes.append(f"{rescaled} functions rescaled to unit norm")
    return make_report("lsi", {"n": profile.n, "K": profile.K, "theta": profile.theta,
                               "Z": Z}, res, tol, diagnostics=notes, rows=rows)


# ---------------------------------------------------------------------------
# decay and kernel bounds


def decay_constants(n, K, t0, D_mu, theta=None):
    """``(C1, C2)`` for the gradient and time-derivative decay."""
    prof = LsiProfile(n, K, theta)
    return prof.C1(t0, D_mu), prof.C2(t0, D_mu)


def decay_check(g, fs, profile, t0, t_grid, tol=1e-8, h=FD_STEP):
    """Decay of the semigroup under positive curvature.

    Three residual families per ``f`` (with ``0 <= f <= 1``) and ``t >= t0``:

    * ``C2 e^{-theta t/2} - |d/dt P_t f|`` (central differences);
    * ``C1^2 e^{-theta t} - G(sqrt P_t f)``;
    * the sharper pointwise form
      ``(1/2) e^{-theta t} L P_t f + c e^{-2 theta t} P_t f / (1 - e^{-theta t}) - G(sqrt P_t f)``
      reported separately in ``constants['pointwise_min']``.

    ``g`` must already carry a probability measure (see
    :func:`normalize_probability`) and ``profile.K`` must match it.
    """
    theta = profile.theta
    if not _is_probability(g):
        raise ValueError("decay_check expects a probability measure")
    if not theta < profile.K:
        raise ValueError("theta must be below K")
    D_mu = graph_d_mu(g)
    C1, C2 = profile.C1(t0, D_mu), profile.C2(t0, D_mu)
    r = 2 * profile.K / theta
    c = profile.n * theta * (r - 1) ** 2 / (4 * (r - 2))
    res_dt, res_g, res_pw, rows = [], [], [], []
    for i, f in enumerate(np.atleast_2d(np.asarray(fs, dtype=float))):
        if f.min() < 0 or f.max() > 1:
            raise ValueError("decay_check needs 0 <= f <= 1")
        for t in t_grid:
            if t < t0:
                raise ValueError("grid times must be >= t0")
            u = semigroup_apply(g, f, t)
            dt = (semigroup_apply(g, f, t + h) - semigroup_apply(g, f, t - h)) / (2 * h)
            b2 = C2 * math.exp(-theta * t / 2)
            res_dt.append(b2 - np.abs(dt))
            gs = gamma(g, np.sqrt(np.maximum(u, 0.0)))
            b1 = C1 ** 2 * math.exp(-theta * t)
            res_g.append(b1 - gs)
            pw = (0.5 * math.exp(-theta * t) * laplacian(g, u)
                  + c * math.exp(-2 * theta * t) * u / (-math.expm1(-theta * t)))
            res_pw.append(pw - gs)
            rows.append((str(i), float(t), float(np.abs(dt).max()), b2,
                         float((b2 - np.abs(dt)).min())))
    all_res = np.concatenate(res_dt + res_g) if res_dt else []
    return make_report("decay", {"n": profile.n, "K": profile.K, "theta": theta, "t0": t0},
                       all_res, tol,
                       constants={"C1": C1, "C2": C2, "C2_over_C1": C2 / C1, "D_mu": D_mu,
                                  "time_derivative_min": float(np.min(np.concatenate(res_dt))),
                                  "gradient_min": float(np.min(np.concatenate(res_g))),
                                  "pointwise_min": float(np.min(np.concatenate(res_pw)))},
                       rows=rows)


def global_kernel_bound(g, profile, t_grid, tol=1e-12):
    """Residual ``(1 - e^{-theta t})^{-n} - p(t, x, y)`` over all pairs.

    ``theta`` is ``profile.theta`` (default ``2K/3``). ``g`` is renormalized
    to a probability measure when needed, with ``K`` read as already
    referring to that measure.
    """
    notes = []
    Z = 1.0
    if not _is_probability(g):
        g, Z = normalize_probability(g)
        notes.append(f"measure renormalized by {Z:g}")
    sk = spectral_kernel(g)
    res, rows = [], []
    for t in t_grid:
        bound = -profile.n * math.log(-math.expm1(-profile.theta * t))
        P = sk.matrix(t)
        r = math.exp(bound) - P if bound < 700 else np.full_like(P, np.inf)
        res.append(r.ravel())
        rows.append(("all", float(t), float(P.max()), math.exp(min(bound, 700)),
                     float(r.min())))
    tmax = max(t_grid)
    limit = sk.matrix(tmax)
    gap = float(sk.eigenvalues[1]) if len(sk) > 1 else math.inf
    return make_report("global-kernel", {"n": profile.n, "K": profile.K, "theta": profile.theta,
                                         "Z": Z}, np.concatenate(res), tol,
                       constants={"limit_min": float(limit.min()), "limit_max": float(limit.max()),
                                  "spectral_gap": gap, "measure_total": 1.0,
                                  "measure_finite": True,
                                  "limit_positive": bool(limit.min() > 0)},
                       diagnostics=notes, rows=rows)


# ---------------------------------------------------------------------------
# diameter bounds


def phi_quadrature(n, K, theta=None):
    """``sqrt(2) int_0^inf Phi(x^2)/x^2 dx`` with ``x = tan u``."""
    prof = LsiProfile(n, K, theta)

    def integrand(u):
        if u <= 0.0:
            return 0.0
        x = math.tan(u)
        return float(prof.phi(x * x)) / (x * x) / math.cos(u) ** 2

    val, err = integrate.quad(integrand, 0.0, math.pi / 2, epsabs=1e-9, epsrel=1e-10,
                              limit=500)
    return math.sqrt(2.0) * val, err


def diameter_bounds(n, K, D_mu, theta=None):
    """Closed-form diameter bounds and the quadrature cross-check.

    ``D~ <= sqrt(2) * 4 pi sqrt(n/theta)`` (``= 4 sqrt(3) pi sqrt(n/K)`` at
    ``theta = 2K/3``) and ``D <= 2 pi sqrt(6 D_mu n / K)``.
    """
    if not K > 0:
        raise ValueError("K must be positive")
    prof = LsiProfile(n, K, theta)
    closed = math.sqrt(2.0) * 4 * math.pi * math.sqrt(n / prof.theta)
    quad, err = phi_quadrature(n, K, theta)
    return MetricReport(bound_values={
        "canonical_diameter_bound": closed,
        "canonical_diameter_closed_form": 4 * math.sqrt(3) * math.pi * math.sqrt(n / K),
        "hop_diameter_bound": 2 * math.pi * math.sqrt(6 * D_mu * n / K),
        "quadrature": quad, "quadrature_error": err,
        "quadrature_relative_gap": abs(quad - closed) / closed})
