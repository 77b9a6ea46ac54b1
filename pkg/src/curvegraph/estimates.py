"""
Residual checkers and constant fitters for heat-kernel inequalities.

Every checker returns an :class:`EstimateReport`. One-sided inequalities are
written as ``residual = rhs - lhs`` (or ``lhs - rhs`` for lower bounds) so
that a valid inequality always has ``residual >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, linalg, special
from scipy.sparse import csgraph

from .graph import GraphError, alpha_max, ball
from .graph import d_mu as graph_d_mu
from .heat import (discrete_kernel_matrix, semigroup_apply, spectral_kernel,
                   transition_matrix)
from .operators import gamma, gamma2_tilde, laplacian

FD_STEP = 1e-4


@dataclass
class EstimateReport:
    """Outcome of an inequality check.

    ``rows`` holds per-sample ``(key, t, lhs, rhs, residual)`` records for
    CSV export; they are not part of the JSON form.
    """

    kind: str
    params: dict
    residual_min: float
    residual_max: float
    residual_mean: float
    constants: dict
    samples: int
    passed: bool
    tolerance: float
    diagnostics: list = field(default_factory=list)
    rows: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "kind": self.kind,
            "params": self.params,
            "residuals": {"min": self.residual_min, "max": self.residual_max,
                          "mean": self.residual_mean},
            "constants": self.constants,
            "samples": self.samples,
            "tolerance": self.tolerance,
            "pass": self.passed,
            "diagnostics": list(self.diagnostics),
        }


def make_report(kind, params, residuals, tol, constants=None, diagnostics=None,
                rows=None, passed=None):
    """Assemble a report; ``pass`` defaults to ``min(residuals) >= -tol``."""
    r = np.asarray(residuals, dtype=float).ravel()
    finite = r[np.isfinite(r)]
    if r.size:
        rmin, rmax = float(np.min(r)), float(np.max(r))
        rmean = float(finite.mean()) if finite.size else float("nan")
    else:
        rmin = rmax = rmean = float("nan")
    ok = bool(r.size == 0 or rmin >= -tol) if passed is None else bool(passed)
    return EstimateReport(kind=kind, params=params, residual_min=rmin, residual_max=rmax,
                          residual_mean=rmean, constants=constants or {}, samples=int(r.size),
                          passed=ok, tolerance=tol, diagnostics=list(diagnostics or []),
                          rows=rows or [])


def _positive(f):
    f = np.asarray(f, dtype=float)
    if not np.all(np.isfinite(f)) or np.any(f <= 0):
        raise ValueError("function must be finite and strictly positive")
    return f


# ---------------------------------------------------------------------------
# variational inequality


def _phi_parts(g, f, T, t):
    """``u = sqrt(P_{T-t} f)``, ``phi = P_t G(u)`` and ``2 P_t G2~(u)``."""
    u = np.sqrt(semigroup_apply(g, f, T - t))
    phi = semigroup_apply(g, gamma(g, u), t)
    dphi = 2.0 * semigroup_apply(g, gamma2_tilde(g, u), t)
    return u, phi, dphi


def phi_function(g, f, T, t):
    """``phi(t) = P_t G(sqrt(P_{T-t} f))``."""
    return _phi_parts(g, f, T, t)[1]


def variational_check(g, f, T, t_grid, n, K, alpha, alpha_prime, gamma_fn,
                      tol=1e-8, identity_tol=1e-5, h=FD_STEP):
    """Check the derivative identity and the variational inequality.

    Parameters
    ----------
    f : positive array
    T : float
        Final time.
    t_grid : sequence in (0, T)
    n, K : curvature parameters the graph is assumed to satisfy.
    alpha, alpha_prime, gamma_fn : callables of t
        Schedule with ``gamma_fn(t) <= 0``.

    Notes
    -----
    Two checks are reported:

    * identity: ``d/dt phi = 2 P_t G2~(u)`` by central differences
      (``constants['identity_max_error']``);
    * inequality: ``d/dt(alpha phi) >= (alpha' - 4 alpha gamma/n + 2 alpha K) phi
      + (2 alpha gamma/n) L P_T f - (2 alpha gamma^2/n) P_T f``.
    """
    f = _positive(f)
    PTf = semigroup_apply(g, f, T)
    LPTf = laplacian(g, PTf)
    residuals, rows = [], []
    id_err = 0.0
    for t in t_grid:
        if not 0 < t < T:
            raise ValueError("grid times must lie strictly inside (0, T)")
        gm = gamma_fn(t)
        if gm > 0:
            raise ValueError(f"gamma must be nonpositive (gamma({t}) = {gm})")
        _, phi, dphi = _phi_parts(g, f, T, t)
        fd = (phi_function(g, f, T, t + h) - phi_function(g, f, T, t - h)) / (2 * h)
        id_err = max(id_err, float(np.max(np.abs(fd - dphi) / (1.0 + np.abs(dphi)))))
        a, ap = alpha(t), alpha_prime(t)
        lhs = ap * phi + a * dphi
        rhs = ((ap - 4 * a * gm / n + 2 * a * K) * phi + (2 * a * gm / n) * LPTf
               - (2 * a * gm ** 2 / n) * PTf)
        res = lhs - rhs
        residuals.append(res)
        rows += [(g.names[v], float(t), float(lhs[v]), float(rhs[v]), float(res[v]))
                 for v in range(g.n)]
    id_ok = id_err <= identity_tol
    rep = make_report("variational", {"T": T, "n": n, "K": K, "t_grid": list(map(float, t_grid))},
                      np.concatenate(residuals) if residuals else [], tol,
                      constants={"identity_max_error": id_err}, rows=rows)
    if not id_ok:
        rep.passed = False
        rep.diagnostics.append(f"derivative identity error {id_err:.3g} > {identity_tol}")
    return rep


def derivative_identity_error(g, f, T, t, h=FD_STEP):
    """Max relative gap between the central difference of phi and ``2 P_t G2~``."""
    _, _, dphi = _phi_parts(g, f, T, t)
    fd = (phi_function(g, f, T, t + h) - phi_function(g, f, T, t - h)) / (2 * h)
    return float(np.max(np.abs(fd - dphi) / (1.0 + np.abs(dphi))))


def integrated_variational_check(g, f, T, tau, n, tol=1e-8):
    """Integrated form at ``K = 0``:

    ``tau P_T G(sqrt f) - (T + tau) G(sqrt P_T f)
    >= -(T/2) L P_T f - (n/8) log(1 + T/tau) P_T f``.
    """
    f = _positive(f)
    PTf = semigroup_apply(g, f, T)
    lhs = tau * semigroup_apply(g, gamma(g, np.sqrt(f)), T) - (T + tau) * gamma(g, np.sqrt(PTf))
    rhs = -(T / 2) * laplacian(g, PTf) - (n / 8) * math.log1p(T / tau) * PTf
    res = lhs - rhs
    rows = [(g.names[v], float(T), float(lhs[v]), float(rhs[v]), float(res[v]))
            for v in range(g.n)]
    return make_report("variational-integrated", {"T": T, "tau": tau, "n": n}, res, tol,
                       rows=rows)


def integrated_schedule(T, tau, n):
    """Schedule ``alpha = tau + T - t``, ``gamma = -n / (4 (tau + T - t))``."""
    return (lambda t: tau + T - t, lambda t: -1.0,
            lambda t: -n / (4.0 * (tau + T - t)))


# ---------------------------------------------------------------------------
# Li-Yau family


def li_yau_bound(n, K, b, T, PTf, LPTf):
    """Right-hand side of the Li-Yau family at time ``T``."""
    return (0.5 * (1 - 2 * K * T / (2 * b + 1)) * LPTf / PTf
            + 0.5 * n * (b * b / ((2 * b - 1) * T) + K * K * T / (2 * b + 1) - K))


def _weight_ok(K, b, T, samples=257):
    t = np.linspace(0, T, samples)[:-1]
    W = (1 - t / T) ** b
    Wp = -(b / T) * (1 - t / T) ** (b - 1)
    return bool(np.all(Wp <= -K * W + 1e-12))


def li_yau_check(g, f, T, n, K=0.0, b=1.0, tol=1e-9, certified=None):
    """Residual ``bound - G(sqrt(P_T f))/P_T f`` at every vertex.

    Raises
    ------
    ValueError
        ``b <= 1/2``, ``K <= -b/T`` or the weight ``(1 - t/T)^b`` violating
        ``W' <= -K W``.
    """
    f = _positive(f)
    if not b > 0.5:
        raise ValueError("b must exceed 1/2")
    if not K > -b / T:
        raise ValueError("need K > -b/T")
    if not _weight_ok(K, b, T):
        raise ValueError("weight (1 - t/T)^b violates W' <= -K W on [0, T]")
    PTf = semigroup_apply(g, f, T)
    LPTf = laplacian(g, PTf)
    lhs = gamma(g, np.sqrt(PTf)) / PTf
    rhs = li_yau_bound(n, K, b, T, PTf, LPTf)
    res = rhs - lhs
    rows = [(g.names[v], float(T), float(lhs[v]), float(rhs[v]), float(res[v]))
            for v in range(g.n)]
    params = {"T": T, "n": n, "K": K, "b": b}
    if certified is not None:
        params["certified"] = certified
    return make_report("li-yau", params, res, tol, rows=rows)


def li_yau_derivative_form(g, f, t, h=FD_STEP):
    """``G(sqrt u)/u - (d/dt sqrt u)/sqrt u`` with ``u = P_t f``, time derivative by
    central differences. Compared against ``n/(2t)`` by the caller."""
    f = _positive(f)
    u = semigroup_apply(g, f, t)
    su = np.sqrt(u)
    dsu = (np.sqrt(semigroup_apply(g, f, t + h)) - np.sqrt(semigroup_apply(g, f, t - h))) / (2 * h)
    return gamma(g, su) / u - dsu / su


# ---------------------------------------------------------------------------
# Harnack


def harnack_constant_D(g):
    """``mu_max / omega_min``."""
    return float(g.measure.max() / g.omega_min)


def harnack_check(g, n, tuples, D=None, tol=1e-10, certified=None):
    """Residual ``p(s,x,z) (s/t)^n exp(4 D d(y,z)^2/(s-t)) - p(t,x,y)`` per tuple.

    ``tuples`` holds ``(t, s, x, y, z)`` with ``t < s``.
    """
    D = harnack_constant_D(g) if D is None else float(D)
    sk = spectral_kernel(g)
    dist = g.hop_distances
    res, rows = [], []
    for t, s, x, y, z in tuples:
        if not t < s:
            raise ValueError("Harnack needs t < s")
        x, y, z = g.idx(x), g.idx(y), g.idx(z)
        lhs = sk.value(t, x, y)
        expo = n * math.log(s / t) + 4 * D * dist[y, z] ** 2 / (s - t)
        rhs = sk.value(s, x, z) * math.exp(expo) if expo < 700 else math.inf
        res.append(rhs - lhs)
        rows.append((f"{g.names[x]}|{g.names[y]}|{g.names[z]}", float(t), lhs, rhs, rhs - lhs))
    params = {"n": n, "D": D}
    if certified is not None:
        params["certified"] = certified
    return make_report("harnack", params, res, tol, rows=rows)


# ---------------------------------------------------------------------------
# exponential integrability


def G_profile(s, n):
    """``G(s) = (sqrt(1+ns/2) - 1)/2 + (n/8) s log(1 + 2/(sqrt(1+ns/2) - 1))``."""
    s = np.asarray(s, dtype=float)
    q = np.expm1(0.5 * np.log1p(0.5 * n * s))  # sqrt(1 + ns/2) - 1 without cancellation
    return 0.5 * q + (n / 8.0) * s * np.log1p(2.0 / q)


def phi_integral(A, n):
    """``int_{1/A}^inf G(t)/t^2 dt`` by adaptive quadrature."""
    if not A > 0:
        raise ValueError("A must be positive")
    # t = 1/(A w^2) maps the range to (0, 1]; G grows like sqrt(t), so the
    # transformed integrand 2 A w G(1/(A w^2)) stays bounded as w -> 0
    val, err = integrate.quad(lambda w: 2.0 * A * w * float(G_profile(1.0 / (A * w * w), n)),
                              0.0, 1.0, epsabs=1e-13, epsrel=1e-11, limit=400)
    if not np.isfinite(val) or err > 1e-6 * max(1.0, abs(val)):
        raise ArithmeticError(f"quadrature did not converge (err {err:.3g})")
    return val


def lipschitz_constant(r, d_mu):
    """Solve ``lam * C = 1/r`` with ``C = sqrt(D_mu/2) e^lam``; returns ``(lam, C)``."""
    a = math.sqrt(d_mu / 2.0)
    lam = float(np.real(special.lambertw(1.0 / (r * a))))
    return lam, a * math.exp(lam)


def exp_integrability(g, x, r, n, rho_target=0.1, A_grid=None, tol=0.0, certified=None):
    """Lower bound for ``P_{A r^2}(1_{B(x,r)})(x)`` and its measured value.

    The largest grid ``A <= 1`` with ``exp(-2 phi(A)) - exp(-2/C) >= rho_target``
    is selected; the check passes when the measured semigroup mass is at
    least the bound at that ``A``.
    """
    if not r > 0.5:
        raise ValueError("radius must exceed 1/2")
    A_grid = np.geomspace(1e-4, 1.0, 41) if A_grid is None else np.asarray(A_grid, float)
    d_mu = graph_d_mu(g)
    lam, C = lipschitz_constant(r, d_mu)
    tail = math.exp(-2.0 / C)
    chosen, bound = None, None
    for A in sorted(A_grid, reverse=True):
        if A > 1:
            continue
        lb = math.exp(-2.0 * phi_integral(A, n)) - tail
        if lb >= rho_target:
            chosen, bound = float(A), lb
            break
    params = {"x": g.names[g.idx(x)], "r": r, "n": n, "rho_target": rho_target}
    if certified is not None:
        params["certified"] = certified
    consts = {"lambda": lam, "C": C, "D_mu": d_mu}
    if chosen is None:
        return make_report("expint", params, [], tol, constants=consts, passed=False,
                           diagnostics=["no grid A reaches the target rho"])
    B = ball(g, x, r)
    ind = np.zeros(g.n)
    ind[B.members] = 1.0
    measured = float(semigroup_apply(g, ind, chosen * r * r)[g.idx(x)])
    consts.update({"A": chosen, "rho": bound, "measured": measured})
    return make_report("expint", params, [measured - bound], tol, constants=consts,
                       rows=[(params["x"], chosen * r * r, measured, bound, measured - bound)])


# ---------------------------------------------------------------------------
# volume doubling and on-diagonal bounds


def volume_profile(g, x, radii):
    """Ball volumes ``V(x, r)`` for each r (floor convention)."""
    d = g.hop_distances[g.idx(x)]
    mu = g.measure
    return np.array([mu[d <= math.floor(r + 1e-12)].sum() for r in radii])


def doubling_report(g, centers=None, r_max=8.0, tol=1e-9):
    """Doubling constant over half-integer radii and the multi-scale bound.

    ``C = max V(x, 2r)/V(x, r)`` over ``r in {1/2, 1, ..., r_max}``; the
    residuals are ``C (r/s)^{log2 C} V(x, s) - V(x, r)`` for sampled
    ``r >= s`` on the same grid.
    """
    centers = range(g.n) if centers is None else [g.idx(c) for c in centers]
    grid = np.arange(1, int(round(2 * r_max)) + 1) / 2.0
    C = 1.0
    worst = None
    vols = {}
    for x in centers:
        Vr = volume_profile(g, x, grid)
        V2r = volume_profile(g, x, 2 * grid)
        ratio = V2r / Vr
        k = int(np.argmax(ratio))
        if ratio[k] > C:
            C, worst = float(ratio[k]), (g.names[x], float(grid[k]))
        vols[x] = Vr
    expo = math.log(C) / math.log(2) if C > 1 else 0.0
    res, rows = [], []
    for x in centers:
        Vr = vols[x]
        for i, s in enumerate(grid):
            for j in range(i, len(grid)):
                r = grid[j]
                rhs = C * (r / s) ** expo * Vr[i]
                res.append(rhs - Vr[j])
                rows.append((g.names[x], float(r), float(Vr[j]), float(rhs), float(rhs - Vr[j])))
    return make_report("doubling", {"r_max": r_max, "centers": len(list(centers))}, res, tol,
                       constants={"C_doubling": C, "exponent": expo,
                                  "argmax": list(worst) if worst else None},
                       rows=rows)


def cutoff(g, x, r):
    """``h = 1`` on ``B(x, r/2)``, ``0`` off ``B(x, r)``, linear in between."""
    d = g.hop_distances[g.idx(x)].astype(float)
    return np.clip(2.0 - 2.0 * d / r, 0.0, 1.0) * (d <= math.floor(r + 1e-12))


def on_diagonal_bounds(g, x, r, tol=1e-12):
    """Ratios ``p(2r^2,x,x) V(x,r)`` and ``p(4r^2,x,x) V(x,2r)`` and the
    Cauchy-Schwarz step ``(P_{r^2} h(x))^2 <= p(2r^2,x,x) V(x,r)``."""
    if not r > 0.5:
        raise ValueError("radius must exceed 1/2")
    xi = g.idx(x)
    sk = spectral_kernel(g)
    p2 = sk.value(2 * r * r, xi, xi)
    p4 = sk.value(4 * r * r, xi, xi)
    V1, V2 = ball(g, xi, r).volume, ball(g, xi, 2 * r).volume
    h = cutoff(g, xi, r)
    Ph = float(semigroup_apply(g, h, r * r)[xi])
    ind = np.zeros(g.n)
    ind[ball(g, xi, r / 2).members] = 1.0
    Pind = float(semigroup_apply(g, ind, r * r)[xi])
    rhs = p2 * V1
    res = [rhs - Ph ** 2, Ph ** 2 - Pind ** 2]
    return make_report("on-diagonal", {"x": g.names[xi], "r": r}, res, tol,
                       constants={"lower_ratio": p2 * V1, "upper_ratio": p4 * V2,
                                  "P_h": Ph, "P_indicator": Pind},
                       rows=[(g.names[xi], 2 * r * r, Ph ** 2, rhs, rhs - Ph ** 2)])


# ---------------------------------------------------------------------------
# discrete-time kernels


def coefficient_compare(alpha, n, a):
    """Log-domain ``a_k, b_k, c_k = b_k/a_k`` for ``k = 0..n``.

    ``a_k = e^{(alpha-1) n} n^k / k!`` and ``b_k = C(n,k) alpha^{n-k}``.

    Returns
    -------
    dict
        ``k, log_a, log_b, c``, ``c_max`` (over all k) and ``window_min``
        (over ``|k - (1-alpha) n| <= a sqrt(n)``).
    """
    if not 0 < alpha <= 0.25:
        raise ValueError("alpha must lie in (0, 1/4]")
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    n = int(n)
    k = np.arange(n + 1)
    log_a = (alpha - 1) * n + k * math.log(n) - special.gammaln(k + 1)
    log_b = (special.gammaln(n + 1) - special.gammaln(k + 1) - special.gammaln(n - k + 1)
             + (n - k) * math.log(alpha))
    log_c = log_b - log_a
    if np.max(log_c) > 700:
        raise OverflowError(f"c_k overflows for n={n}")
    c = np.exp(log_c)
    win = np.abs(k - (1 - alpha) * n) <= a * math.sqrt(n)
    return {"k": k, "log_a": log_a, "log_b": log_b, "c": c,
            "c_max": float(c.max()), "k_max": int(np.argmax(c)),
            "window_min": float(c[win].min()) if win.any() else float("nan"),
            "window": (int(k[win].min()), int(k[win].max())) if win.any() else None}


def binomial_decomposition(g, alpha, n):
    """``sum_k C(n,k) alpha^{n-k} pbar^k`` with ``pbar = p - alpha I``."""
    P = transition_matrix(g).toarray()
    Pb = P - alpha * np.eye(g.n)
    out = np.zeros_like(P)
    Pk = np.eye(g.n)
    for k in range(n + 1):
        out += special.comb(n, k) * alpha ** (n - k) * Pk
        Pk = Pk @ Pb
    return out


def gaussian_fit(g, n_max, grid=None, tol=1e-12, sources=None):
    """Fit the two-sided discrete Gaussian sandwich.

    Over all ``(x, y, k)`` with ``d(x,y) <= k <= n_max`` the ratio
    ``q = p_k(x,y) V(x, sqrt k) / m(y)`` is compared with ``e^{-c d^2/k}``.
    For each grid exponent the tightest multiplicative constant is exact;
    the exponent is chosen to minimize the mean log-gap.

    ``sources`` restricts ``x`` (all vertices by default); on
    vertex-transitive graphs a single source covers every pair up to
    symmetry.

    A zero kernel value at an eligible triple is reported as the
    ``parity`` diagnostic and fails the report.
    """
    if g.measure_mode != "degree":
        raise GraphError("Gaussian fit uses the degree measure")
    grid = np.linspace(0.0, 4.0, 81) if grid is None else np.asarray(grid, float)
    src = np.arange(g.n) if sources is None else np.array([g.idx(v) for v in sources])
    D = csgraph.shortest_path(g.offdiag, unweighted=True, indices=src).astype(np.int64)
    m = g.degree
    mu = g.measure
    jmax = math.isqrt(n_max)
    vol = np.stack([(mu[None, :] * (D <= j)).sum(axis=1) for j in range(jmax + 1)], axis=1)
    P = transition_matrix(g).tocsc()
    R = np.zeros((src.size, g.n))
    R[np.arange(src.size), src] = 1.0
    logq, dd = [], []
    zeros = 0
    first_zero = None
    for k in range(1, n_max + 1):
        R = np.asarray((P.T @ R.T).T)
        elig = D <= k
        bad = elig & (R <= 0)
        if bad.any():
            zeros += int(bad.sum())
            if first_zero is None:
                a, b = np.argwhere(bad)[0]
                first_zero = (g.names[src[a]], g.names[b], k)
        ok = elig & ~bad
        q = R * vol[:, math.isqrt(k)][:, None] / m[None, :]
        logq.append(np.log(q[ok]))
        dd.append((D[ok] ** 2) / k)
    logq = np.concatenate(logq) if logq else np.zeros(0)
    dd = np.concatenate(dd) if dd else np.zeros(0)
    diagnostics = []
    params = {"n_max": n_max, "sources": int(src.size)}
    alpha = alpha_max(g)
    params["alpha"] = alpha
    if zeros:
        diagnostics.append({"name": "parity", "zero_triples": zeros,
                            "example": list(first_zero),
                            "message": "p_k(x,y) = 0 with d(x,y) <= k"})
    if logq.size == 0:
        return make_report("gaussian", params, [], tol, diagnostics=diagnostics, passed=False)
    # lower: log c_l(C) = min(log q + C d2/k); upper: log C_r(c) = max(log q + c d2/k)
    best_lo, best_hi = None, None
    for c in grid:
        s = logq + c * dd
        lo, hi = s.min(), s.max()
        gap_lo = float(np.mean(s - lo))
        gap_hi = float(np.mean(hi - s))
        if best_lo is None or gap_lo < best_lo[0]:
            best_lo = (gap_lo, float(c), float(lo))
        if best_hi is None or gap_hi < best_hi[0]:
            best_hi = (gap_hi, float(c), float(hi))
    C_l, log_cl = best_lo[1], best_lo[2]
    c_r, log_Cr = best_hi[1], best_hi[2]
    lower_res = logq - (log_cl - C_l * dd)
    upper_res = (log_Cr - c_r * dd) - logq
    covered = float(np.mean((lower_res >= -1e-12) & (upper_res >= -1e-12)))
    consts = {"c_l": math.exp(log_cl), "C_l": C_l, "C_r": math.exp(log_Cr), "c_r": c_r,
              "coverage": covered, "eligible": int(logq.size + zeros)}
    return make_report("gaussian", params, np.concatenate([lower_res, upper_res]), tol,
                       constants=consts, diagnostics=diagnostics,
                       passed=(not zeros) and covered == 1.0)


# ---------------------------------------------------------------------------
# Poincare constant


def poincare_forms(g, x0, r):
    """Mass and energy matrices over ``B(x0, 2r)`` (member order of that ball)."""
    B2 = ball(g, x0, 2 * r)
    B1 = ball(g, x0, r)
    idx = np.asarray(B2.members, dtype=int)
    pos = {int(v): i for i, v in enumerate(idx)}
    k = idx.size
    m = g.degree
    inner = np.array([pos[int(v)] for v in B1.members], dtype=int)
    w = np.zeros(k)
    w[inner] = m[B1.members]
    # centered mass form: sum_B1 m (f - f_B)^2 = f^T (diag(w) - w w^T / sum w) f
    M = np.diag(w) - np.outer(w, w) / w.sum()
    # energy over ordered pairs in B2: 2 f^T (diag(deg_in) - W_in) f
    W = g.offdiag[idx][:, idx].toarray()
    E = 2.0 * (np.diag(W.sum(axis=1)) - W)
    return M, E, idx


def poincare_constant(g, x0, r, tol=0.0):
    """Smallest ``C`` with ``sum_{B(r)} m |f - f_B|^2 <= C r^2 sum_{B(2r)} w (df)^2``.

    Largest generalized eigenvalue of the (mass, energy) pencil on the
    complement of constants, divided by ``r^2``.
    """
    if g.measure_mode != "degree":
        raise GraphError("Poincare constant uses the degree measure")
    M, E, idx = poincare_forms(g, x0, r)
    k = idx.size
    params = {"x0": g.names[g.idx(x0)], "r": r}
    if k == 1:
        return make_report("poincare", params, [], tol, constants={"C_poincare": 0.0})
    # orthonormal basis of the complement of constants
    Q = linalg.null_space(np.ones((1, k)))
    Mq, Eq = Q.T @ M @ Q, Q.T @ E @ Q
    ev = linalg.eigvalsh(Eq)
    if ev[0] <= 1e-12 * max(1.0, ev[-1]):
        return make_report("poincare", params, [], tol, passed=False,
                           diagnostics=["energy form degenerate: ball is not connected"])
    lam = linalg.eigh(Mq, Eq, eigvals_only=True)
    C = float(lam[-1]) / (r * r)
    return make_report("poincare", params, [], tol, constants={"C_poincare": C})
