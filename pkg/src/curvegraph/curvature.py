"""
Curvature-dimension residuals and best-constant estimation.

Three flavours are supported at a vertex ``x`` for dimension ``n`` and
curvature ``K``:

* ``CD``:   G2(f) - (Lf)^2/n - K G(f)
* ``CDE``:  G2~(f) - (Lf)^2/n - K G(f), only where Lf(x) < 0
* ``CDE'``: G2~(f) - f(x)^2 (L log f)^2/n - K G(f)

All residuals depend only on ``f`` restricted to the closed 2-ball of ``x``,
so the optimizer works on a :class:`LocalPatch` holding that ball. The best
constant is estimated by minimizing ``residual(f; K=0) / G(f)(x)`` over
positive ``f`` with ``f(x) = 1``; the minimum found is an upper bound on the
true optimal ``K``.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import networkx as nx
import numpy as np
from scipy import optimize

from .graph import bfs_distances
from .operators import (NonPositiveError, gamma, gamma2, gamma2_tilde,
                        laplace_log, laplacian)

FLAVORS = ("CD", "CDE", "CDE'")

_FLAVOR_ALIASES = {
    "cd": "CD", "cde": "CDE", "cde'": "CDE'", "cde_prime": "CDE'", "cdeprime": "CDE'",
    "cde-prime": "CDE'",
}


def normalize_flavor(flavor):
    try:
        return _FLAVOR_ALIASES[str(flavor).lower()]
    except KeyError:
        raise ValueError(f"unknown curvature flavour {flavor!r}; use one of {FLAVORS}") from None


class Inapplicable:
    """Marker returned by :func:`cde_residual` where ``Lf(x) >= 0``."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INAPPLICABLE"

    def __bool__(self):
        return False


INAPPLICABLE = Inapplicable()


# ---------------------------------------------------------------------------
# pointwise residuals on the whole graph


def _needs_2ball(g, x, f):
    f = np.asarray(f, dtype=float)
    x = g.idx(x)
    return x, f


def cd_residual(g, x, n, K, f):
    x, f = _needs_2ball(g, x, f)
    G2 = gamma2(g, f, at=x)
    L = laplacian(g, f, at=x)
    G = gamma(g, f, at=x)
    return G2 - L * L / n - K * G


def cde_residual(g, x, n, K, f):
    """CDE residual, or :data:`INAPPLICABLE` when ``Lf(x) >= 0``."""
    x, f = _needs_2ball(g, x, f)
    L = laplacian(g, f, at=x)
    if not L < 0:
        # the condition imposes nothing at x, but positivity is still required
        gamma2_tilde(g, f, at=x)
        return INAPPLICABLE
    return gamma2_tilde(g, f, at=x) - L * L / n - K * gamma(g, f, at=x)


def cde_prime_residual(g, x, n, K, f):
    x, f = _needs_2ball(g, x, f)
    G2t = gamma2_tilde(g, f, at=x)
    LL = laplace_log(g, f, at=x)
    return G2t - f[x] ** 2 * LL * LL / n - K * gamma(g, f, at=x)


def residual(g, x, n, K, f, flavor="CDE'"):
    flavor = normalize_flavor(flavor)
    if flavor == "CD":
        return cd_residual(g, x, n, K, f)
    if flavor == "CDE":
        return cde_residual(g, x, n, K, f)
    return cde_prime_residual(g, x, n, K, f)


# ---------------------------------------------------------------------------
# local 2-ball patch, batched and complex-safe


class LocalPatch:
    """Closed 2-ball of ``x`` with everything needed to evaluate residuals.

    Local index 0 is ``x``; indices ``1 .. k1-1`` are its neighbours and the
    remaining ones are at distance 2. Functions are arrays of shape
    ``(..., k)``; complex input is supported so that gradients can be taken
    by complex-step differentiation.
    """

    def __init__(self, g, x):
        x = g.idx(x)
        dist = bfs_distances(g, x, limit=2)
        order = sorted(dist, key=lambda v: (dist[v], v))
        self.graph = g
        self.center = x
        self.vertices = np.array(order, dtype=int)
        self.k = len(order)
        self.k1 = sum(1 for v in order if dist[v] <= 1)
        W = g.offdiag[self.vertices][:, self.vertices].toarray()
        self.W1 = W[:self.k1]                # rows: B1, cols: B2
        self.m1 = g.offdiag[self.vertices[:self.k1]].sum(axis=1).A.ravel()
        self.mu1 = g.measure[self.vertices[:self.k1]]
        self.w0 = W[0, :self.k1]             # x's neighbours inside B1
        self.mu0 = g.measure[x]
        self.m0 = self.m1[0]
        self.has_edge = self.k1 > 1

    # -- primitives ------------------------------------------------------
    def lap1(self, F):
        """Laplacian on B1 from values on B2; shape (..., k1)."""
        return (F @ self.W1.T - self.m1 * F[..., :self.k1]) / self.mu1

    def gam1(self, F, H):
        """Gamma(F, H) on B1."""
        F1, H1 = F[..., :self.k1], H[..., :self.k1]
        return ((F * H) @ self.W1.T - F1 * (H @ self.W1.T) - H1 * (F @ self.W1.T)
                + self.m1 * F1 * H1) / (2.0 * self.mu1)

    def lap0(self, A1):
        return (A1 @ self.w0 - self.m0 * A1[..., 0]) / self.mu0

    def gam0(self, A1, B1):
        d_a = A1 - A1[..., :1]
        d_b = B1 - B1[..., :1]
        return ((d_a * d_b) @ self.w0) / (2.0 * self.mu0)

    # -- pieces of the residuals at x --------------------------------------
    def terms(self, F):
        """Dictionary of G, L, G2, G2t, Llog at x for batch ``F``."""
        F = np.asarray(F)
        F1 = F[..., :self.k1]
        L1 = self.lap1(F)
        G1 = self.gam1(F, F)
        G = self.gam0(F1, F1)
        L = L1[..., 0]
        G2 = 0.5 * self.lap0(G1) - self.gam0(F1, L1)
        out = {"G": G, "L": L, "G2": G2}
        if np.iscomplexobj(F) or np.all(np.real(F) > 0):
            G2t = G2 - self.gam0(F1, G1 / F1)
            Llog = self.lap0(np.log(F1))
            out["G2t"] = G2t
            out["Llog"] = Llog
        return out

    def residual0(self, F, n, flavor):
        """Residual at K = 0 together with G(f)(x)."""
        t = self.terms(F)
        F0 = np.asarray(F)[..., 0]
        if flavor == "CD":
            R = t["G2"] - t["L"] ** 2 / n
        elif flavor == "CDE":
            R = t["G2t"] - t["L"] ** 2 / n
        else:
            R = t["G2t"] - F0 ** 2 * t["Llog"] ** 2 / n
        return R, t["G"], t["L"]

    def lift(self, fvals):
        """Full-graph array (nan outside the patch) from local values."""
        out = np.full(self.graph.n, np.nan)
        out[self.vertices] = fvals
        return out

    def signature(self):
        """Rooted weighted patch as a networkx graph, for isomorphism tests."""
        G = nx.Graph()
        g = self.graph
        for i, v in enumerate(self.vertices):
            attrs = {"root": i == 0}
            if i < self.k1:
                attrs["mu"] = round(float(self.mu1[i]), 12)
                attrs["m"] = round(float(self.m1[i]), 12)
            G.add_node(i, **attrs)
        W = g.offdiag[self.vertices][:, self.vertices].tocoo()
        for a, b, w in zip(W.row, W.col, W.data):
            if a < b and (a < self.k1 or b < self.k1):
                G.add_edge(int(a), int(b), w=round(float(w), 12))
        return G


def _patches_isomorphic(p, q):
    if p.k != q.k or p.k1 != q.k1:
        return False
    A, B = p.signature(), q.signature()
    nm = lambda a, b: a == b
    em = lambda a, b: a["w"] == b["w"]
    return nx.is_isomorphic(A, B, node_match=nm, edge_match=em)


# ---------------------------------------------------------------------------
# best-constant estimation


@dataclass(frozen=True)
class CurvatureReport:
    """Outcome of :func:`optimal_K` at one vertex.

    ``K_estimate`` is an upper bound on the optimal curvature constant: the
    witness violates the inequality for every ``K > K_estimate``.
    """

    vertex: str
    n: float
    flavor: str
    K_estimate: float
    witness: dict = field(repr=False)
    residual_at_witness: float = 0.0
    starts_used: int = 0
    converged_fraction: float = 0.0
    grad_norm: float = 0.0

    def to_dict(self):
        return {
            "vertex": self.vertex,
            "flavor": self.flavor,
            "n": self.n,
            "K_estimate": self.K_estimate,
            "K_estimate_kind": "upper bound",
            "residual": self.residual_at_witness,
            "witness": self.witness,
            "telemetry": {"starts_used": self.starts_used,
                          "converged_fraction": self.converged_fraction,
                          "grad_norm": self.grad_norm},
        }


class DegenerateVertexError(ValueError):
    """Gamma(f)(x) vanishes identically (no non-loop edge at x)."""


_GAMMA_FLOOR = 1e-16
_NEIGHBOUR_GAP = 1e-8


def _objective_factory(patch, n, flavor):
    """Ratio objective in log coordinates with complex-step gradients.

    For CDE the gate ``Lf(x) < 0`` is not part of the objective; it is
    returned separately as a constraint ``-Lf(x) - gap >= 0``.
    """
    k = patch.k
    h = 1e-30
    eye = np.eye(k - 1) * 1j * h

    def lift(Gvals):
        return np.exp(np.concatenate([np.zeros(Gvals.shape[:-1] + (1,), dtype=Gvals.dtype),
                                      Gvals], axis=-1))

    def value_batch(Gvals):
        R, Gx, _ = patch.residual0(lift(Gvals), n, flavor)
        return R / Gx, Gx

    def fun(gv):
        J, Gx = value_batch(gv[None, :].astype(float))
        if not np.isfinite(J[0]) or Gx[0] < _GAMMA_FLOOR:
            return 1e6, np.zeros_like(gv)
        Jc, _ = value_batch(gv[None, :] + eye)
        return float(J[0]), np.imag(Jc) / h

    def gate(gv):
        L = patch.lap1(lift(gv[None, :].astype(float)))[..., 0]
        return float(-L[0] - _NEIGHBOUR_GAP)

    def gate_grad(gv):
        L = patch.lap1(lift(gv[None, :] + eye))[..., 0]
        return -np.imag(L) / h

    return fun, value_batch, (gate, gate_grad)


def optimal_K(g, x, n, flavor="CDE'", starts=64, max_iters=500, tol=1e-10,
              seed=0, bound=12.0, sigma=(0.05, 3.0)):
    """Estimate the best curvature constant at ``x`` by multi-start descent.

    Parameters
    ----------
    g : WeightedGraph
    x : vertex
    n : float
        Dimension parameter (> 0).
    flavor : {"CD", "CDE", "CDE'"}
    starts : int
        Number of random starts (log-normal perturbations of the constant
        function).
    max_iters, tol : optimizer controls (L-BFGS-B on the box
        ``|log f| <= bound``).
    seed : int
        Seed for the start points.

    Returns
    -------
    CurvatureReport
    """
    flavor = normalize_flavor(flavor)
    if not n > 0:
        raise ValueError("dimension n must be positive")
    patch = LocalPatch(g, x)
    if not patch.has_edge:
        raise DegenerateVertexError(f"vertex {g.names[patch.center]} has no non-loop edge")
    return _optimize_patch(patch, n, flavor, starts, max_iters, tol, seed, bound, sigma)


def _optimize_patch(patch, n, flavor, starts, max_iters, tol, seed, bound, sigma):
    g = patch.graph
    fun, value_batch, (gate, gate_grad) = _objective_factory(patch, n, flavor)
    rng = np.random.default_rng(seed)
    dim = patch.k - 1
    box = [(-bound, bound)] * dim
    scales = np.exp(np.linspace(np.log(sigma[0]), np.log(sigma[1]), max(starts, 1)))
    best = None
    converged = 0
    for s in range(starts):
        g0 = rng.normal(0.0, scales[s], size=dim)
        g0 = np.clip(g0, -bound, bound)
        if flavor == "CDE":
            with warnings.catch_warnings():
                # SLSQP clips line-search overshoots back into the box itself
                warnings.filterwarnings("ignore", "Values in x were outside bounds")
                res = optimize.minimize(fun, g0, jac=True, method="SLSQP", bounds=box,
                                        constraints=[{"type": "ineq", "fun": gate,
                                                      "jac": gate_grad}],
                                        options={"maxiter": max_iters, "ftol": tol})
        else:
            res = optimize.minimize(fun, g0, jac=True, method="L-BFGS-B", bounds=box,
                                    options={"maxiter": max_iters, "ftol": tol, "gtol": 1e-9})
        if res.success:
            converged += 1
        J, Gx = value_batch(res.x[None, :])
        if not np.isfinite(J[0]) or Gx[0] < _GAMMA_FLOOR:
            continue
        if flavor == "CDE":
            _, _, L = patch.residual0(np.exp(np.r_[0.0, res.x])[None, :], n, flavor)
            if not L[0] < 0:
                continue
        # projected gradient norm as tie-break
        _, grad = fun(res.x)
        free = ~(((res.x <= -bound) & (grad > 0)) | ((res.x >= bound) & (grad < 0)))
        gnorm = float(np.linalg.norm(grad[free]))
        cand = (float(J[0]), gnorm, res.x.copy())
        if best is None or (cand[0], cand[1]) < (best[0], best[1]):
            best = cand
    if best is None:
        raise DegenerateVertexError("no admissible witness found (Gamma(f)(x) vanished)")
    K_est, gnorm, gv = best
    fvals = np.exp(np.r_[0.0, gv])
    witness = {g.names[v]: float(val) for v, val in zip(patch.vertices, fvals)}
    R, Gx, _ = patch.residual0(fvals[None, :], n, flavor)
    resid = float(R[0] - K_est * Gx[0])
    return CurvatureReport(vertex=g.names[patch.center], n=float(n), flavor=flavor,
                           K_estimate=K_est, witness=witness, residual_at_witness=resid,
                           starts_used=starts, converged_fraction=converged / max(starts, 1),
                           grad_norm=gnorm)


def witness_array(g, report):
    """Witness of a report as a full-graph array (nan off the 2-ball)."""
    out = np.full(g.n, np.nan)
    for name, val in report.witness.items():
        out[g.idx(name)] = val
    return out


def ratio_at(g, x, n, f, flavor="CDE'"):
    """``residual(f; K=0) / G(f)(x)`` evaluated through the full-graph operators."""
    flavor = normalize_flavor(flavor)
    G = gamma(g, f, at=x)
    r = residual(g, x, n, 0.0, f, flavor)
    if r is INAPPLICABLE:
        return INAPPLICABLE
    return r / G


class _PatchCache:
    """Reuses results across vertices whose rooted 2-balls are isomorphic."""

    def __init__(self):
        self.entries = []

    def lookup(self, patch):
        for other, value in self.entries:
            if _patches_isomorphic(patch, other):
                return value
        return None

    def store(self, patch, value):
        self.entries.append((patch, value))


def curvature_map(g, n, flavor="CDE'", vertices=None, share_isomorphic=True, **opts):
    """``optimal_K`` at every vertex (or a subset), reusing isomorphic patches."""
    cache = _PatchCache()
    out = {}
    idx = range(g.n) if vertices is None else [g.idx(v) for v in vertices]
    for v in idx:
        patch = LocalPatch(g, v)
        hit = cache.lookup(patch) if share_isomorphic else None
        if hit is not None:
            out[g.names[v]] = hit.K_estimate
            continue
        rep = _optimize_patch(patch, n, normalize_flavor(flavor), opts.get("starts", 64),
                              opts.get("max_iters", 500), opts.get("tol", 1e-10),
                              opts.get("seed", 0), opts.get("bound", 12.0),
                              opts.get("sigma", (0.05, 3.0)))
        cache.store(patch, rep)
        out[g.names[v]] = rep.K_estimate
    return out


@dataclass(frozen=True)
class Certification:
    """Per-vertex smallest grid dimension with empirical CDE'(n, 0)."""

    per_vertex: dict
    n0: float
    n_grid: tuple
    tol: float

    @property
    def certified(self):
        return math.isfinite(self.n0)

    def to_dict(self):
        enc = lambda v: v if math.isfinite(v) else "unbounded"
        return {"per_vertex": {k: enc(v) for k, v in self.per_vertex.items()},
                "n0": enc(self.n0), "n_grid": list(self.n_grid), "tol": self.tol}


def certify_nonnegative(g, n_grid, sample_budget=32, tol=1e-6, seed=0, vertices=None,
                        share_isomorphic=True, K=0.0):
    """Smallest grid ``n`` with empirical ``CDE'(n, K)`` at each vertex.

    ``sample_budget`` is the number of optimizer starts per evaluation.
    Binary search over the grid relies on monotonicity of the CDE'
    residual in ``n``. Vertices where no grid value works map to ``inf``.
    """
    n_grid = tuple(sorted(float(v) for v in n_grid))
    if not n_grid:
        raise ValueError("empty dimension grid")
    cache = _PatchCache()
    per_vertex = {}
    idx = range(g.n) if vertices is None else [g.idx(v) for v in vertices]
    for v in idx:
        patch = LocalPatch(g, v)
        hit = cache.lookup(patch) if share_isomorphic else None
        if hit is not None:
            per_vertex[g.names[v]] = hit
            continue
        if not patch.has_edge:
            n_v = math.inf
        else:
            ok = lambda n: _optimize_patch(patch, n, "CDE'", sample_budget, 500, 1e-12,
                                           seed, 12.0, (0.05, 3.0)).K_estimate >= K - tol
            lo, hi = 0, len(n_grid) - 1
            if not ok(n_grid[hi]):
                n_v = math.inf
            else:
                while lo < hi:
                    mid = (lo + hi) // 2
                    if ok(n_grid[mid]):
                        hi = mid
                    else:
                        lo = mid + 1
                n_v = n_grid[lo]
        cache.store(patch, n_v)
        per_vertex[g.names[v]] = n_v
    n0 = max(per_vertex.values()) if per_vertex else math.inf
    return Certification(per_vertex=per_vertex, n0=n0, n_grid=n_grid, tol=tol)
