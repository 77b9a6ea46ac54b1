"""
Heat kernels, the heat semigroup and the discrete-time walk kernel.

Continuous-time kernels come from a dense symmetric eigensolve. On a finite
domain ``U`` with interior ``I`` the Dirichlet Laplacian is

    (L_U f)(x) = (1/mu(x)) sum_y w_xy (f(y) - f(x)),   x in I, f = 0 off I,

and conjugating by ``sqrt(mu)`` makes ``-L_U`` symmetric. With eigenpairs
``(lam_i, phi_i)`` orthonormal under the mu-inner product,

    p_U(t, x, y) = sum_i exp(-lam_i t) phi_i(x) phi_i(y),

so ``P_t f(x) = sum_y mu(y) p(t, x, y) f(y)``. When the domain is the whole
finite graph the spectrum includes 0 and the kernel is the global one.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg, sparse, special, stats

from .graph import Ball, GraphError, WeightedGraph, ball, d_mu, satisfies_delta

MONOTONICITY_SLACK = 1e-12


class ConvergenceError(RuntimeError):
    """Exhaustion did not settle within the radius budget."""

    def __init__(self, message, radius, delta):
        super().__init__(message)
        self.radius = radius
        self.delta = delta


@dataclass(frozen=True)
class SpectralKernel:
    """Eigen-decomposition of ``-L`` on a finite domain.

    Attributes
    ----------
    domain : ndarray of int
        Graph indices of the domain vertices (row order of ``eigenfunctions``).
    eigenvalues : ndarray
        Nondecreasing eigenvalues of ``-L_U``.
    eigenfunctions : ndarray
        Columns orthonormal under the mu-inner product on the domain.
    measure : ndarray
        mu restricted to the domain.
    dirichlet : bool
        False when the domain is the whole graph (global kernel).
    """

    domain: np.ndarray
    eigenvalues: np.ndarray
    eigenfunctions: np.ndarray = field(repr=False)
    measure: np.ndarray = field(repr=False)
    dirichlet: bool = True

    def __len__(self):
        return len(self.domain)

    @property
    def position(self):
        return {int(v): i for i, v in enumerate(self.domain)}

    def matrix(self, t):
        """``p_U(t, x, y)`` for all domain pairs (domain order)."""
        if t < 0:
            raise ValueError("time must be nonnegative")
        Phi = self.eigenfunctions
        return (Phi * np.exp(-self.eigenvalues * t)) @ Phi.T

    def value(self, t, x, y):
        """Kernel at graph indices ``x, y``; zero if either is off the domain."""
        pos = self.position
        if x not in pos or y not in pos:
            return 0.0
        Phi = self.eigenfunctions
        return float(np.sum(np.exp(-self.eigenvalues * t) * Phi[pos[x]] * Phi[pos[y]]))

    def apply(self, f, t):
        """``P_t f`` on the domain, ``f`` given on the domain (or a batch as columns)."""
        f = np.asarray(f, dtype=float)
        Phi = self.eigenfunctions
        mf = f * (self.measure if f.ndim == 1 else self.measure[:, None])
        coef = Phi.T @ mf
        decay = np.exp(-self.eigenvalues * t)
        return Phi @ (coef * (decay if f.ndim == 1 else decay[:, None]))

    def time_derivative(self, f, t, order=1):
        """``d^k/dt^k P_t f`` computed spectrally."""
        f = np.asarray(f, dtype=float)
        Phi = self.eigenfunctions
        coef = Phi.T @ (f * self.measure)
        lam = self.eigenvalues
        return Phi @ (coef * (-lam) ** order * np.exp(-lam * t))

    def laplacian_matrix(self):
        """Reconstructed ``L_U`` on the domain (mu-weighted)."""
        Phi = self.eigenfunctions
        return -(Phi * self.eigenvalues) @ (Phi.T * self.measure)


_MEMO = OrderedDict()
_MEMO_SIZE = 16


def _domain_indices(g, domain):
    if domain is None:
        return np.arange(g.n)
    if isinstance(domain, Ball):
        idx = np.asarray(domain.interior, dtype=int)
    else:
        idx = np.asarray([g.idx(v) for v in domain], dtype=int)
    if idx.size == 0:
        raise GraphError("domain has empty interior")
    return np.unique(idx)


def dirichlet_operator(g, idx):
    """Dense ``-L_U`` on the indices ``idx`` (not symmetrized)."""
    W = g.weights[idx][:, idx].toarray()
    # loops cancel between W and m, so the full weights can be used
    A = np.diag(g.degree[idx]) - W
    return A / g.measure[idx, None]


def spectral_kernel(g, domain=None, cache_dir=None):
    """Eigen-decomposition of the (Dirichlet) Laplacian.

    Parameters
    ----------
    g : WeightedGraph
    domain : Ball, sequence of vertices or None
        A Ball contributes its interior. ``None`` or a domain covering every
        vertex gives the global kernel.
    cache_dir : path, optional
        Directory for an ``.npz`` cache keyed by graph hash and domain.

    Returns
    -------
    SpectralKernel
    """
    idx = _domain_indices(g, domain)
    # domain rows are named, so a reordered copy of the same graph gets its own entry
    rows = "\n".join(g.names[i] for i in idx).encode()
    key = (g.content_hash, hashlib.sha256(rows).hexdigest()[:16])
    if key in _MEMO:
        _MEMO.move_to_end(key)
        return _MEMO[key]
    path = None
    if cache_dir is not None:
        path = os.path.join(os.fspath(cache_dir), f"{key[0][:24]}-{key[1]}.npz")
        if os.path.exists(path):
            data = np.load(path)
            sk = SpectralKernel(idx, data["lam"], data["phi"], g.measure[idx].copy(),
                                bool(data["dirichlet"]))
            _remember(key, sk)
            return sk

    mu = g.measure[idx]
    s = np.sqrt(mu)
    W = g.weights[idx][:, idx].toarray()
    S = (np.diag(g.degree[idx]) - W) / np.outer(s, s)
    S = 0.5 * (S + S.T)
    lam, V = linalg.eigh(S)
    phi = V / s[:, None]
    dirichlet = idx.size < g.n
    if not dirichlet:
        lam[0] = 0.0 if abs(lam[0]) < 1e-10 * max(1.0, abs(lam[-1])) else lam[0]
    sk = SpectralKernel(idx, lam, phi, mu.copy(), dirichlet)
    if path is not None:
        os.makedirs(os.path.dirname(path), exist_ok=True)
        np.savez(path, lam=lam, phi=phi, dirichlet=dirichlet)
    _remember(key, sk)
    return sk


def _remember(key, sk):
    _MEMO[key] = sk
    if len(_MEMO) > _MEMO_SIZE:
        _MEMO.popitem(last=False)


def dirichlet_kernel(g, U, t):
    """Matrix ``p_U(t, ., .)`` over the interior of ``U`` (sorted index order).

    For a ball covering the whole graph this is the global kernel.
    """
    if not t > 0:
        raise ValueError("t must be positive")
    return spectral_kernel(g, U).matrix(t)


@dataclass(frozen=True)
class HeatValue:
    value: float
    radius: int | None
    delta: float
    exact: bool


def heat_kernel(g, x, y, t, tol=1e-8, exhaust=False, max_radius=64, anchor=None):
    """Heat kernel ``p(t, x, y)``.

    On a finite graph the default is the exact global value. With
    ``exhaust=True`` the graph is treated as a window onto an infinite one:
    Dirichlet kernels on balls ``B(anchor, k)`` are computed for growing
    ``k`` until successive values differ by less than ``tol``.

    Returns
    -------
    HeatValue
        ``radius`` is the last ball radius used (None for the global value).

    Raises
    ------
    ConvergenceError
        Budget exhausted before successive values agree.
    RuntimeError
        A decrease between successive balls (contradicts the maximum principle).
    """
    if not t > 0:
        raise ValueError("t must be positive")
    x, y = g.idx(x), g.idx(y)
    if not exhaust:
        return HeatValue(spectral_kernel(g).value(t, x, y), None, 0.0, True)
    a = x if anchor is None else g.idx(anchor)
    prev = None
    delta = math.inf
    for k in range(1, max_radius + 1):
        B = ball(g, a, k)
        sk = spectral_kernel(g, B)
        val = sk.value(t, x, y)
        covered = len(B.interior) == g.n
        if prev is not None:
            if val < prev - MONOTONICITY_SLACK:
                raise RuntimeError(f"exhaustion decreased at radius {k}: {prev} -> {val}")
            delta = val - prev
            if val > 0 and prev > 0 and delta < tol:
                return HeatValue(val, k, delta, covered)
        if covered:
            return HeatValue(val, k, 0.0 if prev is None else delta, True)
        prev = val
    raise ConvergenceError(f"no convergence within radius {max_radius}", max_radius, delta)


def _bounded(g, f):
    f = np.asarray(f, dtype=float)
    if f.shape != (g.n,):
        raise ValueError(f"function has shape {f.shape}, expected ({g.n},)")
    if not np.all(np.isfinite(f)):
        raise ValueError("semigroup needs a finite value at every vertex")
    return f


_SERIES_LIMIT = 2000.0


def _uniformized(g, f, t):
    """``P_t f`` as ``e^{-ct} sum_k (ct)^k/k! Q^k f`` with ``Q = I + L/c >= 0``.

    Every term is entrywise nonnegative for ``f >= 0``, so tiny values far
    from the support keep full relative precision.
    """
    c = d_mu(g)
    Q = sparse.identity(g.n, format="csr") + sparse.diags(1.0 / (c * g.measure)) @ (
        g.weights - sparse.diags(g.degree))
    ct = c * t
    # enough terms for the Poisson tail and to reach every vertex
    K = poisson_terms(ct, 1e-20)[0] + g.diameter_bound + 10
    lct = math.log(ct)
    out = np.zeros_like(f)
    v = f.copy()
    for k in range(K + 1):
        out += math.exp(-ct + k * lct - special.gammaln(k + 1)) * v
        v = Q @ v
    return out


def semigroup_apply(g, f, t, method="auto"):
    """``P_t f`` on a finite graph.

    ``method="series"`` splits ``f`` into positive and negative parts and
    uses a positivity-preserving series (entrywise relative accuracy);
    ``"spectral"`` uses the global eigendecomposition. ``"auto"`` picks the
    series unless ``D_mu t`` is large.
    """
    if t < 0:
        raise ValueError("t must be nonnegative")
    f = _bounded(g, f)
    if t == 0:
        return f.copy()
    if method == "auto":
        method = "series" if float(np.max(g.degree / g.measure)) * t <= _SERIES_LIMIT \
            else "spectral"
    if method == "spectral":
        return spectral_kernel(g).apply(f, t)
    if method != "series":
        raise ValueError(f"unknown method {method!r}")
    pos, neg = np.maximum(f, 0.0), np.maximum(-f, 0.0)
    out = _uniformized(g, pos, t) if pos.any() else np.zeros(g.n)
    if neg.any():
        out = out - _uniformized(g, neg, t)
    return out


def semigroup_derivative(g, f, t, order=1):
    """``d^k/dt^k P_t f``, equal to ``L^k P_t f``."""
    return spectral_kernel(g).time_derivative(_bounded(g, f), t, order)


def mollify(g, x, t=0.01):
    """Point mass at ``x`` smoothed by ``P_t``; strictly positive on connected g."""
    f = np.zeros(g.n)
    f[g.idx(x)] = 1.0
    return semigroup_apply(g, f, t)


# ---------------------------------------------------------------------------
# discrete time


def transition_matrix(g):
    """``p(x, y) = w_xy / m(x)`` as CSR (loops included)."""
    return sparse.diags(1.0 / g.degree) @ g.weights


def discrete_kernel(g, x, n):
    """Row ``p_n(x, .)`` of the n-step walk kernel."""
    if n < 0 or int(n) != n:
        raise ValueError("step count must be a nonnegative integer")
    row = np.zeros(g.n)
    row[g.idx(x)] = 1.0
    PT = transition_matrix(g).T.tocsr()
    for _ in range(int(n)):
        row = PT @ row
    return row


def discrete_kernel_matrix(g, n):
    """Dense ``p_n`` for all pairs."""
    P = transition_matrix(g).toarray()
    return np.linalg.matrix_power(P, int(n))


_MAX_TERMS = 1_000_000


def poisson_terms(t, tol):
    """Smallest ``K`` whose Poisson(t) tail beyond ``K`` is below ``tol``."""
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    guess = stats.poisson.isf(tol, t) if t > 0 else 0.0
    K = int(guess) if np.isfinite(guess) else int(t + 10 * math.sqrt(t) + 20)
    while stats.poisson.sf(K, t) >= tol:
        K += 1
        if K > _MAX_TERMS:
            raise ValueError(f"tolerance {tol} needs more than {_MAX_TERMS} terms")
    return K, float(stats.poisson.sf(K, t))


def poisson_bridge(g, x, y, t, tol=1e-12):
    """``exp(-t) sum_k t^k/k! p_k(x, y)`` truncated with a certified tail.

    Returns
    -------
    value, tail : float
        ``tail`` bounds the neglected mass (each ``p_k <= 1``).
    """
    if g.measure_mode != "degree":
        raise GraphError("the Poisson bridge compares with the degree-mode kernel")
    if not t > 0:
        raise ValueError("t must be positive")
    K, tail = poisson_terms(t, tol)
    yi = g.idx(y)
    row = np.zeros(g.n)
    row[g.idx(x)] = 1.0
    PT = transition_matrix(g).T.tocsr()
    lt = math.log(t)
    total = 0.0
    for k in range(K + 1):
        total += math.exp(-t + k * lt - special.gammaln(k + 1)) * row[yi]
        row = PT @ row
    return total, tail


def walk_kernel_continuous(g, x, y, t):
    """``p(t, x, y) m(y)``, the continuous counterpart of ``p_n`` in degree mode."""
    if g.measure_mode != "degree":
        raise GraphError("defined for degree measure only")
    return spectral_kernel(g).value(t, g.idx(x), g.idx(y)) * g.degree[g.idx(y)]


def submarkov_transform(g, alpha):
    """Reweight so that the loop mass ``alpha m(x)`` is removed.

    ``w'_xx = (w_xx - alpha m(x)) / (1 - alpha)``, ``w'_xy = w_xy / (1 - alpha)``.
    Degrees and the measure are unchanged, so ``L' = L / (1 - alpha)``.
    """
    if not 0 <= alpha < 1:
        raise ValueError("alpha must lie in [0, 1)")
    if alpha > 0 and not satisfies_delta(g, alpha):
        raise GraphError(f"graph does not satisfy the loop condition with alpha={alpha}")
    W = g.weights.tolil(copy=True)
    diag = g.loop_weight - alpha * g.degree
    diag[np.abs(diag) <= 1e-14 * g.degree] = 0.0
    W.setdiag(diag)
    W = W.tocsr() / (1.0 - alpha)
    mu = g.measure.copy() if g.measure_mode == "custom" else None
    return WeightedGraph(g.names, W, g.measure_mode, mu)


# ---------------------------------------------------------------------------
# evolutions with fixed boundary values


def dirichlet_evolution(g, U, u0, times, boundary=None):
    """Heat flow on the interior of ``U`` with boundary values held fixed.

    Parameters
    ----------
    U : Ball
    u0 : array on ``U.members`` (ball order)
    times : sequence of t >= 0
    boundary : array on ``U.boundary`` (sorted order), default zero

    Returns
    -------
    ndarray, shape (len(times), len(U.members))
        Values in ball member order.
    """
    members = np.asarray(U.members, dtype=int)
    u0 = np.asarray(u0, dtype=float)
    interior = np.sort(np.asarray(U.interior, dtype=int))
    bnd = np.sort(np.asarray(U.boundary, dtype=int))
    hb = np.zeros(bnd.size) if boundary is None else np.asarray(boundary, dtype=float)
    pos = {int(v): i for i, v in enumerate(members)}
    ii = np.array([pos[v] for v in interior], dtype=int)
    bi = np.array([pos[v] for v in bnd], dtype=int)
    out = np.empty((len(times), members.size))
    out[:, bi] = hb
    if interior.size == 0:
        out[:, :] = u0
        out[:, bi] = hb
        return out
    # harmonic extension of the boundary data, then decay of the rest
    A = dirichlet_operator(g, interior)
    if bnd.size:
        Wib = g.weights[interior][:, bnd].toarray() / g.measure[interior, None]
        h = np.linalg.solve(A, Wib @ hb)
    else:
        h = np.zeros(interior.size)
    sk = spectral_kernel(g, interior)
    for k, t in enumerate(times):
        out[k, ii] = h + sk.apply(u0[ii] - h, t)
    return out


def write_kernel_csv(path, g, sk, x, times):
    """Kernel slice ``p(t, x, .)`` as CSV with columns (pair, t, p)."""
    x = g.idx(x)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["pair", "t", "p"])
        for t in times:
            for y in sk.domain:
                w.writerow([f"{g.names[x]}|{g.names[y]}", repr(float(t)),
                            repr(sk.value(t, x, int(y)))])
