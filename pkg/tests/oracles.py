"""Brute-force reference implementations written straight from the definitions.

Everything here loops over explicit neighbour dictionaries in plain Python,
sharing no code path with the sparse implementation under test.
"""

import math

import numpy as np


def adjacency(g):
    """``{x: {y: w}}`` including loops."""
    W = g.weights.tocoo()
    adj = {x: {} for x in range(g.n)}
    for i, j, w in zip(W.row, W.col, W.data):
        adj[int(i)][int(j)] = float(w)
    return adj


class Brute:
    def __init__(self, g):
        self.adj = adjacency(g)
        self.mu = [float(v) for v in g.measure]
        self.n = g.n

    def lap(self, f):
        return [sum(w * (f[y] - f[x]) for y, w in self.adj[x].items()) / self.mu[x]
                for x in range(self.n)]

    def gam(self, f, h=None):
        h = f if h is None else h
        return [sum(w * (f[y] - f[x]) * (h[y] - h[x]) for y, w in self.adj[x].items())
                / (2 * self.mu[x]) for x in range(self.n)]

    def gam2(self, f):
        # 2 Gamma_2 = Delta Gamma(f) - 2 Gamma(f, Delta f)
        G = self.gam(f)
        LG = self.lap(G)
        GfL = self.gam(f, self.lap(f))
        return [0.5 * LG[x] - GfL[x] for x in range(self.n)]

    def gam2_tilde(self, f):
        G = self.gam(f)
        q = [G[x] / f[x] for x in range(self.n)]
        cross = self.gam(f, q)
        g2 = self.gam2(f)
        return [g2[x] - cross[x] for x in range(self.n)]

    def lap_log(self, f):
        return self.lap([math.log(v) for v in f])


def dense_kernel(g, t):
    """``p(t, x, y)`` from a dense matrix exponential of the mu-Laplacian."""
    from scipy.linalg import expm
    W = g.weights.toarray()
    mu = np.asarray(g.measure, dtype=float)
    L = (W - np.diag(W.sum(axis=1))) / mu[:, None]
    return expm(t * L) / mu[None, :]


def relerr(a, b):
    a, b = np.asarray(a, float), np.asarray(b, float)
    scale = np.maximum(1.0, np.maximum(np.abs(a), np.abs(b)))
    return float(np.max(np.abs(a - b) / scale))
