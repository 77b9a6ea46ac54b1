"""
Weighted graphs with a vertex measure.

A :class:`WeightedGraph` stores symmetric edge weights (loops allowed on the
diagonal) together with a positive vertex measure ``mu``. Vertex names are
opaque strings mapped to dense indices at construction; every numerical
routine in the package works on those indices.
"""

from __future__ import annotations

import hashlib
import io
import json
import math
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

MEASURE_MODES = ("unit", "degree", "custom")


class GraphError(ValueError):
    """Raised for malformed graph input or invalid graph operations."""


class DisconnectedGraphError(GraphError):
    def __init__(self, components):
        self.components = components
        sizes = [len(c) for c in components]
        super().__init__(f"graph is disconnected: {len(components)} components of sizes {sizes}")


class WeightedGraph:
    """Connected, locally finite weighted graph with vertex measure.

    Parameters
    ----------
    names : sequence of str
        Vertex names, in index order.
    weights : (N, N) array_like or sparse matrix
        Symmetric nonnegative weights. ``weights[x, x] > 0`` declares a loop.
    measure_mode : {"unit", "degree", "custom"}
        ``unit`` sets mu = 1, ``degree`` sets mu = m. ``custom`` requires
        ``measure``.
    measure : array_like, optional
        Explicit vertex measure, only for ``custom`` mode.

    Notes
    -----
    Instances are treated as immutable; derived quantities are cached.
    """

    def __init__(self, names, weights, measure_mode="unit", measure=None):
        names = tuple(str(v) for v in names)
        if len(set(names)) != len(names):
            raise GraphError("vertex names must be unique")
        if not names:
            raise GraphError("graph has no vertices")
        W = sparse.csr_matrix(weights, dtype=float)
        W.eliminate_zeros()
        W.sort_indices()
        n = len(names)
        if W.shape != (n, n):
            raise GraphError(f"weight matrix shape {W.shape} does not match {n} vertices")
        if W.nnz and W.data.min() < 0:
            raise GraphError("weights must be nonnegative")
        if W.nnz and abs(W - W.T).max() > 0:
            raise GraphError("weights must be symmetric")
        if measure_mode not in MEASURE_MODES:
            raise GraphError(f"unknown measure mode {measure_mode!r}")

        self.names = names
        self.index = {v: i for i, v in enumerate(names)}
        self.weights = W
        self.measure_mode = measure_mode
        self.degree = np.asarray(W.sum(axis=1)).ravel()
        if np.any(self.degree <= 0):
            bad = [names[i] for i in np.flatnonzero(self.degree <= 0)]
            raise GraphError(f"vertices without edges: {bad[:10]}")

        if measure_mode == "unit":
            mu = np.ones(n)
        elif measure_mode == "degree":
            mu = self.degree.copy()
        else:
            if measure is None:
                raise GraphError("custom measure mode requires a measure")
            mu = np.asarray(measure, dtype=float)
            if mu.shape != (n,):
                raise GraphError("measure has wrong length")
        if np.any(~np.isfinite(mu)) or np.any(mu <= 0):
            raise GraphError("measure must be finite and strictly positive")
        self.measure = mu

        ncomp, labels = csgraph.connected_components(W, directed=False)
        if ncomp > 1:
            comps = [[names[i] for i in np.flatnonzero(labels == c)] for c in range(ncomp)]
            raise DisconnectedGraphError(comps)

        for arr in (self.degree, self.measure):
            arr.setflags(write=False)

    def __len__(self):
        return len(self.names)

    def __repr__(self):
        return (f"WeightedGraph(n={len(self)}, edges={self.num_edges}, "
                f"loops={int(self.has_loop.sum())}, measure_mode={self.measure_mode!r})")

    @property
    def n(self):
        return len(self.names)

    @cached_property
    def loop_weight(self):
        w = self.weights.diagonal().copy()
        w.setflags(write=False)
        return w

    @cached_property
    def has_loop(self):
        return self.loop_weight > 0

    @cached_property
    def num_edges(self):
        """Number of undirected non-loop edges."""
        return int((self.weights.nnz - np.count_nonzero(self.loop_weight)) // 2)

    @cached_property
    def offdiag(self):
        """Weights with loops removed (CSR)."""
        W = self.weights.tolil(copy=True)
        W.setdiag(0)
        W = W.tocsr()
        W.eliminate_zeros()
        return W

    @cached_property
    def edge_arrays(self):
        """Directed non-loop edge list ``(rows, cols, weights)``; each edge twice."""
        A = self.offdiag.tocoo()
        return A.row, A.col, A.data

    @cached_property
    def neighbors(self):
        """Tuple of index arrays: non-loop neighbours of each vertex."""
        A = self.offdiag
        return tuple(A.indices[A.indptr[i]:A.indptr[i + 1]] for i in range(self.n))

    @cached_property
    def hop_distances(self):
        """All-pairs hop distance matrix (int). Computed on demand."""
        D = csgraph.shortest_path(self.offdiag, unweighted=True, directed=False)
        return D.astype(np.int64)

    @cached_property
    def diameter_bound(self):
        """Twice the eccentricity of vertex 0; at least the hop diameter."""
        d = csgraph.shortest_path(self.offdiag, unweighted=True, indices=[0])
        return int(2 * d.max())

    @cached_property
    def omega_min(self):
        return float(self.weights.data.min())

    @cached_property
    def content_hash(self):
        """SHA-256 over names, weights and measure, independent of index order."""
        h = hashlib.sha256()
        perm = sorted(range(self.n), key=self.names.__getitem__)
        rank = np.empty(self.n, dtype=np.int64)
        rank[perm] = np.arange(self.n)
        coo = self.weights.tocoo()
        row, col = rank[coo.row], rank[coo.col]
        order = np.lexsort((col, row))
        h.update("\n".join(self.names[i] for i in perm).encode())
        h.update(np.ascontiguousarray(row[order], dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(col[order], dtype=np.int64).tobytes())
        h.update(np.ascontiguousarray(coo.data[order], dtype=np.float64).tobytes())
        h.update(np.ascontiguousarray(self.measure[perm], dtype=np.float64).tobytes())
        return h.hexdigest()

    def idx(self, v):
        """Index of vertex ``v`` (name or integer index)."""
        if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
            if 0 <= v < self.n:
                return int(v)
            raise GraphError(f"vertex index {v} out of range")
        try:
            return self.index[str(v)]
        except KeyError:
            raise GraphError(f"unknown vertex {v!r}") from None

    def with_measure(self, measure_mode="unit", measure=None):
        """Same weights under a different measure."""
        return WeightedGraph(self.names, self.weights, measure_mode, measure)

    def dense_weights(self):
        return self.weights.toarray()


@dataclass(frozen=True)
class GraphMetrics:
    d_mu: float
    omega_min: float
    alpha_max: float
    diameter_hops: int


@dataclass(frozen=True)
class Ball:
    """Hop-metric ball ``B(center, radius)``.

    ``members`` are vertex indices sorted by (distance, index); ``interior``
    holds members whose whole neighbourhood lies in the ball and ``boundary``
    the rest.
    """

    center: int
    radius: float
    members: np.ndarray
    distances: np.ndarray
    volume: float
    interior: np.ndarray = field(repr=False)
    boundary: np.ndarray = field(repr=False)

    def __len__(self):
        return len(self.members)

    def __contains__(self, v):
        return int(v) in set(self.members.tolist())


# ---------------------------------------------------------------------------
# construction and ingestion


def from_edges(edges, measure_mode="unit", measure=None, names=None):
    """Build a graph from ``(u, v, w)`` triples.

    Each undirected pair may appear once; ``u == v`` declares a loop.
    ``measure`` may be a mapping name -> value (switches to custom mode).
    """
    edges = list(edges)
    if not edges:
        raise GraphError("empty edge list")
    order = list(names) if names is not None else []
    seen = set(order)
    for u, v, _ in edges:
        for a in (str(u), str(v)):
            if a not in seen:
                seen.add(a)
                order.append(a)
    index = {v: i for i, v in enumerate(order)}
    rows, cols, vals = [], [], []
    pairs = set()
    for u, v, w in edges:
        u, v, w = str(u), str(v), float(w)
        if not (w > 0) or not math.isfinite(w):
            raise GraphError(f"nonpositive weight {w} on edge ({u}, {v})")
        key = (u, v) if u <= v else (v, u)
        if key in pairs:
            raise GraphError(f"duplicate edge ({u}, {v})")
        pairs.add(key)
        i, j = index[u], index[v]
        rows.append(i)
        cols.append(j)
        vals.append(w)
        if i != j:
            rows.append(j)
            cols.append(i)
            vals.append(w)
    n = len(order)
    W = sparse.csr_matrix((vals, (rows, cols)), shape=(n, n))
    if isinstance(measure, dict):
        if measure_mode != "custom":
            base = WeightedGraph(order, W, measure_mode)
            mu = base.measure.copy()
        else:
            mu = np.full(n, np.nan)
        for k, val in measure.items():
            if str(k) not in index:
                raise GraphError(f"measure given for unknown vertex {k!r}")
            mu[index[str(k)]] = float(val)
        if np.any(np.isnan(mu)):
            raise GraphError("custom measure missing for some vertices")
        return WeightedGraph(order, W, "custom", mu)
    return WeightedGraph(order, W, measure_mode, measure)


def parse_edge_records(source):
    """Yield ``(u, v, w)`` from TSV text: ``u<TAB>v<TAB>w``; '#' lines skipped."""
    if isinstance(source, str):
        source = io.StringIO(source)
    for lineno, raw in enumerate(source, 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise GraphError(f"line {lineno}: expected 'u v w', got {raw.rstrip()!r}")
        u, v, w = parts
        try:
            w = float(w)
        except ValueError:
            raise GraphError(f"line {lineno}: weight {w!r} is not a number") from None
        yield u, v, w


def load_graph(source, measure_mode="unit", sidecar=None):
    """Load a graph from an edge-list text stream (or string).

    Parameters
    ----------
    source : file-like or str
        Edge records ``u<TAB>v<TAB>w``. Lines starting with ``#`` are
        comments; ``u == v`` declares a loop.
    measure_mode : {"unit", "degree"}
    sidecar : dict or file-like, optional
        JSON object with key ``"measure"`` mapping vertex -> value; overrides
        mu for the listed vertices.
    """
    edges = list(parse_edge_records(source))
    if not edges:
        raise GraphError("empty input: no edge records")
    measure = None
    if sidecar is not None:
        if not isinstance(sidecar, dict):
            sidecar = json.load(sidecar)
        measure = {str(k): float(v) for k, v in sidecar.get("measure", {}).items()}
    return from_edges(edges, measure_mode, measure)


def load_graph_file(path, measure_mode="unit", sidecar_path=None):
    with open(path, encoding="utf-8") as fh:
        if sidecar_path is None:
            return load_graph(fh, measure_mode)
        with open(sidecar_path, encoding="utf-8") as sc:
            return load_graph(fh, measure_mode, json.load(sc))


def to_edge_list(g):
    """Edge-list TSV text for ``g`` (inverse of :func:`load_graph`)."""
    W = sparse.triu(g.weights).tocoo()
    lines = [f"{g.names[i]}\t{g.names[j]}\t{float(w)!r}" for i, j, w in zip(W.row, W.col, W.data)]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# metrics, balls, exhaustion


def alpha_max(g):
    """Largest alpha with the loop condition, 0 if some vertex has no loop."""
    if not np.all(g.has_loop):
        return 0.0
    # omega_xy >= alpha m(x) for every y ~ x, loops included
    W = g.weights
    row_min = np.minimum.reduceat(W.data, W.indptr[:-1])
    return float(np.min(row_min / g.degree))


def d_mu(g):
    """``max_x m(x)/mu(x)``."""
    return float(np.max(g.degree / g.measure))


def graph_metrics(g):
    D = g.hop_distances
    return GraphMetrics(d_mu=d_mu(g), omega_min=g.omega_min, alpha_max=alpha_max(g),
                        diameter_hops=int(D.max()))


def satisfies_delta(g, alpha):
    """Two-clause test: loops everywhere and omega_xy >= alpha m(x)."""
    if not np.all(g.has_loop):
        return False
    W = g.weights.tocoo()
    return bool(np.all(W.data >= alpha * g.degree[W.row] - 1e-15 * g.degree[W.row]))


def bfs_distances(g, x, limit=None):
    """Hop distances from ``x`` (dict index -> distance), optionally capped."""
    x = g.idx(x)
    dist = {x: 0}
    queue = deque([x])
    nbrs = g.neighbors
    while queue:
        u = queue.popleft()
        du = dist[u]
        if limit is not None and du >= limit:
            continue
        for w in nbrs[u]:
            w = int(w)
            if w not in dist:
                dist[w] = du + 1
                queue.append(w)
    return dist


def interior_of(g, members):
    """Members whose full neighbourhood is contained in ``members``."""
    inside = np.zeros(g.n, dtype=bool)
    inside[np.asarray(members, dtype=int)] = True
    nbrs = g.neighbors
    return np.array([v for v in members if inside[nbrs[v]].all()], dtype=int)


def ball(g, x, r):
    """Closed hop ball ``B(x, r)``; non-integer radii floor."""
    if r < 0:
        raise GraphError("radius must be nonnegative")
    x = g.idx(x)
    k = math.floor(r + 1e-12) if math.isfinite(r) else None
    dist = bfs_distances(g, x, limit=k)
    items = sorted(dist.items(), key=lambda kv: (kv[1], kv[0]))
    members = np.array([v for v, _ in items], dtype=int)
    distances = np.array([d for _, d in items], dtype=int)
    interior = interior_of(g, members)
    boundary = np.setdiff1d(members, interior)
    volume = float(g.measure[members].sum())
    return Ball(center=x, radius=float(r), members=members, distances=distances,
                volume=volume, interior=interior, boundary=boundary)


def volume(g, x, r):
    return ball(g, x, r).volume


def exhaustion(g, x0, max_radius=None):
    """Increasing balls ``B(x0, k)``, k = 1, 2, ..., ending once V is covered."""
    x0 = g.idx(x0)
    dist = bfs_distances(g, x0)
    ecc = max(dist.values())
    kmax = ecc if max_radius is None else min(ecc, max_radius)
    return [ball(g, x0, k) for k in range(1, max(kmax, 1) + 1)]


# ---------------------------------------------------------------------------
# structural transforms and test families


def add_loops(g, weight=1.0):
    """Add (or increase) a loop of the given weight at every vertex."""
    W = g.weights + sparse.identity(g.n, format="csr") * float(weight)
    mu = g.measure if g.measure_mode == "custom" else None
    return WeightedGraph(g.names, W, g.measure_mode, mu)


def cartesian_product(g1, g2, sep=","):
    """Cartesian product; loops combine additively on the diagonal."""
    if g1.measure_mode != g2.measure_mode:
        raise GraphError("measure-mode mismatch in cartesian product")
    n1, n2 = g1.n, g2.n
    I1 = sparse.identity(n1, format="csr")
    I2 = sparse.identity(n2, format="csr")
    W = sparse.kron(g1.weights, I2) + sparse.kron(I1, g2.weights)
    names = [f"{a}{sep}{b}" for a in g1.names for b in g2.names]
    mode = g1.measure_mode
    if mode == "custom":
        return WeightedGraph(names, W, "custom", np.kron(g1.measure, g2.measure))
    return WeightedGraph(names, W, mode)


def relabel(g, mapping):
    """Rename vertices by ``mapping`` (name -> new name); same index order."""
    names = [mapping.get(v, v) for v in g.names]
    mu = g.measure if g.measure_mode == "custom" else None
    return WeightedGraph(names, g.weights, g.measure_mode, mu)


def permute(g, perm):
    """Graph isomorphic to ``g`` with vertex order ``perm``."""
    perm = np.asarray(perm)
    W = g.weights[perm][:, perm]
    mu = g.measure[perm] if g.measure_mode == "custom" else None
    return WeightedGraph([g.names[i] for i in perm], W, g.measure_mode, mu)


def path_graph(n, measure_mode="unit"):
    return from_edges([(i, i + 1, 1.0) for i in range(n - 1)], measure_mode)


def cycle_graph(n, measure_mode="unit"):
    if n < 3:
        raise GraphError("cycle needs at least 3 vertices")
    return from_edges([(i, (i + 1) % n, 1.0) for i in range(n)], measure_mode)


def complete_graph(n, measure_mode="unit"):
    return from_edges([(i, j, 1.0) for i in range(n) for j in range(i + 1, n)], measure_mode)


def torus_graph(side, measure_mode="unit", other=None):
    """Discrete torus ``C_side x C_other`` (square by default)."""
    return cartesian_product(cycle_graph(side, measure_mode),
                             cycle_graph(other or side, measure_mode))


def regular_tree(degree, depth, measure_mode="unit"):
    """Ball of radius ``depth`` in the infinite ``degree``-regular tree."""
    edges = []
    frontier = [0]
    nxt = 1
    for level in range(depth):
        new = []
        for v in frontier:
            kids = degree if v == 0 else degree - 1
            for _ in range(kids):
                edges.append((v, nxt, 1.0))
                new.append(nxt)
                nxt += 1
        frontier = new
    return from_edges(edges, measure_mode)


def star_graph(k, measure_mode="unit"):
    return from_edges([(0, i, 1.0) for i in range(1, k + 1)], measure_mode)


def random_graph(rng, n, p=0.4, weight_range=(0.5, 2.0), loops=False,
                 measure_mode="unit", random_measure=False):
    """Connected random weighted graph (spanning tree plus Erdos-Renyi edges)."""
    edges = {}
    perm = rng.permutation(n)
    for k in range(1, n):
        a, b = int(perm[k]), int(perm[rng.integers(0, k)])
        edges[(min(a, b), max(a, b))] = rng.uniform(*weight_range)
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in edges and rng.random() < p:
                edges[(i, j)] = rng.uniform(*weight_range)
    if loops:
        for i in range(n):
            edges[(i, i)] = rng.uniform(*weight_range)
    triples = [(i, j, w) for (i, j), w in sorted(edges.items())]
    names = [str(i) for i in range(n)]
    if random_measure:
        g = from_edges(triples, "unit", names=names)
        return g.with_measure("custom", rng.uniform(0.5, 2.0, size=n))
    return from_edges(triples, measure_mode, names=names)
