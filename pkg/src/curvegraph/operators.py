"""
The mu-Laplacian and the gradient-form calculus.

Vertex functions are plain float arrays indexed like the graph. A function
defined only on part of the graph carries ``nan`` elsewhere; operators
propagate ``nan`` to every vertex whose required neighbourhood touches an
undefined value. Passing ``at=`` asks for specific vertices and raises
:class:`MissingValueError` if any of them cannot be evaluated.

Neighbourhood radius needed per operator: 1 for ``laplacian``, ``gamma`` and
``laplace_log``; 2 for ``gamma2`` and ``gamma2_tilde``.
"""

from __future__ import annotations

import numpy as np

POSITIVITY_FLOOR = 1e-12


class MissingValueError(ValueError):
    """A requested vertex needs function values that are not defined."""


class NonPositiveError(ValueError):
    """An operation needing a strictly positive function got one that is not."""


def vertex_function(g, values, fill=np.nan):
    """Array form of ``values`` (mapping name -> value, or array)."""
    if isinstance(values, dict):
        out = np.full(g.n, fill, dtype=float)
        for k, v in values.items():
            out[g.idx(k)] = float(v)
        return out
    out = np.asarray(values, dtype=float)
    if out.shape != (g.n,):
        raise ValueError(f"function has shape {out.shape}, expected ({g.n},)")
    return out


def restrict(g, f, vertices):
    """Copy of ``f`` with ``nan`` outside ``vertices``."""
    out = np.full(g.n, np.nan)
    idx = np.asarray([g.idx(v) for v in vertices], dtype=int)
    out[idx] = np.asarray(f, dtype=float)[idx]
    return out


def _select(g, out, at, what):
    if at is None:
        return out
    scalar = np.isscalar(at) or isinstance(at, str)
    idx = np.atleast_1d(np.asarray([g.idx(v) for v in np.atleast_1d(at)], dtype=int))
    vals = out[idx]
    if np.any(np.isnan(vals)):
        bad = [g.names[i] for i in idx[np.isnan(vals)]]
        raise MissingValueError(f"{what} needs undefined neighbour values at {bad[:10]}")
    return float(vals[0]) if scalar else vals


def _check_positive(f):
    vals = f[~np.isnan(f)]
    if vals.size == 0:
        raise MissingValueError("function is undefined everywhere")
    floor = POSITIVITY_FLOOR * vals.max()
    if vals.max() <= 0 or np.any(vals < floor):
        raise NonPositiveError(
            f"function must be strictly positive (min {vals.min():.3g}, floor {floor:.3g})")


def averaged_sum(g, h):
    """``(1/mu(x)) sum_{y~x} w_xy h(y)``, loops included."""
    h = np.asarray(h, dtype=float)
    return (g.weights @ h) / g.measure


def laplacian(g, f, at=None):
    """``Lf(x) = (1/mu(x)) sum_{y~x} w_xy (f(y) - f(x))``."""
    f = np.asarray(f, dtype=float)
    r, c, w = g.edge_arrays
    out = np.bincount(r, weights=w * (f[c] - f[r]), minlength=g.n) / g.measure
    # isolated-from-nan vertices keep their value; nan at x itself must also propagate
    out = np.where(np.isnan(f), np.nan, out)
    return _select(g, out, at, "laplacian")


def gamma(g, f, h=None, at=None):
    """Gradient form ``Gamma(f, h)(x) = 1/(2 mu(x)) sum w_xy df dh``."""
    f = np.asarray(f, dtype=float)
    h = f if h is None else np.asarray(h, dtype=float)
    r, c, w = g.edge_arrays
    out = np.bincount(r, weights=w * (f[c] - f[r]) * (h[c] - h[r]), minlength=g.n)
    out = out / (2.0 * g.measure)
    out = np.where(np.isnan(f) | np.isnan(h), np.nan, out)
    return _select(g, out, at, "gamma")


def gamma2(g, f, h=None, at=None):
    """Iterated gradient form: ``2 G2(f,h) = L G(f,h) - G(f, Lh) - G(Lf, h)``."""
    f = np.asarray(f, dtype=float)
    h = f if h is None else np.asarray(h, dtype=float)
    Lf = laplacian(g, f)
    Lh = Lf if h is f else laplacian(g, h)
    out = 0.5 * (laplacian(g, gamma(g, f, h)) - gamma(g, f, Lh) - gamma(g, Lf, h))
    return _select(g, out, at, "gamma2")


def gamma2_tilde(g, f, at=None):
    """``G2(f) - G(f, G(f)/f)`` for strictly positive ``f``."""
    f = np.asarray(f, dtype=float)
    _check_positive(f)
    gf = gamma(g, f)
    out = gamma2(g, f) - gamma(g, f, gf / f)
    return _select(g, out, at, "gamma2_tilde")


def laplace_log(g, f, at=None):
    """Laplacian of ``log f`` for strictly positive ``f``."""
    f = np.asarray(f, dtype=float)
    _check_positive(f)
    with np.errstate(invalid="ignore"):
        out = laplacian(g, np.log(f))
    return _select(g, out, at, "laplace_log")
