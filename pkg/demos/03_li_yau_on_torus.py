# coding: utf-8

# # Li-Yau and Harnack on a flat torus
#
# Certify a dimension n0 with nonnegative curvature, then check the gradient
# estimate and the Harnack inequality with that n0.

# %%
import numpy as np

from curvegraph.curvature import certify_nonnegative
from curvegraph.estimates import doubling_report, harnack_check, li_yau_check
from curvegraph.graph import torus_graph
from curvegraph.heat import mollify

g = torus_graph(12, "degree")
cert = certify_nonnegative(g, range(2, 17), sample_budget=32)
print("certified n0 =", cert.n0)

# %%
f = mollify(g, "0,0")
for T in (0.25, 1.0, 4.0):
    rep = li_yau_check(g, f, T, cert.n0, certified=cert.certified)
    print(f"T={T:<5} min residual {rep.residual_min:.4f}")

# %%
rng = np.random.default_rng(1)
tuples = []
for _ in range(50):
    t = rng.uniform(0.1, 3)
    tuples.append((t, t + rng.uniform(0.1, 3), *rng.integers(0, g.n, 3)))
print("Harnack min residual", harnack_check(g, cert.n0, tuples).residual_min)

# %% [markdown]
# Volume doubling on a bigger torus: the constant is 5, reached at r = 1/2.

# %%
print(doubling_report(torus_graph(40), centers=["0,0"], r_max=8).constants)
