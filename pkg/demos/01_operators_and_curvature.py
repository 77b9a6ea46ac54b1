# coding: utf-8

# # Gradient forms and curvature on small graphs
#
# Start with a single edge and a function f = (1, 2). The Laplacian, the
# gradient form and both iterated forms have small hand-checkable values.

# %%
import numpy as np

from curvegraph.curvature import optimal_K
from curvegraph.graph import complete_graph, cycle_graph, from_edges, regular_tree
from curvegraph.operators import gamma, gamma2, gamma2_tilde, laplacian

g = from_edges([("a", "b", 1.0)])
f = np.array([1.0, 2.0])
print("Lf(a)      =", laplacian(g, f, at="a"))
print("Gamma(f)   =", gamma(g, f, at="a"))
print("Gamma2(f)  =", gamma2(g, f, at="a"))
print("Gamma2~(f) =", gamma2_tilde(g, f, at="a"))   # 9/8

# %% [markdown]
# Best curvature constants come from minimizing a ratio over functions on the
# 2-ball of a vertex. Cycles are flat; complete graphs are positively curved.

# %%
for name, h in [("C6", cycle_graph(6, "degree")), ("K5", complete_graph(5, "degree"))]:
    rep = optimal_K(h, 0, 16.0, starts=16)
    print(f"{name}: K(n=16) ~ {rep.K_estimate:.5f}")

# %% [markdown]
# Regular trees are negatively curved. Under the normalized (degree) measure
# the CDE constant at n=2 stays above -d/2.

# %%
for d in (3, 4):
    t = regular_tree(d, 3, "degree")
    rep = optimal_K(t, 0, 2.0, flavor="CDE", starts=16)
    print(f"tree d={d}: K_CDE(2) ~ {rep.K_estimate:.4f}  (-d/2 = {-d / 2})")
