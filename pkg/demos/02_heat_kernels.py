# coding: utf-8

# # Heat kernels, exhaustion and the Poisson bridge

# %%
import math

from curvegraph.graph import add_loops, complete_graph, random_graph, torus_graph
from curvegraph.heat import heat_kernel, poisson_bridge, walk_kernel_continuous

import numpy as np

# On K2 with unit weights the kernel is (1 - exp(-2t))/2 off the diagonal.
k2 = complete_graph(2)
for t in (0.1, 1.0, 3.0):
    print(t, heat_kernel(k2, 0, 1, t).value, (1 - math.exp(-2 * t)) / 2)

# %% [markdown]
# A large torus stands in for Z^2. Exhausting it with growing balls gives the
# same value as the global spectral kernel, long before the balls wrap.

# %%
big = torus_graph(41)
exact = heat_kernel(big, "0,0", "0,0", 1.0).value
window = heat_kernel(torus_graph(61), "0,0", "0,0", 1.0, tol=1e-12, exhaust=True)
print(f"global {exact:.12f}  exhaustion {window.value:.12f}  radius {window.radius}")

# %% [markdown]
# The Poisson bridge rebuilds the continuous walk kernel from discrete steps.

# %%
rng = np.random.default_rng(0)
g = add_loops(random_graph(rng, 15, p=0.2), 0.7).with_measure("degree")
val, tail = poisson_bridge(g, 0, 4, 1.0)
print(f"bridge {val:.14f}  continuous {walk_kernel_continuous(g, 0, 4, 1.0):.14f}  tail {tail:.1e}")
