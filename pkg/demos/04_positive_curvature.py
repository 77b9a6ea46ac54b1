# coding: utf-8

# # Positive curvature on K5
#
# Renormalize to a probability measure (curvature scales by the total mass),
# then run the kernel bound, the log-Sobolev check and the diameter bounds.

# %%
import numpy as np

from curvegraph.curvature import optimal_K
from curvegraph.graph import complete_graph, d_mu
from curvegraph.positive import (LsiProfile, diameter_bounds, global_kernel_bound, lsi_check,
                                 normalize_probability)

g = complete_graph(5, "degree")
K = optimal_K(g, 0, 16.0, starts=32).K_estimate
gp, Z = normalize_probability(g)
prof = LsiProfile(16.0, K * Z)
print(f"K = {K:.5f}, Z = {Z:g}, renormalized K = {prof.K:.4f}")

# %%
print("kernel bound min residual", global_kernel_bound(gp, prof, np.linspace(0.1, 10, 34)).residual_min)
fs = np.random.default_rng(0).random((200, 5))
print("LSI min residual", lsi_check(gp, fs, prof).residual_min)

# %%
b = diameter_bounds(prof.n, prof.K, d_mu(gp)).bound_values
print("hop diameter 1 <=", round(b["hop_diameter_bound"], 3))
print("canonical diameter <=", round(b["canonical_diameter_bound"], 3))
