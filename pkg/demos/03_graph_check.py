"""
Does a peer-to-peer network still converge?
============================================

Without a server each client averages over its neighbourhood.  The graph
Laplacian's spectrum decides whether the disagreement contracts.
"""

import numpy as np

from dpconsensus import MechanismParams, check_convergence_condition
from dpconsensus.analysis import convergence_estimate
from dpconsensus.graph import Graph, complete_graph, path_graph, ring_graph

graphs = {
    "path-10": path_graph(10),
    "ring-10": ring_graph(10),
    "K10": complete_graph(10),
    "two triangles": Graph(6, frozenset({(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)})),
}

# lambda2 > 0 exactly when the graph is connected; a is the contraction rate
for name, g in graphs.items():
    chk = check_convergence_condition(g, 0.5)
    print(f"{name:14s} lambda2={max(chk.lambda2, 0.0):.4f} margin={chk.contraction_margin:+.4f} "
          f"a={chk.a:.4f} converges={chk.holds}")

# average disagreement over 200 noisy runs on the ring
params = MechanismParams.distributed(ring_graph(10), 0.5, c=1.0, q=0.8)
theta0 = np.random.default_rng(0).uniform(0, 1, 10)
est = convergence_estimate(params, theta0, T=150, runs=200, seed=1)
for t in (0, 25, 50, 100, 150):
    print(f"t={t:3d}  E[P]={est.mean_potential[t]:.3e}")
print("recursion bound violated at rounds:", est.bound_violations or "none")
