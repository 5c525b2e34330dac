"""
A private averaging run with a central server
==============================================

Ten clients hold private values.  Each round they send their value plus
Laplace noise whose scale shrinks geometrically, and step toward the
server's average of what it received.
"""

import numpy as np

from dpconsensus import MechanismParams, accuracy_radius, epsilon_bound, run_execution

# sigma is the step size; the noise at round t has scale c * q**t
params = MechanismParams.centralized(10, sigma=0.5, c=1.0, q=0.8)
theta0 = np.random.default_rng(0).uniform(0, 10, 10)

trace = run_execution(theta0, params, T=60, seed=1)
thetas = trace.thetas()

# the spread collapses as the noise dies out
for t in (0, 5, 10, 20, 40, 60):
    print(f"t={t:2d}  spread={np.ptp(thetas[t]):.3e}  mean={thetas[t].mean():.4f}")

# where the clients agreed, compared with where they started
print("start mean :", theta0.mean())
print("agreed on  :", trace.final_theta.mean())

# the price: each client's value is protected at this epsilon ...
print(epsilon_bound(params.sigma, params.c, params.q).to_text())

# ... and the agreed value is within r of the true mean with probability 1 - b
print(accuracy_radius(params, b=0.1, theta0=theta0).to_text())
