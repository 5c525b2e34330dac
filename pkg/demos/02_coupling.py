"""
Why an observer cannot tell two inputs apart
=============================================

Shift client k's starting value by delta.  If we also shift its noise at
round t by delta * (1 - sigma)**t, every message on the wire is the same.
The privacy bound is the log-density cost of that shift.
"""

import numpy as np

from dpconsensus import ClientStreams, MechanismParams, epsilon_bound, inject_noise_sequence
from dpconsensus.analysis import build_coupled_noise, density_ratio_log_bound, verify_coupling
from dpconsensus.mechanism import observe

params = MechanismParams.centralized(5, sigma=0.6, c=2.0, q=0.7)
T, k, delta = 40, 2, 1.5

theta0 = np.array([1.0, 4.0, 2.0, 8.0, 5.0])
theta1 = theta0.copy()
theta1[k] -= delta

eta = ClientStreams(seed=3, n=5).noise(params.schedule, 0, T)
eta_shifted = build_coupled_noise(eta, k, delta, 0.6)

a = observe(inject_noise_sequence(theta0, params, eta))
b = observe(inject_noise_sequence(theta1, params, eta_shifted))
print("largest message difference:", a.max_gap(b))

# in exact rational arithmetic the two observations coincide exactly
res = verify_coupling(theta0, theta1, params, eta, exact=True)
print("exact gap:", res.max_observation_gap)

# the log-density cost converges to epsilon * delta as T grows
eps = epsilon_bound(params.sigma, params.c, params.q).epsilon
for horizon in (1, 5, 20, 100):
    print(f"T={horizon:3d}  log-ratio bound={density_ratio_log_bound(delta, 2.0, 0.7, 0.6, horizon):.6f}")
print("epsilon * delta =", eps * delta)
