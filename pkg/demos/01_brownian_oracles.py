"""
Estimators against closed forms
===============================

Before trusting D(h) and the fractional seminorm on PDE output, run them on
paths whose answers are known: scalar Brownian motion and the line g(t) = t.
"""
import numpy as np

from timereg.noise import derive_seed, standard_normals
from timereg.regularity import diff_quotient, seminorm_estimate, sobolev_seminorm
from timereg.stepper import Trajectory

N, M, alpha = 2048, 2000, 0.25
tau = 1.0 / N

# Brownian paths, one derived seed per path index
paths = []
for j in range(M):
    dW = np.sqrt(tau) * standard_normals(derive_seed(1, j), N)
    paths.append(Trajectory.from_samples(np.concatenate(([0.0], np.cumsum(dW))), tau))

# E|B_t - B_s|^2 = |t - s|, so the seminorm has expectation 2 / ((1 - 2a)(2 - 2a))
est = seminorm_estimate(paths, alpha)
exact = 2 / ((1 - 2 * alpha) * (2 - 2 * alpha))
print(f"Brownian seminorm, alpha={alpha}: {est.value:.4f} +- {est.ci:.4f}  (closed form {exact:.4f})")

# the same increments give D(h) = T - h
for m in (32, 64, 128):
    h, D, ci = diff_quotient(paths, m)
    print(f"  D({h:.5f}) = {D:.4f} +- {ci:.4f}   T - h = {1 - h:.4f}")

# the line: double integral of |t - s|^(1 - 2a) over the unit square
line = Trajectory.from_samples(np.linspace(0.0, 1.0, N + 1), tau)
print(f"linear path seminorm: {sobolev_seminorm(line, alpha):.4f}  (closed form {8 / 15:.4f})")
# the small deficit is the excluded diagonal, which vanishes as tau -> 0
