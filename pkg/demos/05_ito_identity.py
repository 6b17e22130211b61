"""
The time-difference Ito identity on a common driving path
=========================================================

For an Ornstein-Uhlenbeck path the squared difference |u(t) - u(t-h)|^2 is
rebuilt from its forward integral, backward integral and quadratic
variation. Refining the same Brownian path by bridge sampling shows the
discrete residual shrinking like tau.
"""
import numpy as np

from timereg.noise import refine, sample_increments
from timereg.regularity import fit_exponent, ito_identity_check, simulate_scalar_sde

t, h = 0.75, 0.25
M = 128
levels = range(8, 13)
mean_res = np.zeros(len(levels))
for j in range(M):
    inc = sample_increments(1, 2**8, 2.0**-8, seed=j)
    for k, _ in enumerate(levels):
        if k:
            inc = refine(inc, seed=10_000 * j + k)
        path = simulate_scalar_sde(inc.increments[:, 0], inc.tau, theta=1.0)
        mean_res[k] += abs(ito_identity_check(path, t, h).residual) / M

taus = 2.0 ** -np.array(levels, dtype=float)
for tau, r in zip(taus, mean_res):
    print(f"tau = 2^{int(np.log2(tau))}: mean |residual| = {r:.3e}")
print(f"fitted order {fit_exponent(taus, mean_res).beta:.2f}")

# one ledger in full, at the finest level
led = ito_identity_check(path, t, h)
print(f"lhs {led.lhs:.5f} = initial {led.initial:.5f} + forward {led.forward:.5f} "
      f"- backward {led.backward:.5f} + qv {led.quadratic_variation:.5f}  (residual {led.residual:.1e})")
