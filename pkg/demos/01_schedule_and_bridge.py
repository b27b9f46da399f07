"""
The variance clock and the bridge marginal
===========================================

The forward process has no drift, only noise.  Its variance grows as the
integral of a linear rate, and pinning both ends (clean target at t=0, source
clip at t=1) gives a Gaussian bridge with closed-form coefficients.
"""

import numpy as np

from vpbridge import NoiseSchedule, coefficients_at, interpolate, simulate_forward_bridge

s = NoiseSchedule()  # beta from 0.01 to 50, normalized so sigma_1^2 = 1
print("raw sigma_1^2 =", s.raw_sigma1_sq)

# a pulls toward the target, b toward the source, c is the noise scale
for t in (0.0, 0.1, 0.25, 0.5, 0.75, 0.9, 1.0):
    k = coefficients_at(s, t)
    print(f"t={t:4.2f}  a={k.a:.4f}  b={k.b:.4f}  c={k.c:.4f}  a+b={k.a + k.b:.1f}")

# a single sample of the marginal
rng = np.random.default_rng(0)
z_tgt, z_src = np.zeros(5), np.ones(5)
print("z_0.5 =", interpolate(z_tgt, z_src, 0.5, rng.standard_normal(5), s))

# Euler-Maruyama paths of the pinned SDE land on the same marginal
n = 20_000
(state,) = simulate_forward_bridge(np.full(n, -1.0), 2.0, 500, s, seed=0, record_at=[0.5])
k = coefficients_at(s, 0.5)
print(f"simulated mean {state.z.mean():+.4f} vs {k.a * -1 + k.b * 2:+.4f}")
print(f"simulated std  {state.z.std():.4f} vs {k.c:.4f}")
