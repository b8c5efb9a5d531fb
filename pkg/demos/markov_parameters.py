"""
Impulse responses of the average system
=======================================

The Markov parameters of the average system are binomial mixtures of the
synchronous ones. The mixing matrix is triangular with diagonal ``p^i``,
so it is always invertible, but for small ``p`` undoing it in floating
point amplifies round-off quickly.
"""

import numpy as np

import asynclti
from asynclti.markov import apply_T

rng = np.random.default_rng(0)
system = asynclti.LtiSystem(rng.standard_normal((3, 3)) / np.sqrt(3), rng.standard_normal((3, 1)))
K = 8

G = asynclti.markov_parameters(system, K)
for p in (0.9, 0.5, 0.2):
    Gbar = apply_T(G, p)
    direct = asynclti.averaged_markov_parameters(system, p, K)
    back = asynclti.recover_markov_parameters(Gbar, p)
    cond = np.linalg.cond(asynclti.build_T(p, K))
    print(f"p={p}: |Gbar - direct| = {np.abs(Gbar.G - direct.G).max():.1e}, "
          f"cond(T) = {cond:.1e}, round-trip error = {np.abs(back.G - G.G).max():.1e}")

# the first column of each block, side by side
p = 0.5
Gbar = asynclti.averaged_markov_parameters(system, p, K)
print("\n k   H_k[:,0] (synchronous)        Hbar_k[:,0] (p=0.5)")
for k in range(K):
    print(f"{k + 1:2d}  {np.array2string(G.blocks[k, :, 0], precision=3):28s}  "
          f"{np.array2string(Gbar.blocks[k, :, 0], precision=3)}")

# past the conditioning limit recovery refuses rather than returning noise
try:
    asynclti.recover_markov_parameters(apply_T(asynclti.markov_parameters(system, 30), 0.1), 0.1)
except asynclti.IllConditioned as exc:
    print("\nK=30, p=0.1:", exc)
