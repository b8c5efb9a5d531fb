"""
Converging to a fixed point that the synchronous system never reaches
=====================================================================

A 2-D system whose ``A`` has spectral radius about 1.59 becomes
mean-square stable when each coordinate updates only with probability
``p = 0.3``. Under a constant input and no process noise, an ensemble of
independent runs collapses onto the fixed point of the average system.

Writes ``fixed_point_ensemble.png``.
"""

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

import asynclti
from asynclti.fixtures import P_FIXED_POINT, fixed_point_system

system = fixed_point_system()
p = P_FIXED_POINT
print(f"rho(A) = {asynclti.spectral_radius(system.A):.3f}")
print(f"rho(S) at p={p}: {asynclti.spectral_radius(asynclti.build_S(system, p)):.3f}")

# fixed point of the average system x = Abar x + Bbar u
u = np.array([1.0])
Abar, Bbar = asynclti.average_system(system, p)
x_star = np.linalg.solve(np.eye(2) - Abar, Bbar @ u)
print("fixed point:", x_star)

plan = asynclti.SimulationPlan(
    system, asynclti.AsyncConfig(p), asynclti.NoiseSpec([[1.0]], 1.0), steps=150, seed=2021,
    input_mode="constant", u_const=u, x0_mean=np.zeros(2), x0_cov=4.0 * np.eye(2), noise_free=True,
)
times = np.arange(0, 151, 5)
snaps = asynclti.simulate_ensemble(plan, 300, times)

spread = np.array([snaps.at(t).var(axis=0).sum() for t in times])
bias = np.array([np.linalg.norm(snaps.at(t).mean(axis=0) - x_star) for t in times])
for t, s, b in list(zip(times, spread, bias))[::6]:
    print(f"t={t:4d}  ensemble variance {s:.2e}  |mean - x*| {b:.2e}")

fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 4), constrained_layout=True)
ax1.semilogy(times, spread, label="total variance")
ax1.semilogy(times, bias, label="|mean - x*|")
ax1.set(xlabel="t", title="ensemble statistics")
ax1.legend()
for r in range(20):
    one = asynclti.simulator._run(plan, run=r)
    ax2.plot(one.states[:, 0], one.states[:, 1], lw=0.6, alpha=0.7)
ax2.plot(*x_star, "k*", ms=12)
ax2.set(xlabel="x1", ylabel="x2", title="20 runs")
fig.savefig("fixed_point_ensemble.png", dpi=120)
print("wrote fixed_point_ensemble.png")
