"""
Learning a randomized system from one trajectory
================================================

Identification error of ``(A, B, p, sigma_w2)`` against trajectory length,
averaged over independent trials. Errors fall roughly like ``1/sqrt(T)``.

The default is a quick 20-trial run up to 10^5 steps; pass ``--full`` for
100 trials up to 10^6 (about a minute). Writes ``identification_rate.png``.
"""

import sys

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt

import asynclti
from asynclti.fixtures import BENCHMARK_P, benchmark_system
from asynclti.sysid import QUANTITIES, log_checkpoints

full = "--full" in sys.argv
system, noise = benchmark_system()
print(f"rho(A) = {asynclti.spectral_radius(system.A):.4f} (synchronously unstable)")
print(f"rho(S) at p={BENCHMARK_P}: {asynclti.spectral_radius(asynclti.build_S(system, BENCHMARK_P)):.4f}")

# a single long trajectory first
traj = asynclti.simulate(asynclti.SimulationPlan(system, asynclti.AsyncConfig(BENCHMARK_P), noise,
                                                 steps=200_000, seed=7))
res = asynclti.identify(traj, burn_in=100)
print(f"one trajectory, T=2e5: p_hat={res.p_hat:.4f} sigma_w2_hat={res.sigma_w2_hat:.4f}")
print("A_hat =\n", res.A_hat.round(3))

# sigma_w2 is the small difference of two large traces, so a p error of a
# few 1e-3 moves it by tenths when B U B^T dominates the noise floor
print(f"residual of the Lyapunov fit: {res.diagnostics['lyapunov_residual_fro']:.3g}")

# then the error-versus-T curve
hi, trials = (1_000_000, 100) if full else (100_000, 20)
table = asynclti.benchmark_identification(system, BENCHMARK_P, noise, log_checkpoints(1000, hi), trials,
                                          base_seed=1)
print("mean errors at T=%d:" % table.checkpoints[-1],
      {k: float("%.3g" % v) for k, v in zip(QUANTITIES, table.mean_error[-1])})
print("log-log slopes:", {k: round(v, 3) for k, v in table.slopes().items()})

fig, ax = plt.subplots(figsize=(6, 4), constrained_layout=True)
for q, name in enumerate(QUANTITIES):
    ax.errorbar(table.checkpoints, table.mean_error[:, q], yerr=table.stderr[:, q], label=name, capsize=2)
ax.plot(table.checkpoints, 3.0 * table.checkpoints ** -0.5, "k--", lw=0.8, label="T^-1/2")
ax.set(xscale="log", yscale="log", xlabel="T", ylabel="mean error")
ax.legend()
fig.savefig("identification_rate.png", dpi=120)
print("wrote identification_rate.png")
