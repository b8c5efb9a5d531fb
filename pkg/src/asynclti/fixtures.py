"""Reference systems used by tests, demos and the benchmark."""

import numpy as np

from .model import LtiSystem, NoiseSpec
from .stability import build_S, spectral_radius

#: synchronously unstable, rho(A1) ~ 1.1065
A1 = np.array([
    [0.05, 0.36, 0.39],
    [0.01, -0.37, 0.23],
    [0.23, 0.23, -0.98],
])

#: synchronously stable, rho(A2) ~ 0.9778
A2 = np.array([
    [0.78, -1.45, -1.12],
    [-0.20, -0.25, 0.36],
    [0.49, -0.58, 0.20],
])

# 2-D system with rho(A) ~ 1.59 that is mean-square stable at p = 0.3
# (rho(S) ~ 0.885). Found by a seeded random search over A with entries
# rounded to 0.01.
A_FIXED_POINT = np.array([
    [-0.56, 0.90],
    [1.27, -0.48],
])
B_FIXED_POINT = np.array([[1.0], [0.5]])
P_FIXED_POINT = 0.3

BENCHMARK_SEED = 20210610
BENCHMARK_P = 0.5
BENCHMARK_SIGMA_W2 = 0.01


def benchmark_B(d_u=3, seed=BENCHMARK_SEED):
    """Frozen Gaussian input matrix paired with ``A1`` in the identification benchmark."""
    return np.random.default_rng(seed).standard_normal((A1.shape[0], d_u))


def benchmark_system():
    B = benchmark_B()
    return LtiSystem(A1, B), NoiseSpec(np.eye(B.shape[1]), BENCHMARK_SIGMA_W2)


def fixed_point_system():
    return LtiSystem(A_FIXED_POINT, B_FIXED_POINT)


def random_stable_randomized(rng, d_x=None, d_u=None, rho_max=0.9, p_range=(0.2, 1.0)):
    """Draw ``(system, p, noise)`` with ``rho(S) < rho_max`` by rejection.

    ``A`` has i.i.d. Gaussian entries scaled by ``1/sqrt(d_x)``; ``U`` is a
    random positive definite matrix.
    """
    while True:
        n = int(d_x or rng.integers(2, 5))
        m = int(d_u or rng.integers(1, 4))
        A = rng.standard_normal((n, n)) * (1.3 / np.sqrt(n))
        B = rng.standard_normal((n, m))
        p = float(rng.uniform(*p_range))
        system = LtiSystem(A, B)
        if spectral_radius(build_S(system, p)) < rho_max:
            G = rng.standard_normal((m, m))
            U = G @ G.T / m + 0.5 * np.eye(m)
            return system, p, NoiseSpec(U, float(rng.uniform(0.05, 1.0)))
