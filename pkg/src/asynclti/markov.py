"""Markov parameters (impulse response blocks) of the synchronous and averaged systems."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import IllConditioned, ValidationError
from .model import LtiSystem
from .stability import average_system
from ._io import fmt

MAX_K = 64
COND_LIMIT = 1e12


@dataclass(frozen=True)
class MarkovParameters:
    """Blocks ``H_1 .. H_K``, each ``d_x x d_u``, stored as an array ``(K, d_x, d_u)``."""

    blocks: np.ndarray

    def __post_init__(self):
        b = np.array(self.blocks, dtype=float)
        if b.ndim != 3 or b.shape[0] < 1:
            raise ValidationError(f"expected a (K, d_x, d_u) stack with K >= 1, got {b.shape}")
        b.setflags(write=False)
        object.__setattr__(self, "blocks", b)

    @property
    def K(self):
        return self.blocks.shape[0]

    @property
    def G(self) -> np.ndarray:
        """Horizontal concatenation ``[H_1 H_2 ... H_K]``."""
        return np.hstack(list(self.blocks))

    @classmethod
    def from_G(cls, G, d_u):
        G = np.asarray(G, dtype=float)
        K = G.shape[1] // d_u
        return cls(np.stack([G[:, k * d_u:(k + 1) * d_u] for k in range(K)]))

    def to_csv(self, meta_lines=()) -> str:
        lines = [f"# {m}" for m in meta_lines]
        lines.append("k,row,col,value")
        K, n, m = self.blocks.shape
        for k in range(K):
            for r in range(n):
                for c in range(m):
                    lines.append(f"{k + 1},{r + 1},{c + 1},{fmt(self.blocks[k, r, c])}")
        return "\n".join(lines) + "\n"


def _impulse_blocks(A, B, K):
    out = np.empty((K,) + B.shape)
    H = np.array(B, dtype=float)
    for k in range(K):
        out[k] = H
        H = A @ H
    return out


def markov_parameters(system: LtiSystem, K: int) -> MarkovParameters:
    """``H_k = A^(k-1) B`` for ``k = 1..K``."""
    if K < 1:
        raise ValueError("K must be at least 1")
    return MarkovParameters(_impulse_blocks(system.A, system.B, K))


def averaged_markov_parameters(system: LtiSystem, p: float, K: int) -> MarkovParameters:
    if K < 1:
        raise ValueError("K must be at least 1")
    Abar, Bbar = average_system(system, p)
    return MarkovParameters(_impulse_blocks(Abar, Bbar, K))


def build_T(p: float, K: int) -> np.ndarray:
    """Upper-triangular map with ``Gbar = G (T kron I)``.

    ``T[i, j] = C(j-1, i-1) p^i (1-p)^(j-i)`` (1-based, ``j >= i``). Binomials
    come from Pascal's triangle in exact integer arithmetic.
    """
    if not 0.0 < p <= 1.0:
        raise ValueError("p must lie in (0,1]")
    if K < 1:
        raise ValueError("K must be at least 1")
    if K > MAX_K:
        raise ValueError(f"K = {K} exceeds the supported maximum of {MAX_K}")
    T = np.zeros((K, K))
    row = [1]  # binomials C(j, .) for the current column j (0-based)
    for j in range(K):
        if j > 0:
            row = [1] + [row[t - 1] + row[t] for t in range(1, j)] + [1]
        for i in range(j + 1):
            T[i, j] = row[i] * p ** (i + 1) * (1.0 - p) ** (j - i)
    return T


def apply_T(markov: MarkovParameters, p: float) -> MarkovParameters:
    """``G (T kron I_du)``: averaged parameters from synchronous ones."""
    T = build_T(p, markov.K)
    return MarkovParameters(np.einsum("ij,ikl->jkl", T, markov.blocks))


def recover_markov_parameters(averaged: MarkovParameters, p: float) -> MarkovParameters:
    """Invert :func:`apply_T` by triangular substitution.

    Raises :class:`IllConditioned` (with ``cond``) when ``T`` is too
    ill-conditioned for a trustworthy inverse, typically small ``p`` with
    large ``K``.
    """
    K = averaged.K
    T = build_T(p, K)
    cond = np.linalg.cond(T)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditioned(
            f"T(p={p}, K={K}) has condition number {cond:.3g} > {COND_LIMIT:.0e}",
            cond=cond, stage="recover_markov_parameters",
        )
    _, n, m = averaged.blocks.shape
    rhs = averaged.blocks.reshape(K, n * m)
    # Hbar_j = sum_i T[i, j] H_i  <=>  T^T H = Hbar, T^T lower triangular
    H = scipy.linalg.solve_triangular(T.T, rhs, lower=True)
    return MarkovParameters(H.reshape(K, n, m))
