"""Covariance-evolution operators and mean-square stability.

Vectorization is column-major throughout (``vec(X) = X.reshape(-1, order="F")``)
so that ``vec(M X N^T) = (N kron M) vec(X)``. For the symmetric products used
here (``M = N``) the ordering convention only matters when callers reshape.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import IllConditioned, NotMeanSquareStable, NumericalError, OperatorTooLarge
from .model import AsyncConfig, LtiSystem, NoiseSpec, delay_pmf
from ._io import fmt

log = logging.getLogger(__name__)

#: default cap on the side length of the dense S_h operator
MAX_OPERATOR_DIM = 4096
COND_LIMIT = 1e12


def vec(X):
    return np.asarray(X).reshape(-1, order="F")


def unvec(v, n):
    return np.asarray(v).reshape((n, n), order="F")


def average_system(system: LtiSystem, p: float):
    """Average transition ``pA + (1-p)I`` and input matrix ``pB``."""
    n = system.d_x
    return p * system.A + (1.0 - p) * np.eye(n), p * system.B


def build_J(d_x: int) -> np.ndarray:
    """Diagonal selector with ``J vec(X) = vec(X * I)``."""
    J = np.zeros((d_x * d_x, d_x * d_x))
    idx = np.arange(d_x) * (d_x + 1)
    J[idx, idx] = 1.0
    return J


def phi(X, system: LtiSystem, p: float) -> np.ndarray:
    """Apply the covariance-evolution map without forming its matrix.

    ``phi(X) = Abar X Abar^T + (p - p^2) diag((A - I) X (A - I)^T)``.
    """
    Abar, _ = average_system(system, p)
    D = system.A - np.eye(system.d_x)
    out = Abar @ X @ Abar.T
    out[np.diag_indices_from(out)] += (p - p * p) * np.einsum("ij,jk,ik->i", D, X, D)
    return out


def build_S(system: LtiSystem, p: float) -> np.ndarray:
    """Matrix of :func:`phi` acting on column-major ``vec(X)``."""
    n = system.d_x
    Abar, _ = average_system(system, p)
    D = system.A - np.eye(n)
    S = np.kron(Abar, Abar)
    if p != 1.0:
        sel = np.arange(n) * (n + 1)
        S[sel] += (p - p * p) * np.kron(D, D)[sel]
    return S


def _augmented_moments(system: LtiSystem, config: AsyncConfig):
    """First moment of the random augmented transition and the second moments
    of its random (top) rows.

    Returns ``EA`` of shape ``(D, D)`` and ``M`` of shape ``(d_x, D, D)`` with
    ``M[i] = E[r_i r_i^T]`` for top row ``r_i``.
    """
    A = system.A
    n = system.d_x
    h = int(config.h)
    p = float(config.p)
    D = n * (h + 1)
    pi = delay_pmf(config)

    EA = np.zeros((D, D))
    for r in range(1, h + 1):
        EA[r * n:(r + 1) * n, (r - 1) * n:r * n] = np.eye(n)

    # W[i, tau*n + j] = A[i, j] * pi[tau]: expected updated row before scaling by p
    W = (pi[:, None, None] * A[None, :, :]).transpose(1, 0, 2).reshape(n, D)
    EA[:n] = p * W
    EA[np.arange(n), np.arange(n)] += 1.0 - p

    M = np.empty((n, D, D))
    for i in range(n):
        # distinct source columns use independent delays -> outer product;
        # the same source column shares one delay draw -> diagonal in tau
        Mi = np.outer(W[i], W[i])
        for j in range(n):
            cols = np.arange(h + 1) * n + j
            Mi[np.ix_(cols, cols)] = np.diag(A[i, j] ** 2 * pi)
        Mi *= p
        Mi[i, i] += 1.0 - p
        M[i] = Mi
    return EA, M


def build_S_h(system: LtiSystem, config: AsyncConfig,
              max_dim: int = MAX_OPERATOR_DIM) -> np.ndarray:
    """Second-moment operator ``E[Ã kron Ã]`` of the delayed model.

    ``Ã`` acts on the stacked state ``[x_t; x_{t-1}; ...; x_{t-h}]``. Its
    lower block rows are deterministic shifts; top row ``i`` either copies
    ``(x_t)_i`` (probability ``1-p``) or places ``A[i, j]`` at delay block
    ``k_ij`` with i.i.d. delays. Rows are independent, so the expectation
    factors except on the diagonal row pairs ``(i, i)``, which are filled
    with the exact row second moments.
    """
    n = system.d_x
    D = n * (int(config.h) + 1)
    if D * D > max_dim:
        raise OperatorTooLarge(
            f"S_h would be {D * D}x{D * D}, above the cap of {max_dim}", stage="build_S_h"
        )
    EA, M = _augmented_moments(system, config)
    S = np.kron(EA, EA)
    for i in range(n):
        # row (i, i) of the Kronecker layout; reshape of M[i] matches the
        # column-major vec of the D x D second-moment matrix since M[i] is symmetric
        S[i * D + i] = M[i].reshape(-1)
    return S


def spectral_radius(M) -> float:
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got {M.shape}")
    if not np.all(np.isfinite(M)):
        raise NumericalError("matrix has non-finite entries", stage="spectral_radius")
    if M.size == 0:
        return 0.0
    return float(np.max(np.abs(scipy.linalg.eigvals(M, check_finite=False))))


@dataclass(frozen=True)
class StabilityReport:
    rho: float
    stable: bool
    operator_dim: int
    mode: str  # "randomized" or "delayed"

    def to_dict(self):
        return {"rho": self.rho, "stable": self.stable,
                "operator_dim": self.operator_dim, "mode": self.mode}

    def to_json(self, meta=None) -> str:
        doc = self.to_dict()
        if meta is not None:
            doc = {"meta": meta, **doc}
        return json.dumps(doc, indent=2)


def is_mean_square_stable(system: LtiSystem, config: AsyncConfig,
                          max_dim: int = MAX_OPERATOR_DIM) -> StabilityReport:
    if int(config.h) == 0:
        S, mode = build_S(system, config.p), "randomized"
    else:
        S, mode = build_S_h(system, config, max_dim=max_dim), "delayed"
    rho = spectral_radius(S)
    return StabilityReport(rho=rho, stable=rho < 1.0, operator_dim=S.shape[0], mode=mode)


def _forcing(system: LtiSystem, p: float, noise: NoiseSpec) -> np.ndarray:
    """Constant term of the extended Lyapunov equation."""
    BUB = system.B @ noise.U @ system.B.T
    F = p * p * BUB
    F[np.diag_indices_from(F)] += (p - p * p) * np.diag(BUB) + noise.sigma_w2
    return F


def steady_state_covariance(system: LtiSystem, p: float, noise: NoiseSpec) -> np.ndarray:
    """Stationary ``lim E[x x^T]`` of the randomized system.

    Solves ``(I - S) vec(G) = (p^2 I + (p - p^2) J) vec(B U B^T) + sigma_w2 vec(I)``.
    """
    n = system.d_x
    S = build_S(system, p)
    rho = spectral_radius(S)
    if rho >= 1.0:
        raise NotMeanSquareStable(
            f"system not mean-square stable (rho(S) = {rho:.6g})", stage="steady_state_covariance"
        )
    K = np.eye(n * n) - S
    lu = scipy.linalg.lu_factor(K)
    cond = np.linalg.cond(K)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditioned(f"I - S is singular within tolerance (cond = {cond:.3g})",
                             cond=cond, stage="steady_state_covariance")
    G = unvec(scipy.linalg.lu_solve(lu, vec(_forcing(system, p, noise))), n)
    return 0.5 * (G + G.T)


def extended_lyapunov_residual(Gamma, system: LtiSystem, p: float, noise: NoiseSpec) -> np.ndarray:
    """``Gamma - phi(Gamma) - Bbar U Bbar^T - (1/p - 1) diag(Bbar U Bbar^T) - sigma_w2 I``."""
    Gamma = np.asarray(Gamma, dtype=float)
    return Gamma - phi(Gamma, system, p) - _forcing(system, p, noise)


@dataclass
class StabilityGrid:
    p_values: np.ndarray
    q_values: np.ndarray
    rho: np.ndarray  # shape (len(q_values), len(p_values))
    h: int = 0
    failures: list = field(default_factory=list)

    @property
    def stable(self):
        return self.rho < 1.0

    def rows(self):
        """Cells in q-major order as ``(p, q, rho, stable)``."""
        for iq, q in enumerate(self.q_values):
            for ip, p in enumerate(self.p_values):
                r = self.rho[iq, ip]
                yield p, q, r, bool(r < 1.0)

    def to_csv(self, meta_lines=()) -> str:
        lines = [f"# {m}" for m in meta_lines]
        lines.append("p,q,rho,stable")
        for p, q, r, s in self.rows():
            lines.append(f"{fmt(p)},{fmt(q)},{fmt(r)},{'true' if s else 'false'}")
        return "\n".join(lines) + "\n"


def stability_map(system: LtiSystem, h: int, p_grid, q_grid,
                  max_dim: int = MAX_OPERATOR_DIM) -> StabilityGrid:
    """Spectral radius of ``S_h`` over a ``(p, q)`` grid.

    Failing cells become NaN and are listed in ``failures``.
    """
    p_values = np.sort(np.asarray(p_grid, dtype=float))
    q_values = np.sort(np.asarray(q_grid, dtype=float))
    if p_values.size == 0 or q_values.size == 0:
        raise ValueError("grids must be nonempty")
    rho = np.full((q_values.size, p_values.size), np.nan)
    failures = []
    for iq, q in enumerate(q_values):
        for ip, p in enumerate(p_values):
            try:
                if not (0.0 < p <= 1.0 and 0.0 < q <= 1.0):
                    raise ValueError(f"p={p}, q={q} outside (0,1]")
                rho[iq, ip] = spectral_radius(
                    build_S_h(system, AsyncConfig(p, q, h), max_dim=max_dim))
            except (NumericalError, ValueError) as exc:
                log.warning("stability_map cell p=%g q=%g failed: %s", p, q, exc)
                failures.append((float(p), float(q), str(exc)))
    return StabilityGrid(p_values, q_values, rho, h=int(h), failures=failures)
