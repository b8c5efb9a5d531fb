"""Identification of randomized LTI systems from one input/state trajectory.

Pipeline: sample correlations ``C0, C1`` -> least-squares average system
``[Abar Bbar] = C1 C0^-1`` -> closed-form fit of ``(p, sigma_w2)`` to the
extended Lyapunov equation -> underlying ``(A, B)``.
"""

from __future__ import annotations

import json
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numba
import numpy as np
import scipy.linalg

from .errors import AsyncLtiError, IllConditioned, NumericalError, Unidentifiable, ValidationError
from .model import AsyncConfig, LtiSystem, NoiseSpec, Trajectory
from .simulator import SimulationPlan, _run
from .stability import is_mean_square_stable
from ._io import fmt

log = logging.getLogger(__name__)

COND_LIMIT = 1e12
P_FLOOR = 1e-3
SIGMA_FLOOR = 1e-12
MISMATCH_LABEL = "model-mismatch: q<1 not identifiable by this method"

# ---------------------------------------------------------------------------
# exact, mergeable second-moment sums
#
# Every product is split as mantissa * 2**exponent and the 53-bit integer
# mantissa is added into an int64 bin for its exponent (in two 27-bit halves
# so a bin survives ~2**36 additions). Integer addition is associative, so
# chunked and merged accumulators agree bit-for-bit with a single pass.

_EBIAS = 1100
_NBINS = 2200
_LO_BITS = 26
_LO_MASK = (1 << _LO_BITS) - 1
_SCALE_BITS = 1126  # smallest bin weight is 2**-1126


@numba.njit(cache=True)
def _bin_add(v, hi, lo, c):
    if v == 0.0:
        return
    m, e = math.frexp(v)
    mi = np.int64(m * 9007199254740992.0)
    hi[c, e + _EBIAS] += mi >> _LO_BITS
    lo[c, e + _EBIAS] += mi & _LO_MASK


@numba.njit(cache=True)
def _accumulate(X, U, hi, lo):
    # transition s: z_s = [x_s; u_s], target x_{s+1}
    n = X.shape[1]
    m = U.shape[1]
    k = n + m
    z = np.empty(k)
    for s in range(U.shape[0]):
        for a in range(n):
            z[a] = X[s, a]
        for a in range(m):
            z[n + a] = U[s, a]
        c = 0
        for a in range(k):
            for b in range(a, k):
                _bin_add(z[a] * z[b], hi, lo, c)
                c += 1
        for a in range(n):
            xa = X[s + 1, a]
            for b in range(k):
                _bin_add(xa * z[b], hi, lo, c)
                c += 1


class CorrelationAccumulator:
    """Streaming accumulator for ``C0`` and ``C1``.

    Memory is constant in the trajectory length. Accumulators over disjoint
    stretches of transitions combine with :meth:`merge` (or ``+``) and the
    result is identical to accumulating everything at once.
    """

    def __init__(self, d_x, d_u):
        self.d_x, self.d_u = int(d_x), int(d_u)
        k = self.d_x + self.d_u
        self._ncols = k * (k + 1) // 2 + self.d_x * k
        self._hi = np.zeros((self._ncols, _NBINS), dtype=np.int64)
        self._lo = np.zeros((self._ncols, _NBINS), dtype=np.int64)
        self.count = 0

    def add(self, states, inputs):
        """Add the transitions ``(x_s, u_s) -> x_{s+1}`` for ``s < len(inputs)``."""
        X = np.ascontiguousarray(states, dtype=float)
        U = np.ascontiguousarray(inputs, dtype=float)
        if X.shape[0] != U.shape[0] + 1 or X.shape[1] != self.d_x or U.shape[1] != self.d_u:
            raise ValidationError("states/inputs shapes do not match the accumulator")
        _accumulate(X, U, self._hi, self._lo)
        self.count += U.shape[0]
        return self

    def update(self, trajectory: Trajectory, start=0, stop=None):
        """Add transitions ``start .. stop-1`` of ``trajectory``."""
        stop = trajectory.steps if stop is None else stop
        return self.add(trajectory.states[start:stop + 1], trajectory.inputs[start:stop])

    def merge(self, other: "CorrelationAccumulator") -> "CorrelationAccumulator":
        if (self.d_x, self.d_u) != (other.d_x, other.d_u):
            raise ValidationError("cannot merge accumulators of different dimensions")
        out = CorrelationAccumulator(self.d_x, self.d_u)
        out._hi = self._hi + other._hi
        out._lo = self._lo + other._lo
        out.count = self.count + other.count
        return out

    __add__ = merge

    def _exact_sums(self):
        sums = []
        for c in range(self._ncols):
            bins = np.flatnonzero(self._hi[c] | self._lo[c])
            total = 0
            for b in bins:
                mant = (int(self._hi[c, b]) << _LO_BITS) + int(self._lo[c, b])
                total += mant << (int(b) - _EBIAS - 53 + _SCALE_BITS)
            # int / int true division is correctly rounded
            sums.append(total / (1 << _SCALE_BITS))
        return sums

    def correlations(self) -> "CorrelationPair":
        if self.count < 1:
            raise ValidationError("no transitions accumulated (empty effective range)")
        n, k = self.d_x, self.d_x + self.d_u
        sums = iter(self._exact_sums())
        C0 = np.empty((k, k))
        for a in range(k):
            for b in range(a, k):
                C0[a, b] = C0[b, a] = next(sums)
        C1 = np.empty((n, k))
        for a in range(n):
            for b in range(k):
                C1[a, b] = next(sums)
        return CorrelationPair(C0 / self.count, C1 / self.count, self.count)


@dataclass(frozen=True)
class CorrelationPair:
    C0: np.ndarray  # (d_x+d_u, d_x+d_u)
    C1: np.ndarray  # (d_x, d_x+d_u)
    samples: int

    @property
    def d_x(self):
        return self.C1.shape[0]

    @property
    def E(self):
        """Selector ``[I 0]`` picking the state block."""
        return np.eye(self.d_x, self.C0.shape[0])

    @classmethod
    def population(cls, Gamma, U, Abar, Bbar, samples=1):
        """Expected correlations ``blockdiag(Gamma, U)`` and ``[Abar Gamma, Bbar U]``."""
        C0 = scipy.linalg.block_diag(Gamma, U)
        C1 = np.hstack([Abar @ Gamma, Bbar @ U])
        return cls(C0, C1, samples)


def accumulate_correlations(trajectory: Trajectory, burn_in=0) -> CorrelationPair:
    """Average ``z_t z_t^T`` and ``x_{t+1} z_t^T`` over transitions ``t >= burn_in``.

    Normalization is by the number of transitions actually summed.
    """
    if burn_in < 0 or burn_in >= trajectory.steps:
        raise ValidationError(
            f"burn_in={burn_in} leaves no transitions in a trajectory of {trajectory.steps} steps")
    acc = CorrelationAccumulator(trajectory.states.shape[1], trajectory.inputs.shape[1])
    return acc.update(trajectory, start=burn_in).correlations()


def _solve_C0(corr: CorrelationPair, ridge=None):
    C0 = corr.C0
    if ridge is not None:
        C0 = C0 + ridge * np.eye(C0.shape[0])
    cond = np.linalg.cond(C0)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise IllConditioned(f"singular C0 (condition number {cond:.3g})", cond=cond,
                             stage="estimate_average_system")
    try:
        theta = scipy.linalg.solve(C0, corr.C1.T, assume_a="pos").T
    except np.linalg.LinAlgError:
        theta = scipy.linalg.solve(C0, corr.C1.T, assume_a="sym").T
    return theta, cond


def estimate_average_system(corr: CorrelationPair, ridge=None):
    """Least-squares ``[Abar Bbar] = C1 C0^-1`` split into its two blocks.

    ``ridge`` (off by default) adds ``ridge * I`` to ``C0`` before solving;
    it biases the estimate and should be reported alongside the result.
    """
    theta, _ = _solve_C0(corr, ridge)
    return theta[:, :corr.d_x], theta[:, corr.d_x:]


def compute_M_matrices(corr: CorrelationPair, ridge=None, _theta=None):
    """Coefficient matrices of the extended Lyapunov fit.

    ``M2 = ((Theta - E) C0 (Theta - E)^T) * I`` and
    ``M1 = E C0 E^T - Theta C0 Theta^T + M2`` with ``Theta = C1 C0^-1``.
    """
    theta = _solve_C0(corr, ridge)[0] if _theta is None else _theta
    E = corr.E
    D = theta - E
    M2 = np.diag(np.einsum("ij,jk,ik->i", D, corr.C0, D))
    # C1 C0^-1 C1^T, symmetrized against round-off
    Q = theta @ corr.C1.T
    M1 = E @ corr.C0 @ E.T - 0.5 * (Q + Q.T) + M2
    return M1, M2


class PSigmaEstimate(NamedTuple):
    p_hat_raw: float
    p_hat: float
    sigma_w2_hat: float
    sigma_w2_raw: float


def lyapunov_objective(M1, M2, inv_p, sigma_w2):
    """``|| M1 - inv_p M2 - sigma_w2 I ||_F^2``; broadcasts over ``inv_p``/``sigma_w2``."""
    M1 = np.asarray(M1)
    M2 = np.asarray(M2)
    inv_p = np.asarray(inv_p, dtype=float)[..., None, None]
    s = np.asarray(sigma_w2, dtype=float)[..., None, None]
    R = M1 - inv_p * M2 - s * np.eye(M1.shape[0])
    return np.sum(R * R, axis=(-2, -1))


def estimate_p_sigma(M1, M2, d_x) -> PSigmaEstimate:
    """Closed-form minimizer of :func:`lyapunov_objective` over ``(1/p, sigma_w2)``.

    The raw ``p`` estimate is clamped into ``[1e-3, 1]`` and the variance is
    computed with the clamped value; a nonpositive variance is floored at
    ``1e-12`` with a warning.
    """
    M1 = np.asarray(M1, dtype=float)
    M2 = np.asarray(M2, dtype=float)
    tr1, tr2 = np.trace(M1), np.trace(M2)
    num = d_x * np.sum(M2 * M2) - tr2 ** 2
    den = d_x * np.sum(M1 * M2) - tr1 * tr2
    scale = d_x * np.linalg.norm(M1) * np.linalg.norm(M2)
    if not abs(den) > 1e-12 * scale:
        raise Unidentifiable("unidentifiable: M2 proportional to I", stage="estimate_p_sigma")
    p_raw = float(num / den)
    p_hat = float(min(max(p_raw, P_FLOOR), 1.0)) if np.isfinite(p_raw) else 1.0
    s_raw = float((tr1 - tr2 / p_hat) / d_x)
    s_hat = s_raw
    if s_raw <= 0.0:
        warnings.warn(f"nonpositive variance estimate ({s_raw:.3g}); clamped to {SIGMA_FLOOR}",
                      RuntimeWarning, stacklevel=2)
        s_hat = SIGMA_FLOOR
    return PSigmaEstimate(p_raw, p_hat, s_hat, s_raw)


@dataclass
class IdentificationResult:
    Abar_hat: np.ndarray
    Bbar_hat: np.ndarray
    p_hat: float
    p_hat_raw: float
    sigma_w2_hat: float
    A_hat: np.ndarray
    B_hat: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    label: str | None = None

    def to_dict(self):
        doc = {
            "A_hat": self.A_hat.tolist(),
            "B_hat": self.B_hat.tolist(),
            "p_hat": self.p_hat,
            "p_hat_raw": self.p_hat_raw,
            "sigma_w2_hat": self.sigma_w2_hat,
            "Abar_hat": self.Abar_hat.tolist(),
            "Bbar_hat": self.Bbar_hat.tolist(),
            "diagnostics": self.diagnostics,
        }
        if self.label:
            doc["label"] = self.label
        return doc

    def to_json(self, meta=None):
        doc = self.to_dict()
        if meta is not None:
            doc = {"meta": meta, **doc}
        return json.dumps(doc, indent=2)


def _staged(stage, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except NumericalError as exc:
        exc.stage = exc.stage or stage
        raise
    except (ValueError, np.linalg.LinAlgError) as exc:
        if isinstance(exc, ValidationError):
            raise
        raise NumericalError(str(exc), stage=stage) from exc


def identify_correlations(corr: CorrelationPair, ridge=None,
                          assumed_config: AsyncConfig | None = None) -> IdentificationResult:
    """Run the estimation chain on precomputed correlations."""
    n = corr.d_x
    theta, cond = _staged("estimate_average_system", _solve_C0, corr, ridge)
    Abar, Bbar = theta[:, :n], theta[:, n:]
    M1, M2 = _staged("compute_M_matrices", compute_M_matrices, corr, _theta=theta)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        est = _staged("estimate_p_sigma", estimate_p_sigma, M1, M2, n)
    for w in caught:
        log.warning("%s", w.message)
    inv_p = 1.0 / est.p_hat
    A_hat = inv_p * Abar + (1.0 - inv_p) * np.eye(n)
    B_hat = inv_p * Bbar
    diagnostics = {
        "samples": int(corr.samples),
        "cond_C0": float(cond),
        "ridge": ridge,
        "sigma_w2_raw": est.sigma_w2_raw,
        "lyapunov_residual_fro": float(np.sqrt(lyapunov_objective(M1, M2, inv_p, est.sigma_w2_hat))),
        "warnings": [str(w.message) for w in caught],
    }
    label = None
    if assumed_config is not None and not (assumed_config.q == 1.0 or assumed_config.h == 0):
        label = MISMATCH_LABEL
    return IdentificationResult(Abar, Bbar, est.p_hat, est.p_hat_raw, est.sigma_w2_hat,
                                A_hat, B_hat, diagnostics, label)


def identify(trajectory: Trajectory, burn_in=0, ridge=None,
             assumed_config: AsyncConfig | None = None) -> IdentificationResult:
    """Estimate ``(A, B, p, sigma_w2)`` from one trajectory of a randomized system."""
    corr = _staged("accumulate_correlations", accumulate_correlations, trajectory, burn_in)
    return identify_correlations(corr, ridge=ridge, assumed_config=assumed_config)


# ---------------------------------------------------------------------------
# benchmark

QUANTITIES = ("A", "B", "p", "sigma_w2")


@dataclass
class BenchmarkTable:
    checkpoints: np.ndarray
    errors: np.ndarray  # (n_trials, n_checkpoints, 4), NaN where a trial failed
    failures: list = field(default_factory=list)

    @property
    def n_ok(self):
        return np.sum(np.isfinite(self.errors), axis=0)

    @property
    def mean_error(self):
        return np.nanmean(self.errors, axis=0)

    @property
    def stderr(self):
        n = self.n_ok
        sd = np.nanstd(self.errors, axis=0, ddof=1) if self.errors.shape[0] > 1 else np.zeros_like(self.mean_error)
        return np.where(n > 0, sd / np.sqrt(np.maximum(n, 1)), np.nan)

    def slopes(self, min_T=100):
        """Log-log slope of mean error against T over the final decade.

        Checkpoints at or below ``min_T`` are excluded (burn-in transient).
        """
        T = self.checkpoints.astype(float)
        sel = (T >= T.max() / 10.0) & (T > min_T)
        out = {}
        for q, name in enumerate(QUANTITIES):
            y = self.mean_error[sel, q]
            if sel.sum() < 2 or not np.all(np.isfinite(y)) or np.any(y <= 0):
                out[name] = float("nan")
            else:
                out[name] = float(np.polyfit(np.log10(T[sel]), np.log10(y), 1)[0])
        return out

    def to_csv(self, meta_lines=()):
        lines = [f"# {m}" for m in meta_lines]
        for name, s in self.slopes().items():
            lines.append(f"# slope {name} {fmt(s)}")
        lines.append("T,quantity,mean_error,stderr,n_ok")
        mean, se, n = self.mean_error, self.stderr, self.n_ok
        for k, T in enumerate(self.checkpoints):
            for q, name in enumerate(QUANTITIES):
                lines.append(f"{int(T)},{name},{fmt(mean[k, q])},{fmt(se[k, q])},{int(n[k, q])}")
        return "\n".join(lines) + "\n"


def log_checkpoints(lo, hi, per_decade=4):
    """Log-spaced integer checkpoints from ``lo`` to ``hi`` inclusive."""
    n = int(round(per_decade * math.log10(hi / lo))) + 1
    return np.unique(np.round(np.logspace(math.log10(lo), math.log10(hi), n)).astype(int))


def benchmark_identification(system: LtiSystem, p_true: float, noise: NoiseSpec,
                             T_checkpoints, n_trials: int, base_seed: int = 0,
                             burn_in: int = 0) -> BenchmarkTable:
    """Identification error versus trajectory length over independent trials.

    Trial ``r`` simulates one trajectory (seed child ``(base_seed, r)``) up to
    the last checkpoint and identifies on each prefix, reusing a running
    correlation accumulator.
    """
    report = is_mean_square_stable(system, AsyncConfig(p_true, 1.0, 0))
    if not report.stable:
        raise NumericalError(f"system not mean-square stable at p={p_true} (rho={report.rho:.6g})",
                             stage="benchmark_identification")
    checkpoints = np.array(sorted(set(int(t) for t in T_checkpoints)))
    if checkpoints.size == 0 or checkpoints[0] <= burn_in:
        raise ValidationError("checkpoints must exceed burn_in")
    plan = SimulationPlan(system, AsyncConfig(p_true, 1.0, 0), noise,
                          steps=int(checkpoints[-1]), seed=base_seed)
    errors = np.full((n_trials, checkpoints.size, len(QUANTITIES)), np.nan)
    failures = []
    for r in range(n_trials):
        try:
            traj = _run(plan, run=r)
        except AsyncLtiError as exc:
            log.warning("trial %d failed: %s", r, exc)
            failures.append((r, None, str(exc)))
            continue
        acc = CorrelationAccumulator(system.d_x, system.d_u)
        pos = burn_in
        for k, T in enumerate(checkpoints):
            acc.update(traj, start=pos, stop=int(T))
            pos = int(T)
            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore")
                    res = identify_correlations(acc.correlations())
            except AsyncLtiError as exc:
                failures.append((r, int(T), str(exc)))
                continue
            errors[r, k] = (
                np.linalg.norm(res.A_hat - system.A),
                np.linalg.norm(res.B_hat - system.B),
                abs(res.p_hat - p_true),
                abs(res.sigma_w2_hat - noise.sigma_w2),
            )
    return BenchmarkTable(checkpoints, errors, failures)
