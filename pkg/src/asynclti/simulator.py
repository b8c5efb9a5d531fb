"""Seeded simulation of the random asynchronous state recursion.

Per step and per coordinate ``i`` an independent Bernoulli(p) draw decides
whether ``x_i`` is updated. An update computes
``sum_j A_ij x_{t-k_ij, j} + (B u_t)_i + w_{t,i}`` with delays ``k_ij`` drawn
i.i.d. from :func:`~asynclti.model.delay_pmf`; otherwise the coordinate keeps
its value plus the same noise ``w_{t,i}``.

Randomness comes from five independent numpy streams (initial state, update
indicators, delays, inputs, noise) spawned from one ``SeedSequence``, and is
drawn in fixed-size chunks before the recursion runs in a compiled kernel.
Identical plans therefore give bit-identical trajectories.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numba
import numpy as np

from .errors import SimulationDiverged, ValidationError
from .model import AsyncConfig, LtiSystem, NoiseSpec, Trajectory, delay_pmf, validate_system
from ._io import fmt, parse_float, read_csv_rows

OVERFLOW_GUARD = 1e150
CHUNK = 1 << 16
INPUT_MODES = ("stochastic", "constant", "zero")

_STREAMS = ("init", "updates", "delays", "inputs", "noise")


@dataclass(frozen=True)
class SimulationPlan:
    system: LtiSystem
    config: AsyncConfig
    noise: NoiseSpec
    steps: int
    seed: int = 0
    input_mode: str = "stochastic"
    u_const: np.ndarray | None = None
    x0_mean: np.ndarray | None = None  # None -> x_0 = 0
    x0_cov: np.ndarray | None = None
    noise_free: bool = False  # debug switch: treat sigma_w2 as 0

    @property
    def initial_state_mode(self):
        return "zero" if self.x0_mean is None and self.x0_cov is None else "gaussian"

    def validate(self):
        rep = validate_system(self.system, self.config, self.noise)
        rep.raise_if_invalid()
        if int(self.steps) < 1:
            raise ValidationError("steps must be at least 1")
        if self.input_mode not in INPUT_MODES:
            raise ValidationError(f"input_mode must be one of {INPUT_MODES}")
        if self.input_mode == "constant":
            if self.u_const is None or np.size(self.u_const) != self.system.d_u:
                raise ValidationError(f"constant input mode needs a vector of length {self.system.d_u}")
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ValidationError("seed must be a 64-bit unsigned integer")


class HistoryBuffer:
    """Ring of the last ``h+1`` states; slot ``head`` holds ``x_t``.

    Slots for times before 0 hold zeros.
    """

    def __init__(self, x0, h):
        x0 = np.asarray(x0, dtype=float)
        self.ring = np.zeros((h + 1, x0.size))
        self.ring[0] = x0
        self.head = 0

    @property
    def depth(self):
        return self.ring.shape[0]

    def push(self, x):
        self.head = (self.head + 1) % self.depth
        self.ring[self.head] = x

    def delayed(self, k):
        """``x_{t-k}`` for ``0 <= k <= h``."""
        return self.ring[(self.head - k) % self.depth]

    def stacked(self):
        """``[x_t; x_{t-1}; ...; x_{t-h}]`` as one vector."""
        return np.concatenate([self.delayed(k) for k in range(self.depth)])


@numba.njit(cache=True)
def _advance(A, B, ring, head, upd, delays, has_delay, u, w, out, guard2):
    n = A.shape[0]
    m = B.shape[1]
    depth = ring.shape[0]
    xnew = np.empty(n)
    for t in range(upd.shape[0]):
        for i in range(n):
            if upd[t, i]:
                s = 0.0
                for j in range(n):
                    k = delays[t, i, j] if has_delay else 0
                    s += A[i, j] * ring[(head - k) % depth, j]
                for l in range(m):
                    s += B[i, l] * u[t, l]
                xnew[i] = s + w[t, i]
            else:
                xnew[i] = ring[head, i] + w[t, i]
        head = (head + 1) % depth
        nrm2 = 0.0
        for i in range(n):
            ring[head, i] = xnew[i]
            out[t, i] = xnew[i]
            nrm2 += xnew[i] * xnew[i]
        if not nrm2 <= guard2:
            return head, t
    return head, -1


def _psd_factor(C):
    """``L`` with ``L L^T = C`` for a PSD (possibly singular) ``C``."""
    C = np.asarray(C, dtype=float)
    lam, V = np.linalg.eigh(0.5 * (C + C.T))
    return V * np.sqrt(np.clip(lam, 0.0, None))


def _streams(seed, run=None):
    ss = np.random.SeedSequence(int(seed), spawn_key=() if run is None else (int(run),))
    return dict(zip(_STREAMS, (np.random.default_rng(c) for c in ss.spawn(len(_STREAMS)))))


def draw_switching(rng_updates, rng_delays, steps, d_x, config: AsyncConfig):
    """Update indicators ``(steps, d_x)`` and delays ``(steps, d_x, d_x)``.

    Delays are ``None`` when ``h = 0`` (every delay is zero).
    """
    upd = rng_updates.random((steps, d_x)) < config.p
    if int(config.h) == 0:
        return upd, None
    pmf = delay_pmf(config)
    delays = rng_delays.choice(pmf.size, size=(steps, d_x, d_x), p=pmf).astype(np.int64)
    return upd, delays


def draw_noise(rng_noise, steps, d_x, sigma_w2):
    return np.sqrt(sigma_w2) * rng_noise.standard_normal((steps, d_x))


def _initial_state(plan, rng):
    n = plan.system.d_x
    if plan.initial_state_mode == "zero":
        return np.zeros(n)
    mean = np.zeros(n) if plan.x0_mean is None else np.asarray(plan.x0_mean, dtype=float)
    cov = np.eye(n) if plan.x0_cov is None else np.asarray(plan.x0_cov, dtype=float)
    return mean + _psd_factor(cov) @ rng.standard_normal(n)


def _run(plan: SimulationPlan, run=None) -> Trajectory:
    plan.validate()
    sysm, cfg = plan.system, plan.config
    n, m, T = sysm.d_x, sysm.d_u, int(plan.steps)
    rngs = _streams(plan.seed, run)
    A = np.ascontiguousarray(sysm.A)
    B = np.ascontiguousarray(sysm.B)
    L = _psd_factor(plan.noise.U) if plan.input_mode == "stochastic" else None
    u_const = None if plan.u_const is None else np.asarray(plan.u_const, dtype=float).reshape(m)
    sigma_w2 = 0.0 if plan.noise_free else plan.noise.sigma_w2

    buf = HistoryBuffer(_initial_state(plan, rngs["init"]), int(cfg.h))
    states = np.empty((T + 1, n))
    inputs = np.empty((T, m))
    states[0] = buf.ring[0]
    no_delay = np.zeros((1, 1, 1), dtype=np.int64)

    for start in range(0, T, CHUNK):
        size = min(CHUNK, T - start)
        upd, delays = draw_switching(rngs["updates"], rngs["delays"], size, n, cfg)
        if plan.input_mode == "stochastic":
            u = rngs["inputs"].standard_normal((size, m)) @ L.T
        elif plan.input_mode == "constant":
            u = np.broadcast_to(u_const, (size, m)).copy()
        else:
            u = np.zeros((size, m))
        w = np.zeros((size, n)) if sigma_w2 == 0.0 else draw_noise(rngs["noise"], size, n, sigma_w2)
        inputs[start:start + size] = u
        out = states[start + 1:start + 1 + size]
        head, fail = _advance(A, B, buf.ring, buf.head, upd,
                              no_delay if delays is None else delays, delays is not None,
                              u, w, out, OVERFLOW_GUARD ** 2)
        buf.head = head
        if fail >= 0:
            t = start + fail
            partial = Trajectory(states[:t + 2], inputs[:t + 1])
            raise SimulationDiverged(
                f"state norm exceeded {OVERFLOW_GUARD:.0e} at step {t + 1}; "
                "the configuration is numerically divergent",
                partial=partial, step=t + 1,
            )
    return Trajectory(states, inputs)


def simulate(plan: SimulationPlan) -> Trajectory:
    """Simulate ``plan.steps`` transitions; same plan, same trajectory."""
    return _run(plan)


@dataclass
class EnsembleSnapshots:
    times: np.ndarray
    states: np.ndarray  # (len(times), n_runs, d_x)
    failed_runs: list = field(default_factory=list)

    def at(self, t):
        return self.states[int(np.flatnonzero(self.times == t)[0])]

    def to_csv(self, meta_lines=()) -> str:
        d_x = self.states.shape[2]
        lines = [f"# {m}" for m in meta_lines]
        lines.append(",".join(["run", "t"] + [f"x{i + 1}" for i in range(d_x)]))
        for r in range(self.states.shape[1]):
            for k, t in enumerate(self.times):
                lines.append(",".join([str(r), str(int(t))] + [fmt(v) for v in self.states[k, r]]))
        return "\n".join(lines) + "\n"


def simulate_ensemble(plan: SimulationPlan, n_runs: int, snapshot_times) -> EnsembleSnapshots:
    """Independent runs of ``plan``; the state of each run at every snapshot time.

    Run ``r`` draws from the ``SeedSequence`` child ``(plan.seed, r)``, so
    each run is reproducible on its own and the result does not depend on
    evaluation order. Runs that diverge are recorded in ``failed_runs`` and
    their snapshots after divergence are NaN.
    """
    times = np.array(sorted(set(int(t) for t in snapshot_times)), dtype=int)
    if n_runs < 1:
        raise ValidationError("n_runs must be at least 1")
    if times.size == 0 or times[0] < 0 or times[-1] > plan.steps:
        raise ValidationError(f"snapshot times must lie in [0, {plan.steps}]")
    horizon = max(int(times[-1]), 1)
    sub = replace(plan, steps=horizon)
    out = np.full((times.size, n_runs, plan.system.d_x), np.nan)
    failed = []
    for r in range(n_runs):
        try:
            traj = _run(sub, run=r)
            out[:, r] = traj.states[times]
        except SimulationDiverged as exc:
            failed.append(r)
            ok = times < exc.partial.states.shape[0]
            out[ok, r] = exc.partial.states[times[ok]]
    return EnsembleSnapshots(times, out, failed)


# ---------------------------------------------------------------------------
# CSV


def trajectory_to_csv(traj: Trajectory, meta_lines=()) -> str:
    n = traj.states.shape[1]
    m = traj.inputs.shape[1]
    lines = [f"# {s}" for s in meta_lines]
    lines.append(",".join(["t"] + [f"x{i + 1}" for i in range(n)] + [f"u{i + 1}" for i in range(m)]))
    for t in range(traj.steps):
        lines.append(",".join([str(t)] + [fmt(v) for v in traj.states[t]]
                              + [fmt(v) for v in traj.inputs[t]]))
    lines.append(",".join([str(traj.steps)] + [fmt(v) for v in traj.states[-1]] + [""] * m))
    return "\n".join(lines) + "\n"


def trajectory_from_csv(text: str, source="<trajectory>") -> Trajectory:
    header, rows = read_csv_rows(text, source)
    if not header or header[0] != "t":
        raise ValidationError(f"{source}: line 1, column 1: header must start with 't'")
    xcols = [k for k, h in enumerate(header) if h.startswith("x")]
    ucols = [k for k, h in enumerate(header) if h.startswith("u")]
    if not xcols or not ucols:
        raise ValidationError(f"{source}: header needs x1.. and u1.. columns")
    if not rows:
        raise ValidationError(f"{source}: no data rows")
    states, inputs = [], []
    for idx, (lineno, fields) in enumerate(rows):
        t = parse_float(fields[0], source, lineno, 1)
        if t != idx:
            raise ValidationError(f"{source}: line {lineno}, column 1: expected t={idx}, got {fields[0]}")
        states.append([parse_float(fields[k], source, lineno, k + 1) for k in xcols])
        last = idx == len(rows) - 1
        if last:
            if any(fields[k].strip() for k in ucols):
                raise ValidationError(f"{source}: line {lineno}: final row must leave inputs empty")
        else:
            inputs.append([parse_float(fields[k], source, lineno, k + 1) for k in ucols])
    return Trajectory(np.array(states), np.array(inputs).reshape(len(inputs), len(ucols)))
