"""Domain types shared by every other module.

All containers are frozen dataclasses holding read-only float arrays. They are
deliberately permissive at construction time (shapes and values are coerced,
never rejected) so that :func:`validate_system` can report every problem at
once instead of stopping at the first.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ValidationError

#: slack allowed on the smallest eigenvalue of U
EPS_SYM = 1e-10


def _frozen(a, ndim=2):
    arr = np.array(a, dtype=float, copy=True)
    if ndim == 2 and arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif ndim == 2 and arr.ndim == 0:
        arr = arr.reshape(1, 1)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class LtiSystem:
    """Underlying synchronous system ``x+ = A x + B u + w``."""

    A: np.ndarray
    B: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "A", _frozen(self.A))
        object.__setattr__(self, "B", _frozen(self.B))

    @property
    def d_x(self) -> int:
        return self.A.shape[0]

    @property
    def d_u(self) -> int:
        return self.B.shape[1]


@dataclass(frozen=True)
class AsyncConfig:
    """Update probability ``p``, delay parameter ``q`` and maximum delay ``h``.

    ``q = 1`` with ``h = 0`` is the randomized (delay-free) special case.
    """

    p: float = 1.0
    q: float = 1.0
    h: int = 0

    @property
    def randomized(self) -> bool:
        return self.q == 1.0 or self.h == 0


@dataclass(frozen=True)
class NoiseSpec:
    """Input second moment ``U`` and process-noise variance ``sigma_w2``."""

    U: np.ndarray
    sigma_w2: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "U", _frozen(self.U))
        object.__setattr__(self, "sigma_w2", float(self.sigma_w2))


@dataclass(frozen=True)
class Trajectory:
    """States ``x_0 .. x_T`` (shape ``(T+1, d_x)``) and inputs ``u_0 .. u_{T-1}``."""

    states: np.ndarray
    inputs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "states", _frozen(self.states))
        inputs = np.array(self.inputs, dtype=float)
        if inputs.ndim == 1:
            inputs = inputs.reshape(-1, 1) if inputs.size else inputs.reshape(0, 1)
        object.__setattr__(self, "inputs", _frozen(inputs))
        if self.states.shape[0] != self.inputs.shape[0] + 1:
            raise ValidationError(
                f"trajectory has {self.states.shape[0]} states but "
                f"{self.inputs.shape[0]} inputs; need exactly one more state"
            )
        if not (np.all(np.isfinite(self.states)) and np.all(np.isfinite(self.inputs))):
            raise ValidationError("trajectory contains non-finite values")

    @property
    def steps(self) -> int:
        return self.inputs.shape[0]

    def prefix(self, steps: int) -> "Trajectory":
        """First ``steps`` transitions (``steps + 1`` states)."""
        return Trajectory(self.states[: steps + 1], self.inputs[:steps])


@dataclass(frozen=True)
class Violation:
    field: str
    message: str

    def __str__(self):
        return f"{self.field}: {self.message}"


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...] = field(default_factory=tuple)

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self):
        return self.ok

    def raise_if_invalid(self):
        if self.violations:
            raise ValidationError("; ".join(str(v) for v in self.violations))


def _finite(a) -> bool:
    try:
        return bool(np.all(np.isfinite(np.asarray(a, dtype=float))))
    except (TypeError, ValueError):
        return False


def validate_system(system: LtiSystem, config: AsyncConfig | None = None,
                    noise: NoiseSpec | None = None) -> ValidationReport:
    """Check every type invariant and collect the violations.

    Never raises for finite (or even non-finite) numeric input; problems come
    back as :class:`Violation` entries naming the offending field.
    """
    out = []
    A, B = np.asarray(system.A), np.asarray(system.B)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        out.append(Violation("A", f"A must be a non-empty square matrix, got shape {A.shape}"))
    if B.ndim != 2 or B.shape[1] < 1:
        out.append(Violation("B", f"B must be a matrix with at least one column, got shape {B.shape}"))
    elif A.ndim == 2 and B.shape[0] != A.shape[0]:
        out.append(Violation("B", f"B must have {A.shape[0]} rows, got {B.shape[0]}"))
    if not _finite(A):
        out.append(Violation("A", "A must have finite entries"))
    if not _finite(B):
        out.append(Violation("B", "B must have finite entries"))

    if config is not None:
        p, q, h = config.p, config.q, config.h
        if not (np.isfinite(p) and 0.0 < p <= 1.0):
            out.append(Violation("p", "p must lie in (0,1]"))
        if not (np.isfinite(q) and 0.0 < q <= 1.0):
            out.append(Violation("q", "q must lie in (0,1]"))
        if int(h) != h or h < 0:
            out.append(Violation("h", "h must be a nonnegative integer"))

    if noise is not None:
        U = np.asarray(noise.U)
        d_u = B.shape[1] if B.ndim == 2 else None
        if U.ndim != 2 or U.shape[0] != U.shape[1]:
            out.append(Violation("U", f"U must be square, got shape {U.shape}"))
        elif d_u is not None and U.shape[0] != d_u:
            out.append(Violation("U", f"U must be {d_u}x{d_u} to match B"))
        if not _finite(U):
            out.append(Violation("U", "U must have finite entries"))
        elif U.ndim == 2 and U.shape[0] == U.shape[1] and U.size:
            if not np.allclose(U, U.T, rtol=0.0, atol=EPS_SYM * max(1.0, np.abs(U).max())):
                out.append(Violation("U", "U must be symmetric"))
            elif np.linalg.eigvalsh(U).min() < -EPS_SYM:
                out.append(Violation("U", "U must be positive semidefinite"))
        s2 = noise.sigma_w2
        if not (np.isfinite(s2) and s2 > 0.0):
            out.append(Violation("sigma_w2", "sigma_w2 must be positive"))

    return ValidationReport(tuple(out))


def delay_pmf(config: AsyncConfig) -> np.ndarray:
    """Truncated geometric delay distribution on ``0..h``.

    ``P[k = tau] = q (1-q)**tau`` for ``tau < h`` and the remaining tail mass
    ``(1-q)**h`` sits at ``tau = h``.
    """
    h = int(config.h)
    q = float(config.q)
    tau = np.arange(h + 1)
    pmf = q * (1.0 - q) ** tau
    pmf[h] = (1.0 - q) ** h
    return pmf


# ---------------------------------------------------------------------------
# system specification files


def _matrix(obj, name):
    try:
        arr = np.array(obj, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ValidationError(f"{name}: not a numeric matrix ({exc})") from None
    if arr.ndim != 2:
        raise ValidationError(f"{name}: expected a list of rows, got {arr.ndim}-d data")
    return arr


def parse_system_spec(doc: dict):
    """Build ``(system, noise, config)`` from a decoded specification document.

    ``config`` is ``None`` when the document has no ``"async"`` block. ``U``
    defaults to the identity and ``sigma_w2`` to 1 when absent.
    """
    if not isinstance(doc, dict):
        raise ValidationError("system file must hold a JSON object")
    for key in ("A", "B"):
        if key not in doc:
            raise ValidationError(f"system file is missing required key {key!r}")
    A = _matrix(doc["A"], "A")
    B = _matrix(doc["B"], "B")
    U = _matrix(doc["U"], "U") if "U" in doc else np.eye(B.shape[1])
    try:
        sigma_w2 = float(doc.get("sigma_w2", 1.0))
    except (TypeError, ValueError):
        raise ValidationError("sigma_w2: not a number") from None
    system = LtiSystem(A, B)
    noise = NoiseSpec(U, sigma_w2)
    config = None
    if "async" in doc:
        blk = doc["async"]
        if not isinstance(blk, dict):
            raise ValidationError("async: expected an object with p, q, h")
        try:
            config = AsyncConfig(float(blk.get("p", 1.0)), float(blk.get("q", 1.0)),
                                 int(blk.get("h", 0)))
        except (TypeError, ValueError):
            raise ValidationError("async: p, q must be numbers and h an integer") from None
    return system, noise, config


def load_system_file(path):
    """Read a JSON system specification; see :func:`parse_system_spec`."""
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(
            f"{path}: malformed JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}"
        ) from None
    return parse_system_spec(doc)


def system_spec_dict(system: LtiSystem, noise: NoiseSpec | None = None,
                     config: AsyncConfig | None = None) -> dict:
    doc = {"A": system.A.tolist(), "B": system.B.tolist()}
    if noise is not None:
        doc["U"] = noise.U.tolist()
        doc["sigma_w2"] = noise.sigma_w2
    if config is not None:
        doc["async"] = {"p": config.p, "q": config.q, "h": int(config.h)}
    return doc
