"""Core domain types for harmonic-trap transport protocols.

All quantities are SI. A protocol describes the trap-center path q0(t)
implicitly through the transport-mode center qc(t) and the relative
displacement u(t) = qc(t) - q0(t); both u and qc are stored as piecewise
polynomials in local time (t - t_start), which keeps every metric exact.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

HBAR = 1.054571817e-34  # J s (CODATA 2018)
RB87_MASS = 1.44269e-25  # kg

MAX_SEGMENT_DEGREE = 7

SCHEMA_VERSION = 1


# ---------------------------------------------------------------------------
# Errors
# ---------------------------------------------------------------------------

class TransportError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(TransportError):
    """An input value violates a validity constraint. Names the field."""

    def __init__(self, field_name: str, message: str = ""):
        self.field = field_name
        super().__init__(f"{field_name}: {message}" if message else field_name)


class OutOfRange(TransportError):
    """Evaluation time outside [0, t_f]."""


class RegimeError(TransportError):
    """Requested closed-form structure is invalid for these bounds."""


class EvaluationError(TransportError):
    """A residual or trajectory cannot be evaluated from the given unknowns."""


class SingularJacobian(TransportError):
    """Newton linear system is singular; carries the iteration index."""


class NoConvergence(TransportError):
    """Iteration budget exhausted before reaching tolerance."""


class Infeasible(TransportError):
    """No admissible controller exists for the requested constraints."""


# ---------------------------------------------------------------------------
# Polynomial helpers (coefficients ascending: c[0] + c[1] x + c[2] x^2 + ...)
# ---------------------------------------------------------------------------

def poly_eval(coeffs, x):
    """Horner evaluation; x may be a scalar or an ndarray."""
    r = np.zeros_like(x, dtype=float) if isinstance(x, np.ndarray) else 0.0
    for c in reversed(coeffs):
        r = r * x + c
    return r


def poly_deriv(coeffs):
    d = tuple(i * c for i, c in enumerate(coeffs))[1:]
    return d if d else (0.0,)


def poly_antideriv(coeffs, const=0.0):
    return (const,) + tuple(c / (i + 1) for i, c in enumerate(coeffs))


def poly_mul(a, b):
    return tuple(np.convolve(a, b))


# ---------------------------------------------------------------------------
# Domain types
# ---------------------------------------------------------------------------

def _require_positive(name: str, value) -> float:
    v = float(value)
    if not math.isfinite(v) or v <= 0.0:
        raise DomainError(name, f"must be a positive finite number, got {value!r}")
    return v


@dataclass(frozen=True)
class TransportSpec:
    """Physical problem statement: particle mass, trap frequency, distance.

    Parameters
    ----------
    mass : float
        Particle mass in kg.
    omega0 : float
        Trap angular frequency in rad/s.
    distance : float
        Transport distance d in m.
    hbar : float
        Reduced Planck constant; overridable only for unit experiments.
    """

    mass: float
    omega0: float
    distance: float
    hbar: float = HBAR

    def __post_init__(self):
        for name in ("mass", "omega0", "distance", "hbar"):
            object.__setattr__(self, name, _require_positive(name, getattr(self, name)))


@dataclass(frozen=True)
class ConstraintSet:
    """Bounds on the controller and its derivatives; epsilon and zeta optional.

    delta bounds |u|, epsilon bounds |du/dt|, zeta bounds |d2u/dt2|.
    zeta may only be present when epsilon is, mirroring the protocol family
    hierarchy: each added bound smooths one more derivative.
    """

    delta: float
    epsilon: float | None = None
    zeta: float | None = None

    def __post_init__(self):
        object.__setattr__(self, "delta", _require_positive("delta", self.delta))
        if self.epsilon is not None:
            object.__setattr__(self, "epsilon", _require_positive("epsilon", self.epsilon))
        if self.zeta is not None:
            if self.epsilon is None:
                raise DomainError("hierarchy", "zeta requires epsilon to be present")
            object.__setattr__(self, "zeta", _require_positive("zeta", self.zeta))


def validate_spec(spec: TransportSpec, constraints: ConstraintSet):
    """Re-check all invariants on an existing pair and return it unchanged.

    Construction already validates; this entry point exists for callers
    holding deserialized or externally built objects.
    """
    if not isinstance(spec, TransportSpec):
        raise DomainError("spec", "expected a TransportSpec")
    if not isinstance(constraints, ConstraintSet):
        raise DomainError("constraints", "expected a ConstraintSet")
    for name in ("mass", "omega0", "distance", "hbar"):
        _require_positive(name, getattr(spec, name))
    _require_positive("delta", constraints.delta)
    if constraints.epsilon is not None:
        _require_positive("epsilon", constraints.epsilon)
    if constraints.zeta is not None:
        if constraints.epsilon is None:
            raise DomainError("hierarchy", "zeta requires epsilon to be present")
        _require_positive("zeta", constraints.zeta)
    return spec, constraints


@dataclass(frozen=True)
class PiecewiseSegment:
    """One polynomial piece on [t_start, t_end].

    Coefficients are ascending powers of the local variable (t - t_start).
    Degree is capped at MAX_SEGMENT_DEGREE.
    """

    t_start: float
    t_end: float
    coeffs: tuple[float, ...]

    def __post_init__(self):
        t0, t1 = float(self.t_start), float(self.t_end)
        if not (math.isfinite(t0) and math.isfinite(t1)):
            raise DomainError("t_start", "segment endpoints must be finite")
        if t1 <= t0:
            raise DomainError("t_end", f"segment must have positive length, got [{t0}, {t1}]")
        cs = tuple(float(c) for c in self.coeffs)
        if not 1 <= len(cs) <= MAX_SEGMENT_DEGREE + 1:
            raise DomainError("coeffs", f"need 1..{MAX_SEGMENT_DEGREE + 1} coefficients, got {len(cs)}")
        if not all(math.isfinite(c) for c in cs):
            raise DomainError("coeffs", "coefficients must be finite")
        object.__setattr__(self, "t_start", t0)
        object.__setattr__(self, "t_end", t1)
        object.__setattr__(self, "coeffs", cs)

    def __call__(self, t):
        return poly_eval(self.coeffs, np.asarray(t, dtype=float) - self.t_start) \
            if isinstance(t, np.ndarray) else poly_eval(self.coeffs, float(t) - self.t_start)

    def derivative(self) -> "PiecewiseSegment":
        return PiecewiseSegment(self.t_start, self.t_end, poly_deriv(self.coeffs))


class ProtocolKind(str, Enum):
    BANG_BANG = "bang_bang"
    VEL_BOUNDED = "vel_bounded"
    ACC_BOUNDED = "acc_bounded"
    POLYNOMIAL_ANSATZ = "polynomial_ansatz"
    NUMERICAL = "numerical"


def _padded_coeff_table(segments: tuple[PiecewiseSegment, ...], deriv_order: int) -> np.ndarray:
    width = MAX_SEGMENT_DEGREE + 1
    table = np.zeros((len(segments), width))
    for i, seg in enumerate(segments):
        cs = seg.coeffs
        for _ in range(deriv_order):
            cs = poly_deriv(cs)
        table[i, :len(cs)] = cs
    return table


def _horner_rows(table: np.ndarray, rows: np.ndarray, tau: np.ndarray) -> np.ndarray:
    r = np.zeros_like(tau)
    for k in range(table.shape[1] - 1, -1, -1):
        r = r * tau + table[rows, k]
    return r


@dataclass(frozen=True)
class Protocol:
    """Piecewise-polynomial transport protocol.

    Fields mirror the physical description: total duration t_f, the ordered
    switching times of the underlying bang-bang derivative, and matching
    piecewise polynomials for u(t) and qc(t). The trap path is implied:
    q0 = qc + qc''/omega0^2.

    A protocol carrying ``regime_warning`` promises only t_f and the raw
    switching times; its segment lists are empty and evaluation raises
    RegimeError.
    """

    spec: TransportSpec
    constraints: ConstraintSet | None
    t_f: float
    kind: ProtocolKind
    switch_times: tuple[float, ...]
    u_segments: tuple[PiecewiseSegment, ...]
    qc_segments: tuple[PiecewiseSegment, ...]
    regime_warning: str | None = None
    _cache: dict = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "t_f", _require_positive("t_f", self.t_f))
        object.__setattr__(self, "kind", ProtocolKind(self.kind))
        object.__setattr__(self, "switch_times", tuple(float(t) for t in self.switch_times))
        object.__setattr__(self, "u_segments", tuple(self.u_segments))
        object.__setattr__(self, "qc_segments", tuple(self.qc_segments))
        if self.regime_warning is None:
            if not self.u_segments or not self.qc_segments:
                raise DomainError("u_segments", "a certified protocol needs at least one segment")
            ts = self.switch_times
            if any(b <= a for a, b in zip(ts, ts[1:])):
                raise DomainError("switch_times", "must be strictly increasing")
            if ts and not (0.0 < ts[0] and ts[-1] < self.t_f):
                raise DomainError("switch_times", "must lie inside (0, t_f)")
            self._check_tiling(self.u_segments, "u_segments")
            self._check_tiling(self.qc_segments, "qc_segments")
            if len(self.u_segments) != len(self.qc_segments) or any(
                a.t_start != b.t_start or a.t_end != b.t_end
                for a, b in zip(self.u_segments, self.qc_segments)
            ):
                raise DomainError("qc_segments", "u and qc segment breakpoints must match")

    def _check_tiling(self, segs, name):
        if segs[0].t_start != 0.0:
            raise DomainError(name, "first segment must start at 0")
        if segs[-1].t_end != self.t_f:
            raise DomainError(name, "last segment must end at t_f")
        for a, b in zip(segs, segs[1:]):
            if a.t_end != b.t_start:
                raise DomainError(name, f"gap or overlap at t={a.t_end}")

    def _tables(self):
        # padded coefficient matrices, built once per protocol
        if "starts" not in self._cache:
            segs = self.u_segments
            self._cache["starts"] = np.array([s.t_start for s in segs])
            self._cache["u"] = _padded_coeff_table(segs, 0)
            self._cache["qc"] = _padded_coeff_table(self.qc_segments, 0)
            self._cache["qc_d"] = _padded_coeff_table(self.qc_segments, 1)
            self._cache["qc_dd"] = _padded_coeff_table(self.qc_segments, 2)
        return self._cache


def eval_protocol(p: Protocol, t):
    """Evaluate (u, qc, q0, qc_dot) at time t (scalar or array).

    Convention: a switching time evaluates on its right-limit segment, and
    t = t_f returns the post-transport rest state u = 0, q0 = qc. Times
    outside [0, t_f] raise OutOfRange. The trap path is reconstructed as
    q0 = qc + qc''/omega0^2.
    """
    if not p.u_segments:
        raise RegimeError("protocol is degenerate; only t_f is certified, no trajectory exists")
    arr = np.asarray(t, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(~np.isfinite(arr)):
        raise OutOfRange("evaluation time must be finite")
    if np.any(arr < 0.0) or np.any(arr > p.t_f):
        raise OutOfRange(f"time outside [0, {p.t_f}]")
    tab = p._tables()
    idx = np.searchsorted(tab["starts"], arr, side="right") - 1
    tau = arr - tab["starts"][idx]
    u = _horner_rows(tab["u"], idx, tau)
    qc = _horner_rows(tab["qc"], idx, tau)
    qc_dot = _horner_rows(tab["qc_d"], idx, tau)
    q0 = qc + _horner_rows(tab["qc_dd"], idx, tau) / p.spec.omega0**2
    at_end = arr == p.t_f
    if np.any(at_end):
        u = np.where(at_end, 0.0, u)
        q0 = np.where(at_end, qc, q0)
    if scalar:
        return float(u[0]), float(qc[0]), float(q0[0]), float(qc_dot[0])
    return u, qc, q0, qc_dot


# ---------------------------------------------------------------------------
# Serialization (versioned, lossless: floats survive the round trip exactly)
# ---------------------------------------------------------------------------

def _segment_to_dict(seg: PiecewiseSegment) -> dict:
    return {"t_start": seg.t_start, "t_end": seg.t_end, "coeffs": list(seg.coeffs)}


def protocol_to_dict(p: Protocol) -> dict:
    cons = None
    if p.constraints is not None:
        cons = {"delta": p.constraints.delta,
                "epsilon": p.constraints.epsilon,
                "zeta": p.constraints.zeta}
    return {
        "version": SCHEMA_VERSION,
        "kind": p.kind.value,
        "spec": {"mass": p.spec.mass, "omega0": p.spec.omega0,
                 "distance": p.spec.distance, "hbar": p.spec.hbar},
        "constraints": cons,
        "t_f": p.t_f,
        "switch_times": list(p.switch_times),
        "regime_warning": p.regime_warning,
        "u_segments": [_segment_to_dict(s) for s in p.u_segments],
        "qc_segments": [_segment_to_dict(s) for s in p.qc_segments],
    }


def protocol_from_dict(d: dict) -> Protocol:
    if not isinstance(d, dict):
        raise DomainError("protocol", "expected a JSON object")
    if d.get("version") != SCHEMA_VERSION:
        raise DomainError("version", f"unsupported schema version {d.get('version')!r}")
    try:
        kind = ProtocolKind(d["kind"])
    except (KeyError, ValueError):
        raise DomainError("kind", f"unknown protocol kind {d.get('kind')!r}") from None
    try:
        spec = TransportSpec(**d["spec"])
        cons = d.get("constraints")
        constraints = ConstraintSet(**cons) if cons is not None else None

        def segs(key):
            return tuple(
                PiecewiseSegment(s["t_start"], s["t_end"], tuple(s["coeffs"])) for s in d[key]
            )

        return Protocol(
            spec=spec,
            constraints=constraints,
            t_f=d["t_f"],
            kind=kind,
            switch_times=tuple(d["switch_times"]),
            u_segments=segs("u_segments"),
            qc_segments=segs("qc_segments"),
            regime_warning=d.get("regime_warning"),
        )
    except (KeyError, TypeError) as exc:
        raise DomainError("protocol", f"malformed protocol record: {exc}") from None


def save_protocol(p: Protocol, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(protocol_to_dict(p), fh, indent=2)
        fh.write("\n")


def load_protocol(path) -> Protocol:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DomainError("file", f"cannot read protocol file: {exc}") from None
    return protocol_from_dict(data)
