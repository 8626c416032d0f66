"""Forward integration of the trap-frame oscillator and physical metrics.

The auxiliary equation qc'' = -omega0^2 (qc - q0) is integrated with
fixed-step RK4 aligned to segment boundaries, so the piecewise-polynomial
q0 is smooth within every step. Metrics: time-averaged potential energy,
sloshing amplitude, instantaneous energy, accumulated mode phase, and
boundary-condition residuals in natural units of d, d*omega0, ...
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .model import (
    DomainError,
    OutOfRange,
    Protocol,
    ProtocolKind,
    RegimeError,
    eval_protocol,
    poly_antideriv,
    poly_deriv,
    poly_eval,
    poly_mul,
)

__all__ = [
    "State",
    "MetricsReport",
    "rk4_integrate",
    "verify_protocol",
    "avg_potential_energy",
    "sloshing_amplitude",
    "instantaneous_energy",
    "lr_phase",
    "metrics_to_dict",
]

ANALYTIC_KINDS = frozenset(
    {
        ProtocolKind.BANG_BANG,
        ProtocolKind.VEL_BOUNDED,
        ProtocolKind.ACC_BOUNDED,
        ProtocolKind.POLYNOMIAL_ANSATZ,
    }
)


@dataclass(frozen=True)
class State:
    """Transport-mode state: x1 = qc (m), x2 = qc_dot (m/s).

    x3, x4 hold higher derivatives for extended systems; unused here.
    """

    x1: float
    x2: float
    x3: float | None = None
    x4: float | None = None

    def as_array(self) -> np.ndarray:
        vals = [self.x1, self.x2]
        if self.x3 is not None:
            vals.append(self.x3)
        if self.x4 is not None:
            vals.append(self.x4)
        return np.array(vals, dtype=float)


@dataclass(frozen=True, eq=False)
class MetricsReport:
    """All scalar metrics of one verified protocol.

    boundary_residuals are dimensionless (position-like entries divided by
    d, each time derivative by one more power of omega0). energy_trace is
    a (times, energies) pair sampled uniformly on [0, t_f].
    """

    avg_potential_energy: float
    sloshing_amplitude: float
    final_excess_energy: float
    boundary_residuals: dict[str, float]
    energy_trace: tuple[np.ndarray, np.ndarray]


def rk4_integrate(deriv, x0, t0: float, t1: float, steps: int):
    """Classical fixed-step RK4. Returns (times, states[steps+1, dim]).

    deriv(t, x) -> dx/dt for an ndarray state x. The state sum is
    compensated, keeping the accumulation floor near machine precision
    even at very small steps.
    """
    if int(steps) != steps or steps < 1:
        raise DomainError("steps", f"need a positive integer step count, got {steps!r}")
    steps = int(steps)
    if not (math.isfinite(t0) and math.isfinite(t1)) or t1 <= t0:
        raise DomainError("t1", "need finite t1 > t0")
    x = x0.as_array() if isinstance(x0, State) else np.asarray(x0, dtype=float).copy()
    h = (t1 - t0) / steps
    times = t0 + h * np.arange(steps + 1)
    times[-1] = t1
    out = np.empty((steps + 1, x.size))
    out[0] = x
    comp = np.zeros_like(x)
    for i in range(steps):
        t = t0 + i * h
        k1 = np.asarray(deriv(t, x), dtype=float)
        k2 = np.asarray(deriv(t + 0.5 * h, x + 0.5 * h * k1), dtype=float)
        k3 = np.asarray(deriv(t + 0.5 * h, x + 0.5 * h * k2), dtype=float)
        k4 = np.asarray(deriv(t + h, x + h * k3), dtype=float)
        delta = (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        y = delta - comp
        t_new = x + y
        comp = (t_new - x) - y
        x = t_new
        out[i + 1] = x
    return times, out


# ---------------------------------------------------------------------------
# Segment-aligned protocol integration
# ---------------------------------------------------------------------------

def _require_trajectory(p: Protocol):
    if not p.u_segments:
        raise RegimeError("protocol is degenerate; no certified trajectory to integrate")


def _segment_arrays(p: Protocol):
    starts = np.array([s.t_start for s in p.qc_segments])
    lengths = np.array([s.t_end - s.t_start for s in p.qc_segments])
    width = 8
    q0 = np.zeros((len(p.qc_segments), width))
    w2 = p.spec.omega0**2
    for i, seg in enumerate(p.qc_segments):
        cs = seg.coeffs
        q0[i, : len(cs)] += cs
        dd = poly_deriv(poly_deriv(cs))
        q0[i, : len(dd)] += np.asarray(dd) / w2
    return starts, lengths, q0


def _allocate_steps(lengths: np.ndarray, total: int) -> np.ndarray:
    # proportional split, at least one step per segment, largest remainders
    # soak up the leftover so the sum meets the requested total
    t_all = float(lengths.sum())
    raw = total * lengths / t_all
    base = np.maximum(1, np.floor(raw).astype(np.int64))
    shortfall = total - int(base.sum())
    if shortfall > 0:
        frac = raw - np.floor(raw)
        for idx in np.argsort(-frac):
            if shortfall == 0:
                break
            base[idx] += 1
            shortfall -= 1
    return base


def protocol_boundary_states(p: Protocol, steps: int = 10_000) -> np.ndarray:
    """RK4 states (qc, qc_dot) at every segment boundary, zero initial state."""
    _require_trajectory(p)
    if int(steps) != steps or steps < 1:
        raise DomainError("steps", f"need a positive integer step count, got {steps!r}")
    starts, lengths, q0 = _segment_arrays(p)
    seg_steps = _allocate_steps(lengths, int(steps))
    return kernels.rk4_protocol(starts, lengths, q0, p.spec.omega0, seg_steps)


def verify_protocol(
    p: Protocol,
    steps: int = 10_000,
    n: int = 0,
    panels: int = 2**14,
    trace_samples: int = 512,
) -> MetricsReport:
    """Forward-integrate the protocol and report every metric.

    Terminal transport residuals (qc_end, qc_dot_end) come from the RK4
    trajectory; start-side and end-side smoothness residuals come from
    segment algebra. All residuals are dimensionless.
    """
    _require_trajectory(p)
    spec = p.spec
    d, w = spec.distance, spec.omega0
    boundary = protocol_boundary_states(p, steps)
    x1, x2 = boundary[-1]

    first = p.qc_segments[0]
    last = p.qc_segments[-1]
    L_last = last.t_end - last.t_start

    def derivs_at(seg, tau):
        cs = seg.coeffs
        vals = []
        for _ in range(4):
            vals.append(poly_eval(cs, tau))
            cs = poly_deriv(cs)
        return vals

    qc0, qd0, qdd0, qddd0 = derivs_at(first, 0.0)
    _, _, qdd1, qddd1 = derivs_at(last, L_last)

    residuals = {
        "qc_start": qc0 / d,
        "qc_dot_start": qd0 / (d * w),
        "qc_ddot_start": qdd0 / (d * w**2),
        "qc_dddot_start": qddd0 / (d * w**3),
        "qc_end": (x1 - d) / d,
        "qc_dot_end": x2 / (d * w),
        "qc_ddot_end": qdd1 / (d * w**2),
        "qc_dddot_end": qddd1 / (d * w**3),
    }
    excess = 0.5 * spec.mass * x2**2 + 0.5 * spec.mass * w**2 * (x1 - d) ** 2
    ts = np.linspace(0.0, p.t_f, trace_samples)
    energies = instantaneous_energy(p, ts, n)
    return MetricsReport(
        avg_potential_energy=avg_potential_energy(p),
        sloshing_amplitude=sloshing_amplitude(p, panels),
        final_excess_energy=float(excess),
        boundary_residuals=residuals,
        energy_trace=(ts, energies),
    )


# ---------------------------------------------------------------------------
# Scalar metrics
# ---------------------------------------------------------------------------

def avg_potential_energy(p: Protocol, panels: int = 10_000) -> float:
    """Time average of (m/2) omega0^2 u^2 over [0, t_f].

    Exact segment-wise polynomial integration for the analytic kinds;
    composite Simpson with at least `panels` panels for Numerical ones.
    """
    _require_trajectory(p)
    if p.kind in ANALYTIC_KINDS:
        total = 0.0
        for seg in p.u_segments:
            sq = poly_mul(seg.coeffs, seg.coeffs)
            F = poly_antideriv(sq)
            total += poly_eval(F, seg.t_end - seg.t_start)
    else:
        if panels < 2:
            raise DomainError("panels", "need at least 2 Simpson panels")
        total = 0.0
        lengths = np.array([s.t_end - s.t_start for s in p.u_segments])
        counts = _even_panels(lengths, panels)
        for seg, npan in zip(p.u_segments, counts):
            L = seg.t_end - seg.t_start
            tau = np.linspace(0.0, L, npan + 1)
            vals = poly_eval(seg.coeffs, tau) ** 2
            total += _simpson(vals, L / npan)
    m, w = p.spec.mass, p.spec.omega0
    return 0.5 * m * w**2 * total / p.t_f


def _even_panels(lengths: np.ndarray, total: int) -> np.ndarray:
    t_all = float(lengths.sum())
    return np.maximum(2, 2 * np.ceil(total * lengths / (2.0 * t_all)).astype(np.int64))


def _simpson(vals: np.ndarray, h: float):
    weights = np.ones(len(vals))
    weights[1:-1:2] = 4.0
    weights[2:-1:2] = 2.0
    return h / 3.0 * np.sum(weights * vals)


def sloshing_amplitude(p: Protocol, panels: int = 2**14) -> float:
    """|integral of q0_dot(t) exp(-i omega0 t) dt| over [0, t_f].

    Composite complex Simpson with segment boundaries as panel boundaries
    and per-segment panel counts proportional to length (total >= panels).
    The piecewise integral of q0_dot = qc_dot - u_dot already equals the
    sum of jump contributions Delta_u * exp(-i omega0 t*) over controller
    discontinuities, so jumps need no separate term; protocols with a
    continuous controller give zero up to quadrature noise.
    """
    _require_trajectory(p)
    if panels < 2:
        raise DomainError("panels", "need at least 2 Simpson panels")
    w = p.spec.omega0
    lengths = np.array([s.t_end - s.t_start for s in p.u_segments])
    counts = _even_panels(lengths, panels)
    total = 0.0 + 0.0j
    for useg, qseg, npan in zip(p.u_segments, p.qc_segments, counts):
        L = useg.t_end - useg.t_start
        tau = np.linspace(0.0, L, npan + 1)
        q0_dot = poly_eval(poly_deriv(qseg.coeffs), tau) - poly_eval(
            poly_deriv(useg.coeffs), tau
        )
        vals = q0_dot * np.exp(-1j * w * (useg.t_start + tau))
        total += _simpson(vals, L / npan)
    return abs(total)


def instantaneous_energy(p: Protocol, t, n: int = 0):
    """Mode energy E(t) = hbar omega0 (n + 1/2) + (m/2) qc_dot^2 + (m/2) omega0^2 u^2."""
    if int(n) != n or n < 0:
        raise DomainError("n", f"mode index must be a nonnegative integer, got {n!r}")
    u, _, _, qc_dot = eval_protocol(p, t)
    s = p.spec
    return s.hbar * s.omega0 * (n + 0.5) + 0.5 * s.mass * (qc_dot**2 + s.omega0**2 * u**2)


def lr_phase(p: Protocol, t, n: int = 0):
    """Accumulated mode phase alpha_n(t).

    alpha_n(t) = -(1/hbar) * integral over [0, t] of
    [(n + 1/2) hbar omega0 + (m/2) qc_dot^2], with the qc_dot^2 term
    integrated exactly segment by segment.
    """
    if int(n) != n or n < 0:
        raise DomainError("n", f"mode index must be a nonnegative integer, got {n!r}")
    _require_trajectory(p)
    arr = np.asarray(t, dtype=float)
    scalar = arr.ndim == 0
    arr = np.atleast_1d(arr)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0.0) or np.any(arr > p.t_f):
        raise OutOfRange(f"time outside [0, {p.t_f}]")

    starts = np.array([s.t_start for s in p.qc_segments])
    antis = []
    cumulative = [0.0]
    for seg in p.qc_segments:
        sq = poly_mul(poly_deriv(seg.coeffs), poly_deriv(seg.coeffs))
        F = poly_antideriv(sq)
        antis.append(F)
        cumulative.append(cumulative[-1] + poly_eval(F, seg.t_end - seg.t_start))
    cumulative = np.asarray(cumulative)

    idx = np.searchsorted(starts, arr, side="right") - 1
    tau = arr - starts[idx]
    kinetic = cumulative[idx] + np.array(
        [poly_eval(antis[i], x) for i, x in zip(idx, tau)]
    )
    s = p.spec
    alpha = -(n + 0.5) * s.omega0 * arr - (s.mass / (2.0 * s.hbar)) * kinetic
    return float(alpha[0]) if scalar else alpha


def metrics_to_dict(report: MetricsReport) -> dict:
    times, energies = report.energy_trace
    return {
        "avg_potential_energy": report.avg_potential_energy,
        "sloshing_amplitude": report.sloshing_amplitude,
        "final_excess_energy": report.final_excess_energy,
        "boundary_residuals": dict(report.boundary_residuals),
        "energy_trace": {"t": times.tolist(), "E": energies.tolist()},
    }
