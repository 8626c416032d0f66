"""Closed-form transport protocols and their near-minimal times.

Four families, ordered by smoothness of the controller u = qc - q0:

* bang_bang: u jumps between -delta and +delta once; minimal time.
* vel_bounded: |du/dt| <= epsilon, u continuous (5 pieces).
* acc_bounded: |d2u/dt2| <= zeta, du/dt continuous (11 pieces).
* polynomial_ansatz: degree-7 reference trajectory, bounds ignored.

Every qc is obtained by integrating qc'' = -omega0^2 u twice from rest,
so the auxiliary equation holds exactly at the coefficient level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .model import (
    ConstraintSet,
    DomainError,
    PiecewiseSegment,
    Protocol,
    ProtocolKind,
    RegimeError,
    TransportSpec,
    poly_antideriv,
    poly_eval,
)

__all__ = [
    "SwitchingSchedule",
    "bang_bang",
    "vel_bounded",
    "acc_bounded",
    "polynomial_ansatz",
    "near_minimal_time",
    "bang_bang_schedule",
    "vel_bounded_schedule",
    "acc_bounded_schedule",
    "acc_protocol_from_times",
]


@dataclass(frozen=True)
class SwitchingSchedule:
    """Switching times of the highest bounded derivative, plus t_f.

    Lengths by family: 1 (bang_bang), 4 (vel_bounded), 10 (acc_bounded).
    Ordering is guaranteed only where the regime-validity predicate holds.
    """

    times: tuple[float, ...]
    t_f: float


# ---------------------------------------------------------------------------
# Schedules
# ---------------------------------------------------------------------------

def bang_bang_schedule(spec: TransportSpec, delta: float) -> SwitchingSchedule:
    delta = _positive("delta", delta)
    t_f = (2.0 / spec.omega0) * math.sqrt(spec.distance / delta)
    return SwitchingSchedule(times=(t_f / 2.0,), t_f=t_f)


def _vel_time(spec: TransportSpec, delta: float, epsilon: float) -> float:
    w = spec.omega0
    return delta / epsilon + (2.0 / w) * math.sqrt(
        spec.distance / delta + (w * delta / (2.0 * epsilon)) ** 2
    )


def vel_bounded_schedule(spec: TransportSpec, delta: float, epsilon: float) -> SwitchingSchedule:
    delta = _positive("delta", delta)
    epsilon = _positive("epsilon", epsilon)
    t_f = _vel_time(spec, delta, epsilon)
    a = delta / epsilon
    if t_f < 4.0 * a:
        raise RegimeError(
            f"five-piece structure needs t_f >= 4*delta/epsilon; got t_f={t_f}, 4*delta/epsilon={4 * a}"
        )
    return SwitchingSchedule(times=(a, t_f / 2.0 - a, t_f / 2.0 + a, t_f - a), t_f=t_f)


def acc_bounded_schedule(
    spec: TransportSpec, delta: float, epsilon: float, zeta: float
) -> SwitchingSchedule:
    """Ten switching times; ordering can fail outside the valid regime."""
    delta = _positive("delta", delta)
    epsilon = _positive("epsilon", epsilon)
    zeta = _positive("zeta", zeta)
    a = delta / epsilon
    b = epsilon / zeta
    t_f = _vel_time(spec, delta, epsilon) + b
    t3 = a + b
    times = (
        b,
        a,
        t3,
        (t_f - 2.0 * a - b) / 2.0,
        (t_f - 2.0 * a + b) / 2.0,
        (t_f + 2.0 * a - b) / 2.0,
        (t_f + 2.0 * a + b) / 2.0,
        t_f - t3,
        t_f - a,
        t_f - b,
    )
    return SwitchingSchedule(times=times, t_f=t_f)


def _acc_schedule_degenerate(s: SwitchingSchedule) -> bool:
    t = s.times
    # t1 <= t2 needs epsilon^2 <= delta*zeta; t3 <= t4 needs the middle
    # plateau to exist. Either failure breaks the assumed ordering.
    return t[0] > t[1] or t[3] < t[2]


# ---------------------------------------------------------------------------
# Segment construction
# ---------------------------------------------------------------------------

def _positive(name: str, value: float) -> float:
    v = float(value)
    if not math.isfinite(v) or v <= 0.0:
        raise DomainError(name, f"must be a positive finite number, got {value!r}")
    return v


def _qc_segments_from_u(spec: TransportSpec, u_segments) -> tuple[PiecewiseSegment, ...]:
    # qc'' = -omega0^2 u, integrated twice; (qc, qc') carried across pieces
    w2 = spec.omega0**2
    qc = 0.0
    qv = 0.0
    out = []
    for seg in u_segments:
        acc = tuple(-w2 * c for c in seg.coeffs)
        vel = poly_antideriv(acc, qv)
        pos = poly_antideriv(vel, qc)
        out.append(PiecewiseSegment(seg.t_start, seg.t_end, pos))
        local_len = seg.t_end - seg.t_start
        qc = poly_eval(pos, local_len)
        qv = poly_eval(vel, local_len)
    return tuple(out)


def _u_from_top_derivative(breaks, top_values, order) -> tuple[PiecewiseSegment, ...]:
    """Integrate a piecewise-constant top derivative of u down to u itself.

    order=1: top_values are du/dt per interval; order=2: d2u/dt2.
    Zero-length intervals (equal neighboring breakpoints) are skipped;
    u starts from rest (u = 0, and du/dt = 0 when order is 2).
    """
    u0 = 0.0
    ud0 = 0.0
    out = []
    for k, top in enumerate(top_values):
        lo, hi = breaks[k], breaks[k + 1]
        length = hi - lo
        if length <= 0.0:
            continue
        if order == 1:
            coeffs = (u0, top)
            u0 += top * length
        else:
            coeffs = (u0, ud0, 0.5 * top)
            u0 += ud0 * length + 0.5 * top * length**2
            ud0 += top * length
        out.append(PiecewiseSegment(lo, hi, coeffs))
    return tuple(out)


def _assemble(spec, constraints, schedule, kind, u_segments) -> Protocol:
    return Protocol(
        spec=spec,
        constraints=constraints,
        t_f=schedule.t_f,
        kind=kind,
        switch_times=schedule.times,
        u_segments=u_segments,
        qc_segments=_qc_segments_from_u(spec, u_segments),
    )


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def bang_bang(spec: TransportSpec, delta: float) -> Protocol:
    """Time-optimal protocol under |u| <= delta.

    t_f = (2/omega0) sqrt(d/delta); u = -delta on the first half,
    +delta on the second, zero outside.
    """
    sched = bang_bang_schedule(spec, delta)
    t1 = sched.times[0]
    u_segments = (
        PiecewiseSegment(0.0, t1, (-delta,)),
        PiecewiseSegment(t1, sched.t_f, (delta,)),
    )
    return _assemble(spec, ConstraintSet(delta=delta), sched, ProtocolKind.BANG_BANG, u_segments)


def vel_bounded(spec: TransportSpec, delta: float, epsilon: float) -> Protocol:
    """Jump-free protocol under |u| <= delta, |du/dt| <= epsilon.

    t_f = delta/epsilon + (2/omega0) sqrt(d/delta + omega0^2 delta^2 / (4 epsilon^2)).
    u ramps at slope -epsilon to -delta, holds, ramps at +epsilon to +delta,
    holds, ramps back to zero. Raises RegimeError when t_f < 4*delta/epsilon
    (the plateaus would need negative length).
    """
    sched = vel_bounded_schedule(spec, delta, epsilon)
    breaks = (0.0, *sched.times, sched.t_f)
    slopes = (-epsilon, 0.0, epsilon, 0.0, -epsilon)
    u_segments = _u_from_top_derivative(breaks, slopes, order=1)
    cons = ConstraintSet(delta=delta, epsilon=epsilon)
    return _assemble(spec, cons, sched, ProtocolKind.VEL_BOUNDED, u_segments)


_ACC_SIGNS = (-1.0, 0.0, 1.0, 0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 0.0, 1.0)


def acc_bounded(spec: TransportSpec, delta: float, epsilon: float, zeta: float) -> Protocol:
    """Protocol with bang-bang second derivative, |d2u/dt2| <= zeta.

    t_f = delta/epsilon + epsilon/zeta
        + (2/omega0) sqrt(d/delta + omega0^2 delta^2 / (4 epsilon^2)).

    Outside the valid regime (epsilon^2 > delta*zeta, or too little time
    for the central plateau) the assumed 11-interval ordering breaks; the
    returned Protocol then carries regime_warning="degenerate" with the raw
    switching times and no segments: only t_f is certified.
    """
    sched = acc_bounded_schedule(spec, delta, epsilon, zeta)
    cons = ConstraintSet(delta=delta, epsilon=epsilon, zeta=zeta)
    if _acc_schedule_degenerate(sched):
        return Protocol(
            spec=spec,
            constraints=cons,
            t_f=sched.t_f,
            kind=ProtocolKind.ACC_BOUNDED,
            switch_times=sched.times,
            u_segments=(),
            qc_segments=(),
            regime_warning="degenerate",
        )
    return acc_protocol_from_times(spec, delta, epsilon, zeta, sched.times, sched.t_f)


def acc_protocol_from_times(
    spec: TransportSpec,
    delta: float,
    epsilon: float,
    zeta: float,
    times,
    t_f: float,
) -> Protocol:
    """Build the 11-interval protocol from explicit switching times.

    The second derivative of u follows the fixed sign pattern
    (-,0,+,0,+,0,-,0,-,0,+) * zeta over the intervals defined by
    (0, t1..t10, t_f); u and qc follow by exact integration from rest.
    Used by the shooting solver to realize a converged solution.
    """
    times = tuple(float(t) for t in times)
    if len(times) != 10:
        raise DomainError("times", f"expected 10 switching times, got {len(times)}")
    breaks = (0.0, *times, float(t_f))
    if any(b < a for a, b in zip(breaks, breaks[1:])):
        raise DomainError("times", "switching times must be nondecreasing within [0, t_f]")
    top = tuple(s * zeta for s in _ACC_SIGNS)
    u_segments = _u_from_top_derivative(breaks, top, order=2)
    cons = ConstraintSet(delta=delta, epsilon=epsilon, zeta=zeta)
    sched = SwitchingSchedule(times=times, t_f=float(t_f))
    return _assemble(spec, cons, sched, ProtocolKind.ACC_BOUNDED, u_segments)


def polynomial_ansatz(spec: TransportSpec, t_f: float) -> Protocol:
    """Degree-7 reference trajectory qc = d(35 s^4 - 84 s^5 + 70 s^6 - 20 s^7).

    s = t/t_f. Satisfies rest and smoothness conditions at both ends up to
    the third derivative, but respects no bound on u; near minimal times
    its |u| exceeds the delta that a matched bounded protocol would use.
    """
    t_f = _positive("t_f", t_f)
    d = spec.distance
    qc_coeffs = (
        0.0,
        0.0,
        0.0,
        0.0,
        35.0 * d / t_f**4,
        -84.0 * d / t_f**5,
        70.0 * d / t_f**6,
        -20.0 * d / t_f**7,
    )
    # u = -qc'' / omega0^2
    w2 = spec.omega0**2
    k = len(qc_coeffs)
    u_coeffs = tuple(
        -(n + 2) * (n + 1) * qc_coeffs[n + 2] / w2 for n in range(k - 2)
    )
    return Protocol(
        spec=spec,
        constraints=None,
        t_f=t_f,
        kind=ProtocolKind.POLYNOMIAL_ANSATZ,
        switch_times=(),
        u_segments=(PiecewiseSegment(0.0, t_f, u_coeffs),),
        qc_segments=(PiecewiseSegment(0.0, t_f, qc_coeffs),),
    )


def near_minimal_time(spec: TransportSpec, constraints: ConstraintSet) -> float:
    """Smallest closed-form transport time for the given bound set.

    Dispatches on which bounds are present: delta only gives the minimal
    time, adding epsilon gives the five-piece time, adding zeta appends
    exactly epsilon/zeta. Raises RegimeError where the five-piece
    structure is invalid (delta+epsilon case only).
    """
    if constraints.epsilon is None:
        return bang_bang_schedule(spec, constraints.delta).t_f
    if constraints.zeta is None:
        return vel_bounded_schedule(spec, constraints.delta, constraints.epsilon).t_f
    return acc_bounded_schedule(
        spec, constraints.delta, constraints.epsilon, constraints.zeta
    ).t_f
