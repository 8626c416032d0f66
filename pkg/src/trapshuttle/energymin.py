"""Minimum-energy controller search by direct transcription.

The controller is discretized on N nodes joined by linear interpolation
and integrated with fixed-step RK4 between nodes. Because the trap
dynamics are affine in the controller, the terminal transport conditions
are exactly linear in the node values and their gradient comes from a
single adjoint sweep per condition. The time-averaged potential energy is
an explicit positive-definite quadratic, so the search is a convex
quadratic program over the amplitude box with optional finite-difference
slope and curvature bounds. It is solved with an augmented Lagrangian
outer loop around a projected-gradient inner loop (Barzilai-Borwein steps
with a nonmonotone backtracking line search).
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import kernels
from .dynamics import avg_potential_energy
from .model import (
    ConstraintSet,
    DomainError,
    Infeasible,
    NoConvergence,
    PiecewiseSegment,
    Protocol,
    ProtocolKind,
    TransportSpec,
)
from .protocols import _qc_segments_from_u

__all__ = [
    "TranscriptionGrid",
    "EnergyMinProblem",
    "OptimizationReport",
    "EnergyMinResult",
    "unbounded_optimum",
    "minimize_energy",
    "check_gradient",
]

DEFAULT_NODES = 100
DEFAULT_SUBSTEPS = 10

# multiplier-loop safeguards
_MU_MAX = 1e8
_LAM_MAX = 1e12


@dataclass(frozen=True)
class TranscriptionGrid:
    """Discretization: N controller nodes, M-point refinement per interval.

    Each of the N-1 node intervals is integrated with M-1 RK4 steps of
    size h, so h = t_f / ((N-1) (M-1)).
    """

    n_nodes: int = DEFAULT_NODES
    substeps: int = DEFAULT_SUBSTEPS
    h: float = 0.0

    def __post_init__(self):
        if self.n_nodes < 4:
            raise DomainError("n_nodes", f"need at least 4 controller nodes, got {self.n_nodes}")
        if self.substeps < 2:
            raise DomainError("substeps", f"need at least 2 points per interval, got {self.substeps}")
        if not (self.h > 0.0 and math.isfinite(self.h)):
            raise DomainError("h", f"step size must be positive and finite, got {self.h}")

    @classmethod
    def for_duration(cls, t_f: float, n_nodes: int = DEFAULT_NODES,
                     substeps: int = DEFAULT_SUBSTEPS) -> "TranscriptionGrid":
        """Grid whose steps tile [0, t_f] exactly."""
        if not (t_f > 0.0 and math.isfinite(t_f)):
            raise DomainError("t_f", f"duration must be positive and finite, got {t_f}")
        if n_nodes < 4:
            raise DomainError("n_nodes", f"need at least 4 controller nodes, got {n_nodes}")
        if substeps < 2:
            raise DomainError("substeps", f"need at least 2 points per interval, got {substeps}")
        h = t_f / ((n_nodes - 1) * (substeps - 1))
        return cls(n_nodes=n_nodes, substeps=substeps, h=h)

    @property
    def duration(self) -> float:
        return self.h * (self.n_nodes - 1) * (self.substeps - 1)


@dataclass(frozen=True)
class EnergyMinProblem:
    """Search statement: spec, bounds, duration, and solver knobs.

    init, when given, holds N controller node values in meters. The
    multiplier loop declares success once every constraint sits within
    constraint_tol (dimensionless) and the projected gradient of the
    scaled objective is below stationarity_tol.
    """

    spec: TransportSpec
    constraints: ConstraintSet
    t_f: float
    grid: TranscriptionGrid | None = None
    init: tuple[float, ...] | None = None
    constraint_tol: float = 1e-8
    stationarity_tol: float = 1e-8
    mu0: float = 10.0
    mu_growth: float = 10.0
    max_outer: int = 40
    max_inner: int = 4000
    restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        if not (self.t_f > 0.0 and math.isfinite(self.t_f)):
            raise DomainError("t_f", f"duration must be positive and finite, got {self.t_f}")
        if self.grid is None:
            object.__setattr__(self, "grid", TranscriptionGrid.for_duration(self.t_f))
        elif abs(self.grid.duration - self.t_f) > 1e-9 * self.t_f:
            raise DomainError("grid", "grid does not tile the requested duration")
        if self.init is not None:
            vals = tuple(float(v) for v in self.init)
            if len(vals) != self.grid.n_nodes:
                raise DomainError("init", f"need {self.grid.n_nodes} node values, got {len(vals)}")
            if not all(math.isfinite(v) for v in vals):
                raise DomainError("init", "initial node values must be finite")
            object.__setattr__(self, "init", vals)
        if not (self.constraint_tol > 0.0):
            raise DomainError("constraint_tol", "tolerance must be positive")
        if not (self.stationarity_tol > 0.0):
            raise DomainError("stationarity_tol", "tolerance must be positive")
        if not (self.mu0 > 0.0):
            raise DomainError("mu0", "penalty weight must be positive")
        if not (self.mu_growth > 1.0):
            raise DomainError("mu_growth", "penalty growth factor must exceed 1")
        if self.max_outer < 1:
            raise DomainError("max_outer", "need at least one multiplier update")
        if self.max_inner < 1:
            raise DomainError("max_inner", "need at least one inner iteration")
        if self.restarts < 1:
            raise DomainError("restarts", "need at least one start")


@dataclass(frozen=True, eq=False)
class OptimizationReport:
    """Solve diagnostics.

    objective is the achieved mean potential energy in joules;
    ratio_to_lower_bound divides it by the unbounded analytic minimum.
    history rows are (outer iteration, scaled objective, max violation, mu).
    """

    converged: bool
    objective: float
    ratio_to_lower_bound: float
    max_violation: float
    outer_iterations: int
    inner_iterations: int
    restarts_used: int
    history: tuple[tuple[int, float, float, float], ...]


class EnergyMinResult(NamedTuple):
    protocol: Protocol
    avg_potential_energy: float
    report: OptimizationReport


def unbounded_optimum(spec: TransportSpec, t_f: float) -> tuple[Protocol, float]:
    """Exact minimizer with no controller bounds: a linear ramp.

    The optimal controller is u(t) = (6 d / (w0^2 t_f^2)) (2 t / t_f - 1),
    which transports in time t_f with mean potential energy
    6 m d^2 / (w0^2 t_f^4). Returns the protocol and that energy.
    """
    if not (t_f > 0.0 and math.isfinite(t_f)):
        raise DomainError("t_f", f"duration must be positive and finite, got {t_f}")
    d = spec.distance
    w0 = spec.omega0
    amp = 6.0 * d / (w0**2 * t_f**2)
    u_segments = (PiecewiseSegment(0.0, t_f, (-amp, 2.0 * amp / t_f)),)
    protocol = Protocol(
        spec=spec,
        constraints=None,
        t_f=t_f,
        kind=ProtocolKind.NUMERICAL,
        switch_times=(),
        u_segments=u_segments,
        qc_segments=_qc_segments_from_u(spec, u_segments),
    )
    e_min = 6.0 * spec.mass * d**2 / (w0**2 * t_f**4)
    return protocol, e_min


def _scaled_terminal_map(spec: TransportSpec, delta: float, grid: TranscriptionGrid,
                         t_f: float) -> tuple[np.ndarray, np.ndarray]:
    """Linear terminal transport conditions c(w) = G w + c0 in box units.

    Rows are (qc(t_f) - d)/d and qc_dot(t_f)/(d w0) as functions of the
    node values w = u/delta; one adjoint sweep per row gives the exact
    gradient of the RK4 recursion, which is the whole map since the
    dynamics are affine in u and start from rest.
    """
    d = spec.distance
    w0 = spec.omega0
    n = grid.n_nodes
    row1 = kernels.transcribe_adjoint(n, t_f, w0, grid.substeps, 1.0 / d, 0.0)
    row2 = kernels.transcribe_adjoint(n, t_f, w0, grid.substeps, 0.0, 1.0 / (d * w0))
    return delta * np.vstack([row1, row2]), np.array([-1.0, 0.0])


class _BoxQP:
    """Working form of the transcribed problem in box units w = u/delta.

    Equality rows and the optional slope/curvature rows are normalized to
    unit gradient norm for the multiplier loop; violations are always
    reported in canonical units (relative terminal defects, bound
    excesses) so tolerances keep their meaning.
    """

    def __init__(self, problem: EnergyMinProblem):
        spec = problem.spec
        cons = problem.constraints
        grid = problem.grid
        self.problem = problem
        self.n = grid.n_nodes
        self.t_f = problem.t_f
        self.L = self.t_f / (self.n - 1)
        d, w0, mass = spec.distance, spec.omega0, spec.mass
        self.delta = cons.delta
        self.e_min = 6.0 * mass * d**2 / (w0**2 * self.t_f**4)
        self.k_obj = (mass * w0**2 * self.delta**2 * self.L / 6.0) / (self.e_min * self.t_f)

        pins = [0, self.n - 1] if cons.epsilon is not None else []
        if cons.zeta is not None:
            pins += [1, self.n - 2]
        self.pins = np.array(sorted(pins), dtype=int) if pins else None

        A, c0 = _scaled_terminal_map(spec, self.delta, grid, self.t_f)
        self.eq_scale = np.linalg.norm(A, axis=1)
        self.A = A / self.eq_scale[:, None]
        self.c0 = c0 / self.eq_scale

        self.sfac = self.delta / (self.L * cons.epsilon) if cons.epsilon is not None else None
        self.cfac = self.delta / (self.L**2 * cons.zeta) if cons.zeta is not None else None
        # unit-norm row factors: slope rows have gradient sfac*(-1, 1),
        # curvature rows cfac*(1, -2, 1)
        self.s_gamma = 1.0 / (self.sfac * math.sqrt(2.0)) if self.sfac is not None else None
        self.c_gamma = 1.0 / (self.cfac * math.sqrt(6.0)) if self.cfac is not None else None

    def project(self, wv: np.ndarray) -> np.ndarray:
        np.clip(wv, -1.0, 1.0, out=wv)
        if self.pins is not None:
            wv[self.pins] = 0.0
        return wv

    def objective(self, wv: np.ndarray) -> float:
        head, tail = wv[:-1], wv[1:]
        return self.k_obj * float(np.sum(head * head + head * tail + tail * tail))

    def objective_grad(self, wv: np.ndarray) -> np.ndarray:
        g = np.empty_like(wv)
        g[0] = 2.0 * wv[0] + wv[1]
        g[-1] = 2.0 * wv[-1] + wv[-2]
        g[1:-1] = 4.0 * wv[1:-1] + wv[:-2] + wv[2:]
        return self.k_obj * g

    def ineq_rows(self, wv: np.ndarray) -> list[np.ndarray]:
        """Scaled (unit-gradient) inequality residuals g <= 0."""
        rows = []
        if self.sfac is not None:
            s = self.sfac * np.diff(wv)
            rows += [self.s_gamma * (s - 1.0), self.s_gamma * (-s - 1.0)]
        if self.cfac is not None:
            q = self.cfac * (wv[:-2] - 2.0 * wv[1:-1] + wv[2:])
            rows += [self.c_gamma * (q - 1.0), self.c_gamma * (-q - 1.0)]
        return rows

    def fresh_multipliers(self) -> tuple[np.ndarray, list[np.ndarray]]:
        nus = []
        if self.sfac is not None:
            nus += [np.zeros(self.n - 1), np.zeros(self.n - 1)]
        if self.cfac is not None:
            nus += [np.zeros(self.n - 2), np.zeros(self.n - 2)]
        return np.zeros(2), nus

    def violation(self, wv: np.ndarray) -> float:
        """Worst canonical defect: relative terminal error or bound excess."""
        v = float(np.max(np.abs(self.eq_scale * (self.A @ wv + self.c0))))
        if self.sfac is not None:
            v = max(v, float(np.max(np.abs(self.sfac * np.diff(wv)))) - 1.0)
        if self.cfac is not None:
            q = self.cfac * (wv[:-2] - 2.0 * wv[1:-1] + wv[2:])
            v = max(v, float(np.max(np.abs(q))) - 1.0)
        return max(v, 0.0)

    def al_value(self, wv, lam, nus, mu) -> float:
        c = self.A @ wv + self.c0
        val = self.objective(wv) + float(lam @ c) + 0.5 * mu * float(c @ c)
        for nu, g in zip(nus, self.ineq_rows(wv)):
            a = np.maximum(0.0, nu + mu * g)
            val += float(np.sum(a * a - nu * nu)) / (2.0 * mu)
        return val

    def al_grad(self, wv, lam, nus, mu) -> np.ndarray:
        grad = self.objective_grad(wv) + self.A.T @ (lam + mu * (self.A @ wv + self.c0))
        rows = self.ineq_rows(wv)
        k = 0
        if self.sfac is not None:
            a = (np.maximum(0.0, nus[k] + mu * rows[k])
                 - np.maximum(0.0, nus[k + 1] + mu * rows[k + 1])) * (self.s_gamma * self.sfac)
            grad[:-1] -= a
            grad[1:] += a
            k += 2
        if self.cfac is not None:
            a = (np.maximum(0.0, nus[k] + mu * rows[k])
                 - np.maximum(0.0, nus[k + 1] + mu * rows[k + 1])) * (self.c_gamma * self.cfac)
            grad[:-2] += a
            grad[1:-1] -= 2.0 * a
            grad[2:] += a
        return grad

    def inner_solve(self, wv, lam, nus, mu, tol_inner):
        """Projected Barzilai-Borwein descent on the augmented Lagrangian."""
        wv = self.project(wv.copy())
        val = self.al_value(wv, lam, nus, mu)
        grad = self.al_grad(wv, lam, nus, mu)
        recent = deque([val], maxlen=10)
        alpha = 1.0 / max(1.0, float(np.linalg.norm(grad)))
        prev_w = prev_grad = None
        its = 0
        for it in range(self.problem.max_inner):
            pg = wv - self.project(wv - grad)
            if float(np.linalg.norm(pg, np.inf)) <= tol_inner:
                break
            if prev_w is not None:
                sv = wv - prev_w
                yv = grad - prev_grad
                sy = float(sv @ yv)
                if sy > 1e-18:
                    # alternate the two spectral step lengths
                    alpha = float(sv @ sv) / sy if it % 2 else sy / float(yv @ yv)
            step = min(max(alpha, 1e-14), 1e10)
            f_ref = max(recent)
            w_new = wv
            val_new = val
            for _ in range(60):
                w_new = self.project(wv - step * grad)
                dvec = w_new - wv
                if not np.any(dvec):
                    break
                val_new = self.al_value(w_new, lam, nus, mu)
                if val_new <= f_ref + 1e-4 * float(grad @ dvec):
                    break
                step *= 0.5
            if not np.any(w_new - wv):
                break
            prev_w, prev_grad = wv, grad
            wv, val = w_new, val_new
            grad = self.al_grad(wv, lam, nus, mu)
            recent.append(val)
            its += 1
        return wv, its


def minimize_energy(problem: EnergyMinProblem) -> EnergyMinResult:
    """Solve for the bounded controller of least mean potential energy.

    Raises Infeasible when the transport conditions cannot be met under
    the bounds (detected up front for amplitude-only bounds, otherwise
    when the multiplier loop plateaus far from feasibility) and
    NoConvergence when the iteration budget runs out close to it.
    """
    spec = problem.spec
    cons = problem.constraints
    t_f = problem.t_f
    d, w0 = spec.distance, spec.omega0

    # amplitude alone caps the reachable displacement; durations under the
    # two-piece switching time are unreachable for every bound set
    t_box = (2.0 / w0) * math.sqrt(d / cons.delta)
    if t_f < t_box * (1.0 - 1e-9):
        raise Infeasible(
            f"t_f = {t_f:.6g} s is below {t_box:.6g} s, the least transport time "
            "the amplitude bound allows"
        )

    qp = _BoxQP(problem)
    n = qp.n

    def default_start() -> np.ndarray:
        if problem.init is not None:
            return qp.project(np.asarray(problem.init, dtype=float) / qp.delta)
        nodes = np.linspace(0.0, t_f, n)
        ramp = (6.0 * d / (w0**2 * t_f**2)) * (2.0 * nodes / t_f - 1.0)
        return qp.project(ramp / qp.delta)

    def run_once(w_start):
        wv = w_start.copy()
        lam, nus = qp.fresh_multipliers()
        mu = problem.mu0
        viol_prev = math.inf
        total_inner = 0
        history = []
        converged = False
        outer_done = 0
        stall = 0
        viol = math.inf
        for outer in range(1, problem.max_outer + 1):
            tol_inner = max(problem.stationarity_tol, min(1e-3, 0.1 * viol_prev))
            wv, its = qp.inner_solve(wv, lam, nus, mu, tol_inner)
            total_inner += its
            viol = qp.violation(wv)
            history.append((outer, qp.objective(wv), viol, mu))
            outer_done = outer
            if viol <= problem.constraint_tol:
                wv, its = qp.inner_solve(wv, lam, nus, mu, problem.stationarity_tol)
                total_inner += its
                viol = qp.violation(wv)
                if viol <= problem.constraint_tol:
                    converged = True
                    break
            c = qp.A @ wv + qp.c0
            lam = np.clip(lam + mu * c, -_LAM_MAX, _LAM_MAX)
            nus = [np.minimum(np.maximum(0.0, nu + mu * g), _LAM_MAX)
                   for nu, g in zip(nus, qp.ineq_rows(wv))]
            if viol > 0.5 * viol_prev:
                mu = min(mu * problem.mu_growth, _MU_MAX)
            if viol > 0.9 * viol_prev and mu >= _MU_MAX:
                stall += 1
                if stall >= 4:
                    break
            else:
                stall = 0
            viol_prev = viol
        return wv, converged, viol, outer_done, total_inner, history

    rng = np.random.default_rng(problem.seed)
    base = default_start()
    best = None
    for r in range(problem.restarts):
        start = base if r == 0 else qp.project(base + 0.1 * rng.standard_normal(n))
        attempt = run_once(start)
        if best is None:
            best = (attempt, r)
        else:
            cur_conv, cur_obj = attempt[1], qp.objective(attempt[0])
            old_conv, old_obj = best[0][1], qp.objective(best[0][0])
            if (cur_conv, -cur_obj) > (old_conv, -old_obj):
                best = (attempt, r)
    (wv, converged, viol, outer_done, total_inner, history), which = best

    if not converged:
        if viol > 1e-3:
            err = Infeasible(
                f"constraint violation {viol:.3e} after {outer_done} multiplier updates; "
                "the transport conditions cannot be met under these bounds"
            )
        else:
            err = NoConvergence(
                f"violation {viol:.3e} still above tolerance {problem.constraint_tol:.1e} "
                f"after {outer_done} outer iterations"
            )
        err.history = tuple(history)
        raise err

    u_nodes = qp.delta * wv
    breaks = np.linspace(0.0, t_f, n)
    u_segments = tuple(
        PiecewiseSegment(breaks[i], breaks[i + 1],
                         (u_nodes[i], (u_nodes[i + 1] - u_nodes[i]) / qp.L))
        for i in range(n - 1)
    )
    protocol = Protocol(
        spec=spec,
        constraints=cons,
        t_f=t_f,
        kind=ProtocolKind.NUMERICAL,
        switch_times=(),
        u_segments=u_segments,
        qc_segments=_qc_segments_from_u(spec, u_segments),
    )
    e_p = avg_potential_energy(protocol)
    report = OptimizationReport(
        converged=True,
        objective=e_p,
        ratio_to_lower_bound=e_p / qp.e_min,
        max_violation=viol,
        outer_iterations=outer_done,
        inner_iterations=total_inner,
        restarts_used=which + 1,
        history=tuple(history),
    )
    return EnergyMinResult(protocol, e_p, report)


def check_gradient(problem: EnergyMinProblem, n_points: int = 10, seed: int = 0,
                   fd_step: float = 1e-6) -> float:
    """Largest relative mismatch between adjoint and finite-difference grads.

    Draws random box points, forms a random weighting of the terminal
    conditions plus the scaled objective, and compares the adjoint-based
    gradient against central differences of forward integrations.
    """
    spec = problem.spec
    grid = problem.grid
    delta = problem.constraints.delta
    d, w0 = spec.distance, spec.omega0
    t_f = problem.t_f
    n = grid.n_nodes
    qp = _BoxQP(problem)
    Gs = qp.A * qp.eq_scale[:, None]

    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n_points):
        wv = rng.uniform(-1.0, 1.0, n)
        lam = rng.standard_normal(2)

        def forward(vals):
            x1, x2 = kernels.transcribe_terminal(delta * vals, t_f, w0, grid.substeps)
            c = np.array([(x1 - d) / d, x2 / (d * w0)])
            return float(lam @ c) + qp.objective(vals)

        analytic = Gs.T @ lam + qp.objective_grad(wv)
        for j in range(n):
            wp = wv.copy()
            wm = wv.copy()
            wp[j] += fd_step
            wm[j] -= fd_step
            fd = (forward(wp) - forward(wm)) / (2.0 * fd_step)
            scale = max(1.0, abs(analytic[j]))
            worst = max(worst, abs(fd - analytic[j]) / scale)
    return worst
