"""Multiple-shooting recovery of the 11-interval switching schedule.

Unknowns are the ten switching times plus t_f. The second derivative of u
follows the fixed bang-bang sign pattern over the intervals the unknowns
define; u, du/dt, and the transport moments are integrated analytically
from rest, so the residual is an exact piecewise-polynomial function of
the unknowns. A damped Newton iteration g <- g - rho * J^-1 f drives the
residual to zero.

Residual components, in order, each nondimensionalized:

    (qc(t_f) - d)/d,  qc_dot(t_f)/(d w0),  u(t_f)/delta,  u_dot(t_f)/eps,
    (u(t3) + delta)/delta,  (u(t7) - delta)/delta,
    (u_dot(t1) + eps)/eps,  u_dot(t3)/eps,  (u_dot(t5) - eps)/eps,
    u_dot(t7)/eps,  (u_dot(t9) + eps)/eps
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import (
    ConstraintSet,
    DomainError,
    EvaluationError,
    NoConvergence,
    SingularJacobian,
    TransportSpec,
)
from .protocols import _ACC_SIGNS

__all__ = ["ShootingProblem", "ShootingResult", "residual", "jacobian", "solve"]

DEFAULT_GUESS_S = tuple(0.005 * k for k in range(1, 12))  # 5, 10, ..., 55 ms


@dataclass(frozen=True)
class ShootingProblem:
    """Problem statement for the switching-time solver.

    guess holds (t1..t10, t_f) in seconds, strictly increasing. rho is the
    fixed update damping; tol bounds the dimensionless residual norm.
    """

    spec: TransportSpec
    constraints: ConstraintSet
    guess: tuple[float, ...] = DEFAULT_GUESS_S
    rho: float = 0.5
    tol: float = 1e-4
    max_iter: int = 60
    fd_step: float = 1e-7

    def __post_init__(self):
        if self.constraints.epsilon is None or self.constraints.zeta is None:
            raise DomainError("constraints", "shooting needs delta, epsilon and zeta bounds")
        g = tuple(float(t) for t in self.guess)
        if len(g) != 11:
            raise DomainError("guess", f"need 11 unknowns (t1..t10, t_f), got {len(g)}")
        if not all(math.isfinite(t) for t in g):
            raise DomainError("guess", "guess entries must be finite")
        if any(b <= a for a, b in zip(g, g[1:])):
            raise DomainError("guess", "guess must be strictly increasing")
        object.__setattr__(self, "guess", g)
        if not (0.0 < self.rho <= 1.0):
            raise DomainError("rho", f"update rate must lie in (0, 1], got {self.rho}")
        if not (self.tol > 0.0):
            raise DomainError("tol", "tolerance must be positive")
        if self.max_iter < 1:
            raise DomainError("max_iter", "need at least one iteration")
        if not (self.fd_step > 0.0):
            raise DomainError("fd_step", "finite-difference step must be positive")


@dataclass(frozen=True)
class ShootingResult:
    """Converged solve: solution (t1..t10, t_f), per-iteration history."""

    solution: tuple[float, ...]
    residual_norm: float
    iterations: int
    history: tuple[tuple[tuple[float, ...], float], ...]
    converged: bool


def residual(problem: ShootingProblem, times) -> np.ndarray:
    """Dimensionless 11-vector of defect conditions at the given unknowns.

    Integration runs over signed durations, so crossed (non-monotone)
    guesses still evaluate; collapsed inputs (t_f <= 0 or non-finite)
    raise EvaluationError.
    """
    t = np.asarray(times, dtype=float)
    if t.shape != (11,):
        raise EvaluationError(f"need 11 unknowns, got shape {t.shape}")
    if not np.all(np.isfinite(t)):
        raise EvaluationError("unknowns must be finite")
    t_f = t[10]
    if t_f <= 0.0:
        raise EvaluationError(f"degenerate unknowns: t_f = {t_f} is not positive")

    spec = problem.spec
    cons = problem.constraints
    d, w = spec.distance, spec.omega0
    delta, eps, zeta = cons.delta, cons.epsilon, cons.zeta

    bounds = np.concatenate(([0.0], t))
    # boundary-state log: u and u_dot at 0, t1, ..., t10, t_f
    u_at = np.empty(12)
    ud_at = np.empty(12)
    u_at[0] = 0.0
    ud_at[0] = 0.0
    u = 0.0
    ud = 0.0
    i0 = 0.0  # integral of u
    i1 = 0.0  # integral of s*u(s)
    for k in range(11):
        z = _ACC_SIGNS[k] * zeta
        lo = bounds[k]
        dt = bounds[k + 1] - lo
        seg0 = u * dt + ud * dt**2 / 2.0 + z * dt**3 / 6.0
        i0 += seg0
        i1 += lo * seg0 + (u * dt**2 / 2.0 + ud * dt**3 / 3.0 + z * dt**4 / 8.0)
        u += ud * dt + 0.5 * z * dt**2
        ud += z * dt
        u_at[k + 1] = u
        ud_at[k + 1] = ud
    qc_f = -(w**2) * (t_f * i0 - i1)
    qcd_f = -(w**2) * i0

    return np.array(
        [
            (qc_f - d) / d,
            qcd_f / (d * w),
            u_at[11] / delta,
            ud_at[11] / eps,
            (u_at[3] + delta) / delta,
            (u_at[7] - delta) / delta,
            (ud_at[1] + eps) / eps,
            ud_at[3] / eps,
            (ud_at[5] - eps) / eps,
            ud_at[7] / eps,
            (ud_at[9] + eps) / eps,
        ]
    )


def jacobian(problem: ShootingProblem, times) -> np.ndarray:
    """11x11 matrix of central finite differences with step fd_step."""
    t = np.asarray(times, dtype=float)
    h = problem.fd_step
    J = np.empty((11, 11))
    for j in range(11):
        tp = t.copy()
        tm = t.copy()
        tp[j] += h
        tm[j] -= h
        J[:, j] = (residual(problem, tp) - residual(problem, tm)) / (2.0 * h)
    return J


def solve(problem: ShootingProblem) -> ShootingResult:
    """Damped Newton iteration from problem.guess.

    Stops when the residual norm reaches problem.tol; raises
    SingularJacobian if the linear solve fails and NoConvergence when the
    iteration budget runs out (the partial history rides on the error).
    """
    g = np.asarray(problem.guess, dtype=float)
    history: list[tuple[tuple[float, ...], float]] = []
    norm = math.inf
    for it in range(problem.max_iter + 1):
        f = residual(problem, g)
        norm = float(np.linalg.norm(f))
        history.append((tuple(g), norm))
        if not math.isfinite(norm):
            err = NoConvergence(f"residual diverged at iteration {it}")
            err.history = tuple(history)
            raise err
        if norm <= problem.tol:
            return ShootingResult(
                solution=tuple(g),
                residual_norm=norm,
                iterations=it,
                history=tuple(history),
                converged=True,
            )
        if it == problem.max_iter:
            break
        J = jacobian(problem, g)
        try:
            step = np.linalg.solve(J, f)
        except np.linalg.LinAlgError:
            raise SingularJacobian(f"singular Jacobian at iteration {it}") from None
        if not np.all(np.isfinite(step)):
            raise SingularJacobian(f"non-finite Newton step at iteration {it}")
        g = g - problem.rho * step
    err = NoConvergence(
        f"residual norm {norm:.3e} still above tol {problem.tol:.3e} "
        f"after {problem.max_iter} iterations"
    )
    err.history = tuple(history)
    raise err
