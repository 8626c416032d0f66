"""Trajectory design for particle transport in a moving harmonic trap.

Generate bounded shortcut protocols, verify them by forward integration,
recover switching times with a multiple-shooting Newton solver, and
minimize time-averaged potential energy by direct transcription.
"""

from .model import (
    HBAR,
    RB87_MASS,
    ConstraintSet,
    DomainError,
    EvaluationError,
    Infeasible,
    NoConvergence,
    OutOfRange,
    PiecewiseSegment,
    Protocol,
    ProtocolKind,
    RegimeError,
    SingularJacobian,
    TransportError,
    TransportSpec,
    eval_protocol,
    load_protocol,
    protocol_from_dict,
    protocol_to_dict,
    save_protocol,
    validate_spec,
)
from .protocols import (
    SwitchingSchedule,
    acc_bounded,
    acc_bounded_schedule,
    acc_protocol_from_times,
    bang_bang,
    bang_bang_schedule,
    near_minimal_time,
    polynomial_ansatz,
    vel_bounded,
    vel_bounded_schedule,
)
from .dynamics import (
    MetricsReport,
    State,
    avg_potential_energy,
    instantaneous_energy,
    lr_phase,
    rk4_integrate,
    sloshing_amplitude,
    verify_protocol,
)
from .shooting import ShootingProblem, ShootingResult, jacobian, residual, solve
from .energymin import (
    EnergyMinProblem,
    EnergyMinResult,
    OptimizationReport,
    TranscriptionGrid,
    minimize_energy,
    unbounded_optimum,
)

__version__ = "0.1.0"
