"""Command-line front end: protocol generation, verification, sweeps.

Subcommands
-----------
design    generate a protocol, write JSON + sampled trajectory CSV
verify    re-integrate a protocol file and emit a metrics report
sweep     tabulate near-minimal times or energy comparisons over a bound grid
shoot     recover switching times with the damped Newton solver
optimize  minimize time-averaged potential energy at fixed duration

Configuration comes from a flat JSON file (``--config``) and/or flags;
flags override the file, the file overrides built-in defaults. Bounds can
be given as dimensionless ratios (``--delta-ratio`` = delta/d, epsilon in
units of d*omega0, zeta in units of d*omega0^2) or in SI units; if both
forms are present the ratio wins and a warning is printed.

Exit codes are a stable contract: 0 ok, 2 input error, 3 verification
failure, 4 solver failure. The output directory is the first of
``--outdir``, ``$TRAPSHUTTLE_OUTDIR``, or the working directory.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from pathlib import Path

import numpy as np

from .model import (
    RB87_MASS,
    ConstraintSet,
    DomainError,
    EvaluationError,
    Infeasible,
    NoConvergence,
    OutOfRange,
    RegimeError,
    SingularJacobian,
    TransportError,
    TransportSpec,
    eval_protocol,
    load_protocol,
    save_protocol,
)
from . import dynamics, energymin, protocols, shooting

__all__ = ["main"]

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_VERIFY = 3
EXIT_SOLVER = 4

_INPUT_ERRORS = (DomainError, OutOfRange, RegimeError)
_SOLVER_ERRORS = (Infeasible, NoConvergence, SingularJacobian, EvaluationError)

_PARTICLES = {"rb87": RB87_MASS}

# real defaults live here; argparse stores None so that "flag was given"
# stays distinguishable from "default", letting config files sit in between
_COMMON_DEFAULTS = {
    "config": None,
    "outdir": None,
    "particle": "rb87",
    "mass": None,
    "frequency": 20.0,
    "distance": 0.01,
    "delta_ratio": None,
    "delta": None,
    "epsilon_ratio": None,
    "epsilon": None,
    "zeta_ratio": None,
    "zeta": None,
}

_COMMAND_DEFAULTS = {
    "design": {
        "kind": "bang",
        "t_f": None,
        "samples": 1001,
        "out_prefix": None,
        "delta_ratio_fallback": 0.1,
    },
    "verify": {
        "protocol": None,
        "steps": 10_000,
        "tol": 1e-8,
        "out": None,
    },
    "sweep": {
        "mode": "time",
        "epsilon_range": "0.05:0.30:26",
        "zeta_ratios": "0.8,1.2,1.6",
        "out": None,
        "delta_ratio_fallback": 0.1,
    },
    "shoot": {
        "guess": None,
        "rho": 0.5,
        "tol": 1e-4,
        "max_iter": 60,
        "fd_step": 1e-7,
        "out_prefix": "shoot",
        "delta_ratio_fallback": 0.1,
        "epsilon_ratio_fallback": 0.1,
        "zeta_ratio_fallback": 0.5,
    },
    "optimize": {
        "t_f": None,
        "n_nodes": 100,
        "substeps": 10,
        "restarts": 1,
        "seed": 0,
        "constraint_tol": 1e-8,
        "stationarity_tol": 1e-8,
        "max_outer": 40,
        "max_inner": 4000,
        "out_prefix": "optimize",
        "delta_ratio_fallback": 0.1,
    },
}


class _CliError(Exception):
    """Input-level failure carrying its exit code."""

    def __init__(self, message: str, code: int = EXIT_INPUT):
        super().__init__(message)
        self.code = code


def _float(text):
    return float(text)


def _add_common(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("system")
    g.add_argument("--config", help="flat JSON config file; flags override it")
    g.add_argument("--outdir", help="output directory (default $TRAPSHUTTLE_OUTDIR or cwd)")
    g.add_argument("--particle", choices=sorted(_PARTICLES), help="mass preset (default rb87)")
    g.add_argument("--mass", type=_float, help="particle mass in kg (overrides --particle)")
    g.add_argument("--frequency", type=_float, help="trap frequency in Hz (omega0 = 2*pi*f)")
    g.add_argument("--distance", type=_float, help="transport distance in m")
    b = parser.add_argument_group("bounds (ratio form wins over SI if both given)")
    b.add_argument("--delta-ratio", type=_float, help="displacement bound as delta/d")
    b.add_argument("--delta", type=_float, help="displacement bound in m")
    b.add_argument("--epsilon-ratio", type=_float, help="velocity bound as epsilon/(d*omega0)")
    b.add_argument("--epsilon", type=_float, help="velocity bound in m/s")
    b.add_argument("--zeta-ratio", type=_float, help="acceleration bound as zeta/(d*omega0^2)")
    b.add_argument("--zeta", type=_float, help="acceleration bound in m/s^2")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="trapshuttle",
        description="Bounded shortcut protocols for harmonic trap transport.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("design", help="generate a protocol and write JSON + CSV")
    p.add_argument("--kind", choices=("bang", "vel", "acc", "ansatz"),
                   help="protocol family (default bang)")
    p.add_argument("--t-f", type=_float, help="duration in s (required for ansatz)")
    p.add_argument("--samples", type=int, help="trajectory CSV row count (default 1001)")
    p.add_argument("--out-prefix", help="basename for outputs (default: kind name)")
    _add_common(p)

    p = sub.add_parser("verify", help="re-integrate a protocol file, emit metrics")
    p.add_argument("protocol", nargs="?", help="protocol JSON file")
    p.add_argument("--steps", type=int, help="RK4 step count (default 10000)")
    p.add_argument("--tol", type=_float,
                   help="bound on the dimensionless terminal residuals (default 1e-8)")
    p.add_argument("--out", help="metrics JSON path (default <protocol>_metrics.json)")
    _add_common(p)

    p = sub.add_parser("sweep", help="tabulate times or energies over a bound grid")
    p.add_argument("--mode", choices=("time", "energy"), help="table type (default time)")
    p.add_argument("--epsilon-range", help="epsilon/(d*omega0) grid as start:stop:count")
    p.add_argument("--zeta-ratios", help="comma list of zeta/(d*omega0^2) values")
    p.add_argument("--out", help="CSV path (default sweep.csv in the output dir)")
    _add_common(p)

    p = sub.add_parser("shoot", help="recover switching times by damped Newton")
    p.add_argument("--guess", help="comma list of 11 times in ms (default 5,10,...,55)")
    p.add_argument("--rho", type=_float, help="damping factor in (0, 1] (default 0.5)")
    p.add_argument("--tol", type=_float, help="residual norm tolerance (default 1e-4)")
    p.add_argument("--max-iter", type=int, help="iteration cap (default 60)")
    p.add_argument("--fd-step", type=_float, help="Jacobian FD step (default 1e-7)")
    p.add_argument("--out-prefix", help="basename for outputs (default shoot)")
    _add_common(p)

    p = sub.add_parser("optimize", help="minimize average potential energy at fixed t_f")
    p.add_argument("--t-f", type=_float, help="duration in s (required)")
    p.add_argument("--n-nodes", type=int, help="controller nodes N (default 100)")
    p.add_argument("--substeps", type=int, help="integration substeps M (default 10)")
    p.add_argument("--restarts", type=int, help="random restarts (default 1)")
    p.add_argument("--seed", type=int, help="restart RNG seed (default 0)")
    p.add_argument("--constraint-tol", type=_float, help="feasibility tolerance (default 1e-8)")
    p.add_argument("--stationarity-tol", type=_float, help="projected-gradient tolerance")
    p.add_argument("--max-outer", type=int, help="outer iteration cap (default 40)")
    p.add_argument("--max-inner", type=int, help="inner iteration cap (default 4000)")
    p.add_argument("--out-prefix", help="basename for outputs (default optimize)")
    _add_common(p)

    return parser


# ---------------------------------------------------------------------------
# Config merge
# ---------------------------------------------------------------------------

def _merge_config(args: argparse.Namespace) -> dict:
    """defaults <- config file <- explicitly given flags."""
    command = args.command
    merged = dict(_COMMON_DEFAULTS)
    merged.update(_COMMAND_DEFAULTS[command])
    known = set(merged)

    if args.config is not None:
        try:
            raw = json.loads(Path(args.config).read_text())
        except OSError as exc:
            raise _CliError(f"cannot read config file: {exc}")
        except json.JSONDecodeError as exc:
            raise _CliError(f"config file is not valid JSON: {exc}")
        if not isinstance(raw, dict):
            raise _CliError("config file must hold a flat JSON object")
        for key, value in raw.items():
            dest = key.replace("-", "_")
            if dest not in known or dest.endswith("_fallback"):
                raise _CliError(f"unknown config key {key!r} for command {command!r}")
            merged[dest] = value

    for dest, value in vars(args).items():
        if dest in ("command",) or value is None:
            continue
        merged[dest] = value
    return merged


def _resolve_spec(cfg: dict) -> TransportSpec:
    mass = cfg["mass"]
    if mass is None:
        mass = _PARTICLES[cfg["particle"]]
    frequency = float(cfg["frequency"])
    if not frequency > 0:
        raise DomainError("frequency", f"trap frequency must be positive, got {frequency}")
    return TransportSpec(
        mass=float(mass),
        omega0=2.0 * np.pi * frequency,
        distance=float(cfg["distance"]),
    )


def _resolve_bound(cfg: dict, name: str, scale: float):
    ratio, si = cfg[f"{name}_ratio"], cfg[name]
    if ratio is not None and si is not None:
        print(f"warning: both --{name}-ratio and --{name} given; ratio wins", file=sys.stderr)
    if ratio is not None:
        return float(ratio) * scale
    if si is not None:
        return float(si)
    fallback = cfg.get(f"{name}_ratio_fallback")
    return None if fallback is None else float(fallback) * scale


def _resolve_constraints(cfg: dict, spec: TransportSpec) -> ConstraintSet:
    d, w = spec.distance, spec.omega0
    delta = _resolve_bound(cfg, "delta", d)
    if delta is None:
        raise DomainError("delta", "a displacement bound is required (--delta-ratio or --delta)")
    return ConstraintSet(
        delta=delta,
        epsilon=_resolve_bound(cfg, "epsilon", d * w),
        zeta=_resolve_bound(cfg, "zeta", d * w**2),
    )


def _outdir(cfg: dict) -> Path:
    root = cfg["outdir"] or os.environ.get("TRAPSHUTTLE_OUTDIR") or "."
    path = Path(root)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _fmt_cell(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        # repr is shortest-round-trip, so coefficients survive losslessly
        return repr(float(v))
    return str(v)


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt_cell(v) for v in row])


def _print_times(p) -> None:
    print(f"t_f = {p.t_f * 1e3:.2f} ms")
    if p.switch_times:
        times = ", ".join(f"{t * 1e3:.4f}" for t in p.switch_times)
        print(f"switching times (ms): {times}")
    if p.regime_warning:
        print(f"warning: {p.regime_warning}", file=sys.stderr)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------

def cmd_design(cfg: dict) -> int:
    spec = _resolve_spec(cfg)
    cons = _resolve_constraints(cfg, spec)
    kind = cfg["kind"]
    if kind == "bang":
        p = protocols.bang_bang(spec, cons.delta)
    elif kind == "vel":
        if cons.epsilon is None:
            raise DomainError("epsilon", "vel protocol needs a velocity bound")
        p = protocols.vel_bounded(spec, cons.delta, cons.epsilon)
    elif kind == "acc":
        if cons.epsilon is None or cons.zeta is None:
            raise DomainError("zeta", "acc protocol needs velocity and acceleration bounds")
        p = protocols.acc_bounded(spec, cons.delta, cons.epsilon, cons.zeta)
    else:
        if cfg["t_f"] is None:
            raise DomainError("t_f", "ansatz protocol needs an explicit duration (--t-f)")
        p = protocols.polynomial_ansatz(spec, float(cfg["t_f"]))

    samples = int(cfg["samples"])
    if samples < 2:
        raise DomainError("samples", f"need at least 2 samples, got {samples}")

    out = _outdir(cfg)
    prefix = cfg["out_prefix"] or p.kind.value
    json_path, csv_path = out / f"{prefix}.json", out / f"{prefix}.csv"
    save_protocol(p, json_path)
    written = str(json_path)
    if p.u_segments:
        ts = np.linspace(0.0, p.t_f, samples)
        u, qc, q0, qc_dot = eval_protocol(p, ts)
        _write_csv(csv_path, ("t", "u", "qc", "q0", "qc_dot"), zip(ts, u, qc, q0, qc_dot))
        written += f" and {csv_path}"
    _print_times(p)
    print(f"wrote {written}")
    return EXIT_OK


def cmd_verify(cfg: dict) -> int:
    if not cfg["protocol"]:
        raise _CliError("verify needs a protocol file argument")
    path = Path(cfg["protocol"])
    try:
        p = load_protocol(path)
    except OSError as exc:
        raise _CliError(f"cannot read protocol file: {exc}")
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise _CliError(f"malformed protocol file: {exc}")

    report = dynamics.verify_protocol(p, steps=int(cfg["steps"]))
    out_path = Path(cfg["out"]) if cfg["out"] else _outdir(cfg) / f"{path.stem}_metrics.json"
    out_path.write_text(json.dumps(dynamics.metrics_to_dict(report), indent=2) + "\n")

    tol = float(cfg["tol"])
    res = report.boundary_residuals
    terminal = max(abs(res["qc_end"]), abs(res["qc_dot_end"]))
    print(f"terminal residuals: qc {res['qc_end']:.3e}, qc_dot {res['qc_dot_end']:.3e} (tol {tol:g})")
    print(f"wrote {out_path}")
    if not terminal < tol:
        print("verification FAILED", file=sys.stderr)
        return EXIT_VERIFY
    print("verification passed")
    return EXIT_OK


def _parse_grid(text: str):
    parts = str(text).split(":")
    if len(parts) != 3:
        raise _CliError(f"grid must be start:stop:count, got {text!r}")
    try:
        start, stop, count = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError as exc:
        raise _CliError(f"bad grid {text!r}: {exc}")
    if count < 1 or not np.isfinite(start) or not np.isfinite(stop):
        raise _CliError(f"bad grid {text!r}")
    return np.linspace(start, stop, count)


def _parse_list(text: str):
    try:
        values = [float(tok) for tok in str(text).split(",") if tok.strip()]
    except ValueError as exc:
        raise _CliError(f"bad list {text!r}: {exc}")
    if not values:
        raise _CliError(f"empty list {text!r}")
    return values


def cmd_sweep(cfg: dict) -> int:
    spec = _resolve_spec(cfg)
    d, w = spec.distance, spec.omega0
    delta = _resolve_bound(cfg, "delta", d)
    if delta is None:
        raise DomainError("delta", "a displacement bound is required")
    eps_grid = _parse_grid(cfg["epsilon_range"])
    zeta_vals = _parse_list(cfg["zeta_ratios"])
    out_path = Path(cfg["out"]) if cfg["out"] else _outdir(cfg) / "sweep.csv"

    rows = []
    if cfg["mode"] == "time":
        header = ("epsilon_ratio", "zeta_ratio", "t_f")
        for zr in zeta_vals:
            for er in eps_grid:
                cons = ConstraintSet(delta=delta, epsilon=er * d * w, zeta=zr * d * w**2)
                rows.append((er, zr, protocols.near_minimal_time(spec, cons)))
    else:
        header = ("epsilon_ratio", "zeta_ratio", "t_f",
                  "ep_smooth", "ep_ansatz", "slosh_smooth", "slosh_ansatz")
        for zr in zeta_vals:
            for er in eps_grid:
                p = protocols.acc_bounded(spec, delta, er * d * w, zr * d * w**2)
                if p.regime_warning:
                    continue
                q = protocols.polynomial_ansatz(spec, p.t_f)
                rows.append((er, zr, p.t_f,
                             dynamics.avg_potential_energy(p),
                             dynamics.avg_potential_energy(q),
                             dynamics.sloshing_amplitude(p),
                             dynamics.sloshing_amplitude(q)))

    _write_csv(out_path, header, rows)
    print(f"wrote {out_path} ({len(rows)} rows)")
    return EXIT_OK


def cmd_shoot(cfg: dict) -> int:
    spec = _resolve_spec(cfg)
    cons = _resolve_constraints(cfg, spec)
    guess = shooting.DEFAULT_GUESS_S
    if cfg["guess"] is not None:
        guess = tuple(v * 1e-3 for v in _parse_list(cfg["guess"]))
    problem = shooting.ShootingProblem(
        spec=spec,
        constraints=cons,
        guess=guess,
        rho=float(cfg["rho"]),
        tol=float(cfg["tol"]),
        max_iter=int(cfg["max_iter"]),
        fd_step=float(cfg["fd_step"]),
    )

    out = _outdir(cfg)
    prefix = cfg["out_prefix"]
    history_path = out / f"{prefix}_history.csv"
    header = ("iteration", "residual_norm") + tuple(f"t{k}" for k in range(1, 11)) + ("t_f",)
    try:
        result = shooting.solve(problem)
    except (NoConvergence, SingularJacobian) as exc:
        history = getattr(exc, "history", ())
        if history:
            _write_csv(history_path, header,
                       ((it, norm) + tuple(g) for it, (g, norm) in enumerate(history)))
            print(f"wrote {history_path}", file=sys.stderr)
        raise

    _write_csv(history_path, header,
               ((it, norm) + tuple(g) for it, (g, norm) in enumerate(result.history)))
    times, t_f = result.solution[:10], result.solution[10]
    p = protocols.acc_protocol_from_times(spec, cons.delta, cons.epsilon, cons.zeta, times, t_f)
    protocol_path = out / f"{prefix}.json"
    save_protocol(p, protocol_path)
    print(f"converged in {result.iterations} iterations, |f| = {result.residual_norm:.3e}")
    _print_times(p)
    print(f"wrote {history_path} and {protocol_path}")
    return EXIT_OK


def cmd_optimize(cfg: dict) -> int:
    spec = _resolve_spec(cfg)
    cons = _resolve_constraints(cfg, spec)
    if cfg["t_f"] is None:
        raise DomainError("t_f", "optimize needs an explicit duration (--t-f)")
    t_f = float(cfg["t_f"])
    problem = energymin.EnergyMinProblem(
        spec=spec,
        constraints=cons,
        t_f=t_f,
        grid=energymin.TranscriptionGrid.for_duration(
            t_f, n_nodes=int(cfg["n_nodes"]), substeps=int(cfg["substeps"])
        ),
        constraint_tol=float(cfg["constraint_tol"]),
        stationarity_tol=float(cfg["stationarity_tol"]),
        max_outer=int(cfg["max_outer"]),
        max_inner=int(cfg["max_inner"]),
        restarts=int(cfg["restarts"]),
        seed=int(cfg["seed"]),
    )
    result = energymin.minimize_energy(problem)

    out = _outdir(cfg)
    prefix = cfg["out_prefix"]
    csv_path, json_path = out / f"{prefix}.csv", out / f"{prefix}.json"
    p = result.protocol
    breaks = [s.t_start for s in p.u_segments] + [p.t_f]
    nodes = [s.coeffs[0] for s in p.u_segments] + [0.0]
    _write_csv(csv_path, ("t", "u"), zip(breaks, nodes))
    save_protocol(p, json_path)

    report = result.report
    print(f"E_p = {result.avg_potential_energy:.6e} J")
    print(f"E_p / E_p^min = {report.ratio_to_lower_bound:.6f}")
    print(f"max constraint violation = {report.max_violation:.3e}")
    print(f"outer iterations = {report.outer_iterations}, inner = {report.inner_iterations}")
    print(f"wrote {csv_path} and {json_path}")
    return EXIT_OK


_COMMANDS = {
    "design": cmd_design,
    "verify": cmd_verify,
    "sweep": cmd_sweep,
    "shoot": cmd_shoot,
    "optimize": cmd_optimize,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, which matches the input-error code
        return EXIT_INPUT if exc.code else EXIT_OK
    try:
        cfg = _merge_config(args)
        return _COMMANDS[args.command](cfg)
    except _CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except _INPUT_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except _SOLVER_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
