"""Integration, verification, and scalar metrics."""

import json
import math

import numpy as np
import pytest

from trapshuttle.model import DomainError, OutOfRange, RegimeError
from trapshuttle import dynamics, protocols
from trapshuttle.dynamics import (
    State,
    avg_potential_energy,
    instantaneous_energy,
    lr_phase,
    metrics_to_dict,
    protocol_boundary_states,
    rk4_integrate,
    sloshing_amplitude,
    verify_protocol,
)

import _checks


def _oscillator(w0):
    def deriv(t, x):
        return np.array([x[1], -w0**2 * x[0]])
    return deriv


class TestRk4Integrate:
    def test_one_period_returns_to_start(self, spec):
        w = spec.omega0
        T = 2 * math.pi / w
        amp = 1e-3
        _, xs = rk4_integrate(_oscillator(w), np.array([amp, 0.0]), 0.0, T, 10_000)
        assert abs(xs[-1, 0] - amp) < 1e-8 * amp
        assert abs(xs[-1, 1]) < 1e-8 * amp * w

    def test_zero_state_stays_zero(self, spec):
        _, xs = rk4_integrate(_oscillator(spec.omega0), np.array([0.0, 0.0]), 0.0, 0.1, 500)
        assert np.all(xs == 0.0)

    def test_state_input_accepted(self, spec):
        _, xs = rk4_integrate(_oscillator(spec.omega0), State(x1=1e-3, x2=0.0), 0.0, 0.01, 100)
        assert xs.shape == (101, 2)

    def test_fourth_order_convergence(self, spec):
        w = spec.omega0
        T = 2 * math.pi / w
        errs = []
        for steps in (1000, 2000, 4000):
            ts, xs = rk4_integrate(_oscillator(w), np.array([1.0, 0.0]), 0.0, T, steps)
            errs.append(np.max(np.abs(xs[:, 0] - np.cos(w * ts))))
        for coarse, fine in zip(errs, errs[1:]):
            assert 12.8 <= coarse / fine <= 19.2

    def test_rejects_bad_steps_and_times(self, spec):
        f = _oscillator(spec.omega0)
        with pytest.raises(DomainError, match="steps"):
            rk4_integrate(f, np.zeros(2), 0.0, 1.0, 0)
        with pytest.raises(DomainError, match="t1"):
            rk4_integrate(f, np.zeros(2), 1.0, 1.0, 10)


class TestProtocolIntegration:
    def test_boundary_states_match_closed_form(self, spec):
        d, w = spec.distance, spec.omega0
        p = protocols.acc_bounded(spec, 0.1 * d, 0.1 * d * w, 0.5 * d * w**2)
        _checks.check_rk4_oracle(p)

    def test_degenerate_protocol_rejected(self, spec):
        d, w = spec.distance, spec.omega0
        p = protocols.acc_bounded(spec, 0.1 * d, 0.4 * d * w, 0.2 * d * w**2)
        with pytest.raises(RegimeError):
            protocol_boundary_states(p)

    def test_verify_protocol_reports_clean_transport(self, spec):
        d, w = spec.distance, spec.omega0
        p = protocols.vel_bounded(spec, 0.1 * d, 0.1 * d * w)
        report = verify_protocol(p)
        res = report.boundary_residuals
        assert abs(res["qc_end"]) < 1e-8
        assert abs(res["qc_dot_end"]) < 1e-8
        assert abs(res["qc_ddot_end"]) < 1e-9
        assert report.final_excess_energy < 1e-12 * spec.mass * (d * w) ** 2
        ts, energies = report.energy_trace
        assert len(ts) == len(energies)
        assert np.all(energies >= spec.hbar * w * 0.5 * (1 - 1e-12))

    def test_metrics_dict_is_json_ready(self, spec):
        p = protocols.bang_bang(spec, 0.1 * spec.distance)
        blob = json.dumps(metrics_to_dict(verify_protocol(p)))
        data = json.loads(blob)
        assert set(data) == {
            "avg_potential_energy", "sloshing_amplitude", "final_excess_energy",
            "boundary_residuals", "energy_trace",
        }


class TestAvgPotentialEnergy:
    def test_bang_bang_closed_form(self, spec):
        delta = 0.1 * spec.distance
        p = protocols.bang_bang(spec, delta)
        expected = 0.5 * spec.mass * spec.omega0**2 * delta**2
        assert avg_potential_energy(p) == pytest.approx(expected, rel=1e-13)

    def test_matches_dense_sampling(self, spec):
        d, w = spec.distance, spec.omega0
        p = protocols.acc_bounded(spec, 0.1 * d, 0.1 * d * w, 0.5 * d * w**2)
        ts = np.linspace(0.0, p.t_f, 200_001)
        u, _, _, _ = dynamics.eval_protocol(p, ts)
        riemann = np.trapezoid(u**2, ts) / p.t_f
        expected = 0.5 * spec.mass * w**2 * riemann
        assert avg_potential_energy(p) == pytest.approx(expected, rel=1e-8)

    def test_lower_bound_for_canonical_protocols(self, spec):
        d, w = spec.distance, spec.omega0
        for p in (
            protocols.bang_bang(spec, 0.1 * d),
            protocols.vel_bounded(spec, 0.1 * d, 0.1 * d * w),
            protocols.acc_bounded(spec, 0.1 * d, 0.1 * d * w, 0.5 * d * w**2),
            protocols.polynomial_ansatz(spec, 0.06),
        ):
            _checks.check_energy_lower_bound(p)


class TestSloshing:
    def test_bang_bang_analytic_value(self, spec):
        delta = 0.1 * spec.distance
        p = protocols.bang_bang(spec, delta)
        expected = 4.0 * delta * math.sin(spec.omega0 * p.t_f / 4.0) ** 2
        assert sloshing_amplitude(p) == pytest.approx(expected, rel=1e-9)

    def test_smooth_protocol_is_quadrature_small(self, spec):
        d, w = spec.distance, spec.omega0
        p = protocols.acc_bounded(spec, 0.1 * d, 0.1 * d * w, 0.5 * d * w**2)
        assert sloshing_amplitude(p) < 1e-12 * d

    def test_panel_doubling_converged(self, spec):
        d = spec.distance
        p = protocols.bang_bang(spec, 0.1 * d)
        a1 = sloshing_amplitude(p, panels=2**14)
        a2 = sloshing_amplitude(p, panels=2**15)
        assert abs(a2 - a1) < 1e-10 * d

    def test_panel_validation(self, spec):
        p = protocols.bang_bang(spec, 0.1 * spec.distance)
        with pytest.raises(DomainError, match="panels"):
            sloshing_amplitude(p, panels=1)


class TestModeEnergyAndPhase:
    def test_final_energy_is_mode_energy(self, spec):
        w = spec.omega0
        for n in (0, 3):
            for p in (
                protocols.bang_bang(spec, 0.1 * spec.distance),
                protocols.polynomial_ansatz(spec, 0.06),
            ):
                e = instantaneous_energy(p, p.t_f, n)
                assert e == pytest.approx(spec.hbar * w * (n + 0.5), rel=1e-12)

    def test_initial_energy_for_continuous_kinds(self, spec):
        d, w = spec.distance, spec.omega0
        for p in (
            protocols.vel_bounded(spec, 0.1 * d, 0.1 * d * w),
            protocols.acc_bounded(spec, 0.1 * d, 0.1 * d * w, 0.5 * d * w**2),
        ):
            assert instantaneous_energy(p, 0.0) == pytest.approx(0.5 * spec.hbar * w, rel=1e-12)

    def test_mode_index_validation(self, spec):
        p = protocols.bang_bang(spec, 0.1 * spec.distance)
        with pytest.raises(DomainError, match="n"):
            instantaneous_energy(p, 0.0, n=-1)
        with pytest.raises(DomainError, match="n"):
            lr_phase(p, 0.0, n=1.5)

    def test_phase_starts_at_zero_and_decreases(self, spec):
        p = protocols.vel_bounded(spec, 0.1 * spec.distance, 0.1 * spec.distance * spec.omega0)
        ts = np.linspace(0.0, p.t_f, 50)
        alpha = lr_phase(p, ts)
        assert alpha[0] == 0.0
        assert np.all(np.diff(alpha) < 0.0)

    def test_phase_mode_offset_is_linear(self, spec):
        p = protocols.vel_bounded(spec, 0.1 * spec.distance, 0.1 * spec.distance * spec.omega0)
        t = 0.8 * p.t_f
        gap = lr_phase(p, t, n=2) - lr_phase(p, t, n=0)
        # each phase carries a large common dynamical term, so the gap is
        # only good to the ulp of that magnitude
        assert gap == pytest.approx(-2.0 * spec.omega0 * t, abs=1e-8)

    def test_phase_time_domain(self, spec):
        p = protocols.bang_bang(spec, 0.1 * spec.distance)
        with pytest.raises(OutOfRange):
            lr_phase(p, p.t_f + 1.0)
