"""Command-line interface: exit codes, outputs, configuration."""

import csv
import json

import pytest

from trapshuttle import cli, dynamics, protocols
from trapshuttle.model import load_protocol


@pytest.fixture(autouse=True)
def outdir(tmp_path, monkeypatch):
    monkeypatch.setenv("TRAPSHUTTLE_OUTDIR", str(tmp_path))
    return tmp_path


def _read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


class TestDesign:
    def test_bang_defaults(self, outdir, capsys):
        assert cli.main(["design"]) == 0
        out = capsys.readouterr().out
        assert "t_f = 50.33 ms" in out
        header, rows = _read_csv(outdir / "bang_bang.csv")
        assert header == ["t", "u", "qc", "q0", "qc_dot"]
        assert len(rows) == 1001
        p = load_protocol(outdir / "bang_bang.json")
        assert p.kind.value == "bang_bang"

    def test_acc_prints_switch_times(self, outdir, capsys):
        rc = cli.main([
            "design", "--kind", "acc",
            "--delta-ratio", "0.1", "--epsilon-ratio", "0.1", "--zeta-ratio", "0.5",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "t_f = 60.50 ms" in out
        assert "switching times (ms):" in out
        assert (outdir / "acc_bounded.json").exists()

    def test_ansatz_requires_duration(self, capsys):
        assert cli.main(["design", "--kind", "ansatz"]) == 2
        assert "t_f" in capsys.readouterr().err

    def test_out_prefix_and_samples(self, outdir, capsys):
        rc = cli.main(["design", "--out-prefix", "run1", "--samples", "11"])
        assert rc == 0
        _, rows = _read_csv(outdir / "run1.csv")
        assert len(rows) == 11

    def test_trajectory_matches_library(self, outdir, capsys):
        cli.main(["design", "--kind", "vel", "--epsilon-ratio", "0.1"])
        capsys.readouterr()
        p = load_protocol(outdir / "vel_bounded.json")
        import numpy as np
        ref = protocols.vel_bounded(p.spec, p.constraints.delta, p.constraints.epsilon)
        ts = np.linspace(0.0, p.t_f, 7)
        u_a = dynamics.eval_protocol(p, ts)[0]
        u_b = dynamics.eval_protocol(ref, ts)[0]
        np.testing.assert_allclose(u_a, u_b, rtol=0.0, atol=1e-18)


class TestVerify:
    def test_round_trip_passes(self, outdir, capsys):
        cli.main(["design", "--kind", "acc", "--epsilon-ratio", "0.1", "--zeta-ratio", "0.5"])
        rc = cli.main(["verify", str(outdir / "acc_bounded.json")])
        assert rc == 0
        assert "verification passed" in capsys.readouterr().out
        metrics = json.loads((outdir / "acc_bounded_metrics.json").read_text())
        p = load_protocol(outdir / "acc_bounded.json")
        expected = dynamics.avg_potential_energy(p)
        assert metrics["avg_potential_energy"] == pytest.approx(expected, rel=1e-12)

    def test_missing_file(self, capsys):
        assert cli.main(["verify", "no_such_protocol.json"]) == 2
        assert "error:" in capsys.readouterr().err

    def test_tampered_protocol_fails_verification(self, outdir, capsys):
        cli.main(["design"])
        capsys.readouterr()
        data = json.loads((outdir / "bang_bang.json").read_text())
        # shrink every time by half: parse-valid, physically wrong
        data["t_f"] *= 0.5
        data["switch_times"] = [0.5 * t for t in data["switch_times"]]
        for key in ("u_segments", "qc_segments"):
            for seg in data[key]:
                seg["t_start"] *= 0.5
                seg["t_end"] *= 0.5
        bad = outdir / "tampered.json"
        bad.write_text(json.dumps(data))
        assert cli.main(["verify", str(bad)]) == 3
        assert "verification FAILED" in capsys.readouterr().err


class TestConfig:
    def test_file_then_flag_precedence(self, outdir, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"frequency": 10.0}))
        assert cli.main(["design", "--config", str(cfg)]) == 0
        assert "t_f = 100.66 ms" in capsys.readouterr().out
        assert cli.main(["design", "--config", str(cfg), "--frequency", "20"]) == 0
        assert "t_f = 50.33 ms" in capsys.readouterr().out

    def test_unknown_key_rejected(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"freq": 10.0}))
        assert cli.main(["design", "--config", str(cfg)]) == 2
        assert "unknown config key" in capsys.readouterr().err

    def test_fallback_keys_not_settable(self, tmp_path, capsys):
        cfg = tmp_path / "cfg.json"
        cfg.write_text(json.dumps({"delta_ratio_fallback": 0.2}))
        assert cli.main(["design", "--config", str(cfg)]) == 2

    def test_ratio_wins_over_si_with_warning(self, capsys):
        rc = cli.main(["design", "--delta-ratio", "0.1", "--delta", "0.002"])
        assert rc == 0
        captured = capsys.readouterr()
        assert "ratio wins" in captured.err
        assert "t_f = 50.33 ms" in captured.out

    def test_outdir_flag_beats_env(self, tmp_path, monkeypatch, capsys):
        override = tmp_path / "elsewhere"
        assert cli.main(["design", "--outdir", str(override)]) == 0
        capsys.readouterr()
        assert (override / "bang_bang.json").exists()


class TestSweep:
    def test_time_table_shape(self, outdir, capsys):
        rc = cli.main([
            "sweep", "--epsilon-range", "0.05:0.15:3", "--zeta-ratios", "0.8,1.6",
        ])
        assert rc == 0
        header, rows = _read_csv(outdir / "sweep.csv")
        assert header == ["epsilon_ratio", "zeta_ratio", "t_f"]
        assert len(rows) == 6

    def test_energy_table_filters_and_orders(self, outdir, capsys):
        rc = cli.main([
            "sweep", "--mode", "energy",
            "--epsilon-range", "0.05:0.2:2", "--zeta-ratios", "0.8",
        ])
        assert rc == 0
        header, rows = _read_csv(outdir / "sweep.csv")
        assert header[:3] == ["epsilon_ratio", "zeta_ratio", "t_f"]
        assert 1 <= len(rows) <= 2
        for row in rows:
            assert float(row[3]) < float(row[4])

    def test_bad_grid_spec(self, capsys):
        assert cli.main(["sweep", "--epsilon-range", "0.05:0.3"]) == 2


class TestShoot:
    def test_defaults_converge(self, outdir, capsys):
        assert cli.main(["shoot"]) == 0
        out = capsys.readouterr().out
        assert "converged in 17 iterations" in out
        assert "t_f = 60.50 ms" in out
        header, rows = _read_csv(outdir / "shoot_history.csv")
        assert header[:2] == ["iteration", "residual_norm"]
        assert len(rows) == 18
        assert (outdir / "shoot.json").exists()

    def test_invalid_damping(self, capsys):
        assert cli.main(["shoot", "--rho", "1.5"]) == 2

    def test_budget_exhaustion_keeps_history(self, outdir, capsys):
        assert cli.main(["shoot", "--max-iter", "2"]) == 4
        assert (outdir / "shoot_history.csv").exists()
        _, rows = _read_csv(outdir / "shoot_history.csv")
        assert len(rows) == 3


class TestOptimize:
    def test_requires_duration(self, capsys):
        assert cli.main(["optimize"]) == 2

    def test_box_bounded_run(self, outdir, capsys):
        rc = cli.main([
            "optimize", "--t-f", "0.060", "--n-nodes", "40", "--substeps", "4",
        ])
        assert rc == 0
        out = capsys.readouterr().out
        assert "E_p / E_p^min = 1.0" in out
        header, rows = _read_csv(outdir / "optimize.csv")
        assert header == ["t", "u"]
        assert len(rows) == 40
        assert float(rows[-1][1]) == 0.0
        assert (outdir / "optimize.json").exists()

    def test_unreachable_duration(self, capsys):
        rc = cli.main(["optimize", "--t-f", "0.040", "--n-nodes", "40", "--substeps", "4"])
        assert rc == 4
        assert "least transport time" in capsys.readouterr().err


class TestParsing:
    def test_unknown_flag(self, capsys):
        assert cli.main(["design", "--no-such-flag"]) == 2

    def test_help_exits_clean(self, capsys):
        assert cli.main(["--help"]) == 0

    def test_missing_command(self, capsys):
        assert cli.main([]) == 2
