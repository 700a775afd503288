"""Command-line experiment runner: config handling, CSV output, exit codes."""
from __future__ import annotations

import numpy as np
import pytest

from degdiff.cli import (
    ExperimentConfig,
    build_config,
    main,
    parse_config_file,
    snap_grid_size,
)
from degdiff.linsolve import ConfigurationError
from degdiff.problem import BarenblattSolution


def read_csv(path):
    comments, header, rows = [], None, []
    for line in path.read_text().splitlines():
        if line.startswith("#"):
            comments.append(line[1:].strip())
        elif header is None:
            header = line.split(",")
        else:
            rows.append(line.split(","))
    return comments, header, rows


class TestSnapGridSize:
    def test_family_members_are_fixed_points(self):
        for n in (1, 3, 7, 15, 31, 63, 127, 255, 511):
            assert snap_grid_size(n) == n

    def test_snaps_to_nearest_member(self):
        assert snap_grid_size(100) == 127
        assert snap_grid_size(33) == 31
        assert snap_grid_size(5) == 7
        assert snap_grid_size(2) == 3

    def test_rejects_nonpositive(self):
        with pytest.raises(ConfigurationError):
            snap_grid_size(0)


class TestConfigFile:
    def test_parses_values_comments_and_dashes(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text(
            "# experiment setup\n"
            "command = converge\n"
            "dt-coeff = 2.0   # aggressive step\n"
            "\n"
            "N = 15, 31\n"
            "M=3\n"
        )
        values = parse_config_file(str(path))
        assert values == {
            "command": "converge",
            "dt_coeff": "2.0",
            "n": "15, 31",
            "m": "3",
        }

    def test_rejects_lines_without_equals(self, tmp_path):
        path = tmp_path / "bad.cfg"
        path.write_text("command converge\n")
        with pytest.raises(ConfigurationError, match="key=value"):
            parse_config_file(str(path))

    def test_overrides_win_over_file(self, tmp_path):
        path = tmp_path / "run.cfg"
        path.write_text("m = 3\nn = 15\ncommand = solve\n")
        cfg, _ = build_config(parse_config_file(str(path)), {"m": 2.0})
        assert cfg.m == 2.0
        assert cfg.n_list == (15,)
        assert cfg.command == "solve"

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigurationError, match="unknown config key"):
            build_config({"order": "2"}, {})

    def test_grid_sizes_snap_with_notes_and_dedupe(self):
        cfg, notes = build_config({}, {"n": "30,31,100"})
        assert cfg.n_list == (31, 127)
        assert any("30 snapped to 31" in note for note in notes)
        assert any("100 snapped to 127" in note for note in notes)

    def test_validation(self):
        with pytest.raises(ConfigurationError):
            ExperimentConfig(command="plot")
        with pytest.raises(ConfigurationError):
            ExperimentConfig(dimension=3)
        with pytest.raises(ConfigurationError):
            ExperimentConfig(m=0.5)
        with pytest.raises(ConfigurationError):
            ExperimentConfig(n_list=())
        with pytest.raises(ConfigurationError):
            ExperimentConfig(duration=-1.0)
        with pytest.raises(ConfigurationError):
            ExperimentConfig(tol=0.0)


class TestSolveCommand:
    def test_zero_duration_echoes_initial_sample(self, tmp_path):
        out = tmp_path / "profile.csv"
        code = main([
            "--command", "solve", "--N", "15", "--duration", "0",
            "--t0", "1.0", "--out", str(out),
        ])
        assert code == 0
        comments, header, rows = read_csv(out)
        assert header == ["x", "u"]
        assert len(rows) == 15
        assert any("echo of initial sample" in c for c in comments)
        exact = BarenblattSolution(m=2.0, dimension=1)
        for x_text, u_text in rows:
            assert float(u_text) == pytest.approx(
                float(exact(1.0, np.array([float(x_text)]))[0]), abs=1e-12
            )

    def test_output_is_deterministic(self, tmp_path):
        args = ["--command", "solve", "--N", "31", "--duration", "0.5"]
        a = tmp_path / "a.csv"
        b = tmp_path / "b.csv"
        assert main(args + ["--out", str(a)]) == 0
        assert main(args + ["--out", str(b)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_writes_to_stdout_without_out(self, capsys):
        code = main(["--command", "solve", "--N", "15", "--duration", "0"])
        assert code == 0
        text = capsys.readouterr().out
        assert text.splitlines()[-16] == "x,u"
        assert len(text.splitlines()) >= 16

    def test_profile_stays_symmetric(self, tmp_path):
        out = tmp_path / "sym.csv"
        code = main([
            "--command", "solve", "--N", "63", "--t0", "1.0",
            "--duration", "1.0", "--out", str(out),
        ])
        assert code == 0
        _, _, rows = read_csv(out)
        u = np.array([float(r[1]) for r in rows])
        assert np.max(np.abs(u - u[::-1])) < 1e-10

    def test_front_position_tracks_exact_support(self, tmp_path):
        out = tmp_path / "front.csv"
        code = main([
            "--command", "solve", "--N", "63", "--t0", "1.0",
            "--duration", "2.0", "--out", str(out),
        ])
        assert code == 0
        comments, _, rows = read_csv(out)
        final_t = float(next(c for c in comments if "final_t" in c)
                        .split("final_t=")[1].split()[0])
        x = np.array([float(r[0]) for r in rows])
        u = np.array([float(r[1]) for r in rows])
        # the discrete front trails an exponentially decaying tail, so a
        # relative threshold marks where the solution stops being physical
        numeric_front = float(np.max(np.abs(x[u > 1e-3 * u.max()])))
        exact_front = BarenblattSolution(m=2.0, dimension=1).support_radius(final_t)
        h = 20.0 / 64.0
        assert abs(numeric_front - exact_front) <= 2.0 * h

    def test_failed_integration_returns_one(self, tmp_path):
        out = tmp_path / "fail.csv"
        code = main([
            "--command", "solve", "--N", "31", "--duration", "0.5",
            "--solver", "gmres", "--max-iter", "2", "--out", str(out),
        ])
        assert code == 1
        comments, header, rows = read_csv(out)
        assert any("integration failed" in c for c in comments)
        assert rows == []

    def test_two_dimensional_profile_has_three_columns(self, tmp_path):
        out = tmp_path / "two_d.csv"
        code = main([
            "--command", "solve", "--dim", "2", "--N", "7", "--m", "4",
            "--t0", "1.0", "--duration", "0", "--out", str(out),
        ])
        assert code == 0
        _, header, rows = read_csv(out)
        assert header == ["x", "y", "u"]
        assert len(rows) == 49


class TestConvergeCommand:
    def test_emits_rows_and_fitted_slopes(self, tmp_path):
        out = tmp_path / "conv.csv"
        code = main([
            "--command", "converge", "--N", "15,31,63",
            "--duration", "0.2", "--out", str(out),
        ])
        assert code == 0
        comments, header, rows = read_csv(out)
        assert header == ["N", "h", "l2_error", "linf_error"]
        assert [r[0] for r in rows] == ["15", "31", "63"]
        assert any(c.startswith("fitted_slope_l2") for c in comments)
        assert any(c.startswith("fitted_slope_linf") for c in comments)

    def test_heat_exponent_has_no_reference_solution(self, tmp_path):
        code = main([
            "--command", "converge", "--m", "1", "--N", "15",
            "--out", str(tmp_path / "x.csv"),
        ])
        assert code == 2


class TestIterationsCommand:
    def test_direct_solver_reports_zero_linear_counts(self, tmp_path):
        out = tmp_path / "it.csv"
        code = main([
            "--command", "iterations", "--N", "15,31", "--duration", "0.3",
            "--out", str(out),
        ])
        assert code == 0
        comments, header, rows = read_csv(out)
        assert header[:4] == ["N", "newton_mean", "newton_min", "newton_max"]
        assert all(r[4] == "0" and r[7] == "0" for r in rows)
        assert not any("growth_exponent" in c for c in comments)

    def test_unpreconditioned_krylov_reports_growth_exponent(self, tmp_path):
        out = tmp_path / "growth.csv"
        code = main([
            "--command", "iterations", "--N", "15,31,63", "--solver", "gmres",
            "--duration", "0.3", "--out", str(out),
        ])
        assert code == 0
        comments, _, rows = read_csv(out)
        assert any(c.startswith("growth_exponent") for c in comments)
        assert all(r[7] == "0" for r in rows)


class TestSpectrumCommand:
    def test_one_file_per_sampled_step(self, tmp_path):
        out = tmp_path / "spec.csv"
        code = main([
            "--command", "spectrum", "--N", "31", "--t0", "1.0",
            "--duration", "1.2", "--out", str(out),
        ])
        assert code == 0
        step_files = sorted(tmp_path.glob("spec-step*.csv"))
        assert len(step_files) == 2
        comments, header, rows = read_csv(step_files[0])
        assert header == ["index", "re", "im", "singular_value"]
        assert len(rows) == 31
        assert any(c.startswith("bendixson_real") for c in comments)
        assert any(c.startswith("sigma_min") for c in comments)
        assert any(c.startswith("outliers_eps_") for c in comments)

    def test_single_step_keeps_the_given_name(self, tmp_path):
        out = tmp_path / "single.csv"
        code = main([
            "--command", "spectrum", "--N", "31", "--t0", "1.0",
            "--duration", "0.5", "--out", str(out),
        ])
        assert code == 0
        assert out.exists()
        assert not list(tmp_path.glob("single-step*.csv"))

    def test_dense_guard_rejects_large_sizes(self, tmp_path):
        code = main([
            "--command", "spectrum", "--N", "511",
            "--out", str(tmp_path / "big.csv"),
        ])
        assert code == 2


class TestMainErrors:
    def test_unknown_solver_in_config_file(self, tmp_path):
        cfg = tmp_path / "bad.cfg"
        cfg.write_text("command = solve\nsolver = qr\nn = 15\nduration = 0.5\n")
        assert main(["--config", str(cfg)]) == 2

    def test_missing_config_file(self):
        assert main(["--config", "/nonexistent/run.cfg"]) == 2

    def test_snap_note_lands_in_output_comments(self, tmp_path):
        out = tmp_path / "snap.csv"
        code = main([
            "--command", "solve", "--N", "100", "--duration", "0",
            "--out", str(out),
        ])
        assert code == 0
        comments, _, rows = read_csv(out)
        assert any("snapped to 127" in c for c in comments)
        assert len(rows) == 127

    def test_bad_flag_value_exits_via_argparse(self):
        with pytest.raises(SystemExit):
            main(["--command", "plot"])
