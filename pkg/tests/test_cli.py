"""Harness tests: spec parsing, runs, CSV contracts, CLI surface, figures."""

import math
from pathlib import Path

import numpy as np
import pytest

from qnet.cli import main
from qnet.experiments import (
    SpecError,
    apply_env_overrides,
    build_spec,
    load_spec,
    parse_spec_text,
    read_csv_rows,
    run,
    summarize,
)

BASE_SPEC = """
# desk-scale experiment
experiment = single
snapshots = 3
seed = 10
compare = AO_DC, AO_SC
scenario.n_qbs = 2
scenario.n_qu = 2
"""


class TestSpecParsing:
    def test_flat_format_and_comments(self):
        mapping = parse_spec_text(BASE_SPEC)
        assert mapping["experiment"] == "single"
        assert mapping["scenario.n_qbs"] == "2"

    def test_bad_line_rejected(self):
        with pytest.raises(SpecError, match="line 1"):
            parse_spec_text("not a key value pair")

    def test_build_spec_defaults_and_types(self):
        spec = build_spec(parse_spec_text(BASE_SPEC))
        assert spec.experiment == "single"
        assert spec.sweep_values == (0.0,)
        assert spec.snapshots == 3
        assert spec.compare == ("AO_DC", "AO_SC")
        assert spec.scenario.n_qbs == 2
        assert spec.scenario.channel.kappa == 0.43  # Table defaults ship built-in
        assert spec.ao.max_outer_iters == 30

    def test_section_overrides(self):
        text = BASE_SPEC + "channel.kappa = 0.5\nfidelity.xi = 0.3\nao.outer_tol = 1e-3\nscenario.d_range = 200, 400\n"
        spec = build_spec(parse_spec_text(text))
        assert spec.scenario.channel.kappa == 0.5
        assert spec.scenario.fidelity.xi == 0.3
        assert spec.ao.outer_tol == 1e-3
        assert spec.scenario.d_range == (200.0, 400.0)

    def test_unknown_keys_rejected(self):
        with pytest.raises(SpecError, match="unknown key"):
            build_spec(parse_spec_text(BASE_SPEC + "channel.color = blue\n"))
        with pytest.raises(SpecError, match="unknown top-level"):
            build_spec(parse_spec_text(BASE_SPEC + "snopshots = 5\n"))
        with pytest.raises(SpecError, match="unknown methods"):
            build_spec(parse_spec_text(BASE_SPEC.replace("AO_DC, AO_SC", "AO_XX")))

    def test_sweep_requires_values(self):
        with pytest.raises(SpecError, match="requires sweep_values"):
            build_spec(parse_spec_text("experiment = sweep_users\n"))
        with pytest.raises(SpecError, match="positive integers"):
            build_spec(parse_spec_text("experiment = sweep_users\nsweep_values = 2.5\n"))

    def test_env_overrides(self):
        mapping = parse_spec_text(BASE_SPEC)
        env = {"QNET_CHANNEL_KAPPA": "0.7", "QNET_RUN_SNAPSHOTS": "5", "QNET_SCENARIO_N_QU": "3"}
        merged = apply_env_overrides(mapping, env)
        spec = build_spec(merged)
        assert spec.scenario.channel.kappa == 0.7
        assert spec.snapshots == 5
        assert spec.scenario.n_qu == 3

    def test_exact_guard_blocks_large_instances(self):
        text = "experiment = single\ncompare = EXACT_DC\nscenario.n_qbs = 10\nscenario.n_qu = 20\n"
        with pytest.raises(SpecError, match="exceed the exact-solver guard"):
            build_spec(parse_spec_text(text))

    def test_exact_guard_allows_desk_scale(self):
        text = "experiment = single\ncompare = EXACT_DC\nscenario.n_qbs = 4\nscenario.n_qu = 6\n"
        spec = build_spec(parse_spec_text(text))
        assert spec.compare == ("EXACT_DC",)


class TestRun:
    def test_single_run_writes_reports(self, tmp_path):
        spec = build_spec(parse_spec_text(BASE_SPEC))
        result = run(spec, tmp_path, deterministic=True, make_plots=False)
        assert (tmp_path / "raw.csv").exists()
        assert (tmp_path / "aggregate.csv").exists()
        rows = read_csv_rows(tmp_path / "raw.csv")
        assert len(rows) == 3 * 2  # snapshots x methods
        assert {r["method"] for r in rows} == {"AO_DC", "AO_SC"}
        assert all(r["status"] == "ok" for r in rows)
        assert all(r["runtime_ms"] == "0.000" for r in rows)

    def test_rows_in_canonical_order(self, tmp_path):
        spec = build_spec(parse_spec_text(BASE_SPEC))
        result = run(spec, tmp_path, deterministic=True, make_plots=False)
        keys = [(float(r[1]), r[2], r[3]) for r in result.raw_rows]
        assert keys == sorted(keys, key=lambda k: (k[0], int(k[1]), k[2]))

    def test_convergence_emits_trace(self, tmp_path):
        text = "experiment = convergence\nsnapshots = 1\nseed = 4\nscenario.n_qbs = 2\nscenario.n_qu = 2\n"
        spec = build_spec(parse_spec_text(text))
        run(spec, tmp_path, deterministic=True, make_plots=False)
        trace = read_csv_rows(tmp_path / "trace.csv")
        assert 1 <= len(trace) <= spec.ao.max_outer_iters
        assert trace[0]["iteration"] == "1"

    def test_deterministic_reruns_byte_identical(self, tmp_path):
        spec = build_spec(parse_spec_text(BASE_SPEC))
        run(spec, tmp_path / "a", deterministic=True, make_plots=False)
        run(spec, tmp_path / "b", deterministic=True, make_plots=False)
        for name in ("raw.csv", "aggregate.csv"):
            assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()

    def test_parallel_equals_serial(self, tmp_path):
        spec = build_spec(parse_spec_text(BASE_SPEC))
        run(spec, tmp_path / "serial", deterministic=True, jobs=1, make_plots=False)
        run(spec, tmp_path / "parallel", deterministic=True, jobs=2, make_plots=False)
        assert (tmp_path / "serial" / "raw.csv").read_bytes() == (tmp_path / "parallel" / "raw.csv").read_bytes()

    def test_aggregate_matches_recomputation(self, tmp_path):
        spec = build_spec(parse_spec_text(BASE_SPEC))
        result = run(spec, tmp_path, deterministic=True, make_plots=False)
        aggregate, _, _ = summarize(tmp_path / "raw.csv")
        got = [(r[0], r[1], r[2], r[5], r[6]) for r in aggregate]
        want = [(r[0], r[1], r[2], int(r[5]), int(r[6])) for r in result.aggregate_rows]
        assert got == want
        for res_row, sum_row in zip(result.aggregate_rows, aggregate):
            assert float(res_row[3]) == pytest.approx(sum_row[3], rel=1e-12)

    def test_infeasible_demand_recorded_not_raised(self, tmp_path):
        text = BASE_SPEC + "scenario.rmin_range = 1e12, 1e12\nscenario.infeasible_policy = report\n"
        spec = build_spec(parse_spec_text(text))
        result = run(spec, tmp_path, deterministic=True, make_plots=False)
        assert result.n_failures > 0
        rows = read_csv_rows(tmp_path / "raw.csv")
        assert all(r["status"] == "infeasible" for r in rows)
        assert all(r["objective_pairs_per_s"] == "" for r in rows)

    def test_sweep_users_mean_non_decreasing(self, tmp_path):
        text = (
            "experiment = sweep_users\nsweep_values = 2, 4, 6\nsnapshots = 8\nseed = 3\n"
            "compare = AO_DC\nscenario.n_qbs = 3\n"
        )
        spec = build_spec(parse_spec_text(text))
        result = run(spec, tmp_path, deterministic=True, make_plots=False)
        means = [float(r[3]) for r in result.aggregate_rows if r[2] == "AO_DC"]
        assert len(means) == 3
        assert means[0] <= means[1] <= means[2]

    def test_sweep_rmin_scales_ranges(self, tmp_path):
        text = (
            "experiment = sweep_rmin\nsweep_values = 1, 2\nsnapshots = 2\nseed = 5\n"
            "compare = AO_DC\nscenario.n_qbs = 2\nscenario.n_qu = 2\n"
        )
        spec = build_spec(parse_spec_text(text))
        result = run(spec, tmp_path, deterministic=True, make_plots=False)
        assert {r[1] for r in result.raw_rows} == {"1", "2"}


class TestSummarizeGaps:
    def _write_raw(self, path: Path, rows):
        lines = ["experiment,sweep_value,seed,method,status,objective_pairs_per_s,iterations,runtime_ms"]
        lines += [",".join(str(v) for v in row) for row in rows]
        path.write_text("\n".join(lines) + "\n")

    def test_identical_columns_zero_gap(self, tmp_path):
        raw = tmp_path / "raw.csv"
        rows = []
        for seed in (0, 1, 2):
            rows.append(("single", 0, seed, "AO_DC", "ok", 100.0, 3, 0))
            rows.append(("single", 0, seed, "EXACT_DC", "ok", 100.0, 9, 0))
        self._write_raw(raw, rows)
        _, gaps, _ = summarize(raw)
        assert gaps[0][4] == "0"

    def test_ten_percent_gap(self, tmp_path):
        raw = tmp_path / "raw.csv"
        rows = []
        for seed in (0, 1):
            rows.append(("single", 0, seed, "AO_DC", "ok", 90.0, 3, 0))
            rows.append(("single", 0, seed, "EXACT_DC", "ok", 100.0, 9, 0))
        self._write_raw(raw, rows)
        _, gaps, _ = summarize(raw)
        assert float(gaps[0][4]) == pytest.approx(10.0, abs=1e-9)

    def test_improvement_percentage_and_warnings(self, tmp_path):
        raw = tmp_path / "raw.csv"
        rows = [
            ("single", 0, 0, "AO_DC", "ok", 120.0, 3, 0),
            ("single", 0, 0, "AO_SC", "ok", 100.0, 3, 0),
        ]
        self._write_raw(raw, rows)
        _, gaps, warnings = summarize(raw)
        assert float(gaps[0][2]) == pytest.approx(20.0, abs=1e-9)
        assert any("no EXACT rows" in w for w in warnings)

    def test_missing_method_partial_table(self, tmp_path):
        raw = tmp_path / "raw.csv"
        self._write_raw(raw, [("single", 0, 0, "AO_DC", "ok", 120.0, 3, 0)])
        _, gaps, warnings = summarize(raw)
        assert gaps[0][2] == ""
        assert any("only AO_DC" in w for w in warnings)


class TestCliSurface:
    def test_version(self, capsys):
        assert main(["version"]) == 0
        assert capsys.readouterr().out.startswith("qnet ")

    def test_run_ok_exit_zero(self, tmp_path, capsys):
        spec_file = tmp_path / "exp.spec"
        spec_file.write_text(BASE_SPEC)
        code = main(["run", "--spec", str(spec_file), "--out", str(tmp_path / "out"),
                     "--deterministic", "--no-plot"])
        assert code == 0
        assert (tmp_path / "out" / "raw.csv").exists()

    def test_run_spec_error_exit_two(self, tmp_path):
        spec_file = tmp_path / "exp.spec"
        spec_file.write_text("experiment = warp\n")
        assert main(["run", "--spec", str(spec_file), "--out", str(tmp_path / "out")]) == 2

    def test_run_missing_spec_exit_two(self, tmp_path):
        assert main(["run", "--spec", str(tmp_path / "none.spec"), "--out", str(tmp_path / "o")]) == 2

    def test_run_method_failure_exit_one(self, tmp_path):
        spec_file = tmp_path / "exp.spec"
        spec_file.write_text(BASE_SPEC + "scenario.rmin_range = 1e12, 1e12\nscenario.infeasible_policy = report\n")
        code = main(["run", "--spec", str(spec_file), "--out", str(tmp_path / "out"),
                     "--deterministic", "--no-plot"])
        assert code == 1

    def test_summarize_command(self, tmp_path, capsys):
        spec_file = tmp_path / "exp.spec"
        spec_file.write_text(BASE_SPEC)
        main(["run", "--spec", str(spec_file), "--out", str(tmp_path / "out"), "--deterministic", "--no-plot"])
        code = main(["summarize", "--raw", str(tmp_path / "out" / "raw.csv")])
        assert code == 0
        assert (tmp_path / "out" / "gaps.csv").exists()
        assert "dc_sc_improvement_pct_ao" in capsys.readouterr().out

    def test_plot_command_renders_figures(self, tmp_path):
        spec_file = tmp_path / "exp.spec"
        spec_file.write_text(
            "experiment = convergence\nsnapshots = 2\nseed = 6\nscenario.n_qbs = 2\nscenario.n_qu = 2\n"
        )
        main(["run", "--spec", str(spec_file), "--out", str(tmp_path / "out"), "--deterministic", "--no-plot"])
        assert main(["plot", "--dir", str(tmp_path / "out")]) == 0
        png = tmp_path / "out" / "convergence_trace.png"
        assert png.exists() and png.stat().st_size > 1000

    def test_run_renders_figures_by_default(self, tmp_path):
        spec_file = tmp_path / "exp.spec"
        spec_file.write_text(BASE_SPEC)
        main(["run", "--spec", str(spec_file), "--out", str(tmp_path / "out"), "--deterministic"])
        png = tmp_path / "out" / "objective_vs_sweep.png"
        assert png.exists() and png.stat().st_size > 1000
