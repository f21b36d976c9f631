"""Replication harness, config files, CLI plumbing and output schemas."""

import math
import os

import numpy as np
import pytest

from seqfed.cli import main
from seqfed.config import build_config, load_config, parse_mapping
from seqfed.errors import ConfigError
from seqfed.experiment import (
    Cell,
    ExperimentConfig,
    RepOutcome,
    cells_of,
    compute_bias_table,
    run_experiment,
    run_replication,
    summarize_cell,
    write_outputs,
)
from seqfed.simdata import SimDesign, dump_pools, make_pool


def small_config(**overrides):
    base = dict(
        design=SimDesign(n_sites=2, pool_size=700),
        d1_grid=(0.5,),
        d2_grid=(0.5,),
        samplers=("random",),
        replications=3,
        parallelism=1,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


class TestExperimentConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            small_config(replications=0)
        with pytest.raises(ValueError):
            small_config(d1_grid=())
        with pytest.raises(ValueError):
            small_config(d2_grid=(0.0,))
        with pytest.raises(ValueError):
            small_config(samplers=())
        with pytest.raises(ValueError):
            small_config(alpha=0.0)
        with pytest.raises(ValueError):
            small_config(budget_weights=(1.0, 1.0, 1.0))
        with pytest.raises(ValueError):
            small_config(max_failure_fraction=1.5)

    def test_workers(self):
        assert small_config(parallelism=3).workers() == 3
        assert small_config(parallelism="auto").workers() >= 1
        with pytest.raises(ValueError):
            small_config(parallelism=0).workers()

    def test_plan_uses_design_weights(self):
        config = ExperimentConfig(
            design=SimDesign(proportions="p2"), parallelism=1
        )
        budgets = config.plan().site_budgets()
        assert budgets[4] == pytest.approx(6.0 * budgets[0], rel=1e-12)

    def test_cells_enumeration(self):
        config = small_config(
            samplers=("random", "a_optimal"), d1_grid=(0.4, 0.2), d2_grid=(0.05,)
        )
        cells = cells_of(config)
        assert [c.index for c in cells] == [0, 1, 2, 3]
        assert [(c.sampler, c.d1) for c in cells] == [
            ("random", 0.4),
            ("random", 0.2),
            ("a_optimal", 0.4),
            ("a_optimal", 0.2),
        ]


class TestRunReplication:
    def test_outcome_accounting(self):
        config = small_config()
        cell = cells_of(config)[0]
        outcome = run_replication(config, cell, rep=0)
        assert outcome.ok
        assert outcome.n_hat == sum(outcome.stop_times)
        assert len(outcome.stop_times) == 2
        assert len(outcome.theta) == 2
        assert len(outcome.site_thetas) == 2
        assert math.isfinite(outcome.wald)

    def test_deterministic(self):
        config = small_config()
        cell = cells_of(config)[0]
        a = run_replication(config, cell, rep=1)
        b = run_replication(config, cell, rep=1)
        assert a == b

    def test_exhaustion_becomes_failure_record(self):
        config = small_config(
            design=SimDesign(n_sites=2, pool_size=60), d1_grid=(0.15,)
        )
        cell = cells_of(config)[0]
        outcome = run_replication(config, cell, rep=0)
        assert not outcome.ok
        assert outcome.reason.startswith("PoolExhausted:site")


class TestSummaries:
    def test_site_means_add_up_to_total_mean(self):
        config = small_config(replications=4)
        result = run_experiment(config)
        row = result.summary_rows[0]
        assert row["failures"] == 0
        total = row["mean_N_1"] + row["mean_N_2"]
        assert total == pytest.approx(row["mean_N_hat"], abs=1e-9)

    def test_failure_transparency(self):
        config = small_config(
            design=SimDesign(n_sites=2, pool_size=60),
            d1_grid=(0.15,),
            replications=3,
            max_failure_fraction=0.5,
        )
        result = run_experiment(config)
        row = result.summary_rows[0]
        assert row["replications"] == 3
        assert row["failures"] == 3
        assert "mean_N_hat" not in row
        assert result.failure_threshold_exceeded
        assert all(not o.ok and o.reason for o in result.outcomes)

    def test_bias_table_hand_arithmetic(self):
        theta0 = np.array([2.0, 1.0])
        outcomes = [
            RepOutcome(
                cell_index=0, rep=0, ok=True, n_hat=200, stop_times=(100, 100),
                theta=(2.1, 0.9),
                site_thetas=((2.2, 0.8), (2.0, 1.0)),
            ),
            RepOutcome(
                cell_index=0, rep=1, ok=True, n_hat=200, stop_times=(100, 100),
                theta=(1.9, 1.1),
                site_thetas=((1.8, 1.2), (2.0, 1.0)),
            ),
        ]
        table = compute_bias_table(outcomes, theta0)
        assert set(table) == {"combined", "average", "site1", "site2"}
        # |2.1-2| and |1.9-2| are both 0.1, so mean 0.1 and sd 0
        assert table["combined"][0] == pytest.approx((0.1, 0.0), abs=1e-12)
        assert table["combined"][1] == pytest.approx((0.1, 0.0), abs=1e-12)
        assert table["site1"][0] == pytest.approx((0.2, 0.0), abs=1e-12)
        assert table["site2"][0] == pytest.approx((0.0, 0.0), abs=1e-12)
        # equal-weight average of sites: (2.1, 0.9) and (1.9, 1.1)
        assert table["average"][0] == pytest.approx((0.1, 0.0), abs=1e-12)

    def test_summarize_cell_fields(self):
        config = small_config(replications=3)
        result = run_experiment(config)
        row = summarize_cell(config, result.cells[0], list(result.outcomes))
        assert row["sampler"] == "random"
        assert 0.0 <= row["coverage"] <= 1.0
        assert row["sd_N_hat"] >= 0.0
        assert 0.5 <= row["mean_auc"] <= 1.0
        assert row["mean_efficiency_ratio"] > 0.0
        assert "bias_combined_1" in row and "bias_site2_2" in row


class TestOutputs:
    def test_written_files_and_headers(self, tmp_path):
        config = small_config(replications=2, record_trace=True)
        result = run_experiment(config)
        paths = write_outputs(result, str(tmp_path))
        assert set(paths) == {"summary", "reps", "trace"}
        reps_header = open(paths["reps"]).readline().strip().split(",")
        assert reps_header == [
            "sampler", "d1", "d2", "rep", "N_hat", "N_1", "N_2",
            "theta_hat_1", "theta_hat_2", "covered", "wald", "auc_mean",
        ]
        assert sum(1 for _ in open(paths["reps"])) == 3
        trace_header = open(paths["trace"]).readline().strip().split(",")
        assert trace_header == [
            "sampler", "d1", "d2", "rep", "site", "step", "k", "mu_jk", "v_A", "stopped",
        ]
        summary_header = open(paths["summary"]).readline().strip().split(",")
        assert summary_header[:5] == ["sampler", "d1", "d2", "replications", "failures"]

    def test_failures_file(self, tmp_path):
        config = small_config(
            design=SimDesign(n_sites=2, pool_size=60),
            d1_grid=(0.15,),
            replications=2,
        )
        result = run_experiment(config)
        paths = write_outputs(result, str(tmp_path))
        assert "failures" in paths
        lines = open(paths["failures"]).read().splitlines()
        assert lines[0] == "sampler,d1,d2,rep,reason"
        assert len(lines) == 3
        assert "PoolExhausted" in lines[1]

    def test_parallel_and_serial_outputs_are_identical(self, tmp_path):
        serial_dir = tmp_path / "serial"
        parallel_dir = tmp_path / "parallel"
        base = dict(replications=4)
        run_experiment(small_config(output_dir=str(serial_dir), **base))
        run_experiment(
            small_config(output_dir=str(parallel_dir), parallelism=2, **base)
        )
        for name in ("summary.csv", "reps.csv"):
            a = (serial_dir / name).read_bytes()
            b = (parallel_dir / name).read_bytes()
            assert a == b, f"{name} differs between worker counts"

    def test_repeated_runs_are_identical(self, tmp_path):
        dirs = [tmp_path / "one", tmp_path / "two"]
        for d in dirs:
            run_experiment(small_config(replications=2, output_dir=str(d)))
        assert (dirs[0] / "reps.csv").read_bytes() == (dirs[1] / "reps.csv").read_bytes()


class TestConfigParsing:
    def test_comments_blanks_and_values(self):
        text = """
        # grid
        d1 = 0.4, 0.3   # two sizes
        d2 = 0.05
        samplers = random, aopt
        replications = 7
        seed = 99
        sites = 2
        pool_size = 500
        trace = true
        parallelism = auto
        """
        config = build_config(parse_mapping(text))
        assert config.d1_grid == (0.4, 0.3)
        assert config.samplers == ("random", "a_optimal")
        assert config.replications == 7
        assert config.master_seed == 99
        assert config.design.n_sites == 2
        assert config.record_trace is True
        assert config.parallelism == "auto"

    def test_unknown_key_names_location(self):
        with pytest.raises(ConfigError, match=r"cfg:2: unknown key 'd3'"):
            parse_mapping("d1 = 0.2\nd3 = 0.1\n", source="cfg")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_mapping("d1 = 0.2\nd1 = 0.3\n")

    def test_missing_equals(self):
        with pytest.raises(ConfigError, match="key = value"):
            parse_mapping("just words\n")

    def test_bad_numbers(self):
        with pytest.raises(ConfigError, match="'replications'"):
            build_config({"replications": "many"})
        with pytest.raises(ConfigError, match="'d1'"):
            build_config({"d1": "0.4, wide"})
        with pytest.raises(ConfigError, match="'trace'"):
            build_config({"trace": "maybe"})

    def test_unknown_sampler(self):
        with pytest.raises(ConfigError, match="unknown sampler"):
            build_config({"samplers": "random, greedy"})

    def test_design_errors_become_config_errors(self):
        with pytest.raises(ConfigError):
            build_config({"beta_setup": "B2", "sites": "3"})

    def test_overrides_win(self):
        config = build_config(
            {"seed": "1", "replications": "100"},
            overrides={"seed": 7, "replications": 2, "out": None},
        )
        assert config.master_seed == 7
        assert config.replications == 2
        assert config.output_dir is None

    def test_load_config_missing_file(self):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config("/nonexistent/run.cfg")


class TestCli:
    def write_config(self, tmp_path, extra=""):
        path = tmp_path / "run.cfg"
        path.write_text(
            "sites = 2\npool_size = 700\nd1 = 0.5\nd2 = 0.5\n"
            "samplers = random\nreplications = 2\nparallelism = 1\n" + extra
        )
        return str(path)

    def test_no_command_is_usage_error(self, capsys):
        assert main([]) == 1
        assert "fix:" in capsys.readouterr().err

    def test_missing_required_flag_names_it(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["analyze", "--data", "x.csv"])
        assert exc.value.code == 1
        err = capsys.readouterr().err
        assert "--response" in err
        assert "fix:" in err

    def test_simulate_config_error(self, tmp_path, capsys):
        path = tmp_path / "bad.cfg"
        path.write_text("d3 = 0.1\n")
        assert main(["simulate", "--config", str(path)]) == 1
        assert "unknown key" in capsys.readouterr().err

    def test_simulate_smoke(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path)
        out = tmp_path / "results"
        assert main(["simulate", "--config", cfg, "--out", str(out)]) == 0
        captured = capsys.readouterr()
        assert "coverage" in captured.out
        assert (out / "summary.csv").exists()
        assert (out / "reps.csv").exists()

    def test_simulate_failure_threshold_exit_code(self, tmp_path, capsys):
        cfg = self.write_config(tmp_path, extra="max_failure_fraction = 0\n")
        # overriding the pool size is not possible from the command line, so
        # rewrite the config with an undersized pool instead
        text = open(cfg).read().replace("pool_size = 700", "pool_size = 60")
        text = text.replace("d1 = 0.5", "d1 = 0.15")
        open(cfg, "w").write(text)
        assert main(["simulate", "--config", cfg]) == 3
        assert "exceeded" in capsys.readouterr().err

    def test_analyze_smoke(self, tmp_path, capsys):
        design = SimDesign(n_sites=2, pool_size=700)
        rng = np.random.default_rng(52)
        pools = [make_pool(design, site, rng) for site in (1, 2)]
        data = tmp_path / "pools.csv"
        dump_pools(data, pools)
        out = tmp_path / "analysis"
        code = main([
            "analyze", "--data", str(data), "--response", "y", "--site", "site",
            "--common", "x1,x2", "--d1", "0.5", "--d2", "0.5", "--out", str(out),
        ])
        assert code == 0
        captured = capsys.readouterr()
        assert "N_hat=" in captured.out
        combined_lines = (out / "combined.csv").read_text().splitlines()
        header = combined_lines[0].split(",")
        assert header[:3] == ["N_hat", "seed", "precision_stat"]
        assert "theta_x1" in header and "ci_high_x2" in header
        sites_lines = (out / "sites.csv").read_text().splitlines()
        assert len(sites_lines) == 3
        n_hat = int(combined_lines[1].split(",")[0])
        n_used = sum(int(line.split(",")[3]) for line in sites_lines[1:])
        assert n_used == n_hat

    def test_analyze_budget_mismatch(self, tmp_path, capsys):
        design = SimDesign(n_sites=2, pool_size=200)
        rng = np.random.default_rng(53)
        pools = [make_pool(design, site, rng) for site in (1, 2)]
        data = tmp_path / "pools.csv"
        dump_pools(data, pools)
        code = main([
            "analyze", "--data", str(data), "--response", "y", "--site", "site",
            "--common", "x1,x2", "--d1", "0.5", "--d2", "0.5",
            "--budget", "1,2,3",
        ])
        assert code == 1
        assert "--budget" in capsys.readouterr().err

    def test_analyze_data_errors_exit_2(self, tmp_path, capsys):
        assert main([
            "analyze", "--data", "/nonexistent.csv", "--response", "y",
            "--site", "site", "--common", "x1", "--d1", "0.5", "--d2", "0.5",
        ]) == 2
        path = tmp_path / "bad.csv"
        path.write_text("y,x1,site\n2,1.0,A\n0,0.5,A\n")
        assert main([
            "analyze", "--data", str(path), "--response", "y",
            "--site", "site", "--common", "x1", "--d1", "0.5", "--d2", "0.5",
        ]) == 2
        assert "binary" in capsys.readouterr().err

    def test_analyze_every_site_exhausted_exits_2(self, tmp_path, capsys):
        design = SimDesign(n_sites=2, pool_size=60)
        rng = np.random.default_rng(54)
        pools = [make_pool(design, site, rng) for site in (1, 2)]
        data = tmp_path / "pools.csv"
        dump_pools(data, pools)
        code = main([
            "analyze", "--data", str(data), "--response", "y", "--site", "site",
            "--common", "x1,x2", "--d1", "0.05", "--d2", "0.5",
            "--out", str(tmp_path / "a"),
        ])
        assert code == 2
        err = capsys.readouterr().err
        assert "ran out of rows" in err  # per-site warnings
        assert "every site" in err  # the combine refusal

    def test_selftest_passes(self, capsys):
        assert main(["selftest"]) == 0
        out = capsys.readouterr().out
        assert "ok" in out
