"""Config parsing, the CLI subcommands and output reproducibility."""

import subprocess
import sys
from pathlib import Path

import pytest

from mfdelta.cli import main
from mfdelta.config import load_config, parse_config, serialize_config
from mfdelta.errors import ConfigParse

MINI_RUN = """
model = mean_vol
payoff = call
strike = 2.0
x0 = 1.0
horizon = 1.0
n_steps = 64
n_paths = 3000
seed = 99
methods = malliavin, fd_forward
h_list = 0.1, 0.01
out = {out}
model.mu = 1.0
model.sigma = 0.8
"""


def write_cfg(tmp_path, text, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return str(path)


class TestConfigParsing:
    def test_minimal_config_fills_defaults(self, capsys):
        cfg = parse_config("model = mean_vol\nmodel.mu = 1.0\nmodel.sigma = 0.8\n")
        assert cfg.n_paths == 100_000
        assert cfg.n_steps == 512
        assert cfg.methods == ["malliavin"]
        assert "n_paths" in cfg.applied_defaults
        assert cfg.params == {"mu": 1.0, "sigma": 0.8}

    def test_negative_horizon_rejected(self):
        with pytest.raises(ConfigParse):
            parse_config("model = mean_vol\nhorizon = -1.0\n")

    def test_unknown_key_reports_line_number(self):
        with pytest.raises(ConfigParse, match="line 3"):
            parse_config("model = mean_vol\n# fine\nn_pathz = 7\n")

    def test_bad_value_type_reports_line(self):
        with pytest.raises(ConfigParse, match="line 2"):
            parse_config("model = mean_vol\nn_paths = many\n")

    def test_duplicate_key_rejected(self):
        with pytest.raises(ConfigParse, match="duplicate"):
            parse_config("model = mean_vol\nseed = 1\nseed = 2\n")

    def test_method_alias_and_validation(self):
        cfg = parse_config(
            "model = mean_vol\nmethods = fd\nh_list = 0.1\nstrike = 2.0\n"
        )
        assert cfg.methods == ["fd_central"]
        with pytest.raises(ConfigParse):
            parse_config("model = mean_vol\nmethods = quantum\n")
        with pytest.raises(ConfigParse, match="h_list"):
            parse_config("model = mean_vol\nmethods = fd_forward\nstrike = 2.0\n")

    def test_strike_requirements(self):
        with pytest.raises(ConfigParse, match="strike"):
            parse_config("model = mean_vol\npayoff = digital\n")

    def test_string_model_parameters_pass_through(self):
        cfg = parse_config("model = mean_drift\nmodel.f_kind = tanh\nmodel.mu = 1\nmodel.sigma = 0.5\n")
        assert cfg.params["f_kind"] == "tanh"

    def test_round_trip_preserves_the_resolved_run(self):
        cfg = parse_config(MINI_RUN.format(out="somewhere"))
        again = parse_config(serialize_config(cfg))
        assert again.settings() == cfg.settings()
        assert again.methods == cfg.methods
        assert again.h_list == cfg.h_list
        assert again.params == cfg.params
        assert again.out == cfg.out

    def test_presets_parse(self):
        configs = Path(__file__).resolve().parents[1] / "configs"
        names = sorted(p.name for p in configs.glob("*.cfg"))
        assert names == [
            "figure1-bottomB.cfg",
            "figure1-topA.cfg",
            "figure2-bottomB.cfg",
            "figure2-topA.cfg",
        ]
        for preset in names:
            cfg = load_config(str(configs / preset))
            assert cfg.n_paths == 100_000
            assert cfg.h_list == [0.1, 0.01]


class TestRunCommand:
    def test_run_writes_both_csvs(self, tmp_path, capsys):
        out = tmp_path / "res"
        cfg = write_cfg(tmp_path, MINI_RUN.format(out=out))
        assert main(["run", "--config", cfg]) == 0
        printed = capsys.readouterr()
        assert "malliavin" in printed.out
        est = (out / "estimates.csv").read_text().splitlines()
        assert est[0] == "method,n_paths,n_steps,h,estimate,std_error,seed,wall_time_ms"
        assert len(est) == 4  # malliavin + fd at two bumps
        trace = (out / "trace.csv").read_text().splitlines()
        assert trace[0] == "method,n,estimate,std_error"
        methods = {line.split(",")[0] for line in trace[1:]}
        assert methods == {"malliavin", "fd_forward(h=0.1)", "fd_forward(h=0.01)"}

    def test_figure_preset_layout_produces_four_traces(self, tmp_path):
        # the checked-in preset at reduced size: four traced methods
        preset = Path(__file__).resolve().parents[1] / "configs" / "figure1-topA.cfg"
        text = preset.read_text()
        text = text.replace("n_paths = 100000", "n_paths = 2000")
        text = text.replace("n_steps = 512", "n_steps = 64")
        text = text.replace("out = out/figure1-topA", f"out = {tmp_path / 'fig'}")
        cfg = write_cfg(tmp_path, text)
        assert main(["run", "--config", cfg]) == 0
        trace = (tmp_path / "fig" / "trace.csv").read_text().splitlines()
        labels = {line.split(",")[0] for line in trace[1:]}
        assert labels == {
            "malliavin",
            "fd_forward(h=0.1)",
            "fd_forward(h=0.01)",
            "pathwise",
        }

    def test_defaults_are_noted_on_stderr(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path,
            f"model = mean_vol\nstrike = 2.0\nn_steps = 32\nn_paths = 500\n"
            f"out = {tmp_path / 'o'}\nmodel.mu = 1.0\nmodel.sigma = 0.8\n",
        )
        assert main(["run", "--config", cfg]) == 0
        assert "defaults applied" in capsys.readouterr().err

    def test_bad_config_exits_2(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "model = mean_vol\nhorizon = -2\n")
        assert main(["run", "--config", cfg]) == 2

    def test_outputs_identical_across_threads_and_reruns(self, tmp_path):
        cfg_text = MINI_RUN.format(out=tmp_path / "a")
        cfg = write_cfg(tmp_path, cfg_text)
        assert main(["run", "--config", cfg]) == 0
        assert main(["run", "--config", cfg, "--out", str(tmp_path / "b"), "--threads", "4"]) == 0
        for name in ("estimates.csv", "trace.csv"):
            a = (tmp_path / "a" / name).read_bytes()
            b = (tmp_path / "b" / name).read_bytes()
            assert a == b

    def test_seed_override_changes_the_estimates(self, tmp_path):
        cfg = write_cfg(tmp_path, MINI_RUN.format(out=tmp_path / "a"))
        main(["run", "--config", cfg])
        main(["run", "--config", cfg, "--seed", "123", "--out", str(tmp_path / "c")])
        assert (tmp_path / "a" / "estimates.csv").read_bytes() != (
            tmp_path / "c" / "estimates.csv"
        ).read_bytes()

    def test_path_dump(self, tmp_path):
        text = MINI_RUN.format(out=tmp_path / "d") + "dump_path = true\n"
        cfg = write_cfg(tmp_path, text)
        assert main(["run", "--config", cfg]) == 0
        lines = (tmp_path / "d" / "path0.csv").read_text().splitlines()
        assert lines[0] == "t,W,X,Y,J"
        assert len(lines) == 66  # header + 65 nodes
        first = lines[1].split(",")
        assert float(first[0]) == 0.0 and float(first[1]) == 0.0
        assert float(first[2]) == 1.0 and float(first[3]) == 1.0 and float(first[4]) == 1.0


class TestMeanfieldCommand:
    def test_exports_curves_with_footer(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path,
            f"model = bs_dividend\nn_steps = 32\nn_particles = 2000\n"
            f"picard_tol = 1e-3\npicard_max_iters = 30\nseed = 4\nout = {tmp_path / 'mf'}\n"
            f"model.mu = 1.0\nmodel.sigma = 0.6\nmodel.q = 0.5\n",
        )
        assert main(["meanfield", "--config", cfg]) == 0
        analytic = (tmp_path / "mf" / "curves_analytic.csv").read_text().splitlines()
        particle = (tmp_path / "mf" / "curves_particle.csv").read_text().splitlines()
        assert analytic[0] == "t,rho,pi,drho_dx,dpi_dx"
        assert particle[-1].startswith("# sup_distance rho=")
        assert "sup distance" in capsys.readouterr().out

    def test_nonconvergence_is_surfaced(self, tmp_path, capsys):
        cfg = write_cfg(
            tmp_path,
            f"model = bs_dividend\nn_steps = 16\nn_particles = 200\n"
            f"picard_tol = 1e-14\npicard_max_iters = 1\nout = {tmp_path / 'mf'}\n"
            f"model.mu = 1.0\nmodel.sigma = 0.6\nmodel.q = 0.5\n",
        )
        assert main(["meanfield", "--config", cfg]) == 1
        assert "did not converge" in capsys.readouterr().err


class TestValidateCommand:
    def test_crashed_check_is_reported_as_failure(self, monkeypatch):
        from mfdelta import validation

        monkeypatch.setattr(
            validation, "_FAST_CHECKS", [("boom", lambda: 1 / 0)], raising=True
        )
        results = validation.run_checks("fast")
        assert results[0].name == "boom"
        assert not results[0].passed
        assert "ZeroDivisionError" in results[0].detail

    def test_derivative_fault_injection_fails_the_named_check(self, monkeypatch):
        # corrupt one partial derivative of one catalog model: the
        # derivative check must fail by name while reporting which entry
        import dataclasses

        from mfdelta import validation

        real_build = validation.build_model

        def corrupted(model_id, params):
            model = real_build(model_id, params)
            if model_id == "mean_vol":
                return dataclasses.replace(model, d2_sigma=lambda t, x, pi: 0.31 * x)
            return model

        monkeypatch.setattr(validation, "build_model", corrupted)
        results = {r.name: r for r in validation.run_checks("fast")}
        assert not results["catalog_derivatives"].passed
        assert "d2_sigma" in results["catalog_derivatives"].detail

    def test_fast_level_passes_on_a_fresh_checkout(self):
        out = subprocess.run(
            [sys.executable, "-m", "mfdelta.cli", "validate", "--level", "fast"],
            capture_output=True,
            text=True,
        )
        assert out.returncode == 0, out.stdout + out.stderr
        assert "checks passed" in out.stdout
        assert "FAIL" not in out.stdout
