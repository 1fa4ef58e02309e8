"""Configuration loading, validation and the command-line runner."""

import csv
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from mmtsim import cli, config, precoding
from mmtsim.config import ConfigError, load_config, validate_config
from mmtsim.montecarlo import NumericalFailure

CONFIGS = Path(__file__).resolve().parent.parent / "configs"

SIMULATE = """\
experiment: simulate
system:
  nt: 4
  m: 2
  fc: 2.1e9
  tau: 5.0e-3
  v: 5
  b: 8
  snr_db: [0, 10]
run:
  trials: 4000
  seed: 42
"""


def write(tmp_path, text, name="cfg.yaml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def reasons(diags):
    return [f"{d.path}: {d.reason}" for d in diags]


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


class TestValidate:
    def test_missing_nt(self, tmp_path):
        diags = validate_config(write(tmp_path, "experiment: rate-table\nsystem: {b: 8}\n"))
        assert "system.nt: required" in reasons(diags)

    def test_mode_above_antennas(self, tmp_path):
        diags = validate_config(write(tmp_path, SIMULATE.replace("m: 2", "m: 5")))
        msg = [str(d) for d in diags if d.path == "system.m"]
        assert len(msg) == 1 and "1 <= M <= Nt" in msg[0] and "M=5" in msg[0]

    def test_speed_and_doppler_exclusive(self, tmp_path):
        diags = validate_config(write(tmp_path, SIMULATE.replace("v: 5", "v: 5\n  fdts: 0.01")))
        assert any("mutually exclusive" in d.reason for d in diags)

    def test_unreadable_file(self, tmp_path):
        diags = validate_config(str(tmp_path / "missing.yaml"))
        assert len(diags) == 1 and "cannot read" in diags[0].reason

    def test_invalid_yaml_has_line(self, tmp_path):
        diags = validate_config(write(tmp_path, "experiment: simulate\nsystem:\n  nt: [4\n"))
        assert diags[0].reason.startswith("invalid YAML") and diags[0].line is not None

    def test_line_numbers(self, tmp_path):
        path = write(tmp_path, SIMULATE.replace("m: 2", "m: 7"))
        (d,) = [d for d in validate_config(path) if d.path == "system.m"]
        assert d.line == 4
        assert str(d).startswith(f"{path}:4: system.m: ")

    def test_unknown_keys(self, tmp_path):
        text = SIMULATE.replace("b: 8", "b: 8\n  bits: 3") + "extra: 1\n"
        diags = validate_config(write(tmp_path, text))
        assert {"extra: unknown key", "system.bits: unknown key"} <= set(reasons(diags))

    @pytest.mark.parametrize("edit,path", [
        (("fc: 2.1e9", "fc: -1"), "system.fc"),
        (("snr_db: [0, 10]", "snr_db: []"), "system.snr_db"),
        (("trials: 4000", "trials: 0"), "run.trials"),
        (("  tau: 5.0e-3\n", ""), "system.tau"),
        (("b: 8", "b: 99"), "system.b"),
    ])
    def test_field_checks(self, tmp_path, edit, path):
        diags = validate_config(write(tmp_path, SIMULATE.replace(*edit)))
        assert path in [d.path for d in diags]

    def test_kind_mismatch(self, tmp_path):
        diags = validate_config(write(tmp_path, SIMULATE), kind="rate-table")
        assert "experiment" in [d.path for d in diags]

    def test_all_shipped_configs_valid(self):
        for p in sorted(CONFIGS.glob("*.yaml")):
            assert validate_config(str(p)) == [], p.name

    def test_overrides_win(self, tmp_path):
        path = write(tmp_path, SIMULATE)
        cfg = load_config(path, ["system.b=12", "run.seed=7", "system.snr_db=[5]"])
        assert cfg.b == 12 and cfg.seed == 7 and cfg.snr_db == (5.0,)

    def test_override_error_has_no_line(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            load_config(write(tmp_path, SIMULATE), ["system.m=9"])
        (d,) = exc.value.diagnostics
        assert d.path == "system.m" and d.line is None

    def test_parse_override(self):
        assert config.parse_override("system.v_grid=[1, 2]") == ("system.v_grid", [1, 2])
        assert config.parse_override("run.out=a=b") == ("run.out", "a=b")
        with pytest.raises(ValueError):
            config.parse_override("nonsense")

    def test_grid_forms(self, tmp_path):
        base = SIMULATE.replace("snr_db: [0, 10]", "snr_db: {start: 0, stop: 10, step: 5}")
        assert load_config(write(tmp_path, base)).snr_db == (0.0, 5.0, 10.0)
        assert load_config(write(tmp_path, SIMULATE.replace("[0, 10]", "3"))).snr_db == (3.0,)

    def test_defaults(self, tmp_path):
        cfg = load_config(write(tmp_path, "experiment: rate-table\nsystem: {nt: 4}\n"))
        assert cfg.snr_db[0] == -10 and cfg.snr_db[-1] == 40 and len(cfg.snr_db) == 26
        assert cfg.trials == 10_000 and math.isinf(cfg.b)


class TestRun:
    def run(self, tmp_path, *args, cfg_text=SIMULATE, cmd="simulate"):
        path = write(tmp_path, cfg_text)
        out = tmp_path / "out"
        code = cli.main([cmd, "--config", path, "--out", str(out), *args])
        return code, out

    def test_simulate_outputs(self, tmp_path, capsys):
        code, out = self.run(tmp_path)
        assert code == 0
        rows = read_csv(out / "simulate.csv")
        assert rows[0] == ["snr_db", "m", "analytic_sum_rate", "mc_sum_rate", "mc_std_error", "trials", "redraws"]
        assert len(rows) == 3
        man = json.loads((out / "simulate.manifest.json").read_text())
        assert man["seed"] == 42 and man["experiment"] == "simulate"
        assert man["config"]["m"] == 2 and man["config"]["b"] == 8
        assert man["outputs"] == ["simulate.csv"]
        assert {"version", "wall_time_s"} <= set(man)

    def test_nine_significant_digits(self, tmp_path):
        _, out = self.run(tmp_path)
        for row in read_csv(out / "simulate.csv")[1:]:
            for cell in row[2:5]:
                digits = cell.split("e")[0].replace("-", "").replace(".", "").lstrip("0")
                assert len(digits) <= 9
            assert float(row[2]) > 0

    def test_format_value(self):
        assert cli.format_value(1 / 3) == "0.333333333"
        assert cli.format_value(123456789012.0) == "1.23456789e+11"
        assert cli.format_value(float("nan")) == "nan"
        assert cli.format_value(3) == "3" and cli.format_value(True) == "1"

    def test_byte_identical_and_worker_independent(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        _, a = self.run(tmp_path / "a", "--seed", "42")
        _, b = self.run(tmp_path / "b", "--seed", "42", "--set", "run.workers=2")
        assert (a / "simulate.csv").read_bytes() == (b / "simulate.csv").read_bytes()

    def test_seed_flag_changes_output(self, tmp_path):
        (tmp_path / "a").mkdir()
        (tmp_path / "b").mkdir()
        _, a = self.run(tmp_path / "a", "--seed", "1")
        _, b = self.run(tmp_path / "b", "--seed", "2")
        assert (a / "simulate.csv").read_bytes() != (b / "simulate.csv").read_bytes()

    def test_trials_flag(self, tmp_path):
        _, out = self.run(tmp_path, "--trials", "2001")
        assert {r[5] for r in read_csv(out / "simulate.csv")[1:]} == {"2001"}

    def test_json_and_plot(self, tmp_path):
        code, out = self.run(tmp_path, "--format", "json", "--plot")
        assert code == 0
        data = json.loads((out / "simulate.json").read_text())
        assert data["columns"][0] == "snr_db" and len(data["rows"]) == 2
        for name in ("simulate.csv", "simulate.gp", "simulate.png"):
            assert (out / name).stat().st_size > 0
        assert "simulate.csv" in (out / "simulate.gp").read_text()
        assert (out / "simulate.png").read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    def test_config_error_exit(self, tmp_path, capsys):
        code, out = self.run(tmp_path, cfg_text=SIMULATE.replace("nt: 4", "nt: 0"))
        assert code == 2
        assert "system.nt" in capsys.readouterr().err
        assert not out.exists()

    def test_numerical_failure_exit(self, tmp_path, monkeypatch, capsys):
        monkeypatch.setattr(precoding, "CONDITION_LIMIT", 1.0)
        code, out = self.run(tmp_path)
        assert code == 3
        assert "numerical failure" in capsys.readouterr().err
        assert not out.exists() or not any(out.iterdir())

    def test_no_partial_outputs(self, tmp_path, monkeypatch):
        # the plot is rendered after the data files were staged
        import mmtsim.plotting

        def boom(*a, **k):
            raise NumericalFailure("late failure")

        monkeypatch.setattr(mmtsim.plotting, "render_png", boom)
        code, out = self.run(tmp_path, "--plot")
        assert code == 3
        assert not out.exists() or not any(out.iterdir())
        assert not [p for p in tmp_path.iterdir() if p.name.startswith(".mmtsim-")]

    def test_validate_command(self, tmp_path, capsys):
        assert cli.main(["validate", write(tmp_path, SIMULATE)]) == 0
        assert cli.main(["validate", "--config", write(tmp_path, SIMULATE.replace("m: 2", "m: 9"))]) == 2
        assert "1 <= M <= Nt" in capsys.readouterr().err
        assert cli.main(["validate"]) == 2

    def test_entry_point_module(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "mmtsim.cli", "validate", write(tmp_path, SIMULATE)],
                              capture_output=True, text=True)
        assert proc.returncode == 0 and "ok" in proc.stdout


SMALL = {
    "rate-table": "experiment: rate-table\nsystem: {nt: 4, b: 18, v: 10, tau: 1.0e-3, snr_db: [0, 20]}\n"
                  "run: {trials: 2000}\n",
    "operating-region": "experiment: operating-region\nsystem: {nt: 4, b: 15, tau: 5.0e-3, "
                        "v_grid: [2, 20], snr_db: [0, 20]}\n",
    "schedule": "experiment: schedule\nsystem: {nt: 4, u: 6, b: 8, v: 5, tau: 5.0e-3, snr_db: 10}\n"
                "run: {slots: 12}\n",
    "feedback-budget": "experiment: feedback-budget\nsystem: {nt: 4, b_t: [40], snr_db: [15], us_bits: [10]}\n"
                       "run: {trials: 2000, us_trials: 100}\n",
    "high-snr-mode": "experiment: high-snr-mode\nsystem: {nt: 4, fdts_grid: [0.005, 0.05], b_grid: [10, 30]}\n",
}

HEADERS = {
    "rate-table": ["snr_db", "analytic_m1", "analytic_m2", "analytic_m3", "analytic_m4", "mc_m1", "mc_m2",
                   "mc_m3", "mc_m4", "mc_se_m1", "mc_se_m2", "mc_se_m3", "mc_se_m4", "chosen_mode"],
    "operating-region": ["snr_db", "v_kmh", "analytic_m1", "analytic_m2", "analytic_m3", "analytic_m4",
                         "chosen_mode"],
    "schedule": ["slot", "selected", "mode", "predicted_sum_rate", "feedback_bits"],
    "high-snr-mode": ["fdts", "B", "ceiling_m2", "ceiling_m3", "ceiling_m4", "dominant_mode"],
}


class TestKinds:
    @pytest.mark.parametrize("kind", sorted(SMALL))
    def test_runs_with_stable_header(self, tmp_path, kind):
        path = write(tmp_path, SMALL[kind])
        headers = []
        for run in ("a", "b"):
            out = tmp_path / run
            assert cli.main([kind, "--config", path, "--out", str(out)]) == 0
            rows = read_csv(out / f"{kind}.csv")
            assert all(len(r) == len(rows[0]) for r in rows)
            headers.append(rows[0])
        assert headers[0] == headers[1]
        if kind in HEADERS:
            assert headers[0] == HEADERS[kind]

    def test_high_snr_mode_values(self, tmp_path):
        out = tmp_path / "o"
        cli.main(["high-snr-mode", "--config", write(tmp_path, SMALL["high-snr-mode"]), "--out", str(out)])
        rows = {(r[0], r[1]): r[-1] for r in read_csv(out / "high-snr-mode.csv")[1:]}
        assert rows[("0.005", "10")] == "2" and rows[("0.005", "30")] == "4"

    def test_schedule_rows(self, tmp_path):
        out = tmp_path / "o"
        cli.main(["schedule", "--config", write(tmp_path, SMALL["schedule"]), "--out", str(out)])
        rows = read_csv(out / "schedule.csv")[1:]
        assert [r[1] for r in rows[:3]] == ["1 2", "3 4", "5 6"]
        assert {r[4] for r in rows} == {"16"}

    def test_feedback_budget_columns(self, tmp_path):
        out = tmp_path / "o"
        cli.main(["feedback-budget", "--config", write(tmp_path, SMALL["feedback-budget"]), "--out", str(out)])
        head, row = read_csv(out / "feedback-budget.csv")
        rec = dict(zip(head, row))
        assert rec["b_t"] == "40" and rec["us_zf_best_bits"] == "10"
        assert int(rec["mmt_bits_per_user"]) == 40 // int(rec["mmt_mode"])
