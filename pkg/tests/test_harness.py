import csv

import numpy as np
import pytest

from pombo import acceptance, kernels
from pombo.algorithms import ConfigError, RunConfig
from pombo.cli import EXIT_CONFIG, EXIT_OK, EXIT_RUNTIME, EXIT_VERIFY, main
from pombo.harness import (
    aggregate_best_seen,
    load_config,
    parse_config,
    parse_seeds,
    run_experiment,
)

MINIMAL = """
[experiment]
algorithm = tosfit

[env]
name = bandit
"""


def _spec(tmp_path, body, name="out"):
    spec = parse_config(body)
    spec.output = str(tmp_path / name)
    return spec


class TestParseConfig:
    def test_minimal_installs_defaults(self):
        spec = parse_config(MINIMAL)
        assert spec.run == RunConfig()
        assert (spec.run.m, spec.run.c, spec.run.B, spec.run.b) == (16, 1, 16, 1)
        assert spec.run.bonus == 4.0 and spec.run.sigma_nar == 0.01
        assert spec.seeds == list(range(25)) and spec.prior.kind == "uniform"

    def test_full_config(self):
        spec = parse_config("""
[experiment]
algorithm = sac
seeds = 0-2, 7
output = runs/x

[env]
name = sequence
length = 8
prior = biased
prior_strength = 3.5

[run]
T = 40
sac_alpha = 0.5
pool_exclude_max = yes
""")
        assert spec.seeds == [0, 1, 2, 7] and spec.env_params == {"length": 8}
        assert spec.prior.kind == "biased" and spec.prior.strength == 3.5
        assert spec.run.T == 40 and spec.run.sac_alpha == 0.5 and spec.pool_exclude_max

    @pytest.mark.parametrize("extra,message", [
        ("[run]\nb = 32\nB = 16\n", "b <= B"),
        ("[run]\nT = 10\nT = 20\n", "duplicate key 'T'"),
        ("[run]\nhorizon = 10\n", "unknown key"),
        ("[run]\nT = ten\n", "expected int"),
        ("[env2]\nx = 1\n", "unknown section"),
    ])
    def test_errors_name_the_problem(self, extra, message):
        with pytest.raises(ConfigError, match=message):
            parse_config(MINIMAL + extra)

    def test_inline_comments(self):
        spec = parse_config(MINIMAL.replace("tosfit", "pgts   ; pool-restricted TS") + "[run]\nT = 40  # observations\n")
        assert spec.algorithm == "pgts" and spec.run.T == 40

    def test_error_reports_line(self):
        with pytest.raises(ConfigError, match="line 9"):
            parse_config(MINIMAL + "\n[run]\nbonus = x\n")

    def test_unknown_algorithm_and_env(self):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL.replace("tosfit", "magic"))
        with pytest.raises(ConfigError):
            parse_config(MINIMAL.replace("bandit", "protein"))

    def test_sac_needs_alpha(self):
        with pytest.raises(ConfigError):
            parse_config(MINIMAL.replace("tosfit", "sac"))

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "nope.ini")

    def test_seed_lists(self):
        assert parse_seeds("3") == [3]
        assert parse_seeds("0-3,10") == [0, 1, 2, 3, 10]
        for bad in ("", "5-2", "-1"):
            with pytest.raises(ValueError):
                parse_seeds(bad)


class TestRunExperiment:
    def test_aggregate_rows_and_se(self, tmp_path):
        spec = _spec(tmp_path, MINIMAL.replace("tosfit", "unguided") + "[run]\nT = 300\n")
        res = run_experiment(spec, workers=1)
        rows = list(csv.reader(res.aggregate_file.open()))
        assert rows[0] == ["step", "mean_best_seen", "se"] and len(rows) == 301
        curves = np.array([res.best_seen[s] for s in sorted(res.best_seen)])
        se = np.array([float(r[2]) for r in rows[1:]])
        np.testing.assert_allclose(se, curves.std(axis=0, ddof=1) / 5.0, rtol=1e-12)

    def test_seed_csv_format(self, tmp_path):
        spec = _spec(tmp_path, MINIMAL + "[run]\nT = 20\n")
        spec.seeds = [4]
        res = run_experiment(spec)
        data = res.seed_files[4].read_bytes()
        assert data.startswith(b"seed,step,point_hash,reward,best_seen\n") and b"\r" not in data
        assert data.count(b"\n") == 21

    def test_reruns_are_byte_identical(self, tmp_path):
        specs = [_spec(tmp_path, MINIMAL + "[run]\nT = 30\n", name) for name in ("a", "b")]
        for spec in specs:
            spec.seeds = [0, 1, 2]
        a, b = (run_experiment(spec) for spec in specs)
        for s in (0, 1, 2):
            assert a.seed_files[s].read_bytes() == b.seed_files[s].read_bytes()
        assert a.aggregate_file.read_bytes() == b.aggregate_file.read_bytes()

    def test_workers_do_not_change_output(self, tmp_path):
        body = MINIMAL + "[run]\nT = 25\n"
        spec1, spec2 = _spec(tmp_path, body, "w1"), _spec(tmp_path, body, "w3")
        spec1.seeds = spec2.seeds = [0, 1, 2, 3]
        a, b = run_experiment(spec1, workers=1), run_experiment(spec2, workers=3)
        for s in spec1.seeds:
            assert a.seed_files[s].read_bytes() == b.seed_files[s].read_bytes()

    def test_two_algorithms_share_step_grid(self, tmp_path):
        a = run_experiment(_spec(tmp_path, MINIMAL + "[run]\nT = 15\n", "tos"))
        b = run_experiment(_spec(tmp_path, MINIMAL.replace("tosfit", "pgts") + "[run]\nT = 15\n", "pg"))
        steps = [[r[0] for r in csv.reader(res.aggregate_file.open())] for res in (a, b)]
        assert steps[0] == steps[1]

    def test_aggregate_single_curve(self):
        mean, se = aggregate_best_seen([np.array([1.0, 2.0])])
        np.testing.assert_array_equal(mean, [1.0, 2.0])
        assert np.isnan(se).all()


class TestCli:
    def _write(self, tmp_path, body):
        path = tmp_path / "exp.ini"
        path.write_text(body.replace("[env]", f"output = {tmp_path / 'runs'}\n\n[env]"))
        return str(path)

    def test_run_ok(self, tmp_path, capsys):
        cfg = self._write(tmp_path, MINIMAL.replace("[env]", "seeds = 0-1\n\n[env]") + "[run]\nT = 20\n")
        assert main(["run", "--config", cfg]) == EXIT_OK
        assert (tmp_path / "runs" / "aggregate.csv").exists()
        assert "wrote 2 seed traces" in capsys.readouterr().out

    def test_config_errors(self, tmp_path):
        assert main(["run", "--config", str(tmp_path / "missing.ini")]) == EXIT_CONFIG
        assert main(["run", "--config", self._write(tmp_path, MINIMAL + "[run]\nb = 99\n")]) == EXIT_CONFIG
        assert main(["bogus"]) == EXIT_CONFIG
        assert main(["enumerate", "--env", "protein", "--out", str(tmp_path / "x.csv")]) == EXIT_CONFIG

    def test_runtime_failure(self, tmp_path):
        # exact TS cannot enumerate 2^21 sequences, so every seed fails
        body = MINIMAL.replace("tosfit", "exact_ts").replace("bandit", "sequence\nlength = 21")
        cfg = self._write(tmp_path, body.replace("[env]", "seeds = 0\n\n[env]"))
        assert main(["run", "--config", cfg]) == EXIT_RUNTIME

    def test_verify_failure_names_criterion(self, monkeypatch, capsys):
        monkeypatch.setattr(acceptance, "QUICK", (3,))
        monkeypatch.setattr(kernels, "v_inv", lambda u, _orig=kernels.v_inv: -_orig(u))
        assert main(["verify", "--level", "quick"]) == EXIT_VERIFY
        out = capsys.readouterr().out
        assert "0/1 criteria passed" in out and "3 (v/v_inv round trip)" in out

    def test_verify_ok(self, monkeypatch, capsys):
        monkeypatch.setattr(acceptance, "QUICK", (3, 6))
        assert main(["verify"]) == EXIT_OK
        assert "2/2 criteria passed" in capsys.readouterr().out

    def test_enumerate(self, tmp_path):
        out = tmp_path / "enum.csv"
        assert main(["enumerate", "--env", "sequence", "--out", str(out), "--param", "length=4"]) == EXIT_OK
        rows = list(csv.reader(out.open()))
        assert len(rows) == 17 and rows[0][:4] == ["index", "point", "point_hash", "reward"]
        assert main(["enumerate", "--env", "sequence", "--out", str(out), "--param", "length"]) == EXIT_CONFIG
