"""Tests for configuration loading, validation, hashing, and the CLI."""

import csv
import hashlib
import json
from pathlib import Path

import pytest

from klreg import (
    SCENARIOS,
    ConfigError,
    config_hash,
    load_config,
    resolve_config,
)
from klreg.cli import build_parser, main


def _write(tmp_path: Path, text: str, name: str = "cfg.toml") -> str:
    path = tmp_path / name
    path.write_text(text)
    return str(path)


FAST_RUN = """
n_schedule = [60]
replicates = 2

[posterior]
n_schedule = [10, 40]

[sieve]
n_schedule = [1, 2]
draws = 500

[chain]
length = 300
burnin = 150
thin = 1
"""


class TestConfigResolution:
    def test_no_file_gives_baseline_defaults(self):
        config = load_config(None)
        assert config.scenario == "well_specified_normal"
        assert config["family"] == "normal"
        assert config["prior.k"] == 8
        assert config["n_schedule"] == [200, 1000, 5000]
        assert config.user_keys == ()

    def test_empty_file_equals_no_file(self, tmp_path):
        path = _write(tmp_path, "")
        assert load_config(path).values == load_config(None).values

    def test_scenario_blocks_apply(self):
        step = resolve_config({"scenario": "step_truth_normal"})
        assert step["truth.form"] == "step"
        assert step["prior.k"] == 32
        assert step["prior.kernel"] == "matern"
        lap = resolve_config({"scenario": "laplace_errors"})
        assert lap["family"] == "laplace"
        assert lap["truth.noise"] == "laplace"
        cross = resolve_config({"scenario": "cross_family_misspec"})
        assert cross["family"] == "normal"
        assert cross["truth.noise"] == "laplace"
        assert cross["truth.form"] == "constant"

    def test_user_key_beats_scenario_default(self, tmp_path):
        path = _write(
            tmp_path,
            'scenario = "step_truth_normal"\n[prior]\nk = 16\n',
        )
        config = load_config(path)
        assert config["prior.k"] == 16
        assert "prior.k" in config.user_keys

    def test_overrides_sit_on_top_of_file(self, tmp_path):
        path = _write(tmp_path, "seed = 3\nreplicates = 7\n")
        config = load_config(path, overrides={"seed": 9})
        assert config["seed"] == 9
        assert config["replicates"] == 7
        assert set(config.user_keys) == {"seed", "replicates"}

    def test_unknown_key_rejected_by_name(self):
        with pytest.raises(ConfigError, match="truth.wavelength"):
            resolve_config({"truth.wavelength": 2.0})

    def test_negative_scale_error_names_the_key(self):
        with pytest.raises(ConfigError, match="truth.sigma0"):
            resolve_config({"truth.sigma0": -1.0})

    def test_non_increasing_schedule_rejected(self):
        with pytest.raises(ConfigError, match="strictly increasing"):
            resolve_config({"n_schedule": [100, 100]})

    def test_cross_family_requires_differing_noise(self):
        with pytest.raises(ConfigError, match="cross_family"):
            resolve_config(
                {"scenario": "cross_family_misspec", "truth.noise": "normal"}
            )

    def test_rff_requires_squared_exponential(self):
        with pytest.raises(ConfigError, match="prior.basis"):
            resolve_config({"prior.basis": "rff", "prior.kernel": "matern"})

    def test_prediction_point_must_lie_in_domain(self):
        with pytest.raises(ConfigError, match="predictive.x_new"):
            resolve_config({"predictive.x_new": 1.5})

    def test_bad_choice_lists_alternatives(self):
        with pytest.raises(ConfigError, match="well_specified_normal"):
            resolve_config({"scenario": "nope"})
        assert len(SCENARIOS) == 4

    def test_missing_file_is_config_error(self):
        with pytest.raises(ConfigError, match="not found"):
            load_config("/nonexistent/path.toml")

    def test_invalid_toml_is_config_error(self, tmp_path):
        path = _write(tmp_path, "n_schedule = [")
        with pytest.raises(ConfigError, match="TOML"):
            load_config(path)


class TestConfigHash:
    def test_hash_is_stable(self):
        a = resolve_config({"seed": 5})
        b = resolve_config({"seed": 5})
        assert config_hash(a) == config_hash(b)

    def test_hash_tracks_semantic_changes(self):
        base = config_hash(resolve_config({}))
        assert config_hash(resolve_config({"seed": 1})) != base
        assert config_hash(resolve_config({"truth.sigma0": 2.0})) != base

    def test_hash_ignores_placement_and_parallelism(self):
        base = config_hash(resolve_config({}))
        assert config_hash(resolve_config({"out_dir": "elsewhere"})) == base
        assert config_hash(resolve_config({"workers": 8})) == base


class TestCliParsing:
    def test_schedule_flag_parses_comma_list(self):
        args = build_parser().parse_args(["run", "--n", "10,20,40"])
        assert args.n == [10, 20, 40]

    def test_malformed_schedule_flag_exits_with_usage_error(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["run", "--n", "ten"])

    def test_klrate_takes_no_schedule_flag(self):
        with pytest.raises(SystemExit):
            build_parser().parse_args(["klrate", "--n", "10"])


class TestCliExitCodes:
    def test_validate_prints_resolution(self, capsys):
        code = main(["validate", "--seed", "1"])
        out = capsys.readouterr().out
        assert code == 0
        assert "scenario: well_specified_normal" in out
        assert "config hash:" in out
        assert "* seed = 1" in out

    def test_unknown_key_exits_two(self, tmp_path, capsys):
        path = _write(tmp_path, "bogus = 1\n")
        code = main(["validate", "--config", path])
        assert code == 2
        assert "configuration error" in capsys.readouterr().err

    def test_missing_file_exits_two(self, capsys):
        code = main(["run", "--config", "/nonexistent.toml"])
        assert code == 2
        assert "configuration error" in capsys.readouterr().err

    def test_runtime_failure_exits_three(self, tmp_path, capsys):
        # k = 32 squared-exponential cosine scales underflow, which is a
        # runtime error in a perfectly valid configuration.
        path = _write(tmp_path, FAST_RUN + '\n[prior]\nk = 32\n')
        code = main(["run", "--config", path, "--out", str(tmp_path / "out")])
        assert code == 3
        assert "run failed" in capsys.readouterr().err


class TestCliRuns:
    def test_full_run_produces_all_artifacts(self, tmp_path, capsys):
        path = _write(tmp_path, FAST_RUN)
        out = tmp_path / "out"
        code = main(["run", "--config", path, "--out", str(out)])
        assert code == 0
        assert f"manifest: {out}/manifest.json" in capsys.readouterr().out
        names = {p.name for p in out.iterdir()}
        assert {
            "equipartition.csv",
            "h_grid.csv",
            "h_inf.json",
            "rate_diagnostic.csv",
            "posterior_summary.json",
            "neps_mass.csv",
            "predictive.csv",
            "sieve.json",
            "manifest.json",
        } <= names
        manifest = json.loads((out / "manifest.json").read_text())
        assert set(manifest["stages"]) == {
            "equipartition",
            "klrate",
            "posterior",
            "predictive",
            "sieve",
        }
        assert manifest["scenario"] == "well_specified_normal"

    def test_minimizer_probe_gap_vanishes_when_truth_in_span(self, tmp_path):
        """In the baseline scenario the truth lies in the span, so the
        normalized log-ratio at the rate minimizer has gap ~ 0 at every n."""
        path = _write(tmp_path, FAST_RUN)
        out = tmp_path / "out"
        assert main(["run", "--config", path, "--out", str(out)]) == 0
        with open(out / "equipartition.csv", newline="") as fh:
            rows = [r for r in csv.DictReader(fh) if r["probe"] == "rate_minimizer"]
        assert rows
        for row in rows:
            assert abs(float(row["gap"])) <= 1e-10

    def test_reruns_are_byte_identical(self, tmp_path):
        path = _write(tmp_path, FAST_RUN)
        digests = []
        for name in ("first", "second"):
            out = tmp_path / name
            assert main(["run", "--config", path, "--out", str(out)]) == 0
            files = sorted(
                p.name for p in out.iterdir() if p.name != "manifest.json"
            )
            digests.append(
                [
                    (f, hashlib.sha256((out / f).read_bytes()).hexdigest())
                    for f in files
                ]
            )
        assert digests[0] == digests[1]

    def test_stage_subset_runs_only_requested_stages(self, tmp_path):
        path = _write(tmp_path, FAST_RUN)
        out = tmp_path / "out"
        code = main(
            ["run", "--config", path, "--out", str(out), "--stages", "klrate,sieve"]
        )
        assert code == 0
        names = {p.name for p in out.iterdir()}
        assert {"h_grid.csv", "h_inf.json", "sieve.json", "manifest.json"} <= names
        assert "equipartition.csv" not in names
        assert "neps_mass.csv" not in names

    def test_single_stage_subcommand(self, tmp_path):
        path = _write(tmp_path, FAST_RUN)
        out = tmp_path / "out"
        assert main(["klrate", "--config", path, "--out", str(out)]) == 0
        names = {p.name for p in out.iterdir()}
        assert {"h_grid.csv", "h_inf.json", "manifest.json"} <= names

    def test_seed_flag_changes_results(self, tmp_path):
        path = _write(tmp_path, FAST_RUN)
        outs = []
        for seed in ("1", "2"):
            out = tmp_path / f"seed{seed}"
            assert (
                main(
                    [
                        "equipartition",
                        "--config",
                        path,
                        "--out",
                        str(out),
                        "--seed",
                        seed,
                    ]
                )
                == 0
            )
            outs.append((out / "equipartition.csv").read_bytes())
        assert outs[0] != outs[1]
