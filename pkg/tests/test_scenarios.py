"""End-to-end checks of the four built-in scenarios at reduced settings."""

import csv
import json
import math

import pytest

from klreg import ConfigError, config_hash, resolve_config, run_scenario

FAST = {
    "n_schedule": [60],
    "posterior.n_schedule": [10, 40],
    "sieve.n_schedule": [1, 2],
    "sieve.draws": 500,
    "chain.length": 300,
    "chain.burnin": 150,
    "chain.thin": 1,
    "replicates": 2,
}


def _run(tmp_path, scenario, stages=None, **extra):
    config = resolve_config({"scenario": scenario, **FAST, **extra})
    return config, run_scenario(config, out_dir=tmp_path, stages=stages)


class TestScenarioMatrix:
    @pytest.mark.parametrize("scenario", [
        "well_specified_normal",
        "step_truth_normal",
        "laplace_errors",
        "cross_family_misspec",
    ])
    def test_runs_end_to_end(self, tmp_path, scenario):
        config, manifest = _run(tmp_path, scenario)
        assert set(manifest["stages"]) == {
            "equipartition",
            "klrate",
            "posterior",
            "predictive",
            "sieve",
        }
        assert manifest["config_hash"] == config_hash(config)
        for name in manifest["artifacts"]:
            assert (tmp_path / name).exists()
        listed = set(manifest["artifacts"])
        on_disk = {p.name for p in tmp_path.iterdir()}
        assert listed == on_disk

    def test_baseline_minimum_rate_is_zero(self, tmp_path):
        """The cosine truth lies in the cosine span, so inf h = 0."""
        _, manifest = _run(tmp_path, "well_specified_normal", stages=["klrate"])
        assert abs(manifest["min_rate"]["rate"]) <= 1e-9
        assert manifest["min_rate"]["sigma_star"] == pytest.approx(1.0, abs=1e-6)

    def test_laplace_minimum_rate_is_zero(self, tmp_path):
        _, manifest = _run(tmp_path, "laplace_errors", stages=["klrate"])
        assert abs(manifest["min_rate"]["rate"]) <= 1e-6

    def test_cross_family_minimum_rate_frozen_value(self, tmp_path):
        """Best Normal fit of unit Laplace noise: rate log(pi)/2 - 1/2 at
        scale sqrt(2)."""
        _, manifest = _run(tmp_path, "cross_family_misspec", stages=["klrate"])
        assert manifest["min_rate"]["rate"] == pytest.approx(
            0.07236494292470, abs=1e-9
        )
        assert manifest["min_rate"]["sigma_star"] == pytest.approx(
            math.sqrt(2.0), abs=1e-9
        )

    def test_step_truth_minimum_rate_matches_spectral_decay(self, tmp_path):
        """A unit jump projected on 32 cosine features leaves residual
        ~ 1/(pi^2 K), so inf h ~ 1/(2 pi^2 K)."""
        _, manifest = _run(tmp_path, "step_truth_normal", stages=["klrate"])
        assert manifest["min_rate"]["rate"] == pytest.approx(
            1.0 / (2.0 * math.pi**2 * 32.0), rel=0.05
        )

    def test_inflated_scale_probe_has_known_target(self, tmp_path):
        """Doubling the scale at the minimizer costs log 2 - 3/8, so the
        equipartition target for that probe is -(log 2 - 3/8)."""
        _, _ = _run(tmp_path, "well_specified_normal", stages=["equipartition"])
        with open(tmp_path / "equipartition.csv", newline="") as fh:
            rows = [
                r for r in csv.DictReader(fh) if r["probe"] == "inflated_scale"
            ]
        assert rows
        for row in rows:
            assert float(row["target"]) == pytest.approx(
                -(math.log(2.0) - 0.375), abs=1e-9
            )


class TestStageSelection:
    def test_unknown_stage_rejected(self, tmp_path):
        config = resolve_config(FAST)
        with pytest.raises(ConfigError, match="unknown stages"):
            run_scenario(config, out_dir=tmp_path, stages=["klrate", "warp"])

    def test_h_grid_excess_is_nonnegative_at_minimum(self, tmp_path):
        _run(tmp_path, "well_specified_normal", stages=["klrate"])
        with open(tmp_path / "h_grid.csv", newline="") as fh:
            rows = list(csv.DictReader(fh))
        assert rows
        assert all(float(r["excess"]) >= -1e-9 for r in rows)
        info = json.loads((tmp_path / "h_inf.json").read_text())
        assert info["converged"] is True


class TestWorkerResolution:
    def test_env_override_wins_and_preserves_output(self, tmp_path, monkeypatch):
        config = resolve_config(FAST)
        serial = tmp_path / "serial"
        run_scenario(config, out_dir=serial, stages=["predictive"])
        monkeypatch.setenv("KLREG_WORKERS", "4")
        threaded = tmp_path / "threaded"
        run_scenario(config, out_dir=threaded, stages=["predictive"])
        for name in ("neps_mass.csv", "predictive.csv"):
            assert (serial / name).read_bytes() == (threaded / name).read_bytes()

    def test_bad_env_value_is_config_error(self, tmp_path, monkeypatch):
        monkeypatch.setenv("KLREG_WORKERS", "several")
        config = resolve_config(FAST)
        with pytest.raises(ConfigError, match="KLREG_WORKERS"):
            run_scenario(config, out_dir=tmp_path, stages=["predictive"])
