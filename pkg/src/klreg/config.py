"""Scenario configuration: TOML files with dotted keys, strict validation.

A config file selects one of four named scenarios and optionally overrides
its defaults.  Validation is strict -- unknown keys are rejected with their
full dotted path -- and the resolved configuration records which keys came
from the user versus the scenario defaults, so run manifests can show
provenance.  An empty file resolves to the defaults of
``well_specified_normal``.
"""

from __future__ import annotations

import json
import hashlib

try:  # Python 3.11+
    import tomllib
except ModuleNotFoundError:  # pragma: no cover - version-dependent import
    import tomli as tomllib
from dataclasses import dataclass, field
from typing import Any

from .errors import ConfigError

__all__ = [
    "ScenarioConfig",
    "SCENARIOS",
    "load_config",
    "resolve_config",
    "config_hash",
]

SCENARIOS = (
    "well_specified_normal",
    "step_truth_normal",
    "laplace_errors",
    "cross_family_misspec",
)

# Defaults shared by every scenario; scenario entries override selectively.
_BASE_DEFAULTS: dict[str, Any] = {
    "scenario": "well_specified_normal",
    "family": "normal",
    "seed": 0,
    "replicates": 5,
    "out_dir": "klreg_out",
    "n_schedule": [200, 1000, 5000],
    "posterior.n_schedule": [50, 200, 1000],
    "truth.form": "cosine",
    "truth.coefficients": [0.5, 0.3, -0.2],
    "truth.value": 0.0,
    "truth.break_at": 0.5,
    "truth.jump": 1.0,
    "truth.base": 0.0,
    "truth.amplitude": 1.0,
    "truth.frequency": 1.0,
    "truth.noise": "normal",
    "truth.sigma0": 1.0,
    "prior.kernel": "squared_exponential",
    "prior.amplitude": 1.0,
    "prior.lengthscale": 0.5,
    "prior.k": 8,
    "prior.basis": "cosine",
    "prior.feature_seed": 0,
    "prior.sigma.kind": "lognormal",
    "prior.sigma.params": [0.0, 0.5],
    "sieve.beta": 6.0,
    "sieve.n_schedule": [1, 4, 16],
    "sieve.draws": 4000,
    "chain.length": 2000,
    "chain.burnin": 1000,
    "chain.thin": 2,
    "predictive.x_new": 0.3,
    "concentration.epsilon_scale": 1.0,
    "workers": 0,
}

_SCENARIO_OVERRIDES: dict[str, dict[str, Any]] = {
    "well_specified_normal": {},
    "step_truth_normal": {
        "scenario": "step_truth_normal",
        "truth.form": "step",
        "prior.k": 32,
        # A rough (Matern) kernel keeps the spectral prior scales of the
        # high-frequency features positive in floating point; the
        # squared-exponential weights underflow to zero beyond k ~ 24.
        "prior.kernel": "matern",
    },
    "laplace_errors": {
        "scenario": "laplace_errors",
        "family": "laplace",
        "truth.noise": "laplace",
    },
    "cross_family_misspec": {
        "scenario": "cross_family_misspec",
        "family": "normal",
        "truth.noise": "laplace",
        "truth.form": "constant",
    },
}

_VALID_KEYS = set(_BASE_DEFAULTS)

_INT_KEYS = {
    "seed",
    "replicates",
    "prior.k",
    "prior.feature_seed",
    "sieve.draws",
    "chain.length",
    "chain.burnin",
    "chain.thin",
    "workers",
}
_POSITIVE_INT_KEYS = {"replicates", "prior.k", "sieve.draws", "chain.length", "chain.thin"}
_FLOAT_KEYS = {
    "truth.sigma0",
    "truth.value",
    "truth.break_at",
    "truth.jump",
    "truth.base",
    "truth.amplitude",
    "truth.frequency",
    "prior.amplitude",
    "prior.lengthscale",
    "sieve.beta",
    "predictive.x_new",
    "concentration.epsilon_scale",
}
_POSITIVE_FLOAT_KEYS = {
    "truth.sigma0",
    "prior.amplitude",
    "prior.lengthscale",
    "sieve.beta",
    "concentration.epsilon_scale",
}
_INT_LIST_KEYS = {"n_schedule", "posterior.n_schedule", "sieve.n_schedule"}
_CHOICES = {
    "scenario": SCENARIOS,
    "family": ("normal", "laplace"),
    "truth.form": ("cosine", "constant", "step", "sinusoid"),
    "truth.noise": ("normal", "laplace"),
    "prior.kernel": ("squared_exponential", "matern"),
    "prior.basis": ("cosine", "rff"),
    "prior.sigma.kind": ("lognormal", "inverse_gamma_variance"),
}


@dataclass(frozen=True)
class ScenarioConfig:
    """A fully resolved scenario configuration."""

    values: dict[str, Any]
    user_keys: tuple[str, ...]

    def __getitem__(self, key: str) -> Any:
        return self.values[key]

    @property
    def scenario(self) -> str:
        return self.values["scenario"]


def _flatten(tree: dict[str, Any], prefix: str = "") -> dict[str, Any]:
    flat: dict[str, Any] = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        # "prior.sigma.params" is a list-valued leaf; only plain dicts recurse.
        if isinstance(value, dict):
            flat.update(_flatten(value, f"{path}."))
        else:
            flat[path] = value
    return flat


def _validate_value(key: str, value: Any) -> Any:
    if key in _CHOICES:
        if value not in _CHOICES[key]:
            raise ConfigError(
                f"{key}: {value!r} is not one of {list(_CHOICES[key])}"
            )
        return value
    if key in _INT_KEYS:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{key}: expected an integer, got {value!r}")
        if key in _POSITIVE_INT_KEYS and value <= 0:
            raise ConfigError(f"{key}: must be positive, got {value}")
        if key in ("seed", "prior.feature_seed", "workers", "chain.burnin") and value < 0:
            raise ConfigError(f"{key}: must be nonnegative, got {value}")
        return value
    if key in _FLOAT_KEYS:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number, got {value!r}")
        value = float(value)
        if key in _POSITIVE_FLOAT_KEYS and value <= 0:
            raise ConfigError(f"{key}: must be positive, got {value}")
        return value
    if key in _INT_LIST_KEYS:
        if (
            not isinstance(value, list)
            or not value
            or not all(isinstance(v, int) and not isinstance(v, bool) for v in value)
        ):
            raise ConfigError(f"{key}: expected a nonempty list of integers")
        if any(v <= 0 for v in value):
            raise ConfigError(f"{key}: sample sizes must be positive")
        if any(b <= a for a, b in zip(value, value[1:])):
            raise ConfigError(f"{key}: must be strictly increasing, got {value}")
        return list(value)
    if key == "truth.coefficients":
        if not isinstance(value, list) or not value:
            raise ConfigError(f"{key}: expected a nonempty list of numbers")
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected a nonempty list of numbers")
    if key == "prior.sigma.params":
        if not isinstance(value, list) or len(value) != 2:
            raise ConfigError(f"{key}: expected [param1, param2]")
        try:
            return [float(v) for v in value]
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: expected numeric parameters")
    if key == "out_dir":
        if not isinstance(value, str) or not value:
            raise ConfigError(f"{key}: expected a nonempty string")
        return value
    return value


def resolve_config(user: dict[str, Any]) -> ScenarioConfig:
    """Merge user keys over scenario defaults; reject unknown keys.

    The scenario named by the user (default well_specified_normal) selects
    the default block; user keys then override.  Every key is validated and
    errors carry the dotted key path.
    """
    flat = _flatten(user)
    unknown = sorted(set(flat) - _VALID_KEYS)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")

    scenario = flat.get("scenario", "well_specified_normal")
    if scenario not in SCENARIOS:
        raise ConfigError(f"scenario: {scenario!r} is not one of {list(SCENARIOS)}")

    resolved = dict(_BASE_DEFAULTS)
    resolved.update(_SCENARIO_OVERRIDES[scenario])
    for key, value in flat.items():
        resolved[key] = _validate_value(key, value)

    if resolved["chain.burnin"] < 0:
        raise ConfigError("chain.burnin: must be nonnegative")
    if resolved["scenario"] == "cross_family_misspec" and (
        resolved["family"] == resolved["truth.noise"]
    ):
        raise ConfigError(
            "family: cross_family_misspec requires the postulated family to "
            "differ from truth.noise"
        )
    if resolved["prior.basis"] == "rff" and resolved["prior.kernel"] != "squared_exponential":
        raise ConfigError(
            "prior.basis: random Fourier features require the "
            "squared_exponential kernel"
        )
    if not 0.0 <= resolved["predictive.x_new"] <= 1.0:
        raise ConfigError("predictive.x_new: must lie in the unit interval")
    return ScenarioConfig(resolved, tuple(sorted(flat)))


def load_config(
    path: str | None, overrides: dict[str, Any] | None = None
) -> ScenarioConfig:
    """Load and resolve a TOML config file; None or empty file means defaults.

    ``overrides`` (dotted or nested keys) sit on top of the file the same way
    the file sits on top of the scenario defaults; they count as user keys.
    """
    if path is None:
        tree: dict[str, Any] = {}
    else:
        try:
            with open(path, "rb") as fh:
                tree = tomllib.load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"config file is not valid TOML: {exc}")
    flat = _flatten(tree)
    if overrides:
        flat.update(_flatten(overrides))
    return resolve_config(flat)


def config_hash(config: ScenarioConfig) -> str:
    """Hash of the semantically meaningful resolved values.

    The output directory and worker count affect where and how fast results
    are produced, not what they are, so they are excluded.
    """
    payload = {
        k: v for k, v in config.values.items() if k not in ("out_dir", "workers")
    }
    canon = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canon.encode("utf-8")).hexdigest()
