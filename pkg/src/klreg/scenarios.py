"""Named experiment scenarios and the stage runners that produce artifacts.

A scenario bundles a data-generating truth, a postulated family, and a prior
into five runnable stages:

    equipartition   per-observation log-likelihood-ratio traces against the
                    divergence-rate target, for the rate minimizer and an
                    inflated-scale probe, on shared replicate datasets.
    klrate          a scale sweep of the divergence rate around the profile
                    optimum, plus the span minimum itself.
    posterior       an exact three-atom posterior surrogate tracing how mass
                    leaves the non-optimal atoms, with fitted decay slopes.
    predictive      full MCMC fits per (sample size, replicate): posterior
                    mass of the epsilon-neighbourhood of the rate minimum
                    and predictive Hellinger/TV distances at one new point.
    sieve           Monte Carlo prior mass outside the growing sieve.

Every stage derives its randomness from the scenario seed through a
dedicated stage stream, writes CSV floats with repr-faithful precision, and
reports its artifacts for the run manifest, so a rerun with the same
configuration reproduces every CSV byte for byte.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .config import ScenarioConfig, config_hash
from .domain import CompactDomain, MeasureQ, make_design, unit_interval, uniform_measure
from .equipartition import equipartition_trace, simulate
from .errors import ConfigError
from .functions import ClosedForm, CosineBasis, FunctionBasis, RegressionFunction
from .gp import (
    GpSpec,
    SigmaPrior,
    coefficient_basis,
    coefficient_prior_scales,
    sigma_prior_band_mass,
)
from .kl_rate import (
    MinRateReport,
    RateEvaluator,
    Theta,
    TrueModel,
    kl_rate,
    min_rate_search,
)
from .noise import laplace_noise, normal_noise
from .posterior import (
    ChainConfig,
    DiscreteThetaSpace,
    discrete_posterior,
    effective_sample_size,
    mcmc_posterior,
    posterior_predictive_density,
    posterior_rate_diagnostic,
    predictive_distance,
)
from .sieve import prior_sieve_complement_mass

__all__ = [
    "ScenarioContext",
    "build_context",
    "run_equipartition_stage",
    "run_klrate_stage",
    "run_posterior_stage",
    "run_predictive_stage",
    "run_sieve_stage",
    "run_scenario",
    "STAGE_NAMES",
]

STAGE_NAMES = ("equipartition", "klrate", "posterior", "predictive", "sieve")

_STAGE_IDS = {name: i + 1 for i, name in enumerate(STAGE_NAMES)}


@dataclass(frozen=True)
class ScenarioContext:
    """Materialized objects shared by the stages of one scenario run."""

    config: ScenarioConfig
    domain: CompactDomain
    q: MeasureQ
    truth: TrueModel
    family: str
    basis: FunctionBasis
    gp_spec: GpSpec
    coefficient_scales: np.ndarray
    sigma_prior: SigmaPrior
    min_rate: MinRateReport


def _truth_function(config: ScenarioConfig, domain: CompactDomain) -> RegressionFunction:
    form = config["truth.form"]
    if form == "cosine":
        coeffs = np.asarray(config["truth.coefficients"], dtype=float).reshape(-1)
        basis = CosineBasis.first_k(domain, coeffs.shape[0])
        return basis.function_from_coefficients(coeffs)
    if form == "step":
        base = float(config["truth.base"])
        return ClosedForm(
            domain,
            "step",
            {
                "breakpoints": [float(config["truth.break_at"])],
                "levels": [base, base + float(config["truth.jump"])],
            },
        )
    if form == "sinusoid":
        return ClosedForm(
            domain,
            "sinusoid",
            {
                "amplitude": float(config["truth.amplitude"]),
                "frequency": float(config["truth.frequency"]),
            },
        )
    if form == "constant":
        return ClosedForm(domain, "constant", {"value": float(config["truth.value"])})
    raise ConfigError(f"unknown truth form {form!r}")


def build_context(config: ScenarioConfig) -> ScenarioContext:
    """Materialize the truth, prior, and rate minimum for a configuration."""
    domain = unit_interval()
    q = uniform_measure(domain)
    eta0 = _truth_function(config, domain)
    sigma0 = float(config["truth.sigma0"])
    noise = (
        normal_noise(sigma0)
        if config["truth.noise"] == "normal"
        else laplace_noise(sigma0)
    )
    truth = TrueModel(eta0, noise)
    gp_spec = GpSpec(
        domain,
        kernel=config["prior.kernel"],
        amplitude=float(config["prior.amplitude"]),
        lengthscale=float(config["prior.lengthscale"]),
    )
    basis = coefficient_basis(
        gp_spec,
        int(config["prior.k"]),
        feature_seed=int(config["prior.feature_seed"]),
        basis_kind=config["prior.basis"],
    )
    scales = coefficient_prior_scales(gp_spec, basis)
    sigma_prior = SigmaPrior(
        config["prior.sigma.kind"], tuple(float(v) for v in config["prior.sigma.params"])
    )
    min_rate = min_rate_search(config["family"], basis, truth, q)
    return ScenarioContext(
        config=config,
        domain=domain,
        q=q,
        truth=truth,
        family=config["family"],
        basis=basis,
        gp_spec=gp_spec,
        coefficient_scales=scales,
        sigma_prior=sigma_prior,
        min_rate=min_rate,
    )


def _stage_seed(base_seed: int, stage: str, *extra: int) -> int:
    """A decoupled integer seed for one stage (and optional substream)."""
    ss = np.random.SeedSequence((int(base_seed), _STAGE_IDS[stage], *map(int, extra)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _fmt(value: object) -> object:
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (int, np.integer)):
        return int(value)
    return value


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence[object]]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _jsonable(value: object) -> object:
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return [_jsonable(v) for v in value.tolist()]
    if isinstance(value, (np.bool_, bool)):
        return bool(value)
    if isinstance(value, (np.floating, float)):
        return float(value)
    if isinstance(value, (np.integer, int)):
        return int(value)
    return value


def _write_json(path: Path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def run_equipartition_stage(ctx: ScenarioContext, out_dir: Path) -> dict:
    """Gap traces for the rate minimizer and an inflated-scale probe.

    Both probes score the SAME replicate datasets (shared stage seed), so
    their gap columns are directly comparable row by row.
    """
    config = ctx.config
    seed = _stage_seed(config["seed"], "equipartition")
    theta_star = ctx.min_rate.theta_star
    probes = [
        ("rate_minimizer", theta_star, ctx.min_rate.rate),
        ("inflated_scale", Theta(theta_star.eta, 2.0 * theta_star.sigma), None),
    ]
    rows: list[tuple] = []
    probe_rates: dict[str, float] = {}
    for label, theta, known_rate in probes:
        trace = equipartition_trace(
            theta,
            ctx.family,
            ctx.truth,
            ctx.q,
            config["n_schedule"],
            config["replicates"],
            seed,
            rate=known_rate,
        )
        probe_rates[label] = trace.rate
        for i in range(trace.n.shape[0]):
            rows.append(
                (
                    label,
                    trace.family,
                    trace.n[i],
                    trace.replicate[i],
                    trace.statistic[i],
                    trace.target[i],
                    trace.gap[i],
                )
            )
    _write_csv(
        out_dir / "equipartition.csv",
        ["probe", "family", "n", "replicate", "statistic", "target", "gap"],
        rows,
    )
    max_n = max(config["n_schedule"])
    worst_gap = max(
        abs(r[6]) for r in rows if r[2] == max_n
    )
    return {
        "artifacts": ["equipartition.csv"],
        "probe_rates": probe_rates,
        "max_abs_gap_at_largest_n": worst_gap,
    }


def run_klrate_stage(ctx: ScenarioContext, out_dir: Path) -> dict:
    """Scale sweep of the rate around the profile optimum, plus the minimum."""
    sigma_star = ctx.min_rate.sigma_star
    sigmas = np.geomspace(sigma_star / 4.0, 4.0 * sigma_star, 17)
    candidates = [
        ("minimizer", ctx.min_rate.theta_star.eta),
        ("prior_mean", ctx.basis.function_from_coefficients(np.zeros(ctx.basis.size))),
    ]
    rows: list[tuple] = []
    for label, eta in candidates:
        for sigma in sigmas:
            report = kl_rate(
                Theta(eta, float(sigma)),
                ctx.family,
                ctx.truth,
                ctx.q,
                min_rate=ctx.min_rate.rate,
            )
            rows.append(
                (
                    label,
                    sigma,
                    report.rate,
                    report.excess,
                    report.error_estimate,
                    report.method,
                )
            )
    _write_csv(
        out_dir / "h_grid.csv",
        ["eta", "sigma", "rate", "excess", "error_estimate", "method"],
        rows,
    )
    summary = {
        "rate": ctx.min_rate.rate,
        "sigma_star": ctx.min_rate.sigma_star,
        "coefficients": ctx.min_rate.coefficients,
        "projection_residual_sq": ctx.min_rate.projection_residual_sq,
        "converged": ctx.min_rate.converged,
        "method": ctx.min_rate.method,
    }
    _write_json(out_dir / "h_inf.json", summary)
    return {
        "artifacts": ["h_grid.csv", "h_inf.json"],
        "min_rate": ctx.min_rate.rate,
        "sigma_star": ctx.min_rate.sigma_star,
    }


def _surrogate_space(ctx: ScenarioContext) -> DiscreteThetaSpace:
    """Three atoms: the minimizer, a scale-inflated and a mean-shifted rival."""
    theta_star = ctx.min_rate.theta_star
    shifted = np.array(ctx.min_rate.coefficients, dtype=float, copy=True)
    shifted[0] += 0.75
    atoms = (
        theta_star,
        Theta(theta_star.eta, 1.5 * theta_star.sigma),
        Theta(ctx.basis.function_from_coefficients(shifted), theta_star.sigma),
    )
    labels = ("minimizer", "inflated_scale", "shifted_mean")
    rates = np.array(
        [ctx.min_rate.rate]
        + [kl_rate(atom, ctx.family, ctx.truth, ctx.q).rate for atom in atoms[1:]]
    )
    return DiscreteThetaSpace(atoms, np.full(3, 1.0 / 3.0), rates=rates, labels=labels)


def run_posterior_stage(ctx: ScenarioContext, out_dir: Path) -> dict:
    """Exact discrete posterior over the three-atom surrogate, replicated.

    The CSV records every atom weight along the prefix schedule; the summary
    compares the fitted decay slope of the worst atom's mass with the rate
    excess that predicts it.
    """
    config = ctx.config
    space = _surrogate_space(ctx)
    n_grid = sorted(set(int(n) for n in config["posterior.n_schedule"]))
    n_max = n_grid[-1]
    worst = int(np.argmax(space.rates))
    rows: list[tuple] = []
    slopes: list[float] = []
    expected_excess = None
    for rep in range(int(config["replicates"])):
        design = make_design(
            ctx.q, "iid", n_max, seed=_stage_seed(config["seed"], "posterior", rep, 0)
        )
        dataset = simulate(
            ctx.truth, design, _stage_seed(config["seed"], "posterior", rep, 1)
        )
        post = discrete_posterior(space, dataset, ctx.family, n_grid)
        for i, n in enumerate(post.n_values):
            for j, label in enumerate(space.labels):
                rows.append((rep, int(n), label, space.rates[j], post.weights[i, j]))
        diag = posterior_rate_diagnostic(space, dataset, ctx.family, [worst], n_grid)
        slopes.append(diag.slope)
        expected_excess = diag.expected_excess
    _write_csv(
        out_dir / "rate_diagnostic.csv",
        ["replicate", "n", "atom", "rate", "posterior_weight"],
        rows,
    )
    slope_arr = np.array(slopes)
    summary = {
        "atoms": [
            {"label": label, "rate": rate, "sigma": atom.sigma}
            for label, rate, atom in zip(space.labels, space.rates, space.atoms)
        ],
        "worst_atom": space.labels[worst],
        "expected_excess": expected_excess,
        "slope_mean": float(slope_arr.mean()),
        "slope_sd": float(slope_arr.std(ddof=1)) if slope_arr.shape[0] > 1 else 0.0,
        "slopes": slopes,
        "replicates": int(config["replicates"]),
        "n_grid": n_grid,
    }
    _write_json(out_dir / "posterior_summary.json", summary)
    return {
        "artifacts": ["rate_diagnostic.csv", "posterior_summary.json"],
        "slope_mean": summary["slope_mean"],
        "expected_excess": expected_excess,
    }


def _resolve_workers(config: ScenarioConfig) -> int:
    env = os.environ.get("KLREG_WORKERS", "").strip()
    if env:
        try:
            return max(1, int(env))
        except ValueError as exc:
            raise ConfigError(f"KLREG_WORKERS must be an integer, got {env!r}") from exc
    configured = int(config["workers"])
    return max(1, configured)


def run_predictive_stage(ctx: ScenarioContext, out_dir: Path) -> dict:
    """MCMC fits per (n, replicate): concentration mass and predictive error.

    For each dataset one chain is run; its draws are scored once by the
    vectorized rate evaluator for the epsilon-neighbourhood mass (epsilon =
    scale / sqrt(n)) and once through the predictive density at x_new for
    Hellinger and total-variation distances against the true density.
    Independent tasks may run on a thread pool; rows are always aggregated
    in (n, replicate) order, so the worker count never changes the output.
    """
    config = ctx.config
    chain = ChainConfig(
        length=int(config["chain.length"]),
        burnin=int(config["chain.burnin"]),
        thin=int(config["chain.thin"]),
    )
    evaluator = RateEvaluator(ctx.family, ctx.basis, ctx.truth, ctx.q)
    h_min = ctx.min_rate.rate
    eps_scale = float(config["concentration.epsilon_scale"])
    x_new = np.array([[float(config["predictive.x_new"])]])
    n_schedule = sorted(set(int(n) for n in config["posterior.n_schedule"]))
    replicates = int(config["replicates"])
    tasks = [(n, rep) for n in n_schedule for rep in range(replicates)]

    def one_task(n: int, rep: int) -> dict:
        design = make_design(
            ctx.q, "iid", n, seed=_stage_seed(config["seed"], "predictive", n, rep, 0)
        )
        dataset = simulate(
            ctx.truth, design, _stage_seed(config["seed"], "predictive", n, rep, 1)
        )
        samples = mcmc_posterior(
            dataset,
            ctx.family,
            ctx.basis,
            ctx.coefficient_scales,
            ctx.sigma_prior,
            chain,
            _stage_seed(config["seed"], "predictive", n, rep, 2),
        )
        rates = evaluator.rates(samples.coefficients, samples.sigmas)
        epsilon = eps_scale / math.sqrt(n)
        inside = rates <= h_min + epsilon
        mass = float(np.mean(inside))
        se = math.sqrt(max(mass * (1.0 - mass), 1e-300) / samples.draws)
        predictive = posterior_predictive_density(samples, x_new, ctx.family)
        report = predictive_distance(ctx.truth, predictive, n=n)
        return {
            "n": n,
            "rep": rep,
            "epsilon": epsilon,
            "mass": mass,
            "mass_se": se,
            "hellinger_sq": report.hellinger_sq,
            "tv": report.tv,
            "quadrature_error": report.quadrature_error,
            "acceptance_rate": samples.acceptance_rate,
            "ess_sigma": effective_sample_size(samples.sigmas),
            "draws": samples.draws,
            "warnings": list(samples.warnings),
        }

    workers = _resolve_workers(config)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(lambda t: one_task(*t), tasks))
    else:
        results = [one_task(*t) for t in tasks]
    results.sort(key=lambda r: (r["n"], r["rep"]))

    _write_csv(
        out_dir / "neps_mass.csv",
        ["n", "replicate", "epsilon", "mass", "std_error", "draws"],
        [
            (r["n"], r["rep"], r["epsilon"], r["mass"], r["mass_se"], r["draws"])
            for r in results
        ],
    )
    _write_csv(
        out_dir / "predictive.csv",
        [
            "n",
            "replicate",
            "x_new",
            "hellinger_sq",
            "tv",
            "quadrature_error",
            "acceptance_rate",
            "ess_sigma",
        ],
        [
            (
                r["n"],
                r["rep"],
                float(x_new[0, 0]),
                r["hellinger_sq"],
                r["tv"],
                r["quadrature_error"],
                r["acceptance_rate"],
                r["ess_sigma"],
            )
            for r in results
        ],
    )
    chain_warnings = {
        f"n={r['n']},rep={r['rep']}": r["warnings"] for r in results if r["warnings"]
    }
    median_mass = {
        n: float(np.median([r["mass"] for r in results if r["n"] == n]))
        for n in n_schedule
    }
    median_hellinger_sq = {
        n: float(np.median([r["hellinger_sq"] for r in results if r["n"] == n]))
        for n in n_schedule
    }
    info = {
        "artifacts": ["neps_mass.csv", "predictive.csv"],
        "median_mass_by_n": median_mass,
        "median_hellinger_sq_by_n": median_hellinger_sq,
        "workers": workers,
    }
    if chain_warnings:
        info["chain_warnings"] = chain_warnings
    return info


def run_sieve_stage(ctx: ScenarioContext, out_dir: Path) -> dict:
    """Prior mass outside the sieve along the growth schedule.

    All levels reuse one seed, so the level sets are evaluated on identical
    path draws and the estimated complements are exactly nonincreasing in n
    (the sieves are nested).
    """
    config = ctx.config
    beta = float(config["sieve.beta"])
    draws = int(config["sieve.draws"])
    seed = _stage_seed(config["seed"], "sieve")
    levels = []
    for n in sorted(set(int(n) for n in config["sieve.n_schedule"])):
        report = prior_sieve_complement_mass(
            ctx.gp_spec,
            int(config["prior.k"]),
            ctx.sigma_prior,
            beta,
            n,
            draws=draws,
            seed=seed,
            feature_seed=int(config["prior.feature_seed"]),
            basis_kind=config["prior.basis"],
        )
        band_mass, _ = sigma_prior_band_mass(ctx.sigma_prior, n, beta)
        levels.append(
            {
                "n": n,
                "threshold": report.spec.threshold,
                "sigma_lo": report.spec.sigma_lo,
                "sigma_hi": report.spec.sigma_hi,
                "complement_mass": report.estimate,
                "std_error": report.std_error,
                "upper_95": report.upper_95,
                "component_fractions": report.component_fractions,
                "sigma_band_mass_exact": band_mass,
            }
        )
    estimates = [lvl["complement_mass"] for lvl in levels]
    payload = {
        "beta": beta,
        "draws": draws,
        "levels": levels,
        "nested_monotone": bool(
            all(b <= a + 1e-15 for a, b in zip(estimates, estimates[1:]))
        ),
    }
    _write_json(out_dir / "sieve.json", payload)
    return {
        "artifacts": ["sieve.json"],
        "complement_masses": estimates,
        "nested_monotone": payload["nested_monotone"],
    }


_STAGE_RUNNERS: dict[str, Callable[[ScenarioContext, Path], dict]] = {
    "equipartition": run_equipartition_stage,
    "klrate": run_klrate_stage,
    "posterior": run_posterior_stage,
    "predictive": run_predictive_stage,
    "sieve": run_sieve_stage,
}


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("klreg")
    except Exception:  # pragma: no cover - metadata missing in odd installs
        return "unknown"


def run_scenario(
    config: ScenarioConfig,
    out_dir: str | Path | None = None,
    stages: Sequence[str] | None = None,
) -> dict:
    """Run the requested stages and write artifacts plus a manifest.

    Returns the manifest dictionary.  All CSV artifacts are byte-identical
    across reruns of the same configuration; the manifest also records wall
    times, which naturally vary.
    """
    selected = list(stages) if stages is not None else list(STAGE_NAMES)
    unknown = [s for s in selected if s not in _STAGE_RUNNERS]
    if unknown:
        raise ConfigError(f"unknown stages: {', '.join(sorted(unknown))}")
    out = Path(out_dir) if out_dir is not None else Path(config["out_dir"])
    out.mkdir(parents=True, exist_ok=True)

    ctx = build_context(config)
    manifest: dict = {
        "scenario": config["scenario"],
        "config_hash": config_hash(config),
        "package_version": _package_version(),
        "created_utc": _dt.datetime.now(_dt.timezone.utc).isoformat(),
        "seed": int(config["seed"]),
        "resolved_config": {k: config.values[k] for k in sorted(config.values)},
        "overridden_keys": sorted(config.user_keys),
        "min_rate": {
            "rate": ctx.min_rate.rate,
            "sigma_star": ctx.min_rate.sigma_star,
            "method": ctx.min_rate.method,
        },
        "stages": {},
        "artifacts": [],
    }
    for name in selected:
        started = time.perf_counter()
        info = _STAGE_RUNNERS[name](ctx, out)
        info = dict(info)
        info["seconds"] = round(time.perf_counter() - started, 3)
        manifest["stages"][name] = info
        manifest["artifacts"].extend(info["artifacts"])
    manifest["artifacts"].append("manifest.json")
    _write_json(out / "manifest.json", manifest)
    return manifest
