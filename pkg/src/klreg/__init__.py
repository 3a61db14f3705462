"""Divergence-rate diagnostics for Bayesian regression under misspecification.

The package measures how fast a postulated regression model (regression
function plus noise family) loses or accumulates posterior mass relative to
the data-generating truth.  The KL-divergence rate of a candidate against
the truth is the organizing quantity: closed forms for Normal and Laplace
errors, a quadrature engine for general symmetric shapes and cross-family
comparisons, equipartition traces that check the rate against realized
log-likelihood ratios, exact discrete posteriors and MCMC fits whose
concentration the rate predicts, and sieve mass bounds for the prior.

Typical entry points:

    >>> import klreg
    >>> dom = klreg.unit_interval()
    >>> q = klreg.uniform_measure(dom)
    >>> truth = klreg.TrueModel(
    ...     klreg.ClosedForm(dom, "constant", {"value": 0.0}),
    ...     klreg.normal_noise(1.0),
    ... )
    >>> theta = klreg.Theta(truth.eta0, 2.0)
    >>> round(klreg.kl_rate(theta, "normal", truth, q).rate, 6)
    0.318147

The command-line tool ``klreg`` runs packaged scenarios end to end; see
:mod:`klreg.scenarios` and :mod:`klreg.cli`.
"""

from .config import SCENARIOS, ScenarioConfig, config_hash, load_config, resolve_config
from .domain import (
    CompactDomain,
    CovariateDesign,
    MeasureQ,
    design_to_csv,
    empirical_q_average,
    grid_density_measure,
    make_design,
    q_expectation,
    uniform_measure,
    unit_interval,
)
from .equipartition import (
    Dataset,
    EquipartitionTrace,
    equipartition_trace,
    log_ratio,
    log_ratio_increments,
    simulate,
    uniform_gap,
)
from .errors import (
    AccuracyError,
    ConfigError,
    DivergentIntegralError,
    DomainMismatchError,
    EvaluationError,
    GridTooNarrowError,
    IllConditionedKernelError,
    InvalidArgumentError,
    KlregError,
    NotDifferentiableError,
    SamplerFailureError,
    UnsupportedCombinationError,
)
from .functions import (
    BasisExpansion,
    ClosedForm,
    CosineBasis,
    FourierFeatureBasis,
    GridFunction,
    RegressionFunction,
    SupNormReport,
    function_from_dict,
    function_from_json,
    function_to_json,
    l2q_distance_sq,
    partial_derivative,
    sup_norm,
)
from .gp import (
    GpSpec,
    SigmaPrior,
    coefficient_basis,
    coefficient_prior_scales,
    sample_coefficient_path,
    sample_path_on_grid,
    sample_path_values,
    sieve_band,
    sigma_prior_band_mass,
    sigma_prior_logpdf,
    sigma_prior_sample,
)
from .kl_rate import (
    KLRateReport,
    MinRateReport,
    RateEvaluator,
    Theta,
    TrueModel,
    expected_log_phi,
    in_concentration_set,
    kl_rate,
    kl_rate_cross_family,
    kl_rate_general,
    kl_rate_laplace,
    kl_rate_normal,
    min_rate_search,
    profile_sigma,
)
from .noise import (
    IntegrabilityReport,
    MgfCheckReport,
    NoiseModel,
    log_density_integrability_check,
    abs_z_moment,
    general_noise,
    laplace_abs_moment,
    laplace_noise,
    log_density,
    mean_log_phi_shifted,
    normal_noise,
    phi_entropy_constant,
    sample,
    subexponential_mgf_check,
)
from .posterior import (
    ChainConfig,
    DiscretePosterior,
    DiscreteThetaSpace,
    PosteriorSamples,
    PredictiveDensity,
    PredictiveReport,
    RateDiagnostic,
    discrete_posterior,
    discrete_set_mass,
    effective_sample_size,
    mcmc_posterior,
    mcmc_set_mass,
    posterior_predictive_density,
    posterior_rate_diagnostic,
    predictive_distance,
)
from .scenarios import (
    STAGE_NAMES,
    ScenarioContext,
    build_context,
    run_scenario,
)
from .sieve import (
    MembershipReport,
    SieveMassReport,
    SieveSpec,
    prior_sieve_complement_mass,
    sieve_member,
    sieve_thresholds,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # errors
    "KlregError",
    "InvalidArgumentError",
    "UnsupportedCombinationError",
    "DomainMismatchError",
    "EvaluationError",
    "NotDifferentiableError",
    "IllConditionedKernelError",
    "AccuracyError",
    "DivergentIntegralError",
    "GridTooNarrowError",
    "SamplerFailureError",
    "ConfigError",
    # domain
    "CompactDomain",
    "MeasureQ",
    "CovariateDesign",
    "unit_interval",
    "uniform_measure",
    "grid_density_measure",
    "q_expectation",
    "make_design",
    "empirical_q_average",
    "design_to_csv",
    # functions
    "RegressionFunction",
    "CosineBasis",
    "FourierFeatureBasis",
    "BasisExpansion",
    "GridFunction",
    "ClosedForm",
    "SupNormReport",
    "sup_norm",
    "partial_derivative",
    "l2q_distance_sq",
    "function_to_json",
    "function_from_json",
    "function_from_dict",
    # noise
    "NoiseModel",
    "normal_noise",
    "laplace_noise",
    "general_noise",
    "log_density",
    "sample",
    "laplace_abs_moment",
    "phi_entropy_constant",
    "abs_z_moment",
    "mean_log_phi_shifted",
    "MgfCheckReport",
    "subexponential_mgf_check",
    "IntegrabilityReport",
    "log_density_integrability_check",
    # gp
    "GpSpec",
    "SigmaPrior",
    "sample_path_values",
    "sample_path_on_grid",
    "coefficient_basis",
    "coefficient_prior_scales",
    "sample_coefficient_path",
    "sigma_prior_sample",
    "sigma_prior_logpdf",
    "sieve_band",
    "sigma_prior_band_mass",
    # kl_rate
    "Theta",
    "TrueModel",
    "KLRateReport",
    "MinRateReport",
    "kl_rate",
    "kl_rate_normal",
    "kl_rate_laplace",
    "kl_rate_general",
    "kl_rate_cross_family",
    "expected_log_phi",
    "profile_sigma",
    "min_rate_search",
    "in_concentration_set",
    "RateEvaluator",
    # equipartition
    "Dataset",
    "EquipartitionTrace",
    "simulate",
    "log_ratio",
    "log_ratio_increments",
    "equipartition_trace",
    "uniform_gap",
    # posterior
    "DiscreteThetaSpace",
    "DiscretePosterior",
    "RateDiagnostic",
    "ChainConfig",
    "PosteriorSamples",
    "PredictiveDensity",
    "PredictiveReport",
    "discrete_posterior",
    "posterior_rate_diagnostic",
    "mcmc_posterior",
    "discrete_set_mass",
    "mcmc_set_mass",
    "posterior_predictive_density",
    "predictive_distance",
    "effective_sample_size",
    # sieve
    "SieveSpec",
    "MembershipReport",
    "SieveMassReport",
    "sieve_thresholds",
    "sieve_member",
    "prior_sieve_complement_mass",
    # config / scenarios
    "ScenarioConfig",
    "SCENARIOS",
    "load_config",
    "resolve_config",
    "config_hash",
    "ScenarioContext",
    "STAGE_NAMES",
    "build_context",
    "run_scenario",
]
