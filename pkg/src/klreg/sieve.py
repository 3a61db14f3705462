"""Growing model-class sieves and their prior complement mass.

The sieve at sample size n keeps candidates whose regression function and
its first partials stay below T(n) = exp((beta n)^(1/4)) in sup norm and
whose scale lies in [1/T(n), T(n)].  Thresholds grow with n, so the sieves
are nested; the prior mass escaping the sieve is estimated by Monte Carlo
over (coefficient path, scale) draws using certified sup-norm bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import InvalidArgumentError, NotDifferentiableError
from .functions import (
    BasisExpansion,
    FourierFeatureBasis,
    RegressionFunction,
    partial_derivative,
    sup_norm,
)
from .gp import (
    GpSpec,
    SigmaPrior,
    coefficient_basis,
    coefficient_prior_scales,
    sieve_band,
    sigma_prior_sample,
)
from .kl_rate import Theta

__all__ = [
    "SieveSpec",
    "sieve_thresholds",
    "CheckRecord",
    "MembershipReport",
    "sieve_member",
    "SieveMassReport",
    "prior_sieve_complement_mass",
]


@dataclass(frozen=True)
class SieveSpec:
    """Thresholds defining the sieve at one (beta, n)."""

    beta: float
    n: int
    threshold: float
    sigma_lo: float
    sigma_hi: float


def sieve_thresholds(beta: float, n: int) -> SieveSpec:
    """T(n) = exp((beta n)^(1/4)) and the scale band [1/T, T]."""
    if beta <= 0 or n <= 0:
        raise InvalidArgumentError("beta and n must be positive")
    lo, hi = sieve_band(beta, n)
    return SieveSpec(beta, n, hi, lo, hi)


@dataclass(frozen=True)
class CheckRecord:
    """One membership check: the value used, its bound, and how it was got.

    ``passed`` is None when the check could not be evaluated (for example a
    sup-norm of a derivative that does not exist).
    """

    name: str
    value: float | None
    bound: float
    method: str
    passed: bool | None


@dataclass(frozen=True)
class MembershipReport:
    """Sieve membership with per-check evidence.

    ``member`` is False as soon as any check definitely fails, True when all
    checks definitely pass, and None (indeterminate) when no check fails but
    at least one could not be evaluated.
    """

    member: bool | None
    checks: tuple[CheckRecord, ...]


def _norm_check(f: RegressionFunction, name: str, bound: float) -> CheckRecord:
    report = sup_norm(f)
    if report.certified_upper is not None:
        return CheckRecord(
            name,
            report.certified_upper,
            bound,
            "certified-bound" if report.method.startswith("dense") else "analytic",
            report.certified_upper <= bound,
        )
    return CheckRecord(
        name,
        report.value,
        bound,
        report.method + " (approximate lower bound)",
        report.value <= bound,
    )


def sieve_member(theta: Theta, spec: SieveSpec) -> MembershipReport:
    """Check theta against the sieve thresholds, with evidence.

    Sup norms use certified upper bounds where the representation provides
    one (so membership is conservative); non-differentiable regression
    functions make the derivative checks indeterminate rather than failing.
    """
    checks: list[CheckRecord] = [
        _norm_check(theta.eta, "eta_sup_norm", spec.threshold)
    ]
    for axis in range(theta.eta.domain.dim):
        try:
            deriv = partial_derivative(theta.eta, axis)
        except NotDifferentiableError as exc:
            checks.append(
                CheckRecord(
                    f"eta_partial_{axis}_sup_norm",
                    None,
                    spec.threshold,
                    f"unavailable ({exc})",
                    None,
                )
            )
            continue
        checks.append(
            _norm_check(deriv, f"eta_partial_{axis}_sup_norm", spec.threshold)
        )
    in_band = spec.sigma_lo <= theta.sigma <= spec.sigma_hi
    checks.append(
        CheckRecord(
            "sigma_band", theta.sigma, spec.sigma_hi, "exact", bool(in_band)
        )
    )

    if any(record.passed is False for record in checks):
        member: bool | None = False
    elif any(record.passed is None for record in checks):
        member = None
    else:
        member = True
    return MembershipReport(member, tuple(checks))


@dataclass(frozen=True)
class SieveMassReport:
    """Monte Carlo estimate of the prior mass outside the sieve.

    ``component_fractions`` reports each check's failure rate separately
    (draws can fail several checks at once, so they need not sum to the
    estimate).  When no draw fails, ``upper_95`` is the standard one-sided
    3/draws bound.
    """

    spec: SieveSpec
    draws: int
    estimate: float
    std_error: float
    upper_95: float
    component_fractions: dict[str, float]


def prior_sieve_complement_mass(
    gp_spec: GpSpec,
    k: int,
    sigma_prior: SigmaPrior,
    beta: float,
    n: int,
    draws: int = 10_000,
    seed: int = 0,
    feature_seed: int = 0,
    basis_kind: str = "rff",
) -> SieveMassReport:
    """Monte Carlo prior mass of the sieve complement at (beta, n).

    Paths are coefficient draws on a fixed feature set; their sup norms and
    derivative sup norms use the certified coefficient bounds, so the
    estimate is conservative (an upper bound in distribution) by the same
    convention as :func:`sieve_member`.
    """
    if draws <= 0:
        raise InvalidArgumentError("draws must be positive")
    spec = sieve_thresholds(beta, n)
    basis = coefficient_basis(gp_spec, k, feature_seed, basis_kind)
    scales = coefficient_prior_scales(gp_spec, basis)
    rng = np.random.default_rng(seed)
    coeffs = np.abs(scales * rng.standard_normal((draws, basis.size)))

    sup_bounds = coeffs @ basis.feature_sup_norms()
    fail_eta = sup_bounds > spec.threshold
    fail_any = fail_eta.copy()
    fractions = {"eta_sup_norm": float(np.mean(fail_eta))}
    for axis in range(gp_spec.domain.dim):
        deriv_bounds = coeffs @ basis.feature_derivative_sup_norms(axis)
        fail_axis = deriv_bounds > spec.threshold
        fractions[f"eta_partial_{axis}_sup_norm"] = float(np.mean(fail_axis))
        fail_any |= fail_axis

    sigmas = sigma_prior_sample(sigma_prior, rng, draws)
    fail_sigma = (sigmas < spec.sigma_lo) | (sigmas > spec.sigma_hi)
    fractions["sigma_band"] = float(np.mean(fail_sigma))
    fail_any |= fail_sigma

    p = float(np.mean(fail_any))
    se = math.sqrt(max(p * (1.0 - p), 1e-300) / draws)
    upper = p if p > 0 else 3.0 / draws
    return SieveMassReport(spec, draws, p, se, upper, fractions)
