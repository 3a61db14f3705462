"""Posterior computations: discrete surrogates, random-walk MCMC, predictives.

Two complementary posterior engines:

* :func:`discrete_posterior` -- exact log-space enumeration over a finite
  atom set, the reference implementation for rate diagnostics (the posterior
  mass of a set decays like exp(-n J), J the excess rate over the best atom);
* :func:`mcmc_posterior` -- random-walk Metropolis over basis coefficients
  and log scale, with burn-in-only step adaptation.  Grid scale priors move
  the scale by uniform atom proposals instead, so discrete surrogates can be
  embedded exactly.

Posterior predictive densities are draw-averaged mixtures on an explicit
y-grid that must capture essentially all predictive mass; Hellinger and
total-variation distances to the true density are Simpson-rule integrals on
the same grid.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import simpson

from .equipartition import Dataset, log_ratio_increments
from .errors import (
    GridTooNarrowError,
    InvalidArgumentError,
    SamplerFailureError,
)
from .functions import FunctionBasis
from .gp import SigmaPrior, sigma_prior_logpdf, sigma_prior_sample
from .kl_rate import Theta, TrueModel
from .noise import NoiseModel, laplace_noise, log_density, normal_noise

__all__ = [
    "DiscreteThetaSpace",
    "DiscretePosterior",
    "discrete_posterior",
    "RateDiagnostic",
    "posterior_rate_diagnostic",
    "ChainConfig",
    "PosteriorSamples",
    "mcmc_posterior",
    "discrete_set_mass",
    "mcmc_set_mass",
    "PredictiveDensity",
    "posterior_predictive_density",
    "PredictiveReport",
    "predictive_distance",
    "effective_sample_size",
]


@dataclass(frozen=True)
class DiscreteThetaSpace:
    """A finite candidate set with prior weights and (optional) rates."""

    atoms: tuple[Theta, ...]
    prior_weights: np.ndarray
    rates: np.ndarray | None = None
    labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        atoms = tuple(self.atoms)
        weights = np.asarray(self.prior_weights, dtype=float).reshape(-1)
        if len(atoms) == 0 or weights.shape[0] != len(atoms):
            raise InvalidArgumentError("need one prior weight per atom")
        if np.any(weights < 0) or not math.isclose(
            float(weights.sum()), 1.0, abs_tol=1e-9
        ):
            raise InvalidArgumentError("prior weights must be a distribution")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "prior_weights", weights)
        if self.rates is not None:
            rates = np.asarray(self.rates, dtype=float).reshape(-1)
            if rates.shape[0] != len(atoms):
                raise InvalidArgumentError("need one rate per atom")
            object.__setattr__(self, "rates", rates)

    @property
    def size(self) -> int:
        return len(self.atoms)


@dataclass(frozen=True)
class DiscretePosterior:
    """Posterior weights over the atoms at each requested prefix size."""

    space: DiscreteThetaSpace
    n_values: np.ndarray
    log_weights: np.ndarray  # shape (len(n_values), n_atoms), normalized
    weights: np.ndarray

    def weights_at(self, n: int) -> np.ndarray:
        idx = np.nonzero(self.n_values == n)[0]
        if idx.shape[0] == 0:
            raise InvalidArgumentError(f"prefix size {n} was not computed")
        return self.weights[idx[0]]


def _logsumexp(row: np.ndarray) -> float:
    m = float(np.max(row))
    if not math.isfinite(m):
        return m
    return m + math.log(float(np.sum(np.exp(row - m))))


def discrete_posterior(
    space: DiscreteThetaSpace,
    dataset: Dataset,
    family: str,
    n_values: Sequence[int] | None = None,
    postulated_phi: NoiseModel | None = None,
) -> DiscretePosterior:
    """Exact posterior over atoms for each prefix of the dataset.

    Weights are computed entirely in log space with max subtraction, so
    ratios survive arbitrarily small unnormalized masses.  n = 0 returns the
    prior.  Atom order is irrelevant: weights are permutation-consistent.
    """
    if n_values is None:
        n_values = [dataset.n]
    n_arr = np.array(sorted(set(int(v) for v in n_values)), dtype=int)
    if np.any(n_arr < 0) or np.any(n_arr > dataset.n):
        raise InvalidArgumentError("prefix sizes must lie in 0..n")

    increments = np.stack(
        [
            log_ratio_increments(dataset, atom, family, postulated_phi)
            for atom in space.atoms
        ],
        axis=1,
    )  # (n, n_atoms)
    cumulative = np.concatenate(
        [np.zeros((1, space.size)), np.cumsum(increments, axis=0)], axis=0
    )
    log_prior = np.log(space.prior_weights)

    log_w = np.empty((n_arr.shape[0], space.size))
    for i, n in enumerate(n_arr):
        row = log_prior + cumulative[n]
        log_w[i] = row - _logsumexp(row)
    return DiscretePosterior(space, n_arr, log_w, np.exp(log_w))


@dataclass(frozen=True)
class RateDiagnostic:
    """Decay diagnostics for the posterior mass of an atom subset.

    ``slope`` is the least-squares slope of log mass(A | first n) against n
    over the largest decade of the grid; it estimates -excess_rate(A).
    """

    n_grid: np.ndarray
    log_mass: np.ndarray
    normalized: np.ndarray  # (1/n) log mass
    slope: float
    expected_excess: float | None

    def to_csv(self, path: str, replicate: int = 0) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["n", "replicate", "log_mass", "normalized_log_mass"])
            for i in range(self.n_grid.shape[0]):
                writer.writerow(
                    [
                        int(self.n_grid[i]),
                        replicate,
                        f"{self.log_mass[i]:.17g}",
                        f"{self.normalized[i]:.17g}",
                    ]
                )


def posterior_rate_diagnostic(
    space: DiscreteThetaSpace,
    dataset: Dataset,
    family: str,
    subset: Sequence[int],
    n_grid: Sequence[int],
    postulated_phi: NoiseModel | None = None,
) -> RateDiagnostic:
    """Trace the posterior mass of ``subset`` (atom indices) along n.

    The fitted slope uses the grid points in [n_max/10, n_max]; with the
    rates attached to the space, ``expected_excess`` is
    min_{subset} rate - min_all rate, the predicted decay constant.
    """
    subset_idx = np.asarray(sorted(set(int(i) for i in subset)), dtype=int)
    if subset_idx.shape[0] == 0 or subset_idx.shape[0] >= space.size:
        raise InvalidArgumentError("subset must be a proper nonempty atom subset")
    if np.any(subset_idx < 0) or np.any(subset_idx >= space.size):
        raise InvalidArgumentError("subset indices out of range")
    post = discrete_posterior(space, dataset, family, n_grid, postulated_phi)
    n_arr = post.n_values.astype(float)
    log_mass = np.array(
        [_logsumexp(row[subset_idx]) for row in post.log_weights]
    )
    with np.errstate(divide="ignore", invalid="ignore"):
        normalized = np.where(n_arr > 0, log_mass / np.maximum(n_arr, 1), np.nan)

    n_max = float(np.max(n_arr))
    window = (n_arr >= n_max / 10.0) & np.isfinite(log_mass)
    if int(np.sum(window)) < 2:
        raise InvalidArgumentError(
            "need at least two finite grid points in the top decade to fit a slope"
        )
    slope = float(np.polyfit(n_arr[window], log_mass[window], 1)[0])

    expected = None
    if space.rates is not None:
        expected = float(
            np.min(space.rates[subset_idx]) - np.min(space.rates)
        )
    return RateDiagnostic(post.n_values, log_mass, normalized, slope, expected)


@dataclass(frozen=True)
class ChainConfig:
    """Random-walk Metropolis settings.

    ``length`` draws are kept after ``burnin`` adaptation steps; ``thin``
    keeps every thin-th post-burn-in state.  The proposal step is a single
    global multiplier on per-coordinate scales, adapted toward
    ``target_acceptance`` during burn-in only.
    """

    length: int = 4000
    burnin: int = 2000
    thin: int = 1
    initial_step: float = 0.25
    target_acceptance: float = 0.3
    adapt_interval: int = 50

    def __post_init__(self) -> None:
        if self.length <= 0 or self.burnin < 0 or self.thin <= 0:
            raise InvalidArgumentError("invalid chain dimensions")
        if not 0 < self.target_acceptance < 1:
            raise InvalidArgumentError("target acceptance must be in (0, 1)")


@dataclass(frozen=True)
class PosteriorSamples:
    """Post-burn-in MCMC draws and bookkeeping."""

    basis: FunctionBasis | None
    coefficients: np.ndarray  # (M, K); K may be zero
    sigmas: np.ndarray  # (M,)
    log_posts: np.ndarray
    acceptance_rate: float
    final_step: float
    n: int
    warnings: tuple[str, ...] = ()

    @property
    def draws(self) -> int:
        return self.sigmas.shape[0]

    def eta_values(self, x: np.ndarray) -> np.ndarray:
        """Regression values per draw at covariates x; shape (M, n_x)."""
        if self.basis is None or self.coefficients.shape[1] == 0:
            raise InvalidArgumentError("these samples carry no regression draws")
        return self.coefficients @ self.basis.design_matrix(x).T


def _family_log_density(
    family: str, postulated_phi: NoiseModel | None
) -> Callable[[np.ndarray, float], np.ndarray]:
    if family == "normal":
        base = normal_noise(1.0)
    elif family == "laplace":
        base = laplace_noise(1.0)
    elif family == "general":
        if postulated_phi is None:
            raise InvalidArgumentError("general family requires postulated_phi")
        base = postulated_phi
    else:
        raise InvalidArgumentError(f"unknown family {family!r}")

    def loglik_terms(residuals: np.ndarray, sigma: float) -> np.ndarray:
        return log_density(base.with_scale(sigma), residuals)

    return loglik_terms


def mcmc_posterior(
    dataset: Dataset,
    family: str,
    basis: FunctionBasis | None,
    coefficient_scales: np.ndarray | None,
    sigma_prior: SigmaPrior | None,
    chain: ChainConfig,
    seed: int,
    postulated_phi: NoiseModel | None = None,
    fix_sigma: float | None = None,
    fixed_eta_values: np.ndarray | None = None,
) -> PosteriorSamples:
    """Random-walk Metropolis over (coefficients, log sigma).

    The coefficient prior is independent N(0, scale_k^2) on the basis; the
    scale prior is any :class:`SigmaPrior`.  Grid scale priors are updated by
    uniform atom proposals (exact discrete embedding); continuous priors move
    log sigma jointly with the coefficients.  ``fix_sigma`` freezes the scale
    (for conjugate checks); ``fixed_eta_values`` freezes the regression part
    at precomputed design values (then basis/coefficients may be omitted).

    Raises SamplerFailureError when no proposal is ever accepted; a final
    acceptance rate outside [0.15, 0.5] is recorded as a warning, not an
    error.
    """
    rng = np.random.default_rng(seed)
    loglik_terms = _family_log_density(family, postulated_phi)
    y = dataset.y
    x = dataset.design.points

    if basis is not None:
        design = basis.design_matrix(x)
        k = basis.size
        scales = np.asarray(coefficient_scales, dtype=float).reshape(-1)
        if scales.shape[0] != k or np.any(scales <= 0):
            raise InvalidArgumentError("need one positive scale per coefficient")
    else:
        if fixed_eta_values is None:
            raise InvalidArgumentError("either a basis or fixed_eta_values required")
        design = None
        k = 0
        scales = np.zeros(0)
    eta_fixed = (
        np.asarray(fixed_eta_values, dtype=float).reshape(-1)
        if fixed_eta_values is not None
        else np.zeros(y.shape[0])
    )
    if eta_fixed.shape[0] != y.shape[0]:
        raise InvalidArgumentError("fixed_eta_values must match the dataset size")

    sample_sigma = fix_sigma is None
    if sample_sigma and sigma_prior is None:
        raise InvalidArgumentError("a sigma prior is required unless fix_sigma is set")
    grid_sigma = sample_sigma and sigma_prior.kind == "grid"
    if sample_sigma and not grid_sigma:
        if sigma_prior.kind == "lognormal":
            log_sigma_scale = sigma_prior.params[1]
        else:
            log_sigma_scale = 0.5
    else:
        log_sigma_scale = 0.0

    def log_post(w: np.ndarray, sigma: float) -> float:
        resid = y - eta_fixed if design is None else y - eta_fixed - design @ w
        value = float(np.sum(loglik_terms(resid, sigma)))
        if k:
            value += float(np.sum(-0.5 * (w / scales) ** 2 - np.log(scales)))
        if sample_sigma:
            value += sigma_prior_logpdf(sigma_prior, sigma)
            if not grid_sigma:
                value += math.log(sigma)  # jacobian of the log-sigma coordinate
        return value

    w = np.zeros(k)
    if sample_sigma:
        sigma = float(sigma_prior_sample(sigma_prior, rng, 1)[0])
    else:
        if fix_sigma <= 0:
            raise InvalidArgumentError("fix_sigma must be positive")
        sigma = float(fix_sigma)
    current = log_post(w, sigma)

    step = chain.initial_step
    total_steps = chain.burnin + chain.length * chain.thin
    kept_w = np.empty((chain.length, k))
    kept_sigma = np.empty(chain.length)
    kept_lp = np.empty(chain.length)
    accepted = 0
    proposals = 0
    window_accepted = 0
    kept = 0

    has_continuous_block = k > 0 or (sample_sigma and not grid_sigma)
    for it in range(total_steps):
        if has_continuous_block:
            w_new = w + step * scales * rng.standard_normal(k) if k else w
            if sample_sigma and not grid_sigma:
                sigma_new = math.exp(
                    math.log(sigma) + step * log_sigma_scale * rng.standard_normal()
                )
            else:
                sigma_new = sigma
            proposed = log_post(w_new, sigma_new)
            proposals += 1
            if math.log(rng.random()) < proposed - current:
                w, sigma, current = w_new, sigma_new, proposed
                accepted += 1
                window_accepted += 1
        if grid_sigma:
            values = sigma_prior.values
            sigma_new = float(values[rng.integers(values.shape[0])])
            if sigma_new != sigma:
                proposed = log_post(w, sigma_new)
                proposals += 1
                if math.log(rng.random()) < proposed - current:
                    sigma, current = sigma_new, proposed
                    accepted += 1

        in_burnin = it < chain.burnin
        if (
            in_burnin
            and has_continuous_block
            and (it + 1) % chain.adapt_interval == 0
        ):
            rate = window_accepted / chain.adapt_interval
            step *= math.exp(rate - chain.target_acceptance)
            window_accepted = 0
        if not in_burnin and (it - chain.burnin) % chain.thin == 0:
            kept_w[kept] = w
            kept_sigma[kept] = sigma
            kept_lp[kept] = current
            kept += 1

    if accepted == 0 and proposals > 0:
        raise SamplerFailureError(
            "no proposal was ever accepted; the chain never moved"
        )
    acc_rate = accepted / proposals if proposals else 1.0
    warnings: list[str] = []
    if has_continuous_block and not 0.15 <= acc_rate <= 0.5:
        warnings.append(
            f"acceptance rate {acc_rate:.3f} outside the healthy band [0.15, 0.5]"
        )
    return PosteriorSamples(
        basis,
        kept_w[:kept],
        kept_sigma[:kept],
        kept_lp[:kept],
        acc_rate,
        step,
        dataset.n,
        tuple(warnings),
    )


def discrete_set_mass(
    post: DiscretePosterior, n: int, predicate: Callable[[Theta], bool]
) -> float:
    """Exact posterior mass of {atoms satisfying predicate} at prefix n."""
    weights = post.weights_at(n)
    mask = np.array([bool(predicate(atom)) for atom in post.space.atoms])
    return float(np.sum(weights[mask]))


def mcmc_set_mass(
    samples: PosteriorSamples,
    predicate: Callable[[np.ndarray, np.ndarray], np.ndarray],
) -> tuple[float, float]:
    """Monte Carlo mass of a draw-level predicate; returns (mass, std error).

    The predicate receives (coefficients (M, K), sigmas (M,)) and must return
    a boolean vector.  The standard error is binomial and ignores chain
    autocorrelation, so treat it as optimistic.
    """
    flags = np.asarray(predicate(samples.coefficients, samples.sigmas), dtype=bool)
    if flags.shape[0] != samples.draws:
        raise InvalidArgumentError("predicate returned the wrong number of flags")
    p = float(np.mean(flags))
    se = math.sqrt(max(p * (1.0 - p), 1e-300) / samples.draws)
    return p, se


@dataclass(frozen=True)
class PredictiveDensity:
    """Posterior predictive density on an explicit y-grid."""

    x_new: np.ndarray
    y_grid: np.ndarray
    density: np.ndarray
    mass: float
    renormalization: float


def _default_y_grid(
    mu: np.ndarray, sigmas: np.ndarray, family: str, points: int = 8193
) -> np.ndarray:
    spread = {"normal": 10.0, "laplace": 26.0}.get(family, 30.0)
    sig_max = float(np.max(sigmas))
    lo = float(np.min(mu)) - spread * sig_max
    hi = float(np.max(mu)) + spread * sig_max
    return np.linspace(lo, hi, points)


def posterior_predictive_density(
    samples: PosteriorSamples,
    x_new: np.ndarray,
    family: str,
    y_grid: np.ndarray | None = None,
    postulated_phi: NoiseModel | None = None,
    mass_tolerance: float = 1e-4,
) -> PredictiveDensity:
    """Draw-averaged predictive density at one covariate point.

    The y-grid must capture essentially all predictive mass: if the trapezoid
    mass of the mixture misses more than ``mass_tolerance``, the grid is
    rejected as too narrow.  The reported density is NOT renormalized; the
    renormalization factor is reported so callers can see the defect.
    """
    loglik_terms = _family_log_density(family, postulated_phi)
    x_arr = np.asarray(x_new, dtype=float)
    mu = samples.eta_values(x_arr).reshape(-1)  # (M,)
    if y_grid is None:
        y_grid = _default_y_grid(mu, samples.sigmas, family)
    y_grid = np.asarray(y_grid, dtype=float).reshape(-1)
    if y_grid.shape[0] < 9 or np.any(np.diff(y_grid) <= 0):
        raise InvalidArgumentError("y_grid must be increasing with >= 9 points")

    density = np.zeros(y_grid.shape[0])
    chunk = max(1, 2_000_000 // y_grid.shape[0])
    for start in range(0, samples.draws, chunk):
        mu_c = mu[start : start + chunk, None]
        sig_c = samples.sigmas[start : start + chunk]
        resid = y_grid[None, :] - mu_c
        for i in range(resid.shape[0]):
            density += np.exp(loglik_terms(resid[i], float(sig_c[i])))
    density /= samples.draws

    mass = float(np.trapezoid(density, y_grid))
    if abs(1.0 - mass) > mass_tolerance:
        raise GridTooNarrowError(
            f"predictive grid captures mass {mass:.8f}; widen or refine it"
        )
    return PredictiveDensity(x_arr, y_grid, density, mass, 1.0 / mass)


@dataclass(frozen=True)
class PredictiveReport:
    """Hellinger and total-variation distances of predictive vs truth."""

    x_new: np.ndarray
    n: int
    hellinger_sq: float
    tv: float
    quadrature_error: float


def predictive_distance(
    truth: TrueModel,
    predictive: PredictiveDensity,
    n: int | None = None,
) -> PredictiveReport:
    """Distances between the true density at x_new and the predictive.

    Squared Hellinger uses the convention 1 - int sqrt(p q); total variation
    is (1/2) int |p - q|.  Both are Simpson integrals on the predictive's
    grid; the quadrature error is a half-resolution refinement difference.
    """
    y = predictive.y_grid
    p = np.exp(
        log_density(truth.noise, y - float(truth.eta0.evaluate(predictive.x_new)[0]))
    )
    q = predictive.density

    root = np.sqrt(p * q)
    absdiff = np.abs(p - q)
    bc_full = float(simpson(root, x=y))
    tv_full = 0.5 * float(simpson(absdiff, x=y))
    bc_half = float(simpson(root[::2], x=y[::2]))
    tv_half = 0.5 * float(simpson(absdiff[::2], x=y[::2]))
    err = max(abs(bc_full - bc_half), abs(tv_full - tv_half))

    hell_sq = min(max(1.0 - bc_full, 0.0), 1.0)
    tv = min(max(tv_full, 0.0), 1.0)
    return PredictiveReport(
        predictive.x_new,
        n if n is not None else predictive.y_grid.shape[0],
        hell_sq,
        tv,
        err,
    )


def effective_sample_size(x: np.ndarray) -> float:
    """Initial-positive-sequence autocorrelation ESS for one scalar chain."""
    x = np.asarray(x, dtype=float).reshape(-1)
    m = x.shape[0]
    if m < 4:
        return float(m)
    centered = x - x.mean()
    var = float(np.dot(centered, centered)) / m
    if var == 0.0:
        return float(m)
    # FFT autocorrelation
    size = 1 << (2 * m - 1).bit_length()
    f = np.fft.rfft(centered, size)
    acf = np.fft.irfft(f * np.conjugate(f), size)[:m].real
    acf /= acf[0]
    # sum consecutive lag pairs until a pair goes nonpositive
    total = 0.0
    for lag in range(1, m - 1, 2):
        pair = acf[lag] + acf[lag + 1]
        if pair <= 0:
            break
        total += pair
    ess = m / (1.0 + 2.0 * total)
    return float(min(max(ess, 1.0), m))
