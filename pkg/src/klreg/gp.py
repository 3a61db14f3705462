"""Gaussian-process priors on the regression function, and scale priors.

Two ways to realize a path:

* :func:`sample_path_on_grid` -- exact multivariate-normal draw on a finite
  point set via a jittered Cholesky factorization (jitter escalates from
  1e-12 to 1e-8 times the kernel amplitude before giving up);
* :func:`sample_coefficient_path` -- a finite basis expansion whose
  coefficient covariance matches the kernel's spectral weights: random
  Fourier features for the squared-exponential kernel, or spectral-density
  weights on the tensor cosine basis.

Scale priors support log-normal, inverse-gamma-on-variance, and finite grid
forms; :func:`sigma_prior_band_mass` evaluates the prior mass of the band
[exp(-(beta n)^(1/4)), exp((beta n)^(1/4))] in closed form or by Monte Carlo.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import stats

from .domain import CompactDomain
from .errors import (
    IllConditionedKernelError,
    InvalidArgumentError,
    UnsupportedCombinationError,
)
from .functions import (
    BasisExpansion,
    CosineBasis,
    FourierFeatureBasis,
    FunctionBasis,
    GridFunction,
    RegressionFunction,
    _as_points,
)

__all__ = [
    "GpSpec",
    "SigmaPrior",
    "sample_path_on_grid",
    "sample_path_values",
    "coefficient_basis",
    "coefficient_prior_scales",
    "sample_coefficient_path",
    "sigma_prior_sample",
    "sigma_prior_logpdf",
    "sigma_prior_band_mass",
]

_JITTER_FLOOR = 1e-12
_JITTER_CEILING = 1e-8


@dataclass(frozen=True)
class GpSpec:
    """A stationary GP prior: kernel family, amplitude, lengthscale, mean.

    kernel: "squared_exponential" or "matern"; Matern smoothness must be at
    least 5/2 (the half-integer forms 5/2 and 7/2 are implemented).
    amplitude is the marginal variance tau^2; lengthscale applies per axis.
    """

    domain: CompactDomain
    kernel: str = "squared_exponential"
    amplitude: float = 1.0
    lengthscale: float = 0.5
    nu: float = 2.5
    mean: RegressionFunction | None = None

    def __post_init__(self) -> None:
        if self.kernel not in ("squared_exponential", "matern"):
            raise InvalidArgumentError(f"unknown kernel {self.kernel!r}")
        if self.amplitude <= 0 or self.lengthscale <= 0:
            raise InvalidArgumentError("amplitude and lengthscale must be positive")
        if self.kernel == "matern":
            if self.nu < 2.5:
                raise InvalidArgumentError(
                    "matern smoothness below 5/2 does not give the required "
                    "differentiability; use nu >= 2.5"
                )
            if self.nu not in (2.5, 3.5):
                raise UnsupportedCombinationError(
                    "only the half-integer matern forms nu = 5/2 and 7/2 are "
                    "implemented"
                )

    def kernel_matrix(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.domain.dim)
        diff = pts[:, None, :] - pts[None, :, :]
        r = np.sqrt(np.sum(diff * diff, axis=2)) / self.lengthscale
        if self.kernel == "squared_exponential":
            return self.amplitude * np.exp(-0.5 * r * r)
        if self.nu == 2.5:
            c = math.sqrt(5.0) * r
            poly = 1.0 + c + c * c / 3.0
        else:  # nu == 3.5
            c = math.sqrt(7.0) * r
            poly = 1.0 + c + 0.4 * c * c + c**3 / 15.0
        return self.amplitude * poly * np.exp(-c)

    def mean_values(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.domain.dim)
        if self.mean is None:
            return np.zeros(pts.shape[0])
        return self.mean.evaluate(pts)


def _chol_with_jitter(gram: np.ndarray, amplitude: float) -> np.ndarray:
    """Cholesky factor with escalating diagonal jitter."""
    jitter = _JITTER_FLOOR * amplitude
    eye = np.eye(gram.shape[0])
    while jitter <= _JITTER_CEILING * amplitude * (1.0 + 1e-12):
        try:
            return np.linalg.cholesky(gram + jitter * eye)
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise IllConditionedKernelError(
        f"Gram matrix of size {gram.shape[0]} failed to factor at jitter "
        f"{_JITTER_CEILING * amplitude:.3e}; thin the grid or shrink it"
    )


def sample_path_values(
    spec: GpSpec,
    points: np.ndarray,
    seed: int | np.random.Generator,
    draws: int = 1,
) -> np.ndarray:
    """Draw GP path values at the given points; shape (draws, n_points)."""
    pts = _as_points(points, spec.domain.dim)
    gram = spec.kernel_matrix(pts)
    chol = _chol_with_jitter(gram, spec.amplitude)
    rng = (
        seed
        if isinstance(seed, np.random.Generator)
        else np.random.default_rng(seed)
    )
    z = rng.standard_normal((draws, pts.shape[0]))
    return spec.mean_values(pts)[None, :] + z @ chol.T


def sample_path_on_grid(
    spec: GpSpec,
    points: np.ndarray,
    seed: int | np.random.Generator,
) -> GridFunction:
    """One GP draw on a 1-d grid, wrapped as a piecewise-linear GridFunction."""
    if spec.domain.dim != 1:
        raise UnsupportedCombinationError(
            "grid-path sampling is implemented for 1-d domains; use "
            "sample_coefficient_path for higher dimensions"
        )
    pts = _as_points(points, 1)
    order = np.argsort(pts[:, 0])
    sorted_pts = pts[order]
    if np.any(np.diff(sorted_pts[:, 0]) <= 0):
        raise InvalidArgumentError("grid points must be distinct")
    values = sample_path_values(spec, sorted_pts, seed, draws=1)[0]
    return GridFunction(spec.domain, [sorted_pts[:, 0]], values)


def coefficient_basis(
    spec: GpSpec,
    k: int,
    feature_seed: int = 0,
    basis_kind: str = "rff",
) -> FunctionBasis:
    """The fixed feature set used by coefficient-path sampling.

    "rff" draws k frequencies from the squared-exponential spectral measure
    N(0, 1/lengthscale^2 I) and k phases uniform on [0, 2 pi); the features
    are sqrt(2/k) cos(omega . x + b).  "cosine" returns the first k tensor
    cosine features (1-d domains: frequencies 0..k-1).
    """
    if k <= 0:
        raise InvalidArgumentError("basis size must be positive")
    if basis_kind == "rff":
        if spec.kernel != "squared_exponential":
            raise UnsupportedCombinationError(
                "random Fourier features are implemented for the "
                "squared-exponential kernel only"
            )
        rng = np.random.default_rng(feature_seed)
        freqs = rng.normal(
            0.0, 1.0 / spec.lengthscale, size=(k, spec.domain.dim)
        )
        phases = rng.uniform(0.0, 2.0 * math.pi, size=k)
        return FourierFeatureBasis(spec.domain, freqs, phases)
    if basis_kind == "cosine":
        if spec.domain.dim != 1:
            raise UnsupportedCombinationError(
                "cosine coefficient paths are implemented on 1-d domains"
            )
        return CosineBasis.first_k(spec.domain, k)
    raise InvalidArgumentError(f"unknown basis kind {basis_kind!r}")


def coefficient_prior_scales(spec: GpSpec, basis: FunctionBasis) -> np.ndarray:
    """Prior standard deviations for the coefficients on the given basis.

    For random Fourier features all coefficients share variance tau^2.  For
    the cosine basis the variances follow the kernel's spectral density at
    the feature frequency, normalized so the average path variance over the
    domain equals tau^2 (for k = 1 this reduces to a single N(0, tau^2)
    coefficient on the constant feature).
    """
    if isinstance(basis, FourierFeatureBasis):
        return np.full(basis.size, math.sqrt(spec.amplitude))
    if isinstance(basis, CosineBasis):
        width = float(
            spec.domain.bounds[0, 1] - spec.domain.bounds[0, 0]
        )
        omega = math.pi * basis.indices[:, 0].astype(float) / width
        if spec.kernel == "squared_exponential":
            density = np.exp(-0.5 * (spec.lengthscale * omega) ** 2)
        else:
            # Matern spectral density up to normalization: (a^2 + w^2)^-(nu+1/2)
            a = math.sqrt(2.0 * self_nu(spec)) / spec.lengthscale
            density = (a * a + omega * omega) ** -(self_nu(spec) + 0.5)
        # Average of psi_k^2 over the domain: 1 for k = 0, 1/2 otherwise.
        mean_sq = np.where(basis.indices[:, 0] == 0, 1.0, 0.5)
        variances = density / float(np.dot(density, mean_sq)) * spec.amplitude
        if np.any(variances <= 0.0) or not np.all(np.isfinite(variances)):
            raise IllConditionedKernelError(
                "spectral prior variance underflowed to zero for a "
                "high-frequency feature; use a polynomially-decaying kernel "
                "(matern) or fewer features"
            )
        return np.sqrt(variances)
    raise UnsupportedCombinationError(
        f"no coefficient prior for basis type {type(basis).__name__}"
    )


def self_nu(spec: GpSpec) -> float:
    return spec.nu if spec.kernel == "matern" else math.inf


def sample_coefficient_path(
    spec: GpSpec,
    k: int,
    seed: int | np.random.Generator,
    feature_seed: int = 0,
    basis_kind: str = "rff",
    basis: FunctionBasis | None = None,
) -> BasisExpansion:
    """One coefficient-path draw: independent normal coefficients on a basis.

    The feature set is fixed by ``feature_seed`` (pass ``basis`` to reuse one
    across draws); only the coefficients consume ``seed``.
    """
    if basis is None:
        basis = coefficient_basis(spec, k, feature_seed, basis_kind)
    scales = coefficient_prior_scales(spec, basis)
    rng = (
        seed
        if isinstance(seed, np.random.Generator)
        else np.random.default_rng(seed)
    )
    coefficients = scales * rng.standard_normal(basis.size)
    if spec.mean is not None:
        raise UnsupportedCombinationError(
            "coefficient paths assume a zero-mean prior; add the mean "
            "downstream instead"
        )
    return BasisExpansion(basis, coefficients)


@dataclass(frozen=True)
class SigmaPrior:
    """Prior on the noise scale sigma.

    kind "lognormal": params (mu, sigma_log) for log sigma ~ N(mu, sigma_log^2).
    kind "inverse_gamma_variance": params (shape, rate) for sigma^2 ~ InvGamma.
    kind "grid": values with probability weights (atoms on positive reals).
    """

    kind: str
    params: tuple[float, ...] = ()
    values: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind == "lognormal":
            if len(self.params) != 2 or self.params[1] <= 0:
                raise InvalidArgumentError("lognormal needs (mu, sigma_log > 0)")
        elif self.kind == "inverse_gamma_variance":
            if len(self.params) != 2 or min(self.params) <= 0:
                raise InvalidArgumentError(
                    "inverse_gamma_variance needs positive (shape, rate)"
                )
        elif self.kind == "grid":
            values = np.asarray(self.values, dtype=float).reshape(-1)
            weights = np.asarray(self.weights, dtype=float).reshape(-1)
            if values.shape != weights.shape or values.shape[0] == 0:
                raise InvalidArgumentError("grid needs matching values/weights")
            if np.any(values <= 0):
                raise InvalidArgumentError("grid sigma values must be positive")
            if np.any(weights < 0) or not math.isclose(
                float(weights.sum()), 1.0, abs_tol=1e-9
            ):
                raise InvalidArgumentError("grid weights must sum to one")
            object.__setattr__(self, "values", values)
            object.__setattr__(self, "weights", weights)
        else:
            raise InvalidArgumentError(f"unknown sigma prior kind {self.kind!r}")


def sigma_prior_sample(
    prior: SigmaPrior, seed: int | np.random.Generator, draws: int = 1
) -> np.ndarray:
    rng = (
        seed
        if isinstance(seed, np.random.Generator)
        else np.random.default_rng(seed)
    )
    if prior.kind == "lognormal":
        mu, sd = prior.params
        return np.exp(mu + sd * rng.standard_normal(draws))
    if prior.kind == "inverse_gamma_variance":
        shape, rate = prior.params
        variance = rate / rng.gamma(shape, 1.0, size=draws)
        return np.sqrt(variance)
    idx = rng.choice(prior.values.shape[0], size=draws, p=prior.weights)
    return prior.values[idx]


def sigma_prior_logpdf(prior: SigmaPrior, sigma: float) -> float:
    """Log prior density (or log mass for grid priors) at sigma."""
    if sigma <= 0:
        return -math.inf
    if prior.kind == "lognormal":
        mu, sd = prior.params
        z = (math.log(sigma) - mu) / sd
        return -0.5 * z * z - math.log(sd * sigma * math.sqrt(2.0 * math.pi))
    if prior.kind == "inverse_gamma_variance":
        shape, rate = prior.params
        # density of sigma via sigma^2 ~ InvGamma(shape, rate); jacobian 2 sigma
        v = sigma * sigma
        log_invgamma = (
            shape * math.log(rate)
            - math.lgamma(shape)
            - (shape + 1.0) * math.log(v)
            - rate / v
        )
        return log_invgamma + math.log(2.0 * sigma)
    matches = np.isclose(prior.values, sigma, rtol=1e-12, atol=0.0)
    mass = float(np.sum(prior.weights[matches]))
    return math.log(mass) if mass > 0 else -math.inf


def sieve_band(beta: float, n: int) -> tuple[float, float]:
    """The scale band [exp(-(beta n)^(1/4)), exp(+(beta n)^(1/4))]."""
    if beta <= 0 or n <= 0:
        raise InvalidArgumentError("beta and n must be positive")
    t = (beta * n) ** 0.25
    return math.exp(-t), math.exp(t)


def sigma_prior_band_mass(
    prior: SigmaPrior,
    n: int,
    beta: float,
    method: str = "closed_form",
    draws: int = 10**6,
    seed: int = 0,
) -> tuple[float, float]:
    """Prior mass of the sieve scale band; returns (mass, standard_error).

    Closed forms use the exact CDFs (standard error zero); method="mc" uses
    ``draws`` prior samples and reports the binomial standard error.
    """
    lo, hi = sieve_band(beta, n)
    if method == "mc":
        sigmas = sigma_prior_sample(prior, seed, draws)
        inside = (sigmas >= lo) & (sigmas <= hi)
        p = float(np.mean(inside))
        return p, math.sqrt(max(p * (1.0 - p), 1e-300) / draws)
    if method != "closed_form":
        raise InvalidArgumentError(f"unknown band-mass method {method!r}")
    if prior.kind == "lognormal":
        mu, sd = prior.params
        t = (beta * n) ** 0.25
        mass = stats.norm.cdf((t - mu) / sd) - stats.norm.cdf((-t - mu) / sd)
        return float(mass), 0.0
    if prior.kind == "inverse_gamma_variance":
        shape, rate = prior.params
        dist = stats.invgamma(shape, scale=rate)
        mass = dist.cdf(hi * hi) - dist.cdf(lo * lo)
        return float(mass), 0.0
    inside = (prior.values >= lo) & (prior.values <= hi)
    return float(np.sum(prior.weights[inside])), 0.0
