"""Noise families: standardized densities phi with scale parameters.

A noise model is a symmetric density ``phi`` on the real line together with a
scale, so the residual density is ``(1/sigma) phi(z / sigma)``.  Normal and
Laplace are built in with closed forms everywhere; ``general`` wraps a
user-supplied ``log phi`` that must be symmetric, Lipschitz in log form, and
normalized on its truncation interval.

The assumption diagnostics live here too:

* :func:`subexponential_mgf_check` -- Monte Carlo probe of the moment bound
  ``E exp(lambda U) <= exp(lambda^2 s^2 / 2)`` for the centered log-density
  increment U at one covariate point;
* :func:`log_density_integrability_check` -- quadrature probe that
  ``int |log phi((sigma0/sigma) z)| phi(z) dz`` is finite (with the smallest
  admissible envelope constant) and that ``int |z| phi(z) dz`` is finite.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from ._quad import composite_gl
from .errors import InvalidArgumentError, DivergentIntegralError

__all__ = [
    "NoiseModel",
    "normal_noise",
    "laplace_noise",
    "general_noise",
    "log_density",
    "standard_log_phi",
    "sample",
    "laplace_abs_moment",
    "phi_entropy_constant",
    "abs_z_moment",
    "MgfCheckReport",
    "subexponential_mgf_check",
    "IntegrabilityReport",
    "log_density_integrability_check",
]

_LOG_2PI = math.log(2.0 * math.pi)

# Truncation radii: tail mass (with the polynomial log-density factors that
# multiply phi in our integrals) is below 1e-16 at these radii.
_NORMAL_RADIUS = 13.0
_LAPLACE_RADIUS = 45.0


@dataclass(frozen=True)
class NoiseModel:
    """A noise family with a fixed scale.

    Attributes:
        family: "normal", "laplace", or "general".
        scale: the scale sigma > 0 attached to this model.
        log_phi: standardized log-density (general only).
        lipschitz: Lipschitz constant of log_phi (general only).
        radius: truncation radius for quadrature and sampling.
        kinks: abscissae where log_phi is not smooth (for panel splitting).
    """

    family: str
    scale: float
    log_phi: Callable[[np.ndarray], np.ndarray] | None = None
    lipschitz: float | None = None
    radius: float = _NORMAL_RADIUS
    kinks: tuple[float, ...] = (0.0,)
    _cdf_table: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.family not in ("normal", "laplace", "general"):
            raise InvalidArgumentError(f"unknown noise family {self.family!r}")
        if not (self.scale > 0 and math.isfinite(self.scale)):
            raise InvalidArgumentError(f"scale must be positive, got {self.scale}")
        if self.family == "general":
            if self.log_phi is None or self.lipschitz is None:
                raise InvalidArgumentError(
                    "general noise requires log_phi and a Lipschitz constant"
                )
            _validate_general(self)

    def with_scale(self, scale: float) -> "NoiseModel":
        return NoiseModel(
            self.family,
            scale,
            log_phi=self.log_phi,
            lipschitz=self.lipschitz,
            radius=self.radius,
            kinks=self.kinks,
        )


def normal_noise(scale: float = 1.0) -> NoiseModel:
    return NoiseModel("normal", scale, radius=_NORMAL_RADIUS, kinks=())


def laplace_noise(scale: float = 1.0) -> NoiseModel:
    return NoiseModel("laplace", scale, radius=_LAPLACE_RADIUS, kinks=(0.0,))


def general_noise(
    log_phi: Callable[[np.ndarray], np.ndarray],
    lipschitz: float,
    scale: float = 1.0,
    radius: float = 40.0,
    kinks: Sequence[float] = (0.0,),
) -> NoiseModel:
    return NoiseModel(
        "general",
        scale,
        log_phi=log_phi,
        lipschitz=lipschitz,
        radius=radius,
        kinks=tuple(kinks),
    )


def _validate_general(model: NoiseModel) -> None:
    """Symmetry, normalization, and Lipschitz probes at construction."""
    r = model.radius
    probe = np.linspace(0.0, r, 101)
    left = np.asarray(model.log_phi(-probe), dtype=float)
    right = np.asarray(model.log_phi(probe), dtype=float)
    if not np.all(np.isfinite(left)) or not np.all(np.isfinite(right)):
        raise InvalidArgumentError("log_phi must be finite on [-radius, radius]")
    if np.max(np.abs(left - right)) > 1e-12:
        raise InvalidArgumentError("log_phi fails the symmetry probe (1e-12)")
    total, err = composite_gl(
        lambda z: np.exp(np.asarray(model.log_phi(z), dtype=float)),
        -r,
        r,
        kinks=model.kinks,
        panels=64,
        order=24,
    )
    if abs(total - 1.0) > 1e-8:
        raise InvalidArgumentError(
            f"phi must integrate to 1 within 1e-8 on the truncation interval "
            f"(got {total!r}, quadrature error {err:.2e})"
        )
    dense = np.linspace(-r, r, 2001)
    vals = np.asarray(model.log_phi(dense), dtype=float)
    steps = np.abs(np.diff(vals)) / np.diff(dense)
    if np.max(steps) > model.lipschitz * (1.0 + 1e-9) + 1e-12:
        raise InvalidArgumentError(
            f"log_phi violates its declared Lipschitz constant {model.lipschitz}"
        )


def standard_log_phi(model: NoiseModel, z: np.ndarray) -> np.ndarray:
    """log phi(z) for the standardized density."""
    z = np.asarray(z, dtype=float)
    if model.family == "normal":
        return -0.5 * _LOG_2PI - 0.5 * z * z
    if model.family == "laplace":
        return -math.log(2.0) - np.abs(z)
    return np.asarray(model.log_phi(z), dtype=float)


def log_density(model: NoiseModel, residual: np.ndarray) -> np.ndarray:
    """log of the residual density (1/sigma) phi(residual / sigma)."""
    residual = np.asarray(residual, dtype=float)
    return standard_log_phi(model, residual / model.scale) - math.log(model.scale)


def _general_cdf_table(model: NoiseModel) -> tuple[np.ndarray, np.ndarray]:
    table = model._cdf_table.get("cdf")
    if table is None:
        r = model.radius
        grid = np.linspace(-r, r, 200_001)
        pdf = np.exp(standard_log_phi(model, grid))
        increments = 0.5 * (pdf[1:] + pdf[:-1]) * np.diff(grid)
        cdf = np.concatenate([[0.0], np.cumsum(increments)])
        cdf /= cdf[-1]
        table = (grid, cdf)
        model._cdf_table["cdf"] = table
    return table


def sample(model: NoiseModel, n: int, seed: int | np.random.Generator) -> np.ndarray:
    """Draw n residuals: sigma times a standardized phi variate.

    Laplace uses the exact inverse CDF; general families use a tabulated
    inverse CDF on the truncation interval.
    """
    if n < 0:
        raise InvalidArgumentError("sample size must be nonnegative")
    rng = (
        seed
        if isinstance(seed, np.random.Generator)
        else np.random.default_rng(seed)
    )
    if model.family == "normal":
        return model.scale * rng.standard_normal(n)
    if model.family == "laplace":
        u = rng.random(n)
        centered = u - 0.5
        return -model.scale * np.sign(centered) * np.log1p(-2.0 * np.abs(centered))
    grid, cdf = _general_cdf_table(model)
    return model.scale * np.interp(rng.random(n), cdf, grid)


def laplace_abs_moment(delta: float, sigma0: float) -> float:
    """E |eps + delta| for Laplace(0, sigma0) noise: |d| + sigma0 exp(-|d|/sigma0)."""
    if sigma0 <= 0:
        raise InvalidArgumentError("sigma0 must be positive")
    d = abs(float(delta))
    return d + sigma0 * math.exp(-d / sigma0)


def phi_entropy_constant(model: NoiseModel) -> float:
    """The constant c = int log phi(z) phi(z) dz of the standardized density."""
    if model.family == "normal":
        return -0.5 * _LOG_2PI - 0.5
    if model.family == "laplace":
        return -math.log(2.0) - 1.0
    value, err = composite_gl(
        lambda z: standard_log_phi(model, z) * np.exp(standard_log_phi(model, z)),
        -model.radius,
        model.radius,
        kinks=model.kinks,
        panels=64,
        order=24,
    )
    if err > 1e-8:
        raise DivergentIntegralError(
            f"entropy constant quadrature did not stabilize (error {err:.2e})"
        )
    return value


def abs_z_moment(model: NoiseModel) -> float:
    """int |z| phi(z) dz of the standardized density."""
    if model.family == "normal":
        return math.sqrt(2.0 / math.pi)
    if model.family == "laplace":
        return 1.0
    value, _ = composite_gl(
        lambda z: np.abs(z) * np.exp(standard_log_phi(model, z)),
        -model.radius,
        model.radius,
        kinks=tuple(model.kinks) + (0.0,),
        panels=64,
        order=24,
    )
    return value


def mean_log_phi_shifted(
    model: NoiseModel, delta: float, sigma: float
) -> tuple[float, float]:
    """E_z [ log phi((sigma0 z - delta) / sigma) ] for z ~ phi, sigma0 = model.scale.

    This is the pointwise cross-entropy term of a postulated density with the
    same shape phi, scale sigma, and mean offset delta, under the true noise.
    Returns (value, quadrature error estimate).
    """
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    sigma0 = model.scale
    inner_kinks = [float(k) for k in model.kinks]
    # log phi((sigma0 z - delta)/sigma) has kinks where its argument crosses
    # a kink of log phi: z = (delta + sigma * k) / sigma0.
    arg_kinks = [(delta + sigma * k) / sigma0 for k in model.kinks]
    kinks = inner_kinks + arg_kinks if model.family != "normal" else []

    def integrand(z: np.ndarray) -> np.ndarray:
        weight = np.exp(standard_log_phi(model, z))
        return standard_log_phi(model, (sigma0 * z - delta) / sigma) * weight

    return composite_gl(
        integrand,
        -model.radius,
        model.radius,
        kinks=kinks,
        panels=24,
        order=24,
    )


@dataclass(frozen=True)
class MgfCheckReport:
    """Per-lambda Monte Carlo comparison against the sub-exponential bound.

    ``holds`` is True when every point estimate sits below its bound, False
    when some estimate exceeds the bound by more than three standard errors,
    and None (inconclusive) in between.
    """

    s: float
    sup_diff: float
    lambda_grid: np.ndarray
    estimates: np.ndarray
    bounds: np.ndarray
    std_errors: np.ndarray
    holds: bool | None


def subexponential_mgf_check(
    model: NoiseModel,
    delta: float,
    sigma: float,
    sup_diff: float,
    c1: float,
    c2: float,
    lambda_grid: Sequence[float] | None = None,
    draws: int = 10**6,
    seed: int = 0,
) -> MgfCheckReport:
    """Monte Carlo check of E exp(lambda U) <= exp(lambda^2 s^2 / 2).

    U is the centered log-density increment at one covariate point:
    U = log phi((eps - delta)/sigma) - E log phi((eps - delta)/sigma) with
    eps drawn from the true noise (this model).  ``delta`` is the regression
    discrepancy at the point, ``sup_diff`` its sup norm over the domain, and
    s = (c1 * sup_diff + c2) / sigma.  Every grid lambda must satisfy
    |lambda| <= 1/s.
    """
    if sigma <= 0 or c1 < 0 or c2 < 0:
        raise InvalidArgumentError("sigma must be positive; c1, c2 nonnegative")
    if sup_diff < abs(delta) - 1e-12:
        raise InvalidArgumentError("sup_diff cannot be smaller than |delta|")
    s = (c1 * sup_diff + c2) / sigma
    if s <= 0:
        raise InvalidArgumentError("envelope scale s must be positive")
    if lambda_grid is None:
        lam = np.linspace(-1.0 / s, 1.0 / s, 9)
    else:
        lam = np.asarray(list(lambda_grid), dtype=float)
    if np.any(np.abs(lam) > 1.0 / s + 1e-12):
        raise InvalidArgumentError("lambda grid exceeds the admissible range 1/s")

    center, _ = mean_log_phi_shifted(model, delta, sigma)
    eps = sample(model, draws, seed)
    u = standard_log_phi(model, (eps - delta) / sigma) - center

    estimates = np.empty(lam.shape[0])
    std_errors = np.empty(lam.shape[0])
    for i, l in enumerate(lam):
        vals = np.exp(l * u)
        estimates[i] = float(np.mean(vals))
        std_errors[i] = float(np.std(vals, ddof=1) / math.sqrt(draws))
    bounds = np.exp(0.5 * lam * lam * s * s)

    above = estimates > bounds
    fails = estimates > bounds + 3.0 * std_errors
    holds: bool | None
    if np.any(fails):
        holds = False
    elif np.any(above):
        holds = None
    else:
        holds = True
    return MgfCheckReport(s, sup_diff, lam, estimates, bounds, std_errors, holds)


@dataclass(frozen=True)
class IntegrabilityReport:
    """Integrability probe for the standardized log-density.

    ``log_integral`` is int |log phi((sigma0/sigma) z)| phi(z) dz,
    ``abs_moment`` is int |z| phi(z) dz, and ``c3`` = sigma * log_integral is
    the smallest envelope constant making log_integral <= c3 / sigma hold.
    """

    sigma: float
    log_integral: float
    abs_moment: float
    c3: float
    stabilized: bool


def log_density_integrability_check(model: NoiseModel, sigma: float) -> IntegrabilityReport:
    """Quadrature probe of the log-density integrability conditions."""
    if sigma <= 0:
        raise InvalidArgumentError("sigma must be positive")
    ratio = model.scale / sigma

    def integrand(z: np.ndarray) -> np.ndarray:
        return np.abs(standard_log_phi(model, ratio * z)) * np.exp(
            standard_log_phi(model, z)
        )

    # |log phi| may kink both at phi's own kinks and where log phi crosses 0.
    kinks = list(model.kinks)
    r = model.radius
    value, _ = composite_gl(integrand, -r, r, kinks=kinks, panels=48, order=24)
    wider, _ = composite_gl(
        integrand, -1.25 * r, 1.25 * r, kinks=kinks, panels=48, order=24
    )
    stabilized = abs(wider - value) <= max(1e-9, 1e-8 * abs(value))
    if not stabilized:
        raise DivergentIntegralError(
            "log-density integral failed its stabilization probe: "
            f"{value!r} vs {wider!r} at 1.25x radius"
        )
    moment = abs_z_moment(model)
    return IntegrabilityReport(sigma, wider, moment, sigma * wider, stabilized)
