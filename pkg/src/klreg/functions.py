"""Regression-function representations on a compact box.

Three concrete representations cover everything the experiments need:

* :class:`BasisExpansion` -- finite linear combination of basis features
  (tensor cosine basis or random Fourier features), with analytic partial
  derivatives and a certified sup-norm upper bound ``sum_k |w_k| sup|psi_k|``;
* :class:`GridFunction` -- values on a tensor grid with piecewise-linear
  interpolation, differentiated by second-order finite differences;
* :class:`ClosedForm` -- a small catalogue of closed-form rules (constant,
  axis-aligned step, sinusoid).  Step functions declare their discontinuities
  so quadrature panels can be split on them; they are not differentiable.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .domain import CompactDomain, MeasureQ, q_expectation
from .errors import (
    DomainMismatchError,
    InvalidArgumentError,
    NotDifferentiableError,
)

__all__ = [
    "RegressionFunction",
    "BasisExpansion",
    "GridFunction",
    "ClosedForm",
    "FunctionBasis",
    "CosineBasis",
    "FourierFeatureBasis",
    "SupNormReport",
    "sup_norm",
    "partial_derivative",
    "l2q_distance_sq",
    "function_to_json",
    "function_from_json",
]

# Dense-grid resolution (points per axis) used for sup norms, keyed by dim.
_SUP_GRID_DEFAULT = {1: 1001, 2: 201, 3: 41}


def _as_points(x: object, dim: int) -> np.ndarray:
    """Normalize scalar / (d,) / (n, d) input to an (n, d) float array."""
    arr = np.asarray(x, dtype=float)
    if arr.ndim == 0:
        if dim != 1:
            raise InvalidArgumentError("scalar input only valid on 1-d domains")
        return arr.reshape(1, 1)
    if arr.ndim == 1:
        if dim == 1:
            return arr.reshape(-1, 1)
        if arr.shape[0] == dim:
            return arr.reshape(1, dim)
        raise DomainMismatchError(
            f"cannot interpret shape {arr.shape} as points in dimension {dim}"
        )
    if arr.ndim == 2 and arr.shape[1] == dim:
        return arr
    raise DomainMismatchError(
        f"cannot interpret shape {arr.shape} as points in dimension {dim}"
    )


class RegressionFunction:
    """Base class: a real-valued function on a compact box."""

    domain: CompactDomain

    #: Axis-aligned discontinuities declared as (axis, location) pairs.
    discontinuities: tuple[tuple[int, float], ...] = ()

    def evaluate(self, x: object) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: object) -> np.ndarray:
        return self.evaluate(x)

    def to_dict(self) -> dict:
        raise NotImplementedError


class FunctionBasis:
    """A finite family of basis features on a common domain."""

    domain: CompactDomain

    @property
    def size(self) -> int:
        raise NotImplementedError

    def design_matrix(self, points: np.ndarray) -> np.ndarray:
        """Feature matrix, shape (n_points, size)."""
        raise NotImplementedError

    def derivative_design_matrix(self, points: np.ndarray, axis: int) -> np.ndarray:
        """Feature partial derivatives along ``axis``, shape (n_points, size)."""
        raise NotImplementedError

    def feature_sup_norms(self) -> np.ndarray:
        """Upper bounds on sup|psi_k| over the domain."""
        raise NotImplementedError

    def feature_derivative_sup_norms(self, axis: int) -> np.ndarray:
        """Upper bounds on sup|d psi_k / d x_axis|."""
        raise NotImplementedError

    def function_from_coefficients(self, coefficients: np.ndarray) -> "BasisExpansion":
        return BasisExpansion(self, np.asarray(coefficients, dtype=float))

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class CosineBasis(FunctionBasis):
    """Tensor cosine features prod_j cos(pi k_j t_j) in scaled coordinates.

    ``t_j = (x_j - a_j) / (b_j - a_j)`` maps the box to the unit cube; the
    multi-index ``k = 0`` gives the constant feature.  Every feature has sup
    norm exactly one, so ``sum_k |w_k|`` certifies the sup norm of an
    expansion.
    """

    domain: CompactDomain
    indices: np.ndarray  # shape (K, dim), nonnegative integers

    def __post_init__(self) -> None:
        idx = np.atleast_2d(np.asarray(self.indices, dtype=int))
        if idx.shape[1] != self.domain.dim:
            raise DomainMismatchError("multi-index width must equal domain dim")
        if np.any(idx < 0):
            raise InvalidArgumentError("cosine multi-indices must be nonnegative")
        object.__setattr__(self, "indices", idx)

    @classmethod
    def first_k(cls, domain: CompactDomain, k: int) -> "CosineBasis":
        """First k one-dimensional features cos(pi * j * t), j = 0..k-1."""
        if domain.dim != 1:
            raise InvalidArgumentError("first_k is defined for 1-d domains")
        return cls(domain, np.arange(k, dtype=int).reshape(-1, 1))

    @property
    def size(self) -> int:
        return self.indices.shape[0]

    def _scaled(self, points: np.ndarray) -> np.ndarray:
        lo = self.domain.bounds[:, 0]
        width = self.domain.bounds[:, 1] - self.domain.bounds[:, 0]
        return (points - lo) / width

    def design_matrix(self, points: np.ndarray) -> np.ndarray:
        t = self._scaled(_as_points(points, self.domain.dim))
        # angles[n, K, d] = pi * k_jd * t_nj
        angles = math.pi * t[:, None, :] * self.indices[None, :, :]
        return np.prod(np.cos(angles), axis=2)

    def derivative_design_matrix(self, points: np.ndarray, axis: int) -> np.ndarray:
        pts = _as_points(points, self.domain.dim)
        t = self._scaled(pts)
        width = float(self.domain.bounds[axis, 1] - self.domain.bounds[axis, 0])
        angles = math.pi * t[:, None, :] * self.indices[None, :, :]
        cos_all = np.cos(angles)
        out = np.prod(np.delete(cos_all, axis, axis=2), axis=2)
        k_axis = self.indices[:, axis]
        out = out * (-(math.pi / width) * k_axis) * np.sin(angles[:, :, axis])
        return out

    def feature_sup_norms(self) -> np.ndarray:
        return np.ones(self.size)

    def feature_derivative_sup_norms(self, axis: int) -> np.ndarray:
        width = float(self.domain.bounds[axis, 1] - self.domain.bounds[axis, 0])
        return math.pi * self.indices[:, axis] / width

    def to_dict(self) -> dict:
        return {
            "type": "cosine",
            "bounds": self.domain.bounds.tolist(),
            "indices": self.indices.tolist(),
        }


@dataclass(frozen=True)
class FourierFeatureBasis(FunctionBasis):
    """Random Fourier features amp * cos(omega_k . x + b_k).

    With ``amp = sqrt(2 / K)`` and frequencies drawn from the spectral measure
    of a stationary kernel, independent N(0, tau^2) coefficients give paths
    whose covariance approximates that kernel.  Frequencies and phases are
    fixed data here; sampling them belongs to the prior module.
    """

    domain: CompactDomain
    frequencies: np.ndarray  # shape (K, dim)
    phases: np.ndarray  # shape (K,)

    def __post_init__(self) -> None:
        freq = np.atleast_2d(np.asarray(self.frequencies, dtype=float))
        phases = np.asarray(self.phases, dtype=float).reshape(-1)
        if freq.shape[1] != self.domain.dim:
            raise DomainMismatchError("frequency width must equal domain dim")
        if freq.shape[0] != phases.shape[0]:
            raise InvalidArgumentError("frequencies and phases must align")
        object.__setattr__(self, "frequencies", freq)
        object.__setattr__(self, "phases", phases)

    @property
    def size(self) -> int:
        return self.frequencies.shape[0]

    @property
    def amplitude(self) -> float:
        return math.sqrt(2.0 / self.size)

    def design_matrix(self, points: np.ndarray) -> np.ndarray:
        pts = _as_points(points, self.domain.dim)
        angles = pts @ self.frequencies.T + self.phases
        return self.amplitude * np.cos(angles)

    def derivative_design_matrix(self, points: np.ndarray, axis: int) -> np.ndarray:
        pts = _as_points(points, self.domain.dim)
        angles = pts @ self.frequencies.T + self.phases
        return -self.amplitude * self.frequencies[:, axis] * np.sin(angles)

    def feature_sup_norms(self) -> np.ndarray:
        return np.full(self.size, self.amplitude)

    def feature_derivative_sup_norms(self, axis: int) -> np.ndarray:
        return self.amplitude * np.abs(self.frequencies[:, axis])

    def to_dict(self) -> dict:
        return {
            "type": "fourier",
            "bounds": self.domain.bounds.tolist(),
            "frequencies": self.frequencies.tolist(),
            "phases": self.phases.tolist(),
        }


def _basis_from_dict(payload: dict) -> FunctionBasis:
    domain = CompactDomain(np.asarray(payload["bounds"], dtype=float))
    if payload["type"] == "cosine":
        return CosineBasis(domain, np.asarray(payload["indices"], dtype=int))
    if payload["type"] == "fourier":
        return FourierFeatureBasis(
            domain,
            np.asarray(payload["frequencies"], dtype=float),
            np.asarray(payload["phases"], dtype=float),
        )
    raise InvalidArgumentError(f"unknown basis type {payload['type']!r}")


class BasisExpansion(RegressionFunction):
    """Finite linear combination ``sum_k w_k psi_k`` of basis features."""

    def __init__(self, basis: FunctionBasis, coefficients: np.ndarray):
        coefficients = np.asarray(coefficients, dtype=float).reshape(-1)
        if coefficients.shape[0] != basis.size:
            raise InvalidArgumentError(
                f"{coefficients.shape[0]} coefficients for {basis.size} features"
            )
        if not np.all(np.isfinite(coefficients)):
            raise InvalidArgumentError("coefficients must be finite")
        self.basis = basis
        self.coefficients = coefficients
        self.domain = basis.domain

    def evaluate(self, x: object) -> np.ndarray:
        pts = _as_points(x, self.domain.dim)
        return self.basis.design_matrix(pts) @ self.coefficients

    def certified_sup_bound(self) -> float:
        return float(np.abs(self.coefficients) @ self.basis.feature_sup_norms())

    def certified_derivative_sup_bound(self, axis: int) -> float:
        return float(
            np.abs(self.coefficients) @ self.basis.feature_derivative_sup_norms(axis)
        )

    def to_dict(self) -> dict:
        return {
            "repr": "basis_expansion",
            "basis": self.basis.to_dict(),
            "coefficients": self.coefficients.tolist(),
        }


class _BasisDerivative(RegressionFunction):
    """Analytic partial derivative of a basis expansion (still a linear form)."""

    def __init__(self, basis: FunctionBasis, coefficients: np.ndarray, axis: int):
        self.basis = basis
        self.coefficients = np.asarray(coefficients, dtype=float)
        self.axis = int(axis)
        self.domain = basis.domain

    def evaluate(self, x: object) -> np.ndarray:
        pts = _as_points(x, self.domain.dim)
        return self.basis.derivative_design_matrix(pts, self.axis) @ self.coefficients

    def certified_sup_bound(self) -> float:
        return float(
            np.abs(self.coefficients)
            @ self.basis.feature_derivative_sup_norms(self.axis)
        )

    def to_dict(self) -> dict:
        return {
            "repr": "basis_derivative",
            "basis": self.basis.to_dict(),
            "coefficients": self.coefficients.tolist(),
            "axis": self.axis,
        }


class GridFunction(RegressionFunction):
    """Piecewise-(multi)linear interpolant of values on a tensor grid."""

    def __init__(
        self,
        domain: CompactDomain,
        axes: Sequence[np.ndarray],
        values: np.ndarray,
    ):
        axes = tuple(np.asarray(a, dtype=float).reshape(-1) for a in axes)
        if len(axes) != domain.dim:
            raise DomainMismatchError("one grid axis required per dimension")
        for a in axes:
            if a.shape[0] < 2 or np.any(np.diff(a) <= 0):
                raise InvalidArgumentError(
                    "grid axes must be strictly increasing with >= 2 points"
                )
        values = np.asarray(values, dtype=float)
        expected = tuple(a.shape[0] for a in axes)
        if values.shape != expected:
            raise InvalidArgumentError(
                f"values shape {values.shape} does not match grid {expected}"
            )
        if not np.all(np.isfinite(values)):
            raise InvalidArgumentError("grid values must be finite")
        self.domain = domain
        self.axes = axes
        self.values = values
        if domain.dim > 1:
            from scipy.interpolate import RegularGridInterpolator

            self._interp = RegularGridInterpolator(
                axes, values, method="linear", bounds_error=False, fill_value=None
            )
        else:
            self._interp = None

    def evaluate(self, x: object) -> np.ndarray:
        pts = _as_points(x, self.domain.dim)
        if self.domain.dim == 1:
            return np.interp(pts[:, 0], self.axes[0], self.values)
        return np.asarray(self._interp(pts), dtype=float)

    def to_dict(self) -> dict:
        return {
            "repr": "grid",
            "bounds": self.domain.bounds.tolist(),
            "axes": [a.tolist() for a in self.axes],
            "values": self.values.tolist(),
        }


class ClosedForm(RegressionFunction):
    """Closed-form rules: "constant", "step", "sinusoid".

    step: params axis, breakpoints (ascending), levels (one more than
        breakpoints); right-continuous in the step coordinate.  Declares its
        discontinuities for quadrature splitting.
    sinusoid: params axis, amplitude, frequency (cycles per unit of the
        scaled coordinate), phase; f = A sin(2 pi freq t + phase).
    """

    def __init__(self, domain: CompactDomain, rule: str, params: dict):
        self.domain = domain
        self.rule = rule
        self.params = dict(params)
        if rule == "constant":
            self._value = float(params["value"])
        elif rule == "step":
            axis = int(params.get("axis", 0))
            breakpoints = np.asarray(params["breakpoints"], dtype=float).reshape(-1)
            levels = np.asarray(params["levels"], dtype=float).reshape(-1)
            if np.any(np.diff(breakpoints) <= 0):
                raise InvalidArgumentError("step breakpoints must be ascending")
            if levels.shape[0] != breakpoints.shape[0] + 1:
                raise InvalidArgumentError(
                    "step needs exactly one more level than breakpoints"
                )
            self._axis = axis
            self._breakpoints = breakpoints
            self._levels = levels
            self.discontinuities = tuple((axis, float(c)) for c in breakpoints)
        elif rule == "sinusoid":
            self._axis = int(params.get("axis", 0))
            self._amplitude = float(params.get("amplitude", 1.0))
            self._frequency = float(params["frequency"])
            self._phase = float(params.get("phase", 0.0))
        else:
            raise InvalidArgumentError(f"unknown closed-form rule {rule!r}")

    def evaluate(self, x: object) -> np.ndarray:
        pts = _as_points(x, self.domain.dim)
        if self.rule == "constant":
            return np.full(pts.shape[0], self._value)
        if self.rule == "step":
            idx = np.searchsorted(self._breakpoints, pts[:, self._axis], side="right")
            return self._levels[idx]
        a, b = self.domain.bounds[self._axis]
        t = (pts[:, self._axis] - a) / (b - a)
        return self._amplitude * np.sin(
            2.0 * math.pi * self._frequency * t + self._phase
        )

    def to_dict(self) -> dict:
        return {
            "repr": "closed_form",
            "bounds": self.domain.bounds.tolist(),
            "rule": self.rule,
            "params": {
                k: (v.tolist() if isinstance(v, np.ndarray) else v)
                for k, v in self.params.items()
            },
        }


@dataclass(frozen=True)
class SupNormReport:
    """Result of a sup-norm computation.

    ``value`` is exact when method == "analytic", else a dense-grid lower
    bound; ``certified_upper`` (when available) is a rigorous upper bound, so
    value <= sup|f| <= certified_upper.
    """

    value: float
    method: str
    grid_points_per_axis: int | None = None
    certified_upper: float | None = None


def sup_norm(f: RegressionFunction, m: int | None = None) -> SupNormReport:
    """Sup norm of |f| over the domain.

    Grid functions and constant/step closed forms admit exact answers (the
    max of a piecewise-linear interpolant sits on a node; a step takes
    finitely many values).  Everything else is scanned on an m-per-axis dense
    grid, with the certified coefficient bound attached for basis expansions.
    """
    if isinstance(f, GridFunction):
        exact = float(np.max(np.abs(f.values)))
        return SupNormReport(exact, "analytic", None, exact)
    if isinstance(f, ClosedForm) and f.rule == "constant":
        exact = abs(f._value)
        return SupNormReport(exact, "analytic", None, exact)
    if isinstance(f, ClosedForm) and f.rule == "step":
        exact = float(np.max(np.abs(f._levels)))
        return SupNormReport(exact, "analytic", None, exact)

    dim = f.domain.dim
    m_eff = m if m is not None else _SUP_GRID_DEFAULT.get(dim, 21)
    grid = f.domain.grid(m_eff)
    value = float(np.max(np.abs(f.evaluate(grid))))
    certified = None
    if isinstance(f, (BasisExpansion, _BasisDerivative)):
        certified = f.certified_sup_bound()
    elif isinstance(f, ClosedForm) and f.rule == "sinusoid":
        certified = abs(f._amplitude)
    return SupNormReport(value, f"dense-grid({m_eff})", m_eff, certified)


def partial_derivative(f: RegressionFunction, axis: int = 0) -> RegressionFunction:
    """Partial derivative along ``axis`` as a new regression function.

    Basis expansions and sinusoids differentiate analytically; grid functions
    use second-order finite differences on their own grid.  Step functions
    (and anything else without a derivative) raise NotDifferentiableError.
    """
    if axis < 0 or axis >= f.domain.dim:
        raise InvalidArgumentError(f"axis {axis} out of range for dim {f.domain.dim}")
    if isinstance(f, BasisExpansion):
        return _BasisDerivative(f.basis, f.coefficients, axis)
    if isinstance(f, _BasisDerivative):
        raise NotDifferentiableError("second derivatives are not supported")
    if isinstance(f, GridFunction):
        deriv = np.gradient(f.values, f.axes[axis], axis=axis, edge_order=2)
        return GridFunction(f.domain, f.axes, deriv)
    if isinstance(f, ClosedForm):
        if f.rule == "constant":
            return ClosedForm(f.domain, "constant", {"value": 0.0})
        if f.rule == "sinusoid":
            if axis != f._axis:
                return ClosedForm(f.domain, "constant", {"value": 0.0})
            a, b = f.domain.bounds[axis]
            scale = 2.0 * math.pi * f._frequency / (b - a)
            return ClosedForm(
                f.domain,
                "sinusoid",
                {
                    "axis": axis,
                    "amplitude": f._amplitude * scale,
                    "frequency": f._frequency,
                    "phase": f._phase + 0.5 * math.pi,
                },
            )
        raise NotDifferentiableError(f"closed-form rule {f.rule!r} (step has jumps)")
    raise NotDifferentiableError(f"no derivative rule for {type(f).__name__}")


class _SquaredDifference:
    """Integrand (f - g)^2 carrying both functions' declared discontinuities."""

    def __init__(self, f: RegressionFunction, g: RegressionFunction):
        self.f = f
        self.g = g
        self.discontinuities = tuple(f.discontinuities) + tuple(g.discontinuities)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        diff = self.f.evaluate(points) - self.g.evaluate(points)
        return diff * diff


def l2q_distance_sq(
    f: RegressionFunction, g: RegressionFunction, q: MeasureQ
) -> tuple[float, float]:
    """Squared L2(Q) distance E_Q (f - g)^2 with a quadrature error estimate."""
    if f.domain.dim != q.domain.dim:
        raise DomainMismatchError("function and measure dimensions differ")
    return q_expectation(q, _SquaredDifference(f, g))


def function_from_dict(payload: dict) -> RegressionFunction:
    kind = payload["repr"]
    if kind == "basis_expansion":
        basis = _basis_from_dict(payload["basis"])
        return BasisExpansion(basis, np.asarray(payload["coefficients"], dtype=float))
    if kind == "basis_derivative":
        basis = _basis_from_dict(payload["basis"])
        return _BasisDerivative(
            basis, np.asarray(payload["coefficients"], dtype=float), payload["axis"]
        )
    if kind == "grid":
        domain = CompactDomain(np.asarray(payload["bounds"], dtype=float))
        return GridFunction(
            domain,
            [np.asarray(a, dtype=float) for a in payload["axes"]],
            np.asarray(payload["values"], dtype=float),
        )
    if kind == "closed_form":
        domain = CompactDomain(np.asarray(payload["bounds"], dtype=float))
        return ClosedForm(domain, payload["rule"], payload["params"])
    raise InvalidArgumentError(f"unknown function repr {kind!r}")


def function_to_json(f: RegressionFunction) -> str:
    return json.dumps(f.to_dict())


def function_from_json(text: str) -> RegressionFunction:
    return function_from_dict(json.loads(text))
