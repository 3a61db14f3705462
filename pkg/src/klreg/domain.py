"""Compact covariate domains, covariate distributions, and designs.

The regression experiments all live on a compact box ``X = prod_j [a_j, b_j]``
carrying a probability measure ``Q`` for the covariates.  Two measures are
supported:

* ``uniform`` -- normalized Lebesgue measure on the box;
* ``grid_density`` -- a density tabulated on fixed quadrature nodes.

Expectations against ``Q`` are computed with composite Gauss-Legendre rules
(tensor products up to dimension three, quasi-Monte Carlo above that) and a
refinement-based error estimate.  Axis-aligned discontinuities can be declared
so panel boundaries land exactly on them; the rule then converges at full
order even for step integrands.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import (
    DomainMismatchError,
    EvaluationError,
    InvalidArgumentError,
    UnsupportedCombinationError,
)

__all__ = [
    "CompactDomain",
    "MeasureQ",
    "CovariateDesign",
    "uniform_measure",
    "grid_density_measure",
    "q_expectation",
    "quadrature_rules",
    "make_design",
    "empirical_q_average",
    "design_to_csv",
    "unit_interval",
]

# Per-axis (panel count, Gauss-Legendre order) defaults, keyed by dimension.
# Chosen so the refined tensor rule stays under ~3e5 nodes in dimension three.
_DEFAULT_RESOLUTION = {1: (8, 16), 2: (6, 10), 3: (4, 6)}

# Quasi-Monte Carlo sample size for dimensions above three.
_QMC_SIZE = 1 << 15


@dataclass(frozen=True)
class CompactDomain:
    """A compact axis-aligned box ``prod_j [a_j, b_j]``.

    Attributes:
        bounds: array of shape (dim, 2) with strictly increasing rows.
    """

    bounds: np.ndarray

    def __post_init__(self) -> None:
        bounds = np.atleast_2d(np.asarray(self.bounds, dtype=float))
        if bounds.ndim != 2 or bounds.shape[1] != 2:
            raise InvalidArgumentError(
                f"bounds must have shape (dim, 2), got {bounds.shape}"
            )
        if not np.all(np.isfinite(bounds)):
            raise InvalidArgumentError("bounds must be finite")
        if not np.all(bounds[:, 0] < bounds[:, 1]):
            raise InvalidArgumentError("each bound pair must satisfy a < b")
        object.__setattr__(self, "bounds", bounds)

    @property
    def dim(self) -> int:
        return self.bounds.shape[0]

    @property
    def volume(self) -> float:
        return float(np.prod(self.bounds[:, 1] - self.bounds[:, 0]))

    def contains(self, points: np.ndarray, rtol: float = 1e-12) -> np.ndarray:
        """Vectorized membership test with a tiny boundary tolerance."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        lo = self.bounds[:, 0] - rtol
        hi = self.bounds[:, 1] + rtol
        return np.all((pts >= lo) & (pts <= hi), axis=1)

    def grid(self, points_per_axis: int) -> np.ndarray:
        """Dense tensor grid, ``points_per_axis`` per dimension, shape (m^d, d)."""
        if points_per_axis < 2:
            raise InvalidArgumentError("points_per_axis must be at least 2")
        axes = [
            np.linspace(a, b, points_per_axis) for a, b in self.bounds
        ]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=-1)


def unit_interval() -> CompactDomain:
    """The default covariate domain [0, 1]."""
    return CompactDomain(np.array([[0.0, 1.0]]))


@dataclass(frozen=True)
class MeasureQ:
    """A probability measure for the covariates.

    Attributes:
        domain: the carrying box.
        kind: "uniform" or "grid_density".
        nodes: quadrature nodes, shape (m, dim).
        weights: probability weights summing to one.
        density: density values at the nodes (grid_density only).
    """

    domain: CompactDomain
    kind: str
    nodes: np.ndarray
    weights: np.ndarray
    density: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "grid_density"):
            raise InvalidArgumentError(f"unknown measure kind {self.kind!r}")
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        weights = np.asarray(self.weights, dtype=float)
        if nodes.shape[0] != weights.shape[0]:
            raise InvalidArgumentError("nodes and weights must have equal length")
        if np.any(weights < -1e-15):
            raise InvalidArgumentError("weights must be nonnegative")
        total = float(np.sum(weights))
        if not math.isclose(total, 1.0, rel_tol=0.0, abs_tol=1e-9):
            raise InvalidArgumentError(
                f"weights must sum to 1 (got {total!r}); normalize upstream"
            )
        if not np.all(self.domain.contains(nodes)):
            raise DomainMismatchError("measure nodes fall outside the domain")
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "weights", weights)


def _panel_edges(
    a: float, b: float, panels: int, interior: Sequence[float]
) -> np.ndarray:
    """Panel boundaries on [a, b]: uniform panels plus declared breakpoints."""
    edges = set(np.linspace(a, b, panels + 1).tolist())
    for point in interior:
        if a < point < b:
            edges.add(float(point))
    return np.array(sorted(edges))


def _axis_rule(
    a: float, b: float, panels: int, order: int, interior: Sequence[float]
) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights on [a, b] (plain dx weights)."""
    base_x, base_w = leggauss(order)
    edges = _panel_edges(a, b, panels, interior)
    nodes: list[np.ndarray] = []
    weights: list[np.ndarray] = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        half = 0.5 * (hi - lo)
        mid = 0.5 * (hi + lo)
        nodes.append(mid + half * base_x)
        weights.append(half * base_w)
    return np.concatenate(nodes), np.concatenate(weights)


def _tensor_rule(
    domain: CompactDomain,
    panels: int,
    order: int,
    breakpoints: Sequence[tuple[int, float]],
) -> tuple[np.ndarray, np.ndarray]:
    """Tensor-product rule over the box; weights integrate plain dx."""
    per_axis = []
    for axis, (a, b) in enumerate(domain.bounds):
        interior = [loc for ax, loc in breakpoints if ax == axis]
        per_axis.append(_axis_rule(a, b, panels, order, interior))
    node_mesh = np.meshgrid(*[x for x, _ in per_axis], indexing="ij")
    weight_mesh = np.meshgrid(*[w for _, w in per_axis], indexing="ij")
    nodes = np.stack([m.ravel() for m in node_mesh], axis=-1)
    weights = np.ones(nodes.shape[0])
    for w in weight_mesh:
        weights = weights * w.ravel()
    return nodes, weights


def uniform_measure(
    domain: CompactDomain,
    panels: int | None = None,
    order: int | None = None,
) -> MeasureQ:
    """Normalized Lebesgue measure, materialized on a composite GL rule."""
    default_panels, default_order = _DEFAULT_RESOLUTION.get(
        min(domain.dim, 3), (4, 6)
    )
    panels = default_panels if panels is None else panels
    order = default_order if order is None else order
    if domain.dim <= 3:
        nodes, weights = _tensor_rule(domain, panels, order, ())
    else:
        nodes = _halton_nodes(domain, _QMC_SIZE)
        weights = np.full(nodes.shape[0], domain.volume / nodes.shape[0])
    return MeasureQ(domain, "uniform", nodes, weights / domain.volume)


def grid_density_measure(
    domain: CompactDomain,
    nodes: np.ndarray,
    density: np.ndarray,
    base_weights: np.ndarray | None = None,
) -> MeasureQ:
    """Measure with density tabulated on fixed quadrature nodes.

    ``base_weights`` are plain-dx quadrature weights for the nodes; when
    omitted the nodes are assumed to come from :func:`uniform_measure` on the
    same domain in the same order, i.e. weights ``volume / m`` are NOT assumed
    -- instead equal dx weights are used, which is only adequate for roughly
    uniform node layouts.  The resulting probability weights are normalized
    exactly; the normalization defect is folded in silently (it reflects the
    tabulation accuracy, not a modeling choice).
    """
    nodes = np.atleast_2d(np.asarray(nodes, dtype=float))
    density = np.asarray(density, dtype=float)
    if np.any(density < 0):
        raise InvalidArgumentError("density values must be nonnegative")
    if base_weights is None:
        base_weights = np.full(nodes.shape[0], domain.volume / nodes.shape[0])
    raw = density * np.asarray(base_weights, dtype=float)
    total = float(np.sum(raw))
    if total <= 0:
        raise InvalidArgumentError("density integrates to zero on the grid")
    return MeasureQ(domain, "grid_density", nodes, raw / total, density=density)


def _halton_nodes(domain: CompactDomain, m: int) -> np.ndarray:
    from scipy.stats import qmc

    sampler = qmc.Halton(d=domain.dim, scramble=False)
    unit = sampler.random(m)
    lo = domain.bounds[:, 0]
    hi = domain.bounds[:, 1]
    return lo + unit * (hi - lo)


def _eval_batch(f: Callable | object, points: np.ndarray) -> np.ndarray:
    """Evaluate `f` on an (m, d) batch; accepts RegressionFunction or callable."""
    evaluate = getattr(f, "evaluate", None)
    values = evaluate(points) if evaluate is not None else f(points)
    values = np.asarray(values, dtype=float).reshape(-1)
    if values.shape[0] != points.shape[0]:
        raise InvalidArgumentError(
            "integrand returned wrong batch size: "
            f"{values.shape[0]} values for {points.shape[0]} points"
        )
    if not np.all(np.isfinite(values)):
        bad = points[~np.isfinite(values)][0]
        raise EvaluationError(f"integrand non-finite at {bad.tolist()}")
    return values


def _declared_breakpoints(*fns: object) -> tuple[tuple[int, float], ...]:
    """Collect axis-aligned discontinuities declared by the integrand(s)."""
    out: list[tuple[int, float]] = []
    for f in fns:
        decl = getattr(f, "discontinuities", None)
        if decl:
            out.extend((int(ax), float(loc)) for ax, loc in decl)
    return tuple(out)


def q_expectation(
    q: MeasureQ,
    f: Callable | object,
    breakpoints: Iterable[tuple[int, float]] | None = None,
) -> tuple[float, float]:
    """Expectation ``E_Q f(X)`` with a refinement error estimate.

    For the uniform measure the integral is evaluated on a composite
    Gauss-Legendre rule and again on a once-refined rule; the returned value
    is the refined one and the error estimate is the difference of the two.
    Declared breakpoints (pairs ``(axis, location)``) are inserted as panel
    boundaries.  For grid-density measures the fixed rule is exact by
    definition and the error estimate is zero.
    """
    if q.kind == "grid_density":
        values = _eval_batch(f, q.nodes)
        return float(np.dot(q.weights, values)), 0.0

    brk = tuple(breakpoints) if breakpoints is not None else ()
    brk = brk + _declared_breakpoints(f)
    domain = q.domain
    if domain.dim > 3:
        nodes = q.nodes
        values = _eval_batch(f, nodes)
        full = float(np.mean(values))
        half = float(np.mean(values[: nodes.shape[0] // 2]))
        return full, abs(full - half)

    panels, order = _DEFAULT_RESOLUTION[domain.dim]
    coarse_nodes, coarse_w = _tensor_rule(domain, panels, order, brk)
    fine_nodes, fine_w = _tensor_rule(domain, 2 * panels, order, brk)
    vol = domain.volume
    coarse = float(np.dot(coarse_w, _eval_batch(f, coarse_nodes))) / vol
    fine = float(np.dot(fine_w, _eval_batch(f, fine_nodes))) / vol
    return fine, abs(fine - coarse)


def quadrature_rules(
    q: MeasureQ,
    breakpoints: Iterable[tuple[int, float]] = (),
) -> tuple[tuple[np.ndarray, np.ndarray], tuple[np.ndarray, np.ndarray]]:
    """Coarse and refined probability-weighted rules for integrating against Q.

    Returns ((nodes, weights), (refined_nodes, refined_weights)) with weights
    summing to one; the pair supports refinement-difference error estimates.
    Grid-density measures return their fixed rule twice (they are exact by
    construction).
    """
    if q.kind == "grid_density" or q.domain.dim > 3:
        return (q.nodes, q.weights), (q.nodes, q.weights)
    brk = tuple(breakpoints)
    panels, order = _DEFAULT_RESOLUTION[q.domain.dim]
    vol = q.domain.volume
    coarse_nodes, coarse_w = _tensor_rule(q.domain, panels, order, brk)
    fine_nodes, fine_w = _tensor_rule(q.domain, 2 * panels, order, brk)
    return (coarse_nodes, coarse_w / vol), (fine_nodes, fine_w / vol)


@dataclass(frozen=True)
class CovariateDesign:
    """A finite covariate design: the x-side of a dataset.

    Attributes:
        domain: the carrying box.
        kind: "iid" or "partition".
        points: design points, shape (n, dim).
        seed: RNG seed for iid designs (None for deterministic ones).
        cell_volumes: Lebesgue measures of the partition cells (partition only).
    """

    domain: CompactDomain
    kind: str
    points: np.ndarray
    seed: int | None = None
    cell_volumes: np.ndarray | None = None

    def __post_init__(self) -> None:
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        if pts.shape[0] == 0:
            raise InvalidArgumentError("design must contain at least one point")
        if pts.shape[1] != self.domain.dim:
            raise DomainMismatchError(
                f"points have dimension {pts.shape[1]}, domain has {self.domain.dim}"
            )
        if not np.all(self.domain.contains(pts)):
            raise DomainMismatchError("design points fall outside the domain")
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return self.points.shape[0]


def _partition_points(domain: CompactDomain, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Centers of an equal-measure partition of the box into n cells.

    Uses an m x ... x m tensor grid when n is a perfect dim-th power, else
    slabs along the first axis (every cell still has measure volume/n).
    """
    d = domain.dim
    m = round(n ** (1.0 / d))
    cell_vol = domain.volume / n
    if m**d == n:
        axes = []
        for a, b in domain.bounds:
            width = (b - a) / m
            axes.append(a + width * (np.arange(m) + 0.5))
        mesh = np.meshgrid(*axes, indexing="ij")
        points = np.stack([x.ravel() for x in mesh], axis=-1)
    else:
        a0, b0 = domain.bounds[0]
        width = (b0 - a0) / n
        first = a0 + width * (np.arange(n) + 0.5)
        mids = [0.5 * (a + b) for a, b in domain.bounds[1:]]
        points = np.column_stack(
            [first] + [np.full(n, mid) for mid in mids]
        )
    return points, np.full(n, cell_vol)


def make_design(
    q: MeasureQ,
    kind: str,
    n: int,
    seed: int | None = None,
) -> CovariateDesign:
    """Build an n-point covariate design from the measure.

    kind="iid" draws i.i.d. from Q (uniform sampling on the box, or a
    weighted draw of grid nodes for grid densities).  kind="partition" places
    one point at the center of each cell of an equal-measure partition; it is
    only defined for the uniform measure.
    """
    if n <= 0:
        raise InvalidArgumentError(f"design size must be positive, got {n}")
    domain = q.domain
    if kind == "iid":
        if seed is None:
            raise InvalidArgumentError("iid designs require a seed")
        rng = np.random.default_rng(seed)
        if q.kind == "uniform":
            lo = domain.bounds[:, 0]
            hi = domain.bounds[:, 1]
            points = rng.uniform(lo, hi, size=(n, domain.dim))
        else:
            idx = rng.choice(q.nodes.shape[0], size=n, p=q.weights)
            points = q.nodes[idx]
        return CovariateDesign(domain, "iid", points, seed=seed)
    if kind == "partition":
        if q.kind != "uniform":
            raise UnsupportedCombinationError(
                "partition designs are defined only for the uniform measure"
            )
        points, cell_volumes = _partition_points(domain, n)
        return CovariateDesign(
            domain, "partition", points, seed=None, cell_volumes=cell_volumes
        )
    raise InvalidArgumentError(f"unknown design kind {kind!r}")


def empirical_q_average(design: CovariateDesign, f: Callable | object) -> float:
    """Design average (1/n) sum_i f(x_i), with compensated summation."""
    values = _eval_batch(f, design.points)
    return math.fsum(values.tolist()) / design.n


def design_to_csv(design: CovariateDesign, path: str) -> None:
    """Write the design as CSV with columns index, x1, ..., xd."""
    header = ["index"] + [f"x{j + 1}" for j in range(design.domain.dim)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for i, row in enumerate(design.points):
            writer.writerow([i] + [f"{v:.17g}" for v in row])
