"""Log-likelihood-ratio traces and the equipartition diagnostic.

For a fixed candidate theta, the normalized log-likelihood ratio against the
truth converges almost surely to minus the KL divergence rate.  This module
simulates datasets, evaluates the ratio with compensated summation, and
produces (n, replicate) traces of the gap

    gap = (1/n) log R_n(theta) + rate(theta),

which should shrink like 1/sqrt(n).  Within a replicate the datasets for
successive n are prefixes of a single seeded noise stream (and covariate
stream, for i.i.d. designs), so traces are comparable across n.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .domain import CovariateDesign, MeasureQ, make_design
from .errors import InvalidArgumentError, UnsupportedCombinationError
from .kl_rate import Theta, TrueModel, kl_rate
from .noise import NoiseModel, laplace_noise, log_density, normal_noise, sample

__all__ = [
    "Dataset",
    "EquipartitionTrace",
    "simulate",
    "log_ratio",
    "log_ratio_increments",
    "equipartition_trace",
    "uniform_gap",
]


@dataclass(frozen=True)
class Dataset:
    """Covariates, responses, and the model that generated them."""

    design: CovariateDesign
    y: np.ndarray
    truth: TrueModel
    seed: int | None = None

    def __post_init__(self) -> None:
        y = np.asarray(self.y, dtype=float).reshape(-1)
        if y.shape[0] != self.design.n:
            raise InvalidArgumentError("y length must match the design size")
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.design.n

    def prefix(self, n: int) -> "Dataset":
        if not 0 < n <= self.n:
            raise InvalidArgumentError(f"prefix length {n} outside 1..{self.n}")
        sub = CovariateDesign(
            self.design.domain,
            self.design.kind,
            self.design.points[:n],
            seed=self.design.seed,
        )
        return Dataset(sub, self.y[:n], self.truth, seed=self.seed)


def simulate(
    truth: TrueModel,
    design: CovariateDesign,
    seed: int | np.random.Generator,
) -> Dataset:
    """y_i = eta0(x_i) + eps_i with eps drawn from the true noise."""
    eps = sample(truth.noise, design.n, seed)
    y = truth.eta0.evaluate(design.points) + eps
    return Dataset(design, y, truth, seed=seed if isinstance(seed, int) else None)


def _postulated_model(
    family: str,
    sigma: float,
    truth: TrueModel,
    postulated_phi: NoiseModel | None,
) -> NoiseModel:
    if family == "normal":
        return normal_noise(sigma)
    if family == "laplace":
        return laplace_noise(sigma)
    if family == "general":
        base = postulated_phi if postulated_phi is not None else truth.noise
        return base.with_scale(sigma)
    raise InvalidArgumentError(f"unknown family {family!r}")


def log_ratio_increments(
    dataset: Dataset,
    theta: Theta,
    family: str,
    postulated_phi: NoiseModel | None = None,
) -> np.ndarray:
    """Per-observation log f_theta - log f_truth, in dataset order."""
    post = _postulated_model(family, theta.sigma, dataset.truth, postulated_phi)
    x = dataset.design.points
    post_part = log_density(post, dataset.y - theta.eta.evaluate(x))
    true_part = log_density(
        dataset.truth.noise, dataset.y - dataset.truth.eta0.evaluate(x)
    )
    return post_part - true_part


def log_ratio(
    dataset: Dataset,
    theta: Theta,
    family: str,
    postulated_phi: NoiseModel | None = None,
) -> float:
    """log R_n(theta): compensated sum of the per-observation increments."""
    increments = log_ratio_increments(dataset, theta, family, postulated_phi)
    return math.fsum(increments.tolist())


@dataclass(frozen=True)
class EquipartitionTrace:
    """Long-format trace of the equipartition gap.

    Parallel arrays indexed by row: sample size, replicate id, normalized
    log-ratio statistic, target (-rate), and gap (statistic - target).
    """

    family: str
    rate: float
    n: np.ndarray
    replicate: np.ndarray
    statistic: np.ndarray
    target: np.ndarray
    gap: np.ndarray

    def gaps_at(self, n: int) -> np.ndarray:
        return self.gap[self.n == n]

    def to_csv(self, path: str) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["family", "n", "replicate", "statistic", "target", "gap"]
            )
            for i in range(self.n.shape[0]):
                writer.writerow(
                    [
                        self.family,
                        int(self.n[i]),
                        int(self.replicate[i]),
                        f"{self.statistic[i]:.17g}",
                        f"{self.target[i]:.17g}",
                        f"{self.gap[i]:.17g}",
                    ]
                )


def _replicate_stream(
    truth: TrueModel,
    q: MeasureQ,
    design_kind: str,
    max_n: int,
    seed: int,
    replicate: int,
) -> tuple[np.ndarray | None, np.ndarray]:
    """Covariate stream (iid only) and noise stream for one replicate."""
    noise_rng = np.random.default_rng(np.random.SeedSequence((seed, replicate, 0)))
    eps = sample(truth.noise, max_n, noise_rng)
    if design_kind == "iid":
        x_rng = np.random.default_rng(np.random.SeedSequence((seed, replicate, 1)))
        if q.kind == "uniform":
            lo = q.domain.bounds[:, 0]
            hi = q.domain.bounds[:, 1]
            xs = x_rng.uniform(lo, hi, size=(max_n, q.domain.dim))
        else:
            idx = x_rng.choice(q.nodes.shape[0], size=max_n, p=q.weights)
            xs = q.nodes[idx]
        return xs, eps
    if design_kind == "partition":
        return None, eps
    raise UnsupportedCombinationError(f"unknown design kind {design_kind!r}")


def _dataset_at(
    truth: TrueModel,
    q: MeasureQ,
    design_kind: str,
    n: int,
    xs: np.ndarray | None,
    eps: np.ndarray,
) -> Dataset:
    if design_kind == "iid":
        design = CovariateDesign(q.domain, "iid", xs[:n])
    else:
        design = make_design(q, "partition", n)
    y = truth.eta0.evaluate(design.points) + eps[:n]
    return Dataset(design, y, truth)


def equipartition_trace(
    theta: Theta,
    family: str,
    truth: TrueModel,
    q: MeasureQ,
    n_schedule: Sequence[int],
    replicates: int,
    seed: int,
    design_kind: str = "iid",
    postulated_phi: NoiseModel | None = None,
    rate: float | None = None,
) -> EquipartitionTrace:
    """Gap trace over an n-schedule with prefix-consistent replicates.

    The target is -rate(theta); pass ``rate`` to reuse a precomputed value,
    otherwise it is evaluated once here.
    """
    schedule = sorted(set(int(n) for n in n_schedule))
    if not schedule or schedule[0] <= 0:
        raise InvalidArgumentError("n_schedule must contain positive sizes")
    if replicates <= 0:
        raise InvalidArgumentError("replicates must be positive")
    if rate is None:
        rate = kl_rate(theta, family, truth, q, postulated_phi=postulated_phi).rate
    max_n = schedule[-1]

    rows_n: list[int] = []
    rows_rep: list[int] = []
    rows_stat: list[float] = []
    for rep in range(replicates):
        xs, eps = _replicate_stream(truth, q, design_kind, max_n, seed, rep)
        for n in schedule:
            ds = _dataset_at(truth, q, design_kind, n, xs, eps)
            stat = log_ratio(ds, theta, family, postulated_phi) / n
            rows_n.append(n)
            rows_rep.append(rep)
            rows_stat.append(stat)

    n_arr = np.array(rows_n, dtype=int)
    stat_arr = np.array(rows_stat, dtype=float)
    target = np.full(n_arr.shape[0], -rate)
    return EquipartitionTrace(
        family=family,
        rate=rate,
        n=n_arr,
        replicate=np.array(rows_rep, dtype=int),
        statistic=stat_arr,
        target=target,
        gap=stat_arr - target,
    )


def uniform_gap(
    thetas: Sequence[Theta],
    family: str,
    truth: TrueModel,
    q: MeasureQ,
    n: int,
    replicates: int,
    seed: int,
    design_kind: str = "iid",
    postulated_phi: NoiseModel | None = None,
) -> np.ndarray:
    """Per-replicate sup over a finite theta grid of |(1/n) log R_n + rate|.

    The sup over a compact model class is probed on the supplied grid; all
    grid members share each replicate's dataset.
    """
    if not thetas:
        raise InvalidArgumentError("theta grid must be nonempty")
    rates = np.array(
        [
            kl_rate(t, family, truth, q, postulated_phi=postulated_phi).rate
            for t in thetas
        ]
    )
    sups = np.empty(replicates)
    for rep in range(replicates):
        xs, eps = _replicate_stream(truth, q, design_kind, n, seed, rep)
        ds = _dataset_at(truth, q, design_kind, n, xs, eps)
        gaps = [
            log_ratio(ds, t, family, postulated_phi) / n + r
            for t, r in zip(thetas, rates)
        ]
        sups[rep] = float(np.max(np.abs(gaps)))
    return sups
