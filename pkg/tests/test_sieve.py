"""Tests for sieve thresholds, membership checks, and prior complement mass."""

import math

import numpy as np
import pytest

from klreg import (
    ClosedForm,
    CosineBasis,
    GpSpec,
    InvalidArgumentError,
    SigmaPrior,
    Theta,
    prior_sieve_complement_mass,
    sieve_member,
    sieve_thresholds,
    sigma_prior_band_mass,
    unit_interval,
)

DOM = unit_interval()


def _expansion(*coeffs):
    basis = CosineBasis.first_k(DOM, len(coeffs))
    return basis.function_from_coefficients(np.array(coeffs, dtype=float))


class TestThresholds:
    def test_threshold_arithmetic(self):
        """T = exp((beta n)^{1/4}): beta=1, n=16 and beta=16, n=1 give e^2."""
        spec = sieve_thresholds(1.0, 16)
        assert spec.threshold == pytest.approx(math.exp(2.0), rel=1e-12)
        assert spec.sigma_lo == pytest.approx(math.exp(-2.0), rel=1e-12)
        assert spec.sigma_hi == spec.threshold
        swapped = sieve_thresholds(16.0, 1)
        assert swapped.threshold == pytest.approx(spec.threshold, rel=1e-12)

    def test_threshold_grows_with_n(self):
        ts = [sieve_thresholds(2.0, n).threshold for n in (1, 4, 16, 64)]
        assert all(b > a for a, b in zip(ts, ts[1:]))

    def test_invalid_arguments(self):
        with pytest.raises(InvalidArgumentError):
            sieve_thresholds(0.0, 10)
        with pytest.raises(InvalidArgumentError):
            sieve_thresholds(1.0, 0)


class TestMembership:
    def test_scale_band_controls_membership(self):
        """Flat eta with sup 2: in the beta=1, n=16 sieve (T = e^2 ~ 7.39)
        the scale 1 is inside the band while 8 falls outside."""
        spec = sieve_thresholds(1.0, 16)
        eta = _expansion(2.0)
        assert sieve_member(Theta(eta, 1.0), spec).member is True
        report = sieve_member(Theta(eta, 8.0), spec)
        assert report.member is False
        failed = {c.name for c in report.checks if c.passed is False}
        assert failed == {"sigma_band"}

    def test_derivative_bound_controls_membership(self):
        """cos(pi x) has certified derivative bound pi > e, so it exceeds
        the beta=1, n=1 sieve even though its sup norm 1 is fine."""
        spec = sieve_thresholds(1.0, 1)
        eta = _expansion(0.0, 1.0)
        report = sieve_member(Theta(eta, 1.0), spec)
        assert report.member is False
        failed = {c.name for c in report.checks if c.passed is False}
        assert failed == {"eta_partial_0_sup_norm"}

    def test_zero_function_with_unit_scale_always_member(self):
        eta = _expansion(0.0)
        for beta, n in ((0.5, 1), (1.0, 1), (1.0, 100), (6.0, 10_000)):
            spec = sieve_thresholds(beta, n)
            assert sieve_member(Theta(eta, 1.0), spec).member is True

    def test_nondifferentiable_eta_is_indeterminate(self):
        """A step function passes the sup checks but the derivative check
        cannot be evaluated, so membership is None, not a hard failure."""
        step = ClosedForm(DOM, "step", {"breakpoints": [0.5], "levels": [0.0, 1.0]})
        spec = sieve_thresholds(1.0, 16)
        report = sieve_member(Theta(step, 1.0), spec)
        assert report.member is None
        unavailable = [c for c in report.checks if c.passed is None]
        assert [c.name for c in unavailable] == ["eta_partial_0_sup_norm"]

    def test_definite_failure_beats_indeterminacy(self):
        step = ClosedForm(DOM, "step", {"breakpoints": [0.5], "levels": [0.0, 1.0]})
        spec = sieve_thresholds(1.0, 16)
        report = sieve_member(Theta(step, 50.0), spec)
        assert report.member is False

    def test_membership_nested_in_n(self):
        """Sieves grow with n: once a model is in, it stays in."""
        rng = np.random.default_rng(17)
        specs = [sieve_thresholds(2.0, n) for n in (1, 4, 16, 64)]
        for _ in range(100):
            eta = _expansion(*(1.5 * rng.standard_normal(3)))
            theta = Theta(eta, float(rng.lognormal(0.0, 1.2)))
            flags = [sieve_member(theta, spec).member for spec in specs]
            assert None not in flags
            for earlier, later in zip(flags, flags[1:]):
                assert later or not earlier


class TestComplementMass:
    GP = GpSpec(unit_interval(), amplitude=1.0, lengthscale=0.5)
    PRIOR = SigmaPrior("lognormal", (0.0, 1.0))

    def test_estimates_nonincreasing_along_schedule(self):
        """With a shared seed the failure sets shrink as thresholds grow."""
        estimates = [
            prior_sieve_complement_mass(
                self.GP, 32, self.PRIOR, 0.1, n, draws=4000, seed=5, feature_seed=2
            ).estimate
            for n in (1, 4, 16)
        ]
        assert estimates[0] >= estimates[1] >= estimates[2]
        assert estimates[0] > 0.0

    def test_sigma_component_matches_band_mass(self):
        """The scale-band failure fraction is a binomial draw around
        1 - (exact band mass)."""
        report = prior_sieve_complement_mass(
            self.GP, 16, self.PRIOR, 1.0, 1, draws=20_000, seed=9, feature_seed=2
        )
        exact, _ = sigma_prior_band_mass(self.PRIOR, 1, 1.0)
        p = 1.0 - exact
        se = math.sqrt(p * (1.0 - p) / 20_000)
        assert abs(report.component_fractions["sigma_band"] - p) <= 2.0 * se

    def test_all_pass_reports_standard_upper_bound(self):
        report = prior_sieve_complement_mass(
            self.GP, 8, self.PRIOR, 50.0, 10_000, draws=1000, seed=3, feature_seed=2
        )
        assert report.estimate == 0.0
        assert report.upper_95 == pytest.approx(3.0 / 1000.0)

    def test_component_keys_cover_all_checks(self):
        report = prior_sieve_complement_mass(
            self.GP, 8, self.PRIOR, 1.0, 4, draws=500, seed=1, feature_seed=2
        )
        assert set(report.component_fractions) == {
            "eta_sup_norm",
            "eta_partial_0_sup_norm",
            "sigma_band",
        }

    def test_invalid_draws_rejected(self):
        with pytest.raises(InvalidArgumentError):
            prior_sieve_complement_mass(self.GP, 8, self.PRIOR, 1.0, 4, draws=0)
