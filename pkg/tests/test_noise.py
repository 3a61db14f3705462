"""Tests for noise models: densities, sampling, moments, tail diagnostics."""

import math

import numpy as np
import pytest

from klreg import (
    DivergentIntegralError,
    InvalidArgumentError,
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

LOG_2PI = math.log(2.0 * math.pi)


def _laplace_like_general(scale=1.0):
    """The Laplace shape packaged as a 'general' model (shape-only oracle)."""

    def log_phi(z):
        return -math.log(2.0) - np.abs(z)

    return general_noise(log_phi, lipschitz=1.0, scale=scale, radius=45.0)


class TestLogDensity:
    def test_laplace_at_zero(self):
        # (1/2) e^{-|0|} has log density log(1/2).
        model = laplace_noise(1.0)
        assert log_density(model, np.array([0.0]))[0] == pytest.approx(
            math.log(0.5), abs=1e-15
        )

    def test_laplace_scale_two_at_three(self):
        # (1/4) e^{-3/2}: log density -log 4 - 1.5.
        model = laplace_noise(2.0)
        assert log_density(model, np.array([3.0]))[0] == pytest.approx(
            -math.log(4.0) - 1.5, abs=1e-15
        )

    def test_normal_matches_direct_formula(self):
        model = normal_noise(1.7)
        r = np.linspace(-4.0, 4.0, 17)
        expected = -0.5 * LOG_2PI - math.log(1.7) - 0.5 * (r / 1.7) ** 2
        np.testing.assert_allclose(log_density(model, r), expected, atol=1e-14)

    def test_densities_integrate_to_one(self):
        for model in (normal_noise(1.0), laplace_noise(2.0), _laplace_like_general()):
            r = model.radius * model.scale
            grid = np.linspace(-r, r, 400_001)
            mass = np.trapezoid(np.exp(log_density(model, grid)), grid)
            assert mass == pytest.approx(1.0, abs=1e-8)


class TestSampling:
    def test_laplace_mean_near_zero(self):
        # CLT band: sd of the mean is sqrt(2)/1000 for 10^6 draws.
        draws = sample(laplace_noise(1.0), 10**6, seed=0)
        assert abs(draws.mean()) <= 0.006

    def test_normal_variance_matches_scale(self):
        draws = sample(normal_noise(2.0), 10**6, seed=1)
        assert abs(draws.var() - 4.0) <= 0.03

    def test_laplace_abs_mean_is_scale(self):
        draws = sample(laplace_noise(1.0), 10**6, seed=2)
        assert abs(np.abs(draws).mean() - 1.0) <= 0.005

    def test_general_sampler_matches_shape_moments(self):
        # The tabulated inverse CDF of the Laplace-like general shape must
        # reproduce E|z| = 1 and E z^2 = 2.
        model = _laplace_like_general()
        draws = sample(model, 400_000, seed=3)
        assert abs(np.abs(draws).mean() - 1.0) <= 0.01
        assert abs((draws**2).mean() - 2.0) <= 0.03

    def test_seeded_reproducibility(self):
        model = laplace_noise(1.0)
        np.testing.assert_array_equal(sample(model, 64, 9), sample(model, 64, 9))

    def test_negative_size_rejected(self):
        with pytest.raises(InvalidArgumentError):
            sample(normal_noise(1.0), -1, 0)


class TestLaplaceAbsMoment:
    def test_zero_shift_gives_scale(self):
        assert laplace_abs_moment(0.0, 1.0) == pytest.approx(1.0)
        assert laplace_abs_moment(0.0, 2.5) == pytest.approx(2.5)

    def test_unit_shift_closed_form(self):
        assert laplace_abs_moment(1.0, 1.0) == pytest.approx(
            1.0 + math.exp(-1.0), abs=1e-15
        )

    @pytest.mark.parametrize("delta", [0.0, 0.5, 2.0])
    def test_matches_monte_carlo(self, delta):
        draws = sample(laplace_noise(1.0), 10**7, seed=17)
        mc = np.abs(draws + delta).mean()
        assert laplace_abs_moment(delta, 1.0) == pytest.approx(mc, abs=0.002)

    def test_symmetric_in_delta(self):
        assert laplace_abs_moment(-1.3, 0.7) == pytest.approx(
            laplace_abs_moment(1.3, 0.7)
        )


class TestEntropyConstant:
    def test_laplace_value(self):
        assert phi_entropy_constant(laplace_noise(1.0)) == pytest.approx(
            -math.log(2.0) - 1.0, abs=1e-15
        )

    def test_normal_value(self):
        assert phi_entropy_constant(normal_noise(1.0)) == pytest.approx(
            -0.5 * LOG_2PI - 0.5, abs=1e-15
        )

    def test_quadrature_matches_laplace_closed_form(self):
        # The general-shape quadrature route is an independent oracle for
        # the Laplace constant.
        value = phi_entropy_constant(_laplace_like_general())
        assert value == pytest.approx(-math.log(2.0) - 1.0, abs=1e-8)

    def test_constant_is_scale_free(self):
        assert phi_entropy_constant(laplace_noise(3.0)) == pytest.approx(
            phi_entropy_constant(laplace_noise(1.0))
        )


class TestAbsZMoment:
    def test_laplace_is_one(self):
        assert abs_z_moment(laplace_noise(1.0)) == pytest.approx(1.0, abs=1e-12)

    def test_normal_is_root_two_over_pi(self):
        assert abs_z_moment(normal_noise(1.0)) == pytest.approx(
            math.sqrt(2.0 / math.pi), abs=1e-12
        )

    def test_general_quadrature_route(self):
        assert abs_z_moment(_laplace_like_general()) == pytest.approx(1.0, abs=1e-8)


class TestMeanLogPhiShifted:
    def test_laplace_no_shift_recovers_entropy(self):
        value, err = mean_log_phi_shifted(laplace_noise(1.0), 0.0, 1.0)
        assert value == pytest.approx(-math.log(2.0) - 1.0, abs=1e-10)
        assert err <= 1e-8

    def test_laplace_unit_shift(self):
        # E log phi(z - 1) = -log 2 - E|z - 1| = -log 2 - (1 + e^{-1}).
        value, _ = mean_log_phi_shifted(laplace_noise(1.0), 1.0, 1.0)
        assert value == pytest.approx(
            -math.log(2.0) - (1.0 + math.exp(-1.0)), abs=1e-10
        )

    @pytest.mark.parametrize("delta,sigma", [(0.0, 1.0), (1.4, 0.8), (-2.0, 2.5)])
    def test_normal_closed_form(self, delta, sigma):
        # E log phi((z - delta)/sigma) for z ~ N(0,1):
        # -log(2 pi)/2 - (1 + delta^2)/(2 sigma^2).
        value, _ = mean_log_phi_shifted(normal_noise(1.0), delta, sigma)
        expected = -0.5 * LOG_2PI - (1.0 + delta * delta) / (2.0 * sigma * sigma)
        assert value == pytest.approx(expected, abs=1e-8)

    def test_invalid_sigma_rejected(self):
        with pytest.raises(InvalidArgumentError):
            mean_log_phi_shifted(normal_noise(1.0), 0.0, 0.0)


class TestSubexponentialMgf:
    def test_lambda_zero_is_trivially_bounded(self):
        report = subexponential_mgf_check(
            laplace_noise(1.0), 0.0, 1.0, 0.0, 1.0, 2.0,
            lambda_grid=[0.0], draws=1000, seed=0,
        )
        assert report.estimates[0] == pytest.approx(1.0, abs=1e-12)
        assert report.bounds[0] == pytest.approx(1.0)
        assert report.holds is True

    def test_laplace_bound_holds_on_grid(self):
        report = subexponential_mgf_check(
            laplace_noise(1.0), 0.0, 1.0, 0.0, 1.0, 2.0,
            lambda_grid=[-0.5, -0.2, 0.0, 0.2, 0.5], draws=10**6, seed=0,
        )
        assert report.s == pytest.approx(2.0)
        assert report.holds is True

    def test_normal_bound_holds_on_grid(self):
        report = subexponential_mgf_check(
            normal_noise(1.0), 0.0, 1.0, 0.0, 1.0, 2.0,
            lambda_grid=[-0.5, -0.2, 0.0, 0.2, 0.5], draws=10**6, seed=1,
        )
        assert report.holds is True

    def test_exact_mgf_stays_below_bound_laplace(self):
        # For Laplace, U = |eps| - 1 gives E e^{lambda U} =
        # e^{-lambda}/(1 - lambda); the s = 2 envelope must dominate it.
        for lam in (-0.45, -0.2, 0.2, 0.45):
            exact = math.exp(-lam) / (1.0 - lam)
            bound = math.exp(0.5 * lam * lam * 4.0)
            assert exact <= bound + 1e-12

    def test_lambda_outside_window_rejected(self):
        with pytest.raises(InvalidArgumentError):
            subexponential_mgf_check(
                laplace_noise(1.0), 0.0, 1.0, 0.0, 1.0, 2.0,
                lambda_grid=[0.9], draws=100, seed=0,
            )

    def test_sup_diff_smaller_than_shift_rejected(self):
        with pytest.raises(InvalidArgumentError):
            subexponential_mgf_check(
                laplace_noise(1.0), 1.0, 1.0, 0.5, 1.0, 2.0, draws=100, seed=0
            )


class TestLogDensityIntegrability:
    def test_laplace_log_integral_closed_form(self):
        # int |log((1/2)e^{-|z|})| phi(z) dz = log 2 + E|z| = log 2 + 1.
        report = log_density_integrability_check(laplace_noise(1.0), 1.0)
        assert report.log_integral == pytest.approx(math.log(2.0) + 1.0, abs=1e-6)
        assert report.abs_moment == pytest.approx(1.0, abs=1e-12)
        assert report.stabilized

    def test_normal_abs_moment(self):
        report = log_density_integrability_check(normal_noise(1.0), 1.0)
        assert report.abs_moment == pytest.approx(
            math.sqrt(2.0 / math.pi), abs=1e-6
        )

    def test_c3_scales_linearly_in_sigma(self):
        a = log_density_integrability_check(laplace_noise(1.0), 1.0)
        b = log_density_integrability_check(laplace_noise(1.0), 2.0)
        assert b.c3 == pytest.approx(2.0 * b.log_integral)
        assert a.c3 == pytest.approx(a.log_integral)

    def test_divergent_shape_is_caught(self):
        # A normalized power-law shape has so much tail mass that the
        # |log phi| integral keeps growing past the truncation radius; the
        # stabilization probe must refuse it.
        radius = 40.0
        # c normalizes (1 + |z|)^{-3/2} on [-radius, radius].
        c = 1.0 / (4.0 * (1.0 - (1.0 + radius) ** -0.5))

        def log_phi(z):
            return math.log(c) - 1.5 * np.log1p(np.abs(z))

        model = general_noise(log_phi, lipschitz=1.5, scale=1.0, radius=radius)
        with pytest.raises(DivergentIntegralError):
            log_density_integrability_check(model, 1.0)


class TestGeneralNoiseValidation:
    def test_asymmetric_shape_rejected(self):
        def log_phi(z):
            return -math.log(2.0) - np.abs(z - 0.25)

        with pytest.raises(InvalidArgumentError):
            general_noise(log_phi, lipschitz=1.0)

    def test_unnormalized_shape_rejected(self):
        def log_phi(z):
            return -np.abs(z)  # integrates to 2, not 1

        with pytest.raises(InvalidArgumentError):
            general_noise(log_phi, lipschitz=1.0)
