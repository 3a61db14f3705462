"""Tests for covariate domains, measures, quadrature, and designs."""

import math

import numpy as np
import pytest

from klreg import (
    ClosedForm,
    CompactDomain,
    InvalidArgumentError,
    UnsupportedCombinationError,
    design_to_csv,
    empirical_q_average,
    grid_density_measure,
    make_design,
    q_expectation,
    uniform_measure,
    unit_interval,
)


class TestCompactDomain:
    def test_unit_interval_shape(self):
        dom = unit_interval()
        assert dom.dim == 1
        assert dom.volume == pytest.approx(1.0)
        np.testing.assert_allclose(dom.bounds, [[0.0, 1.0]])

    def test_volume_is_product_of_side_lengths(self):
        dom = CompactDomain(np.array([[0.0, 2.0], [-1.0, 3.0]]))
        assert dom.volume == pytest.approx(8.0)

    def test_contains_boundary_points(self):
        dom = CompactDomain(np.array([[0.0, 1.0], [0.0, 1.0]]))
        inside = dom.contains(np.array([[0.0, 1.0], [0.5, 0.5]]))
        outside = dom.contains(np.array([[1.0001, 0.5]]))
        assert inside.all()
        assert not outside.any()

    def test_degenerate_bounds_rejected(self):
        with pytest.raises(InvalidArgumentError):
            CompactDomain(np.array([[1.0, 1.0]]))
        with pytest.raises(InvalidArgumentError):
            CompactDomain(np.array([[2.0, 1.0]]))


class TestUniformMeasure:
    def test_weights_form_probability_distribution(self):
        for dom in (unit_interval(), CompactDomain(np.array([[0.0, 1.0]] * 2))):
            q = uniform_measure(dom)
            assert q.weights.shape[0] == q.nodes.shape[0]
            assert np.all(q.weights > 0)
            assert math.fsum(q.weights.tolist()) == pytest.approx(1.0, abs=1e-12)

    def test_linear_function_averages_to_half(self):
        # E[X] for X uniform on [0, 1] is exactly 1/2.
        q = uniform_measure(unit_interval())
        value, err = q_expectation(q, lambda x: x[:, 0])
        assert value == pytest.approx(0.5, abs=1e-10)
        assert err <= 1e-10

    def test_constant_function_returns_constant(self):
        dom = CompactDomain(np.array([[0.0, 3.0], [1.0, 2.0]]))
        q = uniform_measure(dom)
        value, _ = q_expectation(q, lambda x: np.full(x.shape[0], 4.25))
        assert value == pytest.approx(4.25, abs=1e-12)

    def test_step_function_with_declared_breakpoint_is_exact(self):
        # The mean of a unit step at 0.5 on [0, 1] is exactly 1/2 when the
        # quadrature panels are split at the declared discontinuity.
        dom = unit_interval()
        q = uniform_measure(dom)
        step = ClosedForm(
            dom, "step", {"breakpoints": [0.5], "levels": [0.0, 1.0]}
        )
        value, err = q_expectation(q, lambda x: np.abs(step.evaluate(x)), step.discontinuities)
        assert value == pytest.approx(0.5, abs=1e-12)
        assert err <= 1e-12

    def test_quadratic_in_two_dimensions(self):
        # E[X1^2 + X2] over the unit square = 1/3 + 1/2.
        dom = CompactDomain(np.array([[0.0, 1.0], [0.0, 1.0]]))
        q = uniform_measure(dom)
        value, _ = q_expectation(q, lambda x: x[:, 0] ** 2 + x[:, 1])
        assert value == pytest.approx(1.0 / 3.0 + 0.5, abs=1e-10)


class TestGridDensityMeasure:
    def test_normalizes_tabulated_density(self):
        dom = unit_interval()
        base = uniform_measure(dom)
        density = 1.0 + base.nodes[:, 0]  # un-normalized tilt
        # With the base rule's own weights the tilted expectation is exact:
        # E[X] under density 2(1+x)/3 on [0,1] is (1/2 + 1/3) * 2/3 = 5/9.
        q = grid_density_measure(dom, base.nodes, density, base_weights=base.weights)
        assert math.fsum(q.weights.tolist()) == pytest.approx(1.0, abs=1e-9)
        value, _ = q_expectation(q, lambda x: x[:, 0])
        assert value == pytest.approx(5.0 / 9.0, abs=1e-10)

    def test_equal_weight_fallback_is_first_order(self):
        # Without base weights the nodes are weighted equally, which is
        # documented as approximate; the tilted mean is still close.
        dom = unit_interval()
        base = uniform_measure(dom)
        q = grid_density_measure(dom, base.nodes, 1.0 + base.nodes[:, 0])
        value, _ = q_expectation(q, lambda x: x[:, 0])
        assert value == pytest.approx(5.0 / 9.0, abs=5e-3)

    def test_negative_density_rejected(self):
        dom = unit_interval()
        base = uniform_measure(dom)
        with pytest.raises(InvalidArgumentError):
            grid_density_measure(dom, base.nodes, base.nodes[:, 0] - 0.5)


class TestPartitionDesign:
    def test_two_dim_nine_points_is_grid_of_cell_centers(self):
        # A nine-point equal-measure partition of the unit square is the
        # 3 x 3 grid of cell centers, each cell with area 1/9.
        dom = CompactDomain(np.array([[0.0, 1.0], [0.0, 1.0]]))
        q = uniform_measure(dom)
        design = make_design(q, "partition", 9)
        centers = {(round(a, 12), round(b, 12)) for a, b in design.points}
        expected = {
            (round((2 * i + 1) / 6, 12), round((2 * j + 1) / 6, 12))
            for i in range(3)
            for j in range(3)
        }
        assert centers == expected
        np.testing.assert_allclose(design.cell_volumes, np.full(9, 1.0 / 9.0))

    def test_average_of_identity_on_four_cells(self):
        # Cell centers on [0,1] with n=4 are {1/8, 3/8, 5/8, 7/8}; their
        # mean is exactly 1/2.
        q = uniform_measure(unit_interval())
        design = make_design(q, "partition", 4)
        np.testing.assert_allclose(
            np.sort(design.points[:, 0]), [0.125, 0.375, 0.625, 0.875]
        )
        assert empirical_q_average(design, lambda x: x[:, 0]) == pytest.approx(0.5)

    def test_quadratic_average_converges_at_rate_one_over_n(self):
        # The partition average of x^2 approaches 1/3 with O(1/n) error.
        q = uniform_measure(unit_interval())
        for n in (16, 64, 256):
            design = make_design(q, "partition", n)
            value = empirical_q_average(design, lambda x: x[:, 0] ** 2)
            assert abs(value - 1.0 / 3.0) <= 1.0 / n

    def test_partition_of_grid_density_unsupported(self):
        dom = unit_interval()
        base = uniform_measure(dom)
        q = grid_density_measure(dom, base.nodes, 1.0 + base.nodes[:, 0])
        with pytest.raises(UnsupportedCombinationError):
            make_design(q, "partition", 4)


class TestIidDesign:
    def test_same_seed_reproduces_points(self):
        q = uniform_measure(unit_interval())
        a = make_design(q, "iid", 50, seed=123)
        b = make_design(q, "iid", 50, seed=123)
        np.testing.assert_array_equal(a.points, b.points)

    def test_different_seeds_differ(self):
        q = uniform_measure(unit_interval())
        a = make_design(q, "iid", 50, seed=1)
        b = make_design(q, "iid", 50, seed=2)
        assert not np.array_equal(a.points, b.points)

    def test_iid_requires_seed(self):
        q = uniform_measure(unit_interval())
        with pytest.raises(InvalidArgumentError):
            make_design(q, "iid", 10)

    def test_points_stay_inside_domain(self):
        dom = CompactDomain(np.array([[-2.0, -1.0], [3.0, 5.0]]))
        q = uniform_measure(dom)
        design = make_design(q, "iid", 400, seed=7)
        assert dom.contains(design.points).all()

    def test_mean_matches_uniform_law(self):
        # Sample mean of 10^5 uniform draws on [0, 1] is within a 4-sigma
        # CLT band of 1/2 (sd = 1/sqrt(12 n)).
        q = uniform_measure(unit_interval())
        design = make_design(q, "iid", 100_000, seed=11)
        value = empirical_q_average(design, lambda x: x[:, 0])
        assert abs(value - 0.5) <= 4.0 / math.sqrt(12.0 * design.n)


class TestDesignCsv:
    def test_round_trip_row_count_and_header(self, tmp_path):
        q = uniform_measure(CompactDomain(np.array([[0.0, 1.0], [0.0, 1.0]])))
        design = make_design(q, "iid", 13, seed=3)
        path = tmp_path / "design.csv"
        design_to_csv(design, str(path))
        lines = path.read_text().strip().splitlines()
        assert lines[0] == "index,x1,x2"
        assert len(lines) == 14
        first = lines[1].split(",")
        assert float(first[1]) == pytest.approx(design.points[0, 0], abs=0)
