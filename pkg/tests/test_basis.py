import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.polynomial.legendre import leggauss

from splinecop.basis import (
    BasisSystem,
    basis_integrals,
    build_uniform_basis,
    cdf_matrix,
    design_matrix,
    eval_bspline,
    eval_cdf,
    eval_density,
    uniform_knots,
)


def quadrature_integrals(sys: BasisSystem, order: int = 64) -> np.ndarray:
    """Independent oracle: per-span Gauss-Legendre integration of each basis."""
    nodes, wts = leggauss(order)
    breaks = sys.span_breaks()
    total = np.zeros(sys.count)
    for a, b in zip(breaks[:-1], breaks[1:]):
        pts = 0.5 * (a + b) + 0.5 * (b - a) * nodes
        total += design_matrix(sys, pts).T @ wts * 0.5 * (b - a)
    return total


def naive_cox_de_boor(knots, i, d, x):
    """Textbook recursive evaluation, used as an oracle for design_matrix."""
    if d == 0:
        if knots[i] <= x < knots[i + 1]:
            return 1.0
        # closed right end of the very last nonempty interval
        if x == knots[-1] and knots[i] < knots[i + 1] == knots[-1]:
            return 1.0
        return 0.0
    left = 0.0
    if knots[i + d] != knots[i]:
        left = (x - knots[i]) / (knots[i + d] - knots[i]) * naive_cox_de_boor(knots, i, d - 1, x)
    right = 0.0
    if knots[i + d + 1] != knots[i + 1]:
        right = (knots[i + d + 1] - x) / (knots[i + d + 1] - knots[i + 1]) * \
            naive_cox_de_boor(knots, i + 1, d - 1, x)
    return left + right


class TestKnots:
    def test_bernstein_layout(self):
        assert np.array_equal(uniform_knots(3, 4), [0, 0, 0, 0, 1, 1, 1, 1])

    def test_single_interior_knot(self):
        sys = build_uniform_basis(3, 5)
        assert np.array_equal(sys.knots, [0, 0, 0, 0, 0.5, 1, 1, 1, 1])

    def test_clamping_and_spacing(self):
        for d in (1, 2, 3, 4):
            for m in range(d + 1, d + 9):
                sys = build_uniform_basis(d, m)
                assert len(sys.knots) == m + d + 1
                assert np.all(sys.knots[: d + 1] == 0.0)
                assert np.all(sys.knots[-(d + 1):] == 1.0)
                interior = sys.knots[d + 1 : m]
                assert np.allclose(np.diff(sys.span_breaks()), 1.0 / sys.spans)
                assert np.all((interior > 0) & (interior < 1))

    def test_rejects_bad_dimensions(self):
        with pytest.raises(ValueError):
            build_uniform_basis(3, 3)
        with pytest.raises(ValueError):
            build_uniform_basis(0, 4)
        with pytest.raises(ValueError):
            build_uniform_basis(31, 40)


class TestIntegralWeights:
    def test_single_knot_weights_match_column_sums_fixture(self):
        assert np.array_equal(build_uniform_basis(3, 5).weights,
                              [0.125, 0.25, 0.25, 0.25, 0.125])

    def test_bernstein_weights(self):
        assert np.array_equal(build_uniform_basis(3, 4).weights, [0.25] * 4)

    def test_quadratic_weights(self):
        expected = np.array([1, 2, 2, 1]) / 6.0
        assert np.allclose(build_uniform_basis(2, 4).weights, expected, atol=1e-15)

    def test_closed_form_equals_quadrature(self):
        for d in (1, 2, 3, 4):
            for m in range(d + 1, d + 9):
                sys = build_uniform_basis(d, m)
                assert np.max(np.abs(sys.weights - quadrature_integrals(sys))) <= 1e-12
                assert abs(sys.weights.sum() - 1.0) <= 1e-12
                assert np.all(sys.weights > 0)

    def test_basis_integrals_returns_weights(self):
        sys = build_uniform_basis(3, 7)
        assert np.array_equal(basis_integrals(sys), sys.weights)


class TestEvaluation:
    def test_bernstein_midpoint(self):
        sys = build_uniform_basis(3, 4)
        assert eval_bspline(sys, 2, 0.5) == pytest.approx(0.375, abs=1e-15)

    def test_linear_hat(self):
        sys = build_uniform_basis(1, 2)
        assert eval_bspline(sys, 1, 0.25) == pytest.approx(0.75, abs=1e-15)

    def test_matches_naive_recursion(self):
        rng = np.random.default_rng(42)
        for d, m in ((1, 2), (2, 5), (3, 4), (3, 8), (4, 9)):
            sys = build_uniform_basis(d, m)
            xs = np.append(rng.uniform(size=40), [0.0, 1.0, 0.5])
            dm = design_matrix(sys, xs)
            for t, x in enumerate(xs):
                for k in range(m):
                    ref = naive_cox_de_boor(sys.knots, k, d, x)
                    assert dm[t, k] == pytest.approx(ref, abs=1e-13)

    def test_partition_of_unity(self):
        xs = np.linspace(0, 1, 1001)
        for d in (1, 2, 3, 4):
            for m in range(d + 1, d + 9):
                sums = design_matrix(build_uniform_basis(d, m), xs).sum(axis=1)
                assert np.max(np.abs(sums - 1.0)) <= 1e-12

    def test_right_endpoint_convention(self):
        for d, m in ((1, 3), (3, 6), (4, 5)):
            sys = build_uniform_basis(d, m)
            row = design_matrix(sys, [1.0])[0]
            assert row[-1] == 1.0
            assert np.all(row[:-1] == 0.0)

    def test_local_support(self):
        sys = build_uniform_basis(3, 8)
        xs = np.linspace(0, 1, 601)
        dm = design_matrix(sys, xs)
        for k in range(sys.count):
            lo, hi = sys.knots[k], sys.knots[k + sys.degree + 1]
            outside = (xs < lo) | (xs > hi)
            assert np.all(dm[outside, k] == 0.0)

    def test_rejects_out_of_range(self):
        sys = build_uniform_basis(2, 4)
        with pytest.raises(ValueError):
            design_matrix(sys, [1.2])
        with pytest.raises(IndexError):
            eval_bspline(sys, 0, 0.5)
        with pytest.raises(IndexError):
            eval_bspline(sys, 5, 0.5)

    @given(st.integers(1, 4), st.integers(0, 7),
           st.floats(0.0, 1.0, allow_nan=False))
    @settings(max_examples=60, deadline=None)
    def test_partition_of_unity_property(self, d, extra, x):
        sys = build_uniform_basis(d, d + 1 + extra)
        row = design_matrix(sys, [x])[0]
        assert row.min() >= 0.0
        assert abs(row.sum() - 1.0) <= 1e-12


class TestNormalizedDensities:
    def test_density_examples(self):
        assert eval_density(build_uniform_basis(1, 2), 1, 0.0) == pytest.approx(2.0)
        assert eval_density(build_uniform_basis(3, 4), 1, 0.0) == pytest.approx(4.0)

    def test_weighted_density_mixture_is_one(self):
        sys = build_uniform_basis(3, 6)
        xs = np.linspace(0, 1, 301)
        dens = design_matrix(sys, xs) / sys.weights
        assert np.max(np.abs(dens @ sys.weights - 1.0)) <= 1e-12

    def test_cdf_examples(self):
        assert eval_cdf(build_uniform_basis(1, 2), 1, 0.5) == pytest.approx(0.75, abs=1e-13)
        # integral of 4(1-x)^3 from 0 to 0.5 is 1 - 0.5^4
        assert eval_cdf(build_uniform_basis(3, 4), 1, 0.5) == pytest.approx(0.9375, abs=1e-13)

    def test_cdf_boundaries_and_monotonicity(self):
        xs = np.linspace(0, 1, 1001)
        for d, m in ((1, 2), (2, 4), (3, 5), (4, 8)):
            sys = build_uniform_basis(d, m)
            cm = cdf_matrix(sys, xs)
            assert np.max(np.abs(cm[0])) <= 1e-13
            assert np.max(np.abs(cm[-1] - 1.0)) <= 1e-12
            assert np.all(np.diff(cm, axis=0) >= -1e-13)

    def test_cdf_against_quadrature(self):
        # integrate [0, x] in pieces split at the knots (the integrand is only
        # piecewise polynomial), 64-point Gauss-Legendre per piece
        sys = build_uniform_basis(3, 5)
        nodes, wts = leggauss(64)
        breaks = sys.span_breaks()
        for k in (1, 3, 5):
            for x in (0.2, 0.5, 0.77):
                cuts = np.append(breaks[breaks < x], x)
                ref = 0.0
                for a, b in zip(cuts[:-1], cuts[1:]):
                    pts = 0.5 * (a + b) + 0.5 * (b - a) * nodes
                    ref += (design_matrix(sys, pts)[:, k - 1] @ wts) * 0.5 * (b - a)
                ref /= sys.weights[k - 1]
                assert eval_cdf(sys, k, x) == pytest.approx(ref, abs=1e-12)
