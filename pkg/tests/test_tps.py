import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatpca import (
    ConditioningError,
    SpatialDomain,
    build_penalty,
    evaluate,
    solve_coefficients,
)
from spatpca.tps import kernel

from checks import natural_spline_energy


class TestKernel:
    def test_one_dimensional_is_cubic(self):
        # closed form r^3 / 12
        assert kernel(2.0, 1) == pytest.approx(8.0 / 12.0, rel=1e-15)
        assert kernel(1.0, 1) == pytest.approx(1.0 / 12.0, rel=1e-15)

    def test_two_dimensional_log_form(self):
        r = 1.7
        assert kernel(r, 2) == pytest.approx(r * r * math.log(r) / (16 * math.pi), rel=1e-14)

    def test_three_dimensional_is_negative_linear(self):
        # gamma(-1/2) = -2 sqrt(pi) makes the coefficient -1/(8 pi)
        r = 2.5
        assert kernel(r, 3) == pytest.approx(-r / (8 * math.pi), rel=1e-13)

    def test_zero_distance_maps_to_zero(self):
        for d in (1, 2, 3):
            assert kernel(0.0, d) == 0.0
        arr = kernel(np.array([0.0, 1.0, 0.0]), 2)
        assert arr[0] == 0.0 and arr[2] == 0.0

    def test_array_shape_and_scalar_type(self):
        out = kernel(np.ones((3, 4)), 2)
        assert out.shape == (3, 4)
        assert isinstance(kernel(1.0, 1), float)

    def test_rejects_bad_dimension(self):
        with pytest.raises(ValueError):
            kernel(1.0, 4)


class TestSpatialDomain:
    def test_one_dimensional_array_becomes_column(self):
        dom = SpatialDomain(np.array([0.0, 1.0, 2.0, 3.0]))
        assert dom.locations.shape == (4, 1)
        assert dom.p == 4 and dom.d == 1

    def test_rejects_too_few_sites(self):
        with pytest.raises(ValueError):
            SpatialDomain(np.array([[0.0], [1.0]]))

    def test_rejects_non_finite(self):
        with pytest.raises(ValueError):
            SpatialDomain(np.array([0.0, 1.0, np.nan, 3.0]))

    def test_rejects_high_dimension(self):
        with pytest.raises(ValueError):
            SpatialDomain(np.zeros((10, 4)) + np.arange(10)[:, None])

    def test_locations_read_only(self):
        dom = SpatialDomain(np.array([0.0, 1.0, 2.0, 3.0]))
        with pytest.raises(ValueError):
            dom.locations[0, 0] = 9.9


class TestBuildPenalty:
    def test_duplicate_sites_name_the_pair(self):
        dom = SpatialDomain(np.array([0.0, 1.0, 1.0, 3.0]))
        with pytest.raises(ConditioningError) as err:
            build_penalty(dom)
        assert err.value.pair == (1, 2)

    def test_omega_symmetric_psd(self, penalty_1d):
        omega = penalty_1d.omega
        assert np.abs(omega - omega.T).max() == 0.0
        assert np.linalg.eigvalsh(omega)[0] >= -1e-10

    def test_omega_annihilates_affine_fields(self, penalty_1d, penalty_2d):
        for pen in (penalty_1d, penalty_2d):
            assert np.abs(pen.omega @ pen.e).max() < 1e-8

    def test_energy_matches_radial_coefficients(self, penalty_1d):
        # v' omega v == a' G a for the interpolating coefficients a
        rng = np.random.default_rng(0)
        for _ in range(20):
            v = rng.standard_normal(penalty_1d.domain.p)
            coeffs = solve_coefficients(penalty_1d, v)
            lhs = float(v @ penalty_1d.omega @ v)
            rhs = float(coeffs.a @ penalty_1d.g @ coeffs.a)
            assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-10)

    def test_energy_matches_natural_cubic_spline(self, domain_1d, penalty_1d):
        # in 1-d the minimum-energy interpolant is the natural cubic spline,
        # so the quadratic form must equal its exact bending energy
        x = domain_1d.locations[:, 0]
        rng = np.random.default_rng(1)
        for _ in range(5):
            v = rng.standard_normal(x.size)
            expected = natural_spline_energy(x, v)
            got = float(v @ penalty_1d.omega @ v)
            assert got == pytest.approx(expected, rel=1e-4)

    def test_smooth_field_has_less_energy_than_rough(self, domain_1d, penalty_1d):
        x = domain_1d.locations[:, 0]
        smooth = np.exp(-(x**2))
        rough = np.sign(np.sin(7.3 * x))
        e_smooth = float(smooth @ penalty_1d.omega @ smooth)
        e_rough = float(rough @ penalty_1d.omega @ rough)
        assert e_smooth < e_rough


class TestInterpolation:
    def test_reproduces_values_at_nodes(self, penalty_1d, domain_1d):
        rng = np.random.default_rng(2)
        v = rng.standard_normal(domain_1d.p)
        coeffs = solve_coefficients(penalty_1d, v)
        at_nodes = evaluate(coeffs, domain_1d, domain_1d.locations)
        assert np.abs(at_nodes - v).max() < 1e-8

    def test_reproduces_values_at_nodes_2d(self, penalty_2d, domain_2d):
        rng = np.random.default_rng(3)
        v = rng.standard_normal(domain_2d.p)
        coeffs = solve_coefficients(penalty_2d, v)
        at_nodes = evaluate(coeffs, domain_2d, domain_2d.locations)
        assert np.abs(at_nodes - v).max() < 1e-8

    def test_affine_reproduction_is_exact(self, penalty_2d, domain_2d):
        # an affine field interpolates with a == 0 and evaluates exactly,
        # on and off the nodes
        loc = domain_2d.locations
        v = 2.0 + 3.0 * loc[:, 0] - 0.5 * loc[:, 1]
        coeffs = solve_coefficients(penalty_2d, v)
        assert np.abs(coeffs.a).max() < 1e-10
        query = np.array([[0.31, -1.47], [2.9, 2.9], [-0.01, 0.02]])
        expected = 2.0 + 3.0 * query[:, 0] - 0.5 * query[:, 1]
        assert np.abs(evaluate(coeffs, penalty_2d.domain, query) - expected).max() < 1e-10

    def test_affine_field_has_zero_energy(self, penalty_1d, domain_1d):
        v = -1.0 + 0.25 * domain_1d.locations[:, 0]
        assert abs(float(v @ penalty_1d.omega @ v)) < 1e-10

    def test_query_shapes(self, penalty_1d, domain_1d):
        coeffs = solve_coefficients(penalty_1d, np.ones(domain_1d.p))
        flat = evaluate(coeffs, domain_1d, np.array([0.0, 1.0, 2.5]))
        assert flat.shape == (3,)

    def test_solve_rejects_bad_values(self, penalty_1d):
        with pytest.raises(ValueError):
            solve_coefficients(penalty_1d, np.ones(penalty_1d.domain.p - 1))
        bad = np.ones(penalty_1d.domain.p)
        bad[3] = np.inf
        with pytest.raises(ValueError):
            solve_coefficients(penalty_1d, bad)

    def test_evaluate_rejects_bad_query(self, penalty_2d):
        coeffs = solve_coefficients(penalty_2d, np.ones(penalty_2d.domain.p))
        with pytest.raises(ValueError):
            evaluate(coeffs, penalty_2d.domain, np.zeros((3, 3)))
        with pytest.raises(ValueError):
            evaluate(coeffs, penalty_2d.domain, np.array([[0.0, np.nan]]))


@settings(max_examples=25, deadline=None, derandomize=True)
@given(
    seed=st.integers(0, 10_000),
    p=st.integers(6, 14),
    d=st.sampled_from([1, 2]),
)
def test_energy_nonnegative_and_interpolation_holds(seed, p, d):
    rng = np.random.default_rng(seed)
    loc = rng.uniform(-4.0, 4.0, size=(p, d))
    # keep sites separated so the system stays well conditioned
    loc = loc + np.arange(p)[:, None] * 1e-3
    try:
        dom = SpatialDomain(loc)
        pen = build_penalty(dom)
    except ConditioningError:
        return
    v = rng.standard_normal(p)
    energy = float(v @ pen.omega @ v)
    assert energy >= -1e-8
    coeffs = solve_coefficients(pen, v)
    assert np.abs(evaluate(coeffs, dom, loc) - v).max() < 1e-6
