import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spatpca import (
    SampleCovariance,
    SolverConfig,
    TuningGrid,
    cv_gamma,
    cv_tau,
    default_log_grid,
    estimate_parameters,
    fit,
    partition_folds,
    restrict_grid,
)
from spatpca.tuning import gamma_grid

from checks import smooth_rank1_data


class TestGrids:
    def test_default_log_grid_endpoints_exact(self):
        g = default_log_grid(11)
        assert g.size == 11
        assert g[0] == 0.0 and g[1] == 1.0 and g[-1] == 1000.0
        assert np.all(np.diff(g) > 0)

    def test_default_log_grid_degenerate(self):
        assert np.array_equal(default_log_grid(1), [0.0])
        assert np.array_equal(default_log_grid(2), [0.0, 1000.0])

    def test_default_log_grid_custom_range(self):
        g = default_log_grid(5, low=0.5, high=8.0)
        assert g[1] == 0.5 and g[-1] == 8.0 and g.size == 5

    def test_gamma_grid_shapes(self):
        g = gamma_grid(50.0, 6)
        assert g.size == 6
        assert g[0] == 0.0 and g[1] == 1.0 and g[-1] == 50.0
        assert np.all(np.diff(g) > 0)

    def test_gamma_grid_degenerate(self):
        assert np.array_equal(gamma_grid(-1.0, 5), [0.0])
        assert np.array_equal(gamma_grid(0.0, 5), [0.0])
        assert np.array_equal(gamma_grid(0.5, 5), [0.0, 0.5])  # below the lower end
        assert np.array_equal(gamma_grid(7.0, 1), [0.0, 7.0])

    def test_gamma_grid_lower_fraction(self):
        g = gamma_grid(100.0, 4, lower_fraction=1e-2)
        assert g[0] == 0.0 and g[1] == 1.0 and g[-1] == 100.0

    def test_tuning_grid_validation(self):
        with pytest.raises(ValueError):
            TuningGrid(tau1_values=[])
        with pytest.raises(ValueError):
            TuningGrid(tau1_values=[-1.0, 0.0])
        with pytest.raises(ValueError):
            TuningGrid(tau2_values=[0.0, 1.0, 1.0])
        with pytest.raises(ValueError):
            TuningGrid(gamma_value_count=0)
        with pytest.raises(ValueError):
            TuningGrid(gamma_lower_fraction=0.0)
        with pytest.raises(ValueError):
            TuningGrid(gamma_lower_fraction=1.5)
        with pytest.raises(ValueError):
            TuningGrid(m=1)

    def test_restrict_grid(self):
        grid = TuningGrid()
        pinned = restrict_grid(grid, tau1=3.5)
        assert np.array_equal(pinned.tau1_values, [3.5])
        assert pinned.tau2_values.size == grid.tau2_values.size
        both = restrict_grid(grid, tau1=0.0, tau2=2.0)
        assert np.array_equal(both.tau1_values, [0.0])
        assert np.array_equal(both.tau2_values, [2.0])
        assert restrict_grid(grid) is grid


class TestPartitionFolds:
    def test_balanced_cover(self):
        fa = partition_folds(23, 5, seed=7)
        assert fa.n == 23 and fa.m == 5 and fa.seed == 7
        sizes = [int(np.sum(fa.assignment == m)) for m in range(1, 6)]
        assert sum(sizes) == 23
        assert max(sizes) - min(sizes) <= 1

    def test_deterministic(self):
        a = partition_folds(40, 4, seed=3).assignment
        b = partition_folds(40, 4, seed=3).assignment
        c = partition_folds(40, 4, seed=4).assignment
        assert np.array_equal(a, b)
        assert not np.array_equal(a, c)

    def test_errors(self):
        with pytest.raises(ValueError):
            partition_folds(10, 1, seed=0)
        with pytest.raises(ValueError):
            partition_folds(3, 4, seed=0)

    @settings(max_examples=60, deadline=None, derandomize=True)
    @given(
        n=st.integers(4, 60),
        m=st.integers(2, 6),
        seed=st.integers(0, 1_000),
    )
    def test_partition_properties(self, n, m, seed):
        if m > n:
            return
        fa = partition_folds(n, m, seed)
        assert set(np.unique(fa.assignment)) == set(range(1, m + 1))
        sizes = np.bincount(fa.assignment)[1:]
        assert sizes.max() - sizes.min() <= 1


@pytest.fixture(scope="module")
def cv_setup():
    from spatpca import SpatialDomain, build_penalty

    dom = SpatialDomain(np.linspace(-4.0, 4.0, 14))
    pen = build_penalty(dom)
    rng = np.random.default_rng(5)
    y, _ = smooth_rank1_data(rng, dom.locations[:, 0], 36)
    return y, pen


class TestCvTau:
    def test_trivial_grid_matches_svd_oracle(self, cv_setup):
        y, pen = cv_setup
        folds = partition_folds(y.shape[0], 4, seed=1)
        grid = TuningGrid(tau1_values=[0.0], tau2_values=[0.0], m=4)
        rep = cv_tau(y, pen, 2, grid, folds)

        expected = 0.0
        for m in range(1, 5):
            mask = folds.assignment == m
            y_tr, y_va = y[~mask], y[mask]
            w, v = np.linalg.eigh(y_tr.T @ y_tr)
            phi = v[:, ::-1][:, :2]
            expected += float(np.sum((y_va - y_va @ phi @ phi.T) ** 2))
        expected /= 4.0
        assert rep.criterion[0, 0] == pytest.approx(expected, rel=1e-10)
        assert rep.selected == (0.0, 0.0)

    def test_selection_is_first_strict_minimum(self, cv_setup):
        y, pen = cv_setup
        folds = partition_folds(y.shape[0], 3, seed=2)
        grid = TuningGrid(tau1_values=[0.0, 1.0, 10.0], tau2_values=[0.0, 1.0, 10.0], m=3)
        rep = cv_tau(y, pen, 1, grid, folds)
        assert rep.criterion.shape == (3, 3)

        best = None
        for i in range(3):
            for j in range(3):
                if np.isnan(rep.criterion[i, j]):
                    continue
                if best is None or rep.criterion[i, j] < rep.criterion[best]:
                    best = (i, j)
        assert rep.selected == (
            float(grid.tau1_values[best[0]]),
            float(grid.tau2_values[best[1]]),
        )
        assert rep.converged.shape == (3, 3)

    def test_report_serializes(self, cv_setup):
        y, pen = cv_setup
        folds = partition_folds(y.shape[0], 3, seed=2)
        grid = TuningGrid(tau1_values=[0.0, 1.0], tau2_values=[0.0], m=3)
        rep = cv_tau(y, pen, 1, grid, folds)
        d = rep.to_dict()
        round_trip = json.loads(json.dumps(d))
        assert round_trip["kind"] == "tau"
        assert round_trip["selected"] == list(rep.selected)
        assert round_trip["folds"]["m"] == 3
        assert len(round_trip["criterion"]) == 2

    def test_fold_count_mismatch(self, cv_setup):
        y, pen = cv_setup
        folds = partition_folds(10, 2, seed=0)
        with pytest.raises(ValueError):
            cv_tau(y, pen, 1, TuningGrid(m=2), folds)


class TestCvGamma:
    def test_matches_per_fold_reestimation(self, cv_setup):
        y, pen = cv_setup
        basis = fit(y, pen, SolverConfig(tau1=1.0, k=2))
        folds = partition_folds(y.shape[0], 3, seed=4)
        grid = TuningGrid(gamma_value_count=4, m=3)
        rep = cv_gamma(y, basis, grid, folds)
        assert rep.kind == "gamma"

        s_full = SampleCovariance.from_data(y)
        dhat1 = float(np.linalg.eigvalsh(basis.phi.T @ s_full.s @ basis.phi)[-1])
        gammas = gamma_grid(dhat1, 4)
        assert np.array_equal(rep.gamma_values, gammas)

        expected = np.zeros(gammas.size)
        p = y.shape[1]
        for m in range(1, 4):
            mask = folds.assignment == m
            s_tr = SampleCovariance.from_data(y[~mask])
            s_va = SampleCovariance.from_data(y[mask]).s
            for gi, g in enumerate(gammas):
                model = estimate_parameters(s_tr, basis, float(g))
                resid = s_va - basis.phi @ model.lam @ basis.phi.T - model.sigma2 * np.eye(p)
                expected[gi] += np.sum(resid * resid)
        expected /= 3.0
        assert np.allclose(rep.criterion, expected, rtol=1e-12)
        assert rep.selected == float(gammas[int(np.argmin(expected))])

    def test_report_serializes(self, cv_setup):
        y, pen = cv_setup
        basis = fit(y, pen, SolverConfig(k=1))
        folds = partition_folds(y.shape[0], 3, seed=4)
        rep = cv_gamma(y, basis, TuningGrid(gamma_value_count=3, m=3), folds)
        d = json.loads(json.dumps(rep.to_dict()))
        assert d["kind"] == "gamma"
        assert isinstance(d["selected"], float)
        assert "gamma_values" in d
