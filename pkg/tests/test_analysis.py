import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from causal_energy import analysis as an
from causal_energy import scm
from causal_energy.data import Dataset
from causal_energy.errors import RankDeficientError, ThinStratumError, ValidationError

from .conftest import simulated


class TestOls:
    def test_exact_line(self):
        fit = an.solve_ols(np.column_stack([[0.0, 1.0], [1.0, 1.0]]), [1.0, 3.0], ["x", "one"])
        assert fit["x"] == pytest.approx(2.0) and fit["one"] == pytest.approx(1.0)
        assert np.all(np.isnan(fit.stderr))

    def test_orthogonal_target(self):
        x = np.array([-1.0, 1.0, -1.0, 1.0])
        y = np.array([5.0, 5.0, 7.0, 7.0])  # varies only with something orthogonal to x
        fit = an.solve_ols(np.column_stack([np.ones(4), x]), y)
        assert fit.coefficients[1] == pytest.approx(0.0, abs=1e-12)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(0, 10_000))
    def test_matches_normal_equations(self, seed):
        rng = np.random.default_rng(seed)
        X = np.column_stack([np.ones(50), rng.standard_normal((50, 3))])
        y = X @ rng.standard_normal(4) + rng.standard_normal(50)
        fit = an.solve_ols(X, y)
        beta = np.linalg.solve(X.T @ X, X.T @ y)
        np.testing.assert_allclose(fit.coefficients, beta, rtol=1e-8, atol=1e-10)
        assert abs(fit.residuals.mean()) < 1e-9
        sigma2 = fit.residuals @ fit.residuals / 46
        np.testing.assert_allclose(fit.stderr, np.sqrt(sigma2 * np.diag(np.linalg.inv(X.T @ X))), rtol=1e-8)
        assert fit.r_squared == pytest.approx(1 - fit.residuals.var() / y.var(), rel=1e-10)

    def test_rank_deficiency_names_column(self):
        rng = np.random.default_rng(0)
        a = rng.standard_normal(20)
        X = np.column_stack([np.ones(20), a, 2 * a])
        with pytest.raises(RankDeficientError) as info:
            an.solve_ols(X, rng.standard_normal(20), ["one", "a", "twice_a"])
        assert set(info.value.columns) <= {"a", "twice_a"} and len(info.value.columns) == 1

    def test_input_validation(self):
        with pytest.raises(ValidationError):
            an.solve_ols(np.ones((2, 3)), np.ones(2))
        with pytest.raises(ValidationError):
            an.solve_ols(np.ones((3, 1)), [1.0, np.nan, 2.0])
        with pytest.raises(ValidationError):
            an.solve_ols(np.ones((3, 1)), np.ones(4))


class TestCorrelationDensity:
    def test_boundary_rejected(self):
        x = np.arange(10.0)
        with pytest.raises(ValidationError, match="boundary"):
            an.correlation_with_density(x, x)
        with pytest.raises(ValidationError, match="boundary"):
            an.correlation_with_density(x, 3.0 - 0.5 * x)
        with pytest.raises(ValidationError):
            an.correlation_with_density(x, np.ones(10))

    def test_interval_mass(self):
        d = an.CorrelationDensity(0.5, 103)
        lo, hi = d.interval(0.95)
        assert d.mass(lo, hi) == pytest.approx(0.95, abs=1e-3)
        assert lo < 0.5 < hi and abs(d.mode() - 0.5) < 0.01

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-0.95, 0.95), st.integers(10, 20_000))
    def test_density_properties(self, r, n):
        d = an.CorrelationDensity(r, n)
        assert d.mass() == pytest.approx(1.0, abs=1e-3)
        grid = np.linspace(-0.999, 0.999, 101)
        assert np.all(d(grid) >= 0)
        # the numeric maximiser agrees with the analytic stationarity condition
        assert d.mode() == pytest.approx(d.stationary_mode(), abs=1e-6)
        # and the shift from r points towards the nearer boundary
        if abs(r) > 1e-3:
            assert np.sign(d.mode() - r) == np.sign(r)

    def test_density_matches_change_of_variables(self):
        d = an.CorrelationDensity(-0.2, 50)
        rho = 0.1
        z = math.atanh(rho)
        want = stats.norm.pdf(z, math.atanh(-0.2), 1 / math.sqrt(47)) / (1 - rho**2)
        assert d(rho) == pytest.approx(want, rel=1e-12)
        assert d.log_density(rho) == pytest.approx(math.log(want), rel=1e-12)

    def test_sample_correlation(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(500)
        y = 0.3 * x + rng.standard_normal(500)
        r, d = an.correlation_with_density(x, y)
        assert r == pytest.approx(stats.pearsonr(x, y)[0], rel=1e-12)
        assert d.n == 500


def _humid(kh, seed):
    return simulated(2 * 8760, seed, humid_coeff=kh)


class TestHumidity:
    def test_recovers_coefficient(self):
        fit = an.conditional_humidity_effect(_humid(500.0, 1), 70.0)
        assert fit["humidity"] == pytest.approx(500.0, rel=0.10)
        assert fit.extra["stratum_size"] > 500 and fit.extra["stratum_demand_sd"] > 0

    def test_null_coefficient(self):
        fit = an.conditional_humidity_effect(_humid(0.0, 2), 70.0)
        assert abs(fit["humidity"]) <= 2 * fit.se("humidity")

    def test_thin_stratum(self, small):
        with pytest.raises(ThinStratumError, match="0 records"):
            an.conditional_humidity_effect(small, 200.0)

    def test_windows(self, year):
        fit = an.conditional_humidity_effect(year, 70.0, hour_window=(12, 18), month_window=(6, 8))
        cols = year.columns
        sel = (cols["temp_f"] > 70) & (cols["hour"] >= 12) & (cols["hour"] <= 18) & np.isin(cols["month"], [6, 7, 8])
        assert fit.extra["stratum_size"] == int(sel.sum())
        assert an._window_mask(np.array([23, 0, 3, 12]), (22, 3)).tolist() == [True, True, True, False]

    def test_grid_search(self):
        assert an.grid_search_threshold(_humid(500.0, 1), range(60, 90, 5)) == 70.0
        assert an.grid_search_threshold(_humid(500.0, 1), [65.0]) == 65.0
        with pytest.raises(ValidationError):
            an.grid_search_threshold(_humid(500.0, 1), [])

    def test_profiles_are_densities(self, year):
        rows = an.humidity_profiles(year, 7)
        for hour in (0, 12):
            dens = [r["density"] * (r["bin_hi"] - r["bin_lo"]) for r in rows if r["hour"] == hour]
            assert sum(dens) == pytest.approx(1.0)


class TestTemperatureApproaches:
    def test_confounded_stage_one_is_biased(self):
        ds = an.confounded_month(seed=3)
        s1, _ = an.fit_approach1(ds, 7)
        assert abs(s1["temp_dev"] - 25.0) / 25.0 >= 0.20

    def test_unconfounded_stage_one_is_unbiased(self):
        ds = an.confounded_month(seed=3, confounded=False, activity_amp=0.0)
        s1, _ = an.fit_approach1(ds, 7)
        assert abs(s1["temp_dev"] - 25.0) <= 2 * s1.se("temp_dev")

    def test_joint_fit_recovers(self):
        for seed in range(5):
            fit = an.fit_approach2(an.confounded_month(seed=seed), 7)
            assert fit["temp_dev"] == pytest.approx(25.0, rel=0.05)

    @settings(max_examples=15, deadline=None)
    @given(st.integers(1, 12), st.integers(0, 1000), st.integers(1, 3))
    def test_fwl_identity(self, month, seed, order):
        ds = an.confounded_month(month, seed=seed, temp_level=40.0 + 3 * month)
        a = an.fit_approach2(ds, month, order=order)["temp_dev"]
        assert an.fwl_fit(ds, month, order=order)["temp_dev"] == pytest.approx(a, abs=1e-8)

    def test_fwl_without_other_regressors(self):
        rng = np.random.default_rng(1)
        x, y = rng.standard_normal(40), rng.standard_normal(40)
        plain = an.solve_ols(np.column_stack([np.ones(40), x]), y)
        rx = an.solve_ols(np.ones((40, 1)), x).residuals
        ry = an.solve_ols(np.ones((40, 1)), y).residuals
        assert an.solve_ols(rx[:, None], ry).coefficients[0] == pytest.approx(plain.coefficients[1], abs=1e-12)

    def test_comparison_aggregates(self):
        train = Dataset(an.confounded_month(6, seed=1).records + an.confounded_month(7, seed=2).records)
        test = Dataset(an.confounded_month(6, 2025, seed=3).records + an.confounded_month(7, 2025, seed=4).records)
        comp = an.compare_approaches(train, test)
        assert [m.month for m in comp.months] == [6, 7]
        assert comp.mean_deviation == pytest.approx(np.mean([m.deviation for m in comp.months]))
        w = np.array([m.n_train for m in comp.months])
        assert comp.weighted_deviation == pytest.approx(np.dot(w, [m.deviation for m in comp.months]) / w.sum())
        assert all(m.mape_gap > 0 for m in comp.months)
        assert an.compare_approaches(train, months=[7, 9]).months[0].mape_naive is None

    def test_missing_month(self):
        with pytest.raises(ThinStratumError):
            an.fit_approach2(an.confounded_month(7), 8)


class TestBackdoor:
    def test_default_instance(self):
        inst = an.LinearScmInstance()
        assert inst.do_coefficient() == 2.0
        # omitted-variable bias closed form: 2 + 3 * cov(x, z) / var(x) = 2 + 3 * 0.25 / 1.25
        assert inst.naive_coefficient() == pytest.approx(2.6)
        res = an.backdoor_check(inst, 100_000, seed=1)
        assert res.abs_diff <= 2 * res.regression_se
        assert abs(res.naive_coef - 2.0) >= 0.5
        assert res.naive_coef == pytest.approx(res.naive_expected, abs=4 * res.naive_se)
        assert res.stratified_coef == pytest.approx(2.0, abs=0.02)

    def test_no_confounding(self):
        res = an.backdoor_check(an.LinearScmInstance(x_from_z=0.0), 100_000, seed=2)
        assert abs(res.naive_coef - res.regression_coef) <= 2 * res.regression_se

    def test_do_expectation_by_simulation(self):
        inst = an.LinearScmInstance(z_values=(0.0, 1.0, 3.0), z_probs=(0.2, 0.5, 0.3))
        rng = np.random.default_rng(0)
        z = rng.choice(inst.z_values, size=200_000, p=inst.z_probs)
        y_do = inst.y_intercept + inst.y_from_x * 1.5 + inst.y_from_z * z + rng.normal(0, 1, z.size)
        assert inst.expected_y_do(1.5) == pytest.approx(y_do.mean(), abs=4 * y_do.std() / math.sqrt(z.size))

    def test_validation(self):
        with pytest.raises(ValidationError):
            an.LinearScmInstance(z_probs=(0.5, 0.6))
        with pytest.raises(ValidationError):
            an.backdoor_check(an.LinearScmInstance(), 3, 0)


class TestSeasonalVariance:
    def test_constant_demand(self, year):
        from dataclasses import replace

        flat = Dataset(tuple(replace(r, demand=1000.0) for r in year))
        sv = an.seasonal_variance(flat)
        assert all(v == 0.0 for v in sv.variances.values())

    def test_summer_exceeds_winter(self, year):
        sv = an.seasonal_variance(year)
        assert sv.summer > sv.winter and sv.ratio > 1
        cols = year.columns
        assert sv.variances[7] == pytest.approx(np.var(cols["demand"][cols["month"] == 7], ddof=1))

    def test_needs_every_month(self, small):
        with pytest.raises(ThinStratumError):
            an.seasonal_variance(small)


class TestRegimes:
    def test_binned_profile(self):
        rows = an.binned_profile([0.0, 0.5, 1.0, 2.0, 5.0], [1.0, 3.0, 5.0, 7.0, 100.0], [0.0, 1.0, 2.0])
        assert [r["count"] for r in rows] == [2, 2]
        assert rows[0]["mean"] == 2.0 and rows[1]["mean"] == 6.0

    def test_radiation_and_wind(self, year):
        rad = an.radiation_regimes(year)
        assert set(rad) == set(an.RADIATION_REGIMES)
        assert rad["summer_afternoon"]["count"] > 0
        # total effect: radiation warms the air (rad_to_temp) and HVAC responds (hvac_slope);
        # the lighting term is negligible at afternoon radiation levels
        p = scm.default_params()
        row = rad["summer_afternoon"]
        assert abs(row["slope"] - p.hvac_slope * p.rad_to_temp) < 3 * row["slope_se"] + 0.01
        wind = an.wind_regimes(year, bands={"cold": (0.0, 25.0), "mild": (40.0, 60.0)})
        assert wind["cold"]["slope"] > 0
        assert abs(wind["mild"]["slope"]) < 3 * wind["mild"]["slope_se"]
