import math
from dataclasses import replace
from datetime import datetime, timezone

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from causal_energy import scm
from causal_energy.data import CalendarPoint, WeatherObservation
from causal_energy.errors import ValidationError

ZERO2 = ((0.0, 0.0), (0.0, 0.0))


def quiet(**kw):
    """Defaults with every calendar and weather modifier switched off."""
    base = dict(daily_harmonics=ZERO2, yearly_harmonics=ZERO2, humid_coeff=0.0, wind_coeff=0.0, light_coeff=0.0,
                active_hours=frozenset())
    base.update(kw)
    return scm.default_params(**base)


class TestParams:
    @pytest.mark.parametrize("field", ["temp_noise_sd", "wind_sd", "demand_noise_sd", "wind_asymmetry"])
    def test_positive_fields(self, field):
        with pytest.raises(ValidationError, match=field):
            scm.default_params(**{field: 0.0})

    def test_thresholds_ordered(self):
        with pytest.raises(ValidationError):
            scm.default_params(wind_cold_threshold=80.0)

    def test_latent_round_trip(self, params):
        vals = params.latent_values()
        assert list(vals) == list(scm.latent_names())
        assert params.with_latents(vals) == params

    def test_json_round_trip(self, params, tmp_path):
        p = tmp_path / "params.json"
        p.write_text(params.dumps())
        assert scm.ScmParams.load(p) == params

    def test_order_three(self):
        names = scm.latent_names(3)
        assert "daily_sin_3" in names and len(names) == len(scm.latent_names(2)) + 8


class TestEquations:
    @pytest.mark.parametrize("t,expected", [(56, 0), (86, 30), (26, 30)])
    def test_transform(self, t, expected):
        assert scm.transform_temperature(t, 56) == expected

    def test_temperature_base_only(self):
        p = scm.default_params(temp_month_harmonics=ZERO2, temp_hour_harmonics=ZERO2, rad_to_temp=0.0, temp_base=47.0)
        for h in range(24):
            for m in range(1, 13):
                assert scm.temp_mean(CalendarPoint(h, m), 0.0, p) == 47.0

    def test_quarter_period_zero(self):
        p = scm.default_params(temp_month_harmonics=((0.0, 1.0), (0.0, 0.0)), temp_hour_harmonics=ZERO2,
                               rad_to_temp=0.0, temp_base=0.0)
        assert scm.temp_mean(CalendarPoint(0, 3), 0.0, p) == pytest.approx(0.0, abs=1e-15)

    def test_summer_afternoon_warmer(self, params):
        assert scm.temp_mean(CalendarPoint(14, 7), 600.0, params) > scm.temp_mean(CalendarPoint(4, 1), 0.0, params)

    def test_humidity_shapes_at_offsets(self):
        p = scm.default_params(humid_hour=(0.0, 0.0), humid_month=(0.0, 0.0), humid_offsets=(5.1, 7.6))
        a, b = scm.humidity_shapes(CalendarPoint(9, 4), p)
        assert a == pytest.approx(5.1, abs=1e-15)
        assert b - 2.5 == pytest.approx(math.exp(-10 * 2.5 + 0.1) / 10, rel=1e-3)

    def test_morning_humidier(self, params):
        def mean(h):
            a, b = scm.humidity_shapes(CalendarPoint(h, 7), params)
            return a / (a + b)

        assert mean(6) > mean(15)

    @settings(max_examples=200)
    @given(st.floats(-50, 50), st.floats(-50, 50), st.integers(0, 23), st.integers(1, 12))
    def test_shapes_positive(self, a0, b0, h, m):
        p = scm.default_params(humid_offsets=(a0, b0))
        a, b = scm.humidity_shapes(CalendarPoint(h, m), p)
        assert a > 0 and b > 0

    def test_radiation(self):
        p = scm.default_params(rad_amp=(500.0, 300.0))
        assert scm.radiation_mean(CalendarPoint(2, 6), p) == 0.0
        rise, down = p.solar_table.window(6)
        noon = (rise + down) / 2
        assert scm.daylight_shape(noon, 6, p.solar_table) == pytest.approx(1.0)
        assert (500.0 * math.sin(math.pi * 6 / 12) + 300.0) == 800.0
        # integer hours never hit the exact midpoint, so compare on the amplitude directly
        amp = scm.radiation_mean(CalendarPoint(13, 6), p) / scm.daylight_shape(13, 6, p.solar_table)
        assert amp == pytest.approx(800.0)


def weather(t, rh=0.5, w=10.0, rad=100.0):
    return WeatherObservation(t, rh, w, rad)


class TestDemand:
    def test_all_off_is_base(self):
        p = quiet(hvac_slope=20.0, demand_base=3485.0)
        b = scm.demand_components(CalendarPoint(2, 4), weather(56.0), p)
        assert b.total == 3485.0

    def test_4085(self):
        p = quiet(hvac_slope=20.0, demand_base=3485.0, humid_temp_threshold=90.0, wind_hot_threshold=90.0)
        assert scm.predict_demand(CalendarPoint(2, 4), weather(86.0), p) == 4085.0

    @settings(max_examples=200)
    @given(st.floats(31, 74), st.floats(0, 80), st.floats(0, 80))
    def test_wind_inert_between_thresholds(self, t, w1, w2):
        p = scm.default_params()
        cal = CalendarPoint(12, 5)
        assert scm.demand_components(cal, weather(t, w=w1), p).e_wind == 0.0
        assert scm.predict_demand(cal, weather(t, w=w1), p) == scm.predict_demand(cal, weather(t, w=w2), p)

    def test_lighting_at_zero_radiation(self, params):
        b = scm.demand_components(CalendarPoint(20, 1), weather(40.0, rad=0.0), params)
        assert b.e_light == params.light_coeff

    def test_humidity_linear(self, params):
        cal = CalendarPoint(15, 7)
        lo = scm.predict_demand(cal, weather(80.0, rh=0.3), params)
        hi = scm.predict_demand(cal, weather(80.0, rh=0.9), params)
        assert hi - lo == pytest.approx(0.6 * params.humid_coeff)

    @settings(max_examples=300)
    @given(st.integers(0, 23), st.integers(1, 12), st.floats(-20, 110), st.floats(0, 1), st.floats(0, 60),
           st.floats(0, 1000))
    def test_total_is_sum_of_components(self, h, m, t, rh, w, rad):
        b = scm.demand_components(CalendarPoint(h, m), WeatherObservation(t, rh, w, rad), scm.default_params())
        assert b.total == b.e_base + b.e_humid + b.e_wind + b.e_light + b.e_daily + b.e_yearly

    def test_vectorised_matches_scalar(self, small, params):
        got = scm.demand_mean_array(small.columns, params)
        want = [scm.predict_demand(r.calendar, r.weather, params) for r in small]
        np.testing.assert_allclose(got, want, rtol=1e-12)


class TestSampling:
    def test_seeded(self, params):
        a = scm.simulate_dataset(params, 48, 11)
        b = scm.simulate_dataset(params, 48, 11)
        assert a == b
        assert scm.simulate_dataset(params, 48, 12) != a

    def test_calendar_follows_timezone(self):
        ds = scm.simulate_dataset(scm.default_params(), 30, 0, start=datetime(2024, 1, 1, 6, tzinfo=timezone.utc))
        assert ds[0].calendar == CalendarPoint(0, 1)

    def test_degenerate_noise(self, params):
        tiny = 1e-9
        p = replace(params, demand_noise_sd=tiny, temp_noise_sd=tiny, wind_sd=tiny, rad_sd=tiny)
        rec = scm.sample_record(CalendarPoint(12, 7), p, np.random.default_rng(0))
        assert rec.demand == pytest.approx(scm.predict_demand(rec.calendar, rec.weather, p), abs=1e-6)

    def test_mean_matches_independent_oracle(self, params):
        cal = CalendarPoint(12, 7)
        rng = np.random.default_rng(1)
        draws = np.array([scm.sample_record(cal, params, rng).demand for _ in range(10_000)])
        oracle = _oracle_mean_demand(params, 12, 7, 1_000_000, np.random.default_rng(2))
        se = draws.std(ddof=1) / math.sqrt(draws.size)
        assert abs(draws.mean() - oracle) < 3 * se


def _oracle_mean_demand(p, hour, month, n, rng):
    """Vectorised re-derivation of the generative equations, written independently of the package."""

    def harm(pairs, phase):
        return sum(s * np.sin(j * phase) + c * np.cos(j * phase) for j, (s, c) in enumerate(pairs, 1))

    def floor_softplus(x):
        return 0.01 + np.logaddexp(0.0, 10.0 * (x - 0.01)) / 10.0

    rise, down = p.solar_table.window(month)
    shape = np.sin(np.pi * (hour - rise) / (down - rise)) if rise <= hour <= down else 0.0
    rad_mu = (p.rad_amp[0] * np.sin(np.pi * month / 12) + p.rad_amp[1]) * shape
    rad = np.maximum(0.0, rng.normal(rad_mu, p.rad_sd, n))
    t_mu = harm(p.temp_month_harmonics, 2 * np.pi * month / 12) + harm(p.temp_hour_harmonics, 2 * np.pi * hour / 24)
    temp = rng.normal(t_mu + p.rad_to_temp * rad + p.temp_base, p.temp_noise_sd)
    a_raw = p.humid_hour[0] * np.sin(np.pi * hour / 12) + p.humid_hour[1] * np.cos(np.pi * hour / 12) + p.humid_offsets[0]
    b_raw = p.humid_month[0] * np.sin(np.pi * month / 6) + p.humid_month[1] * np.cos(np.pi * month / 6) + p.humid_offsets[1] - a_raw
    rh = rng.beta(floor_softplus(a_raw), floor_softplus(b_raw), n)
    wind = np.maximum(0.0, rng.normal(p.wind_mean, p.wind_sd, n))
    e = p.hvac_slope * np.abs(temp - p.temp_mid) + p.demand_base
    e = e + p.humid_coeff * rh * (temp > p.humid_temp_threshold)
    e = e + p.wind_coeff * wind * (temp < p.wind_cold_threshold)
    e = e - p.wind_asymmetry * p.wind_coeff * wind * (temp > p.wind_hot_threshold)
    if hour in p.active_hours:
        e = e + p.light_coeff * np.exp(-p.light_decay * rad)
    e = e + harm(p.daily_harmonics, 2 * np.pi * hour / 24) + harm(p.yearly_harmonics, 2 * np.pi * month / 12)
    return float(np.mean(e))
