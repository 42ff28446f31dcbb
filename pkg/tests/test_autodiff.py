import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import special, stats

from causal_energy import autodiff as ad
from causal_energy import scm
from causal_energy.data import CalendarPoint, WeatherObservation
from causal_energy.errors import DomainError, TapeMismatchError

finite = st.floats(-5, 5, allow_nan=False)
positive = st.floats(0.05, 20)


def grad_at(f, *xs):
    tape = ad.Tape()
    leaves = [tape.leaf(x) for x in xs]
    out = f(*leaves)
    return out, tape.gradient(out)


class TestBasics:
    def test_square(self):
        _, g = grad_at(lambda x: x * x, 3.0)
        assert g[0] == 6.0

    def test_softplus_at_zero(self):
        _, g = grad_at(ad.softplus, 0.0)
        assert g[0] == 0.5

    def test_leaf_root(self):
        tape = ad.Tape()
        x = tape.leaf(2.0)
        assert tape.gradient(x).tolist() == [1.0]

    def test_sum_of_leaves(self):
        tape = ad.Tape()
        xs = [tape.leaf(float(i)) for i in range(6)]
        total = xs[0]
        for x in xs[1:]:
            total = total + x
        assert tape.gradient(total).tolist() == [1.0] * 6
        assert tape.gradient(ad.fsum(xs)).tolist() == [1.0] * 6

    def test_unreachable_leaf_is_zero(self):
        tape = ad.Tape()
        x, y = tape.leaf(1.0), tape.leaf(2.0)
        assert tape.gradient(x * 3.0).tolist() == [3.0, 0.0]

    def test_shared_subexpression(self):
        _, g = grad_at(lambda x: (x * x) * (x * x), 1.5)
        assert g[0] == pytest.approx(4 * 1.5**3)

    def test_mixing_tapes_rejected(self):
        a, b = ad.Tape().leaf(1.0), ad.Tape().leaf(2.0)
        with pytest.raises(TapeMismatchError):
            a + b
        with pytest.raises(TapeMismatchError):
            a.tape.custom(0.0, [b], [1.0])

    def test_topological_order(self):
        tape = ad.Tape()
        x = tape.leaf(0.3)
        y = ad.exp(ad.sin(x) * x) / (1.0 + x)
        tape.gradient(y)
        for i, parents in enumerate(tape.parents):
            assert all(p < i for p in parents)

    def test_domain_errors(self):
        tape = ad.Tape()
        z = tape.leaf(0.0)
        for bad in (lambda: ad.log(z), lambda: 1.0 / z, lambda: ad.sqrt(z), lambda: ad.lgamma(z),
                    lambda: (z - 1.0) ** 0.5):
            with pytest.raises(DomainError):
                bad()

    def test_float_passthrough(self):
        assert ad.exp(0.0) == 1.0 and ad.softplus(0.0) == math.log(2.0)
        assert ad.fsum([0.1] * 10) == 1.0
        assert ad.indicator(True) == 1.0 and ad.indicator(False) == 0.0

    def test_fsum_value_is_correctly_rounded(self):
        tape = ad.Tape()
        xs = [tape.leaf(v) for v in (1e16, 1.0, -1e16, 1.0)]
        assert ad.fsum(xs).value == 2.0

    def test_indicator_has_zero_partial(self):
        _, g = grad_at(lambda t: ad.indicator(t > 70.0, t) * 5.0 + t, 80.0)
        assert g[0] == 1.0

    def test_abs_kink_subgradient(self):
        _, g = grad_at(abs, 0.0)
        assert g[0] == 0.0


class TestClosedForms:
    @settings(max_examples=200)
    @given(finite, finite)
    def test_arithmetic(self, a, b):
        assume(abs(b) > 1e-3)
        out, g = grad_at(lambda x, y: (x * y - x / y + 2.0 * x - y) ** 2, a, b)
        inner = a * b - a / b + 2 * a - b
        assert g[0] == pytest.approx(2 * inner * (b - 1 / b + 2), rel=1e-9, abs=1e-9)
        assert g[1] == pytest.approx(2 * inner * (a + a / b**2 - 1), rel=1e-9, abs=1e-9)

    @settings(max_examples=200)
    @given(finite)
    def test_transcendental(self, a):
        _, g = grad_at(lambda x: ad.sin(x) * ad.cos(x) + ad.exp(0.5 * x) + ad.softplus(3.0 * x), a)
        want = math.cos(2 * a) + 0.5 * math.exp(0.5 * a) + 3.0 * special.expit(3.0 * a)
        assert g[0] == pytest.approx(want, rel=1e-10, abs=1e-12)

    @settings(max_examples=200)
    @given(positive)
    def test_log_sqrt_lgamma(self, a):
        _, g = grad_at(lambda x: ad.log(x) + ad.sqrt(x) + ad.lgamma(x) + x**1.5 + 2.0 / x, a)
        want = 1 / a + 0.5 / math.sqrt(a) + special.digamma(a) + 1.5 * math.sqrt(a) - 2.0 / a**2
        assert g[0] == pytest.approx(want, rel=1e-9, abs=1e-12)

    @settings(max_examples=200)
    @given(st.floats(-30, 8))
    def test_log_ndtr(self, a):
        out, g = grad_at(ad.log_ndtr, a)
        assert out.value == pytest.approx(stats.norm.logcdf(a), rel=1e-12)
        assert g[0] == pytest.approx(math.exp(stats.norm.logpdf(a) - stats.norm.logcdf(a)), rel=1e-9)

    @settings(max_examples=100)
    @given(finite, st.floats(0.1, 10))
    def test_power_with_traced_exponent(self, k, base):
        _, g = grad_at(lambda b, e: b**e, base, k)
        assert g[0] == pytest.approx(k * base ** (k - 1), rel=1e-9, abs=1e-12)
        assert g[1] == pytest.approx(base**k * math.log(base), rel=1e-9, abs=1e-12)


class TestModelGradients:
    def test_daily_harmonic_coefficient(self):
        tape = ad.Tape()
        a1 = tape.leaf(-150.0)
        p = scm.default_params(daily_harmonics=((a1, 136.0), (84.0, 7.0)))
        e = scm.demand_components(CalendarPoint(6, 3), WeatherObservation(50.0, 0.5, 5.0, 0.0), p).e_daily
        assert tape.gradient(e)[0] == pytest.approx(1.0, abs=1e-15)

    def test_demand_gradient_matches_finite_differences(self, params):
        names = scm.latent_names()
        cal, wx = CalendarPoint(15, 7), WeatherObservation(82.0, 0.6, 3.0, 400.0)
        point = np.array(list(params.latent_values().values()))

        def f(xs):
            return scm.predict_demand(cal, wx, params.with_latents(dict(zip(names, xs))))

        tape = ad.Tape()
        g = tape.gradient(f([tape.leaf(v) for v in point]))
        # some partials are ~1e-16 (cos at a zero crossing), so compare on a mixed scale
        h = 1e-6
        for i in range(point.size):
            e = np.zeros(point.size)
            e[i] = h
            fd = (f(point + e) - f(point - e)) / (2 * h)
            assert abs(g[i] - fd) <= 1e-6 * max(1.0, abs(fd)), names[i]
        want = -params.light_coeff * wx.radiation * math.exp(-params.light_decay * wx.radiation)
        assert g[names.index("light_decay")] == pytest.approx(want, rel=1e-14)
        assert g[names.index("humid_coeff")] == wx.humidity


class TestCheckGradients:
    def test_quadratic(self):
        assert ad.check_gradients(lambda v: 3 * v[0] * v[0] + v[0] * v[1] - v[1], [0.7, -1.3]) <= 1e-9

    def test_gaussian_logpdf_in_mean(self):
        x, sd = 1.3, 0.8

        def f(v):
            r = (x - v[0]) / sd
            return -0.5 * r * r - math.log(sd)

        assert ad.check_gradients(f, [0.2]) <= 1e-6
        _, g = grad_at(lambda m: f([m]), 0.2)
        assert g[0] == pytest.approx((x - 0.2) / sd**2, rel=1e-12)

    def test_indicator_away_from_threshold(self):
        def f(v):
            t = v[0]
            return 2.0 * t + ad.indicator(t > 70.0, t) * 100.0 * v[1]

        assert ad.check_gradients(f, [80.0, 0.4]) <= 1e-4

    def test_reports_wrong_gradient(self):
        def wrong(v):
            if isinstance(v[0], ad.DiffScalar):
                return v[0].tape.custom(v[0].value ** 2, [v[0]], [1.0])
            return v[0] ** 2

        assert ad.check_gradients(wrong, [3.0]) > 0.5
