"""Structural equations of the calendar/weather/demand causal model.

Ancestral order: calendar (hour, month) -> radiation -> temperature; calendar ->
humidity; wind is exogenous; demand is the sum of HVAC (base, humidity, wind),
lighting and activity (daily, yearly) components.

The scalar functions here use the generic math of :mod:`causal_energy.autodiff`
so that they can be evaluated on floats or recorded on a tape with
:class:`~causal_energy.autodiff.DiffScalar` parameters.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, fields, replace
from datetime import datetime, timedelta
from functools import lru_cache
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import autodiff as ad
from .data import CENTRAL, UTC, CalendarPoint, Dataset, HourlyRecord, TzRule, WeatherObservation
from .errors import ValidationError
from .priors import DEFAULT_PRIORS, PriorSpec
from .solar import SolarTable, compute_solar_table

SHAPE_FLOOR = 0.01
SHAPE_SHARPNESS = 10.0
DEFAULT_ACTIVE_HOURS = frozenset(range(5, 24))
TWO_PI = 2.0 * math.pi

Pairs = tuple[tuple[float, float], ...]


@lru_cache(maxsize=1)
def default_solar_table() -> SolarTable:
    return compute_solar_table()


def _pairs(x) -> Pairs:
    return tuple((a, b) for a, b in x)


@dataclass(frozen=True)
class ScmParams:
    """Every parameter of the generative model.

    Harmonic fields are sequences of ``(sin, cos)`` coefficient pairs for
    orders ``j = 1..harmonic_order``.  Thresholds, the comfort midpoint, the
    active-hour set and the solar table are fixed quantities; the rest are
    latent during variational training.
    """

    temp_month_harmonics: Pairs
    temp_hour_harmonics: Pairs
    rad_to_temp: float
    temp_base: float
    temp_noise_sd: float
    humid_hour: tuple[float, float]
    humid_month: tuple[float, float]
    humid_offsets: tuple[float, float]
    rad_amp: tuple[float, float]
    rad_sd: float
    wind_mean: float
    wind_sd: float
    hvac_slope: float
    demand_base: float
    humid_coeff: float
    wind_coeff: float
    wind_asymmetry: float
    daily_harmonics: Pairs
    yearly_harmonics: Pairs
    light_coeff: float
    light_decay: float
    demand_noise_sd: float
    temp_mid: float = 56.0
    humid_temp_threshold: float = 70.0
    wind_cold_threshold: float = 30.0
    wind_hot_threshold: float = 75.0
    active_hours: frozenset[int] = DEFAULT_ACTIVE_HOURS
    solar_table: SolarTable = field(default_factory=default_solar_table)
    harmonic_order: int = 2

    def __post_init__(self):
        problems = []
        for name in ("temp_noise_sd", "wind_sd", "demand_noise_sd", "rad_sd", "wind_asymmetry"):
            if not float(getattr(self, name)) > 0:
                problems.append(f"{name} must be positive")
        if not self.wind_cold_threshold < self.wind_hot_threshold:
            problems.append("wind_cold_threshold must be below wind_hot_threshold")
        if self.harmonic_order < 1:
            problems.append("harmonic_order must be >= 1")
        for name in ("temp_month_harmonics", "temp_hour_harmonics", "daily_harmonics", "yearly_harmonics"):
            if len(getattr(self, name)) != self.harmonic_order:
                problems.append(f"{name} needs {self.harmonic_order} (sin, cos) pairs")
        if not set(self.active_hours) <= set(range(24)):
            problems.append("active_hours must be a subset of 0..23")
        if problems:
            raise ValidationError("; ".join(problems))

    # -- latent vector -----------------------------------------------------

    def latent_values(self) -> dict[str, float]:
        return dict(zip(latent_names(self.harmonic_order), _flatten(self)))

    def with_latents(self, values: Mapping[str, object]) -> "ScmParams":
        """Copy with latent fields replaced; values may be floats or DiffScalars."""
        n = self.harmonic_order
        names = latent_names(n)
        missing = [k for k in names if k not in values]
        if missing:
            raise ValidationError(f"missing latent values: {missing}")
        v = [values[k] for k in names]
        it = iter(v)

        def take(k):
            return [next(it) for _ in range(k)]

        def pairs():
            flat = take(2 * n)
            return tuple((flat[2 * j], flat[2 * j + 1]) for j in range(n))

        kw = {}
        kw["temp_month_harmonics"] = pairs()
        kw["temp_hour_harmonics"] = pairs()
        kw["rad_to_temp"], kw["temp_base"], kw["temp_noise_sd"] = take(3)
        kw["humid_hour"] = tuple(take(2))
        kw["humid_month"] = tuple(take(2))
        kw["humid_offsets"] = tuple(take(2))
        kw["rad_amp"] = tuple(take(2))
        kw["rad_sd"], kw["wind_mean"], kw["wind_sd"] = take(3)
        kw["hvac_slope"], kw["demand_base"], kw["humid_coeff"], kw["wind_coeff"], kw["wind_asymmetry"] = take(5)
        kw["daily_harmonics"] = pairs()
        kw["yearly_harmonics"] = pairs()
        kw["light_coeff"], kw["light_decay"], kw["demand_noise_sd"] = take(3)
        return replace(self, **kw)

    # -- serialisation -----------------------------------------------------

    def to_json(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "solar_table":
                v = v.to_json()
            elif f.name == "active_hours":
                v = sorted(v)
            elif isinstance(v, tuple):
                v = [list(p) if isinstance(p, tuple) else p for p in v]
            out[f.name] = v
        return out

    @classmethod
    def from_json(cls, doc: Mapping) -> "ScmParams":
        kw = dict(doc)
        unknown = set(kw) - {f.name for f in fields(cls)}
        if unknown:
            raise ValidationError(f"unknown parameter fields: {sorted(unknown)}")
        for name in ("temp_month_harmonics", "temp_hour_harmonics", "daily_harmonics", "yearly_harmonics"):
            kw[name] = _pairs(kw[name])
        for name in ("humid_hour", "humid_month", "humid_offsets", "rad_amp"):
            kw[name] = tuple(kw[name])
        if "active_hours" in kw:
            kw["active_hours"] = frozenset(int(h) for h in kw["active_hours"])
        if "solar_table" in kw:
            kw["solar_table"] = SolarTable.from_json(kw["solar_table"])
        return cls(**kw)

    def dumps(self) -> str:
        return json.dumps(self.to_json(), indent=2, sort_keys=True)

    @classmethod
    def load(cls, path: str | Path) -> "ScmParams":
        return cls.from_json(json.loads(Path(path).read_text()))


def latent_names(n: int = 2) -> tuple[str, ...]:
    """Latent parameter names in canonical order (shared with the kernels)."""

    def harm(prefix):
        return [f"{prefix}_{kind}_{j}" for j in range(1, n + 1) for kind in ("sin", "cos")]

    return tuple(
        harm("temp_month")
        + harm("temp_hour")
        + ["rad_to_temp", "temp_base", "temp_noise_sd"]
        + ["humid_hour_sin", "humid_hour_cos", "humid_month_sin", "humid_month_cos"]
        + ["humid_alpha_offset", "humid_beta_offset"]
        + ["rad_month_amp", "rad_base_amp", "rad_sd", "wind_mean", "wind_sd"]
        + ["hvac_slope", "demand_base", "humid_coeff", "wind_coeff", "wind_asymmetry"]
        + harm("daily")
        + harm("yearly")
        + ["light_coeff", "light_decay", "demand_noise_sd"]
    )


def _flatten(p: ScmParams) -> list:
    def flat(pairs):
        return [x for pair in pairs for x in pair]

    return (
        flat(p.temp_month_harmonics)
        + flat(p.temp_hour_harmonics)
        + [p.rad_to_temp, p.temp_base, p.temp_noise_sd]
        + list(p.humid_hour)
        + list(p.humid_month)
        + list(p.humid_offsets)
        + list(p.rad_amp)
        + [p.rad_sd, p.wind_mean, p.wind_sd]
        + [p.hvac_slope, p.demand_base, p.humid_coeff, p.wind_coeff, p.wind_asymmetry]
        + flat(p.daily_harmonics)
        + flat(p.yearly_harmonics)
        + [p.light_coeff, p.light_decay, p.demand_noise_sd]
    )


def _template(n: int = 2) -> ScmParams:
    zero = tuple((0.0, 0.0) for _ in range(n))
    return ScmParams(
        zero, zero, 0.0, 0.0, 1.0, (0.0, 0.0), (0.0, 0.0), (1.0, 2.0), (0.0, 0.0), 1.0, 0.0, 1.0,
        0.0, 0.0, 0.0, 0.0, 1.0, zero, zero, 0.0, 0.0, 1.0, harmonic_order=n,
    )  # fmt: skip


def params_from_priors(priors: PriorSpec = DEFAULT_PRIORS, **overrides) -> ScmParams:
    """Parameter point at the prior locations (LogNormal entries at their medians)."""
    p = _template().with_latents(priors.points())
    return replace(p, **overrides) if overrides else p


def default_params(**overrides) -> ScmParams:
    """Model defaults: latent parameters at their prior locations, fixed quantities at their defaults."""
    return params_from_priors(DEFAULT_PRIORS, **overrides)


# ---------------------------------------------------------------------------
# structural equations


def transform_temperature(t, t_mid):
    """Distance from the comfort midpoint, ``|t - t_mid|``."""
    return abs(t - t_mid)


def _harmonic_sum(pairs, phase: float):
    total = 0.0
    for j, (s, c) in enumerate(pairs, start=1):
        total = total + s * math.sin(j * phase) + c * math.cos(j * phase)
    return total


def temp_mean(cal: CalendarPoint, rad, params: ScmParams):
    """Mean temperature (F) given calendar and radiation."""
    yearly = _harmonic_sum(params.temp_month_harmonics, TWO_PI * cal.month / 12.0)
    daily = _harmonic_sum(params.temp_hour_harmonics, TWO_PI * cal.hour / 24.0)
    return yearly + daily + params.rad_to_temp * rad + params.temp_base


def positive_shape(x):
    """Smooth map onto (0.01, inf); exceeds x by exp(-10 x + 0.1) / 10 at most, under 2e-12 for x >= 2.5."""
    return SHAPE_FLOOR + ad.softplus(SHAPE_SHARPNESS * (x - SHAPE_FLOOR)) / SHAPE_SHARPNESS


def humidity_shapes(cal: CalendarPoint, params: ScmParams):
    """Beta shape parameters for relative humidity."""
    th, th_c = params.humid_hour
    ph, ph_c = params.humid_month
    a0, b0 = params.humid_offsets
    a_raw = th * math.sin(math.pi * cal.hour / 12.0) + th_c * math.cos(math.pi * cal.hour / 12.0) + a0
    b_raw = ph * math.sin(math.pi * cal.month / 6.0) + ph_c * math.cos(math.pi * cal.month / 6.0) + b0 - a_raw
    return positive_shape(a_raw), positive_shape(b_raw)


def daylight_shape(hour: float, month: int, table: SolarTable) -> float:
    """Half-sine daylight profile; 0 outside [sunrise, sunset]."""
    rise, down = table.window(month)
    if rise <= hour <= down:
        return math.sin(math.pi * (hour - rise) / (down - rise))
    return 0.0


def radiation_mean(cal: CalendarPoint, params: ScmParams):
    shape = daylight_shape(cal.hour, cal.month, params.solar_table)
    if shape == 0.0:
        return 0.0
    p, q = params.rad_amp
    return (p * math.sin(math.pi * cal.month / 12.0) + q) * shape


@dataclass(frozen=True)
class DemandBreakdown:
    e_base: float
    e_humid: float
    e_wind: float
    e_light: float
    e_daily: float
    e_yearly: float
    total: float


def demand_components(cal: CalendarPoint, weather: WeatherObservation, params: ScmParams) -> DemandBreakdown:
    t = weather.temperature
    e_base = params.hvac_slope * transform_temperature(t, params.temp_mid) + params.demand_base
    e_humid = params.humid_coeff * weather.humidity * ad.indicator(t > params.humid_temp_threshold)
    w = weather.wind_speed
    cold = ad.indicator(t < params.wind_cold_threshold)
    hot = ad.indicator(t > params.wind_hot_threshold)
    e_wind = params.wind_coeff * w * cold - params.wind_asymmetry * params.wind_coeff * w * hot
    e_daily = _harmonic_sum(params.daily_harmonics, TWO_PI * cal.hour / 24.0)
    e_yearly = _harmonic_sum(params.yearly_harmonics, TWO_PI * cal.month / 12.0)
    if cal.hour in params.active_hours:
        e_light = params.light_coeff * ad.exp(-params.light_decay * weather.radiation)
    else:
        e_light = 0.0
    total = e_base + e_humid + e_wind + e_light + e_daily + e_yearly
    return DemandBreakdown(e_base, e_humid, e_wind, e_light, e_daily, e_yearly, total)


def predict_demand(cal: CalendarPoint, weather: WeatherObservation, params: ScmParams):
    """Conditional mean demand (MW) given observed calendar and weather."""
    return demand_components(cal, weather, params).total


def sample_record(
    cal: CalendarPoint, params: ScmParams, rng: np.random.Generator, timestamp: datetime | None = None
) -> HourlyRecord:
    """Draw one hour of weather and demand in causal order.

    Radiation and wind are normal draws truncated at zero.
    """
    rad = max(0.0, rng.normal(radiation_mean(cal, params), params.rad_sd))
    temp = rng.normal(temp_mean(cal, rad, params), params.temp_noise_sd)
    a, b = humidity_shapes(cal, params)
    rh = float(rng.beta(a, b))
    wind = max(0.0, rng.normal(params.wind_mean, params.wind_sd))
    weather = WeatherObservation(float(temp), rh, float(wind), float(rad))
    demand = rng.normal(predict_demand(cal, weather, params), params.demand_noise_sd)
    if timestamp is None:
        timestamp = datetime(2000, cal.month, 1, cal.hour, tzinfo=UTC)
    return HourlyRecord(timestamp, cal, weather, float(demand))


SIM_START = datetime(2023, 9, 1, 5, tzinfo=UTC)


def simulate_dataset(
    params: ScmParams, hours: int, seed: int, start: datetime = SIM_START, tz: TzRule = CENTRAL
) -> Dataset:
    """Hourly synthetic dataset; calendar fields derive from consecutive UTC hours."""
    rng = np.random.default_rng(seed)
    records = []
    for i in range(hours):
        ts = start + timedelta(hours=i)
        records.append(sample_record(tz.calendar(ts), params, rng, ts))
    return Dataset(tuple(records), {"simulated": True, "seed": seed, "hours": hours})


# ---------------------------------------------------------------------------
# vectorised evaluation


def harmonic_features(phase: np.ndarray, n: int) -> np.ndarray:
    """Columns sin(j*phase), cos(j*phase) for j = 1..n, interleaved."""
    cols = []
    for j in range(1, n + 1):
        cols.append(np.sin(j * phase))
        cols.append(np.cos(j * phase))
    return np.column_stack(cols)


def demand_mean_array(cols: Mapping[str, np.ndarray], params: ScmParams) -> np.ndarray:
    """Vectorised :func:`predict_demand` over dataset columns."""
    n = params.harmonic_order
    hour = np.asarray(cols["hour"])
    month = np.asarray(cols["month"])
    t = np.asarray(cols["temp_f"])
    rh = np.asarray(cols["rh"])
    w = np.asarray(cols["wind"])
    rad = np.asarray(cols["rad"])
    fh = harmonic_features(TWO_PI * hour / 24.0, n)
    fm = harmonic_features(TWO_PI * month / 12.0, n)
    daily = fh @ np.array([x for pair in params.daily_harmonics for x in pair])
    yearly = fm @ np.array([x for pair in params.yearly_harmonics for x in pair])
    base = params.hvac_slope * np.abs(t - params.temp_mid) + params.demand_base
    humid = params.humid_coeff * rh * (t > params.humid_temp_threshold)
    wind = params.wind_coeff * w * (t < params.wind_cold_threshold) - params.wind_asymmetry * params.wind_coeff * w * (
        t > params.wind_hot_threshold
    )
    active = np.isin(hour, sorted(params.active_hours))
    light = np.where(active, params.light_coeff * np.exp(-params.light_decay * rad), 0.0)
    return base + humid + wind + light + daily + yearly
