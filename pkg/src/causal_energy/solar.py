"""Monthly mean sunrise/sunset hours in local civil time."""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, datetime, timedelta, timezone

from .data import CENTRAL, TzRule
from .errors import ValidationError

SITE_LATITUDE = 44.6321
SITE_LONGITUDE = -100.2753


@dataclass(frozen=True)
class SolarTable:
    """Sunrise and sunset (fractional local hours) for months 1..12."""

    sunrise: tuple[float, ...]
    sunset: tuple[float, ...]

    def __post_init__(self):
        if len(self.sunrise) != 12 or len(self.sunset) != 12:
            raise ValidationError("solar table needs 12 sunrise and 12 sunset entries")
        for m, (a, b) in enumerate(zip(self.sunrise, self.sunset), start=1):
            if not 0.0 <= a < b <= 24.0:
                raise ValidationError(f"month {m}: need 0 <= sunrise < sunset <= 24, got {a}, {b}")

    def window(self, month: int) -> tuple[float, float]:
        return self.sunrise[month - 1], self.sunset[month - 1]

    def to_json(self) -> dict:
        return {"sunrise": list(self.sunrise), "sunset": list(self.sunset)}

    @classmethod
    def from_json(cls, doc) -> "SolarTable":
        return cls(tuple(float(x) for x in doc["sunrise"]), tuple(float(x) for x in doc["sunset"]))


def _sun_times(day: date, lat: float, lon: float) -> tuple[float, float]:
    """Sunrise and sunset in UTC hours (NOAA-style approximation)."""
    n = day.timetuple().tm_yday
    g = 2.0 * math.pi / 365.0 * (n - 1)
    decl = (
        0.006918
        - 0.399912 * math.cos(g)
        + 0.070257 * math.sin(g)
        - 0.006758 * math.cos(2 * g)
        + 0.000907 * math.sin(2 * g)
        - 0.002697 * math.cos(3 * g)
        + 0.00148 * math.sin(3 * g)
    )
    eqtime = 229.18 * (
        0.000075
        + 0.001868 * math.cos(g)
        - 0.032077 * math.sin(g)
        - 0.014615 * math.cos(2 * g)
        - 0.040849 * math.sin(2 * g)
    )
    phi = math.radians(lat)
    cos_ha = math.cos(math.radians(90.833)) / (math.cos(phi) * math.cos(decl)) - math.tan(phi) * math.tan(decl)
    ha = math.degrees(math.acos(max(-1.0, min(1.0, cos_ha))))
    noon = 720.0 - 4.0 * lon - eqtime
    return (noon - 4.0 * ha) / 60.0, (noon + 4.0 * ha) / 60.0


def compute_solar_table(
    lat: float = SITE_LATITUDE, lon: float = SITE_LONGITUDE, tz: TzRule = CENTRAL, year: int = 2024
) -> SolarTable:
    """Average daily sunrise/sunset per month, expressed in ``tz`` local hours."""
    rise = [[] for _ in range(12)]
    sets = [[] for _ in range(12)]
    day = date(year, 1, 1)
    while day.year == year:
        up, down = _sun_times(day, lat, lon)
        noon_utc = datetime(day.year, day.month, day.day, 12, tzinfo=timezone.utc) + timedelta(hours=-tz.std_offset_hours)
        off = tz.offset_hours(noon_utc)
        rise[day.month - 1].append(up + off)
        sets[day.month - 1].append(down + off)
        day += timedelta(days=1)
    return SolarTable(
        tuple(sum(v) / len(v) for v in rise),
        tuple(sum(v) / len(v) for v in sets),
    )
