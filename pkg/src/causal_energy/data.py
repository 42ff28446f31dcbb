"""Domain types, unit conversion, CSV ingestion and splitting for hourly data.

All timestamps are timezone-aware UTC datetimes truncated to the hour.  The
calendar fields (local hour and month) are derived from the timestamp through a
:class:`TzRule`, which defaults to US Central time with the post-2007 US
daylight-saving schedule.
"""

from __future__ import annotations

import csv
import json
import math
from bisect import bisect_left
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from functools import cached_property
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import DuplicateTimestampError, EmptyJoinError, ValidationError

UTC = timezone.utc
KMH_PER_MPH = 1.609344

CANONICAL_COLUMNS = (
    "timestamp_utc",
    "hour",
    "month",
    "temp_f",
    "rh_frac",
    "wind_mph",
    "rad_wm2",
    "demand_mw",
)


@dataclass(frozen=True, slots=True)
class CalendarPoint:
    hour: int
    month: int

    def __post_init__(self):
        if not 0 <= self.hour <= 23:
            raise ValidationError(f"hour {self.hour} outside [0, 23]")
        if not 1 <= self.month <= 12:
            raise ValidationError(f"month {self.month} outside [1, 12]")


@dataclass(frozen=True, slots=True)
class WeatherObservation:
    """One hour of weather in model units.

    Attributes:
        temperature: degrees Fahrenheit.
        humidity: relative humidity as a fraction in [0, 1].
        wind_speed: miles per hour.
        radiation: shortwave radiation in W/m^2.
    """

    temperature: float
    humidity: float
    wind_speed: float
    radiation: float

    def __post_init__(self):
        if not 0.0 <= self.humidity <= 1.0:
            raise ValidationError(f"humidity {self.humidity} outside [0, 1]")
        if self.wind_speed < 0:
            raise ValidationError(f"negative wind speed {self.wind_speed}")
        if self.radiation < 0:
            raise ValidationError(f"negative radiation {self.radiation}")


@dataclass(frozen=True, slots=True)
class HourlyRecord:
    timestamp: datetime
    calendar: CalendarPoint
    weather: WeatherObservation | None = None
    demand: float | None = None

    def __post_init__(self):
        if self.demand is not None and not self.demand > 0:
            raise ValidationError(f"demand must be positive, got {self.demand} at {self.timestamp}")


# ---------------------------------------------------------------------------
# local time


def _nth_weekday(year: int, month: int, weekday: int, n: int) -> date:
    first = date(year, month, 1)
    offset = (weekday - first.weekday()) % 7
    return first + timedelta(days=offset + 7 * (n - 1))


@dataclass(frozen=True)
class TzRule:
    """Fixed standard offset plus an optional daylight-saving table.

    ``dst`` is either ``"us"`` (second Sunday of March to first Sunday of
    November, switching at 02:00 local), ``"none"``, or an explicit mapping
    ``{year: (start_utc, end_utc)}``.
    """

    std_offset_hours: float = -6.0
    dst_offset_hours: float = -5.0
    dst: str | Mapping[int, tuple[datetime, datetime]] = "us"

    @classmethod
    def fixed(cls, offset_hours: float) -> "TzRule":
        return cls(offset_hours, offset_hours, "none")

    def dst_window(self, year: int) -> tuple[datetime, datetime] | None:
        if self.dst == "none":
            return None
        if self.dst == "us":
            start = _nth_weekday(year, 3, 6, 2)
            end = _nth_weekday(year, 11, 6, 1)
            start_utc = datetime(start.year, start.month, start.day, 2, tzinfo=UTC) - timedelta(
                hours=self.std_offset_hours
            )
            end_utc = datetime(end.year, end.month, end.day, 2, tzinfo=UTC) - timedelta(
                hours=self.dst_offset_hours
            )
            return start_utc, end_utc
        if isinstance(self.dst, str):
            raise ValidationError(f"unknown DST rule {self.dst!r}")
        return self.dst.get(year)

    def offset_hours(self, ts: datetime) -> float:
        window = self.dst_window(ts.year)
        if window is not None and window[0] <= ts < window[1]:
            return self.dst_offset_hours
        return self.std_offset_hours

    def to_local(self, ts: datetime) -> datetime:
        """Naive local civil time for a UTC instant."""
        return (ts + timedelta(hours=self.offset_hours(ts))).replace(tzinfo=None)

    def to_utc(self, local: datetime) -> datetime:
        """UTC instant for a naive local time; ambiguous hours resolve to the first occurrence."""
        for offset in (self.dst_offset_hours, self.std_offset_hours):
            ts = (local - timedelta(hours=offset)).replace(tzinfo=UTC)
            if self.offset_hours(ts) == offset:
                return ts
        # hour skipped by the spring-forward transition
        return (local - timedelta(hours=self.std_offset_hours)).replace(tzinfo=UTC)

    def calendar(self, ts: datetime) -> CalendarPoint:
        local = self.to_local(ts)
        return CalendarPoint(local.hour, local.month)

    def to_json(self) -> dict:
        dst = self.dst
        if not isinstance(dst, str):
            dst = {str(y): [a.strftime(_TS_FMT), b.strftime(_TS_FMT)] for y, (a, b) in sorted(dst.items())}
        return {"std_offset_hours": self.std_offset_hours, "dst_offset_hours": self.dst_offset_hours, "dst": dst}

    @classmethod
    def from_json(cls, doc: Mapping) -> "TzRule":
        dst = doc.get("dst", "us")
        if isinstance(dst, Mapping):
            dst = {int(y): (parse_timestamp(a), parse_timestamp(b)) for y, (a, b) in dst.items()}
        return cls(float(doc.get("std_offset_hours", -6.0)), float(doc.get("dst_offset_hours", -5.0)), dst)


CENTRAL = TzRule()


# ---------------------------------------------------------------------------
# timestamps

_TS_FMT = "%Y-%m-%dT%H:%M:%SZ"
_FALLBACK_FORMATS = (
    "%m/%d/%Y %H:%M:%S",
    "%m/%d/%Y %H:%M",
    "%m/%d/%Y %I:%M:%S %p",
    "%m/%d/%Y %I:%M %p",
)


def parse_timestamp(text: str, *, fmt: str | None = None, naive: str = "utc", tz: TzRule = CENTRAL) -> datetime:
    """Parse a timestamp and return the UTC instant truncated to the hour.

    Naive timestamps are read as UTC unless ``naive="local"``, in which case
    they are interpreted in ``tz``.
    """
    text = text.strip()
    if fmt is not None:
        dt = datetime.strptime(text, fmt)
    else:
        iso = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
        try:
            dt = datetime.fromisoformat(iso)
        except ValueError:
            for candidate in _FALLBACK_FORMATS:
                try:
                    dt = datetime.strptime(text, candidate)
                    break
                except ValueError:
                    continue
            else:
                raise ValueError(f"unrecognised timestamp {text!r}") from None
    if dt.tzinfo is None:
        dt = tz.to_utc(dt) if naive == "local" else dt.replace(tzinfo=UTC)
    else:
        dt = dt.astimezone(UTC)
    return dt.replace(minute=0, second=0, microsecond=0)


def format_timestamp(ts: datetime) -> str:
    return ts.astimezone(UTC).strftime(_TS_FMT)


def hourly_range(start: datetime, hours: int) -> list[datetime]:
    return [start + timedelta(hours=i) for i in range(hours)]


# ---------------------------------------------------------------------------
# units


def convert_units(temp_c: float, wind_kmh: float, rh_pct: float, *, row: int | None = None) -> tuple[float, float, float]:
    """Convert Open-Meteo source units to model units (F, mph, fraction)."""
    if not 0.0 <= rh_pct <= 100.0 or math.isnan(rh_pct):
        where = f"row {row}: " if row is not None else ""
        raise ValidationError(f"{where}relative humidity {rh_pct}% outside [0, 100]")
    return temp_c * 9.0 / 5.0 + 32.0, wind_kmh / KMH_PER_MPH, rh_pct / 100.0


# ---------------------------------------------------------------------------
# containers


@dataclass(frozen=True)
class Dataset:
    """Immutable, strictly time-ordered sequence of hourly records."""

    records: tuple[HourlyRecord, ...]
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not isinstance(self.records, tuple):
            object.__setattr__(self, "records", tuple(self.records))
        prev = None
        for rec in self.records:
            if prev is not None and rec.timestamp <= prev:
                if rec.timestamp == prev:
                    raise DuplicateTimestampError(rec.timestamp)
                raise ValidationError(f"timestamps not increasing at {rec.timestamp.isoformat()}")
            prev = rec.timestamp

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[HourlyRecord]:
        return iter(self.records)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return Dataset(self.records[i])
        return self.records[i]

    @property
    def timestamps(self) -> list[datetime]:
        return [r.timestamp for r in self.records]

    def take(self, indices: Iterable[int]) -> "Dataset":
        """Records at the given positions, re-sorted by time."""
        idx = sorted(set(int(i) for i in indices))
        return Dataset(tuple(self.records[i] for i in idx))

    @cached_property
    def columns(self) -> dict[str, np.ndarray]:
        """Column view used by the numerical code; missing values are NaN."""
        n = len(self.records)
        out = {
            "hour": np.empty(n, dtype=np.int64),
            "month": np.empty(n, dtype=np.int64),
            "temp_f": np.full(n, np.nan),
            "rh": np.full(n, np.nan),
            "wind": np.full(n, np.nan),
            "rad": np.full(n, np.nan),
            "demand": np.full(n, np.nan),
        }
        for i, r in enumerate(self.records):
            out["hour"][i] = r.calendar.hour
            out["month"][i] = r.calendar.month
            if r.weather is not None:
                w = r.weather
                out["temp_f"][i] = w.temperature
                out["rh"][i] = w.humidity
                out["wind"][i] = w.wind_speed
                out["rad"][i] = w.radiation
            if r.demand is not None:
                out["demand"][i] = r.demand
        for arr in out.values():
            arr.setflags(write=False)
        return out

    @property
    def complete(self) -> bool:
        return all(r.weather is not None and r.demand is not None for r in self.records)


class WeatherTable(Mapping[datetime, WeatherObservation]):
    """Weather observations keyed by UTC hour."""

    def __init__(self, rows: Mapping[datetime, WeatherObservation], meta: dict | None = None):
        self._rows = dict(sorted(rows.items()))
        self.meta = meta or {}

    def __getitem__(self, key: datetime) -> WeatherObservation:
        return self._rows[key]

    def __iter__(self):
        return iter(self._rows)

    def __len__(self) -> int:
        return len(self._rows)


# ---------------------------------------------------------------------------
# ingestion


@dataclass(frozen=True)
class ColumnMapping:
    load_timestamp: str = "timestamp"
    load_demand: str = "MW"
    weather_time: str = "time"
    temperature: str = "temperature_2m"
    humidity: str = "relative_humidity_2m"
    wind: str = "wind_speed_10m"
    radiation: str = "shortwave_radiation"
    timestamp_format: str | None = None
    naive_timezone: str = "utc"

    @classmethod
    def load(cls, path: str | Path) -> "ColumnMapping":
        doc = json.loads(Path(path).read_text())
        known = set(cls.__dataclass_fields__)
        unknown = set(doc) - known
        if unknown:
            raise ValidationError(f"unknown column-mapping keys: {sorted(unknown)}")
        return cls(**doc)


def _resolve_column(header: Sequence[str], name: str, path: Path) -> int:
    for i, h in enumerate(header):
        h = h.strip()
        # Open-Meteo headers carry a unit suffix, e.g. "temperature_2m (°C)"
        if h == name or h.startswith(name + " ("):
            return i
    raise ValidationError(f"{path}: column {name!r} not found in header {list(header)}")


def _read_table(path: Path, required: str) -> tuple[list[str], list[tuple[int, list[str]]]]:
    """Header and (line number, row) pairs; skips any preamble before the header."""
    with open(path, newline="", encoding="utf-8-sig") as fh:
        rows = list(csv.reader(fh))
    for i, row in enumerate(rows):
        if any(c.strip() == required or c.strip().startswith(required + " (") for c in row):
            body = [(j + 1, r) for j, r in enumerate(rows[i + 1 :], start=i + 1) if any(c.strip() for c in r)]
            return row, body
    raise ValidationError(f"{path}: no header containing column {required!r}")


def _order_rows(keyed: list[tuple[datetime, int, object]]) -> tuple[list[tuple[datetime, int, object]], int]:
    """Sort by timestamp, counting out-of-order rows, and reject duplicates."""
    unsorted = sum(1 for a, b in zip(keyed, keyed[1:]) if b[0] < a[0])
    ordered = sorted(keyed, key=lambda t: (t[0], t[1]))
    for a, b in zip(ordered, ordered[1:]):
        if a[0] == b[0]:
            raise DuplicateTimestampError(b[0], b[1])
    return ordered, unsorted


def ingest_load_csv(path: str | Path, tz: TzRule = CENTRAL, mapping: ColumnMapping | None = None) -> Dataset:
    """Read an hourly load file into a demand-only :class:`Dataset`.

    Rows are keyed by their UTC hour.  Out-of-order rows are sorted and
    counted in ``meta["unsorted_rows"]``; duplicate hours raise.
    """
    path = Path(path)
    mapping = mapping or ColumnMapping()
    header, body = _read_table(path, mapping.load_timestamp)
    i_ts = _resolve_column(header, mapping.load_timestamp, path)
    i_mw = _resolve_column(header, mapping.load_demand, path)
    keyed = []
    for line, row in body:
        try:
            ts = parse_timestamp(row[i_ts], fmt=mapping.timestamp_format, naive=mapping.naive_timezone, tz=tz)
            mw = float(row[i_mw])
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"{path}: cannot parse line {line}: {exc}") from None
        if not mw > 0:
            raise ValidationError(f"{path}: line {line}: demand must be positive, got {mw}")
        keyed.append((ts, line, mw))
    ordered, unsorted = _order_rows(keyed)
    records = tuple(HourlyRecord(ts, tz.calendar(ts), None, mw) for ts, _, mw in ordered)
    meta = {"source": str(path), "rows_read": len(body), "records": len(records), "unsorted_rows": unsorted}
    return Dataset(records, meta)


def ingest_weather_csv(path: str | Path, tz: TzRule = CENTRAL, mapping: ColumnMapping | None = None) -> WeatherTable:
    """Read an hourly weather export (Celsius, %, km/h, W/m^2) into model units."""
    path = Path(path)
    mapping = mapping or ColumnMapping()
    header, body = _read_table(path, mapping.weather_time)
    cols = [
        _resolve_column(header, name, path)
        for name in (mapping.weather_time, mapping.temperature, mapping.humidity, mapping.wind, mapping.radiation)
    ]
    keyed = []
    for line, row in body:
        try:
            ts = parse_timestamp(row[cols[0]], fmt=mapping.timestamp_format, naive=mapping.naive_timezone, tz=tz)
            temp_c, rh_pct, wind_kmh, rad = (float(row[c]) for c in cols[1:])
        except (ValueError, IndexError) as exc:
            raise ValidationError(f"{path}: cannot parse line {line}: {exc}") from None
        temp_f, wind_mph, rh = convert_units(temp_c, wind_kmh, rh_pct, row=line)
        try:
            obs = WeatherObservation(temp_f, rh, wind_mph, rad)
        except ValidationError as exc:
            raise ValidationError(f"{path}: line {line}: {exc}") from None
        keyed.append((ts, line, obs))
    ordered, unsorted = _order_rows(keyed)
    meta = {"source": str(path), "rows_read": len(body), "records": len(ordered), "unsorted_rows": unsorted}
    return WeatherTable({ts: obs for ts, _, obs in ordered}, meta)


def join_hourly(load: Dataset, weather: Mapping[datetime, WeatherObservation]) -> Dataset:
    """Inner join on UTC hour; unmatched hours on either side are dropped and counted."""
    keys = [r.timestamp for r in load]
    common = set(keys).intersection(weather.keys())
    if not common:
        raise EmptyJoinError("load and weather tables share no timestamps")
    records = tuple(
        HourlyRecord(r.timestamp, r.calendar, weather[r.timestamp], r.demand) for r in load if r.timestamp in common
    )
    dropped_load = len(load) - len(common)
    dropped_weather = len(weather) - len(common)
    meta = {
        "records": len(records),
        "dropped_load": dropped_load,
        "dropped_weather": dropped_weather,
        "dropped": dropped_load + dropped_weather,
    }
    return Dataset(records, meta)


def split_by_range(ds: Dataset, start: datetime, end: datetime) -> Dataset:
    """Records with ``start <= timestamp < end``."""
    if not start < end:
        raise ValidationError(f"split start {start} is not before end {end}")
    ts = ds.timestamps
    lo = bisect_left(ts, start)
    hi = bisect_left(ts, end)
    return Dataset(ds.records[lo:hi])


# ---------------------------------------------------------------------------
# canonical interchange format


def _fmt_float(x: float | None) -> str:
    return "" if x is None else repr(float(x))


def write_canonical_csv(ds: Dataset, path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CANONICAL_COLUMNS)
        for r in ds:
            wx = r.weather
            w.writerow(
                [
                    format_timestamp(r.timestamp),
                    r.calendar.hour,
                    r.calendar.month,
                    _fmt_float(wx and wx.temperature),
                    _fmt_float(wx and wx.humidity),
                    _fmt_float(wx and wx.wind_speed),
                    _fmt_float(wx and wx.radiation),
                    _fmt_float(r.demand),
                ]
            )


def read_canonical_csv(path: str | Path, tz: TzRule | None = CENTRAL) -> Dataset:
    """Read the canonical CSV.

    When ``tz`` is given, stored calendar fields must match the ones derived
    from the timestamp.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(header) != CANONICAL_COLUMNS:
            raise ValidationError(f"{path}: header is not the canonical schema {CANONICAL_COLUMNS}")
        records = []
        for line, row in enumerate(reader, start=2):
            try:
                ts = parse_timestamp(row[0])
                cal = CalendarPoint(int(row[1]), int(row[2]))
                vals = [float(c) if c != "" else None for c in row[3:8]]
            except (ValueError, IndexError) as exc:
                raise ValidationError(f"{path}: cannot parse line {line}: {exc}") from None
            if tz is not None and tz.calendar(ts) != cal:
                raise ValidationError(f"{path}: line {line}: calendar {cal} disagrees with timestamp {row[0]}")
            weather = None if vals[0] is None else WeatherObservation(*vals[:4])
            records.append(HourlyRecord(ts, cal, weather, vals[4]))
    return Dataset(tuple(records), {"source": str(path), "records": len(records)})
