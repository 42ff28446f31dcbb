from datetime import date

import pytest

from causal_energy.data import TzRule
from causal_energy.errors import ValidationError
from causal_energy.solar import SolarTable, _sun_times, compute_solar_table


def test_site_table_is_plausible():
    table = compute_solar_table()
    for m in range(1, 13):
        rise, down = table.window(m)
        assert 0 <= rise < down <= 24
    # longest days near June, shortest near December
    lengths = [b - a for a, b in zip(table.sunrise, table.sunset)]
    assert max(lengths) == lengths[5] and min(lengths) == lengths[11]
    assert 15 < lengths[5] < 16 and 8.5 < lengths[11] < 9.5


def test_equinox_day_is_about_twelve_hours():
    up, down = _sun_times(date(2024, 3, 20), 0.0, 0.0)
    assert down - up == pytest.approx(12.1, abs=0.1)
    assert (up + down) / 2 == pytest.approx(12.1, abs=0.2)


def test_local_shift_follows_timezone():
    central = compute_solar_table(tz=TzRule.fixed(-6))
    mountain = compute_solar_table(tz=TzRule.fixed(-7))
    for a, b in zip(central.sunrise, mountain.sunrise):
        assert a - b == pytest.approx(1.0)


def test_validation_and_json():
    with pytest.raises(ValidationError):
        SolarTable((7.0,) * 11, (18.0,) * 11)
    with pytest.raises(ValidationError, match="month 3"):
        SolarTable((7.0,) * 2 + (19.0,) + (7.0,) * 9, (18.0,) * 12)
    t = compute_solar_table()
    assert SolarTable.from_json(t.to_json()) == t
