import math

import pytest

from farmctl.telemetry import (
    Actuator,
    ActuatorCommandSet,
    Channel,
    Quality,
    Reading,
    ReadingSet,
    SimClock,
    channel_meta,
    clamp_level,
    reading_from_json,
    reading_to_json,
    validate_reading,
)


def test_channel_count_and_distinct():
    assert len(Channel) == 8
    assert len({c.value for c in Channel}) == 8


def test_actuator_count():
    assert len(Actuator) == 6


def test_channel_meta_table():
    assert channel_meta(Channel.CO2) == ("ppm", 0, 10000)
    assert channel_meta(Channel.PH) == ("pH", 0, 14)
    assert channel_meta(Channel.ILLUMINATION) == ("lux", 0, 200000)


def test_channel_meta_total_and_ordered():
    for ch in Channel:
        unit, lo, hi = channel_meta(ch)
        assert isinstance(unit, str) and unit
        assert lo < hi


def test_validate_reading_in_range_identity():
    r = Reading(Channel.PH, 7.1, 100, Quality.RAW)
    assert validate_reading(r) is r


@pytest.mark.parametrize(
    "channel,value",
    [
        (Channel.PH, 15.2),
        (Channel.AIR_HUMIDITY, -3.0),
        (Channel.CO2, float("nan")),
        (Channel.SOIL_TEMP, float("inf")),
    ],
)
def test_validate_reading_out_of_range_faults(channel, value):
    r = validate_reading(Reading(channel, value, 5, Quality.RAW))
    assert r.quality is Quality.FAULT


def test_validate_reading_idempotent():
    r = Reading(Channel.PH, 15.2, 5, Quality.RAW)
    once = validate_reading(r)
    assert validate_reading(once) == once


def test_reading_json_round_trip():
    r = Reading(Channel.CO2, 612.3, 42, Quality.CORRECTED)
    obj = reading_to_json(r)
    assert obj == {"t": 42, "ch": "co2", "v": 612.3, "q": "corrected"}
    assert reading_from_json(obj) == r


def test_reading_json_nan_maps_to_null():
    r = Reading(Channel.PH, float("nan"), 1, Quality.FAULT)
    obj = reading_to_json(r)
    assert obj["v"] is None
    back = reading_from_json(obj)
    assert math.isnan(back.value) and back.quality is Quality.FAULT


def test_reading_set_requires_all_channels():
    t = 9
    readings = {c: Reading(c, 1.0, t) for c in Channel}
    rs = ReadingSet(readings, t)
    assert rs.value(Channel.PH) == 1.0
    with pytest.raises(ValueError):
        ReadingSet({c: r for c, r in readings.items() if c is not Channel.PH}, t)


def test_reading_set_rejects_mixed_timestamps():
    readings = {c: Reading(c, 1.0, 9) for c in Channel}
    readings[Channel.CO2] = Reading(Channel.CO2, 1.0, 8)
    with pytest.raises(ValueError):
        ReadingSet(readings, 9)


def test_command_set_clamps_duty_and_validates_relays():
    levels = {a: 0.0 for a in Actuator}
    levels[Actuator.LED] = 1.7
    cmd = ActuatorCommandSet(levels, 0)
    assert cmd[Actuator.LED] == 1.0

    levels[Actuator.FAN] = 0.5
    with pytest.raises(ValueError):
        ActuatorCommandSet(levels, 0)


def test_clamp_level_binary():
    assert clamp_level(Actuator.PUMP, 1.0) == 1.0
    with pytest.raises(ValueError):
        clamp_level(Actuator.PUMP, 0.3)
    with pytest.raises(ValueError):
        clamp_level(Actuator.LED, float("nan"))


def test_clock_photoperiod_arithmetic():
    clk = SimClock(86400 + 6 * 3600)
    assert clk.day == 1
    assert clk.hour_of_day == 6.0
    assert SimClock(0).advanced(5).t == 5
    with pytest.raises(ValueError):
        SimClock(0).advanced(-1)
