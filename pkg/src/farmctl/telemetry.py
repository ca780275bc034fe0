"""Shared vocabulary for the farm: channels, readings, actuators, clock.

Every other module speaks these types. All of them are immutable values
and safe to pass between threads.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

DAY_SECONDS = 86400


class Channel(enum.Enum):
    """The 8 sensed signals: 7 controlled plus solar radiation (sensed-only)."""

    CO2 = "co2"
    AIR_TEMP = "air_temp"
    AIR_HUMIDITY = "air_humidity"
    SOIL_TEMP = "soil_temp"
    SOIL_MOISTURE = "soil_moisture"
    PH = "ph"
    ILLUMINATION = "illumination"
    SOLAR_RADIATION = "solar_radiation"

    def __str__(self) -> str:
        return self.value


# unit string and plausible range per channel; bounds are generous physical
# envelopes so that only a sensor fault trips them, never normal control.
_CHANNEL_META: dict[Channel, tuple[str, float, float]] = {
    Channel.CO2: ("ppm", 0.0, 10000.0),
    Channel.AIR_TEMP: ("degC", -10.0, 60.0),
    Channel.AIR_HUMIDITY: ("%RH", 0.0, 100.0),
    Channel.SOIL_TEMP: ("degC", -10.0, 60.0),
    Channel.SOIL_MOISTURE: ("%VWC", 0.0, 100.0),
    Channel.PH: ("pH", 0.0, 14.0),
    Channel.ILLUMINATION: ("lux", 0.0, 200000.0),
    Channel.SOLAR_RADIATION: ("W/m2", 0.0, 2000.0),
}

# The 7 channels with a recipe setpoint; solar radiation is observed only.
CONTROLLED_CHANNELS = (
    Channel.CO2,
    Channel.AIR_TEMP,
    Channel.AIR_HUMIDITY,
    Channel.SOIL_TEMP,
    Channel.SOIL_MOISTURE,
    Channel.PH,
    Channel.ILLUMINATION,
)


def channel_meta(channel: Channel) -> tuple[str, float, float]:
    """Return (unit, min, max) for a channel."""
    return _CHANNEL_META[channel]


def channel_by_name(name: str) -> Channel:
    try:
        return Channel(name)
    except ValueError:
        raise KeyError(f"unknown channel: {name!r}") from None


class Quality(enum.Enum):
    RAW = "raw"
    CORRECTED = "corrected"
    FAULT = "fault"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class Reading:
    """One timestamped value on one channel.

    A reading with quality FAULT carries no trusted value; consumers must
    not act on ``value`` in that case.
    """

    channel: Channel
    value: float
    timestamp: int
    quality: Quality = Quality.RAW

    def is_fault(self) -> bool:
        return self.quality is Quality.FAULT


def validate_reading(reading: Reading) -> Reading:
    """Mark a reading FAULT if its value is outside the plausible range.

    In-range readings pass through unchanged, so the check is idempotent.
    Non-finite values never compare in-range and therefore fault out.
    """
    _, lo, hi = channel_meta(reading.channel)
    if lo <= reading.value <= hi:
        return reading
    return Reading(reading.channel, reading.value, reading.timestamp, Quality.FAULT)


def reading_to_json(reading: Reading) -> dict:
    """Canonical wire/file form: {"t","ch","v","q"} with v null when untrusted."""
    v = reading.value if math.isfinite(reading.value) else None
    return {"t": reading.timestamp, "ch": reading.channel.value, "v": v, "q": reading.quality.value}


def reading_from_json(obj: dict) -> Reading:
    v = obj["v"]
    value = float("nan") if v is None else float(v)
    return Reading(channel_by_name(obj["ch"]), value, int(obj["t"]), Quality(obj["q"]))


@dataclass(frozen=True)
class ReadingSet:
    """One reading per channel, all sharing a timestamp."""

    readings: dict[Channel, Reading]
    timestamp: int

    def __post_init__(self):
        if set(self.readings) != set(Channel):
            missing = sorted(c.value for c in set(Channel) - set(self.readings))
            raise ValueError(f"reading set must cover all channels, missing: {missing}")
        for reading in self.readings.values():
            if reading.timestamp != self.timestamp:
                raise ValueError("all readings in a set must share the set timestamp")

    def __getitem__(self, channel: Channel) -> Reading:
        return self.readings[channel]

    def value(self, channel: Channel) -> float:
        return self.readings[channel].value

    def validated(self) -> "ReadingSet":
        return ReadingSet({c: validate_reading(r) for c, r in self.readings.items()}, self.timestamp)

    def fault_channels(self) -> list[Channel]:
        return [c for c in Channel if self.readings[c].is_fault()]


class Actuator(enum.Enum):
    AIR_HEATER = "air_heater"
    SOIL_HEATER = "soil_heater"
    FAN = "fan"
    PUMP = "pump"
    HUMIDIFIER = "humidifier"
    LED = "led"

    def __str__(self) -> str:
        return self.value

    @property
    def is_binary(self) -> bool:
        """Fan, pump and humidifier are relay-switched; the rest take a duty."""
        return self in (Actuator.FAN, Actuator.PUMP, Actuator.HUMIDIFIER)


def actuator_by_name(name: str) -> Actuator:
    try:
        return Actuator(name)
    except ValueError:
        raise KeyError(f"unknown actuator: {name!r}") from None


def clamp_level(actuator: Actuator, level: float) -> float:
    """Normalize a commanded level: duties clamp to [0,1], relays must be 0/1."""
    if not math.isfinite(level):
        raise ValueError(f"{actuator.value}: non-finite level")
    if actuator.is_binary:
        if level not in (0.0, 1.0):
            raise ValueError(f"{actuator.value}: on/off actuator takes only 0 or 1, got {level}")
        return float(level)
    return min(1.0, max(0.0, float(level)))


@dataclass(frozen=True)
class ActuatorCommandSet:
    """One level per actuator plus the tick timestamp."""

    levels: dict[Actuator, float]
    timestamp: int

    def __post_init__(self):
        if set(self.levels) != set(Actuator):
            missing = sorted(a.value for a in set(Actuator) - set(self.levels))
            raise ValueError(f"command set must cover all actuators, missing: {missing}")
        normalized = {a: clamp_level(a, lvl) for a, lvl in self.levels.items()}
        object.__setattr__(self, "levels", normalized)

    def __getitem__(self, actuator: Actuator) -> float:
        return self.levels[actuator]

    def to_json(self) -> dict:
        return {"t": self.timestamp, "cmd": {a.value: self.levels[a] for a in Actuator}}

    @staticmethod
    def from_json(obj: dict) -> "ActuatorCommandSet":
        levels = {actuator_by_name(k): float(v) for k, v in obj["cmd"].items()}
        return ActuatorCommandSet(levels, int(obj["t"]))


def all_off(timestamp: int) -> ActuatorCommandSet:
    return ActuatorCommandSet({a: 0.0 for a in Actuator}, timestamp)


@dataclass(frozen=True)
class SimClock:
    """Seconds since scenario start; a sim day is exactly 86400 s.

    Holds float seconds so fine-step integrations keep exact time; reading
    timestamps stay integer seconds (see Reading).
    """

    t: float = 0.0

    def advanced(self, dt: float) -> "SimClock":
        if dt < 0:
            raise ValueError("clock cannot move backwards")
        return SimClock(self.t + dt)

    @property
    def seconds(self) -> int:
        return int(self.t)

    @property
    def second_of_day(self) -> float:
        return self.t % DAY_SECONDS

    @property
    def hour_of_day(self) -> float:
        return self.second_of_day / 3600.0

    @property
    def day(self) -> int:
        return int(self.t // DAY_SECONDS)
