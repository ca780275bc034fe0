"""The control loop: poll -> validate -> compensate -> compare with the stage
recipe -> command actuators.

Heaters, humidifier, CO2 ventilation and pump run bang-bang laws with a
deadband (hysteresis) because that is what relay hardware does; the LED gets
a proportional feed-forward duty. The engine also owns growth-stage
progression, the photoperiod, the flowering pollination schedule, manual
overrides, and the per-channel fault policy (freeze and alarm).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace

from .chamber import PlantStage
from .telemetry import (
    Actuator,
    ActuatorCommandSet,
    Channel,
    ReadingSet,
    SimClock,
    channel_meta,
)

ALL_FAULT_ALARM = "all-fault"


class RecipeError(ValueError):
    """Recipe failed validation; .errors is a list of (field_path, message)."""

    def __init__(self, errors):
        super().__init__("; ".join(f"{path}: {msg}" for path, msg in errors))
        self.errors = errors


@dataclass(frozen=True)
class Photoperiod:
    on_hour: float = 6.0
    off_hour: float = 22.0

    def active(self, second_of_day: float) -> bool:
        hour = second_of_day / 3600.0
        return self.on_hour <= hour < self.off_hour


@dataclass(frozen=True)
class Pollination:
    pulses_per_day: int = 0
    pulse_seconds: int = 0


@dataclass(frozen=True)
class StagePlan:
    """Setpoints and deadbands for the 7 controlled channels of one stage.

    co2 is an upper bound (the fan can only flush CO2 out, never add it);
    ph has a target but no actuator, it feeds the stress index only.
    """

    air_temp: float
    soil_temp: float
    air_humidity: float
    co2_max: float
    soil_moisture: float
    ph: float
    illumination: float
    deadbands: dict[Channel, float]
    photoperiod: Photoperiod = field(default_factory=Photoperiod)
    pollination: Pollination = field(default_factory=Pollination)

    def setpoint(self, channel: Channel) -> float:
        return {
            Channel.AIR_TEMP: self.air_temp,
            Channel.SOIL_TEMP: self.soil_temp,
            Channel.AIR_HUMIDITY: self.air_humidity,
            Channel.CO2: self.co2_max,
            Channel.SOIL_MOISTURE: self.soil_moisture,
            Channel.PH: self.ph,
            Channel.ILLUMINATION: self.illumination,
        }[channel]

    def lux_target(self, second_of_day: float) -> float:
        return self.illumination if self.photoperiod.active(second_of_day) else 0.0

    def in_band(self, channel: Channel, value: float, second_of_day: float) -> bool:
        db = self.deadbands[channel]
        if channel is Channel.CO2:
            return value <= self.co2_max + db
        if channel is Channel.ILLUMINATION:
            return abs(value - self.lux_target(second_of_day)) <= db
        return abs(value - self.setpoint(channel)) <= db


Recipe = dict[PlantStage, StagePlan]

_SETPOINT_KEYS = ("air_temp", "soil_temp", "air_humidity", "co2_max", "soil_moisture", "ph", "illumination")
_SETPOINT_CHANNEL = {
    "air_temp": Channel.AIR_TEMP,
    "soil_temp": Channel.SOIL_TEMP,
    "air_humidity": Channel.AIR_HUMIDITY,
    "co2_max": Channel.CO2,
    "soil_moisture": Channel.SOIL_MOISTURE,
    "ph": Channel.PH,
    "illumination": Channel.ILLUMINATION,
}


def default_recipe() -> Recipe:
    """Documented tomato defaults; only the germination 3500 lux level is
    externally sourced, the rest are declared house numbers."""
    deadbands = {
        Channel.AIR_TEMP: 0.5,
        Channel.SOIL_TEMP: 0.5,
        Channel.AIR_HUMIDITY: 5.0,
        Channel.CO2: 50.0,
        Channel.SOIL_MOISTURE: 5.0,
        Channel.PH: 0.5,
        Channel.ILLUMINATION: 500.0,
    }

    def plan(air, lux, pollination=Pollination()):
        return StagePlan(
            air_temp=air, soil_temp=23.0, air_humidity=70.0, co2_max=800.0,
            soil_moisture=60.0, ph=6.5, illumination=lux,
            deadbands=dict(deadbands), photoperiod=Photoperiod(6.0, 22.0),
            pollination=pollination,
        )

    return {
        PlantStage.GERMINATION: plan(24.0, 3500.0),
        PlantStage.VEGETATIVE: plan(25.0, 10000.0),
        PlantStage.FLOWERING: plan(23.0, 12000.0, Pollination(3, 60)),
        PlantStage.FRUITING: plan(24.0, 12000.0),
    }


def validate_recipe_json(obj) -> list[tuple[str, str]]:
    """Collect every invariant violation as (field_path, message)."""
    errors: list[tuple[str, str]] = []
    if not isinstance(obj, dict):
        return [("", "recipe must be a JSON object keyed by stage name")]
    for stage in PlantStage:
        name = stage.name.lower()
        plan = obj.get(name)
        if plan is None:
            errors.append((name, "missing stage"))
            continue
        for key in _SETPOINT_KEYS:
            if key not in plan:
                errors.append((f"{name}.{key}", "missing setpoint"))
                continue
            value = plan[key]
            if not isinstance(value, (int, float)) or not math.isfinite(value):
                errors.append((f"{name}.{key}", "must be a finite number"))
                continue
            _, lo, hi = channel_meta(_SETPOINT_CHANNEL[key])
            if not lo <= value <= hi:
                errors.append((f"{name}.{key}", f"outside plausible range [{lo}, {hi}]"))
        deadbands = plan.get("deadbands", {})
        for key in _SETPOINT_KEYS:
            db_key = "co2" if key == "co2_max" else key
            db = deadbands.get(db_key)
            if db is None:
                errors.append((f"{name}.deadbands.{db_key}", "missing deadband"))
            elif not isinstance(db, (int, float)) or not db > 0:
                errors.append((f"{name}.deadbands.{db_key}", "deadband must be > 0"))
        photoperiod = plan.get("photoperiod", {})
        on_hour = photoperiod.get("on_hour")
        off_hour = photoperiod.get("off_hour")
        if on_hour is None or off_hour is None:
            errors.append((f"{name}.photoperiod", "missing on_hour/off_hour"))
        elif not (isinstance(on_hour, (int, float)) and isinstance(off_hour, (int, float))):
            errors.append((f"{name}.photoperiod", "hours must be numbers"))
        elif not 0 <= on_hour < off_hour <= 24:
            errors.append((f"{name}.photoperiod", "need 0 <= on_hour < off_hour <= 24"))
        pollination = plan.get("pollination", {"pulses_per_day": 0, "pulse_seconds": 0})
        pulses = pollination.get("pulses_per_day", 0)
        seconds = pollination.get("pulse_seconds", 0)
        if not (isinstance(pulses, int) and pulses >= 0 and isinstance(seconds, int) and seconds >= 0):
            errors.append((f"{name}.pollination", "pulse counts must be non-negative integers"))
    return errors


def recipe_from_json(obj) -> Recipe:
    errors = validate_recipe_json(obj)
    if errors:
        raise RecipeError(errors)
    recipe: Recipe = {}
    for stage in PlantStage:
        plan = obj[stage.name.lower()]
        deadbands = {
            _SETPOINT_CHANNEL[key]: float(plan["deadbands"]["co2" if key == "co2_max" else key])
            for key in _SETPOINT_KEYS
        }
        pollination = plan.get("pollination", {})
        recipe[stage] = StagePlan(
            air_temp=float(plan["air_temp"]),
            soil_temp=float(plan["soil_temp"]),
            air_humidity=float(plan["air_humidity"]),
            co2_max=float(plan["co2_max"]),
            soil_moisture=float(plan["soil_moisture"]),
            ph=float(plan["ph"]),
            illumination=float(plan["illumination"]),
            deadbands=deadbands,
            photoperiod=Photoperiod(float(plan["photoperiod"]["on_hour"]), float(plan["photoperiod"]["off_hour"])),
            pollination=Pollination(int(pollination.get("pulses_per_day", 0)), int(pollination.get("pulse_seconds", 0))),
        )
    return recipe


def recipe_to_json(recipe: Recipe) -> dict:
    out = {}
    for stage, plan in recipe.items():
        out[stage.name.lower()] = {
            "air_temp": plan.air_temp,
            "soil_temp": plan.soil_temp,
            "air_humidity": plan.air_humidity,
            "co2_max": plan.co2_max,
            "soil_moisture": plan.soil_moisture,
            "ph": plan.ph,
            "illumination": plan.illumination,
            "deadbands": {
                ("co2" if key == "co2_max" else key): plan.deadbands[_SETPOINT_CHANNEL[key]]
                for key in _SETPOINT_KEYS
            },
            "photoperiod": {"on_hour": plan.photoperiod.on_hour, "off_hour": plan.photoperiod.off_hour},
            "pollination": {
                "pulses_per_day": plan.pollination.pulses_per_day,
                "pulse_seconds": plan.pollination.pulse_seconds,
            },
        }
    return out


def load_recipe(path) -> Recipe:
    with open(path, "r", encoding="utf-8") as fh:
        return recipe_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# Control laws.

def hysteresis(value: float, setpoint: float, deadband: float, latch: bool) -> bool:
    """Demand-below-setpoint switch: on under the band, off above it,
    unchanged inside."""
    if deadband <= 0:
        raise ValueError("deadband must be > 0")
    if value < setpoint - deadband:
        return True
    if value > setpoint + deadband:
        return False
    return latch


def led_duty(target_lux: float, ambient_component_lux: float, lamp_max_lux: float) -> float:
    """Feed-forward PWM duty to make up the shortfall between target and the
    non-lamp light component."""
    if lamp_max_lux <= 0:
        raise ValueError("lamp_max_lux must be > 0")
    return min(1.0, max(0.0, (target_lux - ambient_component_lux) / lamp_max_lux))


def pollination_windows(plan: StagePlan) -> list[tuple[float, float]]:
    """Pulse windows in seconds-of-day, evenly spaced across the photoperiod:
    start k = on + k*(off-on)/pulses."""
    pol = plan.pollination
    if pol.pulses_per_day <= 0 or pol.pulse_seconds <= 0:
        return []
    on_s = plan.photoperiod.on_hour * 3600.0
    span = (plan.photoperiod.off_hour - plan.photoperiod.on_hour) * 3600.0
    step = span / pol.pulses_per_day
    return [(on_s + k * step, on_s + k * step + pol.pulse_seconds) for k in range(pol.pulses_per_day)]


def pollination_active(plan: StagePlan, second_of_day: float) -> bool:
    return any(start <= second_of_day < end for start, end in pollination_windows(plan))


# ---------------------------------------------------------------------------
# Controller state and the tick.

@dataclass(frozen=True)
class Override:
    level: float
    expires_t: float


@dataclass(frozen=True)
class ControllerParams:
    lamp_max_lux: float = 20000.0
    pump_pulse_s: float = 10.0
    pump_cooldown_s: float = 300.0


@dataclass(frozen=True)
class ControllerState:
    stage: PlantStage = PlantStage.GERMINATION
    stage_elapsed_s: float = 0.0
    last_t: float | None = None
    air_heater_latch: bool = False
    soil_heater_latch: bool = False
    humidifier_latch: bool = False
    fan_co2_latch: bool = False
    pump_pulse_until: float = -1.0
    pump_lockout_until: float = -1.0
    overrides: dict[Actuator, Override] = field(default_factory=dict)
    last_levels: dict[Actuator, float] = field(default_factory=lambda: {a: 0.0 for a in Actuator})
    alarms: tuple[str, ...] = ()


def advance_stage(st: ControllerState, clock: SimClock | None = None) -> ControllerState:
    """Move to the next stage once the nominal duration is used up; fruiting
    is terminal and just keeps accumulating."""
    stage, elapsed = st.stage, st.stage_elapsed_s
    while stage.next_stage is not stage and elapsed >= stage.duration_s:
        stage = stage.next_stage
        elapsed = 0.0
    if stage is st.stage and elapsed == st.stage_elapsed_s:
        return st
    return replace(st, stage=stage, stage_elapsed_s=elapsed)


def apply_override(st: ControllerState, actuator: Actuator, level: float, ttl_seconds: float, now: float) -> ControllerState:
    """Pin one actuator until now+ttl; the latest override wins."""
    if ttl_seconds <= 0:
        raise ValueError("ttl must be > 0")
    if not math.isfinite(level):
        raise ValueError("level must be finite")
    if actuator.is_binary:
        if level not in (0.0, 1.0):
            raise ValueError(f"{actuator.value} takes only 0 or 1")
    elif not 0.0 <= level <= 1.0:
        raise ValueError(f"{actuator.value} duty must be in [0,1]")
    overrides = dict(st.overrides)
    overrides[actuator] = Override(float(level), now + ttl_seconds)
    return replace(st, overrides=overrides)


def tick(
    readings: ReadingSet,
    recipe: Recipe,
    st: ControllerState,
    clock: SimClock,
    params: ControllerParams = ControllerParams(),
) -> tuple[ActuatorCommandSet, ControllerState]:
    """One control period. Pure: same inputs give the same outputs.

    Readings are expected corrected (or fault-marked). A faulted channel
    freezes its actuator at the previous level and raises an alarm; an
    all-fault set drops to the safe state (heaters off, fan on, pump off,
    led unchanged).
    """
    t = clock.t
    dt = 0.0 if st.last_t is None else max(0.0, t - st.last_t)
    st = replace(st, stage_elapsed_s=st.stage_elapsed_s + dt, last_t=t)
    st = advance_stage(st)
    overrides = {a: o for a, o in st.overrides.items() if t < o.expires_t}

    plan = recipe[st.stage]
    sod = clock.second_of_day
    faults = set(readings.fault_channels())
    alarms = [f"{ch.value}-fault" for ch in sorted(faults, key=lambda c: c.value)]
    last = st.last_levels

    air_latch, soil_latch, hum_latch, fan_latch = (
        st.air_heater_latch, st.soil_heater_latch, st.humidifier_latch, st.fan_co2_latch,
    )
    pump_pulse_until, pump_lockout_until = st.pump_pulse_until, st.pump_lockout_until
    levels: dict[Actuator, float]

    if len(faults) == len(readings.readings):
        # Nothing trustworthy at all: de-energize, ventilate, keep the light.
        alarms = [ALL_FAULT_ALARM]
        levels = {
            Actuator.AIR_HEATER: 0.0,
            Actuator.SOIL_HEATER: 0.0,
            Actuator.FAN: 1.0,
            Actuator.PUMP: 0.0,
            Actuator.HUMIDIFIER: 0.0,
            Actuator.LED: last[Actuator.LED],
        }
    else:
        levels = {}

        if Channel.AIR_TEMP in faults:
            levels[Actuator.AIR_HEATER] = last[Actuator.AIR_HEATER]
        else:
            air_latch = hysteresis(
                readings.value(Channel.AIR_TEMP), plan.air_temp, plan.deadbands[Channel.AIR_TEMP], air_latch
            )
            levels[Actuator.AIR_HEATER] = 1.0 if air_latch else 0.0

        if Channel.SOIL_TEMP in faults:
            levels[Actuator.SOIL_HEATER] = last[Actuator.SOIL_HEATER]
        else:
            soil_latch = hysteresis(
                readings.value(Channel.SOIL_TEMP), plan.soil_temp, plan.deadbands[Channel.SOIL_TEMP], soil_latch
            )
            levels[Actuator.SOIL_HEATER] = 1.0 if soil_latch else 0.0

        if Channel.AIR_HUMIDITY in faults:
            levels[Actuator.HUMIDIFIER] = last[Actuator.HUMIDIFIER]
        else:
            hum_latch = hysteresis(
                readings.value(Channel.AIR_HUMIDITY), plan.air_humidity, plan.deadbands[Channel.AIR_HUMIDITY], hum_latch
            )
            levels[Actuator.HUMIDIFIER] = 1.0 if hum_latch else 0.0

        # Fan serves two demands: CO2 flushing (hysteresis above the bound)
        # and the flowering pollination pulses; either one turns it on.
        if Channel.CO2 not in faults:
            co2 = readings.value(Channel.CO2)
            db = plan.deadbands[Channel.CO2]
            if co2 > plan.co2_max + db:
                fan_latch = True
            elif co2 < plan.co2_max - db:
                fan_latch = False
        pulse = st.stage is PlantStage.FLOWERING and pollination_active(plan, sod)
        levels[Actuator.FAN] = 1.0 if (fan_latch or pulse) else 0.0

        if Channel.SOIL_MOISTURE in faults:
            levels[Actuator.PUMP] = last[Actuator.PUMP]
        else:
            if t < pump_pulse_until:
                levels[Actuator.PUMP] = 1.0
            elif (
                readings.value(Channel.SOIL_MOISTURE)
                < plan.soil_moisture - plan.deadbands[Channel.SOIL_MOISTURE]
                and t >= pump_lockout_until
            ):
                pump_pulse_until = t + params.pump_pulse_s
                pump_lockout_until = t + params.pump_cooldown_s
                levels[Actuator.PUMP] = 1.0
            else:
                levels[Actuator.PUMP] = 0.0

        if Channel.ILLUMINATION in faults:
            levels[Actuator.LED] = last[Actuator.LED]
        else:
            target = plan.lux_target(sod)
            measured = readings.value(Channel.ILLUMINATION)
            ambient = max(0.0, measured - params.lamp_max_lux * last[Actuator.LED])
            levels[Actuator.LED] = led_duty(target, ambient, params.lamp_max_lux)

    for actuator, override in overrides.items():
        levels[actuator] = override.level

    cmd = ActuatorCommandSet(levels, readings.timestamp)
    new_state = replace(
        st,
        air_heater_latch=air_latch,
        soil_heater_latch=soil_latch,
        humidifier_latch=hum_latch,
        fan_co2_latch=fan_latch,
        pump_pulse_until=pump_pulse_until,
        pump_lockout_until=pump_lockout_until,
        overrides=overrides,
        last_levels=dict(cmd.levels),
        alarms=tuple(alarms),
    )
    return cmd, new_state
