"""Chamber physics and sensor transducers: the hardware stand-in.

First-order ODEs stepped with explicit Euler model the enclosed grow box;
the transducer model adds temperature-dependent bias and gaussian noise on
top of ground truth. Everything is deterministic given a seed, which is
what makes the rest of the system testable without a physical farm.
"""

from __future__ import annotations

import enum
import json
import math
import random
from dataclasses import dataclass, field, replace

from .telemetry import (
    Actuator,
    ActuatorCommandSet,
    Channel,
    Quality,
    Reading,
    ReadingSet,
    SimClock,
    all_off,
    channel_meta,
)

DAY_SECONDS = 86400


class ScenarioError(Exception):
    """A scenario could not be run to completion."""


@dataclass(frozen=True)
class ChamberCoeffs:
    """ODE coefficients, all per second. Defaults give minutes-to-hours time
    constants, fast enough for desk-scale runs but slow against the 1 s loop."""

    k_loss: float = 5e-4          # air heat loss to ambient, 1/s
    p_heat: float = 5e-3          # air heater power, degC/s at duty 1
    k_vent: float = 2e-3          # fan exchange rate with ambient, 1/s
    k_cond: float = 2e-4          # soil-air conduction, 1/s
    p_soil: float = 2e-3          # soil heater power, degC/s at duty 1
    u_co2: float = 0.05           # photosynthetic CO2 uptake, ppm/s at 10 klux
    r_resp: float = 0.005         # dark respiration, ppm/s
    h_hum: float = 0.01           # humidifier, %RH/s
    d_pump: float = 0.2           # dosing pump, %VWC/s
    w_up: float = 5e-4            # plant water uptake, %VWC/s at factor 1
    e_evap: float = 1e-4          # evaporation into air per %VWC per degC over 10
    w_evap: float = 2e-5          # soil drying per degC over 10
    l_max: float = 20000.0        # lamp output at duty 1, lux
    k_lum: float = 120.0          # luminous efficacy, lux per W/m2
    photo_ref_lux: float = 10000.0
    dark_lux: float = 50.0        # below this the plant respires, no photosynthesis
    ph_walk_sigma: float = 0.001  # per-step pH drift, reflected at the bounds below
    ph_lo: float = 5.5
    ph_hi: float = 7.5


class PlantStage(enum.Enum):
    """Growth ladder with nominal duration and physiology factors.

    Values: (order, nominal days, CO2 uptake factor, water uptake factor).
    The four-stage tomato ladder is the default crop profile.
    """

    GERMINATION = (0, 14, 0.2, 0.3)
    VEGETATIVE = (1, 30, 1.0, 1.0)
    FLOWERING = (2, 20, 0.8, 1.2)
    FRUITING = (3, 30, 0.6, 1.0)

    def __init__(self, order, days, co2_factor, water_factor):
        self.order = order
        self.days = days
        self.co2_factor = co2_factor
        self.water_factor = water_factor

    @property
    def duration_s(self) -> int:
        return self.days * DAY_SECONDS

    @property
    def next_stage(self) -> "PlantStage":
        """Following stage; fruiting is terminal."""
        ladder = list(PlantStage)
        if self.order + 1 >= len(ladder):
            return self
        return ladder[self.order + 1]

    @staticmethod
    def by_name(name: str) -> "PlantStage":
        for stage in PlantStage:
            if stage.name.lower() == name.lower():
                return stage
        raise KeyError(f"unknown stage: {name!r}")


@dataclass(frozen=True)
class ChamberState:
    """Ground-truth physical state of the box."""

    t_air: float = 20.0
    t_soil: float = 20.0
    rh: float = 50.0
    co2: float = 420.0
    moisture: float = 50.0
    ph_true: float = 6.5
    lux: float = 0.0
    radiation: float = 0.0
    clock: SimClock = field(default_factory=SimClock)

    def truth(self, channel: Channel) -> float:
        return {
            Channel.CO2: self.co2,
            Channel.AIR_TEMP: self.t_air,
            Channel.AIR_HUMIDITY: self.rh,
            Channel.SOIL_TEMP: self.t_soil,
            Channel.SOIL_MOISTURE: self.moisture,
            Channel.PH: self.ph_true,
            Channel.ILLUMINATION: self.lux,
            Channel.SOLAR_RADIATION: self.radiation,
        }[channel]

    def to_json(self) -> dict:
        return {
            "t_air": self.t_air,
            "t_soil": self.t_soil,
            "rh": self.rh,
            "co2": self.co2,
            "moisture": self.moisture,
            "ph": self.ph_true,
            "lux": self.lux,
            "radiation": self.radiation,
        }


@dataclass(frozen=True)
class AmbientConditions:
    """Conditions outside the box; ambient temperature is the disturbance the
    compensation network has to learn."""

    t_amb: float = 20.0
    rh_amb: float = 50.0
    co2_amb: float = 420.0
    lux_leak: float = 0.0


@dataclass(frozen=True)
class ChannelSensor:
    """Transducer model for one channel: multiplicative bias plus noise.

    bias_slope is per degC of ambient deviation from the 25 degC reference.
    """

    bias0: float = 0.0
    bias_slope: float = 0.0
    noise_sigma: float = 0.0


SensorParams = dict[Channel, ChannelSensor]

# Typical operating values; default noise sigma is 0.5% of these, which keeps
# the stable-temperature (25 degC) error envelope within 2% at the 99th
# percentile for every channel.
NOMINAL_VALUES: dict[Channel, float] = {
    Channel.CO2: 600.0,
    Channel.AIR_TEMP: 24.0,
    Channel.AIR_HUMIDITY: 70.0,
    Channel.SOIL_TEMP: 23.0,
    Channel.SOIL_MOISTURE: 60.0,
    Channel.PH: 6.5,
    Channel.ILLUMINATION: 10000.0,
    Channel.SOLAR_RADIATION: 10000.0 / 120.0,
}

# Bias slopes: pH is the problem child (crosses 10% bias at a 15 degC ambient
# excursion); everything else drifts by at most 2e-4 per degC.
_DEFAULT_BIAS = {
    Channel.CO2: (0.003, 1e-4),
    Channel.AIR_TEMP: (0.002, 1e-4),
    Channel.AIR_HUMIDITY: (0.003, 1.5e-4),
    Channel.SOIL_TEMP: (0.002, 1e-4),
    Channel.SOIL_MOISTURE: (0.003, 1.5e-4),
    Channel.PH: (0.004, 8e-3),
    Channel.ILLUMINATION: (0.002, 1e-4),
    Channel.SOLAR_RADIATION: (0.004, 2e-4),
}


def default_sensor_params() -> SensorParams:
    return {
        ch: ChannelSensor(
            bias0=_DEFAULT_BIAS[ch][0],
            bias_slope=_DEFAULT_BIAS[ch][1],
            noise_sigma=0.005 * NOMINAL_VALUES[ch],
        )
        for ch in Channel
    }


def ideal_sensor_params() -> SensorParams:
    """Zero-bias, zero-noise transducers: sense() becomes the identity."""
    return {ch: ChannelSensor() for ch in Channel}


def sensor_bias(sensor: ChannelSensor, t_amb: float) -> float:
    return sensor.bias0 + sensor.bias_slope * (t_amb - 25.0)


def transduce(
    truth: float,
    sensor: ChannelSensor,
    t_amb: float,
    rng: random.Random,
    floor: float | None = 0.0,
) -> float:
    """raw = truth * (1 + bias(t_amb)) + gaussian noise, floored at the
    sensor's scale zero (an ADC cannot report below its floor, so a dark lux
    sensor reads 0, not a negative count).

    Exactly one rng draw per call, so call order fixes the stream.
    """
    noise = rng.gauss(0.0, sensor.noise_sigma) if sensor.noise_sigma > 0 else 0.0
    raw = truth * (1.0 + sensor_bias(sensor, t_amb)) + noise
    if floor is not None and raw < floor:
        return floor
    return raw


def sense(
    state: ChamberState,
    params: SensorParams,
    amb: AmbientConditions,
    rng: random.Random,
) -> ReadingSet:
    """Read all 8 channels through their transducers; quality is RAW.

    Channels are sampled in declaration order, so the rng stream is fixed.
    """
    t = state.clock.seconds
    readings = {}
    for ch in Channel:
        _, lo, _ = channel_meta(ch)
        floor = lo if lo >= 0.0 else None  # temperatures may legitimately read negative
        raw = transduce(state.truth(ch), params[ch], amb.t_amb, rng, floor=floor)
        readings[ch] = Reading(ch, raw, t, Quality.RAW)
    return ReadingSet(readings, t)


def _clamp(x: float, lo: float, hi: float) -> float:
    return min(hi, max(lo, x))


def photo_rate(lux: float, stage: PlantStage, coeffs: ChamberCoeffs) -> float:
    """CO2 uptake scaling: linear in lux up to the reference level."""
    return min(1.0, lux / coeffs.photo_ref_lux) * stage.co2_factor


def step(
    state: ChamberState,
    cmd: ActuatorCommandSet,
    amb: AmbientConditions,
    stage: PlantStage,
    dt: float,
    coeffs: ChamberCoeffs = ChamberCoeffs(),
    rng: random.Random | None = None,
) -> ChamberState:
    """Advance the box by dt seconds with explicit Euler.

    The pH random walk draws from ``rng``; pass None to pin pH (the walk is a
    measurement-side nuisance process, not part of the controlled physics).
    """
    if not 0.0 < dt <= 5.0:
        raise ValueError(f"dt must be in (0, 5], got {dt}")
    for name in ("t_air", "t_soil", "rh", "co2", "moisture", "ph_true"):
        if not math.isfinite(getattr(state, name)):
            raise ValueError(f"non-finite state field: {name}")

    c = coeffs
    heater = cmd[Actuator.AIR_HEATER]
    soil_heater = cmd[Actuator.SOIL_HEATER]
    fan = cmd[Actuator.FAN]
    pump = cmd[Actuator.PUMP]
    humidifier = cmd[Actuator.HUMIDIFIER]
    led = cmd[Actuator.LED]

    lux_now = state.lux
    dark = 1.0 if lux_now < c.dark_lux else 0.0

    t_air = state.t_air + dt * (
        -c.k_loss * (state.t_air - amb.t_amb)
        + c.p_heat * heater
        + c.k_vent * fan * (amb.t_amb - state.t_air)
    )
    t_soil = state.t_soil + dt * (
        -c.k_cond * (state.t_soil - state.t_air) + c.p_soil * soil_heater
    )
    co2 = max(
        0.0,
        state.co2
        + dt
        * (
            -c.u_co2 * photo_rate(lux_now, stage, c)
            + c.r_resp * dark
            + c.k_vent * fan * (amb.co2_amb - state.co2)
        ),
    )
    evap_in = c.e_evap * state.moisture * max(0.0, state.t_air - 10.0)
    rh = _clamp(
        state.rh + dt * (evap_in + c.h_hum * humidifier - c.k_vent * fan * (state.rh - amb.rh_amb)),
        0.0,
        100.0,
    )
    moisture = _clamp(
        state.moisture
        + dt
        * (
            -c.w_up * stage.water_factor
            - c.w_evap * max(0.0, state.t_soil - 10.0)
            + c.d_pump * pump
        ),
        0.0,
        100.0,
    )

    ph = state.ph_true
    if rng is not None and c.ph_walk_sigma > 0:
        ph += rng.gauss(0.0, c.ph_walk_sigma)
        if ph < c.ph_lo:
            ph = 2 * c.ph_lo - ph
        elif ph > c.ph_hi:
            ph = 2 * c.ph_hi - ph

    # Light has no dynamics: the lamp answers the duty instantly.
    lux = amb.lux_leak + c.l_max * led
    radiation = lux / c.k_lum

    return ChamberState(
        t_air=t_air,
        t_soil=t_soil,
        rh=rh,
        co2=co2,
        moisture=moisture,
        ph_true=ph,
        lux=lux,
        radiation=radiation,
        clock=state.clock.advanced(dt),
    )


@dataclass(frozen=True)
class AmbientProfileSpec:
    """Diurnal ambient profile: sinusoidal temperature, constant the rest."""

    mean_c: float = 20.0
    amp_c: float = 5.0
    rh_amb: float = 50.0
    co2_amb: float = 420.0
    lux_leak: float = 0.0


def ambient_profile(t: float, spec: AmbientProfileSpec) -> AmbientConditions:
    """Temperature minimum at midnight, maximum at noon."""
    if t < 0:
        raise ValueError("t must be >= 0")
    phase = 2.0 * math.pi * (t % DAY_SECONDS) / DAY_SECONDS - math.pi / 2.0
    return AmbientConditions(
        t_amb=spec.mean_c + spec.amp_c * math.sin(phase),
        rh_amb=spec.rh_amb,
        co2_amb=spec.co2_amb,
        lux_leak=spec.lux_leak,
    )


@dataclass(frozen=True)
class ScenarioSpec:
    duration_s: int = 3600
    dt_s: float = 1.0
    seed: int = 0
    ambient: AmbientProfileSpec = field(default_factory=AmbientProfileSpec)
    initial_state: ChamberState = field(default_factory=ChamberState)
    sensor_params: SensorParams = field(default_factory=default_sensor_params)
    stage: PlantStage = PlantStage.GERMINATION
    coeffs: ChamberCoeffs = field(default_factory=ChamberCoeffs)

    @staticmethod
    def from_json(obj: dict) -> "ScenarioSpec":
        spec = ScenarioSpec()
        amb = AmbientProfileSpec(**obj.get("ambient", {}))
        init_fields = dict(obj.get("initial_state", {}))
        if "ph" in init_fields:
            init_fields["ph_true"] = init_fields.pop("ph")
        init = replace(spec.initial_state, **init_fields)
        params = default_sensor_params()
        for name, over in obj.get("sensor_params", {}).items():
            ch = Channel(name)
            params[ch] = replace(params[ch], **over)
        coeffs = ChamberCoeffs(**obj.get("coeffs", {}))
        return ScenarioSpec(
            duration_s=int(obj.get("duration_s", spec.duration_s)),
            dt_s=float(obj.get("dt_s", spec.dt_s)),
            seed=int(obj.get("seed", spec.seed)),
            ambient=amb,
            initial_state=init,
            sensor_params=params,
            stage=PlantStage.by_name(obj.get("stage", "germination")),
            coeffs=coeffs,
        )

    @staticmethod
    def load(path) -> "ScenarioSpec":
        with open(path, "r", encoding="utf-8") as fh:
            return ScenarioSpec.from_json(json.load(fh))


@dataclass(frozen=True)
class TraceEntry:
    """One sample: state at t, the raw readings taken from it, and the command
    applied over [t, t+dt)."""

    t: int
    state: ChamberState
    raw: ReadingSet
    cmd: ActuatorCommandSet

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "state": self.state.to_json(),
            "raw": {ch.value: self.raw.value(ch) for ch in Channel},
            "cmd": {a.value: self.cmd[a] for a in Actuator},
        }


@dataclass
class Trace:
    entries: list[TraceEntry]
    final_state: ChamberState
    clamp_events: int = 0

    def dump_jsonl(self, fh) -> None:
        for entry in self.entries:
            fh.write(json.dumps(entry.to_json()) + "\n")


def run_scenario(spec: ScenarioSpec, controller=None) -> Trace:
    """Iterate sense/controller/step for duration/dt steps.

    ``controller(raw: ReadingSet, amb: AmbientConditions, clock: SimClock)``
    must return an ActuatorCommandSet; with no controller all actuators stay
    off. Deterministic given spec.seed. A controller exception aborts the
    scenario as a ScenarioError.
    """
    if spec.duration_s <= 0:
        raise ScenarioError("duration must be positive")
    if not 0.0 < spec.dt_s <= 5.0:
        raise ScenarioError(f"dt must be in (0, 5], got {spec.dt_s}")

    rng = random.Random(spec.seed)
    state = spec.initial_state
    entries: list[TraceEntry] = []
    clamp_events = 0
    steps = int(round(spec.duration_s / spec.dt_s))

    for _ in range(steps):
        amb = ambient_profile(state.clock.t, spec.ambient)
        raw = sense(state, spec.sensor_params, amb, rng)
        if controller is None:
            cmd = all_off(state.clock.seconds)
        else:
            try:
                cmd = controller(raw, amb, state.clock)
            except Exception as exc:
                raise ScenarioError(f"controller failed at t={state.clock.seconds}: {exc}") from exc
        entries.append(TraceEntry(state.clock.seconds, state, raw, cmd))
        state = step(state, cmd, amb, spec.stage, spec.dt_s, spec.coeffs, rng)
        if (
            state.rh in (0.0, 100.0)
            or state.moisture in (0.0, 100.0)
            or state.co2 == 0.0
        ):
            clamp_events += 1

    return Trace(entries, state, clamp_events)
