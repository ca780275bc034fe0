"""Wiring for the deployed loop: closed-loop controller bundle, the daemon
that hosts it (bus polling, datastore, API snapshots), the germination
experiment, and the log replay source for UI development.
"""

from __future__ import annotations

import json
import logging
import os
import queue
import threading
import time
from dataclasses import dataclass, field, replace

from . import bus as busmod
from . import chamber
from . import compensation as comp
from .control import (
    ControllerParams,
    ControllerState,
    Recipe,
    apply_override,
    default_recipe,
    load_recipe,
    recipe_to_json,
    tick,
)
from .datastore import DataStore
from .telemetry import (
    CONTROLLED_CHANNELS,
    DAY_SECONDS,
    Actuator,
    Channel,
    Quality,
    Reading,
    ReadingSet,
    SimClock,
    reading_to_json,
)

log = logging.getLogger(__name__)

FORECAST_PERIOD_S = 60


class ConfigError(Exception):
    pass


@dataclass
class DaemonConfig:
    """farmctl.json: {bus:{endpoint}, api:{bind}, recipe_path, model_path,
    data_dir, sim:{...}, ui_dir}. bus.endpoint empty means embedded sim."""

    bus_endpoint: str | None = None
    api_bind: str = "127.0.0.1:8642"
    recipe_path: str | None = None
    model_path: str | None = None
    data_dir: str = "farm-data"
    ui_dir: str | None = None
    sim: dict = field(default_factory=dict)

    @staticmethod
    def from_json(obj: dict) -> "DaemonConfig":
        return DaemonConfig(
            bus_endpoint=obj.get("bus", {}).get("endpoint") or None,
            api_bind=obj.get("api", {}).get("bind", "127.0.0.1:8642"),
            recipe_path=obj.get("recipe_path"),
            model_path=obj.get("model_path"),
            data_dir=obj.get("data_dir", "farm-data"),
            ui_dir=obj.get("ui_dir"),
            sim=obj.get("sim", {}),
        )

    @staticmethod
    def load(path) -> "DaemonConfig":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                return DaemonConfig.from_json(json.load(fh))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {path}: {exc}") from None


class ClosedLoopController:
    """validate -> compensate -> tick, plus in-band bookkeeping.

    `recipe` drives the actuators; `assess_recipe` (default: same) is the
    reference the stress index measures against, so an experiment can drive
    the lamp somewhere else while stress still reports deviation from the
    crop's nominal recipe.
    """

    def __init__(
        self,
        recipe: Recipe,
        models: comp.ModelSuite | None = None,
        params: ControllerParams = ControllerParams(),
        assess_recipe: Recipe | None = None,
        initial_stage: chamber.PlantStage = chamber.PlantStage.GERMINATION,
    ):
        self.recipe = recipe
        self.assess_recipe = assess_recipe or recipe
        self.models = models or {}
        self.params = params
        self.state = ControllerState(stage=initial_stage)
        self.history = comp.StageHistory()

    def correct(self, raw: ReadingSet, t_amb: float) -> ReadingSet:
        """Plausibility-validate, then run each non-fault reading through its
        channel's compensation model (if one is loaded)."""
        validated = raw.validated()
        out = {}
        for ch, r in validated.readings.items():
            model = self.models.get(ch)
            if r.is_fault() or model is None:
                out[ch] = r
                continue
            corrected = comp.forward(model, r.value, t_amb)
            out[ch] = Reading(ch, corrected.value, r.timestamp, corrected.quality)
        return ReadingSet(out, validated.timestamp)

    def step(self, raw: ReadingSet, t_amb: float, clock: SimClock):
        corrected = self.correct(raw, t_amb)
        cmd, self.state = tick(corrected, self.recipe, self.state, clock, self.params)
        plan = self.assess_recipe[self.state.stage]
        sod = clock.second_of_day
        for ch in CONTROLLED_CHANNELS:
            r = corrected[ch]
            in_band = (not r.is_fault()) and plan.in_band(ch, r.value, sod)
            self.history.record(self.state.stage, ch, in_band)
        return cmd, corrected

    def __call__(self, raw: ReadingSet, amb: chamber.AmbientConditions, clock: SimClock):
        """run_scenario controller adapter."""
        cmd, _ = self.step(raw, amb.t_amb, clock)
        return cmd

    def forecast(self) -> comp.ForecastReport:
        elapsed_days = self.state.stage_elapsed_s / DAY_SECONDS
        return comp.forecast_yield(self.history, self.state.stage, elapsed_days)


@dataclass
class StateSnapshot:
    t: int
    raw: ReadingSet
    corrected: ReadingSet
    cmd: dict
    stage: chamber.PlantStage
    stage_elapsed_s: float
    overrides: dict
    alarms: tuple
    compensation_on: bool
    forecast: comp.ForecastReport | None

    def to_json(self) -> dict:
        return {
            "t": self.t,
            "raw": {ch.value: reading_to_json(self.raw[ch]) for ch in Channel},
            "corrected": {ch.value: reading_to_json(self.corrected[ch]) for ch in Channel},
            "cmd": {a.value: self.cmd[a] for a in Actuator},
            "stage": self.stage.name.lower(),
            "stage_elapsed_s": self.stage_elapsed_s,
            "overrides": {
                a.value: {"level": o.level, "expires_t": o.expires_t} for a, o in self.overrides.items()
            },
            "alarms": list(self.alarms),
            "compensation": "on" if self.compensation_on else "off",
            "forecast": self.forecast.to_json() if self.forecast else None,
        }


def all_fault_readings(t: int) -> ReadingSet:
    nan = float("nan")
    return ReadingSet({ch: Reading(ch, nan, t, Quality.FAULT) for ch in Channel}, t)


class Daemon:
    """Hosts the 1 Hz loop; the API talks to it only through snapshots and
    the message queue, so no request can stall a tick."""

    def __init__(self, config: DaemonConfig, recipe: Recipe | None = None):
        self.config = config
        self.recipe = recipe or (load_recipe(config.recipe_path) if config.recipe_path else default_recipe())
        models = {}
        self.model_reports = {}
        if config.model_path:
            models = comp.load_models(config.model_path)
            report_path = str(config.model_path) + ".report.json"
            if os.path.exists(report_path):
                with open(report_path, "r", encoding="utf-8") as fh:
                    self.model_reports = json.load(fh)
        self.models = models
        self.controller = ClosedLoopController(self.recipe, models)
        self.store = DataStore(config.data_dir)

        self.backend = None
        if config.bus_endpoint:
            self.client = busmod.BusClient(config.bus_endpoint)
            self.t = int(time.time())
            sim_cfg = config.sim
        else:
            sim_cfg = config.sim
            spec = chamber.ScenarioSpec.from_json({k: v for k, v in sim_cfg.items() if k != "duration_s"})
            self.backend = busmod.ChamberBackend(
                initial_state=spec.initial_state,
                sensor_params=spec.sensor_params,
                ambient=spec.ambient,
                coeffs=spec.coeffs,
                seed=spec.seed,
            )
            self.client = busmod.InProcessClient(self.backend)
            self.t = 0
        self.ambient_spec = chamber.AmbientProfileSpec(**sim_cfg.get("ambient", {}))

        self._lock = threading.Lock()
        self._snapshot: StateSnapshot | None = None
        self._messages: queue.Queue = queue.Queue()
        self._stop = threading.Event()
        self._last_alarms: tuple = ()
        self._last_cmd_levels: dict | None = None
        self._last_forecast_t: int | None = None
        self._forecast: comp.ForecastReport | None = None

    # -- API-facing surface (thread-safe) -----------------------------------

    def snapshot(self) -> StateSnapshot | None:
        with self._lock:
            return self._snapshot

    def forecast(self) -> comp.ForecastReport | None:
        with self._lock:
            return self._forecast

    def current_recipe_json(self) -> dict:
        with self._lock:
            return recipe_to_json(self.recipe)

    def submit_override(self, actuator: Actuator, level: float, ttl_s: float) -> None:
        # validate eagerly so the API can 422 without waiting for a tick
        apply_override(ControllerState(), actuator, level, ttl_s, now=0.0)
        self._messages.put(("override", actuator, level, ttl_s))

    def submit_recipe(self, recipe: Recipe) -> None:
        self._messages.put(("recipe", recipe))

    def model_summary(self, full: bool = False) -> dict | None:
        if not self.models:
            return None
        channels = []
        for ch in Channel:
            model = self.models.get(ch)
            if model is None:
                continue
            n_params = sum(len(l.b) + sum(len(row) for row in l.w) for l in model.layers)
            report = self.model_reports.get(ch.value, {})
            channels.append(
                {
                    "channel": ch.value,
                    "arch": [2, comp.HIDDEN_WIDTH, 1],
                    "params": n_params,
                    "train_mse": report.get("final_train_mse"),
                    "val_mse": report.get("best_val_mse"),
                }
            )
        out = {"channels": channels}
        if full:
            out["models"] = [self.models[ch].to_json() for ch in Channel if ch in self.models]
        return out

    # -- the loop ------------------------------------------------------------

    def _drain_messages(self) -> None:
        while True:
            try:
                msg = self._messages.get_nowait()
            except queue.Empty:
                return
            if msg[0] == "override":
                _, actuator, level, ttl = msg
                self.controller.state = apply_override(self.controller.state, actuator, level, ttl, now=self.t)
            elif msg[0] == "recipe":
                with self._lock:
                    self.recipe = msg[1]
                self.controller.recipe = msg[1]
                self.controller.assess_recipe = msg[1]

    def tick_once(self) -> StateSnapshot:
        self._drain_messages()
        t = self.t
        clock = SimClock(t)
        try:
            raw = self.client.poll_all(t)
        except (busmod.BusTimeout, busmod.ProtocolError, OSError) as exc:
            log.warning("poll failed at t=%s: %s", t, exc)
            raw = all_fault_readings(t)
        t_amb = chamber.ambient_profile(t % DAY_SECONDS, self.ambient_spec).t_amb

        cmd, corrected = self.controller.step(raw, t_amb, clock)

        try:
            for actuator in Actuator:
                self.client.set(actuator, cmd[actuator])
        except (busmod.BusTimeout, busmod.ProtocolError, OSError) as exc:
            log.warning("actuation failed at t=%s: %s", t, exc)

        if self.backend is not None:
            self.backend.advance(1.0)

        self._log_tick(t, corrected, cmd)

        state = self.controller.state
        if self._last_forecast_t is None or t - self._last_forecast_t >= FORECAST_PERIOD_S:
            forecast = self.controller.forecast()
            self._last_forecast_t = t
            try:
                self.store.append({"t": t, "forecast": forecast.to_json()})
            except Exception as exc:  # noqa: BLE001 - logging must not kill control
                log.warning("forecast append failed: %s", exc)
        else:
            forecast = self._forecast

        snapshot = StateSnapshot(
            t=t,
            raw=raw,
            corrected=corrected,
            cmd=dict(cmd.levels),
            stage=state.stage,
            stage_elapsed_s=state.stage_elapsed_s,
            overrides=dict(state.overrides),
            alarms=state.alarms,
            compensation_on=bool(self.models),
            forecast=forecast,
        )
        with self._lock:
            self._snapshot = snapshot
            self._forecast = forecast
        self.t += 1
        return snapshot

    def _log_tick(self, t: int, corrected: ReadingSet, cmd) -> None:
        try:
            for ch in Channel:
                self.store.append(reading_to_json(corrected[ch]))
            levels = {a.value: cmd[a] for a in Actuator}
            if levels != self._last_cmd_levels:
                self.store.append({"t": t, "cmd": levels})
                self._last_cmd_levels = levels
            alarms = self.controller.state.alarms
            if alarms != self._last_alarms:
                for alarm in alarms:
                    if alarm not in self._last_alarms:
                        self.store.append({"t": t, "alarm": alarm})
                self._last_alarms = alarms
        except Exception as exc:  # noqa: BLE001 - logging must not kill control
            log.warning("datastore append failed at t=%s: %s", t, exc)

    def run(self, pace_s: float = 1.0, max_ticks: int | None = None) -> None:
        ticks = 0
        while not self._stop.is_set():
            started = time.monotonic()
            self.tick_once()
            ticks += 1
            if max_ticks is not None and ticks >= max_ticks:
                return
            if pace_s > 0:
                remaining = pace_s - (time.monotonic() - started)
                if remaining > 0 and self._stop.wait(remaining):
                    return

    def stop(self) -> None:
        self._stop.set()

    def shutdown(self) -> None:
        self._stop.set()
        self.store.close()
        self.client.close()


# ---------------------------------------------------------------------------
# The germination illumination experiment.

def chatter_violations(values: list[float], switches: list[float], setpoint: float, deadband: float) -> int:
    """Count actuator switches not justified by a full band crossing since
    the previous switch. values and switches are parallel per-tick series."""
    violations = 0
    last_switch_i = None
    level = switches[0]
    for i in range(1, len(switches)):
        if switches[i] == level:
            continue
        turning_on = switches[i] > level
        if last_switch_i is not None:
            window = values[last_switch_i + 1 : i + 1]
            if turning_on:
                crossed = any(v < setpoint - deadband for v in window)
            else:
                crossed = any(v > setpoint + deadband for v in window)
            if not crossed:
                violations += 1
        last_switch_i = i
        level = switches[i]
    return violations


def run_germination_experiment(
    lux_target: float,
    seed: int = 0,
    models: comp.ModelSuite | None = None,
    hours: float = 24.0,
    ambient: chamber.AmbientProfileSpec | None = None,
) -> dict:
    """Closed-loop 24 h germination run driving the lamp to lux_target.

    Stress is assessed against the nominal germination recipe (3500 lux), so
    dimming the lamp shows up as illumination stress, which is the point of
    the experiment.
    """
    nominal = default_recipe()
    control = dict(nominal)
    control[chamber.PlantStage.GERMINATION] = replace(
        nominal[chamber.PlantStage.GERMINATION], illumination=float(lux_target)
    )
    controller = ClosedLoopController(control, models, assess_recipe=nominal)

    # the chatter check runs on what the controller actually saw, so record
    # the corrected thermal readings alongside the commands
    temp_series = {Channel.AIR_TEMP: [], Channel.SOIL_TEMP: []}
    heater_series = {Channel.AIR_TEMP: [], Channel.SOIL_TEMP: []}

    def recording_controller(raw, amb, clock):
        cmd, corrected = controller.step(raw, amb.t_amb, clock)
        temp_series[Channel.AIR_TEMP].append(corrected.value(Channel.AIR_TEMP))
        heater_series[Channel.AIR_TEMP].append(cmd[Actuator.AIR_HEATER])
        temp_series[Channel.SOIL_TEMP].append(corrected.value(Channel.SOIL_TEMP))
        heater_series[Channel.SOIL_TEMP].append(cmd[Actuator.SOIL_HEATER])
        return cmd

    spec = chamber.ScenarioSpec(
        duration_s=int(hours * 3600),
        dt_s=1.0,
        seed=seed,
        ambient=ambient or chamber.AmbientProfileSpec(),
        initial_state=chamber.ChamberState(),
        stage=chamber.PlantStage.GERMINATION,
    )
    trace = chamber.run_scenario(spec, controller=recording_controller)

    plan = control[chamber.PlantStage.GERMINATION]
    photoperiod_lux = []
    duty_saturated = 0
    photoperiod_ticks = 0
    for entry in trace.entries:
        sod = entry.t % DAY_SECONDS
        if plan.photoperiod.active(sod):
            photoperiod_ticks += 1
            photoperiod_lux.append(entry.state.lux)
            if entry.cmd[Actuator.LED] >= 1.0:
                duty_saturated += 1

    mean_lux = sum(photoperiod_lux) / len(photoperiod_lux) if photoperiod_lux else 0.0
    saturated_fraction = duty_saturated / photoperiod_ticks if photoperiod_ticks else 0.0
    unreachable = saturated_fraction > 0.5 and mean_lux < 0.98 * lux_target

    g = chamber.PlantStage.GERMINATION
    in_band_fractions = {}
    per_stage = controller.history.counts.get(g, {})
    for ch in CONTROLLED_CHANNELS:
        total, out = per_stage.get(ch, [0, 0])
        in_band_fractions[ch.value] = 1.0 - (out / total if total else 0.0)

    violations = {
        "air_temp": chatter_violations(
            temp_series[Channel.AIR_TEMP], heater_series[Channel.AIR_TEMP],
            control[g].air_temp, control[g].deadbands[Channel.AIR_TEMP],
        ),
        "soil_temp": chatter_violations(
            temp_series[Channel.SOIL_TEMP], heater_series[Channel.SOIL_TEMP],
            control[g].soil_temp, control[g].deadbands[Channel.SOIL_TEMP],
        ),
    }

    forecast = controller.forecast()
    return {
        "lux_target": float(lux_target),
        "mean_photoperiod_lux": mean_lux,
        "mean_lux_relative_error": abs(mean_lux - lux_target) / lux_target if lux_target else None,
        "duty_saturated_fraction": saturated_fraction,
        "unreachable_setpoint": unreachable,
        "in_band_fractions": in_band_fractions,
        "chatter_violations": violations,
        "forecast": forecast.to_json(),
        "seed": seed,
        "hours": hours,
    }


# ---------------------------------------------------------------------------
# Replay: re-serve a recorded day through the API without a live controller.

class ReplaySource:
    """Feeds snapshots off a recorded log at a wall-time multiple; accepts
    overrides/recipe edits as in-memory overlays so the UI can be exercised
    without a controller."""

    def __init__(self, records: list[dict], speed: float = 60.0):
        if not records:
            raise ValueError("log is empty")
        self.records = records
        self.speed = speed
        self.by_tick: dict[int, dict] = {}
        for obj in records:
            t = int(obj["t"])
            slot = self.by_tick.setdefault(t, {"readings": [], "cmd": None, "alarms": []})
            if "ch" in obj:
                slot["readings"].append(obj)
            elif "cmd" in obj:
                slot["cmd"] = obj["cmd"]
            elif "alarm" in obj:
                slot["alarms"].append(obj["alarm"])
        self.ticks = sorted(self.by_tick)
        self.t0 = self.ticks[0]
        self._started = time.monotonic()
        self._lock = threading.Lock()
        self._overrides: dict[str, dict] = {}
        self._recipe_json = recipe_to_json(default_recipe())
        self._last_cmd = {a.value: 0.0 for a in Actuator}

    @staticmethod
    def trace_to_records(lines: list[dict]) -> list[dict]:
        """Convert simulator trace entries into datastore-form records."""
        records = []
        for entry in lines:
            t = int(entry["t"])
            for ch, v in entry["raw"].items():
                records.append({"t": t, "ch": ch, "v": v, "q": "raw"})
            records.append({"t": t, "cmd": entry["cmd"]})
        return records

    def replay_t(self) -> int:
        elapsed = (time.monotonic() - self._started) * self.speed
        return self.t0 + int(elapsed)

    def snapshot_json(self) -> dict:
        now = self.replay_t()
        with self._lock:
            # latest tick at or before replay time
            latest = None
            for t in self.ticks:
                if t <= now:
                    latest = t
                else:
                    break
            if latest is None:
                latest = self.t0
            slot = self.by_tick[latest]
            readings = {"raw": {}, "corrected": {}}
            for obj in slot["readings"]:
                bucket = "corrected" if obj["q"] == "corrected" else "raw"
                readings[bucket][obj["ch"]] = obj
            if slot["cmd"]:
                self._last_cmd = slot["cmd"]
            overrides = {k: v for k, v in self._overrides.items() if v["expires_t"] > now}
            self._overrides = overrides
            return {
                "t": latest,
                "raw": readings["raw"],
                "corrected": readings["corrected"] or readings["raw"],
                "cmd": self._last_cmd,
                "stage": "germination",
                "stage_elapsed_s": float(latest - self.t0),
                "overrides": dict(overrides),
                "alarms": slot["alarms"],
                "compensation": "off",
                "forecast": None,
                "replay": True,
            }

    def submit_override(self, actuator: Actuator, level: float, ttl_s: float) -> None:
        apply_override(ControllerState(), actuator, level, ttl_s, now=0.0)
        with self._lock:
            self._overrides[actuator.value] = {"level": level, "expires_t": self.replay_t() + ttl_s}

    def submit_recipe_json(self, recipe_json: dict) -> None:
        with self._lock:
            self._recipe_json = recipe_json

    def recipe_json(self) -> dict:
        with self._lock:
            return dict(self._recipe_json)

    def query(self, kind: str, key: str | None, from_t: int, to_t: int, quality: str = "corrected"):
        out = []
        for obj in self.records:
            t = int(obj["t"])
            if not from_t <= t < to_t:
                continue
            if kind == "reading" and "ch" in obj:
                if obj["ch"] == key and obj["q"] == quality and obj["v"] is not None:
                    out.append((t, float(obj["v"])))
            elif kind == "command" and "cmd" in obj and key in obj["cmd"]:
                out.append((t, float(obj["cmd"][key])))
            elif kind == "alarm" and "alarm" in obj:
                out.append((t, obj["alarm"]))
        return out
