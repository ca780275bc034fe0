// StateSnapshot and recipe fixtures covering the variants the renderers
// must survive: healthy, single-fault, all-fault.

import type { ReadingJson, RecipeJson, SnapshotJson, StagePlanJson } from "../src/types.js";
import { CHANNELS } from "../src/types.js";

const VALUES: Record<string, number> = {
  co2: 612.3,
  air_temp: 24.1,
  air_humidity: 70.2,
  soil_temp: 23.0,
  soil_moisture: 61.5,
  ph: 6.52,
  illumination: 3500,
  solar_radiation: 29.2,
};

function reading(ch: string, t: number, q: ReadingJson["q"], v: number | null): ReadingJson {
  return { t, ch, v, q };
}

function readings(t: number, q: ReadingJson["q"]): Record<string, ReadingJson> {
  const out: Record<string, ReadingJson> = {};
  for (const { name } of CHANNELS) {
    out[name] = reading(name, t, q, q === "fault" ? null : VALUES[name]);
  }
  return out;
}

export function healthySnapshot(t = 1000): SnapshotJson {
  return {
    t,
    raw: readings(t, "raw"),
    corrected: readings(t, "corrected"),
    cmd: { air_heater: 1, soil_heater: 0, fan: 0, pump: 0, humidifier: 0, led: 0.175 },
    stage: "germination",
    stage_elapsed_s: 90000,
    overrides: {},
    alarms: [],
    compensation: "on",
    forecast: {
      stage: "germination",
      days_to_harvest: 94.0,
      yield_factor: 0.97,
      stress_by_stage: { germination: 0.03 },
      low_confidence: false,
    },
  };
}

export function singleFaultSnapshot(t = 1000): SnapshotJson {
  const snapshot = healthySnapshot(t);
  snapshot.corrected.ph = reading("ph", t, "fault", null);
  snapshot.raw.ph = reading("ph", t, "fault", null);
  snapshot.alarms = ["ph-fault"];
  return snapshot;
}

export function allFaultSnapshot(t = 1000): SnapshotJson {
  const snapshot = healthySnapshot(t);
  snapshot.raw = readings(t, "fault");
  snapshot.corrected = readings(t, "fault");
  snapshot.alarms = ["all-fault"];
  snapshot.cmd = { air_heater: 0, soil_heater: 0, fan: 1, pump: 0, humidifier: 0, led: 0.175 };
  snapshot.forecast = null;
  return snapshot;
}

export function overriddenSnapshot(t = 1000): SnapshotJson {
  const snapshot = healthySnapshot(t);
  snapshot.overrides = { fan: { level: 1, expires_t: t + 45 } };
  snapshot.cmd.fan = 1;
  return snapshot;
}

function stagePlan(overrides: Partial<StagePlanJson> = {}): StagePlanJson {
  return {
    air_temp: 24,
    soil_temp: 23,
    air_humidity: 70,
    co2_max: 800,
    soil_moisture: 60,
    ph: 6.5,
    illumination: 3500,
    deadbands: {
      air_temp: 0.5,
      soil_temp: 0.5,
      air_humidity: 5,
      co2: 50,
      soil_moisture: 5,
      ph: 0.5,
      illumination: 500,
    },
    photoperiod: { on_hour: 6, off_hour: 22 },
    pollination: { pulses_per_day: 0, pulse_seconds: 0 },
    ...overrides,
  };
}

export function validRecipe(): RecipeJson {
  return {
    germination: stagePlan(),
    vegetative: stagePlan({ air_temp: 25, illumination: 10000 }),
    flowering: stagePlan({
      air_temp: 23,
      illumination: 12000,
      pollination: { pulses_per_day: 3, pulse_seconds: 60 },
    }),
    fruiting: stagePlan({ illumination: 12000 }),
  };
}
