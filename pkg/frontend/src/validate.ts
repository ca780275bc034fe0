// Client-side recipe validation. Mirrors the server's rules and field paths
// so inline errors and 422 responses land on the same controls.

import { STAGES, type FieldError, type RecipeJson } from "./types.js";

const SETPOINT_BOUNDS: Record<string, [number, number]> = {
  air_temp: [-10, 60],
  soil_temp: [-10, 60],
  air_humidity: [0, 100],
  co2_max: [0, 10000],
  soil_moisture: [0, 100],
  ph: [0, 14],
  illumination: [0, 200000],
};

export const SETPOINT_KEYS = Object.keys(SETPOINT_BOUNDS);

export function deadbandKey(setpointKey: string): string {
  return setpointKey === "co2_max" ? "co2" : setpointKey;
}

export function validateRecipe(recipe: RecipeJson): FieldError[] {
  const errors: FieldError[] = [];
  for (const stage of STAGES) {
    const plan = recipe[stage];
    if (!plan) {
      errors.push({ field: stage, message: "missing stage" });
      continue;
    }
    for (const key of SETPOINT_KEYS) {
      const value = (plan as unknown as Record<string, unknown>)[key];
      if (typeof value !== "number" || !Number.isFinite(value)) {
        errors.push({ field: `${stage}.${key}`, message: "must be a finite number" });
        continue;
      }
      const [lo, hi] = SETPOINT_BOUNDS[key];
      if (value < lo || value > hi) {
        errors.push({ field: `${stage}.${key}`, message: `outside plausible range [${lo}, ${hi}]` });
      }
      const db = plan.deadbands?.[deadbandKey(key)];
      if (typeof db !== "number") {
        errors.push({ field: `${stage}.deadbands.${deadbandKey(key)}`, message: "missing deadband" });
      } else if (!(db > 0)) {
        errors.push({ field: `${stage}.deadbands.${deadbandKey(key)}`, message: "deadband must be > 0" });
      }
    }
    const pp = plan.photoperiod;
    if (!pp || typeof pp.on_hour !== "number" || typeof pp.off_hour !== "number") {
      errors.push({ field: `${stage}.photoperiod`, message: "missing on_hour/off_hour" });
    } else if (!(pp.on_hour >= 0 && pp.on_hour < pp.off_hour && pp.off_hour <= 24)) {
      errors.push({ field: `${stage}.photoperiod`, message: "need 0 <= on_hour < off_hour <= 24" });
    }
    const pol = plan.pollination ?? { pulses_per_day: 0, pulse_seconds: 0 };
    if (
      !Number.isInteger(pol.pulses_per_day) ||
      pol.pulses_per_day < 0 ||
      !Number.isInteger(pol.pulse_seconds) ||
      pol.pulse_seconds < 0
    ) {
      errors.push({ field: `${stage}.pollination`, message: "pulse counts must be non-negative integers" });
    }
  }
  return errors;
}

export function validateOverrideLevel(binary: boolean, level: number): string | null {
  if (!Number.isFinite(level)) return "level must be a number";
  if (binary && level !== 0 && level !== 1) return "takes only 0 or 1";
  if (!binary && (level < 0 || level > 1)) return "duty must be in [0, 1]";
  return null;
}
