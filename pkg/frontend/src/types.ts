// JSON shapes of the farmctl HTTP API.

export type Quality = "raw" | "corrected" | "fault";

export interface ReadingJson {
  t: number;
  ch: string;
  v: number | null;
  q: Quality;
}

export interface OverrideJson {
  level: number;
  expires_t: number;
}

export interface ForecastJson {
  stage: string;
  days_to_harvest: number;
  yield_factor: number;
  stress_by_stage: Record<string, number>;
  low_confidence: boolean;
}

export interface SnapshotJson {
  t: number;
  raw: Record<string, ReadingJson>;
  corrected: Record<string, ReadingJson>;
  cmd: Record<string, number>;
  stage: string;
  stage_elapsed_s: number;
  overrides: Record<string, OverrideJson>;
  alarms: string[];
  compensation: "on" | "off";
  forecast: ForecastJson | null;
  replay?: boolean;
}

export interface HistoryJson {
  channel: string;
  bucket: number;
  points: [number, number][];
}

export interface PhotoperiodJson {
  on_hour: number;
  off_hour: number;
}

export interface PollinationJson {
  pulses_per_day: number;
  pulse_seconds: number;
}

export interface StagePlanJson {
  air_temp: number;
  soil_temp: number;
  air_humidity: number;
  co2_max: number;
  soil_moisture: number;
  ph: number;
  illumination: number;
  deadbands: Record<string, number>;
  photoperiod: PhotoperiodJson;
  pollination: PollinationJson;
}

export type RecipeJson = Record<string, StagePlanJson>;

export interface ModelChannelJson {
  channel: string;
  arch: number[];
  params: number;
  train_mse: number | null;
  val_mse: number | null;
}

export interface ModelSummaryJson {
  channels: ModelChannelJson[];
}

export interface FieldError {
  field: string;
  message: string;
}

export const STAGES = ["germination", "vegetative", "flowering", "fruiting"] as const;

export const CHANNELS: { name: string; unit: string; label: string }[] = [
  { name: "co2", unit: "ppm", label: "CO2" },
  { name: "air_temp", unit: "°C", label: "Air temp" },
  { name: "air_humidity", unit: "%RH", label: "Air humidity" },
  { name: "soil_temp", unit: "°C", label: "Soil temp" },
  { name: "soil_moisture", unit: "%VWC", label: "Soil moisture" },
  { name: "ph", unit: "pH", label: "Soil pH" },
  { name: "illumination", unit: "lux", label: "Illumination" },
  { name: "solar_radiation", unit: "W/m²", label: "Radiation" },
];

export const ACTUATORS: { name: string; binary: boolean; label: string }[] = [
  { name: "air_heater", binary: false, label: "Air heater" },
  { name: "soil_heater", binary: false, label: "Soil heater" },
  { name: "fan", binary: true, label: "Fan" },
  { name: "pump", binary: true, label: "Pump" },
  { name: "humidifier", binary: true, label: "Humidifier" },
  { name: "led", binary: false, label: "LED" },
];
