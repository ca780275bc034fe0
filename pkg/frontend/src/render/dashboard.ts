// Dashboard view: stage banner, alarm strip, 8 channel tiles with
// spark-lines, 6 actuator rows with override controls.

import { formatDays, formatDuty, formatValue, stageDay } from "../format.js";
import { renderSparkline } from "../sparkline.js";
import { ACTUATORS, CHANNELS, type SnapshotJson } from "../types.js";

export interface OverrideHandlers {
  submit(actuator: string, level: number, ttlS: number): void;
  inFlight(actuator: string): boolean;
  error(actuator: string): string | null;
}

const NO_OP_HANDLERS: OverrideHandlers = {
  submit: () => undefined,
  inFlight: () => false,
  error: () => null,
};

function el(doc: Document, tag: string, className?: string, text?: string): HTMLElement {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function renderStageBanner(doc: Document, snapshot: SnapshotJson): HTMLElement {
  const banner = el(doc, "section", "stage-banner");
  banner.setAttribute("data-stage-banner", "");
  const stage = el(doc, "span", "stage-name", snapshot.stage);
  const day = el(doc, "span", "stage-day", `day ${stageDay(snapshot.stage_elapsed_s)}`);
  banner.append(stage, day);
  if (snapshot.forecast) {
    banner.append(
      el(doc, "span", "stage-harvest", `harvest in ${formatDays(snapshot.forecast.days_to_harvest)}`),
      el(doc, "span", "stage-yield", `yield factor ${snapshot.forecast.yield_factor.toFixed(2)}`),
    );
  }
  if (snapshot.compensation === "off") {
    banner.append(el(doc, "span", "comp-off", "compensation: off"));
  }
  if (snapshot.replay) {
    banner.append(el(doc, "span", "replay-tag", "REPLAY"));
  }
  return banner;
}

function renderAlarmStrip(doc: Document, alarms: string[]): HTMLElement | null {
  if (alarms.length === 0) return null;
  const strip = el(doc, "section", "alarm-strip");
  strip.setAttribute("data-alarm-strip", "");
  for (const alarm of alarms) {
    strip.append(el(doc, "span", "alarm", alarm));
  }
  return strip;
}

function renderTiles(
  doc: Document,
  snapshot: SnapshotJson,
  histories: Record<string, [number, number][]>,
): HTMLElement {
  const grid = el(doc, "section", "tile-grid");
  for (const channel of CHANNELS) {
    const reading = snapshot.corrected[channel.name];
    const faulted = !reading || reading.q === "fault" || snapshot.alarms.includes(`${channel.name}-fault`);
    const tile = el(doc, "article", faulted ? "tile tile-fault" : "tile");
    tile.setAttribute("data-tile", channel.name);
    tile.append(el(doc, "div", "tile-label", channel.label));
    const value = reading && reading.q !== "fault" ? reading.v : null;
    tile.append(el(doc, "div", "tile-value", formatValue(value, channel.unit)));
    const history = histories[channel.name];
    if (history && history.length > 1) {
      tile.append(renderSparkline(doc, history));
    }
    grid.append(tile);
  }
  return grid;
}

function renderActuatorRow(
  doc: Document,
  snapshot: SnapshotJson,
  meta: { name: string; binary: boolean; label: string },
  handlers: OverrideHandlers,
): HTMLElement {
  const row = el(doc, "div", "actuator-row");
  row.setAttribute("data-actuator-row", meta.name);
  row.append(el(doc, "span", "actuator-label", meta.label));
  row.append(el(doc, "span", "actuator-level", formatDuty(snapshot.cmd[meta.name] ?? 0, meta.binary)));

  const override = snapshot.overrides[meta.name];
  const badge = el(doc, "span", override ? "badge badge-override" : "badge badge-auto");
  badge.setAttribute("data-badge", meta.name);
  if (override) {
    const remaining = Math.max(0, Math.round(override.expires_t - snapshot.t));
    badge.textContent = `OVERRIDE ${remaining}s`;
  } else {
    badge.textContent = "AUTO";
  }
  row.append(badge);

  const busy = handlers.inFlight(meta.name);
  const controls = el(doc, "span", "override-controls");

  const levelInput = doc.createElement("input");
  levelInput.type = "number";
  levelInput.step = meta.binary ? "1" : "0.05";
  levelInput.min = "0";
  levelInput.max = "1";
  levelInput.value = meta.binary ? "1" : String(snapshot.cmd[meta.name] ?? 0);
  levelInput.disabled = busy;
  levelInput.setAttribute("data-override-level", meta.name);

  const ttlInput = doc.createElement("input");
  ttlInput.type = "number";
  ttlInput.min = "1";
  ttlInput.value = "60";
  ttlInput.disabled = busy;
  ttlInput.setAttribute("data-override-ttl", meta.name);

  const button = doc.createElement("button");
  button.textContent = busy ? "…" : "Override";
  button.disabled = busy;
  button.setAttribute("data-override-submit", meta.name);
  button.addEventListener("click", () => {
    handlers.submit(meta.name, Number(levelInput.value), Number(ttlInput.value));
  });

  controls.append(levelInput, ttlInput, button);
  row.append(controls);

  const error = handlers.error(meta.name);
  if (error) {
    const msg = el(doc, "span", "field-error", error);
    msg.setAttribute("data-override-error", meta.name);
    row.append(msg);
  }
  return row;
}

export function renderDashboard(
  doc: Document,
  snapshot: SnapshotJson | null,
  histories: Record<string, [number, number][]> = {},
  handlers: OverrideHandlers = NO_OP_HANDLERS,
): HTMLElement {
  const view = el(doc, "div", "dashboard");
  view.setAttribute("data-view", "dashboard");
  if (!snapshot) {
    view.append(el(doc, "p", "waiting", "Waiting for the controller…"));
    return view;
  }
  view.append(renderStageBanner(doc, snapshot));
  const alarms = renderAlarmStrip(doc, snapshot.alarms);
  if (alarms) view.append(alarms);
  view.append(renderTiles(doc, snapshot, histories));
  const panel = el(doc, "section", "actuator-panel");
  for (const meta of ACTUATORS) {
    panel.append(renderActuatorRow(doc, snapshot, meta, handlers));
  }
  view.append(panel);
  return view;
}
