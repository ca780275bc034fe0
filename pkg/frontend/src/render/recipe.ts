// Recipe editor: one fieldset per stage mirroring the recipe schema, with
// client validation errors (and server 422s) attached to their fields.

import { deadbandKey, SETPOINT_KEYS } from "../validate.js";
import { STAGES, type FieldError, type RecipeJson } from "../types.js";

export interface RecipeEditorState {
  recipe: RecipeJson;
  errors: FieldError[];
  dirty: boolean;
  saving: boolean;
  savedMessage: string | null;
  conflict: boolean;
}

export interface RecipeHandlers {
  change(field: string, value: number): void;
  save(): void;
  reload(): void;
}

const SETPOINT_LABELS: Record<string, string> = {
  air_temp: "Air temp °C",
  soil_temp: "Soil temp °C",
  air_humidity: "Air humidity %RH",
  co2_max: "CO2 max ppm",
  soil_moisture: "Soil moisture %VWC",
  ph: "pH target",
  illumination: "Illumination lux",
};

function el(doc: Document, tag: string, className?: string, text?: string): HTMLElement {
  const node = doc.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

function numberField(
  doc: Document,
  field: string,
  label: string,
  value: number,
  errors: FieldError[],
  handlers: RecipeHandlers,
): HTMLElement {
  const wrap = el(doc, "label", "field");
  wrap.append(el(doc, "span", "field-label", label));
  const input = doc.createElement("input");
  input.type = "number";
  input.step = "any";
  input.value = String(value);
  input.name = field;
  input.setAttribute("data-field", field);
  input.addEventListener("change", () => handlers.change(field, Number(input.value)));
  wrap.append(input);
  const error = errors.find((e) => e.field === field);
  if (error) {
    const msg = el(doc, "span", "field-error", error.message);
    msg.setAttribute("data-error-for", field);
    wrap.append(msg);
    wrap.classList.add("field-invalid");
  }
  return wrap;
}

export function renderRecipeEditor(
  doc: Document,
  state: RecipeEditorState,
  handlers: RecipeHandlers,
): HTMLElement {
  const view = el(doc, "div", "recipe-editor");
  view.setAttribute("data-view", "recipe");

  const bar = el(doc, "div", "editor-bar");
  const status = el(
    doc,
    "span",
    state.dirty ? "editor-status dirty" : "editor-status",
    state.savedMessage ?? (state.dirty ? "unsaved changes" : "saved"),
  );
  status.setAttribute("data-editor-status", "");
  bar.append(status);

  const save = doc.createElement("button");
  save.textContent = state.saving ? "Saving…" : "Save recipe";
  save.disabled = state.saving || !state.dirty || state.errors.length > 0;
  save.setAttribute("data-recipe-save", "");
  save.addEventListener("click", () => handlers.save());
  bar.append(save);
  view.append(bar);

  if (state.conflict) {
    const prompt = el(doc, "div", "conflict-prompt", "Recipe changed on the server since you loaded it. ");
    prompt.setAttribute("data-conflict-prompt", "");
    const reload = doc.createElement("button");
    reload.textContent = "Reload";
    reload.addEventListener("click", () => handlers.reload());
    prompt.append(reload);
    view.append(prompt);
  }

  for (const stage of STAGES) {
    const plan = state.recipe[stage];
    if (!plan) continue;
    const fieldset = el(doc, "fieldset", "stage-plan");
    fieldset.setAttribute("data-stage-form", stage);
    fieldset.append(el(doc, "legend", undefined, stage));

    const setpoints = el(doc, "div", "field-group");
    for (const key of SETPOINT_KEYS) {
      const value = (plan as unknown as Record<string, number>)[key];
      setpoints.append(numberField(doc, `${stage}.${key}`, SETPOINT_LABELS[key], value, state.errors, handlers));
      const dbKey = deadbandKey(key);
      setpoints.append(
        numberField(
          doc,
          `${stage}.deadbands.${dbKey}`,
          `± ${dbKey}`,
          plan.deadbands[dbKey],
          state.errors,
          handlers,
        ),
      );
    }
    fieldset.append(setpoints);

    const timing = el(doc, "div", "field-group");
    timing.append(
      numberField(doc, `${stage}.photoperiod.on_hour`, "Light on (h)", plan.photoperiod.on_hour, state.errors, handlers),
      numberField(doc, `${stage}.photoperiod.off_hour`, "Light off (h)", plan.photoperiod.off_hour, state.errors, handlers),
      numberField(doc, `${stage}.pollination.pulses_per_day`, "Pollination pulses/day", plan.pollination.pulses_per_day, state.errors, handlers),
      numberField(doc, `${stage}.pollination.pulse_seconds`, "Pulse seconds", plan.pollination.pulse_seconds, state.errors, handlers),
    );
    const ppError = state.errors.find((e) => e.field === `${stage}.photoperiod`);
    if (ppError) {
      const msg = el(doc, "span", "field-error", ppError.message);
      msg.setAttribute("data-error-for", `${stage}.photoperiod`);
      timing.append(msg);
    }
    fieldset.append(timing);
    view.append(fieldset);
  }
  return view;
}
