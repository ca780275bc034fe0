// Single-page shell: Dashboard / Recipe / Model tabs, a 1 Hz state poll,
// per-control in-flight guards. The UI holds no control state of its own:
// closing the browser changes nothing on the controller.

import { ApiClient, ApiError } from "./api.js";
import { chooseBucket } from "./format.js";
import { renderDashboard, type OverrideHandlers } from "./render/dashboard.js";
import { renderModelView } from "./render/model.js";
import { renderRecipeEditor, type RecipeEditorState } from "./render/recipe.js";
import { ACTUATORS, type FieldError, type RecipeJson, type SnapshotJson, CHANNELS, type ModelSummaryJson } from "./types.js";
import { validateOverrideLevel, validateRecipe } from "./validate.js";

export type Tab = "dashboard" | "recipe" | "model";

const HISTORY_SPAN_S = 3600;
const HISTORY_REFRESH_POLLS = 15;

export class App {
  tab: Tab = "dashboard";
  snapshot: SnapshotJson | null = null;
  stale = false;
  lastGoodAt: number | null = null; // wall ms of last successful poll
  histories: Record<string, [number, number][]> = {};
  overrideInFlight = new Set<string>();
  overrideErrors: Record<string, string> = {};
  recipeState: RecipeEditorState | null = null;
  recipeBaseline: string | null = null; // JSON of the recipe as loaded
  modelSummary: ModelSummaryJson | null = null;
  modelError: string | null = null;

  private timer: ReturnType<typeof setInterval> | null = null;
  private pollCount = 0;

  constructor(
    private doc: Document,
    private api: ApiClient,
    private root: Element,
  ) {}

  start(pollMs: number = 1000): void {
    this.render();
    void this.pollOnce();
    this.timer = setInterval(() => void this.pollOnce(), pollMs);
  }

  stop(): void {
    if (this.timer !== null) clearInterval(this.timer);
    this.timer = null;
  }

  async pollOnce(): Promise<void> {
    try {
      this.snapshot = await this.api.getState();
      this.stale = false;
      this.lastGoodAt = Date.now();
      if (this.pollCount % HISTORY_REFRESH_POLLS === 0 && this.tab === "dashboard") {
        await this.refreshHistories();
      }
      this.pollCount += 1;
    } catch {
      this.stale = true; // keep the last snapshot on screen, never blank
    }
    this.render();
  }

  async refreshHistories(): Promise<void> {
    if (!this.snapshot) return;
    const to = this.snapshot.t + 1;
    const from = Math.max(0, to - HISTORY_SPAN_S);
    const bucket = chooseBucket(to - from);
    for (const channel of CHANNELS) {
      try {
        const history = await this.api.getHistory(channel.name, from, to, bucket);
        this.histories[channel.name] = history.points;
      } catch {
        // a missing series is not an error; the tile just has no spark-line
      }
    }
  }

  setTab(tab: Tab): void {
    this.tab = tab;
    if (tab === "recipe" && !this.recipeState) void this.loadRecipe();
    if (tab === "model" && !this.modelSummary) void this.loadModel();
    if (tab === "dashboard") void this.refreshHistories();
    this.render();
  }

  // -- overrides -----------------------------------------------------------

  private overrideHandlers(): OverrideHandlers {
    return {
      submit: (actuator, level, ttl) => void this.submitOverride(actuator, level, ttl),
      inFlight: (actuator) => this.overrideInFlight.has(actuator),
      error: (actuator) => this.overrideErrors[actuator] ?? null,
    };
  }

  async submitOverride(actuator: string, level: number, ttlS: number): Promise<void> {
    if (this.overrideInFlight.has(actuator)) return;
    const meta = ACTUATORS.find((a) => a.name === actuator);
    const clientError = meta ? validateOverrideLevel(meta.binary, level) : "unknown actuator";
    if (clientError) {
      this.overrideErrors[actuator] = clientError;
      this.render();
      return; // blocked client-side, no request
    }
    if (!(ttlS > 0)) {
      this.overrideErrors[actuator] = "ttl must be > 0";
      this.render();
      return;
    }
    delete this.overrideErrors[actuator];
    this.overrideInFlight.add(actuator);
    this.render();
    try {
      await this.api.postOverride(actuator, level, ttlS);
    } catch (err) {
      this.overrideErrors[actuator] = err instanceof ApiError ? String(err.detail ?? err.code) : "request failed";
    } finally {
      this.overrideInFlight.delete(actuator);
      this.render();
    }
  }

  // -- recipe editor ---------------------------------------------------------

  async loadRecipe(): Promise<void> {
    try {
      const recipe = await this.api.getRecipe();
      this.recipeBaseline = JSON.stringify(recipe);
      this.recipeState = {
        recipe,
        errors: [],
        dirty: false,
        saving: false,
        savedMessage: null,
        conflict: false,
      };
    } catch {
      this.recipeState = null;
    }
    this.render();
  }

  changeRecipeField(field: string, value: number): void {
    if (!this.recipeState) return;
    const path = field.split(".");
    let node: Record<string, unknown> = this.recipeState.recipe as unknown as Record<string, unknown>;
    for (const key of path.slice(0, -1)) {
      node = node[key] as Record<string, unknown>;
    }
    node[path[path.length - 1]] = value;
    this.recipeState.dirty = true;
    this.recipeState.savedMessage = null;
    this.recipeState.errors = validateRecipe(this.recipeState.recipe);
    this.render();
  }

  async saveRecipe(): Promise<void> {
    const state = this.recipeState;
    if (!state || state.saving) return;
    state.errors = validateRecipe(state.recipe);
    if (state.errors.length > 0) {
      this.render();
      return; // invalid forms cannot be submitted
    }
    state.saving = true;
    this.render();
    try {
      // stale-write guard: someone else may have changed the recipe
      const current = await this.api.getRecipe();
      if (this.recipeBaseline !== null && JSON.stringify(current) !== this.recipeBaseline) {
        state.conflict = true;
        return;
      }
      await this.api.putRecipe(state.recipe);
      this.recipeBaseline = JSON.stringify(state.recipe);
      state.dirty = false;
      state.savedMessage = "saved";
    } catch (err) {
      if (err instanceof ApiError && Array.isArray(err.detail)) {
        state.errors = err.detail as FieldError[];
      } else {
        state.savedMessage = "save failed";
      }
    } finally {
      state.saving = false;
      this.render();
    }
  }

  // -- model tab ------------------------------------------------------------

  async loadModel(): Promise<void> {
    try {
      this.modelSummary = await this.api.getModel();
      this.modelError = null;
    } catch (err) {
      this.modelSummary = null;
      this.modelError =
        err instanceof ApiError && err.status === 404
          ? "No compensation model loaded; the controller is running uncompensated."
          : "Could not load the model summary.";
    }
    this.render();
  }

  // -- rendering --------------------------------------------------------------

  render(): void {
    const doc = this.doc;
    this.root.replaceChildren();

    const header = doc.createElement("header");
    header.className = "top-bar";
    const title = doc.createElement("h1");
    title.textContent = "farmctl";
    header.append(title);
    const tabs = doc.createElement("nav");
    for (const tab of ["dashboard", "recipe", "model"] as Tab[]) {
      const button = doc.createElement("button");
      button.textContent = tab;
      button.className = tab === this.tab ? "tab tab-active" : "tab";
      button.setAttribute("data-tab", tab);
      button.addEventListener("click", () => this.setTab(tab));
      tabs.append(button);
    }
    header.append(tabs);
    this.root.append(header);

    if (this.stale) {
      const banner = doc.createElement("div");
      banner.className = "stale-banner";
      banner.setAttribute("data-stale-banner", "");
      const since = this.lastGoodAt ? new Date(this.lastGoodAt).toLocaleTimeString() : "never";
      banner.textContent = `API unreachable — showing data from ${since}`;
      this.root.append(banner);
    }

    if (this.tab === "dashboard") {
      this.root.append(renderDashboard(doc, this.snapshot, this.histories, this.overrideHandlers()));
    } else if (this.tab === "recipe") {
      if (this.recipeState) {
        this.root.append(
          renderRecipeEditor(doc, this.recipeState, {
            change: (field, value) => this.changeRecipeField(field, value),
            save: () => void this.saveRecipe(),
            reload: () => void this.loadRecipe(),
          }),
        );
      } else {
        const msg = doc.createElement("p");
        msg.textContent = "Loading recipe…";
        this.root.append(msg);
      }
    } else {
      this.root.append(renderModelView(doc, this.modelSummary, this.modelError));
    }
  }
}
