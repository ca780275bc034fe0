// Thin fetch client for the farmctl API. Errors carry the server's
// {"error", "detail"} body when there is one.

import type { HistoryJson, ModelSummaryJson, RecipeJson, SnapshotJson } from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public code: string,
    public detail: unknown,
  ) {
    super(`${status} ${code}`);
  }
}

async function parseError(response: Response): Promise<ApiError> {
  try {
    const body = await response.json();
    return new ApiError(response.status, body.error ?? "error", body.detail);
  } catch {
    return new ApiError(response.status, "error", null);
  }
}

export class ApiClient {
  constructor(
    private base: string = "",
    private fetcher: typeof fetch = fetch,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const response = await this.fetcher(this.base + path);
    if (!response.ok) throw await parseError(response);
    return (await response.json()) as T;
  }

  getState(): Promise<SnapshotJson> {
    return this.get("/api/state");
  }

  getHistory(channel: string, fromT: number, toT: number, bucket: number): Promise<HistoryJson> {
    const params = new URLSearchParams({
      channel,
      from: String(fromT),
      to: String(toT),
      bucket: String(bucket),
    });
    return this.get(`/api/history?${params}`);
  }

  getRecipe(): Promise<RecipeJson> {
    return this.get("/api/recipe");
  }

  getModel(): Promise<ModelSummaryJson> {
    return this.get("/api/model");
  }

  async putRecipe(recipe: RecipeJson): Promise<void> {
    const response = await this.fetcher(this.base + "/api/recipe", {
      method: "PUT",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(recipe),
    });
    if (!response.ok) throw await parseError(response);
  }

  async postOverride(actuator: string, level: number, ttlS: number): Promise<void> {
    const response = await this.fetcher(this.base + "/api/override", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ actuator, level, ttl_s: ttlS }),
    });
    if (!response.ok) throw await parseError(response);
  }
}
