/**
 * Typed client for the engagement-scoring HTTP API.
 *
 * Thin wrapper over fetch: every method maps one-to-one onto a service
 * endpoint and returns the parsed JSON body. Service errors arrive as
 * `{error: code, detail: message}` bodies and are rethrown as ApiError;
 * transport failures become ApiError with status 0 and code "network".
 */

export interface RegistryFeature {
  id: string;
  family: string;
  human_name: string;
  tunable: boolean;
  lower: number;
  upper: number;
}

export interface RegistryManifest {
  hash: string;
  features: RegistryFeature[];
}

export interface ScoreResponse {
  features: Record<string, number>;
  predicted: number;
}

export interface WhatIfResponse {
  predicted: number;
  adjusted: Record<string, number>;
}

export interface TuneChange {
  feature: string;
  name: string;
  percent: number;
  old: number;
  new: number;
}

export interface TuneSuggestion {
  changes: TuneChange[];
  before: number;
  after: number;
}

export interface TuneRequest {
  image?: string;
  features?: Record<string, number>;
  k?: number;
  s?: number;
  t?: number;
}

export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    readonly detail: string,
  ) {
    super(`${code}: ${detail}`);
    this.name = "ApiError";
  }
}

/** The surface the session layer depends on; StudioApi is the live one. */
export interface ApiClient {
  health(): Promise<{ status: string }>;
  registry(): Promise<RegistryManifest>;
  score(imageB64: string): Promise<ScoreResponse>;
  whatif(
    features: Record<string, number>,
    deltas: Record<string, number>,
  ): Promise<WhatIfResponse>;
  tune(request: TuneRequest, signal?: AbortSignal): Promise<TuneSuggestion>;
}

export class StudioApi implements ApiClient {
  private readonly fetchFn: typeof fetch;

  constructor(readonly baseUrl: string, fetchFn?: typeof fetch) {
    // Wrap the global so the call never carries a foreign `this`
    // (browsers reject `fetch` invoked as a method of another object).
    this.fetchFn = fetchFn ?? ((input, init) => fetch(input, init));
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (err) {
      if (err instanceof DOMException && err.name === "AbortError") throw err;
      throw new ApiError(0, "network", err instanceof Error ? err.message : String(err));
    }
    const text = await response.text();
    let body: unknown = null;
    if (text) {
      try {
        body = JSON.parse(text);
      } catch {
        body = null; // non-JSON error page; fall through to raw text
      }
    }
    if (!response.ok) {
      const record = (body ?? {}) as { error?: string; detail?: string };
      throw new ApiError(response.status, record.error ?? "http_error", record.detail ?? text);
    }
    return body as T;
  }

  private post<T>(path: string, payload: unknown, signal?: AbortSignal): Promise<T> {
    return this.request<T>(path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
      signal,
    });
  }

  health(): Promise<{ status: string }> {
    return this.request("/v1/health");
  }

  registry(): Promise<RegistryManifest> {
    return this.request("/v1/registry");
  }

  score(imageB64: string): Promise<ScoreResponse> {
    return this.post("/v1/score", { image: imageB64 });
  }

  whatif(
    features: Record<string, number>,
    deltas: Record<string, number>,
  ): Promise<WhatIfResponse> {
    return this.post("/v1/whatif", { features, deltas });
  }

  tune(request: TuneRequest, signal?: AbortSignal): Promise<TuneSuggestion> {
    return this.post("/v1/tune", request, signal);
  }
}
