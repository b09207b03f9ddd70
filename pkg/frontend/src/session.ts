/**
 * Designer-session state machine behind the studio console.
 *
 * Owns everything the UI displays: the scored image's feature table, the
 * what-if slider deltas, the live predicted score, and the last tuning
 * suggestion. The session never computes a prediction itself — every
 * displayed score is a service response (the all-sliders-at-zero display
 * reuses the baseline /v1/score response rather than inventing a number).
 *
 * Concurrency: at most one /v1/whatif request is in flight; slider changes
 * that arrive meanwhile are coalesced into one follow-up request carrying
 * the latest deltas. Every request is sequence-numbered and a response is
 * applied only if it is newer than the last applied state, so a stale
 * response can never overwrite a newer display (e.g. a slow what-if landing
 * after the sliders were reset or a new image was scored).
 */

import {
  ApiClient,
  ApiError,
  RegistryFeature,
  TuneSuggestion,
} from "./api.js";

export interface FeatureRow {
  id: string;
  family: string;
  humanName: string;
  tunable: boolean;
  lower: number;
  upper: number;
  value: number;
  adjusted: number;
}

export interface Banner {
  kind: "error" | "guidance";
  message: string;
  retry?: () => void;
}

export interface SessionOptions {
  /** Default suggestion breadth (max features changed at once). */
  k: number;
  /** Max percent adjustment per feature; slider bounds. */
  s: number;
  /** Percent step sliders snap to. */
  t: number;
  /** Client-side upload limit in bytes; oversized files never hit the wire. */
  maxImageBytes: number;
  /** Delay before a slider change fires a what-if request (0 = immediate). */
  debounceMs: number;
}

export const DEFAULT_OPTIONS: SessionOptions = {
  k: 2,
  s: 24,
  t: 4,
  maxImageBytes: 5 * 1024 * 1024,
  debounceMs: 0,
};

export interface SessionState {
  imageName: string | null;
  imageB64: string | null;
  rows: FeatureRow[];
  baseline: number | null;
  displayed: number | null;
  deltas: Record<string, number>;
  suggestion: TuneSuggestion | null;
  kClamped: boolean;
  whatifInFlight: boolean;
  suggestInFlight: boolean;
  banner: Banner | null;
}

export class StudioSession {
  private readonly opts: SessionOptions;
  private readonly listeners = new Set<(state: SessionState) => void>();
  private readonly grid: number[];

  private manifest: RegistryFeature[] | null = null;
  private imageName: string | null = null;
  private imageB64: string | null = null;
  private baselineFeatures: Record<string, number> | null = null;
  private adjustedFeatures: Record<string, number> | null = null;
  private baseline: number | null = null;
  private displayed: number | null = null;
  private deltas: Record<string, number> = {};
  private suggestion: TuneSuggestion | null = null;
  private kClamped = false;
  private banner: Banner | null = null;

  private seq = 0;
  private lastApplied = 0;
  private current: Promise<void> | null = null;
  private queued = false;
  private debounceTimer: ReturnType<typeof setTimeout> | null = null;
  private suggestController: AbortController | null = null;
  private suggestInFlight = false;

  constructor(
    private readonly api: ApiClient,
    options: Partial<SessionOptions> = {},
  ) {
    this.opts = { ...DEFAULT_OPTIONS, ...options };
    if (!(this.opts.t > 0) || !(this.opts.s >= this.opts.t)) {
      throw new Error(`invalid slider limits: s=${this.opts.s}, t=${this.opts.t}`);
    }
    this.grid = buildPercentGrid(this.opts.s, this.opts.t);
  }

  get options(): SessionOptions {
    return { ...this.opts };
  }

  /** Legal slider positions: 0, ±t, ±2t, ... capped and closed at ±s. */
  percentGrid(): number[] {
    return [...this.grid];
  }

  subscribe(listener: (state: SessionState) => void): () => void {
    this.listeners.add(listener);
    return () => this.listeners.delete(listener);
  }

  getState(): SessionState {
    return {
      imageName: this.imageName,
      imageB64: this.imageB64,
      rows: this.buildRows(),
      baseline: this.baseline,
      displayed: this.displayed,
      deltas: { ...this.deltas },
      suggestion: this.suggestion,
      kClamped: this.kClamped,
      whatifInFlight: this.current !== null,
      suggestInFlight: this.suggestInFlight,
      banner: this.banner,
    };
  }

  /**
   * Score an uploaded image and (re)populate the session. Returns false and
   * posts a banner without any request when the file exceeds the size limit
   * or the service call fails; network/service failures get a retry action.
   */
  async scoreImage(imageB64: string, byteLength: number, name = "image"): Promise<boolean> {
    if (byteLength > this.opts.maxImageBytes) {
      this.banner = {
        kind: "error",
        message:
          `${name} is ${byteLength} bytes; the limit is ` +
          `${this.opts.maxImageBytes} bytes. Not uploaded.`,
      };
      this.notify();
      return false;
    }
    try {
      if (!this.manifest) {
        this.manifest = (await this.api.registry()).features;
      }
      const scored = await this.api.score(imageB64);
      // Anything still in flight belongs to the previous image.
      this.lastApplied = ++this.seq;
      this.queued = false;
      this.imageName = name;
      this.imageB64 = imageB64;
      this.baselineFeatures = { ...scored.features };
      this.adjustedFeatures = { ...scored.features };
      this.baseline = scored.predicted;
      this.displayed = scored.predicted;
      this.deltas = {};
      this.suggestion = null;
      this.kClamped = false;
      this.banner = null;
      this.notify();
      return true;
    } catch (err) {
      this.banner = {
        kind: "error",
        message: describeError(err),
        retry: () => void this.scoreImage(imageB64, byteLength, name),
      };
      this.notify();
      return false;
    }
  }

  /**
   * Move one what-if slider. The raw percent snaps to the nearest legal
   * grid position; only tunable features have sliders.
   */
  setSlider(id: string, rawPercent: number): number {
    const meta = this.requireFeature(id);
    if (!meta.tunable) {
      throw new Error(`${id} is not tunable; it has no slider`);
    }
    if (!Number.isFinite(rawPercent)) {
      throw new Error(`invalid percent for ${id}: ${rawPercent}`);
    }
    const snapped = this.snapPercent(rawPercent);
    if (snapped === 0) {
      delete this.deltas[id];
    } else {
      this.deltas[id] = snapped;
    }
    this.scheduleRefresh();
    return snapped;
  }

  /** Return every slider to zero; the display returns to the baseline. */
  resetSliders(): void {
    this.requireSession();
    this.deltas = {};
    this.scheduleRefresh();
  }

  /**
   * Copy the last suggestion's percent changes onto the sliders, replacing
   * whatever was set, and refresh the live prediction. After the refresh
   * settles the displayed score equals the suggestion's `after` exactly —
   * both numbers come from the same service-side adjustment path.
   */
  applySuggestion(): void {
    this.requireSession();
    if (!this.suggestion) {
      throw new Error("no suggestion to apply");
    }
    const next: Record<string, number> = {};
    for (const change of this.suggestion.changes) {
      // Suggestion percents are already on the service's grid; copy them
      // verbatim rather than re-snapping so the replay is exact.
      next[change.feature] = change.percent;
    }
    this.deltas = next;
    this.scheduleRefresh();
  }

  /**
   * Ask the service for the best bounded change set, computed from the
   * baseline image (sliders do not influence the search). `k` larger than
   * the number of tunable features is clamped client-side and annotated via
   * state.kClamped. A previous unresolved request is cancelled first.
   */
  async requestSuggestions(k?: number): Promise<TuneSuggestion | null> {
    this.requireSession();
    const requested = k ?? this.opts.k;
    const tunableCount = (this.manifest ?? []).filter((f) => f.tunable).length;
    const effective = Math.max(1, Math.min(requested, tunableCount));
    this.kClamped = requested > tunableCount;

    this.suggestController?.abort();
    const controller = new AbortController();
    this.suggestController = controller;
    this.suggestInFlight = true;
    this.notify();
    try {
      const suggestion = await this.api.tune(
        {
          features: this.baselineFeatures!,
          k: effective,
          s: this.opts.s,
          t: this.opts.t,
        },
        controller.signal,
      );
      this.suggestion = suggestion;
      this.banner = null;
      return suggestion;
    } catch (err) {
      if (isAbort(err)) {
        return null; // superseded or cancelled; keep current state
      }
      if (err instanceof ApiError && err.code === "budget_exceeded") {
        this.banner = {
          kind: "guidance",
          message:
            `The suggestion search is too large (${err.detail}). ` +
            `Reduce k or increase the step t.`,
        };
      } else {
        this.banner = {
          kind: "error",
          message: describeError(err),
          retry: () => void this.requestSuggestions(k),
        };
      }
      return null;
    } finally {
      if (this.suggestController === controller) {
        this.suggestController = null;
        this.suggestInFlight = false;
      }
      this.notify();
    }
  }

  cancelSuggestion(): void {
    this.suggestController?.abort();
  }

  /** Resolves once no what-if work is pending (debounce, in-flight, queued). */
  async settle(): Promise<void> {
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
      this.debounceTimer = null;
      this.refresh();
    }
    while (this.current) {
      await this.current;
    }
  }

  // -- internals ----------------------------------------------------------

  private snapPercent(raw: number): number {
    let best = 0;
    let bestDist = Infinity;
    for (const g of this.grid) {
      const dist = Math.abs(g - raw);
      // Ties go to the smaller magnitude (the conservative move).
      if (dist < bestDist - 1e-12 || (Math.abs(dist - bestDist) <= 1e-12 && Math.abs(g) < Math.abs(best))) {
        best = g;
        bestDist = dist;
      }
    }
    return best;
  }

  private scheduleRefresh(): void {
    if (this.opts.debounceMs <= 0) {
      this.refresh();
      return;
    }
    if (this.debounceTimer !== null) {
      clearTimeout(this.debounceTimer);
    }
    this.debounceTimer = setTimeout(() => {
      this.debounceTimer = null;
      this.refresh();
    }, this.opts.debounceMs);
  }

  private refresh(): void {
    this.requireSession();
    if (Object.keys(this.deltas).length === 0) {
      // Identity: show the baseline score the service already gave us, and
      // fence off any in-flight what-if so its late response is stale.
      this.lastApplied = ++this.seq;
      this.queued = false;
      this.displayed = this.baseline;
      this.adjustedFeatures = { ...this.baselineFeatures! };
      this.notify();
      return;
    }
    this.pump();
  }

  private pump(): void {
    if (this.current) {
      this.queued = true;
      return;
    }
    const mySeq = ++this.seq;
    const deltas = { ...this.deltas };
    const features = this.baselineFeatures!;
    this.current = this.api
      .whatif(features, deltas)
      .then((res) => {
        if (mySeq > this.lastApplied) {
          this.lastApplied = mySeq;
          this.displayed = res.predicted;
          this.adjustedFeatures = { ...res.adjusted };
          this.banner = null;
        }
      })
      .catch((err) => {
        if (mySeq > this.lastApplied) {
          this.banner = {
            kind: "error",
            message: describeError(err),
            retry: () => this.scheduleRefresh(),
          };
        }
      })
      .finally(() => {
        this.current = null;
        if (this.queued) {
          this.queued = false;
          this.refresh();
        } else {
          this.notify();
        }
      });
    this.notify();
  }

  private buildRows(): FeatureRow[] {
    if (!this.manifest || !this.baselineFeatures) {
      return [];
    }
    const adjusted = this.adjustedFeatures ?? this.baselineFeatures;
    return this.manifest.map((meta) => ({
      id: meta.id,
      family: meta.family,
      humanName: meta.human_name,
      tunable: meta.tunable,
      lower: meta.lower,
      upper: meta.upper,
      value: this.baselineFeatures![meta.id] ?? NaN,
      adjusted: adjusted[meta.id] ?? NaN,
    }));
  }

  private requireSession(): void {
    if (!this.baselineFeatures) {
      throw new Error("no scored image in the session yet");
    }
  }

  private requireFeature(id: string): RegistryFeature {
    this.requireSession();
    const meta = this.manifest?.find((f) => f.id === id);
    if (!meta) {
      throw new Error(`unknown feature: ${id}`);
    }
    return meta;
  }

  private notify(): void {
    const snapshot = this.getState();
    for (const listener of this.listeners) {
      listener(snapshot);
    }
  }
}

/** Same lattice the service searches: multiples of t inside ±s, closed at ±s. */
export function buildPercentGrid(s: number, t: number): number[] {
  const values = new Set<number>([0, s, -s]);
  for (let i = 1; i * t <= s + 1e-12; i += 1) {
    const v = Math.round(i * t * 1e12) / 1e12;
    values.add(v);
    values.add(-v);
  }
  return [...values].filter((v) => Math.abs(v) <= s + 1e-12).sort((a, b) => a - b);
}

function isAbort(err: unknown): boolean {
  return err instanceof DOMException && err.name === "AbortError";
}

function describeError(err: unknown): string {
  if (err instanceof ApiError) {
    return err.status === 0
      ? `Service unreachable (${err.detail}). Check that it is running, then retry.`
      : `Request failed (${err.code}): ${err.detail}`;
  }
  return err instanceof Error ? err.message : String(err);
}
