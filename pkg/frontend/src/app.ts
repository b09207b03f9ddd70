/**
 * DOM wiring for the studio console.
 *
 * mountStudio() builds the page skeleton once and then applies session
 * snapshots to it: upload control, score header with the live what-if
 * delta, retryable banner, suggestion panel, and a feature table grouped
 * by family with a slider per tunable feature. All numbers on screen come
 * from session state, which in turn only ever holds service responses.
 */

import { StudioApi } from "./api.js";
import { FeatureRow, SessionOptions, SessionState, StudioSession } from "./session.js";

export function mountStudio(
  root: HTMLElement,
  baseUrl: string,
  options: Partial<SessionOptions> = {},
): StudioSession {
  const session = new StudioSession(new StudioApi(baseUrl), {
    debounceMs: 150,
    ...options,
  });
  const ui = buildSkeleton(root, session);
  session.subscribe((state) => render(ui, session, state));
  render(ui, session, session.getState());
  return session;
}

interface Ui {
  banner: HTMLDivElement;
  preview: HTMLImageElement;
  scoreLine: HTMLDivElement;
  suggestPanel: HTMLDivElement;
  tableBody: HTMLTableSectionElement;
  sliders: Map<string, HTMLInputElement>;
  adjustedCells: Map<string, HTMLTableCellElement>;
  deltaCells: Map<string, HTMLTableCellElement>;
  renderedImage: string | null;
}

function buildSkeleton(root: HTMLElement, session: StudioSession): Ui {
  root.innerHTML = "";

  const banner = el("div", "banner");
  banner.hidden = true;

  const upload = el("input") as HTMLInputElement;
  upload.type = "file";
  upload.accept = "image/*";
  upload.addEventListener("change", () => {
    const file = upload.files?.[0];
    if (file) void scoreFile(session, file);
  });

  const preview = el("img", "preview") as HTMLImageElement;
  preview.alt = "scored image preview";
  preview.hidden = true;

  const scoreLine = el("div", "score-line");

  const kInput = el("input") as HTMLInputElement;
  kInput.type = "number";
  kInput.min = "1";
  kInput.value = String(session.options.k);
  const suggestButton = el("button");
  suggestButton.textContent = "Suggest changes";
  suggestButton.addEventListener("click", () => {
    void session.requestSuggestions(Number(kInput.value) || undefined);
  });
  const cancelButton = el("button");
  cancelButton.textContent = "Cancel";
  cancelButton.addEventListener("click", () => session.cancelSuggestion());
  const resetButton = el("button");
  resetButton.textContent = "Reset sliders";
  resetButton.addEventListener("click", () => session.resetSliders());

  const controls = el("div", "controls");
  controls.append("k:", kInput, suggestButton, cancelButton, resetButton);

  const suggestPanel = el("div", "suggestion");

  const table = el("table", "features") as HTMLTableElement;
  const head = table.createTHead().insertRow();
  for (const title of ["feature", "value", "what-if value", "adjust %"]) {
    const cell = document.createElement("th");
    cell.textContent = title;
    head.append(cell);
  }
  const tableBody = table.createTBody();

  root.append(banner, upload, preview, scoreLine, controls, suggestPanel, table);
  return {
    banner,
    preview,
    scoreLine,
    suggestPanel,
    tableBody,
    sliders: new Map(),
    adjustedCells: new Map(),
    deltaCells: new Map(),
    renderedImage: null,
  };
}

async function scoreFile(session: StudioSession, file: File): Promise<void> {
  const dataUrl = await new Promise<string>((resolve, reject) => {
    const reader = new FileReader();
    reader.onload = () => resolve(String(reader.result));
    reader.onerror = () => reject(reader.error);
    reader.readAsDataURL(file);
  });
  const base64 = dataUrl.slice(dataUrl.indexOf(",") + 1);
  await session.scoreImage(base64, file.size, file.name);
}

function render(ui: Ui, session: StudioSession, state: SessionState): void {
  ui.banner.hidden = state.banner === null;
  if (state.banner) {
    ui.banner.textContent = state.banner.message;
    ui.banner.dataset.kind = state.banner.kind;
    if (state.banner.retry) {
      const retry = document.createElement("button");
      retry.textContent = "Retry";
      retry.addEventListener("click", state.banner.retry);
      ui.banner.append(" ", retry);
    }
  }

  ui.preview.hidden = state.imageB64 === null;
  if (state.imageB64) {
    ui.preview.src = `data:image;base64,${state.imageB64}`;
  }

  if (state.baseline === null) {
    ui.scoreLine.textContent = "Upload an image to score it.";
  } else {
    const delta = (state.displayed ?? state.baseline) - state.baseline;
    ui.scoreLine.textContent =
      `predicted engagement ${fmt(state.displayed)} ` +
      `(baseline ${fmt(state.baseline)}, what-if ${delta >= 0 ? "+" : ""}${fmt(delta)})` +
      (state.whatifInFlight ? " …" : "");
  }

  renderSuggestion(ui, session, state);
  renderTable(ui, session, state);
}

function renderSuggestion(ui: Ui, session: StudioSession, state: SessionState): void {
  ui.suggestPanel.innerHTML = "";
  if (state.suggestInFlight) {
    ui.suggestPanel.textContent = "searching…";
    return;
  }
  if (!state.suggestion) return;
  const note = state.kClamped ? " (k clamped to the tunable feature count)" : "";
  const header = el("div");
  header.textContent =
    `suggested ${fmt(state.suggestion.before)} → ${fmt(state.suggestion.after)}${note}`;
  const list = el("ul");
  for (const change of state.suggestion.changes) {
    const item = document.createElement("li");
    item.textContent =
      `${change.name}: ${change.percent >= 0 ? "+" : ""}${change.percent}% ` +
      `(${fmt(change.old)} → ${fmt(change.new)})`;
    list.append(item);
  }
  const apply = document.createElement("button");
  apply.textContent = "Apply to sliders";
  apply.addEventListener("click", () => session.applySuggestion());
  ui.suggestPanel.append(header, list, apply);
}

function renderTable(ui: Ui, session: StudioSession, state: SessionState): void {
  if (ui.renderedImage !== state.imageB64) {
    buildTableRows(ui, session, state.rows);
    ui.renderedImage = state.imageB64;
  }
  for (const row of state.rows) {
    const adjustedCell = ui.adjustedCells.get(row.id);
    if (adjustedCell) adjustedCell.textContent = fmt(row.adjusted);
    const slider = ui.sliders.get(row.id);
    const percent = state.deltas[row.id] ?? 0;
    if (slider && document.activeElement !== slider) {
      slider.value = String(percent);
    }
    const deltaCell = ui.deltaCells.get(row.id);
    if (deltaCell) deltaCell.textContent = row.tunable ? `${percent}%` : "fixed";
  }
}

function buildTableRows(ui: Ui, session: StudioSession, rows: FeatureRow[]): void {
  ui.tableBody.innerHTML = "";
  ui.sliders.clear();
  ui.adjustedCells.clear();
  ui.deltaCells.clear();
  const { s, t } = session.options;
  let family: string | null = null;
  for (const row of rows) {
    if (row.family !== family) {
      family = row.family;
      const group = ui.tableBody.insertRow();
      const cell = group.insertCell();
      cell.colSpan = 4;
      cell.textContent = family;
      group.className = "family";
    }
    const tr = ui.tableBody.insertRow();
    const name = tr.insertCell();
    name.textContent = row.humanName;
    name.title = `${row.id} — ${row.humanName} [${row.lower}, ${row.upper}]`;

    tr.insertCell().textContent = fmt(row.value);
    ui.adjustedCells.set(row.id, tr.insertCell());

    const control = tr.insertCell();
    if (row.tunable) {
      const slider = document.createElement("input");
      slider.type = "range";
      slider.min = String(-s);
      slider.max = String(s);
      slider.step = String(t);
      slider.value = "0";
      slider.addEventListener("input", () => {
        slider.value = String(session.setSlider(row.id, Number(slider.value)));
      });
      const label = document.createElement("span");
      control.append(slider, label);
      ui.sliders.set(row.id, slider);
      ui.deltaCells.set(row.id, tr.insertCell());
    } else {
      control.textContent = "—";
      ui.deltaCells.set(row.id, tr.insertCell());
    }
  }
}

function el(tag: string, className = ""): HTMLDivElement {
  const node = document.createElement(tag);
  if (className) node.className = className;
  return node as HTMLDivElement;
}

function fmt(value: number | null): string {
  if (value === null || Number.isNaN(value)) return "—";
  return value.toFixed(4);
}

declare global {
  interface Window {
    studioSession?: StudioSession;
  }
}

// Auto-mount when loaded on a page with a #studio element; the service URL
// comes from ?service=... or defaults to same-origin port 8423.
if (typeof document !== "undefined") {
  const root = document.getElementById("studio");
  if (root) {
    const params = new URLSearchParams(window.location.search);
    const base = params.get("service") ?? `http://${window.location.hostname || "127.0.0.1"}:8423`;
    window.studioSession = mountStudio(root, base);
  }
}
