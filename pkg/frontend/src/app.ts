import { ApiClient, ApiRequestError } from "./api.js";
import { compareEntries } from "./compare.js";
import { debounce } from "./debounce.js";
import { metricBadges } from "./format.js";
import { DEFAULT_PARAMS, sanitizeParams } from "./params.js";
import { legend, renderComposite, type CompositeImage } from "./render.js";
import { SessionState, type HistoryEntry } from "./state.js";
import type {
  MapInfo,
  ProjectionImage,
  QueryRequest,
  QueryResponse,
} from "./types.js";

const api = new ApiClient("");
const state = new SessionState();

let maps: MapInfo[] = [];
let groundTruthProjection: ProjectionImage | null = null;
let encoderEnabled = false;
let compareA: HistoryEntry | null = null;
let zoom = 4;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function currentMap(): MapInfo | undefined {
  return maps.find((m) => m.map_id === state.selectedMap);
}

function showError(message: string, retry?: () => void): void {
  const banner = el<HTMLDivElement>("error-banner");
  banner.textContent = message;
  banner.style.display = "block";
  const button = el<HTMLButtonElement>("retry-button");
  if (retry) {
    button.style.display = "inline-block";
    button.onclick = () => {
      banner.style.display = "none";
      retry();
    };
  } else {
    button.style.display = "none";
  }
}

function clearError(): void {
  el<HTMLDivElement>("error-banner").style.display = "none";
}

function panelParams() {
  return sanitizeParams({
    closing_iters: Number(el<HTMLInputElement>("closing").value),
    blur_sigma: Number(el<HTMLInputElement>("blur-sigma").value),
    threshold: Number(el<HTMLInputElement>("threshold").value),
    dilation_iters: Number(el<HTMLInputElement>("dilation").value),
  });
}

function buildRequest(): QueryRequest | null {
  if (!state.activeQuery) return null;
  const truthRaw = el<HTMLSelectElement>("truth-label").value;
  const request: QueryRequest = {
    mode: el<HTMLSelectElement>("mode").value as QueryRequest["mode"],
    params: panelParams(),
    prompt_engineering: el<HTMLInputElement>("prompt-toggle").checked,
    negative_key: el<HTMLInputElement>("negative-key").value || "other",
    truth_label: truthRaw === "" ? null : Number(truthRaw),
    axis: el<HTMLSelectElement>("axis").value as QueryRequest["axis"],
  };
  if (state.activeQuery.kind === "key") {
    request.key = state.activeQuery.value;
  }
  return request;
}

async function issueQuery(): Promise<void> {
  const mapId = state.selectedMap;
  const base = buildRequest();
  if (!mapId || !base) return;
  try {
    let request = base;
    if (state.activeQuery?.kind === "text") {
      const embedding = await api.encode(state.activeQuery.value);
      if (embedding === null) return; // encoder vanished; box stays disabled
      request = { ...base, embedding };
    }
    const response = await api.query(mapId, request);
    clearError();
    state.recordResult(request, response);
    displayResponse(response);
    renderHistory();
  } catch (error) {
    if (error instanceof DOMException && error.name === "AbortError") {
      return; // superseded by a newer request
    }
    const message =
      error instanceof ApiRequestError
        ? `query failed (${error.status}): ${error.message}`
        : `query failed: ${String(error)}`;
    showError(message, () => void issueQuery());
  }
}

const requeue = debounce(() => void issueQuery(), 250);

function displayResponse(response: QueryResponse): void {
  const overlays = {
    heatmap: el<HTMLInputElement>("overlay-heatmap").checked,
    mask: el<HTMLInputElement>("overlay-mask").checked,
    groundTruth: el<HTMLInputElement>("overlay-gt").checked,
  };
  const composite = renderComposite(
    response.projection,
    response.mask_projection,
    groundTruthProjection,
    overlays,
  );
  drawComposite(el<HTMLCanvasElement>("view"), composite);
  el<HTMLSpanElement>("coverage").textContent = composite.zeroCoverage
    ? "no voxels matched"
    : `${response.mask.positive_count} / ${response.mask.total} voxels`;
  if (composite.degraded) {
    showError("projection missing from response; showing no image");
  }

  const badges = el<HTMLDivElement>("badges");
  badges.innerHTML = "";
  if (response.metrics) {
    for (const badge of metricBadges(response.metrics)) {
      const span = document.createElement("span");
      span.className = badge.degenerate ? "badge degenerate" : "badge";
      span.textContent = `${badge.name.toUpperCase()} ${badge.text}`;
      badges.appendChild(span);
    }
  }
  const legendBox = el<HTMLDivElement>("legend");
  legendBox.innerHTML = "";
  for (const entry of legend(overlays)) {
    const item = document.createElement("span");
    item.className = "legend-item";
    const swatch = document.createElement("span");
    swatch.className = "swatch";
    swatch.style.background = entry.color;
    item.appendChild(swatch);
    item.appendChild(document.createTextNode(entry.label));
    legendBox.appendChild(item);
  }
}

function drawComposite(canvas: HTMLCanvasElement, composite: CompositeImage): void {
  const context = canvas.getContext("2d");
  if (!context || composite.width === 0) {
    canvas.width = 320;
    canvas.height = 60;
    return;
  }
  canvas.width = composite.width * zoom;
  canvas.height = composite.height * zoom;
  const buffer = document.createElement("canvas");
  buffer.width = composite.width;
  buffer.height = composite.height;
  const bufferContext = buffer.getContext("2d");
  if (!bufferContext) return;
  bufferContext.putImageData(
    new ImageData(composite.pixels, composite.width, composite.height),
    0,
    0,
  );
  context.imageSmoothingEnabled = false;
  context.drawImage(buffer, 0, 0, canvas.width, canvas.height);
}

function renderHistory(): void {
  const list = el<HTMLUListElement>("history");
  list.innerHTML = "";
  state.history.forEach((entry) => {
    const item = document.createElement("li");
    const label = entry.request.key ?? "free text";
    const f1 = entry.response.metrics?.f1;
    item.textContent = `#${entry.index} ${entry.mapId} ${label}` +
      (f1 !== undefined ? ` f1=${String(f1)}` : "");
    const show = document.createElement("button");
    show.textContent = "show";
    show.onclick = () => displayResponse(state.recall(entry.index).response);
    const pin = document.createElement("button");
    pin.textContent = compareA?.index === entry.index ? "pinned A" : "pin A";
    pin.onclick = () => {
      compareA = entry;
      renderHistory();
    };
    const compare = document.createElement("button");
    compare.textContent = "compare with A";
    compare.onclick = () => showComparison(entry);
    item.append(" ", show, " ", pin, " ", compare);
    list.appendChild(item);
  });
}

function showComparison(b: HistoryEntry): void {
  const output = el<HTMLDivElement>("compare-output");
  if (!compareA) {
    output.textContent = "pin an entry as A first";
    return;
  }
  try {
    const result = compareEntries(compareA, b);
    const rows = result.deltas
      .map(
        (d) =>
          `<tr><td>${d.name}</td><td>${d.a ?? "-"}</td>` +
          `<td>${d.b ?? "-"}</td><td>${d.delta ?? "-"}</td></tr>`,
      )
      .join("");
    output.innerHTML =
      `<table><tr><th>metric</th><th>A #${compareA.index}</th>` +
      `<th>B #${b.index}</th><th>delta</th></tr>${rows}</table>` +
      `<p>coverage delta: ${result.coverageDelta} voxels</p>`;
  } catch (error) {
    output.textContent = String(error);
  }
}

async function refreshGroundTruth(): Promise<void> {
  groundTruthProjection = null;
  const mapId = state.selectedMap;
  const truthRaw = el<HTMLSelectElement>("truth-label").value;
  if (!mapId || truthRaw === "") return;
  try {
    groundTruthProjection = await api.groundTruth(
      mapId,
      Number(truthRaw),
      el<HTMLSelectElement>("axis").value,
    );
  } catch (error) {
    showError(`ground truth unavailable: ${String(error)}`);
  }
}

function populateMapControls(): void {
  const map = currentMap();
  const querySelect = el<HTMLSelectElement>("query-key");
  const truthSelect = el<HTMLSelectElement>("truth-label");
  querySelect.innerHTML = "";
  truthSelect.innerHTML = '<option value="">none</option>';
  if (!map) return;
  map.labels.forEach((label, id) => {
    const option = document.createElement("option");
    option.value = label;
    option.textContent = label;
    querySelect.appendChild(option);
    const truthOption = document.createElement("option");
    truthOption.value = String(id);
    truthOption.textContent = label;
    truthSelect.appendChild(truthOption);
  });
  if (map.labels.length > 0) {
    state.activeQuery = { kind: "key", value: map.labels[0] };
  }
}

function wirePanel(): void {
  const paramIds = ["threshold", "blur-sigma", "closing", "dilation"];
  for (const id of paramIds) {
    el<HTMLInputElement>(id).addEventListener("input", () => requeue());
  }
  for (const id of ["mode", "axis", "negative-key", "prompt-toggle"]) {
    el<HTMLElement>(id).addEventListener("change", () => requeue());
  }
  for (const id of ["overlay-heatmap", "overlay-mask", "overlay-gt"]) {
    el<HTMLInputElement>(id).addEventListener("change", () => {
      if (state.current) displayResponse(state.current.response);
    });
  }
  el<HTMLSelectElement>("query-key").addEventListener("change", (event) => {
    state.activeQuery = {
      kind: "key",
      value: (event.target as HTMLSelectElement).value,
    };
    requeue();
  });
  el<HTMLSelectElement>("truth-label").addEventListener("change", () => {
    void refreshGroundTruth().then(() => requeue());
  });
  el<HTMLSelectElement>("map-select").addEventListener("change", (event) => {
    state.selectMap((event.target as HTMLSelectElement).value);
    populateMapControls();
    void refreshGroundTruth().then(() => requeue());
  });
  const freeText = el<HTMLInputElement>("free-text");
  freeText.addEventListener("change", () => {
    if (!encoderEnabled || freeText.value.trim() === "") return;
    state.activeQuery = { kind: "text", value: freeText.value.trim() };
    requeue();
  });
  el<HTMLInputElement>("zoom").addEventListener("input", (event) => {
    zoom = Number((event.target as HTMLInputElement).value) || 4;
    if (state.current) displayResponse(state.current.response);
  });
}

async function probeEncoder(): Promise<void> {
  const freeText = el<HTMLInputElement>("free-text");
  try {
    const embedding = await api.encode("probe");
    encoderEnabled = embedding !== null;
  } catch {
    encoderEnabled = false;
  }
  freeText.disabled = !encoderEnabled;
  freeText.placeholder = encoderEnabled
    ? "free-text query"
    : "free text disabled: no encoder configured";
}

async function init(): Promise<void> {
  el<HTMLInputElement>("threshold").value = String(DEFAULT_PARAMS.threshold);
  el<HTMLInputElement>("blur-sigma").value = String(DEFAULT_PARAMS.blur_sigma);
  el<HTMLInputElement>("closing").value = String(DEFAULT_PARAMS.closing_iters);
  el<HTMLInputElement>("dilation").value = String(DEFAULT_PARAMS.dilation_iters);
  wirePanel();
  await probeEncoder();
  try {
    const listing = await api.listMaps();
    maps = listing.maps;
    const select = el<HTMLSelectElement>("map-select");
    select.innerHTML = "";
    for (const map of maps) {
      const option = document.createElement("option");
      option.value = map.map_id;
      option.textContent = `${map.map_id} (${map.voxel_count} voxels)`;
      select.appendChild(option);
    }
    if (maps.length > 0) {
      state.selectMap(maps[0].map_id);
      populateMapControls();
      void issueQuery();
    }
    if (listing.diagnostics.length > 0) {
      showError(
        `some archives failed to load: ` +
          listing.diagnostics.map((d) => d.path).join(", "),
      );
    }
  } catch (error) {
    showError(`cannot list maps: ${String(error)}`, () => void init());
  }
}

void init();
