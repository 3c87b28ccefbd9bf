import * as api from "./api.js";
import { GridView } from "./grid.js";
import { exportPattern, importPattern, PatternFileError } from "./patternfile.js";
import { LoopPlayer, audioSupported } from "./playback.js";
import { sliderToTemperature } from "./slider.js";
import * as st from "./state.js";

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

let state = st.initialState();

const gridRoot = el<HTMLDivElement>("grid");
const banner = el<HTMLDivElement>("banner");
const bannerText = el<HTMLSpanElement>("banner-text");
const generateButton = el<HTMLButtonElement>("generate");
const modeSelect = el<HTMLSelectElement>("mode");
const slider = el<HTMLInputElement>("creativity");
const temperatureOut = el<HTMLSpanElement>("temperature");
const bpmInput = el<HTMLInputElement>("bpm");
const playButton = el<HTMLButtonElement>("play");
const stopButton = el<HTMLButtonElement>("stop");
const clearButton = el<HTMLButtonElement>("clear");
const exportButton = el<HTMLButtonElement>("export");
const importInput = el<HTMLInputElement>("import");
const metricsOut = el<HTMLDivElement>("metrics");
const statusOut = el<HTMLSpanElement>("status");

const grid = new GridView(gridRoot, {
  onCellClick(row, step) {
    update(st.toggleCell(state, row, step));
  },
  onRowHeaderClick(row) {
    update(st.toggleRowLock(state, row));
  },
});

const player = new LoopPlayer({
  onStep: (step) => grid.setPlayhead(step),
});

function showError(message: string): void {
  bannerText.textContent = message;
  banner.hidden = false;
}

function clearError(): void {
  banner.hidden = true;
}

el<HTMLButtonElement>("banner-dismiss").addEventListener("click", clearError);

function update(next: st.AppState): void {
  state = next;
  grid.update(state);
  generateButton.disabled = state.pending;
  generateButton.textContent = state.pending ? "Generating..." : "Generate";
  temperatureOut.textContent = sliderToTemperature(state.slider).toFixed(2);
  void refreshMetrics();
}

let metricsTimer: ReturnType<typeof setTimeout> | null = null;
async function refreshMetrics(): Promise<void> {
  // debounce: edits arrive in bursts
  if (metricsTimer) clearTimeout(metricsTimer);
  metricsTimer = setTimeout(async () => {
    try {
      const m = await api.metrics(state.grid);
      metricsOut.textContent =
        `beat strength ${m.beat_strength.toFixed(2)} | ` +
        `repetition ${m.pattern_repetition.toFixed(2)} | ` +
        `balance ${m.instrument_balance.toFixed(2)} | ` +
        `density ${(m.density * 100).toFixed(1)}%`;
    } catch {
      metricsOut.textContent = "";
    }
  }, 150);
}

generateButton.addEventListener("click", async () => {
  if (state.pending) return;
  update(st.setPending(state, true));
  const body = api.buildGenerateBody(state, sliderToTemperature(state.slider));
  try {
    const response = await api.generate(body);
    clearError();
    update(st.setPending(st.applyGenerateResponse(state, response.grid), false));
  } catch (err) {
    // state (including the user's grid) is preserved on every failure
    if (err instanceof st.LockViolationError) {
      showError(`locked rows came back changed; response discarded (${err.message})`);
    } else if (err instanceof api.ApiError) {
      showError(err.message);
    } else {
      showError("the generation service is unreachable");
    }
    update(st.setPending(state, false));
  }
});

modeSelect.addEventListener("change", () => {
  update(st.setMode(state, modeSelect.value as st.GenerateMode));
});

slider.addEventListener("input", () => {
  update(st.setSlider(state, Number(slider.value)));
});

bpmInput.addEventListener("change", () => {
  update(st.setBpm(state, Number(bpmInput.value)));
  if (player.playing) {
    player.stop();
    player.start(() => state.grid, state.bpm);
  }
});

playButton.addEventListener("click", () => {
  player.start(() => state.grid, state.bpm);
});

stopButton.addEventListener("click", () => {
  player.stop();
  grid.setPlayhead(null);
});

clearButton.addEventListener("click", () => {
  update(st.clearUnlocked(state));
});

exportButton.addEventListener("click", () => {
  const blob = new Blob([exportPattern(state)], { type: "application/json" });
  const url = URL.createObjectURL(blob);
  const link = document.createElement("a");
  link.href = url;
  link.download = "pattern.json";
  link.click();
  URL.revokeObjectURL(url);
});

importInput.addEventListener("change", async () => {
  const file = importInput.files?.[0];
  if (!file) return;
  try {
    const imported = importPattern(await file.text());
    let next = { ...state, grid: imported.grid };
    if (imported.rowLocks) next = { ...next, rowLocks: imported.rowLocks };
    if (imported.tempoBpm) next = st.setBpm(next, imported.tempoBpm);
    bpmInput.value = String(next.bpm);
    clearError();
    update(next);
  } catch (err) {
    showError(err instanceof PatternFileError
      ? `could not import: ${err.message}`
      : "could not read that file");
  } finally {
    importInput.value = "";
  }
});

if (!audioSupported()) {
  playButton.disabled = true;
  stopButton.disabled = true;
  showError("audio is unavailable in this browser; editing still works");
}

api.health()
  .then((h) => {
    statusOut.textContent = `model ${h.model_fingerprint.slice(0, 12)}`;
  })
  .catch(() => {
    statusOut.textContent = "service offline";
    showError("the generation service is not reachable yet");
  });

slider.value = String(state.slider);
bpmInput.value = String(state.bpm);
update(state);
