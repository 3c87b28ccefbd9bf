import { N_INSTRUMENTS, N_STEPS } from "./constants.js";

export type Cell = 0 | 1;
export type GenerateMode = "regenerate" | "refine";

export interface AppState {
  grid: Cell[][]; // N_INSTRUMENTS x N_STEPS
  rowLocks: boolean[]; // per instrument row
  slider: number; // 0..1, mapped onto temperature elsewhere
  bpm: number;
  mode: GenerateMode;
  pending: boolean; // a generate request is in flight
}

export class LockViolationError extends Error {}

export function emptyGrid(): Cell[][] {
  return Array.from({ length: N_INSTRUMENTS }, () =>
    Array.from({ length: N_STEPS }, () => 0 as Cell),
  );
}

export function initialState(): AppState {
  return {
    grid: emptyGrid(),
    rowLocks: Array(N_INSTRUMENTS).fill(false),
    slider: 0.5,
    bpm: 120,
    mode: "regenerate",
    pending: false,
  };
}

function cloneGrid(grid: Cell[][]): Cell[][] {
  return grid.map((row) => row.slice());
}

/** Toggle one cell; clicks on a locked row are ignored. */
export function toggleCell(state: AppState, row: number, step: number): AppState {
  if (state.rowLocks[row]) return state;
  const grid = cloneGrid(state.grid);
  grid[row][step] = grid[row][step] ? 0 : 1;
  return { ...state, grid };
}

export function toggleRowLock(state: AppState, row: number): AppState {
  const rowLocks = state.rowLocks.slice();
  rowLocks[row] = !rowLocks[row];
  return { ...state, rowLocks };
}

export function setSlider(state: AppState, value: number): AppState {
  return { ...state, slider: Math.min(1, Math.max(0, value)) };
}

export function setBpm(state: AppState, bpm: number): AppState {
  return { ...state, bpm: Math.min(300, Math.max(30, Math.round(bpm))) };
}

export function setMode(state: AppState, mode: GenerateMode): AppState {
  return { ...state, mode };
}

export function setPending(state: AppState, pending: boolean): AppState {
  return { ...state, pending };
}

export function clearUnlocked(state: AppState): AppState {
  const grid = cloneGrid(state.grid);
  for (let i = 0; i < N_INSTRUMENTS; i++) {
    if (state.rowLocks[i]) continue;
    for (let t = 0; t < N_STEPS; t++) grid[i][t] = 0;
  }
  return { ...state, grid };
}

export function validGridShape(grid: unknown): grid is Cell[][] {
  return (
    Array.isArray(grid) &&
    grid.length === N_INSTRUMENTS &&
    grid.every(
      (row) =>
        Array.isArray(row) &&
        row.length === N_STEPS &&
        row.every((c) => c === 0 || c === 1),
    )
  );
}

/**
 * Fold a generate response back into the state.
 *
 * The server guarantees locked rows come back unchanged; we assert it
 * client-side anyway and refuse the update if violated, so a buggy or
 * spoofed response can never silently clobber the user's locked parts.
 */
export function applyGenerateResponse(state: AppState, responseGrid: unknown): AppState {
  if (!validGridShape(responseGrid)) {
    throw new Error("response grid is not a 9x32 binary matrix");
  }
  for (let i = 0; i < N_INSTRUMENTS; i++) {
    if (!state.rowLocks[i]) continue;
    for (let t = 0; t < N_STEPS; t++) {
      if (responseGrid[i][t] !== state.grid[i][t]) {
        throw new LockViolationError(
          `locked row ${i} changed at step ${t}`,
        );
      }
    }
  }
  return { ...state, grid: cloneGrid(responseGrid) };
}
