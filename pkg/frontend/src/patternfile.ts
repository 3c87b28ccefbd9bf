import {
  INSTRUMENT_IDS,
  N_INSTRUMENTS,
  N_STEPS,
  PATTERN_FORMAT_VERSION,
} from "./constants.js";
import type { AppState, Cell } from "./state.js";

export class PatternFileError extends Error {}

/**
 * Export the grid as a version-1 pattern document.
 *
 * `ui_row_locks` is a UI extra: readers of the core format ignore unknown
 * fields, and this importer uses it to round-trip lock state exactly.
 */
export function exportPattern(state: AppState): string {
  const doc = {
    version: PATTERN_FORMAT_VERSION,
    steps: N_STEPS,
    instruments: [...INSTRUMENT_IDS],
    grid: state.grid.map((row) => row.slice()),
    tempo_bpm: state.bpm,
    ui_row_locks: state.rowLocks.slice(),
  };
  return JSON.stringify(doc, null, 1) + "\n";
}

export interface ImportedPattern {
  grid: Cell[][];
  rowLocks: boolean[] | null;
  tempoBpm: number | null;
}

export function importPattern(text: string): ImportedPattern {
  let doc: Record<string, unknown>;
  try {
    doc = JSON.parse(text);
  } catch {
    throw new PatternFileError("not a JSON pattern document");
  }
  if (typeof doc !== "object" || doc === null) {
    throw new PatternFileError("pattern document must be an object");
  }
  if (doc["version"] !== PATTERN_FORMAT_VERSION) {
    throw new PatternFileError(`unknown version ${String(doc["version"])}`);
  }
  if (doc["steps"] !== N_STEPS) {
    throw new PatternFileError(`field 'steps' must be ${N_STEPS}`);
  }
  const instruments = doc["instruments"];
  if (
    !Array.isArray(instruments) ||
    instruments.length !== N_INSTRUMENTS ||
    instruments.some((name, i) => name !== INSTRUMENT_IDS[i])
  ) {
    throw new PatternFileError("field 'instruments' does not match the fixed order");
  }
  const grid = doc["grid"];
  if (!Array.isArray(grid) || grid.length !== N_INSTRUMENTS) {
    throw new PatternFileError(`field 'grid' must hold ${N_INSTRUMENTS} rows`);
  }
  const out: Cell[][] = [];
  grid.forEach((row, i) => {
    if (!Array.isArray(row) || row.length !== N_STEPS) {
      throw new PatternFileError(`field 'grid' row ${i} must hold ${N_STEPS} cells`);
    }
    row.forEach((cell, t) => {
      if (cell !== 0 && cell !== 1) {
        throw new PatternFileError(`field 'grid' cell (${i},${t}) must be 0 or 1`);
      }
    });
    out.push(row.slice() as Cell[]);
  });

  let rowLocks: boolean[] | null = null;
  const locks = doc["ui_row_locks"];
  if (
    Array.isArray(locks) &&
    locks.length === N_INSTRUMENTS &&
    locks.every((v) => typeof v === "boolean")
  ) {
    rowLocks = locks.slice() as boolean[];
  }
  const tempo = doc["tempo_bpm"];
  return {
    grid: out,
    rowLocks,
    tempoBpm: typeof tempo === "number" ? tempo : null,
  };
}
