import {
  INSTRUMENT_IDS,
  INSTRUMENT_LABELS,
  N_INSTRUMENTS,
  N_STEPS,
  STEPS_PER_BAR,
} from "./constants.js";
import type { AppState } from "./state.js";

export interface GridCallbacks {
  onCellClick(row: number, step: number): void;
  onRowHeaderClick(row: number): void;
}

/**
 * Build the 9x32 sequencer DOM once; `update` then only touches classes.
 * Bar lines fall every 16 steps, beat lines every 4.
 */
export class GridView {
  private cells: HTMLElement[][] = [];
  private headers: HTMLElement[] = [];
  private playheadStep: number | null = null;

  constructor(root: HTMLElement, callbacks: GridCallbacks) {
    root.classList.add("sequencer");
    for (let i = 0; i < N_INSTRUMENTS; i++) {
      const rowEl = document.createElement("div");
      rowEl.className = "seq-row";

      const header = document.createElement("button");
      header.type = "button";
      header.className = "row-header";
      header.textContent = INSTRUMENT_LABELS[INSTRUMENT_IDS[i]];
      header.title = "click to lock/unlock this row";
      header.addEventListener("click", () => callbacks.onRowHeaderClick(i));
      this.headers.push(header);
      rowEl.appendChild(header);

      const cellRow: HTMLElement[] = [];
      for (let t = 0; t < N_STEPS; t++) {
        const cell = document.createElement("button");
        cell.type = "button";
        cell.className = "cell";
        if (t % STEPS_PER_BAR === 0) cell.classList.add("bar-line");
        else if (t % 4 === 0) cell.classList.add("beat-line");
        cell.addEventListener("click", () => callbacks.onCellClick(i, t));
        cellRow.push(cell);
        rowEl.appendChild(cell);
      }
      this.cells.push(cellRow);
      root.appendChild(rowEl);
    }
  }

  update(state: AppState): void {
    for (let i = 0; i < N_INSTRUMENTS; i++) {
      this.headers[i].classList.toggle("locked", state.rowLocks[i]);
      for (let t = 0; t < N_STEPS; t++) {
        const cell = this.cells[i][t];
        cell.classList.toggle("hit", state.grid[i][t] === 1);
        cell.classList.toggle("locked", state.rowLocks[i]);
      }
    }
  }

  setPlayhead(step: number | null): void {
    if (this.playheadStep !== null) {
      for (let i = 0; i < N_INSTRUMENTS; i++) {
        this.cells[i][this.playheadStep].classList.remove("playhead");
      }
    }
    this.playheadStep = step;
    if (step !== null) {
      for (let i = 0; i < N_INSTRUMENTS; i++) {
        this.cells[i][step].classList.add("playhead");
      }
    }
  }

  cellAt(row: number, step: number): HTMLElement {
    return this.cells[row][step];
  }

  headerAt(row: number): HTMLElement {
    return this.headers[row];
  }
}
