import { N_INSTRUMENTS, N_STEPS } from "./constants.js";
import type { AppState } from "./state.js";

export type WireCell = 0 | 1 | null;

export interface GenerateBody {
  grid: WireCell[][];
  row_locks: boolean[];
  temperature: number;
  iterations: number;
}

export interface GenerateResponse {
  grid: (0 | 1)[][];
  confidence: number[][];
  trace_summary: {
    initial_masked: number;
    iterations: number;
    masked_counts: number[];
  };
}

export interface MetricsResponse {
  beat_strength: number;
  pattern_repetition: number;
  instrument_balance: number;
  density: number;
}

/** Server rejected the request; message is the field-level explanation. */
export class ApiError extends Error {
  constructor(
    message: string,
    public readonly status: number,
  ) {
    super(message);
  }
}

/**
 * Build the wire body. A null cell asks the model to decide it.
 *
 * regenerate: unlocked rows are wiped to null and fully redrawn.
 * refine: unlocked hits are kept as fixed context and only the silent
 * cells are redrawn, so the model elaborates around what the user wrote.
 * Locked rows always travel with their exact values.
 */
export function buildGenerateBody(state: AppState, temperature: number,
                                  iterations = 10): GenerateBody {
  const grid: WireCell[][] = [];
  for (let i = 0; i < N_INSTRUMENTS; i++) {
    const row: WireCell[] = [];
    for (let t = 0; t < N_STEPS; t++) {
      const value = state.grid[i][t];
      if (state.rowLocks[i]) {
        row.push(value);
      } else if (state.mode === "refine" && value === 1) {
        row.push(1);
      } else {
        row.push(null);
      }
    }
    grid.push(row);
  }
  return {
    grid,
    row_locks: state.rowLocks.slice(),
    temperature,
    iterations,
  };
}

async function post<T>(fetchFn: typeof fetch, url: string, body: unknown): Promise<T> {
  const response = await fetchFn(url, {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(body),
  });
  if (!response.ok) {
    let message = `request failed (${response.status})`;
    try {
      const payload = await response.json();
      if (payload && typeof payload.error === "string") message = payload.error;
    } catch {
      // non-JSON error body; keep the generic message
    }
    throw new ApiError(message, response.status);
  }
  return (await response.json()) as T;
}

export function generate(body: GenerateBody,
                         fetchFn: typeof fetch = fetch): Promise<GenerateResponse> {
  return post<GenerateResponse>(fetchFn, "/api/v1/generate", body);
}

export function metrics(grid: (0 | 1)[][],
                        fetchFn: typeof fetch = fetch): Promise<MetricsResponse> {
  return post<MetricsResponse>(fetchFn, "/api/v1/metrics", { grid });
}

export async function health(fetchFn: typeof fetch = fetch):
    Promise<{ status: string; model_fingerprint: string }> {
  const response = await fetchFn("/api/v1/health");
  if (!response.ok) throw new ApiError("service has no model loaded", response.status);
  return await response.json();
}
