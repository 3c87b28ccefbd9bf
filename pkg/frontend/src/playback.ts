import { INSTRUMENT_IDS, N_STEPS } from "./constants.js";
import type { Cell } from "./state.js";

/** Duration of one 16th-note step; 120 bpm gives 125 ms. */
export function stepDurationMs(bpm: number): number {
  return 60000 / bpm / 4;
}

export interface DueStep {
  step: number; // 0..31, wraps forever
  time: number; // absolute AudioContext time in seconds
}

/**
 * Pure lookahead scheduler: given the clock, hand out the steps whose
 * start times fall inside [now, now + lookahead). Stateful only in the
 * running step counter, so it is trivially testable without audio.
 */
export class StepClock {
  private nextIndex = 0;
  private nextTime: number;

  constructor(
    startTime: number,
    private readonly stepSeconds: number,
  ) {
    this.nextTime = startTime;
  }

  due(now: number, lookahead: number): DueStep[] {
    const out: DueStep[] = [];
    while (this.nextTime < now + lookahead) {
      out.push({ step: this.nextIndex % N_STEPS, time: this.nextTime });
      this.nextIndex += 1;
      this.nextTime += this.stepSeconds;
    }
    return out;
  }
}

type Ctx = AudioContext;

function noiseBuffer(ctx: Ctx, seconds: number): AudioBuffer {
  const buffer = ctx.createBuffer(1, Math.ceil(ctx.sampleRate * seconds), ctx.sampleRate);
  const data = buffer.getChannelData(0);
  for (let i = 0; i < data.length; i++) data[i] = Math.random() * 2 - 1;
  return buffer;
}

function envGain(ctx: Ctx, when: number, peak: number, decay: number): GainNode {
  const gain = ctx.createGain();
  gain.gain.setValueAtTime(peak, when);
  gain.gain.exponentialRampToValueAtTime(0.001, when + decay);
  return gain;
}

function thump(ctx: Ctx, out: AudioNode, when: number,
               from: number, to: number, decay: number, peak = 0.8): void {
  const osc = ctx.createOscillator();
  osc.type = "sine";
  osc.frequency.setValueAtTime(from, when);
  osc.frequency.exponentialRampToValueAtTime(to, when + decay);
  const gain = envGain(ctx, when, peak, decay);
  osc.connect(gain).connect(out);
  osc.start(when);
  osc.stop(when + decay + 0.05);
}

function hiss(ctx: Ctx, out: AudioNode, when: number, decay: number,
              filterType: BiquadFilterType, frequency: number, peak: number): void {
  const source = ctx.createBufferSource();
  source.buffer = noiseBuffer(ctx, decay + 0.05);
  const filter = ctx.createBiquadFilter();
  filter.type = filterType;
  filter.frequency.value = frequency;
  const gain = envGain(ctx, when, peak, decay);
  source.connect(filter).connect(gain).connect(out);
  source.start(when);
  source.stop(when + decay + 0.05);
}

/** One short synthesized voice per instrument row. */
export function playVoice(ctx: Ctx, out: AudioNode, row: number, when: number): void {
  switch (INSTRUMENT_IDS[row]) {
    case "kick":
      thump(ctx, out, when, 150, 48, 0.16, 1.0);
      break;
    case "snare":
      thump(ctx, out, when, 210, 150, 0.08, 0.4);
      hiss(ctx, out, when, 0.13, "highpass", 1400, 0.5);
      break;
    case "closed_hihat":
      hiss(ctx, out, when, 0.04, "highpass", 6500, 0.35);
      break;
    case "open_hihat":
      hiss(ctx, out, when, 0.3, "highpass", 6000, 0.3);
      break;
    case "low_tom":
      thump(ctx, out, when, 120, 70, 0.2, 0.6);
      break;
    case "mid_tom":
      thump(ctx, out, when, 165, 100, 0.18, 0.6);
      break;
    case "high_tom":
      thump(ctx, out, when, 220, 140, 0.16, 0.6);
      break;
    case "crash":
      hiss(ctx, out, when, 0.9, "bandpass", 4500, 0.35);
      break;
    case "ride":
      hiss(ctx, out, when, 0.35, "bandpass", 7500, 0.22);
      break;
  }
}

export interface PlayerOptions {
  onStep?: (step: number) => void; // playhead callback
  contextFactory?: () => Ctx; // injectable for environments without audio
}

/**
 * Loops the grid with a 0.1 s lookahead scheduler. start/stop are
 * idempotent; the grid is read live, so edits are audible on the next
 * pass of each step.
 */
export class LoopPlayer {
  private ctx: Ctx | null = null;
  private timer: ReturnType<typeof setInterval> | null = null;
  private clock: StepClock | null = null;

  constructor(private readonly options: PlayerOptions = {}) {}

  get playing(): boolean {
    return this.timer !== null;
  }

  start(gridProvider: () => Cell[][], bpm: number): void {
    if (this.timer !== null) return;
    if (this.ctx === null) {
      const factory = this.options.contextFactory
        ?? (() => new AudioContext());
      this.ctx = factory();
    }
    const ctx = this.ctx;
    void ctx.resume?.();
    const stepSeconds = stepDurationMs(bpm) / 1000;
    this.clock = new StepClock(ctx.currentTime + 0.05, stepSeconds);
    this.timer = setInterval(() => {
      if (!this.clock) return;
      for (const { step, time } of this.clock.due(ctx.currentTime, 0.1)) {
        const grid = gridProvider();
        for (let row = 0; row < grid.length; row++) {
          if (grid[row][step]) playVoice(ctx, ctx.destination, row, time);
        }
        const delay = Math.max(0, (time - ctx.currentTime) * 1000);
        setTimeout(() => this.options.onStep?.(step), delay);
      }
    }, 25);
  }

  stop(): void {
    if (this.timer !== null) {
      clearInterval(this.timer);
      this.timer = null;
    }
    this.clock = null;
  }
}

export function audioSupported(): boolean {
  return typeof AudioContext !== "undefined";
}
