export const N_INSTRUMENTS = 9;
export const N_STEPS = 32;
export const STEPS_PER_BAR = 16;

// Row order is frozen and shared with the service and the pattern file
// format; never reorder.
export const INSTRUMENT_IDS = [
  "kick",
  "snare",
  "closed_hihat",
  "open_hihat",
  "low_tom",
  "mid_tom",
  "high_tom",
  "crash",
  "ride",
] as const;

export type InstrumentId = (typeof INSTRUMENT_IDS)[number];

export const INSTRUMENT_LABELS: Record<InstrumentId, string> = {
  kick: "Kick",
  snare: "Snare",
  closed_hihat: "Closed HH",
  open_hihat: "Open HH",
  low_tom: "Low Tom",
  mid_tom: "Mid Tom",
  high_tom: "High Tom",
  crash: "Crash",
  ride: "Ride",
};

export const PATTERN_FORMAT_VERSION = 1;
