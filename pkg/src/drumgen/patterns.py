"""Core drum pattern types, rhythm metrics, and the versioned pattern file format.

A pattern is a binary 9x32 grid: nine drum instruments by thirty-two
16th-note steps (two 4/4 bars). Everything downstream of the MIDI miner
(training, generation, evaluation, the HTTP service) trades in these grids.
"""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field

import numpy as np

N_INSTRUMENTS = 9
N_STEPS = 32
STEPS_PER_BAR = 16
N_CELLS = N_INSTRUMENTS * N_STEPS

# Quarter-note positions inside the 32-step grid. Strong beats are 1 and 3
# of each bar, weak beats are 2 and 4; 16th offsets belong to neither.
STRONG_STEPS = (0, 8, 16, 24)
WEAK_STEPS = (4, 12, 20, 28)


class Instrument(enum.IntEnum):
    """The nine drum classes, in frozen row order.

    The ordinal order is shared by serialization, model I/O, and the UI and
    must never change.
    """

    KICK = 0
    SNARE = 1
    CLOSED_HIHAT = 2
    OPEN_HIHAT = 3
    LOW_TOM = 4
    MID_TOM = 5
    HIGH_TOM = 6
    CRASH = 7
    RIDE = 8


INSTRUMENT_NAMES = (
    "kick",
    "snare",
    "closed_hihat",
    "open_hihat",
    "low_tom",
    "mid_tom",
    "high_tom",
    "crash",
    "ride",
)

TOMS = (Instrument.LOW_TOM, Instrument.MID_TOM, Instrument.HIGH_TOM)

PATTERN_FORMAT_VERSION = 1


class PatternFormatError(ValueError):
    """Raised when a pattern document violates the file format contract."""


def _freeze(arr: np.ndarray) -> np.ndarray:
    # always copy so the caller's array is never locked in place
    arr = np.ascontiguousarray(arr).copy()
    arr.flags.writeable = False
    return arr


def _check_grid(grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(grid)
    if grid.shape != (N_INSTRUMENTS, N_STEPS):
        raise ValueError(
            f"grid must be {N_INSTRUMENTS}x{N_STEPS}, got {grid.shape}"
        )
    if not np.isin(grid, (0, 1)).all():
        raise ValueError("grid cells must be 0 or 1")
    return _freeze(grid.astype(np.uint8))


@dataclass(frozen=True)
class DrumPattern:
    """An immutable binary 9x32 grid; row i is ``Instrument(i)``."""

    grid: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "grid", _check_grid(self.grid))

    @classmethod
    def empty(cls) -> "DrumPattern":
        return cls(np.zeros((N_INSTRUMENTS, N_STEPS), dtype=np.uint8))

    @classmethod
    def from_hits(cls, hits) -> "DrumPattern":
        """Build a pattern from (instrument, step) pairs."""
        grid = np.zeros((N_INSTRUMENTS, N_STEPS), dtype=np.uint8)
        for instr, step in hits:
            grid[int(instr), int(step)] = 1
        return cls(grid)

    @property
    def density(self) -> float:
        return float(self.grid.sum()) / N_CELLS

    @property
    def total_hits(self) -> int:
        return int(self.grid.sum())

    def bar(self, m: int) -> np.ndarray:
        """The 9x16 slice of bar ``m`` (0 or 1)."""
        return self.grid[:, m * STEPS_PER_BAR:(m + 1) * STEPS_PER_BAR]

    def shifted(self, k: int) -> "DrumPattern":
        """Circular time shift by ``k`` steps (hits move later)."""
        return DrumPattern(np.roll(self.grid, k % N_STEPS, axis=1))

    def __eq__(self, other):
        if not isinstance(other, DrumPattern):
            return NotImplemented
        return bool(np.array_equal(self.grid, other.grid))

    def __hash__(self):
        return hash(self.grid.tobytes())


# Tri-state cell values for MaskedPattern.
SILENT = 0
HIT = 1
MASKED = 2


@dataclass(frozen=True)
class MaskedPattern:
    """A grid under construction: known cells plus masked (to-predict) cells.

    ``values`` holds 0/1 for known cells and 0 for masked ones; ``mask`` marks
    which cells are masked; ``locks`` marks cells the decoder must never touch.
    A locked cell is never masked.
    """

    values: np.ndarray
    mask: np.ndarray
    locks: np.ndarray = field(default=None)

    def __post_init__(self):
        values = np.asarray(self.values)
        mask = np.asarray(self.mask, dtype=bool)
        locks = self.locks
        if locks is None:
            locks = np.zeros((N_INSTRUMENTS, N_STEPS), dtype=bool)
        locks = np.asarray(locks, dtype=bool)
        for name, arr in (("values", values), ("mask", mask), ("locks", locks)):
            if arr.shape != (N_INSTRUMENTS, N_STEPS):
                raise ValueError(f"{name} must be {N_INSTRUMENTS}x{N_STEPS}")
        if not np.isin(values, (0, 1)).all():
            raise ValueError("values cells must be 0 or 1")
        if (locks & mask).any():
            i, t = np.argwhere(locks & mask)[0]
            raise ValueError(f"cell ({int(i)},{int(t)}) is locked but masked")
        values = values.astype(np.uint8).copy()
        values[mask] = 0  # masked cells carry no value
        object.__setattr__(self, "values", _freeze(values))
        object.__setattr__(self, "mask", _freeze(mask))
        object.__setattr__(self, "locks", _freeze(locks))

    @classmethod
    def fully_masked(cls) -> "MaskedPattern":
        return cls(
            np.zeros((N_INSTRUMENTS, N_STEPS), dtype=np.uint8),
            np.ones((N_INSTRUMENTS, N_STEPS), dtype=bool),
        )

    @classmethod
    def from_pattern(cls, pattern: DrumPattern, mask: np.ndarray,
                     locks: np.ndarray | None = None) -> "MaskedPattern":
        return cls(pattern.grid, mask, locks)

    @property
    def n_masked(self) -> int:
        return int(self.mask.sum())

    def cells(self) -> np.ndarray:
        """Tri-state view: 0 silent, 1 hit, 2 masked."""
        out = self.values.astype(np.int8).copy()
        out[self.mask] = MASKED
        return out

    def resolve(self, fill: np.ndarray) -> DrumPattern:
        """Resolve masked cells from ``fill`` (0/1 grid) into a DrumPattern."""
        out = self.values.copy()
        m = self.mask
        out[m] = np.asarray(fill, dtype=np.uint8)[m]
        return DrumPattern(out)


@dataclass(frozen=True)
class LoopRecord:
    """A mined (or synthesized) loop plus its provenance metadata."""

    pattern: DrumPattern
    tempo_bpm: float
    source_id: str
    period_score: float
    genre_tag: str | None = None

    def __post_init__(self):
        if not (0.0 <= self.period_score <= 1.0):
            raise ValueError(f"period_score {self.period_score} outside [0,1]")


@dataclass(frozen=True)
class PatternMetrics:
    """The three rhythm metrics reported by the evaluation harness."""

    beat_strength: float
    pattern_repetition: float
    instrument_balance: float

    MAX_BALANCE = math.log2(N_INSTRUMENTS)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------

def beat_strength(p: DrumPattern) -> float:
    """Ratio of hits on strong quarter beats to hits on strong plus weak.

    Strong beats are 1 and 3 of each bar, weak beats are 2 and 4; hits on
    16th offsets are excluded. Returns the neutral 0.5 when no hit falls on
    any quarter beat, so batch evaluation never divides by zero.
    """
    s = int(p.grid[:, STRONG_STEPS].sum())
    w = int(p.grid[:, WEAK_STEPS].sum())
    if s + w == 0:
        return 0.5
    return s / (s + w)


def pattern_repetition(p: DrumPattern) -> float:
    """Cosine similarity between bar 1 and bar 2, flattened.

    Returns 0.0 if either bar is empty (no direction to compare).
    """
    b1 = p.bar(0).ravel().astype(np.float64)
    b2 = p.bar(1).ravel().astype(np.float64)
    n1 = np.linalg.norm(b1)
    n2 = np.linalg.norm(b2)
    if n1 == 0.0 or n2 == 0.0:
        return 0.0
    return float(b1 @ b2 / (n1 * n2))


def instrument_balance(p: DrumPattern) -> float:
    """Shannon entropy (base 2) of the per-instrument hit distribution.

    Ranges from 0 (all hits on one instrument) to log2(9) ~ 3.1699 (hits
    spread evenly over all nine). An empty pattern scores 0.
    """
    hits = p.grid.sum(axis=1).astype(np.float64)
    total = hits.sum()
    if total == 0:
        return 0.0
    q = hits[hits > 0] / total
    return float(-(q * np.log2(q)).sum())


def compute_metrics(p: DrumPattern) -> PatternMetrics:
    return PatternMetrics(
        beat_strength=beat_strength(p),
        pattern_repetition=pattern_repetition(p),
        instrument_balance=instrument_balance(p),
    )


def iou(a: DrumPattern, b: DrumPattern) -> float:
    """Intersection-over-union of the two active cell sets.

    Two empty patterns are identical, so iou(empty, empty) = 1.0.
    """
    inter = int((a.grid & b.grid).sum())
    union = int((a.grid | b.grid).sum())
    if union == 0:
        return 1.0
    return inter / union


def jaccard_distance(a: DrumPattern, b: DrumPattern) -> float:
    return 1.0 - iou(a, b)


# ---------------------------------------------------------------------------
# Pattern file format (version 1)
#
# One JSON document per pattern; datasets are one document per line (JSONL).
# Unknown fields are ignored on read and never preserved.
# ---------------------------------------------------------------------------

def pattern_to_doc(p: DrumPattern | LoopRecord) -> dict:
    """The version-1 document for a pattern or loop record."""
    if isinstance(p, LoopRecord):
        record, pattern = p, p.pattern
    else:
        record, pattern = None, p
    doc = {
        "version": PATTERN_FORMAT_VERSION,
        "steps": N_STEPS,
        "instruments": list(INSTRUMENT_NAMES),
        "grid": pattern.grid.tolist(),
    }
    if record is not None:
        doc["tempo_bpm"] = record.tempo_bpm
        doc["source_id"] = record.source_id
        doc["period_score"] = record.period_score
        if record.genre_tag is not None:
            doc["genre_tag"] = record.genre_tag
    return doc


def _require(doc: dict, field_name: str):
    if field_name not in doc:
        raise PatternFormatError(f"missing field '{field_name}'")
    return doc[field_name]


def doc_to_pattern(doc: dict) -> DrumPattern:
    """Parse the grid portion of a document, validating the format contract."""
    if not isinstance(doc, dict):
        raise PatternFormatError("pattern document must be an object")
    version = _require(doc, "version")
    if version != PATTERN_FORMAT_VERSION:
        raise PatternFormatError(f"unknown version {version!r}")
    steps = _require(doc, "steps")
    if steps != N_STEPS:
        raise PatternFormatError(f"field 'steps' must be {N_STEPS}, got {steps!r}")
    instruments = _require(doc, "instruments")
    if list(instruments) != list(INSTRUMENT_NAMES):
        raise PatternFormatError("field 'instruments' does not match the fixed order")
    grid = _require(doc, "grid")
    if not isinstance(grid, list) or len(grid) != N_INSTRUMENTS:
        raise PatternFormatError(f"field 'grid' must hold {N_INSTRUMENTS} rows")
    for i, row in enumerate(grid):
        if not isinstance(row, list) or len(row) != N_STEPS:
            raise PatternFormatError(f"field 'grid' row {i} must hold {N_STEPS} cells")
        for t, cell in enumerate(row):
            if cell not in (0, 1):
                raise PatternFormatError(
                    f"field 'grid' cell ({i},{t}) must be 0 or 1, got {cell!r}"
                )
    return DrumPattern(np.array(grid, dtype=np.uint8))


def doc_to_record(doc: dict, default_source: str = "") -> LoopRecord:
    pattern = doc_to_pattern(doc)
    tempo = doc.get("tempo_bpm", 120.0)
    if not isinstance(tempo, (int, float)) or isinstance(tempo, bool):
        raise PatternFormatError(f"field 'tempo_bpm' must be a number, got {tempo!r}")
    score = doc.get("period_score", 1.0)
    if not isinstance(score, (int, float)) or isinstance(score, bool):
        raise PatternFormatError(f"field 'period_score' must be a number, got {score!r}")
    return LoopRecord(
        pattern=pattern,
        tempo_bpm=float(tempo),
        source_id=str(doc.get("source_id", default_source)),
        period_score=float(score),
        genre_tag=doc.get("genre_tag"),
    )


def serialize(p: DrumPattern | LoopRecord) -> bytes:
    """Deterministic single-document encoding of a pattern or record."""
    return (json.dumps(pattern_to_doc(p), sort_keys=True,
                       separators=(",", ":")) + "\n").encode("utf-8")


def deserialize(data: bytes | str) -> LoopRecord:
    """Inverse of :func:`serialize`; bare patterns come back with defaults."""
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise PatternFormatError(f"not a valid document: {exc}") from exc
    return doc_to_record(doc)


def save_dataset(records, path) -> None:
    """Write records as line-delimited version-1 documents."""
    with open(path, "wb") as fh:
        for rec in records:
            fh.write(serialize(rec))


def load_dataset(path) -> list[LoopRecord]:
    records = []
    with open(path, "rb") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                records.append(deserialize(line))
            except PatternFormatError as exc:
                raise PatternFormatError(f"line {lineno}: {exc}") from exc
    return records
