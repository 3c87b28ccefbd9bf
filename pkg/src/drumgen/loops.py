"""Mining loopable two-bar patterns out of quantized drum rolls.

The detector downmixes the 9-row roll to a single onset indicator, scans
normalized autocorrelation over lags 16..64, and accepts the shortest lag
whose score clears the repetition threshold. A 32-step window is then cut
at the densest phase and run through quality filters, deduplication, and
optional augmentation to produce a training dataset.
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import midi
from .patterns import (
    N_CELLS,
    N_INSTRUMENTS,
    N_STEPS,
    STEPS_PER_BAR,
    DrumPattern,
    LoopRecord,
    iou,
)

logger = logging.getLogger(__name__)

MIN_TRACK_STEPS = 80  # every lag in 16..64 keeps at least 16 overlap positions


class EmptyTrackError(ValueError):
    """The activation vector has no onsets at all."""


class TrackTooShortError(ValueError):
    """Too few steps to scan the full lag range."""


@dataclass(frozen=True)
class ExtractionConfig:
    threshold: float = 0.8
    lag_min: int = 16
    lag_max: int = 64
    min_hits: int = 6
    max_density: float = 0.40
    min_density: float = 0.05
    dedup_similarity: float = 0.85

    def __post_init__(self):
        if not 0.0 < self.threshold <= 1.0:
            raise ValueError("threshold must be in (0, 1]")
        if not 0.0 < self.min_density < self.max_density <= 1.0:
            raise ValueError("need 0 < min_density < max_density <= 1")
        if self.lag_min < 1 or self.lag_max < self.lag_min:
            raise ValueError("bad lag range")


@dataclass(frozen=True)
class PeriodicityProfile:
    """Normalized autocorrelation over the lag range, plus the chosen period.

    ``phi[i]`` corresponds to ``lags[i]``; a perfectly periodic tiling scores
    exactly 1.0 at its period. ``best_period`` is the shortest lag above the
    threshold, or None when nothing repeats strongly enough.
    """

    lags: np.ndarray
    phi: np.ndarray
    best_period: int | None
    best_phase: int | None
    score: float


class RejectionReason(enum.Enum):
    NO_PERIOD = "no_period"
    TOO_SPARSE = "too_sparse"
    TOO_DENSE = "too_dense"
    TOO_FEW_HITS = "too_few_hits"
    WINDOW_OUT_OF_RANGE = "window_out_of_range"


def downmix(roll: np.ndarray) -> np.ndarray:
    """Collapse a 9xT roll to a 1-D onset indicator (logical OR over rows)."""
    roll = np.asarray(roll)
    if roll.ndim != 2 or roll.shape[0] != N_INSTRUMENTS:
        raise ValueError(f"roll must be {N_INSTRUMENTS}xT, got {roll.shape}")
    return roll.any(axis=0).astype(np.uint8)


def autocorrelate(a: np.ndarray, config: ExtractionConfig = ExtractionConfig()) -> PeriodicityProfile:
    """Scan lagged self-similarity of the onset vector.

    For each lag tau the raw correlation sum(a[t] * a[t+tau]) over the
    overlapping range is divided by the zero-lag sum over that same range,
    so an exact tiling scores 1.0 regardless of density. The accepted period
    is the SHORTEST lag whose score strictly exceeds the threshold; the
    phase is the 32-step window start (within one period) holding the most
    onsets, earliest on ties.
    """
    a = np.asarray(a).astype(np.float64)
    big_t = a.shape[0]
    if big_t < MIN_TRACK_STEPS:
        raise TrackTooShortError(
            f"track has {big_t} steps, need at least {MIN_TRACK_STEPS}"
        )
    if a.sum() == 0:
        raise EmptyTrackError("activation vector is all zeros")

    lags = np.arange(config.lag_min, config.lag_max + 1)
    phi = np.zeros(lags.shape[0], dtype=np.float64)
    for i, tau in enumerate(lags):
        head = a[: big_t - tau]
        num = float(head @ a[tau:])
        den = float(head @ head)
        phi[i] = num / den if den > 0 else 0.0

    best_period = None
    above = np.nonzero(phi > config.threshold)[0]
    if above.size:
        best_period = int(lags[above[0]])

    best_phase = None
    score = float(phi.max())
    if best_period is not None:
        score = float(phi[best_period - config.lag_min])
        # Hit count of every 32-step window starting inside one period;
        # windows that would run past the end are zero-padded, which
        # naturally disfavors them.
        padded = np.concatenate([a, np.zeros(N_STEPS, dtype=np.float64)])
        sums = np.cumsum(np.concatenate([[0.0], padded]))
        window_hits = sums[N_STEPS:N_STEPS + best_period] - sums[:best_period]
        best_phase = int(np.argmax(window_hits))

    return PeriodicityProfile(
        lags=lags, phi=phi, best_period=best_period,
        best_phase=best_phase, score=score,
    )


def check_quality(grid: np.ndarray, config: ExtractionConfig) -> RejectionReason | None:
    """Quality filters shared by extraction and augmentation."""
    hits = int(grid.sum())
    density = hits / N_CELLS
    if hits < config.min_hits:
        return RejectionReason.TOO_FEW_HITS
    if density >= config.max_density:
        return RejectionReason.TOO_DENSE
    if density < config.min_density:
        return RejectionReason.TOO_SPARSE
    return None


def extract_loop(roll: np.ndarray, profile: PeriodicityProfile,
                 config: ExtractionConfig = ExtractionConfig(),
                 tempo_bpm: float = 120.0, source_id: str = "",
                 genre_tag: str | None = None) -> LoopRecord | RejectionReason:
    """Cut the 32-step window at the detected phase, or say why not.

    Rejections are values, not exceptions: the pipeline tallies them.
    """
    if profile.best_period is None:
        return RejectionReason.NO_PERIOD
    start = profile.best_phase
    if start + N_STEPS > roll.shape[1]:
        return RejectionReason.WINDOW_OUT_OF_RANGE
    window = np.asarray(roll)[:, start:start + N_STEPS]
    reason = check_quality(window, config)
    if reason is not None:
        return reason
    return LoopRecord(
        pattern=DrumPattern(window),
        tempo_bpm=tempo_bpm,
        source_id=source_id,
        period_score=profile.score,
        genre_tag=genre_tag,
    )


def deduplicate(records, threshold: float = 0.85) -> list[LoopRecord]:
    """Greedy first-wins scan: drop a record when it matches any kept one.

    A record is dropped iff its pattern IoU with an already-kept pattern is
    at or above the threshold. Deterministic given input order.
    """
    kept: list[LoopRecord] = []
    for rec in records:
        if any(iou(rec.pattern, k.pattern) >= threshold for k in kept):
            continue
        kept.append(rec)
    return kept


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

def _variant(rec: LoopRecord, grid: np.ndarray, tag: str) -> LoopRecord:
    return LoopRecord(
        pattern=DrumPattern(grid),
        tempo_bpm=rec.tempo_bpm,
        source_id=f"{rec.source_id}#{tag}",
        period_score=rec.period_score,
        genre_tag=rec.genre_tag,
    )


def half_time(grid: np.ndarray) -> np.ndarray | None:
    """Stretch bar 1 over the full loop; defined only when the bars match."""
    if not np.array_equal(grid[:, :STEPS_PER_BAR], grid[:, STEPS_PER_BAR:]):
        return None
    out = np.zeros_like(grid)
    out[:, ::2] = grid[:, :STEPS_PER_BAR]
    return out


def double_time(grid: np.ndarray) -> np.ndarray | None:
    """Compress to half length and tile; defined only for even-step hits."""
    if grid[:, 1::2].any():
        return None
    half = grid[:, ::2]
    out = np.zeros_like(grid)
    out[:, :STEPS_PER_BAR] = half
    out[:, STEPS_PER_BAR:] = half
    return out


def augment(record: LoopRecord, rng: np.random.Generator,
            corpus_table: np.ndarray | None = None,
            shifts=tuple(range(1, 17)),
            density: bool = True, stretch: bool = True,
            config: ExtractionConfig = ExtractionConfig()) -> list[LoopRecord]:
    """Time-shift, density-adjust, and stretch variants of one loop.

    Circular shifts cover 1..16 steps. Density variants remove 20% of the
    active cells uniformly, or add the same number of new cells sampled
    from the corpus per-cell hit frequencies (uniform fallback), steering
    additions toward musically plausible positions. Stretch variants exist
    only where the 32-step grid can express them. Variants failing the
    quality filters are silently discarded; deterministic given the rng.
    """
    grid = record.pattern.grid
    candidates: list[tuple[str, np.ndarray]] = []

    for k in shifts:
        candidates.append((f"shift{k}", np.roll(grid, k, axis=1)))

    if density:
        hits = int(grid.sum())
        n_change = int(0.2 * hits)
        if n_change >= 1:
            active = np.flatnonzero(grid.ravel())
            removed = rng.choice(active, size=n_change, replace=False)
            thinned = grid.ravel().copy()
            thinned[removed] = 0
            candidates.append(("dens-", thinned.reshape(grid.shape)))

            empty = np.flatnonzero(grid.ravel() == 0)
            if empty.size >= n_change:
                if corpus_table is not None:
                    weights = np.asarray(corpus_table, dtype=np.float64).ravel()[empty]
                else:
                    weights = np.zeros(empty.shape[0])
                if weights.sum() <= 0:
                    weights = np.ones(empty.shape[0])
                weights = weights / weights.sum()
                added = rng.choice(empty, size=n_change, replace=False, p=weights)
                thickened = grid.ravel().copy()
                thickened[added] = 1
                candidates.append(("dens+", thickened.reshape(grid.shape)))

    if stretch:
        halved = half_time(grid)
        if halved is not None:
            candidates.append(("half", halved))
        doubled = double_time(grid)
        if doubled is not None:
            candidates.append(("double", doubled))

    return [
        _variant(record, g, tag)
        for tag, g in candidates
        if check_quality(g, config) is None
    ]


# ---------------------------------------------------------------------------
# Dataset pipeline
# ---------------------------------------------------------------------------

@dataclass
class ExtractionReport:
    files_scanned: int = 0
    files_skipped: dict = field(default_factory=dict)
    accepted: int = 0
    rejections: dict = field(default_factory=dict)
    dedup_dropped: int = 0
    augmented_added: int = 0
    final_count: int = 0

    def skip(self, reason: str):
        self.files_skipped[reason] = self.files_skipped.get(reason, 0) + 1

    def reject(self, reason: RejectionReason):
        self.rejections[reason.value] = self.rejections.get(reason.value, 0) + 1

    def as_text(self) -> str:
        lines = [
            "extraction summary",
            f"  files scanned:    {self.files_scanned}",
        ]
        for reason in sorted(self.files_skipped):
            lines.append(f"  skipped ({reason}): {self.files_skipped[reason]}")
        lines.append(f"  loops accepted:   {self.accepted}")
        for reason in (r.value for r in RejectionReason):
            if reason in self.rejections:
                lines.append(f"  rejected ({reason}): {self.rejections[reason]}")
        lines += [
            f"  dedup dropped:    {self.dedup_dropped}",
            f"  augment added:    {self.augmented_added}",
            f"  final dataset:    {self.final_count}",
        ]
        return "\n".join(lines)


def corpus_frequency_table(records) -> np.ndarray:
    """Per-cell hit frequency across a set of loops (for density-add sampling)."""
    table = np.zeros((N_INSTRUMENTS, N_STEPS), dtype=np.float64)
    n = 0
    for rec in records:
        table += rec.pattern.grid
        n += 1
    return table / n if n else table


def extract_from_roll(roll: np.ndarray, config: ExtractionConfig = ExtractionConfig(),
                      tempo_bpm: float = 120.0, source_id: str = "",
                      genre_tag: str | None = None) -> LoopRecord | RejectionReason:
    """Detector plus cutter in one step (downmix, autocorrelate, extract)."""
    profile = autocorrelate(downmix(roll), config)
    return extract_loop(roll, profile, config, tempo_bpm=tempo_bpm,
                        source_id=source_id, genre_tag=genre_tag)


def build_dataset(midi_dir, config: ExtractionConfig = ExtractionConfig(),
                  augment_mode: str = "none", seed: int = 0,
                  velocity_threshold: int = midi.DEFAULT_VELOCITY_THRESHOLD,
                  preserve_swing: bool = True) -> tuple[list[LoopRecord], ExtractionReport]:
    """Run the full pipeline over a directory of MIDI files.

    Stages: ingest each file, extract one loop per file, quality-filter,
    deduplicate (input sorted by source id for reproducibility), then
    optionally augment. Individual file failures are logged and skipped,
    never fatal.
    """
    if augment_mode not in ("none", "shift", "all"):
        raise ValueError(f"unknown augment mode {augment_mode!r}")
    midi_dir = Path(midi_dir)
    if not midi_dir.is_dir():
        raise NotADirectoryError(f"{midi_dir} is not a directory")

    report = ExtractionReport()
    accepted: list[LoopRecord] = []
    paths = sorted(
        p for p in midi_dir.iterdir()
        if p.suffix.lower() in (".mid", ".midi") and p.is_file()
    )
    for path in paths:
        report.files_scanned += 1
        try:
            parsed = midi.parse_midi(path.read_bytes())
            events = midi.isolate_drum_track(parsed.tracks)
            track = midi.quantize(
                events, parsed.ticks_per_quarter, tempo_map=parsed.tempo_map,
                velocity_threshold=velocity_threshold,
                preserve_swing=preserve_swing, end_tick=parsed.end_tick,
            )
            result = extract_from_roll(
                track.roll, config, tempo_bpm=track.tempo_bpm,
                source_id=path.name,
            )
        except midi.MidiParseError as exc:
            logger.warning("skipping %s: %s", path.name, exc)
            report.skip("parse_error")
            continue
        except midi.NoDrumTrackError:
            logger.info("skipping %s: no drum track", path.name)
            report.skip("no_drum_track")
            continue
        except TrackTooShortError:
            report.skip("too_short")
            continue
        except EmptyTrackError:
            report.skip("empty_track")
            continue
        if isinstance(result, RejectionReason):
            report.reject(result)
            continue
        accepted.append(result)
        report.accepted += 1

    accepted.sort(key=lambda r: r.source_id)
    survivors = deduplicate(accepted, config.dedup_similarity)
    report.dedup_dropped = len(accepted) - len(survivors)

    final = list(survivors)
    if augment_mode != "none" and survivors:
        rng = np.random.default_rng(seed)
        table = corpus_frequency_table(survivors)
        with_density = augment_mode == "all"
        for rec in survivors:
            final.extend(augment(
                rec, rng, corpus_table=table,
                density=with_density, stretch=with_density, config=config,
            ))
        report.augmented_added = len(final) - len(survivors)

    report.final_count = len(final)
    return final, report
