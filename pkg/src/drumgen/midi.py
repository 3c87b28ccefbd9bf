"""Standard MIDI file reading and drum-track quantization.

Parses format 0/1 files (header + track chunks, variable-length deltas,
running status), isolates percussion by MIDI channel 10, maps General MIDI
percussion notes onto the nine instrument classes, and snaps onsets to a
16th-note grid with a global swing-ratio estimate.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field

import numpy as np

from .patterns import N_INSTRUMENTS, Instrument

DRUM_CHANNEL = 9  # MIDI channel 10, zero-indexed
DEFAULT_VELOCITY_THRESHOLD = 20
DEFAULT_TEMPO_BPM = 120.0

META_SET_TEMPO = 0x51
META_END_OF_TRACK = 0x2F


class MidiParseError(ValueError):
    """Malformed MIDI input; carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.offset = offset


class NoDrumTrackError(ValueError):
    """The file has no events on MIDI channel 10."""


@dataclass(frozen=True)
class RawNoteEvent:
    tick: int
    note_number: int
    velocity: int
    channel: int


@dataclass(frozen=True)
class ParsedMidi:
    format_type: int
    ticks_per_quarter: int
    tracks: list          # one list[RawNoteEvent] per track chunk
    tempo_map: list       # (tick, microseconds per quarter), tick-sorted
    end_tick: int         # latest end-of-track time across all tracks

    @property
    def tempo_bpm(self) -> float:
        """BPM of the first tempo event; 120 if the file sets none."""
        if not self.tempo_map:
            return DEFAULT_TEMPO_BPM
        return 60_000_000.0 / self.tempo_map[0][1]


@dataclass(frozen=True)
class QuantizedTrack:
    """A drum take snapped to the 16th grid.

    ``roll`` is 9 x T binary; ``swing_ratio`` is the estimated relative
    position of off-8th onsets (0.5 = straight, up to 0.75), kept as
    metadata only: the grid itself is straight.
    """

    roll: np.ndarray
    tempo_bpm: float
    swing_ratio: float

    @property
    def n_steps(self) -> int:
        return self.roll.shape[1]


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def need(self, n: int, what: str):
        if self.pos + n > len(self.data):
            raise MidiParseError(f"truncated {what}", self.pos)

    def bytes(self, n: int, what: str) -> bytes:
        self.need(n, what)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u8(self, what: str) -> int:
        return self.bytes(1, what)[0]

    def u16(self, what: str) -> int:
        return int.from_bytes(self.bytes(2, what), "big")

    def u32(self, what: str) -> int:
        return int.from_bytes(self.bytes(4, what), "big")

    def vlq(self, what: str) -> int:
        """Variable-length quantity, 7 bits per byte, high bit continues."""
        value = 0
        for _ in range(4):
            b = self.u8(what)
            value = (value << 7) | (b & 0x7F)
            if not b & 0x80:
                return value
        raise MidiParseError(f"overlong variable-length quantity in {what}", self.pos)


# Data byte counts for channel messages by high nibble.
_CHANNEL_DATA_BYTES = {
    0x80: 2, 0x90: 2, 0xA0: 2, 0xB0: 2, 0xC0: 1, 0xD0: 1, 0xE0: 2,
}


def parse_midi(data: bytes) -> ParsedMidi:
    """Parse a format 0/1 MIDI file into note-on events plus a tempo map.

    Only note-on events with velocity > 0 are kept (a velocity-0 note-on is
    a note-off by convention). Raises :class:`MidiParseError` with the byte
    offset on malformed input.
    """
    r = _Reader(bytes(data))
    if r.bytes(4, "header") != b"MThd":
        raise MidiParseError("not a MIDI file (missing MThd magic)", 0)
    header_len = r.u32("header")
    if header_len < 6:
        raise MidiParseError(f"header chunk too short ({header_len})", r.pos - 4)
    format_type = r.u16("header")
    n_tracks = r.u16("header")
    division = r.u16("header")
    r.bytes(header_len - 6, "header")  # skip any header extension
    if division & 0x8000:
        raise MidiParseError("SMPTE time division is not supported", r.pos - 2)
    if division == 0:
        raise MidiParseError("ticks-per-quarter division is zero", r.pos - 2)
    if format_type not in (0, 1):
        raise MidiParseError(f"unsupported MIDI format {format_type}", 8)

    tracks = []
    tempo_map = []
    end_tick = 0
    for _ in range(n_tracks):
        chunk_start = r.pos
        magic = r.bytes(4, "track chunk")
        length = r.u32("track chunk")
        if magic != b"MTrk":
            # Unknown chunk types are skipped per the MIDI spec.
            r.bytes(length, "chunk body")
            continue
        body_end = r.pos + length
        r.need(length, "track body")
        events = []
        tick = 0
        running_status = None
        while r.pos < body_end:
            tick += r.vlq("delta time")
            status = r.u8("event status")
            if status < 0x80:
                if running_status is None:
                    raise MidiParseError("data byte with no running status", r.pos - 1)
                r.pos -= 1
                status = running_status
            if status == 0xFF:
                running_status = None
                meta_type = r.u8("meta event")
                meta_len = r.vlq("meta length")
                payload = r.bytes(meta_len, "meta payload")
                if meta_type == META_SET_TEMPO and meta_len == 3:
                    tempo_map.append((tick, int.from_bytes(payload, "big")))
                elif meta_type == META_END_OF_TRACK:
                    break
            elif status in (0xF0, 0xF7):
                running_status = None
                r.bytes(r.vlq("sysex length"), "sysex payload")
            elif status >= 0xF0:
                raise MidiParseError(f"unexpected system byte 0x{status:02X}", r.pos - 1)
            else:
                running_status = status
                kind = status & 0xF0
                channel = status & 0x0F
                payload = r.bytes(_CHANNEL_DATA_BYTES[kind], "channel message")
                if kind == 0x90 and payload[1] > 0:
                    events.append(RawNoteEvent(tick, payload[0], payload[1], channel))
        if r.pos > body_end:
            raise MidiParseError("event runs past the track chunk", chunk_start)
        r.pos = body_end
        events.sort(key=lambda ev: ev.tick)
        tracks.append(events)
        end_tick = max(end_tick, tick)

    tempo_map.sort(key=lambda pair: pair[0])
    return ParsedMidi(format_type, division, tracks, tempo_map, end_tick)


def tick_to_seconds(tick: int, tempo_map, ticks_per_quarter: int) -> float:
    """Wall-clock time of a tick under the (possibly changing) tempo map."""
    default_us = 60_000_000.0 / DEFAULT_TEMPO_BPM
    seconds = 0.0
    prev_tick = 0
    prev_us = tempo_map[0][1] if tempo_map and tempo_map[0][0] == 0 else default_us
    for change_tick, us in tempo_map:
        if change_tick >= tick:
            break
        if change_tick > prev_tick:
            seconds += (change_tick - prev_tick) * prev_us / (ticks_per_quarter * 1e6)
            prev_tick = change_tick
        prev_us = us
    seconds += (tick - prev_tick) * prev_us / (ticks_per_quarter * 1e6)
    return seconds


def isolate_drum_track(tracks) -> list:
    """Merge all channel-10 events across tracks, sorted by tick.

    Raises :class:`NoDrumTrackError` when the file carries no percussion.
    """
    merged = [ev for track in tracks for ev in track if ev.channel == DRUM_CHANNEL]
    if not merged:
        raise NoDrumTrackError("no events on MIDI channel 10")
    merged.sort(key=lambda ev: ev.tick)
    return merged


# General MIDI percussion note -> instrument class. Notes missing from the
# table (shakers, congas, cowbell, ...) have no row in the grid and drop.
GM_PERCUSSION_MAP: dict[int, Instrument] = {
    35: Instrument.KICK, 36: Instrument.KICK,
    37: Instrument.SNARE, 38: Instrument.SNARE,
    39: Instrument.SNARE, 40: Instrument.SNARE,
    42: Instrument.CLOSED_HIHAT, 44: Instrument.CLOSED_HIHAT,
    46: Instrument.OPEN_HIHAT,
    41: Instrument.LOW_TOM, 43: Instrument.LOW_TOM, 45: Instrument.LOW_TOM,
    47: Instrument.MID_TOM, 48: Instrument.MID_TOM,
    50: Instrument.HIGH_TOM,
    49: Instrument.CRASH, 52: Instrument.CRASH,
    55: Instrument.CRASH, 57: Instrument.CRASH,
    51: Instrument.RIDE, 53: Instrument.RIDE, 59: Instrument.RIDE,
}


def map_gm_to_class(note_number: int, table=None) -> Instrument | None:
    """Instrument class for a GM percussion note, or None to drop it."""
    if table is None:
        table = GM_PERCUSSION_MAP
    return table.get(note_number)


def estimate_swing_ratio(positions_16th) -> float:
    """Median relative position of onsets that fall between 8th-note lines.

    ``positions_16th`` are continuous onset positions in 16th-note units.
    Onsets within a 32nd note of an 8th line are treated as on the line and
    excluded. Returns 0.5 (straight) when nothing falls between, and clamps
    to [0.5, 0.75] otherwise.
    """
    rel = (np.asarray(positions_16th, dtype=np.float64) % 2.0) / 2.0
    between = rel[(rel >= 0.125) & (rel <= 0.875)]
    if between.size == 0:
        return 0.5
    ratio = statistics.median(between.tolist())
    return min(0.75, max(0.5, ratio))


def quantize(events, ticks_per_quarter: int, tempo_map=(),
             velocity_threshold: int = DEFAULT_VELOCITY_THRESHOLD,
             preserve_swing: bool = True, end_tick: int | None = None,
             note_table=None) -> QuantizedTrack:
    """Snap drum onsets onto the binary 9 x T sixteenth grid.

    Each onset is placed at the nearest slot of the straight-or-swung grid:
    within every 8th-note span the candidate slots are the span start, the
    (possibly swung) 16th offbeat, and the next span start. Onsets quieter
    than ``velocity_threshold`` and notes outside the percussion table are
    dropped. Raising the threshold can only remove cells, never add them.
    """
    if not 1 <= velocity_threshold <= 127:
        raise ValueError("velocity_threshold must be in 1..127")
    step_ticks = ticks_per_quarter / 4.0
    if end_tick is None:
        end_tick = max((ev.tick for ev in events), default=0)
    n_steps = int(np.ceil(end_tick / step_ticks)) if end_tick > 0 else 0

    tempo_bpm = DEFAULT_TEMPO_BPM
    if tempo_map:
        tempo_bpm = 60_000_000.0 / sorted(tempo_map)[0][1]

    kept = [
        (ev.tick / step_ticks, map_gm_to_class(ev.note_number, note_table))
        for ev in events
        if ev.velocity >= velocity_threshold
    ]
    kept = [(pos, instr) for pos, instr in kept if instr is not None]

    swing = 0.5
    if preserve_swing and kept:
        swing = estimate_swing_ratio([pos for pos, _ in kept])

    cells = []
    for pos, instr in kept:
        span = int(pos // 2) * 2
        rel = (pos - span) / 2.0
        if rel < swing / 2.0:
            step = span
        elif rel < (swing + 1.0) / 2.0:
            step = span + 1
        else:
            step = span + 2
        cells.append((int(instr), step))

    if cells:
        n_steps = max(n_steps, max(step for _, step in cells) + 1)
    roll = np.zeros((N_INSTRUMENTS, n_steps), dtype=np.uint8)
    for instr, step in cells:
        roll[instr, step] = 1
    return QuantizedTrack(roll=roll, tempo_bpm=tempo_bpm, swing_ratio=swing)
