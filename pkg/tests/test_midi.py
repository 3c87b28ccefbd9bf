import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from drumgen.midi import (
    GM_PERCUSSION_MAP,
    MidiParseError,
    NoDrumTrackError,
    ParsedMidi,
    RawNoteEvent,
    estimate_swing_ratio,
    isolate_drum_track,
    map_gm_to_class,
    parse_midi,
    quantize,
    tick_to_seconds,
)
from drumgen.patterns import Instrument

from midi_builder import (
    drum_file,
    end_of_track,
    midi_file,
    note_off,
    note_on,
    running_note,
    set_tempo,
    track_chunk,
)


class TestParser:
    def test_minimal_single_note(self):
        # MThd(fmt 0, 1 track, div 480) + MTrk with one note-on:
        # delta 0, 0x99 (note-on ch10), note 36, vel 100.
        data = midi_file(track_chunk(note_on(0, 36, 100)))
        parsed = parse_midi(data)
        assert parsed.format_type == 0
        assert parsed.ticks_per_quarter == 480
        assert parsed.tracks == [[RawNoteEvent(0, 36, 100, 9)]]

    def test_no_note_events(self):
        data = midi_file(track_chunk(set_tempo(0, 500_000)))
        parsed = parse_midi(data)
        assert parsed.tracks == [[]]
        assert parsed.tempo_map == [(0, 500_000)]
        assert parsed.tempo_bpm == pytest.approx(120.0)

    def test_bad_magic_reports_offset_zero(self):
        with pytest.raises(MidiParseError, match="byte 0"):
            parse_midi(b"RIFF" + b"\x00" * 20)

    def test_truncated_track_chunk(self):
        data = midi_file(track_chunk(note_on(0, 36, 100)))
        with pytest.raises(MidiParseError, match="truncated"):
            parse_midi(data[:-5])

    def test_zero_division_rejected(self):
        header = b"MThd" + (6).to_bytes(4, "big") + b"\x00\x00\x00\x01\x00\x00"
        with pytest.raises(MidiParseError, match="zero"):
            parse_midi(header + track_chunk(note_on(0, 36, 100)))

    def test_smpte_division_rejected(self):
        header = b"MThd" + (6).to_bytes(4, "big") + b"\x00\x00\x00\x01\xE7\x28"
        with pytest.raises(MidiParseError, match="SMPTE"):
            parse_midi(header + track_chunk(note_on(0, 36, 100)))

    def test_running_status(self):
        # Second and third notes reuse the 0x99 status byte.
        trk = track_chunk(
            note_on(0, 36, 100),
            running_note(120, 38, 90),
            running_note(120, 42, 80),
        )
        parsed = parse_midi(midi_file(trk))
        assert [(e.tick, e.note_number) for e in parsed.tracks[0]] == \
            [(0, 36), (120, 38), (240, 42)]

    def test_velocity_zero_note_on_is_ignored(self):
        trk = track_chunk(note_on(0, 36, 100), note_on(480, 36, 0))
        parsed = parse_midi(midi_file(trk))
        assert len(parsed.tracks[0]) == 1

    def test_note_off_ignored(self):
        trk = track_chunk(note_on(0, 36, 100), note_off(10, 36))
        parsed = parse_midi(midi_file(trk))
        assert len(parsed.tracks[0]) == 1

    def test_two_byte_vlq_delta(self):
        # delta 0x81 0x48 = (1<<7) + 0x48 = 200
        trk = track_chunk(note_on(0, 36, 100), note_on(200, 38, 90))
        parsed = parse_midi(midi_file(trk))
        assert parsed.tracks[0][1].tick == 200

    def test_format1_multitrack(self):
        meta = track_chunk(set_tempo(0, 600_000))
        drums = track_chunk(note_on(0, 36, 100))
        parsed = parse_midi(midi_file(meta, drums, fmt=1))
        assert parsed.format_type == 1
        assert len(parsed.tracks) == 2
        assert parsed.tempo_bpm == pytest.approx(100.0)

    def test_end_tick_from_end_of_track(self):
        trk = track_chunk(note_on(0, 36, 100), end_of_track(960),
                          append_end=False)
        parsed = parse_midi(midi_file(trk))
        assert parsed.end_tick == 960


class TestTempoMap:
    def test_tick_to_seconds_single_tempo(self):
        # 120 bpm -> quarter = 0.5 s; 480 ticks/quarter
        assert tick_to_seconds(960, [(0, 500_000)], 480) == pytest.approx(1.0)

    def test_tick_to_seconds_with_change(self):
        # 120 bpm for 1 quarter, then 60 bpm for 1 quarter = 0.5 + 1.0
        tm = [(0, 500_000), (480, 1_000_000)]
        assert tick_to_seconds(960, tm, 480) == pytest.approx(1.5)

    def test_first_tempo_governs_bpm(self):
        tm = [(0, 500_000), (480, 1_000_000)]
        parsed = ParsedMidi(0, 480, [[]], tm, 960)
        assert parsed.tempo_bpm == pytest.approx(120.0)


class TestDrumIsolation:
    def test_filters_melody_channels(self):
        melody = track_chunk(note_on(0, 60, 100, channel=0))
        drums = track_chunk(note_on(0, 36, 100, channel=9))
        parsed = parse_midi(midi_file(melody, drums, fmt=1))
        events = isolate_drum_track(parsed.tracks)
        assert [e.channel for e in events] == [9]

    def test_merges_multiple_drum_tracks(self):
        a = track_chunk(note_on(240, 36, 100))
        b = track_chunk(note_on(0, 38, 90))
        parsed = parse_midi(midi_file(a, b, fmt=1))
        events = isolate_drum_track(parsed.tracks)
        assert [(e.tick, e.note_number) for e in events] == [(0, 38), (240, 36)]

    def test_no_drums_raises(self):
        melody = track_chunk(note_on(0, 60, 100, channel=0))
        parsed = parse_midi(midi_file(melody))
        with pytest.raises(NoDrumTrackError):
            isolate_drum_track(parsed.tracks)


class TestGmMapping:
    @pytest.mark.parametrize("note,instr", [
        (35, Instrument.KICK), (36, Instrument.KICK),
        (38, Instrument.SNARE), (39, Instrument.SNARE), (40, Instrument.SNARE),
        (42, Instrument.CLOSED_HIHAT), (44, Instrument.CLOSED_HIHAT),
        (46, Instrument.OPEN_HIHAT),
        (41, Instrument.LOW_TOM), (43, Instrument.LOW_TOM), (45, Instrument.LOW_TOM),
        (47, Instrument.MID_TOM), (48, Instrument.MID_TOM),
        (50, Instrument.HIGH_TOM),
        (49, Instrument.CRASH), (57, Instrument.CRASH),
        (51, Instrument.RIDE), (53, Instrument.RIDE), (59, Instrument.RIDE),
    ])
    def test_table(self, note, instr):
        assert map_gm_to_class(note) is instr

    def test_total_on_note_range(self):
        for note in range(128):
            out = map_gm_to_class(note)
            assert out is None or isinstance(out, Instrument)

    def test_unmapped_notes_drop(self):
        assert map_gm_to_class(54) is None   # tambourine
        assert map_gm_to_class(60) is None   # hi bongo
        assert map_gm_to_class(0) is None

    def test_custom_table_override(self):
        table = dict(GM_PERCUSSION_MAP)
        table[54] = Instrument.CLOSED_HIHAT
        assert map_gm_to_class(54, table) is Instrument.CLOSED_HIHAT


def make_events(ticks_and_notes, velocity=100):
    return [RawNoteEvent(t, n, velocity, 9) for t, n in ticks_and_notes]


class TestQuantize:
    def test_on_grid_onsets_map_one_to_one(self):
        # div 480 -> 16th = 120 ticks
        events = make_events([(0, 36), (480, 38), (960, 36), (1440, 38)])
        q = quantize(events, 480, end_tick=1920)
        assert q.swing_ratio == 0.5
        assert q.n_steps == 16
        assert q.roll[Instrument.KICK, 0] == 1
        assert q.roll[Instrument.SNARE, 4] == 1
        assert q.roll[Instrument.KICK, 8] == 1
        assert q.roll[Instrument.SNARE, 12] == 1
        assert q.roll.sum() == 4

    def test_velocity_threshold(self):
        events = make_events([(0, 36)], velocity=10)
        q = quantize(events, 480, velocity_threshold=20, end_tick=480)
        assert q.roll.sum() == 0

    def test_threshold_boundary_is_inclusive(self):
        events = make_events([(0, 36)], velocity=20)
        q = quantize(events, 480, velocity_threshold=20, end_tick=480)
        assert q.roll.sum() == 1

    def test_collapse_multiple_onsets_per_cell(self):
        events = make_events([(0, 36), (5, 36), (10, 35)])
        q = quantize(events, 480, end_tick=480)
        assert q.roll[Instrument.KICK, 0] == 1
        assert q.roll.sum() == 1

    def test_empty_events_gives_empty_roll(self):
        q = quantize([], 480, end_tick=1920)
        assert q.roll.shape == (9, 16)
        assert q.roll.sum() == 0

    def test_swung_track_recovers_ratio(self):
        # Off-beat 8ths at 2/3 of the 8th span: 8th span = 240 ticks,
        # swung 16th lands 160 ticks after the span start.
        hits = []
        for k in range(16):
            hits.append((k * 240, 42))          # on the 8th line
            hits.append((k * 240 + 160, 42))    # swung offbeat
        events = make_events(hits)
        q = quantize(events, 480, end_tick=16 * 240)
        assert q.swing_ratio == pytest.approx(2 / 3, abs=0.02)
        # swung onsets snap to the odd 16th slots
        assert q.roll[Instrument.CLOSED_HIHAT].sum() == 32
        assert q.roll[Instrument.CLOSED_HIHAT, 1] == 1

    def test_straight_offbeats_not_mistaken_for_swing(self):
        hits = [(k * 120, 42) for k in range(32)]  # every straight 16th
        q = quantize(make_events(hits), 480, end_tick=32 * 120)
        assert q.swing_ratio == 0.5
        assert q.roll[Instrument.CLOSED_HIHAT].sum() == 32

    def test_no_swing_flag(self):
        hits = [(0, 42), (160, 42)]
        q = quantize(make_events(hits), 480, preserve_swing=False, end_tick=480)
        assert q.swing_ratio == 0.5

    def test_quantize_idempotent_on_rendered_grid(self):
        rng = np.random.default_rng(0)
        roll = (rng.random((9, 64)) < 0.2).astype(np.uint8)
        from midi_builder import roll_to_drum_file
        parsed = parse_midi(roll_to_drum_file(roll))
        events = isolate_drum_track(parsed.tracks)
        q = quantize(events, parsed.ticks_per_quarter,
                     tempo_map=parsed.tempo_map, end_tick=parsed.end_tick)
        assert q.roll.shape == roll.shape
        assert np.array_equal(q.roll, roll)

    @given(st.integers(1, 126))
    @settings(max_examples=30, deadline=None)
    def test_raising_threshold_monotone(self, threshold):
        rng = np.random.default_rng(threshold)
        events = [
            RawNoteEvent(int(t) * 120, 36, int(v), 9)
            for t, v in zip(range(40), rng.integers(1, 128, size=40))
        ]
        lo = quantize(events, 480, velocity_threshold=threshold, end_tick=40 * 120)
        hi = quantize(events, 480, velocity_threshold=threshold + 1, end_tick=40 * 120)
        # every active cell at the higher threshold is active at the lower
        assert (lo.roll >= hi.roll).all()

    def test_tempo_metadata_from_map(self):
        q = quantize(make_events([(0, 36)]), 480,
                     tempo_map=[(0, 400_000)], end_tick=480)
        assert q.tempo_bpm == pytest.approx(150.0)


class TestSwingEstimator:
    def test_straight(self):
        assert estimate_swing_ratio([0.0, 1.0, 2.0, 3.0]) == 0.5

    def test_triplet(self):
        positions = [0.0, 4 / 3, 2.0, 2 + 4 / 3]
        assert estimate_swing_ratio(positions) == pytest.approx(2 / 3)

    def test_clamped_to_range(self):
        assert estimate_swing_ratio([0.9, 2.9]) == 0.5      # rushed -> floor
        assert estimate_swing_ratio([1.7, 3.7]) == 0.75     # dragged -> ceil

    def test_end_to_end_roundtrip_via_file(self):
        data = drum_file([(0, 36, 100), (240, 42, 100), (480, 38, 100)],
                         end_pad_ticks=480 - 480 + 480)
        parsed = parse_midi(data)
        events = isolate_drum_track(parsed.tracks)
        q = quantize(events, parsed.ticks_per_quarter,
                     tempo_map=parsed.tempo_map, end_tick=parsed.end_tick)
        assert q.roll[Instrument.KICK, 0] == 1
        assert q.roll[Instrument.CLOSED_HIHAT, 2] == 1
        assert q.roll[Instrument.SNARE, 4] == 1
