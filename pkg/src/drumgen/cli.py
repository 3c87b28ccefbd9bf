"""Command-line entry point.

One binary, one subcommand per pipeline stage. Exit codes: 0 success,
1 usage error, 2 data error (bad files or inputs), 3 internal error.
Every stochastic step derives from ``--seed`` (default 0), so identical
invocations produce byte-identical artifacts; entropy never leaks in.
"""
from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path

import numpy as np

from . import loops, midi, patterns, synth
from .decode import GenerationRequest, decode
from .evalsuite import (
    REFERENCE_FULL_SCALE,
    ablation_run,
    evaluate_set,
    generate_set,
    novelty_report,
)
from .losses import LossConfig
from .network import CheckpointError, ModelConfig, load_checkpoint
from .patterns import (
    INSTRUMENT_NAMES,
    DrumPattern,
    MaskedPattern,
    PatternFormatError,
    compute_metrics,
)
from .training import TrainConfig, TrainingDivergedError, curve_as_text, train


class _Parser(argparse.ArgumentParser):
    """argparse, but usage problems exit 1 instead of 2."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


_DATA_ERRORS = (
    PatternFormatError,
    CheckpointError,
    midi.MidiParseError,
    midi.NoDrumTrackError,
    loops.EmptyTrackError,
    loops.TrackTooShortError,
    TrainingDivergedError,
    FileNotFoundError,
    NotADirectoryError,
    IsADirectoryError,
    ValueError,
)


def _add_midi_flags(p):
    p.add_argument("--velocity-threshold", type=int, default=20,
                   help="minimum MIDI velocity for a hit (1..127)")
    p.add_argument("--no-swing", action="store_true",
                   help="skip swing estimation; snap to the straight grid")


def _extraction_config(args) -> loops.ExtractionConfig:
    return loops.ExtractionConfig(
        threshold=args.threshold, min_hits=args.min_hits,
        max_density=args.max_density, min_density=args.min_density,
        dedup_similarity=args.dedup,
    )


def cmd_ingest(args) -> int:
    path = Path(args.in_path)
    files = [path] if path.is_file() else sorted(
        p for p in path.iterdir() if p.suffix.lower() in (".mid", ".midi"))
    if not files:
        print(f"no MIDI files under {path}", file=sys.stderr)
        return 2
    for f in files:
        try:
            parsed = midi.parse_midi(f.read_bytes())
            events = midi.isolate_drum_track(parsed.tracks)
            track = midi.quantize(
                events, parsed.ticks_per_quarter, tempo_map=parsed.tempo_map,
                velocity_threshold=args.velocity_threshold,
                preserve_swing=not args.no_swing, end_tick=parsed.end_tick)
            density = track.roll.mean() if track.roll.size else 0.0
            print(f"{f.name}: {len(events)} drum events, {track.n_steps} steps, "
                  f"{track.tempo_bpm:.1f} bpm, swing {track.swing_ratio:.3f}, "
                  f"density {density:.3f}")
        except (midi.MidiParseError, midi.NoDrumTrackError) as exc:
            print(f"{f.name}: skipped ({exc})")
    return 0


def cmd_extract(args) -> int:
    config = _extraction_config(args)
    records, report = loops.build_dataset(
        args.in_path, config, augment_mode=args.augment, seed=args.seed,
        velocity_threshold=args.velocity_threshold,
        preserve_swing=not args.no_swing)
    patterns.save_dataset(records, args.out)
    print(report.as_text())
    print(f"wrote {len(records)} loops to {args.out}")
    return 0


def cmd_train(args) -> int:
    records = patterns.load_dataset(args.data)
    model_config = ModelConfig(d_model=args.d_model, n_layers=args.layers,
                               n_heads=args.heads, dropout=args.dropout)
    loss_config = LossConfig(loss_mix=tuple(args.loss_mix),
                             tom_term=not args.no_tom_term)
    train_config = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                               learning_rate=args.lr, seed=args.seed)

    def progress(row):
        print(f"epoch {row.epoch:3d}  train {row.train_total:.4f}  "
              f"val {row.val_total:.4f}  focal {row.val_focal:.4f}")

    result = train(records, model_config, loss_config, train_config,
                   callback=progress)
    result.save(args.out)
    curve_path = args.curve or (str(args.out) + ".curve.csv")
    Path(curve_path).write_text(curve_as_text(result.curve))
    print(f"best epoch {result.best_epoch} (val {result.best_val:.4f}); "
          f"checkpoint {args.out}, curve {curve_path}")
    return 0


def _parse_lock_rows(spec: str) -> list[int]:
    rows = []
    for name in spec.split(","):
        name = name.strip().lower()
        if not name:
            continue
        if name not in INSTRUMENT_NAMES:
            raise ValueError(
                f"unknown instrument {name!r}; choose from {', '.join(INSTRUMENT_NAMES)}")
        rows.append(INSTRUMENT_NAMES.index(name))
    return rows


def cmd_generate(args) -> int:
    model, _, _ = load_checkpoint(args.ckpt)
    if args.init:
        record = patterns.deserialize(Path(args.init).read_bytes())
        values = record.pattern.grid.copy()
    else:
        values = np.zeros((9, 32), dtype=np.uint8)
    locks = np.zeros((9, 32), dtype=bool)
    for row in _parse_lock_rows(args.lock_rows or ""):
        locks[row, :] = True
    mask = ~locks  # regenerate everything that is not locked
    request = GenerationRequest(
        initial=MaskedPattern(values, mask, locks),
        temperature=args.temperature, iterations=args.iterations,
        seed=args.seed)
    result = decode(request, model)
    Path(args.out).write_bytes(patterns.serialize(result.pattern))
    m = compute_metrics(result.pattern)
    print(f"wrote {args.out}: beat_strength {m.beat_strength:.3f}, "
          f"pattern_repetition {m.pattern_repetition:.3f}, "
          f"instrument_balance {m.instrument_balance:.3f}")
    return 0


def cmd_evaluate(args) -> int:
    model, _, manifest = load_checkpoint(args.ckpt)
    generated = generate_set(model, args.n, seed=args.seed,
                             temperature=args.temperature,
                             iterations=args.iterations)
    metrics = evaluate_set(generated)
    lines = [
        f"evaluated {args.n} generated loops "
        f"(temperature {args.temperature}, seed {args.seed})",
        f"beat_strength:      {metrics.beat_strength_mean:.4f} "
        f"+/- {metrics.beat_strength_stderr:.4f}",
        f"pattern_repetition: {metrics.pattern_repetition_mean:.4f} "
        f"+/- {metrics.pattern_repetition_stderr:.4f}",
        f"instrument_balance: {metrics.instrument_balance_mean:.4f} "
        f"+/- {metrics.instrument_balance_stderr:.4f}",
        "full-scale reference (not comparable at desk scale): "
        f"{REFERENCE_FULL_SCALE['full-system']}",
    ]
    if args.train_set:
        training = [r.pattern for r in patterns.load_dataset(args.train_set)]
        lines.append("")
        lines.append(novelty_report(generated, training).as_text())
    text = "\n".join(lines) + "\n"
    Path(args.out).write_text(text)
    print(text, end="")
    return 0


def cmd_novelty(args) -> int:
    generated = [r.pattern for r in patterns.load_dataset(args.generated)]
    training = [r.pattern for r in patterns.load_dataset(args.train_set)]
    report = novelty_report(generated, training)
    Path(args.out).write_text(report.as_text() + "\n")
    print(report.as_text())
    return 0


def cmd_ablate(args) -> int:
    records = patterns.load_dataset(args.data)
    variants = tuple(v.strip() for v in args.variants.split(",") if v.strip())
    seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    model_config = ModelConfig(d_model=args.d_model, n_layers=args.layers,
                               n_heads=args.heads, dropout=args.dropout)
    train_config = TrainConfig(epochs=args.epochs, batch_size=args.batch,
                               learning_rate=args.lr)

    def progress(row):
        print(f"done: {row.variant} seed {row.seed} "
              f"(hh co-activation {row.chh_ohh_rate:.4f})")

    report = ablation_run(records, variants=variants, seeds=seeds,
                          model_config=model_config, train_config=train_config,
                          n_generate=args.n, callback=progress)
    Path(args.out).write_text(report.as_text() + "\n")
    print(report.as_text())
    return 0


def cmd_synth_corpus(args) -> int:
    records = synth.generate_synthetic_corpus(args.n, style_seed=args.seed)
    patterns.save_dataset(records, args.out)
    print(f"wrote {len(records)} synthetic loops to {args.out}")
    return 0


def cmd_serve(args) -> int:
    import uvicorn

    from .service import create_app

    host, _, port = args.addr.rpartition(":")
    app = create_app(args.ckpt, static_dir=args.static)
    uvicorn.run(app, host=host or "127.0.0.1", port=int(port), log_level="info")
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="drumgen",
                     description="Mine, learn, and generate two-bar drum loops.")
    sub = parser.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("ingest", parents=[], help="inspect MIDI drum content")
    p.add_argument("--in", dest="in_path", required=True,
                   help="MIDI file or directory")
    _add_midi_flags(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("extract", help="mine loops from a MIDI directory")
    p.add_argument("--in", dest="in_path", required=True)
    p.add_argument("--out", required=True, help="output dataset (.jsonl)")
    p.add_argument("--threshold", type=float, default=0.8)
    p.add_argument("--min-hits", type=int, default=6)
    p.add_argument("--max-density", type=float, default=0.40)
    p.add_argument("--min-density", type=float, default=0.05)
    p.add_argument("--dedup", type=float, default=0.85)
    p.add_argument("--augment", choices=("none", "shift", "all"), default="none")
    p.add_argument("--seed", type=int, default=0)
    _add_midi_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train the masked transformer")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True, help="checkpoint path")
    p.add_argument("--curve", default=None, help="loss curve CSV path")
    p.add_argument("--epochs", type=int, default=30)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--dropout", type=float, default=0.1)
    p.add_argument("--loss-mix", type=float, nargs=3, default=(1.0, 0.05, 0.02),
                   metavar=("FOCAL", "DEP", "GROOVE"))
    p.add_argument("--no-tom-term", action="store_true")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("generate", help="generate one pattern from a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--out", required=True, help="output pattern file")
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--iterations", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--lock-rows", default="",
                   help="comma-separated instrument rows to hold fixed")
    p.add_argument("--init", default=None,
                   help="pattern file providing values for locked rows")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("evaluate", help="metrics (and novelty) of generations")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--train-set", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--temperature", type=float, default=1.0)
    p.add_argument("--iterations", type=int, default=10)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("novelty", help="IoU novelty of one set against another")
    p.add_argument("--generated", required=True)
    p.add_argument("--train-set", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_novelty)

    p = sub.add_parser("ablate", help="loss-ablation study at desk scale")
    p.add_argument("--data", required=True)
    p.add_argument("--variants", default="mg,gl,dl,gldl,full")
    p.add_argument("--seeds", default="1,2,3")
    p.add_argument("--out", required=True)
    p.add_argument("--n", type=int, default=200)
    p.add_argument("--epochs", type=int, default=10)
    p.add_argument("--batch", type=int, default=32)
    p.add_argument("--lr", type=float, default=3e-4)
    p.add_argument("--d-model", type=int, default=64)
    p.add_argument("--layers", type=int, default=2)
    p.add_argument("--heads", type=int, default=4)
    p.add_argument("--dropout", type=float, default=0.1)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("synth-corpus", help="write a synthetic loop dataset")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth_corpus)

    p = sub.add_parser("serve", help="run the HTTP generation service")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--addr", default="127.0.0.1:8000")
    p.add_argument("--static", default=None, help="directory of UI assets")
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    if not getattr(args, "func", None):
        parser.print_help()
        return 1
    try:
        return args.func(args)
    except _DATA_ERRORS as exc:
        print(f"drumgen: data error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        return 3
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
