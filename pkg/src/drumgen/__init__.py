"""drumgen: mine loopable drum patterns from MIDI, train a bidirectional
masked transformer on them, and generate new grooves by iterative parallel
refinement.

The 9x32 binary :class:`DrumPattern` (nine drum classes by thirty-two
16th-note steps, two bars) is the currency of every stage: the MIDI miner
produces them, the model trains on them, the decoder emits them, and the
metrics score them.
"""

from .decode import DecodeResult, DecodeTrace, GenerationRequest, decode
from .evalsuite import (
    ablation_run,
    evaluate_set,
    generate_set,
    novelty_report,
)
from .loops import (
    ExtractionConfig,
    PeriodicityProfile,
    RejectionReason,
    augment,
    autocorrelate,
    build_dataset,
    deduplicate,
    downmix,
    extract_loop,
)
from .losses import (
    LossConfig,
    dependency_loss,
    focal_loss,
    groove_loss,
    total_loss,
)
from .midi import map_gm_to_class, parse_midi, quantize
from .network import (
    DrumTransformer,
    ModelConfig,
    PredictionGrid,
    load_checkpoint,
    save_checkpoint,
)
from .patterns import (
    DrumPattern,
    Instrument,
    LoopRecord,
    MaskedPattern,
    PatternMetrics,
    beat_strength,
    compute_metrics,
    deserialize,
    instrument_balance,
    iou,
    jaccard_distance,
    load_dataset,
    pattern_repetition,
    save_dataset,
    serialize,
)
from .synth import generate_synthetic_corpus
from .training import MaskSchedule, TrainConfig, sample_mask, train

__version__ = "0.1.0"

__all__ = [
    "DecodeResult",
    "DecodeTrace",
    "DrumPattern",
    "DrumTransformer",
    "ExtractionConfig",
    "GenerationRequest",
    "Instrument",
    "LoopRecord",
    "LossConfig",
    "MaskSchedule",
    "MaskedPattern",
    "ModelConfig",
    "PatternMetrics",
    "PeriodicityProfile",
    "PredictionGrid",
    "RejectionReason",
    "TrainConfig",
    "ablation_run",
    "augment",
    "autocorrelate",
    "beat_strength",
    "build_dataset",
    "compute_metrics",
    "decode",
    "deduplicate",
    "dependency_loss",
    "deserialize",
    "downmix",
    "evaluate_set",
    "extract_loop",
    "focal_loss",
    "generate_set",
    "generate_synthetic_corpus",
    "groove_loss",
    "instrument_balance",
    "iou",
    "jaccard_distance",
    "load_checkpoint",
    "load_dataset",
    "map_gm_to_class",
    "novelty_report",
    "parse_midi",
    "pattern_repetition",
    "quantize",
    "sample_mask",
    "save_checkpoint",
    "save_dataset",
    "serialize",
    "total_loss",
    "train",
    "__version__",
]
