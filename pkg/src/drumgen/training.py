"""Masked-pattern training: curriculum masking, Adam, checkpoints, curves.

Masking follows the cosine schedule: a progress draw r in (0, 1] keeps a
fraction cos(pi r / 2) of the units hidden. Early epochs mask whole
timesteps so the model learns groove; a linear curriculum ramps in per-cell
(instrument) masks for fine detail, reaching a 50/50 mix by the final
epoch. Training is deterministic for a given seed: data order, mask draws,
dropout, and initialization all derive from it.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .losses import LossConfig, loss_components, total_loss
from .network import (
    DrumTransformer,
    ModelConfig,
    logit_grad_from_probability_grad,
    save_checkpoint,
)
from .patterns import DrumPattern, MaskedPattern, N_CELLS, N_STEPS, serialize


class TrainingDivergedError(RuntimeError):
    """Loss became non-finite; carries the batch id and gradient norm."""


def cosine_mask_ratio(r: float) -> float:
    """Fraction of units kept masked at progress r; exactly 0 at r = 1.

    The analytic endpoint cos(pi/2) is zero, but evaluating it in floats
    leaves ~1e-16 residue that would ceil up to a full unit, so the endpoint
    is pinned.
    """
    if r >= 1.0:
        return 0.0
    if r <= 0.0:
        return 1.0
    return math.cos(math.pi * r / 2.0)


@dataclass(frozen=True)
class MaskSchedule:
    """Cosine mask-ratio plus the timestep-to-instrument mask curriculum."""

    final_instrument_prob: float = 0.5

    def mask_ratio(self, r: float) -> float:
        return cosine_mask_ratio(r)

    def instrument_prob(self, epoch: int, n_epochs: int) -> float:
        """Chance of per-cell masking at this epoch; 0 at epoch 0, ramps linearly."""
        if n_epochs <= 1:
            return 0.0
        frac = min(max(epoch / (n_epochs - 1), 0.0), 1.0)
        return self.final_instrument_prob * frac


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 3e-4
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    schedule: MaskSchedule = MaskSchedule()

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be nonnegative")


def sample_mask(pattern: DrumPattern, epoch: int, n_epochs: int,
                rng: np.random.Generator,
                schedule: MaskSchedule = MaskSchedule()) -> tuple[MaskedPattern, np.ndarray]:
    """Draw one training mask; returns the masked input and the target grid.

    Timestep mode hides ceil(ratio * 32) whole columns; instrument mode
    hides ceil(ratio * 288) individual cells. At least one unit is always
    masked so every example yields gradient signal.
    """
    r = 1.0 - rng.random()  # Uniform(0, 1]
    instrument_mode = rng.random() < schedule.instrument_prob(epoch, n_epochs)
    ratio = schedule.mask_ratio(r)
    mask = np.zeros((pattern.grid.shape[0], N_STEPS), dtype=bool)
    if instrument_mode:
        n_units = max(1, math.ceil(ratio * N_CELLS))
        cells = rng.choice(N_CELLS, size=n_units, replace=False)
        mask.ravel()[cells] = True
    else:
        n_units = max(1, math.ceil(ratio * N_STEPS))
        cols = rng.choice(N_STEPS, size=n_units, replace=False)
        mask[:, cols] = True
    return MaskedPattern.from_pattern(pattern, mask), pattern.grid.astype(np.float64)


def split_dataset(records) -> tuple[list, list]:
    """90/10 train/validation partition by hash of the source id.

    The split is a pure function of the ids, so it is stable across runs
    and disjoint by construction. Degenerate corpora whose every record
    hashes to one side validate on the training set.
    """
    train, val = [], []
    for rec in records:
        digest = hashlib.sha256(rec.source_id.encode("utf-8")).digest()
        bucket = int.from_bytes(digest[:8], "big") % 10
        (val if bucket == 0 else train).append(rec)
    if not train:
        train = list(records)
    if not val:
        val = list(train)
    return train, val


def corpus_fingerprint(records) -> str:
    h = hashlib.sha256()
    for rec in records:
        h.update(serialize(rec))
    return h.hexdigest()


@dataclass
class EpochStats:
    epoch: int
    train_total: float
    val_total: float
    val_focal: float
    val_dependency: float
    val_groove: float


@dataclass
class TrainResult:
    model: DrumTransformer        # best-validation weights
    loss_config: LossConfig
    curve: list
    best_epoch: int
    best_val: float
    corpus_fingerprint: str
    steps: int

    def save(self, path) -> dict:
        meta = {
            "epochs": len(self.curve) - 1,
            "best_epoch": self.best_epoch,
            "best_val_loss": self.best_val,
            "corpus_fingerprint": self.corpus_fingerprint,
            "steps": self.steps,
        }
        return save_checkpoint(path, self.model, self.loss_config, meta)


def curve_as_text(curve) -> str:
    """CSV-like table: epoch, train, val, focal, dep, groove."""
    lines = ["epoch,train,val,focal,dep,groove"]
    for row in curve:
        lines.append(
            f"{row.epoch},{row.train_total:.12g},{row.val_total:.12g},"
            f"{row.val_focal:.12g},{row.val_dependency:.12g},{row.val_groove:.12g}"
        )
    return "\n".join(lines) + "\n"


def _evaluate(model: DrumTransformer, records, loss_config: LossConfig,
              seed_key) -> tuple[float, dict]:
    """Eval-mode loss under fixed masks, comparable across epochs.

    The masks come from a fresh rng with a fixed key, so every epoch (and
    every rerun) scores the same masked views; modes mix 50/50.
    """
    rng = np.random.default_rng(seed_key)
    total = 0.0
    parts = {"focal": 0.0, "dependency": 0.0, "groove": 0.0}
    for rec in records:
        # epoch 1 of 2 puts the curriculum ramp at its endpoint: 50/50 modes
        mp, target = sample_mask(rec.pattern, 1, 2, rng, schedule=MaskSchedule(0.5))
        y, _, _ = model.forward(mp)
        v, _ = total_loss(y, target, mp.mask, loss_config)
        total += v
        for name, value in loss_components(y, target, mp.mask, loss_config).items():
            parts[name] += value
    n = max(len(records), 1)
    return total / n, {k: v / n for k, v in parts.items()}


def train(records, model_config: ModelConfig = ModelConfig(),
          loss_config: LossConfig = LossConfig(),
          train_config: TrainConfig = TrainConfig(),
          callback=None) -> TrainResult:
    """Mini-batch Adam on the mixed loss; checkpoints the best validation epoch.

    The curve's row 0 is the pre-training evaluation; rows 1..N follow each
    epoch. Raises :class:`TrainingDivergedError` on non-finite loss.
    """
    if not records:
        raise ValueError("training dataset is empty")
    cfg = train_config
    seed = cfg.seed
    train_set, val_set = split_dataset(records)
    fingerprint = corpus_fingerprint(records)

    model = DrumTransformer(model_config, seed=seed)
    data_rng = np.random.default_rng([seed, 2])
    mask_rng = np.random.default_rng([seed, 3])
    drop_rng = np.random.default_rng([seed, 4])

    adam_m = {k: np.zeros_like(v) for k, v in model.params.items()}
    adam_v = {k: np.zeros_like(v) for k, v in model.params.items()}
    step = 0

    def eval_row(epoch: int, train_total: float) -> EpochStats:
        val_total, parts = _evaluate(model, val_set, loss_config, [seed, 5])
        return EpochStats(epoch, train_total, val_total, parts["focal"],
                          parts["dependency"], parts["groove"])

    pretrain_total, _ = _evaluate(model, train_set, loss_config, [seed, 6])
    curve = [eval_row(0, pretrain_total)]
    best_val = curve[0].val_total
    best_epoch = 0
    best_params = {k: v.copy() for k, v in model.params.items()}
    if callback:
        callback(curve[0])

    n_train = len(train_set)
    for epoch in range(cfg.epochs):
        order = data_rng.permutation(n_train)
        batch_losses = []
        for start in range(0, n_train, cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            grads = {k: np.zeros_like(v) for k, v in model.params.items()}
            batch_loss = 0.0
            for idx in batch:
                rec = train_set[int(idx)]
                mp, target = sample_mask(rec.pattern, epoch, cfg.epochs,
                                         mask_rng, cfg.schedule)
                y, _, cache = model.forward(mp, train=True, rng=drop_rng)
                value, d_y = total_loss(y, target, mp.mask, loss_config)
                batch_loss += value
                d_logits = logit_grad_from_probability_grad(d_y, y)
                for name, g in model.backward(cache, d_logits).items():
                    grads[name] += g
            scale = 1.0 / len(batch)
            batch_loss *= scale
            if not np.isfinite(batch_loss):
                norm = math.sqrt(sum(float((g * g).sum()) for g in grads.values()))
                raise TrainingDivergedError(
                    f"non-finite loss at epoch {epoch} batch {start // cfg.batch_size}"
                    f" (grad norm {norm:.3g})")
            batch_losses.append(batch_loss)
            step += 1
            b1c = 1.0 - cfg.beta1 ** step
            b2c = 1.0 - cfg.beta2 ** step
            for name, g in grads.items():
                g = g * scale
                adam_m[name] = cfg.beta1 * adam_m[name] + (1 - cfg.beta1) * g
                adam_v[name] = cfg.beta2 * adam_v[name] + (1 - cfg.beta2) * g * g
                update = (adam_m[name] / b1c) / (np.sqrt(adam_v[name] / b2c)
                                                 + cfg.adam_eps)
                model.params[name] = model.params[name] - cfg.learning_rate * update

        row = eval_row(epoch + 1, float(np.mean(batch_losses)))
        curve.append(row)
        if callback:
            callback(row)
        if row.val_total < best_val:
            best_val = row.val_total
            best_epoch = epoch + 1
            best_params = {k: v.copy() for k, v in model.params.items()}

    return TrainResult(
        model=DrumTransformer(model_config, best_params),
        loss_config=loss_config,
        curve=curve,
        best_epoch=best_epoch,
        best_val=best_val,
        corpus_fingerprint=fingerprint,
        steps=step,
    )
