"""Iterative parallel refinement of masked drum grids.

All masked cells are predicted at once; the most confident samples are
committed and the rest re-masked, with the surviving masked count following
the cosine schedule down to zero. Temperature divides the logits before
sampling ("creativity"): below 1 sharpens toward the model's modal groove,
above 1 flattens toward riskier patterns. Locked cells are never masked
and therefore never touched.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .network import DrumTransformer, sigmoid
from .patterns import DrumPattern, MaskedPattern, N_CELLS
from .training import cosine_mask_ratio


@dataclass(frozen=True)
class GenerationRequest:
    """What to generate: fixed context, creativity, and refinement budget.

    ``initial`` carries the fixed cells (locked or pre-set) and the masked
    cells to fill. Pre-set unlocked cells count as committed context and are
    not resampled. ``gumbel_noise`` adds annealed exploration noise to the
    confidence ranking (on by default); sampling itself is always stochastic
    under the seed.
    """

    initial: MaskedPattern
    temperature: float = 1.0
    iterations: int = 10
    seed: int = 0
    gumbel_noise: bool = True

    def __post_init__(self):
        if self.temperature <= 0.0:
            raise ValueError("temperature must be > 0")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")

    @classmethod
    def fully_masked(cls, **kwargs) -> "GenerationRequest":
        return cls(initial=MaskedPattern.fully_masked(), **kwargs)


@dataclass(frozen=True)
class DecodeStep:
    iteration: int
    masked_before: int
    masked_after: int
    committed_cells: tuple          # flat row-major cell indices
    committed_confidence: tuple     # probability of each committed value


@dataclass(frozen=True)
class DecodeTrace:
    initial_masked: int
    steps: tuple = field(default_factory=tuple)

    def masked_counts(self) -> list[int]:
        return [s.masked_after for s in self.steps]


@dataclass(frozen=True)
class DecodeResult:
    pattern: DrumPattern
    confidence: np.ndarray   # final per-cell probability of the emitted value
    trace: DecodeTrace


def temperature_apply(logits: np.ndarray, temperature: float) -> np.ndarray:
    """Per-cell Bernoulli probabilities after logit scaling."""
    if temperature <= 0.0:
        raise ValueError("temperature must be > 0")
    return sigmoid(np.asarray(logits, dtype=np.float64) / temperature)


def decode(request: GenerationRequest, model: DrumTransformer) -> DecodeResult:
    """Fill every masked cell; deterministic given (seed, request, weights).

    Per iteration k of K: forward pass, Bernoulli-sample all masked cells at
    the requested temperature, rank them by the probability of the sampled
    value (plus Gumbel noise scaled by temperature * (1 - k/K)), commit the
    top ranks so that ceil(cos(pi k / 2K) * N) cells stay masked, re-mask
    the rest. The confidence grid reports the final model probability of
    every emitted cell, locked ones included.
    """
    rng = np.random.default_rng(request.seed)
    values = request.initial.values.copy()
    mask = request.initial.mask.copy()
    locks = request.initial.locks
    n_initial = int(mask.sum())
    k_total = request.iterations

    steps = []
    for k in range(1, k_total + 1):
        remaining = int(mask.sum())
        if remaining == 0:
            break
        mp = MaskedPattern(values, mask, locks)
        _, logits, _ = model.forward(mp)
        probs = temperature_apply(logits, request.temperature)

        cells = np.flatnonzero(mask.ravel())        # row-major, deterministic
        p = probs.ravel()[cells]
        sampled = (rng.random(cells.size) < p).astype(np.uint8)
        confidence = np.where(sampled == 1, p, 1.0 - p)

        score = confidence
        noise_scale = request.temperature * (1.0 - k / k_total)
        if request.gumbel_noise and noise_scale > 0.0:
            u = rng.random(cells.size)
            gumbel = -np.log(-np.log(np.clip(u, 1e-12, 1.0 - 1e-12)))
            score = confidence + noise_scale * gumbel

        target_masked = min(
            math.ceil(cosine_mask_ratio(k / k_total) * n_initial),
            remaining - 1,
        )
        target_masked = max(target_masked, 0)
        n_commit = remaining - target_masked
        order = np.lexsort((cells, -score))          # best score, earliest cell
        chosen = order[:n_commit]

        flat_values = values.ravel()
        flat_mask = mask.ravel()
        flat_values[cells[chosen]] = sampled[chosen]
        flat_mask[cells[chosen]] = False
        values = flat_values.reshape(values.shape)
        mask = flat_mask.reshape(mask.shape)

        steps.append(DecodeStep(
            iteration=k,
            masked_before=remaining,
            masked_after=int(mask.sum()),
            committed_cells=tuple(int(c) for c in cells[chosen]),
            committed_confidence=tuple(float(c) for c in confidence[chosen]),
        ))

    pattern = DrumPattern(values)
    final_input = MaskedPattern(values, np.zeros_like(mask), locks)
    y_final, _, _ = model.forward(final_input)
    conf_grid = np.where(values == 1, y_final, 1.0 - y_final)
    return DecodeResult(
        pattern=pattern,
        confidence=conf_grid,
        trace=DecodeTrace(initial_masked=n_initial, steps=tuple(steps)),
    )


def expected_masked_counts(n_masked: int, iterations: int) -> list[int]:
    """The schedule the trace must follow: ceil(cos(pi k / 2K) * N) per k."""
    counts = []
    remaining = n_masked
    for k in range(1, iterations + 1):
        target = min(math.ceil(cosine_mask_ratio(k / iterations) * n_masked),
                     remaining - 1)
        target = max(target, 0)
        counts.append(target)
        remaining = target
        if remaining == 0:
            break
    return counts
