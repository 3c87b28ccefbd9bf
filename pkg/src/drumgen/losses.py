"""Drum-specific training losses and their analytic gradients.

Three terms work on the 9x32 grid of sigmoid outputs:

* focal: class-balanced reconstruction on the masked cells, down-weighting
  easy predictions so sparse grids cannot be solved by predicting silence;
* dependency: musical-convention penalties (kick wants strong beats with
  snare answering on the backbeat, the two hi-hats exclude each other,
  simultaneous toms are discouraged);
* groove: temporal smoothness weighted by metrical importance, plus an
  inter-bar consistency term.

Every function returns ``(value, grad)`` with ``grad`` the exact derivative
with respect to the prediction grid; the gradients are verified against
central finite differences in the test suite.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .patterns import N_CELLS, N_STEPS, Instrument, STRONG_STEPS, WEAK_STEPS

EPS = 1e-7  # probability clamp against log(0)

KICK_STEPS = np.array(STRONG_STEPS)      # beats 1 and 3 of each bar
SNARE_STEPS = KICK_STEPS + 4             # the backbeats answering them

_TOM_ROWS = tuple(int(i) for i in (Instrument.LOW_TOM, Instrument.MID_TOM,
                                   Instrument.HIGH_TOM))


def beat_weights() -> np.ndarray:
    """Per-step emphasis: 4 on strong quarters, 2 on weak quarters, 1 off-beat."""
    w = np.ones(N_STEPS)
    w[list(STRONG_STEPS)] = 4.0
    w[list(WEAK_STEPS)] = 2.0
    return w


@dataclass(frozen=True)
class LossConfig:
    lambda_ks: float = 0.15
    lambda_hh: float = 0.3
    lambda_tom: float = 0.1
    beta: float = 0.3
    gamma: float = 2.0
    alpha_pos: float = 0.75
    tom_term: bool = True
    # compare=False: ndarray equality is elementwise and would break ==
    step_weights: np.ndarray = field(default_factory=beat_weights, compare=False)
    # Mix over (focal, dependency, groove). Focal is a per-cell mean while
    # the structure terms are grid sums, so unit weights would let the
    # priors swamp reconstruction; these defaults keep focal primary.
    loss_mix: tuple = (1.0, 0.05, 0.02)

    def __post_init__(self):
        for name in ("lambda_ks", "lambda_hh", "lambda_tom", "beta", "gamma"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if not 0.0 < self.alpha_pos < 1.0:
            raise ValueError("alpha_pos must be in (0, 1)")
        if any(m < 0 for m in self.loss_mix) or len(self.loss_mix) != 3:
            raise ValueError("loss_mix must be three nonnegative weights")


def focal_loss(y_hat: np.ndarray, target: np.ndarray,
               mask: np.ndarray | None = None,
               config: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """Class-balanced focal term, averaged over the included cells.

    Per cell: -alpha_t * (1 - p_t)^gamma * log(p_t), where p_t is the
    predicted probability of the true label and alpha_t is ``alpha_pos``
    for hits, ``1 - alpha_pos`` for silences. ``mask`` selects the cells
    that were hidden during training; None means all cells. Averaging (not
    summing) keeps the value comparable across mask ratios.
    """
    y = np.asarray(y_hat, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if mask is None:
        included = np.ones_like(y, dtype=bool)
    else:
        included = np.asarray(mask, dtype=bool)
    n = int(included.sum())
    grad = np.zeros_like(y)
    if n == 0:
        return 0.0, grad

    p = np.where(t == 1.0, y, 1.0 - y)
    p = np.clip(p, EPS, 1.0 - EPS)
    alpha = np.where(t == 1.0, config.alpha_pos, 1.0 - config.alpha_pos)
    g = config.gamma
    per_cell = -alpha * (1.0 - p) ** g * np.log(p)

    # d/dp of -alpha (1-p)^g log p, then dp/dy = +1 for hits, -1 for silences
    if g == 0.0:
        d_per_p = -alpha / p
    else:
        d_per_p = alpha * (g * (1.0 - p) ** (g - 1.0) * np.log(p)
                           - (1.0 - p) ** g / p)
    d_per_p = np.where(t == 1.0, d_per_p, -d_per_p)
    # cells pinned by the clamp contribute no gradient
    unclamped = np.where(t == 1.0, y, 1.0 - y)
    d_per_p = np.where((unclamped > EPS) & (unclamped < 1.0 - EPS), d_per_p, 0.0)

    value = float(per_cell[included].sum()) / n
    grad[included] = d_per_p[included] / n
    return value, grad


def dependency_loss(y_hat: np.ndarray,
                    config: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """Instrument-relationship penalties on the full prediction grid.

    Kick-snare: rewards saturated kick on beats 1/3 and snare on the
    backbeats. Hi-hat: penalizes joint closed+open activation per step.
    Tom: pairwise simultaneous-tom product, same construction as the hi-hat
    term; disable with ``tom_term=False``.
    """
    y = np.asarray(y_hat, dtype=np.float64)
    grad = np.zeros_like(y)
    kick, snare = int(Instrument.KICK), int(Instrument.SNARE)
    chh, ohh = int(Instrument.CLOSED_HIHAT), int(Instrument.OPEN_HIHAT)

    ks = float((1.0 - y[kick, KICK_STEPS]).sum()
               + (1.0 - y[snare, SNARE_STEPS]).sum())
    grad[kick, KICK_STEPS] -= config.lambda_ks
    grad[snare, SNARE_STEPS] -= config.lambda_ks

    hh = float((y[chh] * y[ohh]).sum())
    grad[chh] += config.lambda_hh * y[ohh]
    grad[ohh] += config.lambda_hh * y[chh]

    tom = 0.0
    if config.tom_term:
        for a in range(len(_TOM_ROWS)):
            for b in range(a + 1, len(_TOM_ROWS)):
                ra, rb = _TOM_ROWS[a], _TOM_ROWS[b]
                tom += float((y[ra] * y[rb]).sum())
                grad[ra] += config.lambda_tom * y[rb]
                grad[rb] += config.lambda_tom * y[ra]

    value = config.lambda_ks * ks + config.lambda_hh * hh + config.lambda_tom * tom
    return value, grad


def groove_loss(y_hat: np.ndarray,
                config: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """Transition smoothness plus inter-bar consistency.

    The step term sums w_t * ||y[:, t] - y[:, t-1]||^2 for t in 1..31; the
    bar term is beta * ||bar1 - bar2||_F^2. Constant grids score zero.
    """
    y = np.asarray(y_hat, dtype=np.float64)
    grad = np.zeros_like(y)
    w = config.step_weights

    diff = y[:, 1:] - y[:, :-1]              # (9, 31); column t-1 is step t
    wt = w[1:]
    value = float((wt * (diff ** 2).sum(axis=0)).sum())
    grad[:, 1:] += 2.0 * wt * diff
    grad[:, :-1] -= 2.0 * wt * diff

    half = N_STEPS // 2
    bar_diff = y[:, :half] - y[:, half:]
    value += config.beta * float((bar_diff ** 2).sum())
    grad[:, :half] += 2.0 * config.beta * bar_diff
    grad[:, half:] -= 2.0 * config.beta * bar_diff
    return value, grad


def total_loss(y_hat: np.ndarray, target: np.ndarray,
               mask: np.ndarray | None = None,
               config: LossConfig = LossConfig()) -> tuple[float, np.ndarray]:
    """Mixed objective: focal on the masked cells, structure terms everywhere.

    Dependency and groove act on the full grid (they are priors on the whole
    pattern, not reconstruction terms), so they shape even unmasked cells'
    predictions.
    """
    mf, md, mg = config.loss_mix
    value = 0.0
    grad = np.zeros_like(np.asarray(y_hat, dtype=np.float64))
    if mf:
        v, g = focal_loss(y_hat, target, mask, config)
        value += mf * v
        grad += mf * g
    if md:
        v, g = dependency_loss(y_hat, config)
        value += md * v
        grad += md * g
    if mg:
        v, g = groove_loss(y_hat, config)
        value += mg * v
        grad += mg * g
    return value, grad


def loss_components(y_hat: np.ndarray, target: np.ndarray,
                    mask: np.ndarray | None = None,
                    config: LossConfig = LossConfig()) -> dict:
    """Unmixed per-term values, for curves and reports."""
    return {
        "focal": focal_loss(y_hat, target, mask, config)[0],
        "dependency": dependency_loss(y_hat, config)[0],
        "groove": groove_loss(y_hat, config)[0],
    }
