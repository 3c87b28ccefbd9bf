"""Acceptance suite: one test per release criterion, tolerances pinned.

Each criterion is verified against an oracle computed independently inside
the test (closed-form values, brute-force scans, central finite
differences), never against the code path it checks. Run with
``pytest tests/test_acceptance.py -v``; a PASS/FAIL line per criterion is
printed in the terminal summary.
"""
import math
import time

import numpy as np
import pytest

from drumgen.cli import main as cli_main
from drumgen.decode import GenerationRequest, decode, temperature_apply
from drumgen.evalsuite import (
    chh_ohh_coactivation_rate,
    generate_set,
    novelty_report,
)
from drumgen.loops import ExtractionConfig, autocorrelate, deduplicate, downmix
from drumgen.losses import (
    LossConfig,
    dependency_loss,
    focal_loss,
    groove_loss,
    total_loss,
)
from drumgen.network import (
    DrumTransformer,
    ModelConfig,
    logit_grad_from_probability_grad,
)
from drumgen.patterns import (
    DrumPattern,
    Instrument,
    LoopRecord,
    MaskedPattern,
    beat_strength,
    instrument_balance,
    iou,
    jaccard_distance,
    pattern_repetition,
)
from drumgen.synth import generate_synthetic_corpus
from drumgen.training import TrainConfig, train

K, S, CH, OH = (Instrument.KICK, Instrument.SNARE,
                Instrument.CLOSED_HIHAT, Instrument.OPEN_HIHAT)

GRAD_RTOL = 1e-4
GRAD_STEP = 1e-5
ORACLE_ATOL = 1e-9


def hits(pairs):
    return DrumPattern.from_hits(pairs)


def central_diff_grid(fn, y, h=GRAD_STEP):
    grad = np.zeros_like(y)
    flat = y.ravel()
    out = grad.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = fn(y)
        flat[i] = orig - h
        dn = fn(y)
        flat[i] = orig
        out[i] = (up - dn) / (2 * h)
    return grad


def assert_close_grad(analytic, numeric, rtol=GRAD_RTOL):
    scale = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    worst = float(np.max(np.abs(analytic - numeric) / scale))
    assert worst <= rtol, f"worst relative gradient error {worst:.3e}"


# ---------------------------------------------------------------------------
# 1. Loss gradient suite: analytic vs central finite differences, 100 random
#    points per loss, relative tolerance 1e-4, double precision, < 1 min.
# ---------------------------------------------------------------------------

def test_criterion_01_loss_gradient_suite():
    started = time.time()
    rng = np.random.default_rng(101)
    cfg = LossConfig(alpha_pos=0.7, gamma=2.0, loss_mix=(1.0, 0.5, 0.25))

    for point in range(100):
        y = rng.uniform(0.05, 0.95, size=(9, 32))
        target = (rng.random((9, 32)) < 0.3).astype(float)
        mask = rng.random((9, 32)) < 0.5

        _, g = focal_loss(y, target, mask, cfg)
        assert_close_grad(g, central_diff_grid(
            lambda z: focal_loss(z, target, mask, cfg)[0], y))

        _, g = dependency_loss(y, cfg)
        assert_close_grad(g, central_diff_grid(
            lambda z: dependency_loss(z, cfg)[0], y))

        _, g = groove_loss(y, cfg)
        assert_close_grad(g, central_diff_grid(
            lambda z: groove_loss(z, cfg)[0], y))

        _, g = total_loss(y, target, mask, cfg)
        assert_close_grad(g, central_diff_grid(
            lambda z: total_loss(z, target, mask, cfg)[0], y))

    # and through the network, with respect to sampled weight coordinates
    model = DrumTransformer(ModelConfig(d_model=16, n_layers=1, n_heads=2,
                                        dropout=0.0), seed=101)
    values = (rng.random((9, 32)) < 0.2).astype(np.uint8)
    mask = rng.random((9, 32)) < 0.5
    mp = MaskedPattern(values, mask)
    target = (rng.random((9, 32)) < 0.25).astype(float)

    def run_loss():
        y, _, cache = model.forward(mp)
        value, d_y = total_loss(y, target, mp.mask, cfg)
        return value, cache, logit_grad_from_probability_grad(d_y, y)

    _, cache, d_logits = run_loss()
    grads = model.backward(cache, d_logits)
    names = sorted(model.params)
    for _ in range(100):
        name = names[int(rng.integers(len(names)))]
        flat = model.params[name].ravel()
        idx = int(rng.integers(flat.size))
        orig = flat[idx]
        flat[idx] = orig + GRAD_STEP
        up, _, _ = run_loss()
        flat[idx] = orig - GRAD_STEP
        dn, _, _ = run_loss()
        flat[idx] = orig
        numeric = (up - dn) / (2 * GRAD_STEP)
        analytic = grads[name].ravel()[idx]
        denom = max(abs(numeric), abs(analytic), 1e-8)
        assert abs(numeric - analytic) <= GRAD_RTOL * denom, \
            f"{name}[{idx}]: analytic {analytic:.6e} vs numeric {numeric:.6e}"

    assert time.time() - started < 60.0


# ---------------------------------------------------------------------------
# 2. Loss value oracles, reproduced to 1e-9.
# ---------------------------------------------------------------------------

def test_criterion_02_loss_value_oracles():
    # saturated closed+open hi-hat with ideal kick/snare: 0.3 * 32 = 9.6
    y = np.zeros((9, 32))
    y[K, [0, 8, 16, 24]] = 1.0
    y[S, [4, 12, 20, 28]] = 1.0
    y[CH] = 1.0
    y[OH] = 1.0
    assert dependency_loss(y)[0] == pytest.approx(9.6, abs=ORACLE_ATOL)

    # kick absent, snare saturated on backbeats: 0.15 * 4 = 0.6
    y = np.zeros((9, 32))
    y[S, [4, 12, 20, 28]] = 1.0
    assert dependency_loss(y)[0] == pytest.approx(0.6, abs=ORACLE_ATOL)

    # focal at p_t = 0.5, gamma 2, alpha 0.5: 0.5 * 0.25 * ln 2
    cfg = LossConfig(alpha_pos=0.5, gamma=2.0)
    y = np.full((9, 32), 0.5)
    target = np.zeros((9, 32)); target[0, 0] = 1.0
    mask = np.zeros((9, 32), dtype=bool); mask[0, 0] = True
    expected = 0.5 * 0.25 * math.log(2.0)
    assert focal_loss(y, target, mask, cfg)[0] == pytest.approx(expected,
                                                                abs=ORACLE_ATOL)

    # groove on constant grids is exactly zero
    for c in (0.0, 0.25, 1.0):
        assert groove_loss(np.full((9, 32), c))[0] == pytest.approx(
            0.0, abs=ORACLE_ATOL)

    # lone unit transition arriving on a strong quarter (weight 4): 4.0
    y = np.zeros((9, 32)); y[0, 16:] = 1.0
    assert groove_loss(y, LossConfig(beta=0.0))[0] == pytest.approx(
        4.0, abs=ORACLE_ATOL)

    # inter-bar term for a single half-unit cell difference: 0.3 * 0.25
    y = np.full((9, 32), 0.4); y[3, 21] = 0.9
    delta = groove_loss(y, LossConfig(beta=0.3))[0] \
        - groove_loss(y, LossConfig(beta=0.0))[0]
    assert delta == pytest.approx(0.075, abs=ORACLE_ATOL)

    # gamma=0, alpha->1 on positives reduces focal to plain cross-entropy
    rng = np.random.default_rng(102)
    y = rng.uniform(0.05, 0.95, (9, 32))
    cfg = LossConfig(alpha_pos=1.0 - 1e-12, gamma=0.0)
    ones = np.ones((9, 32))
    assert focal_loss(y, ones, None, cfg)[0] == pytest.approx(
        float(-np.log(y).mean()), abs=1e-10)

    # temperature scaling: sigma(1.0 / 2.0)
    assert temperature_apply(np.array([[1.0]]), 2.0)[0, 0] == pytest.approx(
        1.0 / (1.0 + math.exp(-0.5)), abs=1e-12)


# ---------------------------------------------------------------------------
# 3. Loop-extraction oracle: 50 seeded noisy tilings, >= 48 recovered with
#    IoU >= 0.95 against the (rotated) seed, < 30 s.
# ---------------------------------------------------------------------------

def _aperiodic_seed(rng):
    """Random 32-step grid whose tiled activation is 32-periodic only.

    Hit count is kept high enough that up to two in-window bit flips cannot
    drag IoU below 0.95, and bar-identical activations (which would make 16
    the true period) are resampled away.
    """
    while True:
        grid = (rng.random((9, 32)) < 0.18).astype(np.uint8)
        if not 42 <= int(grid.sum()) <= 100:
            continue
        profile = autocorrelate(downmix(np.tile(grid, (1, 8))))
        if profile.best_period == 32 and profile.phi[0] < 0.6:
            return grid


def test_criterion_03_loop_extraction_oracle():
    started = time.time()
    rng = np.random.default_rng(2025)
    successes = 0
    for _ in range(50):
        seed = _aperiodic_seed(rng)
        roll = np.tile(seed, (1, 8)).astype(np.uint8)
        # one flipped bit per repetition: 8 of 2304 cells (~0.35% <= 2%)
        for rep in range(8):
            i = int(rng.integers(9))
            t = int(rng.integers(32))
            roll[i, rep * 32 + t] ^= 1
        profile = autocorrelate(downmix(roll))
        if profile.best_period != 32:
            continue
        start = profile.best_phase
        window = roll[:, start:start + 32]
        aligned_seed = np.roll(seed, -(start % 32), axis=1)
        if iou(DrumPattern(window), DrumPattern(aligned_seed)) >= 0.95:
            successes += 1
    assert successes >= 48, f"only {successes}/50 recovered"
    assert time.time() - started < 30.0


# ---------------------------------------------------------------------------
# 4. Normalized autocorrelation: exact 1.0 on perfect tilings; iid noise
#    scores ~density with no false loops at threshold 0.8.
# ---------------------------------------------------------------------------

def test_criterion_04_autocorrelation_sanity():
    rng = np.random.default_rng(104)
    for _ in range(10):
        seed = _aperiodic_seed(rng)
        profile = autocorrelate(downmix(np.tile(seed, (1, 8))))
        assert profile.best_period == 32
        assert profile.phi[32 - 16] == 1.0  # exact float equality

    means = []
    for _ in range(100):
        a = (rng.random(256) < 0.2).astype(np.uint8)
        profile = autocorrelate(a)
        means.append(float(profile.phi.mean()))
        assert profile.best_period is None  # no false loops at 0.8
    assert abs(float(np.mean(means)) - 0.2) < 0.05


# ---------------------------------------------------------------------------
# 5. Metric oracles: every documented example exactly; entropy bounded.
# ---------------------------------------------------------------------------

def test_criterion_05_metric_oracles():
    # beat strength
    assert beat_strength(hits([(K, 0), (K, 8)])) == 1.0
    assert beat_strength(DrumPattern.empty()) == 0.5
    rock = hits([(K, t) for t in (0, 8, 16, 24)]
                + [(S, t) for t in (4, 12, 20, 28)]
                + [(CH, t) for t in range(0, 32, 2)])
    assert beat_strength(rock) == pytest.approx(0.5, abs=ORACLE_ATOL)

    # pattern repetition
    bar = [(K, 0), (S, 4), (CH, 2)]
    identical = hits(bar + [(i, t + 16) for i, t in bar])
    assert pattern_repetition(identical) == pytest.approx(1.0, abs=ORACLE_ATOL)
    assert pattern_repetition(hits([(K, 0), (S, 20)])) == 0.0
    half = hits([(K, 0), (K, 8), (K, 16), (S, 20)])
    assert pattern_repetition(half) == pytest.approx(0.5, abs=ORACLE_ATOL)

    # instrument balance
    assert instrument_balance(hits([(K, t) for t in range(8)])) == 0.0
    uniform = hits([(i, 2 * i) for i in range(9)]
                   + [(i, 2 * i + 1) for i in range(9)])
    assert instrument_balance(uniform) == pytest.approx(math.log2(9),
                                                        abs=ORACLE_ATOL)
    two = hits([(K, 0), (K, 8), (S, 4), (S, 12)])
    assert instrument_balance(two) == pytest.approx(1.0, abs=ORACLE_ATOL)

    rng = np.random.default_rng(105)
    bound = math.log2(9) + 1e-9
    for _ in range(1000):
        grid = (rng.random((9, 32)) < rng.uniform(0.02, 0.6)).astype(np.uint8)
        assert instrument_balance(DrumPattern(grid)) <= bound

    # IoU / Jaccard
    a = hits([(K, 0), (K, 8), (S, 4), (S, 12)])
    b = hits([(K, 0), (K, 8), (CH, 2), (CH, 6)])
    assert iou(a, a) == 1.0
    assert iou(a, b) == pytest.approx(2 / 6, abs=ORACLE_ATOL)
    assert iou(hits([(K, 0)]), hits([(S, 4)])) == 0.0
    assert iou(DrumPattern.empty(), DrumPattern.empty()) == 1.0
    shared = [(K, t) for t in range(16)] + [(S, 0)]
    p85a = hits(shared + [(S, 2), (S, 4), (S, 6)])
    p85b = hits(shared)
    assert jaccard_distance(p85a, p85b) == pytest.approx(0.15, abs=ORACLE_ATOL)


# ---------------------------------------------------------------------------
# 6. Decode schedule exactness for K=10, N=288. The expected sequence is
#    evaluated independently here: ceil(288 cos(pi k / 20)) with the
#    analytic zero at k = 10 (the float residue of cos(pi/2) must not
#    ceil up to 1).
# ---------------------------------------------------------------------------

def test_criterion_06_decode_schedule_exactness():
    expected = []
    for k in range(1, 11):
        gamma = math.cos(math.pi * k / 20.0) if k < 10 else 0.0
        expected.append(math.ceil(288 * gamma))
    assert expected == [285, 274, 257, 233, 204, 170, 131, 89, 46, 0]

    model = DrumTransformer(ModelConfig(d_model=16, n_layers=1, n_heads=2,
                                        dropout=0.0), seed=106)
    result = decode(GenerationRequest.fully_masked(iterations=10, seed=1), model)
    assert result.trace.initial_masked == 288
    assert result.trace.masked_counts() == expected


# ---------------------------------------------------------------------------
# 7. Locking invariance: 1000 randomized requests, locked cells bit-identical.
# ---------------------------------------------------------------------------

def test_criterion_07_locking_invariance():
    model = DrumTransformer(ModelConfig(d_model=16, n_layers=1, n_heads=2,
                                        dropout=0.0), seed=107)
    rng = np.random.default_rng(107)
    for trial in range(1000):
        values = (rng.random((9, 32)) < 0.25).astype(np.uint8)
        locks = rng.random((9, 32)) < rng.uniform(0.05, 0.9)
        mask = ~locks & (rng.random((9, 32)) < 0.9)
        mp = MaskedPattern(values, mask, locks)
        request = GenerationRequest(
            mp,
            temperature=float(rng.uniform(0.25, 2.5)),
            iterations=int(rng.integers(1, 7)),
            seed=int(rng.integers(1 << 62)),
        )
        result = decode(request, model)
        assert np.array_equal(result.pattern.grid[locks], mp.values[locks]), \
            f"locked cells changed in trial {trial}"
        assert not result.trace.masked_counts() or \
            result.trace.masked_counts()[-1] == 0


# ---------------------------------------------------------------------------
# 8. Toy training on the 200-loop synthetic corpus at desk scale.
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_corpus():
    return generate_synthetic_corpus(200, style_seed=8)


def test_criterion_08_toy_training(desk_corpus):
    started = time.time()
    desk = ModelConfig(d_model=64, n_layers=2, n_heads=4, dropout=0.1)

    result = train(desk_corpus, desk, LossConfig(),
                   TrainConfig(epochs=30, batch_size=32, seed=0))
    focal_start = result.curve[0].val_focal
    focal_final = result.curve[-1].val_focal
    assert focal_final < 0.5 * focal_start, \
        f"val focal {focal_start:.4f} -> {focal_final:.4f}"

    # dependency-loss effect on the statistic it penalizes, 3-seed means
    rates = {}
    for label, mix in (("without_dl", (1.0, 0.0, 0.0)),
                       ("with_dl", (1.0, 1.0, 0.0))):
        per_seed = []
        for seed in (1, 2, 3):
            run = train(desk_corpus, desk, LossConfig(loss_mix=mix),
                        TrainConfig(epochs=8, batch_size=32, seed=seed))
            patterns = generate_set(run.model, 60, seed=seed)
            per_seed.append(chh_ohh_coactivation_rate(patterns))
        rates[label] = float(np.mean(per_seed))
    assert rates["with_dl"] <= rates["without_dl"], rates

    assert time.time() - started < 600.0


# ---------------------------------------------------------------------------
# 9. Determinism: identical seeds give byte-identical artifacts end to end.
# ---------------------------------------------------------------------------

def test_criterion_09_determinism(tmp_path):
    from midi_builder import roll_to_drum_file

    midi_dir = tmp_path / "midi"
    midi_dir.mkdir()
    rng = np.random.default_rng(109)
    for i in range(3):
        grid = (rng.random((9, 32)) < 0.18).astype(np.uint8)
        grid[0, 0] = 1
        (midi_dir / f"s{i}.mid").write_bytes(
            roll_to_drum_file(np.tile(grid, (1, 8))))

    artifacts = []
    for tag in ("one", "two"):
        d = tmp_path / tag
        d.mkdir()
        data = d / "corpus.jsonl"
        mined = d / "mined.jsonl"
        ckpt = d / "model.ckpt"
        pattern = d / "beat.json"
        assert cli_main(["synth-corpus", "--n", "16", "--out", str(data),
                         "--seed", "5"]) == 0
        assert cli_main(["extract", "--in", str(midi_dir), "--out", str(mined),
                         "--augment", "all", "--seed", "5"]) == 0
        assert cli_main(["train", "--data", str(data), "--out", str(ckpt),
                         "--epochs", "1", "--batch", "8", "--d-model", "16",
                         "--layers", "1", "--heads", "2", "--seed", "5"]) == 0
        assert cli_main(["generate", "--ckpt", str(ckpt), "--out", str(pattern),
                         "--seed", "5"]) == 0
        artifacts.append({
            "dataset": data.read_bytes(),
            "mined": mined.read_bytes(),
            "checkpoint": ckpt.read_bytes(),
            "curve": (d / "model.ckpt.curve.csv").read_bytes(),
            "pattern": pattern.read_bytes(),
        })
    for key in artifacts[0]:
        assert artifacts[0][key] == artifacts[1][key], f"{key} not bitwise equal"


# ---------------------------------------------------------------------------
# 10. Deduplication at the 0.85 IoU boundary.
# ---------------------------------------------------------------------------

def test_criterion_10_dedup_correctness():
    def record(cells, source):
        return LoopRecord(hits(cells), 120.0, source, 1.0)

    shared43 = [(i, t) for i in range(2) for t in range(20)] \
        + [(CH, t) for t in range(3)]
    a = record(shared43, "a")
    b86 = record(shared43 + [(OH, t) for t in range(7)], "b")
    assert iou(a.pattern, b86.pattern) == pytest.approx(0.86, abs=ORACLE_ATOL)
    assert [r.source_id for r in deduplicate([a, b86])] == ["a"]

    shared42 = shared43[:42]
    a2 = record(shared42, "a")
    b84 = record(shared42 + [(OH, t) for t in range(8)], "b")
    assert iou(a2.pattern, b84.pattern) == pytest.approx(0.84, abs=ORACLE_ATOL)
    assert len(deduplicate([a2, b84])) == 2

    shared17 = [(K, t) for t in range(16)] + [(S, 0)]
    a3 = record(shared17 + [(CH, 0), (CH, 2), (CH, 4)], "a")
    b85 = record(shared17, "b")
    assert iou(a3.pattern, b85.pattern) == pytest.approx(0.85, abs=ORACLE_ATOL)
    assert len(deduplicate([a3, b85])) == 1  # >= threshold drops

    rng = np.random.default_rng(110)
    records = []
    for i in range(60):
        grid = (rng.random((9, 32)) < 0.12).astype(np.uint8)
        grid[0, 0] = 1
        records.append(LoopRecord(DrumPattern(grid), 120.0, f"r{i}", 1.0))
    records.extend([
        LoopRecord(records[0].pattern, 120.0, "dup", 1.0),
        LoopRecord(records[1].pattern.shifted(0), 120.0, "dup2", 1.0),
    ])
    kept = deduplicate(records)
    for i in range(len(kept)):
        for j in range(i + 1, len(kept)):
            assert iou(kept[i].pattern, kept[j].pattern) < 0.85


# ---------------------------------------------------------------------------
# 11. Novelty report properties.
# ---------------------------------------------------------------------------

def test_criterion_11_novelty_properties():
    rng = np.random.default_rng(111)
    training = []
    for _ in range(40):
        grid = (rng.random((9, 32)) < 0.15).astype(np.uint8)
        grid[0, 0] = 1
        training.append(DrumPattern(grid))

    subset = training[:6]
    assert novelty_report(subset, training).max_iou == 1.0

    disjoint_train = [hits([(K, t) for t in range(10)])]
    disjoint_gen = [hits([(S, t) for t in range(10)])]
    report = novelty_report(disjoint_gen, disjoint_train)
    assert report.max_iou == 0.0 and report.median_iou == 0.0

    generated = [
        DrumPattern((rng.random((9, 32)) < 0.15).astype(np.uint8))
        for _ in range(12)
    ]
    fwd = novelty_report(generated, training)
    shuffled = [training[i] for i in rng.permutation(len(training))]
    rev = novelty_report(generated, shuffled)
    assert fwd.max_iou == rev.max_iou
    assert fwd.median_iou == rev.median_iou
    assert fwd.histogram == rev.histogram
    assert fwd.nearest_iou == rev.nearest_iou


# ---------------------------------------------------------------------------
# 12. [SECONDARY, service side] generate round-trip with every row locked,
#     slider-endpoint temperatures accepted, malformed grids rejected with a
#     field-level message. The browser UI's own tests cover the slider map.
# ---------------------------------------------------------------------------

def test_criterion_12_service_integration():
    from fastapi.testclient import TestClient

    from drumgen.service import create_app

    model = DrumTransformer(ModelConfig(d_model=16, n_layers=1, n_heads=2,
                                        dropout=0.0), seed=112)
    app = create_app(model=model, fingerprint="acceptance")
    with TestClient(app) as client:
        grid = [[0] * 32 for _ in range(9)]
        for t in (0, 8, 16, 24):
            grid[0][t] = 1
        r = client.post("/api/v1/generate", json={
            "grid": grid, "row_locks": [True] * 9, "seed": 0,
        })
        assert r.status_code == 200
        assert r.json()["grid"] == grid

        # the UI slider's endpoints map to temperatures 0.25 and 2.5
        for temperature in (0.25, 2.5):
            r = client.post("/api/v1/generate", json={
                "grid": [[None] * 32 for _ in range(9)],
                "temperature": temperature, "seed": 1,
            })
            assert r.status_code == 200

        r = client.post("/api/v1/generate",
                        json={"grid": [[0] * 32 for _ in range(5)]})
        assert r.status_code == 400
        assert "grid" in r.json()["error"]
