"""Bidirectional transformer over the 32-step grid, in plain numpy.

The encoder is a standard pre-norm stack (full self-attention over the 32
positions, no causal mask) with three grid-specific pieces at the edges:

* dual embedding: a single learned vector stands in for fully-masked
  timesteps, every other timestep is a linear projection of its 18-dim
  value-plus-mask-flag feature vector;
* a fixed repeating sine/cosine timing signal (periods 32/16/8/4/2 steps)
  mapped into the model width and added at every position, so the network
  can tell early from late within the two-bar loop;
* a 9-way sigmoid head per position.

Forward and backward passes are written out explicitly; the backward pass
is validated against central finite differences in the test suite. All math
is float64, which keeps training bit-reproducible for a given seed.
"""
from __future__ import annotations

import dataclasses
import hashlib
import io
import json
import zipfile
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .losses import LossConfig, beat_weights
from .patterns import N_INSTRUMENTS, N_STEPS, MaskedPattern

CHECKPOINT_VERSION = 1
FEATURE_DIM = 2 * N_INSTRUMENTS   # values ++ mask flags
TIMING_PERIODS = (32, 16, 8, 4, 2)
TIMING_DIM = 2 * len(TIMING_PERIODS)
LN_EPS = 1e-5


class CheckpointError(ValueError):
    """Unreadable or inconsistent checkpoint file."""


@dataclass(frozen=True)
class ModelConfig:
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int | None = None
    dropout: float = 0.1
    mask_token_id: int = 10  # reserved vocabulary index for the mask state

    def __post_init__(self):
        if min(self.d_model, self.n_layers, self.n_heads) < 1:
            raise ValueError("all model dimensions must be >= 1")
        if self.d_model % self.n_heads:
            raise ValueError("d_model must be divisible by n_heads")
        if self.d_ff is None:
            object.__setattr__(self, "d_ff", 4 * self.d_model)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(**d)


@dataclass(frozen=True)
class PredictionGrid:
    """Sigmoid activations per cell, strictly inside (0, 1)."""

    y_hat: np.ndarray

    def __post_init__(self):
        y = np.asarray(self.y_hat, dtype=np.float64)
        if y.shape != (N_INSTRUMENTS, N_STEPS):
            raise ValueError(f"prediction grid must be {N_INSTRUMENTS}x{N_STEPS}")
        if not ((y > 0.0) & (y < 1.0)).all():
            raise ValueError("prediction entries must lie strictly in (0, 1)")
        object.__setattr__(self, "y_hat", y)

    def bar(self, m: int) -> np.ndarray:
        half = N_STEPS // 2
        return self.y_hat[:, m * half:(m + 1) * half]


def timing_features(n_steps: int = N_STEPS) -> np.ndarray:
    """Raw (n_steps, 10) sine/cosine features, exactly periodic in 32 steps.

    Column order per period P: sin(2 pi t / P), cos(2 pi t / P). Positions
    are reduced mod 32 before evaluation so t and t+32 are bit-identical.
    """
    t = np.arange(n_steps) % N_STEPS
    cols = []
    for period in TIMING_PERIODS:
        angle = 2.0 * np.pi * t / period
        cols.append(np.sin(angle))
        cols.append(np.cos(angle))
    return np.stack(cols, axis=1)


_TIMING = timing_features()


def sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gelu(x: np.ndarray) -> np.ndarray:
    return 0.5 * x * (1.0 + erf(x / np.sqrt(2.0)))


def gelu_grad(x: np.ndarray) -> np.ndarray:
    cdf = 0.5 * (1.0 + erf(x / np.sqrt(2.0)))
    pdf = np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    return cdf + x * pdf


def _layer_norm(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return g * xhat + b, (xhat, inv, g)


def _layer_norm_backward(dy, cache):
    xhat, inv, g = cache
    dg = (dy * xhat).sum(axis=0)
    db = dy.sum(axis=0)
    dxhat = dy * g
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dg, db


def _glorot(rng, fan_in, fan_out):
    std = np.sqrt(2.0 / (fan_in + fan_out))
    return rng.normal(0.0, std, size=(fan_in, fan_out))


def init_params(config: ModelConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """Fresh parameter tensors, deterministic for a given seed."""
    rng = np.random.default_rng([seed, 0x5EED])
    d, dff = config.d_model, config.d_ff
    params = {
        "embed.proj_w": _glorot(rng, FEATURE_DIM, d),
        "embed.proj_b": np.zeros(d),
        "embed.mask_vec": rng.normal(0.0, 0.02, size=d),
        "timing.w": _glorot(rng, TIMING_DIM, d),
        "timing.b": np.zeros(d),
    }
    for i in range(config.n_layers):
        pre = f"layers.{i}."
        params[pre + "ln1.g"] = np.ones(d)
        params[pre + "ln1.b"] = np.zeros(d)
        for name in ("wq", "wk", "wv", "wo"):
            params[pre + "attn." + name] = _glorot(rng, d, d)
        for name in ("bq", "bk", "bv", "bo"):
            params[pre + "attn." + name] = np.zeros(d)
        params[pre + "ln2.g"] = np.ones(d)
        params[pre + "ln2.b"] = np.zeros(d)
        params[pre + "ffn.w1"] = _glorot(rng, d, dff)
        params[pre + "ffn.b1"] = np.zeros(dff)
        params[pre + "ffn.w2"] = _glorot(rng, dff, d)
        params[pre + "ffn.b2"] = np.zeros(d)
    params["final_ln.g"] = np.ones(d)
    params["final_ln.b"] = np.zeros(d)
    params["head.w"] = _glorot(rng, d, N_INSTRUMENTS)
    params["head.b"] = np.zeros(N_INSTRUMENTS)
    return params


def input_features(mp: MaskedPattern) -> tuple[np.ndarray, np.ndarray]:
    """(32, 18) feature rows and the fully-masked step indicator."""
    values = mp.values.T.astype(np.float64)      # masked cells already zeroed
    flags = mp.mask.T.astype(np.float64)
    features = np.concatenate([values, flags], axis=1)
    fully_masked = mp.mask.all(axis=0)
    return features, fully_masked


class DrumTransformer:
    """Config plus named parameter tensors, with explicit forward/backward."""

    def __init__(self, config: ModelConfig, params: dict | None = None,
                 seed: int = 0):
        self.config = config
        self.params = params if params is not None else init_params(config, seed)

    @property
    def n_params(self) -> int:
        return sum(p.size for p in self.params.values())

    def token_embeddings(self, mp: MaskedPattern) -> np.ndarray:
        """Per-step embeddings before the timing signal is added."""
        p = self.params
        features, fully_masked = input_features(mp)
        tok = features @ p["embed.proj_w"] + p["embed.proj_b"]
        tok[fully_masked] = p["embed.mask_vec"]
        return tok

    def timing_signal(self) -> np.ndarray:
        """(32, d_model) additive matrix; exactly periodic in 32 steps."""
        p = self.params
        return _TIMING @ p["timing.w"] + p["timing.b"]

    def forward(self, mp: MaskedPattern, train: bool = False,
                rng: np.random.Generator | None = None):
        """Sigmoid grid (9, 32), logits (9, 32), and the backward cache.

        Evaluation mode (`train=False`) is deterministic; training mode
        applies inverted dropout on both residual branches and needs `rng`.
        """
        p = self.params
        cfg = self.config
        d, n_heads = cfg.d_model, cfg.n_heads
        dh = d // n_heads
        keep = 1.0 - cfg.dropout
        if train and cfg.dropout > 0.0 and rng is None:
            raise ValueError("training-mode forward needs an rng for dropout")

        features, fully_masked = input_features(mp)
        tok = features @ p["embed.proj_w"] + p["embed.proj_b"]
        tok[fully_masked] = p["embed.mask_vec"]
        h = tok + _TIMING @ p["timing.w"] + p["timing.b"]

        cache = {"features": features, "fully_masked": fully_masked,
                 "layers": [], "train": train}
        for i in range(cfg.n_layers):
            pre = f"layers.{i}."
            lc = {"h_in": h}
            a, lc["ln1"] = _layer_norm(h, p[pre + "ln1.g"], p[pre + "ln1.b"])
            lc["a"] = a
            q = a @ p[pre + "attn.wq"] + p[pre + "attn.bq"]
            k = a @ p[pre + "attn.wk"] + p[pre + "attn.bk"]
            v = a @ p[pre + "attn.wv"] + p[pre + "attn.bv"]
            qh = q.reshape(N_STEPS, n_heads, dh).transpose(1, 0, 2)
            kh = k.reshape(N_STEPS, n_heads, dh).transpose(1, 0, 2)
            vh = v.reshape(N_STEPS, n_heads, dh).transpose(1, 0, 2)
            scores = qh @ kh.transpose(0, 2, 1) / np.sqrt(dh)
            scores -= scores.max(axis=-1, keepdims=True)
            expd = np.exp(scores)
            probs = expd / expd.sum(axis=-1, keepdims=True)
            oh = probs @ vh
            o = oh.transpose(1, 0, 2).reshape(N_STEPS, d)
            attn_out = o @ p[pre + "attn.wo"] + p[pre + "attn.bo"]
            if train and cfg.dropout > 0.0:
                drop = (rng.random(attn_out.shape) >= cfg.dropout) / keep
                attn_out = attn_out * drop
                lc["attn_drop"] = drop
            lc.update(qh=qh, kh=kh, vh=vh, probs=probs, o=o)
            h = h + attn_out

            lc["h_mid"] = h
            bnorm, lc["ln2"] = _layer_norm(h, p[pre + "ln2.g"], p[pre + "ln2.b"])
            lc["b"] = bnorm
            f1 = bnorm @ p[pre + "ffn.w1"] + p[pre + "ffn.b1"]
            fact = gelu(f1)
            ffn_out = fact @ p[pre + "ffn.w2"] + p[pre + "ffn.b2"]
            if train and cfg.dropout > 0.0:
                drop = (rng.random(ffn_out.shape) >= cfg.dropout) / keep
                ffn_out = ffn_out * drop
                lc["ffn_drop"] = drop
            lc.update(f1=f1, fact=fact)
            h = h + ffn_out
            cache["layers"].append(lc)

        hn, cache["final_ln"] = _layer_norm(h, p["final_ln.g"], p["final_ln.b"])
        cache["hn"] = hn
        logits = (hn @ p["head.w"] + p["head.b"]).T  # (9, 32)
        y = sigmoid(logits)
        return y, logits, cache

    def predict(self, mp: MaskedPattern) -> PredictionGrid:
        y, _, _ = self.forward(mp)
        return PredictionGrid(y)

    def backward(self, cache: dict, d_logits: np.ndarray) -> dict[str, np.ndarray]:
        """Parameter gradients for upstream d(loss)/d(logits), shape (9, 32)."""
        p = self.params
        cfg = self.config
        d, n_heads = cfg.d_model, cfg.n_heads
        dh = d // n_heads
        grads = {name: np.zeros_like(arr) for name, arr in p.items()}

        dl = np.asarray(d_logits, dtype=np.float64).T  # (32, 9)
        hn = cache["hn"]
        grads["head.w"] += hn.T @ dl
        grads["head.b"] += dl.sum(axis=0)
        dhn = dl @ p["head.w"].T
        dh_out, dg, db = _layer_norm_backward(dhn, cache["final_ln"])
        grads["final_ln.g"] += dg
        grads["final_ln.b"] += db

        for i in reversed(range(cfg.n_layers)):
            pre = f"layers.{i}."
            lc = cache["layers"][i]

            d_ffn_out = dh_out
            if "ffn_drop" in lc:
                d_ffn_out = d_ffn_out * lc["ffn_drop"]
            grads[pre + "ffn.w2"] += lc["fact"].T @ d_ffn_out
            grads[pre + "ffn.b2"] += d_ffn_out.sum(axis=0)
            d_fact = d_ffn_out @ p[pre + "ffn.w2"].T
            d_f1 = d_fact * gelu_grad(lc["f1"])
            grads[pre + "ffn.w1"] += lc["b"].T @ d_f1
            grads[pre + "ffn.b1"] += d_f1.sum(axis=0)
            d_b = d_f1 @ p[pre + "ffn.w1"].T
            d_h_mid, dg, db = _layer_norm_backward(d_b, lc["ln2"])
            grads[pre + "ln2.g"] += dg
            grads[pre + "ln2.b"] += db
            dh_out = dh_out + d_h_mid

            d_attn_out = dh_out
            if "attn_drop" in lc:
                d_attn_out = d_attn_out * lc["attn_drop"]
            grads[pre + "attn.wo"] += lc["o"].T @ d_attn_out
            grads[pre + "attn.bo"] += d_attn_out.sum(axis=0)
            d_o = (d_attn_out @ p[pre + "attn.wo"].T)
            d_oh = d_o.reshape(N_STEPS, n_heads, dh).transpose(1, 0, 2)
            probs, qh, kh, vh = lc["probs"], lc["qh"], lc["kh"], lc["vh"]
            d_probs = d_oh @ vh.transpose(0, 2, 1)
            d_vh = probs.transpose(0, 2, 1) @ d_oh
            d_scores = probs * (d_probs - (d_probs * probs).sum(axis=-1, keepdims=True))
            d_scores /= np.sqrt(dh)
            d_qh = d_scores @ kh
            d_kh = d_scores.transpose(0, 2, 1) @ qh
            d_q = d_qh.transpose(1, 0, 2).reshape(N_STEPS, d)
            d_k = d_kh.transpose(1, 0, 2).reshape(N_STEPS, d)
            d_v = d_vh.transpose(1, 0, 2).reshape(N_STEPS, d)
            a = lc["a"]
            grads[pre + "attn.wq"] += a.T @ d_q
            grads[pre + "attn.wk"] += a.T @ d_k
            grads[pre + "attn.wv"] += a.T @ d_v
            grads[pre + "attn.bq"] += d_q.sum(axis=0)
            grads[pre + "attn.bk"] += d_k.sum(axis=0)
            grads[pre + "attn.bv"] += d_v.sum(axis=0)
            d_a = (d_q @ p[pre + "attn.wq"].T
                   + d_k @ p[pre + "attn.wk"].T
                   + d_v @ p[pre + "attn.wv"].T)
            d_h_in, dg, db = _layer_norm_backward(d_a, lc["ln1"])
            grads[pre + "ln1.g"] += dg
            grads[pre + "ln1.b"] += db
            dh_out = dh_out + d_h_in

        # embedding: dh_out covers both the token and the timing branches
        grads["timing.w"] += _TIMING.T @ dh_out
        grads["timing.b"] += dh_out.sum(axis=0)
        fully_masked = cache["fully_masked"]
        features = cache["features"]
        visible = ~fully_masked
        grads["embed.mask_vec"] += dh_out[fully_masked].sum(axis=0)
        grads["embed.proj_w"] += features[visible].T @ dh_out[visible]
        grads["embed.proj_b"] += dh_out[visible].sum(axis=0)
        return grads


def logit_grad_from_probability_grad(d_y: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Chain rule through the elementwise sigmoid head."""
    return d_y * y * (1.0 - y)


# ---------------------------------------------------------------------------
# Checkpoint file: a zip (readable by np.load) holding manifest.json plus one
# .npy entry per named tensor. Entries are written with a fixed timestamp so
# identical contents give identical bytes.
# ---------------------------------------------------------------------------

def _loss_config_to_dict(cfg: LossConfig) -> dict:
    d = dataclasses.asdict(cfg)
    d["step_weights"] = np.asarray(cfg.step_weights).tolist()
    d["loss_mix"] = list(cfg.loss_mix)
    return d


def _loss_config_from_dict(d: dict) -> LossConfig:
    d = dict(d)
    d["step_weights"] = np.asarray(d.get("step_weights", beat_weights().tolist()),
                                   dtype=np.float64)
    d["loss_mix"] = tuple(d.get("loss_mix", (1.0, 1.0, 1.0)))
    return LossConfig(**d)


def manifest_fingerprint(manifest: dict) -> str:
    blob = json.dumps(manifest, sort_keys=True, separators=(",", ":")).encode()
    return hashlib.sha256(blob).hexdigest()


def save_checkpoint(path, model: DrumTransformer, loss_config: LossConfig,
                    training_meta: dict | None = None) -> dict:
    """Write the checkpoint; returns the manifest that was stored."""
    manifest = {
        "version": CHECKPOINT_VERSION,
        "model_config": model.config.to_dict(),
        "loss_config": _loss_config_to_dict(loss_config),
        "training": training_meta or {},
        "tensors": sorted(model.params),
    }
    buf = io.BytesIO()
    stamp = (1980, 1, 1, 0, 0, 0)  # fixed so identical content => identical bytes
    with zipfile.ZipFile(buf, "w", zipfile.ZIP_STORED) as zf:
        info = zipfile.ZipInfo("manifest.json", date_time=stamp)
        zf.writestr(info, json.dumps(manifest, sort_keys=True, indent=1))
        for name in sorted(model.params):
            tensor_buf = io.BytesIO()
            np.lib.format.write_array(tensor_buf,
                                      np.ascontiguousarray(model.params[name]))
            info = zipfile.ZipInfo(name + ".npy", date_time=stamp)
            zf.writestr(info, tensor_buf.getvalue())
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())
    return manifest


def load_checkpoint(path) -> tuple[DrumTransformer, LossConfig, dict]:
    """Read and validate a checkpoint; shape mismatches name the tensor."""
    try:
        with zipfile.ZipFile(path) as zf:
            names = set(zf.namelist())
            if "manifest.json" not in names:
                raise CheckpointError("checkpoint has no manifest.json")
            manifest = json.loads(zf.read("manifest.json"))
            if manifest.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(
                    f"unsupported checkpoint version {manifest.get('version')!r}")
            config = ModelConfig.from_dict(manifest["model_config"])
            loss_config = _loss_config_from_dict(manifest["loss_config"])
            expected = init_params(config, seed=0)
            params = {}
            for name in manifest["tensors"]:
                entry = name + ".npy"
                if entry not in names:
                    raise CheckpointError(f"missing tensor '{name}'")
                arr = np.lib.format.read_array(io.BytesIO(zf.read(entry)))
                if name not in expected:
                    raise CheckpointError(f"unexpected tensor '{name}'")
                if arr.shape != expected[name].shape:
                    raise CheckpointError(
                        f"tensor '{name}' has shape {arr.shape}, "
                        f"expected {expected[name].shape}")
                params[name] = arr.astype(np.float64)
            missing = set(expected) - set(params)
            if missing:
                raise CheckpointError(f"missing tensor '{sorted(missing)[0]}'")
    except zipfile.BadZipFile as exc:
        raise CheckpointError(f"not a checkpoint file: {exc}") from exc
    return DrumTransformer(config, params), loss_config, manifest
