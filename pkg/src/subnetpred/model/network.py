"""The inverted quantile-patch transformer: parameters, forward, backward.

Architecture: per-series window -> tanh embedding token -> n_layers of
(multi-head attention over series tokens + residual + layer norm) -> LSTM
across the token sequence -> per-series scalar quantile head.

Parameters live in a flat dict keyed by canonical names; the embedding and
quantile head carry one weight block per series so the U-shaped split
assigns them to clients without weight sharing across clients.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from . import layers
from .optim import tagged_rng


def param_names(cfg):
    """Canonical ordered parameter names for one model configuration."""
    names = ["embed.w", "embed.b"]
    for l in range(cfg.n_layers):
        names += [f"enc{l}.wq", f"enc{l}.wk", f"enc{l}.wv", f"enc{l}.wo",
                  f"enc{l}.bo", f"enc{l}.ln_g", f"enc{l}.ln_b"]
    names += ["lstm.wx", "lstm.wh", "lstm.b", "head.w", "head.b"]
    return names


def _xavier(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, shape)


def init_params(cfg, seed=0):
    """Xavier-uniform weights, zero biases, unit layer-norm gains."""
    rng = tagged_rng(seed, "init")
    m, s, d, h = cfg.n_series, cfg.window, cfg.d_embed, cfg.lstm_hidden
    params = {
        "embed.w": _xavier(rng, (m, s, d), s, d),
        "embed.b": np.zeros((m, d)),
    }
    for l in range(cfg.n_layers):
        for nm in ("wq", "wk", "wv", "wo"):
            params[f"enc{l}.{nm}"] = _xavier(rng, (d, d), d, d)
        params[f"enc{l}.bo"] = np.zeros(d)
        params[f"enc{l}.ln_g"] = np.ones(d)
        params[f"enc{l}.ln_b"] = np.zeros(d)
    params["lstm.wx"] = _xavier(rng, (d, 4 * h), d, h)
    params["lstm.wh"] = _xavier(rng, (h, 4 * h), h, h)
    params["lstm.b"] = np.zeros(4 * h)
    params["head.w"] = _xavier(rng, (m, h), h, 1)
    params["head.b"] = np.zeros(m)
    return params


def body_forward(params, cfg, tokens, masks=None):
    """Encoder stack + LSTM: tokens [b x M x D] -> hidden states [b x M x H]."""
    cache = {"enc": []}
    maps = []
    for l in range(cfg.n_layers):
        att, score_map, c_att = layers.attention_forward(
            tokens, params[f"enc{l}.wq"], params[f"enc{l}.wk"],
            params[f"enc{l}.wv"], params[f"enc{l}.wo"],
            params[f"enc{l}.bo"], cfg.n_heads)
        mask = masks.mask(f"enc{l}", att.shape) if masks is not None else None
        if mask is not None:
            att = att * mask
        normed, c_ln = layers.layer_norm_forward(
            tokens + att, params[f"enc{l}.ln_g"], params[f"enc{l}.ln_b"])
        cache["enc"].append((c_att, mask, c_ln))
        maps.append(score_map)
        tokens = normed
    hs, c_lstm = layers.lstm_forward(tokens, params["lstm.wx"],
                                     params["lstm.wh"], params["lstm.b"])
    cache["lstm"] = c_lstm
    cache["maps"] = maps
    return hs, cache


def body_backward(params, cfg, cache, dhs):
    grads = {}
    dtokens, grads["lstm.wx"], grads["lstm.wh"], grads["lstm.b"] = \
        layers.lstm_backward(cache["lstm"], params["lstm.wx"],
                             params["lstm.wh"], dhs)
    for l in reversed(range(cfg.n_layers)):
        c_att, mask, c_ln = cache["enc"][l]
        dres, grads[f"enc{l}.ln_g"], grads[f"enc{l}.ln_b"] = \
            layers.layer_norm_backward(c_ln, params[f"enc{l}.ln_g"], dtokens)
        datt = dres if mask is None else dres * mask
        dtok_att, dws, dbo = layers.attention_backward(
            c_att, params[f"enc{l}.wq"], params[f"enc{l}.wk"],
            params[f"enc{l}.wv"], params[f"enc{l}.wo"], cfg.n_heads, datt)
        (grads[f"enc{l}.wq"], grads[f"enc{l}.wk"],
         grads[f"enc{l}.wv"], grads[f"enc{l}.wo"]) = dws
        grads[f"enc{l}.bo"] = dbo
        dtokens = dres + dtok_att
    return dtokens, grads


def forward(params, cfg, x, masks=None):
    """Full forward pass: x [b x S x M] -> thresholds [b x M] plus cache.

    masks carries the per-batch dropout factory during training; None means
    deterministic inference.
    """
    if x.ndim != 3 or x.shape[1] != cfg.window or x.shape[2] != cfg.n_series:
        raise ValueError(
            f"expected input [b x {cfg.window} x {cfg.n_series}], got {x.shape}")
    level = None
    if getattr(cfg, "center_windows", False):
        # per-instance recent level; the head predicts the offset from it,
        # which carries no parameters so the backward pass is unaffected
        level = x.mean(axis=1)
        x = x - level[:, None, :]
    tokens, c_embed = layers.embed_forward(x, params["embed.w"], params["embed.b"])
    embed_mask = None
    if masks is not None:
        b, m, d = tokens.shape
        cols = [masks.mask(f"embed/{i}", (b, d)) for i in range(m)]
        if cols[0] is not None:
            embed_mask = np.stack(cols, axis=1)
            tokens = tokens * embed_mask
    hs, c_body = body_forward(params, cfg, tokens, masks)
    pred, c_head = layers.head_forward(hs, params["head.w"], params["head.b"])
    if level is not None:
        pred = pred + level
    cache = {"embed": c_embed, "embed_mask": embed_mask, "body": c_body,
             "head": c_head}
    return pred, cache


def backward(params, cfg, cache, dpred):
    """Gradient of a scalar loss w.r.t. every parameter, given dloss/dpred."""
    grads = {}
    dhs, grads["head.w"], grads["head.b"] = layers.head_backward(
        cache["head"], params["head.w"], dpred)
    dtokens, body_grads = body_backward(params, cfg, cache["body"], dhs)
    grads.update(body_grads)
    if cache["embed_mask"] is not None:
        dtokens = dtokens * cache["embed_mask"]
    _, grads["embed.w"], grads["embed.b"] = layers.embed_backward(
        cache["embed"], params["embed.w"], dtokens)
    return grads


def predict(params, cfg, x, batch_size=1024):
    """Deterministic batched inference (dropout disabled)."""
    out = np.empty((x.shape[0], cfg.n_series))
    for start in range(0, x.shape[0], batch_size):
        sl = slice(start, start + batch_size)
        out[sl], _ = forward(params, cfg, x[sl])
    return out


def attention_maps(params, cfg, x):
    """Head-averaged attention score maps per encoder layer for one batch."""
    tokens, _ = layers.embed_forward(x, params["embed.w"], params["embed.b"])
    _, cache = body_forward(params, cfg, tokens)
    return cache["maps"]


def forward_flops(cfg):
    """Analytic multiply-add FLOP count of one forward pass per instance."""
    m, s, d, h = cfg.n_series, cfg.window, cfg.d_embed, cfg.lstm_hidden
    flops = m * (2 * s * d + d)                       # embedding + tanh
    per_layer = (3 * 2 * m * d * d                    # q, k, v projections
                 + 2 * 2 * m * m * d                  # scores and context
                 + 4 * cfg.n_heads * m * m            # softmax
                 + 2 * m * d * d                      # output projection
                 + 10 * m * d)                        # residual + layer norm
    flops += cfg.n_layers * per_layer
    flops += m * (2 * d * 4 * h + 2 * h * 4 * h + 12 * h)   # LSTM gates
    flops += m * 2 * h                                # quantile head
    return flops


def count_params(params):
    return int(sum(v.size for v in params.values()))


def save_checkpoint(stem, params, cfg, seed, alpha, extra=None):
    """Binary parameter blob plus JSON manifest (shapes in canonical order)."""
    stem = Path(stem)
    names = param_names(cfg)
    blob = np.concatenate([params[k].ravel() for k in names])
    blob.astype("<f8").tofile(stem.with_suffix(".bin"))
    manifest = {
        "format": "subnetpred-checkpoint-v1",
        "tensors": [{"name": k, "shape": list(params[k].shape)} for k in names],
        "hyper": {"n_series": cfg.n_series, "window": cfg.window,
                  "d_embed": cfg.d_embed, "n_heads": cfg.n_heads,
                  "n_layers": cfg.n_layers, "lstm_hidden": cfg.lstm_hidden,
                  "dropout": cfg.dropout, "alpha": cfg.alpha,
                  "center_windows": cfg.center_windows},
        "seed": seed,
        "quantile": 1.0 - alpha,
    }
    if extra:
        manifest.update(extra)
    with open(stem.with_suffix(".json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def load_checkpoint(stem):
    from ..config import ModelConfig
    stem = Path(stem)
    with open(stem.with_suffix(".json"), encoding="utf-8") as fh:
        manifest = json.load(fh)
    cfg = ModelConfig(**manifest["hyper"])
    blob = np.fromfile(stem.with_suffix(".bin"), dtype="<f8")
    params = {}
    pos = 0
    for entry in manifest["tensors"]:
        size = int(np.prod(entry["shape"]))
        params[entry["name"]] = blob[pos:pos + size].reshape(entry["shape"])
        pos += size
    return params, cfg, manifest
