"""Forward/backward passes of every layer, written against numpy only.

Per-series tensors (embedding, quantile head) are looped over the series
axis rather than fused into one einsum: the split runtime evaluates exactly
the same per-series matmuls on the clients, which keeps split and
centralized execution bit-identical.
"""

from __future__ import annotations

import numpy as np


def _sigmoid(z):
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------- embedding

def embed_series(x_m, w_m, b_m):
    """One series window batch [b x S] -> token batch [b x D], tanh MLP."""
    return np.tanh(x_m @ w_m + b_m)


def embed_forward(x, w, b):
    """x [b x S x M] -> tokens [b x M x D] with per-series weights."""
    bsz, _, m = x.shape
    tokens = np.empty((bsz, m, w.shape[2]))
    for i in range(m):
        tokens[:, i] = embed_series(x[:, :, i], w[i], b[i])
    return tokens, (x, tokens)


def embed_backward(cache, w, dtokens):
    x, tokens = cache
    m = x.shape[2]
    dw = np.empty_like(w)
    db = np.empty((m, w.shape[2]))
    dx = np.empty_like(x)
    for i in range(m):
        dpre = dtokens[:, i] * (1.0 - tokens[:, i] ** 2)
        dw[i] = x[:, :, i].T @ dpre
        db[i] = dpre.sum(axis=0)
        dx[:, :, i] = dpre @ w[i].T
    return dx, dw, db


# ---------------------------------------------------------------- attention

def _split_heads(t, n_heads):
    b, m, d = t.shape
    return t.reshape(b, m, n_heads, d // n_heads).transpose(0, 2, 1, 3)


def _merge_heads(t):
    b, nh, m, dh = t.shape
    return t.transpose(0, 2, 1, 3).reshape(b, m, nh * dh)


def attention_forward(tokens, wq, wk, wv, wo, bo, n_heads):
    """Multi-head self-attention over the series tokens.

    The q/k/v projections are bias-free (a key bias is exactly invisible to
    the row-wise softmax, so its gradient is identically zero); the output
    projection keeps its bias.  Returns (out, score_map, cache); score_map
    is the head-averaged [M x M] attention matrix (averaged over the batch)
    for diagnostics.
    """
    q = _split_heads(tokens @ wq, n_heads)
    k = _split_heads(tokens @ wk, n_heads)
    v = _split_heads(tokens @ wv, n_heads)
    dh = q.shape[-1]
    scores = q @ k.transpose(0, 1, 3, 2) / np.sqrt(dh)
    scores -= scores.max(axis=-1, keepdims=True)
    e = np.exp(scores)
    attn = e / e.sum(axis=-1, keepdims=True)
    ctx = _merge_heads(attn @ v)
    out = ctx @ wo + bo
    score_map = attn.mean(axis=(0, 1))
    cache = (tokens, q, k, v, attn, ctx)
    return out, score_map, cache


def attention_backward(cache, wq, wk, wv, wo, n_heads, dout):
    tokens, q, k, v, attn, ctx = cache
    b, m, d = tokens.shape
    dh = d // n_heads

    dwo = ctx.reshape(-1, d).T @ dout.reshape(-1, d)
    dbo = dout.sum(axis=(0, 1))
    dctx = _split_heads(dout @ wo.T, n_heads)

    dattn = dctx @ v.transpose(0, 1, 3, 2)
    dv = attn.transpose(0, 1, 3, 2) @ dctx
    dscores = attn * (dattn - (dattn * attn).sum(axis=-1, keepdims=True))
    dscores /= np.sqrt(dh)
    dq = dscores @ k
    dk = dscores.transpose(0, 1, 3, 2) @ q

    dq = _merge_heads(dq).reshape(-1, d)
    dk = _merge_heads(dk).reshape(-1, d)
    dv = _merge_heads(dv).reshape(-1, d)
    flat = tokens.reshape(-1, d)
    dwq, dwk, dwv = flat.T @ dq, flat.T @ dk, flat.T @ dv
    dtokens = (dq @ wq.T + dk @ wk.T + dv @ wv.T).reshape(b, m, d)
    return dtokens, (dwq, dwk, dwv, dwo), dbo


# --------------------------------------------------------------- layer norm

LN_EPS = 1e-5


def layer_norm_forward(x, gain, bias):
    """Normalize each token over its feature axis, then apply gain/bias."""
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = (x - mu) * inv
    return gain * xhat + bias, (xhat, inv)


def layer_norm_backward(cache, gain, dout):
    xhat, inv = cache
    dgain = (dout * xhat).sum(axis=tuple(range(dout.ndim - 1)))
    dbias = dout.sum(axis=tuple(range(dout.ndim - 1)))
    dxhat = dout * gain
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dgain, dbias


# --------------------------------------------------------------------- LSTM

def lstm_forward(tokens, wx, wh, bias):
    """Gated recurrence over the series-token sequence.

    tokens [b x M x D] -> hidden states [b x M x H]; gate order i, f, g, o.
    """
    b, m, _ = tokens.shape
    hsz = wh.shape[0]
    h = np.zeros((b, hsz))
    c = np.zeros((b, hsz))
    hs = np.empty((b, m, hsz))
    steps = []
    for t in range(m):
        z = tokens[:, t] @ wx + h @ wh + bias
        i = _sigmoid(z[:, :hsz])
        f = _sigmoid(z[:, hsz:2 * hsz])
        g = np.tanh(z[:, 2 * hsz:3 * hsz])
        o = _sigmoid(z[:, 3 * hsz:])
        c_new = f * c + i * g
        tc = np.tanh(c_new)
        h_new = o * tc
        steps.append((tokens[:, t], h, c, i, f, g, o, tc))
        h, c = h_new, c_new
        hs[:, t] = h
    return hs, steps


def lstm_backward(steps, wx, wh, dhs):
    b, hsz = dhs.shape[0], wh.shape[0]
    m = dhs.shape[1]
    dwx = np.zeros_like(wx)
    dwh = np.zeros_like(wh)
    dbias = np.zeros(4 * hsz)
    dtokens = np.empty((b, m, wx.shape[0]))
    dh_next = np.zeros((b, hsz))
    dc_next = np.zeros((b, hsz))
    for t in reversed(range(m)):
        x_t, h_prev, c_prev, i, f, g, o, tc = steps[t]
        dh = dhs[:, t] + dh_next
        do = dh * tc
        dc = dh * o * (1.0 - tc**2) + dc_next
        di, df, dg = dc * g, dc * c_prev, dc * i
        dz = np.concatenate([
            di * i * (1.0 - i), df * f * (1.0 - f),
            dg * (1.0 - g**2), do * o * (1.0 - o)], axis=1)
        dwx += x_t.T @ dz
        dwh += h_prev.T @ dz
        dbias += dz.sum(axis=0)
        dtokens[:, t] = dz @ wx.T
        dh_next = dz @ wh.T
        dc_next = dc * f
    return dtokens, dwx, dwh, dbias


# ----------------------------------------------------------- quantile head

def head_series(h_m, w_m, b_m):
    """One series hidden batch [b x H] -> scalar threshold batch [b]."""
    return h_m @ w_m + b_m


def head_forward(hs, w, b):
    """hs [b x M x H] -> thresholds [b x M] with per-series weights."""
    bsz, m, _ = hs.shape
    pred = np.empty((bsz, m))
    for i in range(m):
        pred[:, i] = head_series(hs[:, i], w[i], b[i])
    return pred, hs


def head_backward(hs, w, dpred):
    m = hs.shape[1]
    dw = np.empty_like(w)
    db = np.empty(m)
    dhs = np.empty_like(hs)
    for i in range(m):
        dw[i] = hs[:, i].T @ dpred[:, i]
        db[i] = dpred[:, i].sum()
        dhs[:, i] = np.outer(dpred[:, i], w[i])
    return dhs, dw, db
