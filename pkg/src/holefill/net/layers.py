"""Differentiable building blocks with hand-written backward passes.

Every ``*_fwd`` returns ``(output, cache)`` and the matching ``*_bwd`` takes
the upstream gradient and the cache, returning the input gradient and a
dict of parameter gradients keyed like the parameter dict it was given.
Leading (batch) dimensions are arbitrary.
"""
from __future__ import annotations

import numpy as np

LN_EPS = 1e-5


def softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def log_softmax(z, axis=-1):
    z = z - np.max(z, axis=axis, keepdims=True)
    return z - np.log(np.sum(np.exp(z), axis=axis, keepdims=True))


def _flat(x):
    return x.reshape(-1, x.shape[-1])


# -- linear -----------------------------------------------------------------

def linear_fwd(x, W, b=None):
    y = x @ W
    if b is not None:
        y = y + b
    return y, x


def linear_bwd(dy, x, W, has_bias=True):
    dW = _flat(x).T @ _flat(dy)
    db = _flat(dy).sum(axis=0) if has_bias else None
    return dy @ W.T, dW, db


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu_fwd(x):
    """Tanh-form GELU (smooth, so finite differences behave everywhere)."""
    t = np.tanh(_GELU_C * (x + 0.044715 * x ** 3))
    return 0.5 * x * (1.0 + t), (x, t)


def gelu_bwd(dy, cache):
    x, t = cache
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)
    return dy * (0.5 * (1.0 + t) + 0.5 * x * dt)


# -- layer norm -------------------------------------------------------------

def layernorm_fwd(x, g, b):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * inv
    return xhat * g + b, (xhat, inv, g)


def layernorm_bwd(dy, cache):
    xhat, inv, g = cache
    dg = (_flat(dy) * _flat(xhat)).sum(axis=0)
    db = _flat(dy).sum(axis=0)
    dxhat = dy * g
    dx = inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
    return dx, dg, db


# -- dropout ----------------------------------------------------------------

def dropout_fwd(x, rate, rng):
    if rng is None or rate <= 0.0:
        return x, None
    mask = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * mask, mask


def dropout_bwd(dy, mask):
    return dy if mask is None else dy * mask


# -- MLP (shared-weight point MLP and heads) --------------------------------

def mlp_fwd(x, p, prefix, n_layers):
    """``n_layers`` linear layers with GELU in between (not after the last)."""
    caches = []
    h = x
    for i in range(1, n_layers + 1):
        h, xc = linear_fwd(h, p[f"{prefix}.W{i}"], p[f"{prefix}.b{i}"])
        act = None
        if i < n_layers:
            h, act = gelu_fwd(h)
        caches.append((xc, act))
    return h, caches


def mlp_bwd(dy, p, prefix, caches, grads):
    n_layers = len(caches)
    for i in range(n_layers, 0, -1):
        xc, act = caches[i - 1]
        if act is not None:
            dy = gelu_bwd(dy, act)
        dy, dW, db = linear_bwd(dy, xc, p[f"{prefix}.W{i}"])
        grads[f"{prefix}.W{i}"] = dW
        grads[f"{prefix}.b{i}"] = db
    return dy


# -- attention --------------------------------------------------------------

def _split_heads(x, heads):
    *lead, T, d = x.shape
    return x.reshape(*lead, T, heads, d // heads).swapaxes(-2, -3)


def _merge_heads(x):
    *lead, h, T, dh = x.shape
    return x.swapaxes(-2, -3).reshape(*lead, T, h * dh)


def attention_fwd(xq, xkv, p, prefix, heads, out_proj=True):
    """Scaled dot-product attention with learned Q/K/V projections.

    Queries come from ``xq``, keys and values from ``xkv``. Scores are
    divided by the square root of the per-head width.
    """
    Q, _ = linear_fwd(xq, p[f"{prefix}.Wq"], p[f"{prefix}.bq"])
    K, _ = linear_fwd(xkv, p[f"{prefix}.Wk"], p[f"{prefix}.bk"])
    V, _ = linear_fwd(xkv, p[f"{prefix}.Wv"], p[f"{prefix}.bv"])
    Qh, Kh, Vh = (_split_heads(t, heads) for t in (Q, K, V))
    scale = 1.0 / np.sqrt(Qh.shape[-1])
    A = softmax((Qh @ Kh.swapaxes(-1, -2)) * scale)
    O = _merge_heads(A @ Vh)
    out = O
    if out_proj:
        out, _ = linear_fwd(O, p[f"{prefix}.Wo"], p[f"{prefix}.bo"])
    return out, (xq, xkv, Qh, Kh, Vh, A, O, scale, heads, out_proj)


def attention_bwd(dout, p, prefix, cache, grads):
    xq, xkv, Qh, Kh, Vh, A, O, scale, heads, out_proj = cache
    if out_proj:
        dO, grads[f"{prefix}.Wo"], grads[f"{prefix}.bo"] = linear_bwd(
            dout, O, p[f"{prefix}.Wo"])
    else:
        dO = dout
    dOh = _split_heads(dO, heads)
    dA = dOh @ Vh.swapaxes(-1, -2)
    dVh = A.swapaxes(-1, -2) @ dOh
    dS = A * (dA - np.sum(dA * A, axis=-1, keepdims=True)) * scale
    dQh = dS @ Kh
    dKh = dS.swapaxes(-1, -2) @ Qh
    dxq, grads[f"{prefix}.Wq"], grads[f"{prefix}.bq"] = linear_bwd(
        _merge_heads(dQh), xq, p[f"{prefix}.Wq"])
    dk, grads[f"{prefix}.Wk"], grads[f"{prefix}.bk"] = linear_bwd(
        _merge_heads(dKh), xkv, p[f"{prefix}.Wk"])
    dv, grads[f"{prefix}.Wv"], grads[f"{prefix}.bv"] = linear_bwd(
        _merge_heads(dVh), xkv, p[f"{prefix}.Wv"])
    return dxq, dk + dv


# -- transformer encoder ----------------------------------------------------

def encoder_fwd(x, p, prefix, depth, heads, dropout=0.0, rng=None):
    """Pre-norm encoder stack; depth 0 is the identity."""
    caches = []
    for i in range(depth):
        q = f"{prefix}.{i}"
        z, ln1 = layernorm_fwd(x, p[f"{q}.ln1.g"], p[f"{q}.ln1.b"])
        a, att = attention_fwd(z, z, p, f"{q}.attn", heads)
        a, m1 = dropout_fwd(a, dropout, rng)
        h = x + a
        z2, ln2 = layernorm_fwd(h, p[f"{q}.ln2.g"], p[f"{q}.ln2.b"])
        f, ff = mlp_fwd(z2, p, f"{q}.ff", 2)
        f, m2 = dropout_fwd(f, dropout, rng)
        x = h + f
        caches.append((ln1, att, m1, ln2, ff, m2))
    return x, caches


def encoder_bwd(dy, p, prefix, caches, grads):
    for i in range(len(caches) - 1, -1, -1):
        q = f"{prefix}.{i}"
        ln1, att, m1, ln2, ff, m2 = caches[i]
        df = dropout_bwd(dy, m2)
        dz2 = mlp_bwd(df, p, f"{q}.ff", ff, grads)
        dh, grads[f"{q}.ln2.g"], grads[f"{q}.ln2.b"] = layernorm_bwd(dz2, ln2)
        dh = dh + dy
        da = dropout_bwd(dh, m1)
        dzq, dzkv = attention_bwd(da, p, f"{q}.attn", att, grads)
        dx, grads[f"{q}.ln1.g"], grads[f"{q}.ln1.b"] = layernorm_bwd(dzq + dzkv, ln1)
        dy = dx + dh
    return dy


def attention_weights(x, p, prefix, depth, heads):
    """Self-attention weight tensors of every layer (evaluation mode)."""
    out = []
    for i in range(depth):
        q = f"{prefix}.{i}"
        z, _ = layernorm_fwd(x, p[f"{q}.ln1.g"], p[f"{q}.ln1.b"])
        a, cache = attention_fwd(z, z, p, f"{q}.attn", heads)
        out.append(cache[5])
        h = x + a
        z2, _ = layernorm_fwd(h, p[f"{q}.ln2.g"], p[f"{q}.ln2.b"])
        x = h + mlp_fwd(z2, p, f"{q}.ff", 2)[0]
    return out
