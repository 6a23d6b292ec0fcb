"""Boundary-to-surface transformer at toy scale.

Low stage: a shared point MLP embeds the boundary samples, two learned
token projections (64 control-point tokens, 4 knot tokens) mix across the
sample axis, two encoder stacks process the tokens, and heads emit per-axis
voxel logits plus two interior knot vectors.

High stage: the decoded coarse control points are embedded by a second
point MLP, attend to the cached boundary features, are fused with their own
features and refined by a wider encoder into sub-bin logits.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple, Optional

import numpy as np

from ..errors import ConfigurationError, LabelError, ShapeError
from ..geom import BSplineSurface, KnotVector
from ..voxel import compose, n_bins
from . import layers as L

STAGE1 = ("embed", "proj", "enc_p", "enc_k", "vhead", "khead_u", "khead_v")
STAGE2 = ("embed2", "xattn", "enc_h", "hhead")
GRID = 8


@dataclass(frozen=True)
class NetConfig:
    n: int = 128
    d: int = 64
    l: int = 2
    heads: int = 4
    V_N_low: int = 10
    R: int = 10
    cp_tokens: int = 64
    knot_tokens: int = 4
    seed: int = 0
    ff_mult: int = 2
    dropout: float = 0.05
    progressive: bool = True

    def __post_init__(self):
        if self.d % self.heads:
            raise ConfigurationError(f"d = {self.d} not divisible by heads = {self.heads}")
        if self.cp_tokens != GRID * GRID:
            raise ConfigurationError("cp_tokens must equal the 8 x 8 grid size")
        if self.knot_tokens < 1 or self.n < 1 or self.l < 0:
            raise ConfigurationError("invalid token count, sample count or depth")
        if self.V_N_low < 2 or (self.progressive and self.R < 2):
            raise ConfigurationError("need at least two bins per axis")

    @property
    def dv_low(self) -> float:
        return 1.0 / self.V_N_low

    @property
    def dv_high(self) -> float:
        return 1.0 / (self.V_N_low * self.R)

    @classmethod
    def from_dict(cls, d) -> "NetConfig":
        return cls(**{k: v for k, v in d.items() if k in cls.__dataclass_fields__})


class NetOutput(NamedTuple):
    low_logits: np.ndarray          # (B, 64, 3, V_N_low)
    knots_u: np.ndarray             # (B, 4)
    knots_v: np.ndarray             # (B, 4)
    high_logits: Optional[np.ndarray]  # (B, 64, 3, R) or None
    lcp: np.ndarray                 # (B, 64, 3)
    hcp: np.ndarray                 # (B, 64, 3)
    coarse: np.ndarray              # (B, 64, 3) int
    sub: Optional[np.ndarray]       # (B, 64, 3) int


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def _dense(rng, fan_in, fan_out, gain=1.0):
    return rng.normal(0.0, gain / np.sqrt(fan_in), size=(fan_in, fan_out))


def _add_mlp(p, rng, prefix, sizes, last_gain=1.0):
    for i, (a, b) in enumerate(zip(sizes[:-1], sizes[1:]), start=1):
        gain = last_gain if i == len(sizes) - 1 else np.sqrt(2.0)
        p[f"{prefix}.W{i}"] = _dense(rng, a, b, gain)
        p[f"{prefix}.b{i}"] = np.zeros(b)


def _add_attention(p, rng, prefix, width, out_proj=True):
    for m in ("q", "k", "v") + (("o",) if out_proj else ()):
        p[f"{prefix}.W{m}"] = _dense(rng, width, width)
        p[f"{prefix}.b{m}"] = np.zeros(width)


def _add_encoder(p, rng, prefix, width, depth, ff_mult):
    for i in range(depth):
        q = f"{prefix}.{i}"
        for ln in ("ln1", "ln2"):
            p[f"{q}.{ln}.g"] = np.ones(width)
            p[f"{q}.{ln}.b"] = np.zeros(width)
        _add_attention(p, rng, f"{q}.attn", width)
        p[f"{q}.attn.Wo"] *= 0.5
        _add_mlp(p, rng, f"{q}.ff", [width, ff_mult * width, width], last_gain=0.5)


def init_params(cfg: NetConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    d = cfg.d
    p = {}
    _add_mlp(p, rng, "embed", [3, d, d, d])
    p["proj.Mcp"] = rng.normal(0.0, 1.0 / np.sqrt(cfg.n), (cfg.cp_tokens, cfg.n))
    p["proj.Mknot"] = rng.normal(0.0, 1.0 / np.sqrt(cfg.n), (cfg.knot_tokens, cfg.n))
    _add_encoder(p, rng, "enc_p", d, cfg.l, cfg.ff_mult)
    _add_encoder(p, rng, "enc_k", d, cfg.l, cfg.ff_mult)
    _add_mlp(p, rng, "vhead", [d, d, 3 * cfg.V_N_low], last_gain=0.5)
    for h in ("khead_u", "khead_v"):
        _add_mlp(p, rng, h, [cfg.knot_tokens * d, cfg.knot_tokens + 1], last_gain=0.1)
    if cfg.progressive:
        _add_mlp(p, rng, "embed2", [3, d, d, d])
        _add_attention(p, rng, "xattn", d, out_proj=False)
        _add_encoder(p, rng, "enc_h", 2 * d, cfg.l, cfg.ff_mult)
        _add_mlp(p, rng, "hhead", [2 * d, 2 * d, 3 * cfg.R], last_gain=0.5)
    return p


def param_group(name: str) -> str:
    return name.split(".", 1)[0]


# ---------------------------------------------------------------------------
# Pieces
# ---------------------------------------------------------------------------

def pointnet_embed(P, p, prefix="embed"):
    """Shared three-layer point MLP; rows are processed independently."""
    P = np.asarray(P, dtype=float)
    if not np.all(np.isfinite(P)):
        raise ValueError("non-finite boundary coordinates")
    return L.mlp_fwd(P - 0.5, p, prefix, 3)[0]


def token_project(Fp, p):
    M = p["proj.Mcp"]
    if Fp.shape[-2] != M.shape[1]:
        raise ShapeError(f"expected {M.shape[1]} boundary samples, got {Fp.shape[-2]}")
    return M @ Fp, p["proj.Mknot"] @ Fp


# Gap logits more than this far below the largest are held there, so the
# smallest gap (about e^-25 / 5) stays well above the rounding error of the
# cumulative sum and the knots remain strictly increasing.
GAP_LOGIT_RANGE = 25.0


def _gap_logits(z):
    z = np.asarray(z, dtype=float)
    floor = np.max(z, axis=-1, keepdims=True) - GAP_LOGIT_RANGE
    return np.maximum(z, floor), z >= floor


def knots_from_logits(z):
    """Interior knots as cumulative sums of softmax-normalized gaps."""
    g = L.softmax(_gap_logits(z)[0])
    return np.cumsum(g, axis=-1)[..., :-1]


def _knots_bwd(dk, z):
    zc, live = _gap_logits(z)
    g = L.softmax(zc)
    dg = np.zeros_like(g)
    dg[..., :-1] = np.cumsum(dk[..., ::-1], axis=-1)[..., ::-1]
    return g * (dg - np.sum(dg * g, axis=-1, keepdims=True)) * live


def cross_entropy(logits, labels):
    """Mean negative log-likelihood over all leading positions."""
    logits = np.asarray(logits, dtype=float)
    labels = np.asarray(labels)
    C = logits.shape[-1]
    if labels.shape != logits.shape[:-1]:
        raise ShapeError("labels must match logits without the class axis")
    if np.any(labels < 0) or np.any(labels >= C):
        raise LabelError(f"label outside [0, {C})")
    lp = L.log_softmax(logits)
    return float(-np.mean(np.take_along_axis(lp, labels[..., None], -1)))


def knot_mse(pred, true):
    return float(np.mean((np.asarray(pred) - np.asarray(true)) ** 2))


def _ce_grad(logits, labels, scale):
    """Summed CE (times ``scale``) and its logit gradient."""
    C = logits.shape[-1]
    if np.any(labels < 0) or np.any(labels >= C):
        raise LabelError(f"label outside [0, {C})")
    lp = L.log_softmax(logits)
    loss = -np.sum(np.take_along_axis(lp, labels[..., None], -1)) * scale
    g = np.exp(lp)
    np.put_along_axis(g, labels[..., None],
                      np.take_along_axis(g, labels[..., None], -1) - 1.0, -1)
    return loss, g * scale


# ---------------------------------------------------------------------------
# Model
# ---------------------------------------------------------------------------

class UVTranNet:
    def __init__(self, cfg: NetConfig, params: Optional[dict] = None):
        self.cfg = cfg
        self.params = init_params(cfg) if params is None else params

    # -- low stage ----------------------------------------------------------

    def _low(self, P, rng=None):
        cfg, p = self.cfg, self.params
        P = np.asarray(P, dtype=float)
        if P.ndim == 2:
            P = P[None]
        if P.shape[1:] != (cfg.n, 3):
            raise ShapeError(f"boundary must be (B, {cfg.n}, 3), got {P.shape}")
        if not np.all(np.isfinite(P)):
            raise ValueError("non-finite boundary coordinates")
        drop = cfg.dropout if rng is not None else 0.0
        Fp, c_emb = L.mlp_fwd(P - 0.5, p, "embed", 3)
        Fcp, Fkn = token_project(Fp, p)
        Fpt, c_ep = L.encoder_fwd(Fcp, p, "enc_p", cfg.l, cfg.heads, drop, rng)
        Fkt, c_ek = L.encoder_fwd(Fkn, p, "enc_k", cfg.l, cfg.heads, drop, rng)
        v, c_vh = L.mlp_fwd(Fpt, p, "vhead", 2)
        B = len(P)
        low_logits = v.reshape(B, cfg.cp_tokens, 3, cfg.V_N_low)
        flat = Fkt.reshape(B, -1)
        zu = flat @ p["khead_u.W1"] + p["khead_u.b1"]
        zv = flat @ p["khead_v.W1"] + p["khead_v.b1"]
        cache = (Fp, c_emb, c_ep, c_ek, c_vh, flat, zu, zv, Fkt.shape)
        return low_logits, knots_from_logits(zu), knots_from_logits(zv), Fp, cache

    def forward_low(self, P):
        """Evaluation-mode low stage: logits, knots (u, v), coarse points."""
        low_logits, ku, kv, Fp, _ = self._low(P)
        coarse = np.argmax(low_logits, axis=-1)
        return low_logits, ku, kv, (coarse + 0.5) * self.cfg.dv_low, Fp

    def low_loss_and_grad(self, P, labels, knots, scale=None, rng=None, knot_weight=1.0):
        """Sum over the batch of (knot_weight * knot MSE + voxel CE), times
        ``scale`` (default 1 / B, i.e. the batch mean), and parameter gradients."""
        cfg, p = self.cfg, self.params
        logits, ku, kv, Fp, cache = self._low(P, rng)
        Fp, c_emb, c_ep, c_ek, c_vh, flat, zu, zv, kshape = cache
        B = len(logits)
        scale = 1.0 / B if scale is None else scale
        n_cls = cfg.cp_tokens * 3
        ce, dlog = _ce_grad(logits, np.asarray(labels), scale / n_cls)
        kt = np.asarray(knots, dtype=float).reshape(B, 2, -1)
        m = 2 * ku.shape[-1]
        du, dv_ = ku - kt[:, 0], kv - kt[:, 1]
        mse = (np.sum(du ** 2) + np.sum(dv_ ** 2)) * scale / m
        grads = {}
        dzu = _knots_bwd(2.0 * knot_weight * du * scale / m, zu)
        dzv = _knots_bwd(2.0 * knot_weight * dv_ * scale / m, zv)
        grads["khead_u.W1"] = flat.T @ dzu
        grads["khead_u.b1"] = dzu.sum(axis=0)
        grads["khead_v.W1"] = flat.T @ dzv
        grads["khead_v.b1"] = dzv.sum(axis=0)
        dflat = dzu @ p["khead_u.W1"].T + dzv @ p["khead_v.W1"].T
        dFkt = dflat.reshape(kshape)
        dFpt = L.mlp_bwd(dlog.reshape(B, cfg.cp_tokens, -1), p, "vhead", c_vh, grads)
        dFcp = L.encoder_bwd(dFpt, p, "enc_p", c_ep, grads)
        dFkn = L.encoder_bwd(dFkt, p, "enc_k", c_ek, grads)
        grads["proj.Mcp"] = np.einsum("btd,bnd->tn", dFcp, Fp)
        grads["proj.Mknot"] = np.einsum("btd,bnd->tn", dFkn, Fp)
        dFp = p["proj.Mcp"].T @ dFcp + p["proj.Mknot"].T @ dFkn
        L.mlp_bwd(dFp, p, "embed", c_emb, grads)
        acc = np.mean(np.argmax(logits, axis=-1) == labels)
        return float(ce + knot_weight * mse), grads, {"ce": float(ce), "mse": float(mse),
                                        "correct": float(acc) * B}

    # -- high stage ---------------------------------------------------------

    def _high(self, Fp, lcp, rng=None):
        cfg, p = self.cfg, self.params
        if not cfg.progressive:
            raise ConfigurationError("single-stage configuration has no high stage")
        drop = cfg.dropout if rng is not None else 0.0
        Flcp, c_emb = L.mlp_fwd(np.asarray(lcp) - 0.5, p, "embed2", 3)
        Fw, c_x = L.attention_fwd(Flcp, Fp, p, "xattn", 1, out_proj=False)
        fuse = np.concatenate([Fw, Flcp], axis=-1)
        Fh, c_eh = L.encoder_fwd(fuse, p, "enc_h", cfg.l, cfg.heads, drop, rng)
        h, c_hh = L.mlp_fwd(Fh, p, "hhead", 2)
        B = len(h)
        return h.reshape(B, cfg.cp_tokens, 3, cfg.R), (c_emb, c_x, c_eh, c_hh)

    def forward_high(self, lcp, Fp):
        """Sub-bin logits and refined points, each confined to its coarse bin."""
        cfg = self.cfg
        lcp = np.asarray(lcp, dtype=float)
        high_logits, _ = self._high(Fp, lcp)
        coarse = np.floor(lcp * cfg.V_N_low).astype(np.int64)
        sub = np.argmax(high_logits, axis=-1)
        return high_logits, compose(coarse, sub, cfg.dv_low, cfg.dv_high)

    def high_loss_and_grad(self, Fp, lcp, sub_labels, scale=None, rng=None):
        """Sub-bin CE (batch mean by default) and gradients of the
        high-stage parameters; the boundary features are held fixed."""
        cfg, p = self.cfg, self.params
        logits, (c_emb, c_x, c_eh, c_hh) = self._high(Fp, lcp, rng)
        B = len(logits)
        scale = 1.0 / B if scale is None else scale
        ce, dlog = _ce_grad(logits, np.asarray(sub_labels),
                            scale / (cfg.cp_tokens * 3))
        grads = {}
        dFh = L.mlp_bwd(dlog.reshape(B, cfg.cp_tokens, -1), p, "hhead", c_hh, grads)
        dfuse = L.encoder_bwd(dFh, p, "enc_h", c_eh, grads)
        d = cfg.d
        dFlcp = dfuse[..., d:]
        dq, _ = L.attention_bwd(dfuse[..., :d], p, "xattn", c_x, grads)
        L.mlp_bwd(dFlcp + dq, p, "embed2", c_emb, grads)
        acc = np.mean(np.argmax(logits, axis=-1) == sub_labels)
        return float(ce), grads, {"ce": float(ce), "correct": float(acc) * B}

    # -- inference ----------------------------------------------------------

    def predict(self, P) -> NetOutput:
        cfg = self.cfg
        low_logits, ku, kv, lcp, Fp = self.forward_low(P)
        coarse = np.argmax(low_logits, axis=-1)
        if cfg.progressive:
            high_logits, hcp = self.forward_high(lcp, Fp)
            sub = np.argmax(high_logits, axis=-1)
        else:
            high_logits, hcp, sub = None, lcp, None
        return NetOutput(low_logits, ku, kv, high_logits, lcp, hcp, coarse, sub)

    def predict_surface(self, P, refined: bool = True) -> list:
        """Projection surfaces (in normalized coordinates) for a batch."""
        out = self.predict(P)
        pts = out.hcp if refined else out.lcp
        return [surface_from_prediction(pts[b], out.knots_u[b], out.knots_v[b])
                for b in range(len(pts))]

    def sub_labels_for(self, coarse_pred, fine_indices):
        """Sub-bin targets relative to the predicted coarse bin, clipped into
        it (the nearest reachable fine bin when the coarse bin is wrong)."""
        R = self.cfg.R
        return np.clip(np.asarray(fine_indices) - R * np.asarray(coarse_pred), 0, R - 1)

    def config_dict(self) -> dict:
        return asdict(self.cfg)


def surface_from_prediction(points, knots_u, knots_v) -> BSplineSurface:
    """8 x 8 cubic surface from 64 row-major control points and interior knots."""
    return BSplineSurface(KnotVector.from_interior(knots_u, 3),
                          KnotVector.from_interior(knots_v, 3),
                          np.asarray(points, dtype=float).reshape(GRID, GRID, 3))


def voxel_classes(cfg: NetConfig) -> int:
    return n_bins(cfg.dv_low)
