"""Pre-norm transformer encoder with hand-written forward and backward passes.

Everything operates on padded batches ``(B, T)`` with a key-padding mask;
padded query rows produce values that callers ignore (their incoming
gradient must be zero).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, asdict

import numpy as np

LN_EPS = 1e-5
_GELU_C = math.sqrt(2.0 / math.pi)

EMBEDDING = "embed.tokens"
POSITIONS = "embed.positions"
PROJ_W = "proj.weight"
PROJ_B = "proj.bias"


class ModelError(ValueError):
    """Shape, configuration or cache mismatch."""


@dataclass(frozen=True)
class EncoderConfig:
    vocab_size: int
    d_model: int = 64
    n_layers: int = 2
    n_heads: int = 4
    d_ff: int = 256
    l_pos: int = 64
    dropout: float = 0.1

    def __post_init__(self):
        if self.d_model % self.n_heads:
            raise ModelError(f"d_model={self.d_model} is not divisible by n_heads={self.n_heads}")
        if not 0.0 <= self.dropout < 1.0:
            raise ModelError("dropout must lie in [0, 1)")
        for name in ("vocab_size", "d_model", "n_layers", "n_heads", "d_ff", "l_pos"):
            if getattr(self, name) < 1:
                raise ModelError(f"{name} must be positive")

    def to_dict(self) -> dict:
        return asdict(self)


def tensor_shapes(cfg: EncoderConfig) -> dict[str, tuple[int, ...]]:
    d, f, V = cfg.d_model, cfg.d_ff, cfg.vocab_size
    shapes = {EMBEDDING: (V, d), POSITIONS: (cfg.l_pos, d)}
    for l in range(cfg.n_layers):
        p = f"layers.{l}."
        shapes.update({
            p + "ln1.gain": (d,), p + "ln1.bias": (d,),
            p + "attn.qkv.weight": (d, 3 * d), p + "attn.qkv.bias": (3 * d,),
            p + "attn.out.weight": (d, d), p + "attn.out.bias": (d,),
            p + "ln2.gain": (d,), p + "ln2.bias": (d,),
            p + "ffn.in.weight": (d, f), p + "ffn.in.bias": (f,),
            p + "ffn.out.weight": (f, d), p + "ffn.out.bias": (d,),
        })
    shapes.update({"final_norm.gain": (d,), "final_norm.bias": (d,), PROJ_W: (d, V), PROJ_B: (V,)})
    return shapes


@dataclass
class ParamStore:
    config: EncoderConfig
    tensors: dict[str, np.ndarray]
    frozen: set[str] = field(default_factory=set)
    step: int = 0
    adam_m: dict[str, np.ndarray] = field(default_factory=dict)
    adam_v: dict[str, np.ndarray] = field(default_factory=dict)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def dtype(self):
        return self.tensors[EMBEDDING].dtype

    def names(self) -> list[str]:
        return list(self.tensors)

    def n_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ParamStore":
        return ParamStore(
            self.config,
            {k: v.copy() for k, v in self.tensors.items()},
            set(self.frozen),
            self.step,
            {k: v.copy() for k, v in self.adam_m.items()},
            {k: v.copy() for k, v in self.adam_v.items()},
        )

    def astype(self, dtype) -> "ParamStore":
        out = self.copy()
        out.tensors = {k: v.astype(dtype) for k, v in out.tensors.items()}
        out.adam_m = {k: v.astype(dtype) for k, v in out.adam_m.items()}
        out.adam_v = {k: v.astype(dtype) for k, v in out.adam_v.items()}
        return out

    def set_freeze(self, embedding: bool | None = None, projection: bool | None = None) -> None:
        for names, flag in (((EMBEDDING,), embedding), ((PROJ_W, PROJ_B), projection)):
            if flag is None:
                continue
            for n in names:
                (self.frozen.add if flag else self.frozen.discard)(n)

    def validate(self) -> None:
        want = tensor_shapes(self.config)
        if list(want) != list(self.tensors):
            raise ModelError("tensor names do not match the configuration")
        for name, shape in want.items():
            if self.tensors[name].shape != shape:
                raise ModelError(f"{name}: shape {self.tensors[name].shape}, expected {shape}")


def init_params(cfg: EncoderConfig, seed: int, dtype=np.float32) -> ParamStore:
    """Xavier-uniform matrices, zero biases, unit layer-norm gains.

    The output projection is drawn with standard deviation ``1/d_model`` so
    initial predictions sit close to uniform.
    """
    rng = np.random.default_rng(seed)
    tensors = {}
    for name, shape in tensor_shapes(cfg).items():
        if name.endswith(".gain"):
            t = np.ones(shape)
        elif len(shape) == 1:
            t = np.zeros(shape)
        elif name == PROJ_W:
            limit = math.sqrt(3.0) / cfg.d_model
            t = rng.uniform(-limit, limit, size=shape)
        else:
            limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            t = rng.uniform(-limit, limit, size=shape)
        tensors[name] = t.astype(dtype)
    return ParamStore(cfg, tensors)


def gelu(x):
    return 0.5 * x * (1.0 + np.tanh(_GELU_C * (x + 0.044715 * x**3)))


def gelu_grad(x):
    t = np.tanh(_GELU_C * (x + 0.044715 * x**3))
    return 0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * x * x)


def _layer_norm(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + LN_EPS)
    xhat = xc * inv
    return xhat * gain + bias, (xhat, inv)


def _layer_norm_backward(dy, cache, gain):
    xhat, inv = cache
    dgain = _sum_rows(dy * xhat)
    dbias = dy.reshape(-1, dy.shape[-1]).sum(axis=0)
    dxhat = dy * gain
    dx = inv * (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    )
    return dx, dgain, dbias


class _Dropout:
    def __init__(self, rate: float, rng: np.random.Generator | None):
        self.rate = rate
        self.rng = rng

    def mask(self, shape, dtype):
        if self.rng is None or self.rate == 0.0:
            return None
        keep = self.rng.random(shape) >= self.rate
        return keep.astype(dtype) / (1.0 - self.rate)


@dataclass
class ForwardCache:
    config: EncoderConfig
    tokens: np.ndarray
    key_mask: np.ndarray
    hidden: list[np.ndarray]
    logits: np.ndarray
    layers: list[dict]
    emb_drop: np.ndarray | None
    final_ln: tuple
    final_out: np.ndarray


def _as_batch(tokens, lengths=None):
    tokens = np.asarray(tokens, dtype=np.int64)
    if tokens.ndim == 1:
        tokens = tokens[None, :]
    B, T = tokens.shape
    if lengths is None:
        lengths = np.full(B, T)
    lengths = np.asarray(lengths)
    key_mask = np.arange(T)[None, :] < lengths[:, None]
    return tokens, key_mask


def forward(
    params: ParamStore,
    tokens,
    lengths=None,
    train: bool = False,
    dropout_seed: int | None = None,
    positions: bool = True,
) -> ForwardCache:
    """Run the encoder on a padded batch.

    Returns the cache, whose ``hidden`` list holds the residual stream after
    each layer and whose ``logits`` are ``(B, T, V)``. ``positions=False``
    drops the position embedding (used by the equivariance test).
    """
    cfg = params.config
    tokens, key_mask = _as_batch(tokens, lengths)
    B, T = tokens.shape
    if T > cfg.l_pos:
        raise ModelError(f"sequence length {T} exceeds l_pos={cfg.l_pos}")
    if tokens.size and (tokens.min() < 0 or tokens.max() >= cfg.vocab_size):
        raise ModelError("token id outside the model vocabulary")
    P = params.tensors
    dt = params.dtype
    H = cfg.n_heads
    dh = cfg.d_model // H
    scale = 1.0 / math.sqrt(dh)
    drop = _Dropout(cfg.dropout, np.random.default_rng(dropout_seed) if train else None)
    neg = np.where(key_mask, 0.0, -1e9).astype(dt)[:, None, None, :]

    x = P[EMBEDDING][tokens]
    if positions:
        x = x + P[POSITIONS][:T][None]
    emb_drop = drop.mask(x.shape, dt)
    if emb_drop is not None:
        x = x * emb_drop

    hidden, layers = [], []
    for l in range(cfg.n_layers):
        p = f"layers.{l}."
        c = {"x_in": x}
        a, c["ln1"] = _layer_norm(x, P[p + "ln1.gain"], P[p + "ln1.bias"])
        c["a"] = a
        qkv = a @ P[p + "attn.qkv.weight"] + P[p + "attn.qkv.bias"]
        qkv = qkv.reshape(B, T, 3, H, dh).transpose(2, 0, 3, 1, 4)
        q, k, v = qkv[0], qkv[1], qkv[2]
        s = (q @ k.transpose(0, 1, 3, 2)) * scale + neg
        s = s - s.max(axis=-1, keepdims=True)
        e = np.exp(s)
        probs = e / e.sum(axis=-1, keepdims=True)
        ctx = probs @ v
        merged = ctx.transpose(0, 2, 1, 3).reshape(B, T, cfg.d_model)
        o = merged @ P[p + "attn.out.weight"] + P[p + "attn.out.bias"]
        c.update(q=q, k=k, v=v, probs=probs, merged=merged)
        c["drop1"] = drop.mask(o.shape, dt)
        if c["drop1"] is not None:
            o = o * c["drop1"]
        x = x + o
        c["x_mid"] = x
        a2, c["ln2"] = _layer_norm(x, P[p + "ln2.gain"], P[p + "ln2.bias"])
        hpre = a2 @ P[p + "ffn.in.weight"] + P[p + "ffn.in.bias"]
        g = gelu(hpre)
        f = g @ P[p + "ffn.out.weight"] + P[p + "ffn.out.bias"]
        c.update(a2=a2, hpre=hpre, g=g)
        c["drop2"] = drop.mask(f.shape, dt)
        if c["drop2"] is not None:
            f = f * c["drop2"]
        x = x + f
        hidden.append(x)
        layers.append(c)

    out, final_ln = _layer_norm(x, P["final_norm.gain"], P["final_norm.bias"])
    logits = out @ P[PROJ_W] + P[PROJ_B]
    return ForwardCache(cfg, tokens, key_mask, hidden, logits, layers, emb_drop, final_ln, out)


def _sum_rows(x):
    return x.reshape(-1, x.shape[-1]).sum(axis=0)


def backward(
    params: ParamStore,
    cache: ForwardCache,
    d_logits: np.ndarray,
    d_hidden: np.ndarray | None = None,
    positions: bool = True,
) -> dict[str, np.ndarray]:
    """Gradients of ``sum(d_logits * logits) + sum(d_hidden * hidden[-1])``.

    Frozen tensors still get gradients; the optimizer decides what to skip.
    """
    cfg = params.config
    if cache.config != cfg:
        raise ModelError("forward cache was produced under a different configuration")
    if d_logits.shape != cache.logits.shape:
        raise ModelError(f"d_logits shape {d_logits.shape} != logits shape {cache.logits.shape}")
    if d_hidden is not None and d_hidden.shape != cache.hidden[-1].shape:
        raise ModelError("d_hidden shape does not match the last hidden state")
    P = params.tensors
    dt = params.dtype
    B, T = cache.tokens.shape
    H = cfg.n_heads
    dh = cfg.d_model // H
    scale = 1.0 / math.sqrt(dh)
    d_logits = d_logits.astype(dt, copy=False)
    grads: dict[str, np.ndarray] = {}

    grads[PROJ_W] = np.einsum("btd,btv->dv", cache.final_out, d_logits)
    grads[PROJ_B] = _sum_rows(d_logits)
    d_out = d_logits @ P[PROJ_W].T
    dx, grads["final_norm.gain"], grads["final_norm.bias"] = _layer_norm_backward(
        d_out, cache.final_ln, P["final_norm.gain"]
    )
    if d_hidden is not None:
        dx = dx + d_hidden.astype(dt, copy=False)

    for l in reversed(range(cfg.n_layers)):
        p = f"layers.{l}."
        c = cache.layers[l]
        # feed-forward branch
        df = dx if c["drop2"] is None else dx * c["drop2"]
        grads[p + "ffn.out.weight"] = np.einsum("btf,btd->fd", c["g"], df)
        grads[p + "ffn.out.bias"] = _sum_rows(df)
        dg = df @ P[p + "ffn.out.weight"].T
        dhpre = dg * gelu_grad(c["hpre"])
        grads[p + "ffn.in.weight"] = np.einsum("btd,btf->df", c["a2"], dhpre)
        grads[p + "ffn.in.bias"] = _sum_rows(dhpre)
        da2 = dhpre @ P[p + "ffn.in.weight"].T
        dmid, grads[p + "ln2.gain"], grads[p + "ln2.bias"] = _layer_norm_backward(
            da2, c["ln2"], P[p + "ln2.gain"]
        )
        dx = dx + dmid
        # attention branch
        do = dx if c["drop1"] is None else dx * c["drop1"]
        grads[p + "attn.out.weight"] = np.einsum("btd,bte->de", c["merged"], do)
        grads[p + "attn.out.bias"] = _sum_rows(do)
        dmerged = do @ P[p + "attn.out.weight"].T
        dctx = dmerged.reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        probs = c["probs"]
        dprobs = dctx @ c["v"].transpose(0, 1, 3, 2)
        dv = probs.transpose(0, 1, 3, 2) @ dctx
        ds = probs * (dprobs - (dprobs * probs).sum(axis=-1, keepdims=True))
        dq = (ds @ c["k"]) * scale
        dk = (ds.transpose(0, 1, 3, 2) @ c["q"]) * scale
        dqkv = np.stack([dq, dk, dv]).transpose(1, 3, 0, 2, 4).reshape(B, T, 3 * cfg.d_model)
        grads[p + "attn.qkv.weight"] = np.einsum("btd,bte->de", c["a"], dqkv)
        grads[p + "attn.qkv.bias"] = _sum_rows(dqkv)
        da = dqkv @ P[p + "attn.qkv.weight"].T
        din, grads[p + "ln1.gain"], grads[p + "ln1.bias"] = _layer_norm_backward(
            da, c["ln1"], P[p + "ln1.gain"]
        )
        dx = dx + din

    if cache.emb_drop is not None:
        dx = dx * cache.emb_drop
    d_emb = np.zeros_like(P[EMBEDDING])
    np.add.at(d_emb, cache.tokens.reshape(-1), dx.reshape(-1, cfg.d_model))
    grads[EMBEDDING] = d_emb
    d_pos = np.zeros_like(P[POSITIONS])
    if positions:
        d_pos[:T] = dx.sum(axis=0)
    grads[POSITIONS] = d_pos
    return {name: grads[name].astype(dt, copy=False) for name in P}


def remap_params(params: ParamStore, remap: np.ndarray, new_vocab_size: int) -> ParamStore:
    """Shrink/reorder embedding and projection rows with an ``old id -> new id`` table.

    Each new id takes the row of its first preimage under ``remap``.
    """
    remap = np.asarray(remap, dtype=np.int64)
    cfg = params.config
    if remap.shape != (cfg.vocab_size,):
        raise ModelError(f"remap has {remap.size} entries for a vocabulary of {cfg.vocab_size}")
    if remap.min() < 0 or remap.max() >= new_vocab_size:
        raise ModelError("remap target out of range")
    pre = np.full(new_vocab_size, -1, dtype=np.int64)
    for old in range(remap.size - 1, -1, -1):
        pre[remap[old]] = old
    if (pre < 0).any():
        raise ModelError("remap is not onto the new vocabulary")
    new_cfg = EncoderConfig(**{**cfg.to_dict(), "vocab_size": new_vocab_size})
    out = params.copy()
    out.config = new_cfg

    def gather(name: str, t: np.ndarray) -> np.ndarray:
        if name == EMBEDDING:
            return t[pre].copy()
        if name == PROJ_W:
            return t[:, pre].copy()
        if name == PROJ_B:
            return t[pre].copy()
        return t

    out.tensors = {k: gather(k, v) for k, v in params.tensors.items()}
    out.adam_m = {k: gather(k, v) for k, v in params.adam_m.items()}
    out.adam_v = {k: gather(k, v) for k, v in params.adam_v.items()}
    return out
