"""Attention and transformer-layer primitives.

All layers run on the autodiff Tensor type and share one fused attention op
backed by the selected kernel backend. Masks are additive float arrays with
0 for visible and NEG_INF for hidden entries; a pre-norm residual layout is
used everywhere.
"""

from __future__ import annotations

import math

import numpy as np

from . import _kernels as kernels
from .autodiff import Tensor, _accum, as_tensor, layer_norm, make_node, relu, reshape, swapaxes
from .errors import FullyMaskedRowError, ValidationError

NEG_INF = -1e9
# anything this negative is treated as masked when validating rows
_MASK_FLOOR = -1e8


def causal_mask(size: int) -> np.ndarray:
    """Additive mask: 0 on and below the diagonal, NEG_INF above."""
    m = np.zeros((size, size))
    m[np.triu_indices(size, k=1)] = NEG_INF
    return m


def _check_mask(mask: np.ndarray):
    if mask is not None and not (mask > _MASK_FLOOR).any(axis=-1).all():
        raise FullyMaskedRowError("attention mask leaves a query row with no visible key")


def attention(q: Tensor, k: Tensor, v: Tensor, mask, scale: float) -> Tensor:
    """Fused softmax(q k^T * scale + mask) v over (B, H, L, D) tensors."""
    qd = np.ascontiguousarray(q.data)
    kd = np.ascontiguousarray(k.data)
    vd = np.ascontiguousarray(v.data)
    out, w = kernels.attn_forward(qd, kd, vd, mask, scale)
    node = make_node(out, (q, k, v), None)
    if node._parents:
        def bwd(g):
            gq, gk, gv = kernels.attn_backward(np.ascontiguousarray(g), qd, kd, vd, w, scale)
            _accum(q, gq)
            _accum(k, gk)
            _accum(v, gv)
        node._backward = bwd
    return node


def scaled_dot_attention(q, k, v, mask=None) -> Tensor:
    """Single-head attention over 2-D sequences: softmax(q k^T / sqrt(C)) v.

    q: (Lq, C), k and v: (Lk, C), mask: optional additive (Lq, Lk).
    A row with every key masked has no valid distribution and raises
    FullyMaskedRowError.
    """
    q, k, v = as_tensor(q), as_tensor(k), as_tensor(v)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise ValidationError("scaled_dot_attention expects 2-D q, k, v")
    if q.shape[1] != k.shape[1] or k.shape[0] != v.shape[0]:
        raise ValidationError(
            f"inconsistent attention shapes {q.shape} {k.shape} {v.shape}"
        )
    if mask is not None:
        mask = np.asarray(mask, dtype=np.float64)
        if mask.shape != (q.shape[0], k.shape[0]):
            raise ValidationError(f"mask shape {mask.shape} does not match scores")
        _check_mask(mask)
    scale = 1.0 / math.sqrt(q.shape[1])
    lq, lk, c = q.shape[0], k.shape[0], q.shape[1]
    out = attention(
        reshape(q, (1, 1, lq, c)),
        reshape(k, (1, 1, lk, c)),
        reshape(v, (1, 1, lk, c)),
        mask,
        scale,
    )
    return reshape(out, (lq, v.shape[1]))


def positional_encoding(length: int, dim: int) -> np.ndarray:
    """Sinusoidal position table (length, dim); rows are pairwise distinct."""
    pos = np.arange(length)[:, None]
    i = np.arange(dim)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / dim)
    pe = np.empty((length, dim))
    pe[:, 0::2] = np.sin(angle[:, 0::2])
    pe[:, 1::2] = np.cos(angle[:, 1::2])
    return pe


# -- parameterised modules ----------------------------------------------------


class Module:
    """Base with recursive parameter discovery in insertion order."""

    def named_parameters(self, prefix: str = ""):
        for key, val in vars(self).items():
            name = f"{prefix}{key}" if prefix else key
            if isinstance(val, Tensor) and val.requires_grad:
                yield name, val
            elif isinstance(val, Module):
                yield from val.named_parameters(name + ".")
            elif isinstance(val, (list, tuple)):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{name}.{i}.")

    def parameters(self):
        for _, p in self.named_parameters():
            yield p

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


def _param(data) -> Tensor:
    return Tensor(data, requires_grad=True)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator):
        bound = math.sqrt(6.0 / (d_in + d_out))
        self.w = _param(rng.uniform(-bound, bound, size=(d_in, d_out)))
        self.b = _param(np.zeros(d_out))

    def __call__(self, x: Tensor) -> Tensor:
        return x @ self.w + self.b


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5):
        self.gamma = _param(np.ones(dim))
        self.beta = _param(np.zeros(dim))
        self.eps = eps

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta, self.eps)


class FeedForward(Module):
    def __init__(self, dim: int, hidden: int, rng):
        self.fc1 = Linear(dim, hidden, rng)
        self.fc2 = Linear(hidden, dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(relu(self.fc1(x)))


class AttentionConfig:
    """Model width and head count; width must split evenly across heads."""

    def __init__(self, model_dim: int = 64, num_heads: int = 4, ff_mult: int = 2):
        if model_dim <= 0 or num_heads <= 0:
            raise ValidationError("model_dim and num_heads must be positive")
        if model_dim % num_heads != 0:
            raise ValidationError(
                f"model_dim {model_dim} not divisible by num_heads {num_heads}"
            )
        self.model_dim = model_dim
        self.num_heads = num_heads
        self.ff_dim = ff_mult * model_dim

    @property
    def head_dim(self) -> int:
        return self.model_dim // self.num_heads


class MultiHeadAttention(Module):
    """Projections + heads around the fused attention op.

    Query and key/value inputs must share leading (batch) dimensions;
    callers broadcast shared memory beforehand.
    """

    def __init__(self, cfg: AttentionConfig, rng):
        self.heads = cfg.num_heads
        self.head_dim = cfg.head_dim
        self.wq = Linear(cfg.model_dim, cfg.model_dim, rng)
        self.wk = Linear(cfg.model_dim, cfg.model_dim, rng)
        self.wv = Linear(cfg.model_dim, cfg.model_dim, rng)
        self.wo = Linear(cfg.model_dim, cfg.model_dim, rng)

    def _split(self, x: Tensor, length: int) -> Tensor:
        x = reshape(x, (-1, length, self.heads, self.head_dim))
        return swapaxes(x, 1, 2)

    def __call__(self, q_in: Tensor, kv_in: Tensor, mask=None) -> Tensor:
        if mask is not None:
            _check_mask(mask)
        lead = q_in.shape[:-2]
        lq, lk = q_in.shape[-2], kv_in.shape[-2]
        qh = self._split(self.wq(q_in), lq)
        kh = self._split(self.wk(kv_in), lk)
        vh = self._split(self.wv(kv_in), lk)
        out = attention(qh, kh, vh, mask, 1.0 / math.sqrt(self.head_dim))
        out = reshape(swapaxes(out, 1, 2), lead + (lq, self.heads * self.head_dim))
        return self.wo(out)


class TemporalSelfLayer(Module):
    """Pre-norm self-attention + feed-forward over the time axis.

    Input (..., T, C). With causal=True a lower-triangular mask restricts
    every step to itself and its past.
    """

    def __init__(self, cfg: AttentionConfig, rng):
        self.ln1 = LayerNorm(cfg.model_dim)
        self.attn = MultiHeadAttention(cfg, rng)
        self.ln2 = LayerNorm(cfg.model_dim)
        self.ff = FeedForward(cfg.model_dim, cfg.ff_dim, rng)

    def __call__(self, x: Tensor, causal: bool = False) -> Tensor:
        mask = causal_mask(x.shape[-2]) if causal else None
        h = self.ln1(x)
        x = x + self.attn(h, h, mask)
        return x + self.ff(self.ln2(x))


class SpatialLayer(Module):
    """Self-attention across the dancer axis, no position information.

    Input (..., N, C); permutation-equivariant in N by construction.
    """

    def __init__(self, cfg: AttentionConfig, rng):
        self.ln1 = LayerNorm(cfg.model_dim)
        self.attn = MultiHeadAttention(cfg, rng)
        self.ln2 = LayerNorm(cfg.model_dim)
        self.ff = FeedForward(cfg.model_dim, cfg.ff_dim, rng)

    def __call__(self, x: Tensor) -> Tensor:
        h = self.ln1(x)
        x = x + self.attn(h, h, None)
        return x + self.ff(self.ln2(x))


class CrossAttentionLayer(Module):
    """Queries read a key/value sequence under an optional additive mask.

    Residual around the attention read only; feed-forward mixing is left to
    the surrounding temporal layers.
    """

    def __init__(self, cfg: AttentionConfig, rng):
        self.ln_q = LayerNorm(cfg.model_dim)
        self.ln_kv = LayerNorm(cfg.model_dim)
        self.attn = MultiHeadAttention(cfg, rng)

    def __call__(self, q_seq: Tensor, kv_seq: Tensor, mask=None) -> Tensor:
        return q_seq + self.attn(self.ln_q(q_seq), self.ln_kv(kv_seq), mask)
