"""Sequence discriminators scoring whole clips with one realism probability.

Each stack alternates a non-causal transformer encoder layer with a strided
1-D convolution that halves the time axis (kernel 3, stride 2, same
padding), then pools the remaining steps (and dancers, for dance input)
before a linear head and sigmoid.
"""

from __future__ import annotations

import math

import numpy as np

from .audio import FEATURE_DIM
from .autodiff import Tensor, _accum, as_tensor, make_node, reshape, sigmoid
from .errors import ValidationError
from .motion import POSE_DIM
from .nn import AttentionConfig, Linear, Module, TemporalSelfLayer, positional_encoding


def conv1d_down(x: Tensor, w: Tensor, b: Tensor) -> Tensor:
    """Strided temporal convolution: (..., T, Ci) -> (..., ceil(T/2), Co).

    w: (K, Ci, Co). Same-padding so no input step is dropped; T=1 stays 1.
    """
    lead = x.shape[:-2]
    t, ci = x.shape[-2], x.shape[-1]
    k, _, co = w.shape
    stride = 2
    t_out = -(-t // stride)
    pad = max((t_out - 1) * stride + k - t, 0)
    pl = pad // 2
    xd = x.data.reshape((-1, t, ci))
    xp = np.pad(xd, ((0, 0), (pl, pad - pl), (0, 0)))
    idx = np.arange(t_out)[:, None] * stride + np.arange(k)[None, :]
    cols = xp[:, idx, :].reshape(-1, k * ci)  # (B * t_out, K * Ci)
    w2 = w.data.reshape(k * ci, co)
    out = (cols @ w2 + b.data).reshape(lead + (t_out, co))
    node = make_node(out, (x, w, b), None)
    if node._parents:
        def bwd(g):
            g2 = g.reshape((-1, co))
            _accum(w, (cols.T @ g2).reshape(w.data.shape))
            _accum(b, g2.sum(axis=0))
            gcols = (g2 @ w2.T).reshape(-1, t_out, k, ci)
            gxp = np.zeros_like(xp)
            np.add.at(gxp, (slice(None), idx), gcols)
            _accum(x, gxp[:, pl:pl + t, :].reshape(x.data.shape))
        node._backward = bwd
    return node


class _ConvDown(Module):
    def __init__(self, dim: int, rng: np.random.Generator, kernel: int = 3):
        bound = math.sqrt(6.0 / (kernel * dim + dim))
        self.w = Tensor(rng.uniform(-bound, bound, size=(kernel, dim, dim)), requires_grad=True)
        self.b = Tensor(np.zeros(dim), requires_grad=True)

    def __call__(self, x: Tensor) -> Tensor:
        return conv1d_down(x, self.w, self.b)


def downsampled_length(t: int, num_layers: int) -> int:
    for _ in range(num_layers):
        t = -(-t // 2)
    return t


class MusicDiscriminator(Module):
    """Probability that a (..., T, 438) feature sequence is real."""

    def __init__(self, cfg: AttentionConfig, num_layers: int, rng: np.random.Generator):
        self.in_proj = Linear(FEATURE_DIM, cfg.model_dim, rng)
        self.layers = [TemporalSelfLayer(cfg, rng) for _ in range(num_layers)]
        self.convs = [_ConvDown(cfg.model_dim, rng) for _ in range(num_layers)]
        self.head = Linear(cfg.model_dim, 1, rng)
        self._pe = positional_encoding(4096, cfg.model_dim)

    def score(self, m) -> Tensor:
        m = as_tensor(m)
        if m.shape[-1] != FEATURE_DIM:
            raise ValidationError(f"music feature width must be {FEATURE_DIM}")
        x = self.in_proj(m) + self._pe[: m.shape[-2]]
        for layer, conv in zip(self.layers, self.convs):
            x = conv(layer(x, causal=False))
        pooled = x.mean(axis=-2)
        return reshape(self.head(pooled), pooled.shape[:-1])

    def __call__(self, m) -> Tensor:
        return sigmoid(self.score(m))


class DanceDiscriminator(Module):
    """Probability that a (..., N, T, 147) group sequence is real.

    Dancers share the temporal stack and are averaged with the time axis
    before scoring, so the output is dancer-permutation invariant.
    """

    def __init__(self, cfg: AttentionConfig, num_layers: int, rng: np.random.Generator):
        self.in_proj = Linear(POSE_DIM, cfg.model_dim, rng)
        self.layers = [TemporalSelfLayer(cfg, rng) for _ in range(num_layers)]
        self.convs = [_ConvDown(cfg.model_dim, rng) for _ in range(num_layers)]
        self.head = Linear(cfg.model_dim, 1, rng)
        self._pe = positional_encoding(4096, cfg.model_dim)

    def score(self, d) -> Tensor:
        d = as_tensor(d)
        if d.shape[-1] != POSE_DIM:
            raise ValidationError(f"pose width must be {POSE_DIM}")
        if d.ndim < 3:
            raise ValidationError("dance input must be (..., N, T, 147)")
        x = self.in_proj(d) + self._pe[: d.shape[-2]]
        for layer, conv in zip(self.layers, self.convs):
            x = conv(layer(x, causal=False))
        pooled = x.mean(axis=(-3, -2))
        return reshape(self.head(pooled), pooled.shape[:-1])

    def __call__(self, d) -> Tensor:
        return sigmoid(self.score(d))
