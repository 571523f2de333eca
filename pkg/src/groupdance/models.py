"""The two generation blocks: music-to-dance and dance-to-music.

Both are encoder/decoder transformers over the shared layer library. Dance
streams carry an extra dancer axis: tensors are (..., N, T, D) for dance
and (..., T, D) for music, with arbitrary leading batch dimensions.

Shift convention: a decoder context of length T holds frames 0..T-1 and
the model emits predictions for frames 1..T, so position i may look at
context frames <= i and (through the causal cross mask) at conditioning
frames <= i.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import FEATURE_DIM, MusicFeatureSequence
from .autodiff import Tensor, as_tensor, broadcast_to, no_grad, reshape, swapaxes
from .errors import ValidationError
from .motion import POSE_DIM, GroupDanceSequence
from .nn import (
    AttentionConfig,
    CrossAttentionLayer,
    LayerNorm,
    Linear,
    Module,
    SpatialLayer,
    TemporalSelfLayer,
    causal_mask,
    positional_encoding,
)

MAX_LEN = 4096


@dataclass
class GenerationConfig:
    horizon: int
    n_dancers: int
    seed: int = 0
    teacher_forcing: bool = False

    def __post_init__(self):
        if self.horizon < 1 or self.n_dancers < 1:
            raise ValidationError("horizon and dancer count must be >= 1")


def _spatial(layer: SpatialLayer, x: Tensor) -> Tensor:
    """Apply a dancer-axis layer to (..., N, T, C) by swapping N and T."""
    return swapaxes(layer(swapaxes(x, -3, -2)), -3, -2)


class Music2DanceModel(Module):
    """Non-causal music encoder + per-dancer autoregressive dance decoder.

    The encoded music is broadcast to every dancer; dancer identity enters
    only through the initial poses in the decoder context.
    """

    def __init__(self, cfg: AttentionConfig, num_layers: int, rng: np.random.Generator):
        self.cfg = cfg
        self.in_music = Linear(FEATURE_DIM, cfg.model_dim, rng)
        self.encoder = [TemporalSelfLayer(cfg, rng) for _ in range(num_layers)]
        self.in_pose = Linear(POSE_DIM, cfg.model_dim, rng)
        self.dec_spatial = [SpatialLayer(cfg, rng) for _ in range(num_layers)]
        self.dec_temporal = [TemporalSelfLayer(cfg, rng) for _ in range(num_layers)]
        self.dec_cross = [CrossAttentionLayer(cfg, rng) for _ in range(num_layers)]
        self.out_norm = LayerNorm(cfg.model_dim)
        self.out_pose = Linear(cfg.model_dim, POSE_DIM, rng)
        self._pe = positional_encoding(MAX_LEN, cfg.model_dim)

    def encode(self, m) -> Tensor:
        """Music features (..., T, 438) -> memory (..., T, C)."""
        m = as_tensor(m)
        if m.shape[-1] != FEATURE_DIM:
            raise ValidationError(f"music feature width must be {FEATURE_DIM}")
        x = self.in_music(m) + self._pe[: m.shape[-2]]
        for layer in self.encoder:
            x = layer(x, causal=False)
        return x

    def decode(self, memory: Tensor, d_context) -> Tensor:
        """Memory (..., T, C) + pose context (..., N, T, 147) -> (..., N, T, 147)."""
        d_context = as_tensor(d_context)
        n, t = d_context.shape[-3], d_context.shape[-2]
        if memory.shape[-2] != t:
            raise ValidationError(
                f"music length {memory.shape[-2]} != context length {t}"
            )
        mask = causal_mask(t)
        x = self.in_pose(d_context) + self._pe[:t]
        mem = broadcast_to(
            reshape(memory, memory.shape[:-2] + (1, t, self.cfg.model_dim)),
            memory.shape[:-2] + (n, t, self.cfg.model_dim),
        )
        for sp, tp, cr in zip(self.dec_spatial, self.dec_temporal, self.dec_cross):
            x = _spatial(sp, x)
            x = tp(x, causal=True)
            x = cr(x, mem, mask)
        return self.out_pose(self.out_norm(x))

    def forward(self, m, d_context) -> Tensor:
        """Teacher-forced pass; prediction t sees music (fully encoded) and
        context frames < t only."""
        m = as_tensor(m)
        d_context = as_tensor(d_context)
        if m.shape[-2] != d_context.shape[-2]:
            raise ValidationError("music and dance context disagree on T")
        return self.decode(self.encode(m), d_context)

    def generate(self, music: MusicFeatureSequence, init_poses: np.ndarray,
                 cfg: GenerationConfig | None = None) -> GroupDanceSequence:
        """Autoregressive rollout over the full music sequence.

        init_poses: (N, 147). Returns the N x T predicted frames (the seed
        pose itself is not part of the output).
        """
        init_poses = np.asarray(init_poses, dtype=np.float64)
        if init_poses.ndim != 2 or init_poses.shape[1] != POSE_DIM:
            raise ValidationError(f"init poses must be (N, {POSE_DIM})")
        t_total = music.n_frames
        n = init_poses.shape[0]
        if cfg is not None and (cfg.horizon != t_total or cfg.n_dancers != n):
            raise ValidationError("generation config disagrees with inputs")
        out = np.empty((n, t_total, POSE_DIM))
        context = np.empty((n, t_total, POSE_DIM))
        context[:, 0] = init_poses
        with no_grad():
            memory = self.encode(music.feats)
            for t in range(t_total):
                pred = self.decode(memory[..., : t + 1, :], context[:, : t + 1])
                out[:, t] = pred.data[:, t]
                if t + 1 < t_total:
                    context[:, t + 1] = out[:, t]
        return GroupDanceSequence(out, fps=music.fps)


class Dance2MusicModel(Module):
    """Spatial-temporal dance encoder (mean over dancers) + causal music decoder."""

    def __init__(self, cfg: AttentionConfig, num_layers: int, rng: np.random.Generator):
        self.cfg = cfg
        self.in_pose = Linear(POSE_DIM, cfg.model_dim, rng)
        self.enc_spatial = [SpatialLayer(cfg, rng) for _ in range(num_layers)]
        self.enc_temporal = [TemporalSelfLayer(cfg, rng) for _ in range(num_layers)]
        self.in_music = Linear(FEATURE_DIM, cfg.model_dim, rng)
        self.dec_temporal = [TemporalSelfLayer(cfg, rng) for _ in range(num_layers)]
        self.dec_cross = [CrossAttentionLayer(cfg, rng) for _ in range(num_layers)]
        self.out_norm = LayerNorm(cfg.model_dim)
        self.out_music = Linear(cfg.model_dim, FEATURE_DIM, rng)
        self._pe = positional_encoding(MAX_LEN, cfg.model_dim)

    def encode(self, d) -> Tensor:
        """Group poses (..., N, T, 147) -> memory (..., T, C), dancer-invariant."""
        d = as_tensor(d)
        if d.shape[-1] != POSE_DIM:
            raise ValidationError(f"pose width must be {POSE_DIM}")
        x = self.in_pose(d) + self._pe[: d.shape[-2]]
        for sp, tp in zip(self.enc_spatial, self.enc_temporal):
            x = _spatial(sp, x)
            x = tp(x, causal=False)
        return x.mean(axis=-3)

    def decode(self, memory: Tensor, m_context) -> Tensor:
        m_context = as_tensor(m_context)
        t = m_context.shape[-2]
        if memory.shape[-2] != t:
            raise ValidationError(f"dance length {memory.shape[-2]} != context length {t}")
        mask = causal_mask(t)
        x = self.in_music(m_context) + self._pe[:t]
        for tp, cr in zip(self.dec_temporal, self.dec_cross):
            x = tp(x, causal=True)
            x = cr(x, memory, mask)
        return self.out_music(self.out_norm(x))

    def forward(self, d, m_context) -> Tensor:
        d = as_tensor(d)
        m_context = as_tensor(m_context)
        if d.shape[-2] != m_context.shape[-2]:
            raise ValidationError("dance and music context disagree on T")
        return self.decode(self.encode(d), m_context)


def cycle_music(m2d_model, d2m_model, m, d_context, m_context):
    """m -> dance -> music, teacher-forced inner contexts: (m2d, m2d2m)."""
    m2d = m2d_model.forward(m, d_context)
    m2d2m = d2m_model.forward(m2d, m_context)
    return m2d, m2d2m


def cycle_dance(m2d_model, d2m_model, d, m_context, d_context):
    """d -> music -> dance, teacher-forced inner contexts: (d2m, d2m2d)."""
    d2m = d2m_model.forward(d, m_context)
    d2m2d = m2d_model.forward(d2m, d_context)
    return d2m, d2m2d
