"""Evaluation metrics.

Global semantic metrics embed clips with a contrastively trained two-tower
retrieval model and compare distributions (FID) or paired distances
(M-Dist, MM-Dist) and spread (Div). Local synchronized metrics detect
kinematic beats from joint-speed minima and score beat alignment between
the lead dancer and the music (MDA) or among dancers (GDA).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist

from .audio import FEATURE_DIM, BeatSequence, music_beats as _music_beats
from .autodiff import Tensor, as_tensor, backward, log_softmax, no_grad, tsum
from .errors import ValidationError
from .motion import POSE_DIM, GroupDanceSequence, KeypointTrajectory, forward_kinematics
from .nn import AttentionConfig, Linear, Module, SpatialLayer, TemporalSelfLayer, positional_encoding
from .seeding import rng_for
from .skeleton import SkeletonDef
from .training import Adam


@dataclass
class MetricReport:
    fid: float
    m_dist: float
    mm_dist: float
    div: float
    mda: float
    gda: float

    def to_dict(self) -> dict:
        return {
            "fid": self.fid, "m_dist": self.m_dist, "mm_dist": self.mm_dist,
            "div": self.div, "mda": self.mda, "gda": self.gda,
        }


# -- retrieval embedding model --------------------------------------------------


def _normalize(x: Tensor) -> Tensor:
    norm = (tsum(x * x, axis=-1, keepdims=True) + 1e-12) ** 0.5
    return x * norm**-1.0


class RetrievalModel(Module):
    """Two-tower music/dance embedder with unit-norm outputs."""

    def __init__(self, cfg: AttentionConfig, embed_dim: int = 32, num_layers: int = 1,
                 temperature: float = 0.1, seed: int = 0):
        rng = rng_for(seed, "retrieval")
        self.temperature = temperature
        self.music_in = Linear(FEATURE_DIM, cfg.model_dim, rng)
        self.music_layers = [TemporalSelfLayer(cfg, rng) for _ in range(num_layers)]
        self.music_out = Linear(cfg.model_dim, embed_dim, rng)
        self.dance_in = Linear(POSE_DIM, cfg.model_dim, rng)
        self.dance_spatial = [SpatialLayer(cfg, rng) for _ in range(num_layers)]
        self.dance_temporal = [TemporalSelfLayer(cfg, rng) for _ in range(num_layers)]
        self.dance_out = Linear(cfg.model_dim, embed_dim, rng)
        self._pe = positional_encoding(4096, cfg.model_dim)

    def embed_music(self, m) -> Tensor:
        """(..., T, 438) -> unit-norm (..., E)."""
        m = as_tensor(m)
        x = self.music_in(m) + self._pe[: m.shape[-2]]
        for layer in self.music_layers:
            x = layer(x, causal=False)
        return _normalize(self.music_out(x.mean(axis=-2)))

    def embed_dance(self, d) -> Tensor:
        """(..., N, T, 147) -> unit-norm (..., E)."""
        d = as_tensor(d)
        x = self.dance_in(d) + self._pe[: d.shape[-2]]
        for sp, tp in zip(self.dance_spatial, self.dance_temporal):
            x = sp(x.swapaxes(-3, -2)).swapaxes(-3, -2)
            x = tp(x, causal=False)
        return _normalize(self.dance_out(x.mean(axis=(-3, -2))))


def clip_contrastive_loss(model: RetrievalModel, music_batch, dance_batch) -> Tensor:
    """Symmetric InfoNCE over in-batch pairs; ~ln(B) at random init."""
    zm = model.embed_music(music_batch)
    zd = model.embed_dance(dance_batch)
    if zm.shape[0] < 2:
        raise ValidationError("contrastive loss needs a batch of at least 2 pairs")
    sim = (zm @ zd.swapaxes(0, 1)) * (1.0 / model.temperature)
    b = sim.shape[0]
    diag = (np.arange(b), np.arange(b))
    row = log_softmax(sim, axis=1)[diag].mean()
    col = log_softmax(sim, axis=0)[diag].mean()
    return -0.5 * (row + col)


def train_retrieval(pairs: list, cfg: AttentionConfig | None = None, embed_dim: int = 32,
                    num_layers: int = 1, steps: int = 300, batch_size: int = 8,
                    segment_len: int = 48, lr: float = 1e-3, temperature: float = 0.1,
                    seed: int = 0) -> RetrievalModel:
    """Contrastive training over aligned (music (T,438), dance (N,T,147)) pairs.

    Each step samples a batch of pairs and one aligned temporal segment per
    pair. Pairs shorter than segment_len are used whole (all clips in a
    batch must then agree on length, which synthetic corpora do).
    """
    if len(pairs) < 2:
        raise ValidationError("retrieval training needs at least 2 pairs")
    if cfg is None:
        cfg = AttentionConfig(model_dim=32, num_heads=4)
    model = RetrievalModel(cfg, embed_dim, num_layers, temperature, seed)
    opt = Adam(list(model.parameters()), lr=lr)
    rng = rng_for(seed, "retrieval-train")
    for _ in range(steps):
        idx = rng.choice(len(pairs), size=min(batch_size, len(pairs)), replace=False)
        mseg, dseg = [], []
        for i in idx:
            music, dance = pairs[i]
            t = music.shape[0]
            seg = min(segment_len, t)
            start = int(rng.integers(0, t - seg + 1))
            mseg.append(music[start:start + seg])
            dseg.append(dance[:, start:start + seg])
        loss = clip_contrastive_loss(model, np.stack(mseg), np.stack(dseg))
        opt.zero_grad()
        backward(loss)
        opt.step()
    return model


def embed_corpus(model: RetrievalModel, pairs: list) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm music and dance embeddings for a list of pairs."""
    zm, zd = [], []
    with no_grad():
        for music, dance in pairs:
            zm.append(model.embed_music(music).data)
            zd.append(model.embed_dance(dance).data)
    return np.stack(zm), np.stack(zd)


# -- distribution metrics --------------------------------------------------------


def fid(real_embeds: np.ndarray, gen_embeds: np.ndarray, reg: float = 1e-6) -> float:
    """Frechet distance between Gaussian fits of the two embedding sets.

    Covariances are regularized by reg*I; the matrix square root uses the
    symmetrized product with negative eigenvalues clipped at zero.
    """
    real = np.atleast_2d(np.asarray(real_embeds, dtype=np.float64))
    gen = np.atleast_2d(np.asarray(gen_embeds, dtype=np.float64))
    if real.ndim != 2 or gen.ndim != 2 or real.shape[1] != gen.shape[1]:
        raise ValidationError("embedding sets must be 2-D with equal width")
    if real.shape[0] < 2 or gen.shape[0] < 2:
        raise ValidationError("need at least 2 embeddings per set")
    mu1, mu2 = real.mean(axis=0), gen.mean(axis=0)
    dim = real.shape[1]
    s1 = np.cov(real, rowvar=False).reshape(dim, dim) + reg * np.eye(dim)
    s2 = np.cov(gen, rowvar=False).reshape(dim, dim) + reg * np.eye(dim)

    w1, v1 = np.linalg.eigh(s1)
    root1 = (v1 * np.sqrt(np.clip(w1, 0.0, None))) @ v1.T
    inner = root1 @ s2 @ root1
    w = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    tr_sqrt = np.sqrt(np.clip(w, 0.0, None)).sum()

    diff = mu1 - mu2
    return float(diff @ diff + np.trace(s1) + np.trace(s2) - 2.0 * tr_sqrt)


def m_dist(gen_dance_embeds: np.ndarray, gt_dance_embeds: np.ndarray) -> float:
    """Mean distance between generated and ground-truth dance embeddings
    paired by shared music; zero when the generation is the ground truth."""
    gen = np.asarray(gen_dance_embeds)
    gt = np.asarray(gt_dance_embeds)
    if gen.shape != gt.shape:
        raise ValidationError("paired embedding sets must have equal shapes")
    return float(np.linalg.norm(gen - gt, axis=-1).mean())


def mm_dist(music_embeds: np.ndarray, dance_embeds: np.ndarray) -> float:
    """Mean distance between music embeddings and their paired dance embeddings."""
    zm = np.asarray(music_embeds)
    zd = np.asarray(dance_embeds)
    if zm.shape != zd.shape:
        raise ValidationError("paired embedding sets must have equal shapes")
    return float(np.linalg.norm(zm - zd, axis=-1).mean())


def diversity(embeds: np.ndarray) -> float:
    """Mean pairwise distance within a set."""
    embeds = np.asarray(embeds)
    if embeds.shape[0] < 2:
        raise ValidationError("diversity needs at least 2 embeddings")
    return float(pdist(embeds).mean())


# -- beat metrics -----------------------------------------------------------------


def speed_envelope(points: np.ndarray, fps: float = 30.0, window: int = 5) -> np.ndarray:
    """Smoothed mean joint speed per frame, (T,).

    Central differences inside the clip, one-sided at the two ends, then a
    moving average over `window` frames.
    """
    v = np.empty_like(points)
    v[1:-1] = (points[2:] - points[:-2]) * (fps / 2.0)
    v[0] = (points[1] - points[0]) * fps
    v[-1] = (points[-1] - points[-2]) * fps
    env = np.linalg.norm(v, axis=-1).mean(axis=-1)
    if window > 1:
        pad = window // 2
        padded = np.pad(env, pad, mode="edge")
        env = np.convolve(padded, np.ones(window) / window, mode="valid")
    return env


def _envelope_minima(env: np.ndarray) -> list[int]:
    """Valley positions of the envelope, robust to flat plateaus.

    A beat is the slowest frame of a descent-then-rise valley. The clip
    start counts as a descent (a dancer may begin on a stall), but the clip
    end never yields a beat: without a subsequent rise there is no evidence
    the motion actually stalled. Changes below a relative tolerance are
    treated as flat so constant-speed motion has no minima.
    """
    tol = 1e-9 * max(1.0, float(env.max()))
    diff = np.diff(env)
    sign = np.zeros(diff.size, dtype=np.int64)
    sign[diff > tol] = 1
    sign[diff < -tol] = -1
    minima = []
    prev_sign, prev_idx = -1, -1  # treat the boundary as a completed descent
    for i in np.flatnonzero(sign):
        if prev_sign == -1 and sign[i] == 1:
            lo, hi = prev_idx + 1, int(i)
            minima.append(lo + int(np.argmin(env[lo:hi + 1])))
        prev_sign, prev_idx = int(sign[i]), int(i)
    return minima


def motion_beats(traj, fps: float = 30.0, min_gap: int = 5, window: int = 5) -> BeatSequence:
    """Frames where the smoothed joint-speed envelope has a local minimum.

    Minima closer together than min_gap frames are pruned, keeping the
    slowest of each cluster.
    """
    points = traj.points if isinstance(traj, KeypointTrajectory) else np.asarray(traj)
    t = points.shape[0]
    if t < 3:
        raise ValidationError("beat detection needs at least 3 frames")
    env = speed_envelope(points, fps, window)
    chosen: list[int] = []
    for i in sorted(_envelope_minima(env), key=lambda j: (env[j], j)):
        if all(abs(i - c) >= min_gap for c in chosen):
            chosen.append(i)
    return BeatSequence(sorted(chosen), t)


def beat_align(a: BeatSequence, b: BeatSequence, sigma: float = 3.0) -> float:
    """Mean over beats in `a` of exp(-d^2 / (2 sigma^2)) with d the distance
    to the nearest beat in `b`. Asymmetric in general; 1.0 iff every beat in
    `a` lands exactly on a beat of `b`."""
    fa = np.asarray(a.frames if isinstance(a, BeatSequence) else a, dtype=np.float64)
    fb = np.asarray(b.frames if isinstance(b, BeatSequence) else b, dtype=np.float64)
    if fa.size == 0 or fb.size == 0:
        raise ValidationError("beat alignment is undefined for empty beat sequences")
    if sigma <= 0:
        raise ValidationError("sigma must be positive")
    d = np.abs(fa[:, None] - fb[None, :]).min(axis=1)
    return float(np.exp(-(d**2) / (2.0 * sigma**2)).mean())


def _dancer_beats(group: GroupDanceSequence, skel: SkeletonDef, min_gap: int = 5):
    points = forward_kinematics(group, skel)
    beats = [motion_beats(points[i], fps=group.fps, min_gap=min_gap) for i in range(group.n_dancers)]
    mean_speed = [speed_envelope(points[i], group.fps).mean() for i in range(group.n_dancers)]
    return beats, np.asarray(mean_speed)


def mda(group: GroupDanceSequence, skel: SkeletonDef, beats_music: BeatSequence,
        sigma: float = 3.0, lead: int | None = None) -> float:
    """Lead dancer's kinematic beats scored against the music beats.

    The lead is the dancer with the highest mean joint speed unless an
    index is forced.
    """
    beats, mean_speed = _dancer_beats(group, skel)
    if lead is None:
        lead = int(np.argmax(mean_speed))
    if not 0 <= lead < group.n_dancers:
        raise ValidationError(f"lead dancer index {lead} out of range")
    return beat_align(beats[lead], beats_music, sigma)


def gda(group: GroupDanceSequence, skel: SkeletonDef, sigma: float = 3.0,
        ordered: bool = True) -> float:
    """Mean pairwise beat alignment across dancers (ordered pairs i != j)."""
    if group.n_dancers < 2:
        raise ValidationError("group alignment needs at least 2 dancers")
    beats, _ = _dancer_beats(group, skel)
    scores = []
    for i in range(group.n_dancers):
        for j in range(group.n_dancers):
            if i == j:
                continue
            if ordered or i < j:
                scores.append(beat_align(beats[i], beats[j], sigma))
    return float(np.mean(scores))


# -- corpus evaluation -------------------------------------------------------------


def evaluate_corpus(reference: list, generated: list, skel: SkeletonDef,
                    retrieval: RetrievalModel, sigma: float = 3.0,
                    lead: int | None = None,
                    gda_ordered: bool = True) -> tuple[MetricReport, list[dict]]:
    """Score a generated corpus against its reference corpus.

    reference / generated: aligned lists of (clip_id, MusicFeatureSequence,
    GroupDanceSequence) sharing clip ids and music. Returns the aggregate
    report plus per-clip rows.
    """
    if len(reference) != len(generated) or not reference:
        raise ValidationError("reference and generated corpora must align and be non-empty")
    ref_pairs = [(m.feats, d.data) for _, m, d in reference]
    gen_pairs = [(m.feats, d.data) for _, m, d in generated]
    zm_ref, zd_ref = embed_corpus(retrieval, ref_pairs)
    zm_gen, zd_gen = embed_corpus(retrieval, gen_pairs)

    rows = []
    mda_vals, gda_vals = [], []
    for (cid, music, _), (_, _, dance), zg, zr, zm in zip(
            reference, generated, zd_gen, zd_ref, zm_gen):
        row = {"id": cid, "m_dist": float(np.linalg.norm(zg - zr)),
               "mm_dist": float(np.linalg.norm(zm - zg)), "mda": "", "gda": ""}
        mb = _music_beats(music)
        try:
            row["mda"] = mda(dance, skel, mb, sigma, lead)
            mda_vals.append(row["mda"])
        except ValidationError:
            pass
        if dance.n_dancers >= 2:
            try:
                row["gda"] = gda(dance, skel, sigma, ordered=gda_ordered)
                gda_vals.append(row["gda"])
            except ValidationError:
                pass
        rows.append(row)

    report = MetricReport(
        fid=fid(zd_ref, zd_gen),
        m_dist=m_dist(zd_gen, zd_ref),
        mm_dist=mm_dist(zm_gen, zd_gen),
        div=diversity(zd_gen),
        mda=float(np.mean(mda_vals)) if mda_vals else math.nan,
        gda=float(np.mean(gda_vals)) if gda_vals else math.nan,
    )
    return report, rows
