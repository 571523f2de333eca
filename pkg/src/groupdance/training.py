"""Losses, scheduled sampling, and the alternating adversarial training loop.

One train step = one discriminator update (generator outputs detached)
followed by one generator update on rec + cycle + fool, with the sampling
ratio advanced once per step. All reported losses are plain floats; the
generator total is defined as the float sum of its three components.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import formats
from .autodiff import Tensor, absolute, backward, clip, log, no_grad, softplus
from .discriminators import DanceDiscriminator, MusicDiscriminator
from .errors import TrainingDivergedError, ValidationError
from .models import Dance2MusicModel, Music2DanceModel, cycle_dance, cycle_music
from .nn import AttentionConfig, Module
from .seeding import rng_for

PROB_EPS = 1e-7


@dataclass
class LossReport:
    l_rec: float
    l_cyc: float
    l_fd: float
    l_g: float
    l_d: float

    def finite(self) -> bool:
        return all(np.isfinite(v) for v in (self.l_rec, self.l_cyc, self.l_fd, self.l_g, self.l_d))


@dataclass
class ScheduleState:
    """Linear ramp of the model-sample mixing probability."""

    step: int = 0
    total_steps: int = 1

    def __post_init__(self):
        if self.total_steps < 1:
            raise ValidationError("total_steps must be >= 1")

    @property
    def ratio(self) -> float:
        return min(1.0, self.step / self.total_steps)

    def advance(self):
        self.step += 1


@dataclass
class TrainConfig:
    epochs: int = 1
    batch_size: int = 2
    lr_g: float = 1e-3
    lr_d: float = 1e-3
    seed: int = 0
    schedule_total: int = 200
    vel_weight: float = 1.0
    w_rec: float = 1.0
    w_cyc: float = 1.0
    w_fd: float = 1.0
    alternation: str = "1:1"
    saturating_fool: bool = False
    checkpoint_every: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.schedule_total) < 1:
            raise ValidationError("epochs, batch_size and schedule_total must be >= 1")
        if min(self.lr_g, self.lr_d) <= 0:
            raise ValidationError("learning rates must be positive")
        parts = self.alternation.split(":")
        if len(parts) != 2 or not all(p.isdigit() and int(p) >= 1 for p in parts):
            raise ValidationError("alternation must look like 'D:G' with positive ints")

    @property
    def alternation_counts(self) -> tuple[int, int]:
        d, g = self.alternation.split(":")
        return int(d), int(g)


# -- losses --------------------------------------------------------------------


def mean_l1(a, b) -> Tensor:
    return absolute(a - b).mean()


def root_velocity_l1(pred, target, fps: float) -> Tensor:
    """L1 between forward-difference root-translation velocities.

    pred/target: (..., N, T, 147) with T >= 2; only channels 0..2 enter.
    """
    if pred.shape[-2] < 2:
        raise ValidationError("velocity loss needs at least 2 frames")
    pr = pred[..., :3]
    tr = np.asarray(target.data if isinstance(target, Tensor) else target)[..., :3]
    pv = (pr[..., 1:, :] - pr[..., :-1, :]) * fps
    tv = (tr[..., 1:, :] - tr[..., :-1, :]) * fps
    return mean_l1(pv, tv)


def loss_rec(m, d, m2d, d2m, fps: float = 30.0, vel_weight: float = 1.0) -> Tensor:
    """Reconstruction: L1 on both modalities + root-velocity L1 on dance."""
    return mean_l1(d2m, m) + mean_l1(m2d, d) + vel_weight * root_velocity_l1(m2d, d, fps)


def loss_cyc(m, d, m2d2m, d2m2d, fps: float = 30.0, vel_weight: float = 1.0) -> Tensor:
    """Cycle consistency: originals vs their double-mapped counterparts."""
    return mean_l1(m2d2m, m) + mean_l1(d2m2d, d) + vel_weight * root_velocity_l1(d2m2d, d, fps)


def _log_prob(disc, x, of_real: bool) -> Tensor:
    """Mean log D(x) (of_real) or log(1 - D(x)) with stable evaluation.

    Discriminators exposing raw logits via .score use the softplus identity
    log(sigmoid(s)) = -softplus(-s), which keeps gradients alive however
    confident the discriminator is. Plain probability callables fall back
    to clamping into [eps, 1-eps] before the log.
    """
    score = getattr(disc, "score", None)
    if score is not None:
        s = score(x)
        return (-softplus(-s if of_real else s)).mean()
    p = clip(disc(x), PROB_EPS, 1.0 - PROB_EPS)
    return log(p if of_real else 1.0 - p).mean()


def loss_disc(d_music, d_dance, m, d, m2d, d2m) -> Tensor:
    """Discriminator cross-entropy: real pairs labelled 1, generated 0.

    Generated inputs must be detached; this loss never reaches generator
    weights.
    """
    return -(
        _log_prob(d_music, m, True)
        + _log_prob(d_music, d2m, False)
        + _log_prob(d_dance, d, True)
        + _log_prob(d_dance, m2d, False)
    )


def loss_fool(d_music, d_dance, m2d, d2m, saturating: bool = False) -> Tensor:
    """Generator term pushing discriminator outputs on fakes toward 1.

    Default is the non-saturating form -log D(fake); the literal
    log(1 - D(fake)) objective is available for fidelity experiments.
    """
    if saturating:
        return _log_prob(d_music, d2m, False) + _log_prob(d_dance, m2d, False)
    return -(_log_prob(d_music, d2m, True) + _log_prob(d_dance, m2d, True))


def scheduled_ratio(state: ScheduleState) -> float:
    return state.ratio


def mix_inputs(gt_seq: np.ndarray, pred_seq: np.ndarray, p: float,
               rng: np.random.Generator) -> np.ndarray:
    """Per-frame Bernoulli mix: each frame comes from pred with probability p."""
    gt_seq = np.asarray(gt_seq)
    pred_seq = np.asarray(pred_seq)
    if gt_seq.shape != pred_seq.shape:
        raise ValidationError("mix_inputs requires identical shapes")
    if not 0.0 <= p <= 1.0:
        raise ValidationError("mix probability must lie in [0, 1]")
    if p == 0.0:
        return gt_seq.copy()
    if p == 1.0:
        return pred_seq.copy()
    pick = rng.random(gt_seq.shape[:-1]) < p
    return np.where(pick[..., None], pred_seq, gt_seq)


# -- optimizer -----------------------------------------------------------------


class Adam:
    def __init__(self, params: list[Tensor], lr: float, betas=(0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.b1, self.b2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        for i, p in enumerate(self.params):
            if p.grad is None:
                continue
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * p.grad
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * p.grad**2
            mhat = self.m[i] / (1 - self.b1**self.t)
            vhat = self.v[i] / (1 - self.b2**self.t)
            p.data -= self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.grad = None


# -- model bundle ---------------------------------------------------------------


class ModelSet(Module):
    """Both generators and both discriminators with one init seed."""

    def __init__(self, cfg: AttentionConfig, num_layers: int = 2, disc_layers: int = 2,
                 seed: int = 0):
        self.m2d = Music2DanceModel(cfg, num_layers, rng_for(seed, "init", "m2d"))
        self.d2m = Dance2MusicModel(cfg, num_layers, rng_for(seed, "init", "d2m"))
        self.disc_music = MusicDiscriminator(cfg, disc_layers, rng_for(seed, "init", "disc_music"))
        self.disc_dance = DanceDiscriminator(cfg, disc_layers, rng_for(seed, "init", "disc_dance"))

    def generator_parameters(self) -> list[Tensor]:
        return [p for _, p in self.m2d.named_parameters("m2d.")] + [
            p for _, p in self.d2m.named_parameters("d2m.")
        ]

    def discriminator_parameters(self) -> list[Tensor]:
        return [p for _, p in self.disc_music.named_parameters()] + [
            p for _, p in self.disc_dance.named_parameters()
        ]

    def state_dict(self) -> dict:
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state: dict):
        own = dict(self.named_parameters())
        missing = sorted(set(own) - set(state))
        extra = sorted(set(state) - set(own))
        if missing or extra:
            raise ValidationError(f"checkpoint mismatch: missing {missing}, extra {extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.data.shape:
                raise ValidationError(f"shape mismatch for {name}")
            p.data = arr.copy()

    def save(self, path):
        formats.save_checkpoint(path, self.state_dict())

    @classmethod
    def load(cls, path, cfg: AttentionConfig, num_layers: int = 2, disc_layers: int = 2):
        ms = cls(cfg, num_layers, disc_layers, seed=0)
        ms.load_state_dict(formats.load_checkpoint(path))
        return ms


# -- training loop ---------------------------------------------------------------


def split_contexts(music: np.ndarray, dance: np.ndarray):
    """Teacher-forcing views of an aligned clip (T0 frames each).

    Returns (m, d, m_context, d_context) with T = T0 - 1 prediction steps:
    contexts hold frames 0..T0-2, targets hold frames 1..T0-1.
    """
    if music.shape[0] != dance.shape[1]:
        raise ValidationError("music and dance disagree on clip length")
    if music.shape[0] < 3:
        raise ValidationError("clips must have at least 3 frames to train on")
    return music[1:], dance[:, 1:], music[:-1], dance[:, :-1]


@dataclass
class _Batch:
    m: np.ndarray
    d: np.ndarray
    m_ctx: np.ndarray
    d_ctx: np.ndarray
    fps: float


def _forward_generators(models: ModelSet, item: _Batch, p: float, rng):
    """Scheduled-sampling pass + graph pass; returns outputs and cycles."""
    m_ctx, d_ctx = item.m_ctx, item.d_ctx
    if p > 0.0:
        with no_grad():
            pred_d = models.m2d.forward(item.m, d_ctx).data
            pred_m = models.d2m.forward(item.d, m_ctx).data
        # context frame i holds frame i; the model's own prediction for
        # frame i sits at position i-1. Frame 0 (seed) is never replaced.
        d_ctx = d_ctx.copy()
        d_ctx[..., 1:, :] = mix_inputs(d_ctx[..., 1:, :], pred_d[..., :-1, :], p, rng)
        m_ctx = m_ctx.copy()
        m_ctx[..., 1:, :] = mix_inputs(m_ctx[..., 1:, :], pred_m[..., :-1, :], p, rng)
    # outer passes consume the mixed contexts; the inner (cycle) passes are
    # teacher-forced on the real previous frames
    m2d, m2d2m = cycle_music(models.m2d, models.d2m, item.m, d_ctx, item.m_ctx)
    d2m, d2m2d = cycle_dance(models.m2d, models.d2m, item.d, m_ctx, item.d_ctx)
    return m2d, d2m, m2d2m, d2m2d


def train_step(batch, models: ModelSet, opt_g: Adam, opt_d: Adam,
               config: TrainConfig, schedule: ScheduleState,
               rng: np.random.Generator) -> LossReport:
    """One alternating update over a list of (music, dance) clip arrays."""
    per_clip = [split_contexts(np.asarray(music), np.asarray(dance)) for music, dance in batch]
    if len(per_clip) > 1 and len({(m.shape, d.shape) for m, d, _, _ in per_clip}) == 1:
        # uniform shapes: stack into one leading batch axis, one graph
        m, d, m_ctx, d_ctx = (np.stack(part) for part in zip(*per_clip))
        items = [_Batch(m, d, m_ctx, d_ctx, fps=30.0)]
    else:
        items = [_Batch(m, d, m_ctx, d_ctx, fps=30.0) for m, d, m_ctx, d_ctx in per_clip]
    p = schedule.ratio
    n_d, n_g = config.alternation_counts

    fwd = [_forward_generators(models, it, p, rng) for it in items]

    # discriminator phase: generated sequences enter detached
    l_d_val = np.nan
    for _ in range(n_d):
        opt_d.zero_grad()
        terms = [
            loss_disc(models.disc_music, models.disc_dance, it.m, it.d,
                      m2d.detach(), d2m.detach())
            for it, (m2d, d2m, _, _) in zip(items, fwd)
        ]
        l_d = sum(terms[1:], terms[0]) / len(terms)
        l_d_val = l_d.item()
        if not np.isfinite(l_d_val):
            raise TrainingDivergedError(
                "discriminator loss is not finite",
                LossReport(np.nan, np.nan, np.nan, np.nan, l_d_val),
            )
        backward(l_d)
        opt_d.step()

    # generator phase: rec + cyc + fool against the updated discriminators
    report = None
    for k in range(n_g):
        if k > 0:
            fwd = [_forward_generators(models, it, p, rng) for it in items]
        rec_terms, cyc_terms, fool_terms = [], [], []
        for it, (m2d, d2m, m2d2m, d2m2d) in zip(items, fwd):
            rec_terms.append(loss_rec(it.m, it.d, m2d, d2m, it.fps, config.vel_weight))
            cyc_terms.append(loss_cyc(it.m, it.d, m2d2m, d2m2d, it.fps, config.vel_weight))
            fool_terms.append(loss_fool(models.disc_music, models.disc_dance,
                                        m2d, d2m, config.saturating_fool))
        l_rec = sum(rec_terms[1:], rec_terms[0]) / len(rec_terms)
        l_cyc = sum(cyc_terms[1:], cyc_terms[0]) / len(cyc_terms)
        l_fd = sum(fool_terms[1:], fool_terms[0]) / len(fool_terms)
        l_g = config.w_rec * l_rec + config.w_cyc * l_cyc + config.w_fd * l_fd
        report = LossReport(
            l_rec=l_rec.item(), l_cyc=l_cyc.item(), l_fd=l_fd.item(),
            l_g=l_rec.item() + l_cyc.item() + l_fd.item(), l_d=l_d_val,
        )
        if not report.finite():
            raise TrainingDivergedError("generator loss is not finite", report)
        opt_g.zero_grad()
        for q in models.parameters():
            q.grad = None
        backward(l_g)
        opt_g.step()

    schedule.advance()
    return report


class Trainer:
    """Epoch loop with CSV loss log and periodic checkpoints."""

    def __init__(self, models: ModelSet, config: TrainConfig, out_dir=None):
        self.models = models
        self.config = config
        self.opt_g = Adam(models.generator_parameters(), lr=config.lr_g)
        self.opt_d = Adam(models.discriminator_parameters(), lr=config.lr_d)
        self.schedule = ScheduleState(0, config.schedule_total)
        self.out_dir = Path(out_dir) if out_dir is not None else None
        self.history: list[LossReport] = []

    def fit(self, clips: list, log_name: str = "losses.csv") -> list[LossReport]:
        """clips: list of (music (T,438), dance (N,T,147)) aligned arrays."""
        if not clips:
            raise ValidationError("no clips to train on")
        rng = rng_for(self.config.seed, "train")
        log_file = None
        writer = None
        if self.out_dir is not None:
            self.out_dir.mkdir(parents=True, exist_ok=True)
            log_file = open(self.out_dir / log_name, "w", newline="")
            writer = csv.writer(log_file)
            writer.writerow(["step", "l_rec", "l_cyc", "l_fd", "l_g", "l_d", "p"])
        step = 0
        try:
            for _ in range(self.config.epochs):
                order = rng.permutation(len(clips))
                for lo in range(0, len(order), self.config.batch_size):
                    batch = [clips[i] for i in order[lo:lo + self.config.batch_size]]
                    p_now = self.schedule.ratio
                    report = train_step(batch, self.models, self.opt_g, self.opt_d,
                                        self.config, self.schedule, rng)
                    self.history.append(report)
                    step += 1
                    if writer is not None:
                        writer.writerow([step, repr(report.l_rec), repr(report.l_cyc),
                                         repr(report.l_fd), repr(report.l_g),
                                         repr(report.l_d), repr(p_now)])
                    if (self.out_dir is not None and self.config.checkpoint_every > 0
                            and step % self.config.checkpoint_every == 0):
                        self.models.save(self.out_dir / f"checkpoint_{step:06d}.gdck")
        finally:
            if log_file is not None:
                log_file.close()
        if self.out_dir is not None:
            self.models.save(self.out_dir / "checkpoint_final.gdck")
        return self.history
