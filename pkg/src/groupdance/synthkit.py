"""Synthetic paired music/dance clips with analytically known beats.

Click "music" lives directly in feature space (no audio involved): the
beat channel fires every `period` frames and the tempogram block carries a
deterministic tempo signature. Beat-locked dance drives every joint with a
half-period cosine so all joint velocities vanish exactly on beat frames,
giving kinematic beats at known integer positions.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import formats
from .audio import FEATURE_DIM, LAYOUT, FRAME_RATE, MusicFeatureSequence
from .errors import ValidationError
from .motion import POSE_DIM, GroupDanceSequence
from .rotations import axis_angle_to_matrix, matrix_to_sixd
from .seeding import rng_for
from .skeleton import NUM_JOINTS, SkeletonDef, default_skeleton

_AXES = np.array([[0.0, 0.0, 1.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]])


@dataclass
class SynthSpec:
    bpm: float
    duration_s: float
    n_dancers: int = 2
    amplitude: float = 0.3
    phase_offsets: tuple = field(default=())  # frames, one per dancer
    seed: int = 0

    def __post_init__(self):
        if self.bpm <= 0 or self.duration_s <= 0:
            raise ValidationError("bpm and duration must be positive")
        if self.n_dancers < 1:
            raise ValidationError("need at least one dancer")
        if self.period < 2:
            raise ValidationError(f"bpm {self.bpm} gives a beat period under 2 frames")
        if self.phase_offsets and len(self.phase_offsets) != self.n_dancers:
            raise ValidationError("need one phase offset per dancer")

    @property
    def period(self) -> int:
        """Beat spacing in frames at 30 fps."""
        return int(round(60.0 * FRAME_RATE / self.bpm))

    @property
    def n_frames(self) -> int:
        return int(round(self.duration_s * FRAME_RATE))

    def offsets(self) -> np.ndarray:
        if self.phase_offsets:
            return np.asarray(self.phase_offsets, dtype=np.int64)
        return np.zeros(self.n_dancers, dtype=np.int64)


def beat_frames(spec: SynthSpec) -> np.ndarray:
    """The constructed beat grid: 0, period, 2*period, ..."""
    return np.arange(0, spec.n_frames, spec.period, dtype=np.int64)


def tempo_class_amplitude(class_index: int, n_classes: int,
                          lo: float = 0.08, ratio: float = 6.0) -> float:
    """Motion amplitude for a tempo class, geometrically spaced.

    Faster classes swing wider; the geometric ladder keeps adjacent classes
    separable from pooled pose statistics, which the retrieval oracle
    relies on.
    """
    if n_classes < 2:
        return lo
    return lo * ratio ** (class_index / (n_classes - 1))


def _smooth_noise(rng: np.random.Generator, t: int, width: int, scale: float) -> np.ndarray:
    raw = rng.normal(0.0, scale, size=(t + 4, width))
    kernel = np.ones(5) / 5.0
    out = np.empty((t, width))
    for c in range(width):
        out[:, c] = np.convolve(raw[:, c], kernel, mode="valid")
    return out


def make_click_music(spec: SynthSpec) -> MusicFeatureSequence:
    """Deterministic click-track features with a tempo-coded tempogram."""
    t, period = spec.n_frames, spec.period
    rng = rng_for(spec.seed, "click", spec.bpm, t)
    feats = np.zeros((t, FEATURE_DIM))

    beats = beat_frames(spec)
    onehot = np.zeros(t)
    onehot[beats] = 1.0
    frames = np.arange(t)
    since_beat = np.mod(frames, period)
    onset = np.exp(-since_beat / 2.0)

    # static tempo bump across the lag axis + a period-locked wave
    width = LAYOUT.width("tempogram")
    lag = np.arange(width)
    center = (spec.bpm - 40.0) / 180.0 * (width - 1)
    bump = np.exp(-0.5 * ((lag - center) / 6.0) ** 2)
    wave = 0.3 * np.cos(2.0 * np.pi * (frames[:, None] / period + lag[None, :] / width))
    feats[:, LAYOUT.slice("tempogram")] = bump[None, :] + wave

    feats[:, LAYOUT.slice("mfcc")] = _smooth_noise(rng, t, 20, 0.5)
    feats[:, LAYOUT.slice("mfcc_delta")] = _smooth_noise(rng, t, 20, 0.2)
    feats[:, LAYOUT.slice("chroma")] = np.abs(_smooth_noise(rng, t, 12, 0.3))
    feats[:, LAYOUT.slice("onset_env")] = onset[:, None]
    feats[:, LAYOUT.slice("beat_onehot")] = onehot[:, None]
    return MusicFeatureSequence(feats)


def make_beat_locked_dance(spec: SynthSpec, skel: SkeletonDef | None = None) -> GroupDanceSequence:
    """Group motion whose joint-speed minima land exactly on beat frames.

    Every joint angle follows amplitude * cos(pi (t - phase) / period), so
    angular (and hence keypoint) velocities are zero at t = phase + k*period.
    Dancers stand in a line, one meter apart, with a small body bob that
    shares the same phase.
    """
    if skel is None:
        skel = default_skeleton()
    t, period = spec.n_frames, spec.period
    rng = rng_for(spec.seed, "dance", spec.bpm, t)
    offsets = spec.offsets()
    frames = np.arange(t)

    # fixed per-joint swing weights; root-adjacent joints move least
    weights = 0.4 + 0.6 * rng.random(NUM_JOINTS)
    weights[0] = 0.2
    data = np.empty((spec.n_dancers, t, POSE_DIM))
    for i in range(spec.n_dancers):
        phase = float(offsets[i])
        osc = np.cos(np.pi * (frames - phase) / period)  # (T,)
        angles = spec.amplitude * weights[None, :] * osc[:, None]  # (T, J)
        axes = _AXES[np.arange(NUM_JOINTS) % 3]
        mats = axis_angle_to_matrix(axes[None, :, :].repeat(t, axis=0), angles)
        theta = matrix_to_sixd(mats)  # (T, J, 6)
        tau = np.zeros((t, 3))
        tau[:, 0] = 1.0 * i + 0.05 * spec.amplitude * osc
        tau[:, 1] = 0.9 + 0.03 * spec.amplitude * osc
        data[i, :, :3] = tau
        data[i, :, 3:] = theta.reshape(t, -1)
    return GroupDanceSequence(data, fps=FRAME_RATE)


def make_paired_dataset(n_pairs: int, out_dir, seed: int = 0,
                        bpm_choices: tuple = (60, 75, 90, 105, 120, 135, 150, 165),
                        duration_s: float = 4.0, n_dancers: int = 2) -> dict:
    """Write n matched (MFTR, GDNC) files cycling through the tempo classes.

    The tempo class is recoverable from both modalities: the music carries a
    static tempogram bump and the dance amplitude grows with the class
    index. Returns the manifest dict (also written as manifest.json).
    """
    if n_pairs < 1:
        raise ValidationError("need at least one pair")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    classes = list(bpm_choices)
    clips = []
    for i in range(n_pairs):
        cls = i % len(classes)
        bpm = classes[cls]
        amplitude = tempo_class_amplitude(cls, len(classes))
        spec = SynthSpec(bpm=bpm, duration_s=duration_s, n_dancers=n_dancers,
                         amplitude=amplitude, seed=int(rng_for(seed, "pair", i).integers(2**31)))
        music = make_click_music(spec)
        dance = make_beat_locked_dance(spec)
        clip_id = f"pair_{i:04d}"
        music_path = out_dir / f"{clip_id}.mftr"
        motion_path = out_dir / f"{clip_id}.gdnc"
        formats.save_mftr(music_path, music)
        formats.save_gdnc(motion_path, dance,
                          sidecar={"name": clip_id, "genre": f"tempo{bpm}", "source": "synth"})
        clips.append({
            "id": clip_id,
            "music": music_path.name,
            "motion": motion_path.name,
            "genre": f"tempo{bpm}",
            "tempo_class": cls,
            "bpm": float(bpm),
            "duration_s": float(duration_s),
            "n_dancers": int(n_dancers),
            "split": "",
        })
    manifest = {"version": 1, "seed": int(seed), "fps": FRAME_RATE, "clips": clips}
    with open(out_dir / "manifest.json", "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")
    return manifest
