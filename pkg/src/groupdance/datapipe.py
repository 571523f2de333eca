"""Automated motion preprocessing: smoothing, grounding, anomaly handling,
manifests and splits.

The repair path mirrors what used to be manual cleanup: flagged frames are
re-filled by cubic Hermite interpolation when the gap is short, and clips
are cut apart at longer gaps.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.signal
from scipy.interpolate import CubicHermiteSpline

from .errors import FormatError, ValidationError
from .motion import NUM_JOINTS, GroupDanceSequence, forward_kinematics
from .rotations import matrix_to_sixd, sixd_to_matrix_batch
from .seeding import rng_for
from .skeleton import UP_AXIS, SkeletonDef


@dataclass
class RawPoseTrack:
    """Per-dancer translations and rotations straight out of pose estimation.

    Rotations may arrive as matrices (N, T, J, 3, 3) or 6D (N, T, J, 6);
    they are normalized to 6D on construction.
    """

    tau: np.ndarray
    rotations: np.ndarray
    fps: float = 30.0
    source_id: str = ""

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=np.float64)
        rot = np.asarray(self.rotations, dtype=np.float64)
        if self.tau.ndim != 3 or self.tau.shape[-1] != 3:
            raise ValidationError("tau must be (N, T, 3)")
        if rot.shape[-2:] == (3, 3):
            rot = matrix_to_sixd(rot)
        if rot.shape != self.tau.shape[:2] + (NUM_JOINTS, 6):
            raise ValidationError(f"rotations must be (N, T, {NUM_JOINTS}, 6) or (.., 3, 3)")
        if not (np.isfinite(self.tau).all() and np.isfinite(rot).all()):
            raise ValidationError("raw track contains non-finite values")
        self.rotations = rot

    def to_sequence(self) -> GroupDanceSequence:
        n, t = self.tau.shape[:2]
        data = np.concatenate([self.tau, self.rotations.reshape(n, t, -1)], axis=-1)
        return GroupDanceSequence(data, fps=self.fps)


@dataclass
class AnomalyFlag:
    dancer: int
    frame: int
    signal: str  # "velocity" | "acceleration"
    magnitude: float


@dataclass
class AnomalyReport:
    n_frames: int
    flags: list = field(default_factory=list)

    def frames_for(self, dancer: int) -> np.ndarray:
        return np.unique([f.frame for f in self.flags if f.dancer == dancer])

    def __len__(self):
        return len(self.flags)


def exp_smooth(signal: np.ndarray, alpha: float) -> np.ndarray:
    """First-order exponential smoothing along axis 0, y0 = x0."""
    if not 0.0 < alpha <= 1.0:
        raise ValidationError("alpha must lie in (0, 1]")
    signal = np.asarray(signal, dtype=np.float64)
    if signal.shape[0] < 1:
        raise ValidationError("empty signal")
    if alpha == 1.0:
        return signal.copy()
    flat = signal.reshape(signal.shape[0], -1)
    zi = (1.0 - alpha) * flat[0]
    out, _ = scipy.signal.lfilter([alpha], [1.0, -(1.0 - alpha)], flat, axis=0, zi=zi[None, :])
    return out.reshape(signal.shape)


def smooth_rotations(rot6: np.ndarray, alpha: float = 0.9) -> np.ndarray:
    """Exponentially smooth 6D rotations over time, then re-orthonormalize.

    rot6: (..., T, J, 6) with time on axis -3. Frames that degenerate after
    smoothing are replaced by their predecessor (first frame: successor).
    """
    rot6 = np.asarray(rot6, dtype=np.float64)
    lead = rot6.shape[:-3]
    t = rot6.shape[-3]
    flat = rot6.reshape(-1, t, NUM_JOINTS, 6)
    out = np.empty_like(flat)
    for i in range(flat.shape[0]):
        sm = exp_smooth(flat[i].reshape(t, -1), alpha).reshape(t, NUM_JOINTS, 6)
        for f in range(t):
            try:
                mats = sixd_to_matrix_batch(sm[f])
            except ValidationError:
                src = f - 1 if f > 0 else 1
                sm[f] = sm[src] if 0 <= src < t else sm[f]
                mats = sixd_to_matrix_batch(sm[f])
            out[i, f] = matrix_to_sixd(mats)
    return out.reshape(lead + (t, NUM_JOINTS, 6))


def smooth_track(track: RawPoseTrack, alpha_tau: float = 0.8, alpha_rot: float = 0.9) -> RawPoseTrack:
    """Smooth translations directly and rotations in 6D space."""
    tau = np.stack([exp_smooth(track.tau[i], alpha_tau) for i in range(track.tau.shape[0])])
    rot = smooth_rotations(track.rotations, alpha_rot)
    return RawPoseTrack(tau=tau, rotations=rot, fps=track.fps, source_id=track.source_id)


def ground_plane_align(clip: GroupDanceSequence, skel: SkeletonDef) -> GroupDanceSequence:
    """Shift the clip vertically so its lowest foot joint touches height 0.

    Only the vertical root channel changes; idempotent.
    """
    points = forward_kinematics(clip, skel)
    feet = points[:, :, list(skel.foot_joints), UP_AXIS]
    shift = feet.min()
    data = clip.data.copy()
    data[:, :, UP_AXIS] -= shift
    return GroupDanceSequence(data, fps=clip.fps)


def detect_anomalies(clip: GroupDanceSequence, skel: SkeletonDef,
                     vel_thresh: float = 10.0, acc_thresh: float = 100.0) -> AnomalyReport:
    """Flag frames whose joint speed or acceleration exceeds the thresholds.

    Speeds use forward differences (flag lands on the later frame);
    accelerations use second differences (flag on the center frame).
    """
    if clip.n_frames < 3:
        raise ValidationError("anomaly detection needs at least 3 frames")
    points = forward_kinematics(clip, skel)
    report = AnomalyReport(n_frames=clip.n_frames)
    vel = np.linalg.norm(np.diff(points, axis=1) * clip.fps, axis=-1).max(axis=-1)
    acc = np.linalg.norm(np.diff(points, 2, axis=1) * clip.fps**2, axis=-1).max(axis=-1)
    for dancer, frame in zip(*np.nonzero(vel > vel_thresh)):
        report.flags.append(AnomalyFlag(int(dancer), int(frame) + 1, "velocity", float(vel[dancer, frame])))
    for dancer, frame in zip(*np.nonzero(acc > acc_thresh)):
        report.flags.append(AnomalyFlag(int(dancer), int(frame) + 1, "acceleration", float(acc[dancer, frame])))
    return report


def _gap_runs(frames: np.ndarray) -> list[tuple[int, int]]:
    """Consecutive runs [start, end] in a sorted unique frame array."""
    if frames.size == 0:
        return []
    runs = []
    start = prev = int(frames[0])
    for f in frames[1:]:
        if f == prev + 1:
            prev = int(f)
        else:
            runs.append((start, prev))
            start = prev = int(f)
    runs.append((start, prev))
    return runs


def repair_anomalies(clip: GroupDanceSequence, report: AnomalyReport, skel: SkeletonDef,
                     max_gap: int = 15) -> list[GroupDanceSequence]:
    """Hermite-interpolate flagged gaps; cut the clip apart at longer ones.

    Flagged frames touching a clip boundary cannot be interpolated and also
    force a cut. Rotations are re-orthonormalized after interpolation.
    Returns the surviving segments in time order (possibly just the input).
    """
    t = clip.n_frames
    bad = np.zeros(t, dtype=bool)
    for flag in report.flags:
        bad[flag.frame] = True
    if not bad.any():
        return [clip]

    cut = np.zeros(t, dtype=bool)
    data = clip.data.copy()
    for start, end in _gap_runs(np.flatnonzero(bad)):
        if end - start + 1 > max_gap or start == 0 or end == t - 1:
            cut[start:end + 1] = True
            continue
        left, right = start - 1, end + 1
        xs = np.array([left, right], dtype=np.float64)
        ys = data[:, [left, right], :]
        # one-sided slope estimates on each side of the gap
        dl = data[:, left] - data[:, left - 1] if left > 0 else ys[:, 1] - ys[:, 0]
        dr = data[:, right + 1] - data[:, right] if right < t - 1 else ys[:, 1] - ys[:, 0]
        slopes = np.stack([dl, dr], axis=1)
        spline = CubicHermiteSpline(xs, ys, slopes, axis=1)
        filled = spline(np.arange(start, end + 1, dtype=np.float64))
        data[:, start:end + 1, :] = filled
        # project interpolated rotations back onto valid 6D rotations
        seg = data[:, start:end + 1, 3:].reshape(-1, 6)
        data[:, start:end + 1, 3:] = matrix_to_sixd(sixd_to_matrix_batch(seg)).reshape(
            clip.n_dancers, end - start + 1, -1)

    segments = []
    for start, end in _gap_runs(np.flatnonzero(~cut)):
        if end - start + 1 >= 3:
            segments.append(GroupDanceSequence(data[:, start:end + 1].copy(), fps=clip.fps))
    return segments


# -- manifests and splits ---------------------------------------------------------


def load_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path) as f:
        manifest = json.load(f)
    if not isinstance(manifest, dict) or "clips" not in manifest:
        raise FormatError(f"{path}: not a dataset manifest")
    return manifest


def save_manifest(manifest: dict, path):
    with open(path, "w") as f:
        json.dump(manifest, f, sort_keys=True, indent=2)
        f.write("\n")


def make_split(manifest: dict, fractions: dict[str, float], seed: int) -> dict:
    """Assign whole clips to splits by a seeded shuffle.

    Fractions must sum to 1; counts are fixed by largest-remainder rounding
    so e.g. 100 clips at 0.85/0.15 give exactly 85 and 15.
    """
    names = list(fractions)
    fracs = np.array([fractions[k] for k in names], dtype=np.float64)
    if abs(fracs.sum() - 1.0) > 1e-9 or (fracs < 0).any():
        raise ValidationError("split fractions must be non-negative and sum to 1")
    clips = manifest["clips"]
    if not clips:
        raise ValidationError("cannot split an empty manifest")
    n = len(clips)
    bounds = np.round(np.cumsum(fracs) * n).astype(int)
    counts = np.diff(np.concatenate([[0], bounds]))
    order = rng_for(seed, "split").permutation(n)
    out = {**manifest, "seed": int(seed), "clips": [dict(c) for c in clips]}
    pos = 0
    for name, count in zip(names, counts):
        for i in order[pos:pos + count]:
            out["clips"][int(i)]["split"] = name
        pos += count
    return out


def load_pairs(manifest: dict, base_dir, split: str | None = None) -> list:
    """Load (clip_id, MusicFeatureSequence, GroupDanceSequence) per clip."""
    from . import formats

    base = Path(base_dir)
    out = []
    for clip in manifest["clips"]:
        if split is not None and clip.get("split") != split:
            continue
        music = formats.load_mftr(base / clip["music"])
        dance = formats.load_gdnc(base / clip["motion"])
        if music.n_frames != dance.n_frames:
            raise FormatError(f"clip {clip['id']}: music and motion disagree on length")
        out.append((clip["id"], music, dance))
    return out


def preprocess_clip(clip: GroupDanceSequence, skel: SkeletonDef,
                    alpha_tau: float = 0.8, alpha_rot: float = 0.9,
                    vel_thresh: float = 10.0, acc_thresh: float = 100.0,
                    max_gap: int = 15) -> tuple[list[GroupDanceSequence], AnomalyReport]:
    """Smooth, repair/cut around anomalies, then ground each segment."""
    n, t = clip.n_dancers, clip.n_frames
    track = RawPoseTrack(tau=clip.root().copy(),
                         rotations=clip.rotations().copy(), fps=clip.fps)
    smoothed = smooth_track(track, alpha_tau, alpha_rot).to_sequence()
    report = detect_anomalies(smoothed, skel, vel_thresh, acc_thresh)
    segments = repair_anomalies(smoothed, report, skel, max_gap)
    return [ground_plane_align(seg, skel) for seg in segments], report
