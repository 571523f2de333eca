"""Pose containers, forward kinematics and kinematic helpers.

A pose is 147 values: root translation (3) followed by 24 joint rotations
in 6D form (24 * 6 = 144). Group sequences stack poses as (N, T, 147).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kernels
from .errors import ValidationError
from .rotations import sixd_to_matrix_batch
from .skeleton import NUM_JOINTS, SkeletonDef

POSE_DIM = 3 + NUM_JOINTS * 6  # 147
DEFAULT_FPS = 30.0


@dataclass
class MotionFrame:
    """One pose: root translation tau (3,) and 24 joint rotations (24, 6)."""

    tau: np.ndarray
    theta: np.ndarray

    def __post_init__(self):
        self.tau = np.asarray(self.tau, dtype=np.float64).reshape(3)
        self.theta = np.asarray(self.theta, dtype=np.float64).reshape(NUM_JOINTS, 6)
        if not (np.isfinite(self.tau).all() and np.isfinite(self.theta).all()):
            raise ValidationError("motion frame contains non-finite values")
        assert self.flatten().shape == (POSE_DIM,)

    def flatten(self) -> np.ndarray:
        return np.concatenate([self.tau, self.theta.reshape(-1)])

    @classmethod
    def from_flat(cls, vec: np.ndarray) -> "MotionFrame":
        vec = np.asarray(vec, dtype=np.float64).reshape(-1)
        if vec.shape[0] != POSE_DIM:
            raise ValidationError(f"pose vector must have length {POSE_DIM}")
        return cls(tau=vec[:3], theta=vec[3:].reshape(NUM_JOINTS, 6))


class GroupDanceSequence:
    """Poses of N dancers over T frames, (N, T, 147), plus a frame rate."""

    def __init__(self, data: np.ndarray, fps: float = DEFAULT_FPS):
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 3 or data.shape[2] != POSE_DIM:
            raise ValidationError(f"expected (N, T, {POSE_DIM}) pose data, got {data.shape}")
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError("need at least one dancer and one frame")
        if not np.isfinite(data).all():
            raise ValidationError("pose data contains non-finite values")
        if fps <= 0:
            raise ValidationError("fps must be positive")
        self.data = data
        self.fps = float(fps)

    @property
    def n_dancers(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    def root(self) -> np.ndarray:
        """Root translations, (N, T, 3)."""
        return self.data[:, :, :3]

    def rotations(self) -> np.ndarray:
        """Joint rotations in 6D form, (N, T, 24, 6)."""
        n, t, _ = self.data.shape
        return self.data[:, :, 3:].reshape(n, t, NUM_JOINTS, 6)

    def frame(self, dancer: int, t: int) -> MotionFrame:
        return MotionFrame.from_flat(self.data[dancer, t])


@dataclass
class KeypointTrajectory:
    """World-space joint positions over time, (T, 24, 3)."""

    points: np.ndarray

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64)
        if self.points.ndim != 3 or self.points.shape[1:] != (NUM_JOINTS, 3):
            raise ValidationError(f"expected (T, {NUM_JOINTS}, 3) points, got {self.points.shape}")
        if not np.isfinite(self.points).all():
            raise ValidationError("keypoints contain non-finite values")


def forward_kinematics(seq: GroupDanceSequence, skel: SkeletonDef) -> np.ndarray:
    """World joint positions for every dancer and frame, (N, T, 24, 3).

    Joint j is placed at its parent's position plus the parent's world
    rotation applied to offsets[j]; the root sits at tau.
    """
    n, t = seq.n_dancers, seq.n_frames
    rot = sixd_to_matrix_batch(seq.rotations().reshape(-1, NUM_JOINTS, 6))
    tau = np.ascontiguousarray(seq.root().reshape(-1, 3))
    pos = kernels.fk_positions(
        np.ascontiguousarray(rot), tau, skel.parents, np.ascontiguousarray(skel.offsets)
    )
    return pos.reshape(n, t, NUM_JOINTS, 3)


def keypoint_trajectories(seq: GroupDanceSequence, skel: SkeletonDef) -> list[KeypointTrajectory]:
    return [KeypointTrajectory(points=p) for p in forward_kinematics(seq, skel)]


def root_velocity(seq: GroupDanceSequence) -> np.ndarray:
    """Forward-difference root velocity in m/s, (N, T-1, 3)."""
    if seq.n_frames < 2:
        raise ValidationError("root velocity needs at least 2 frames")
    tau = seq.root()
    return (tau[:, 1:] - tau[:, :-1]) * seq.fps
