"""24-joint skeleton definition and the bundled default body.

The joint set and tree follow the standard SMPL ordering (pelvis root,
joint 0). Offsets are approximate adult proportions in meters, y-up; they
only need to produce plausible keypoint kinematics, not a renderable mesh.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError

NUM_JOINTS = 24

JOINT_NAMES = [
    "pelvis", "l_hip", "r_hip", "spine1", "l_knee", "r_knee", "spine2",
    "l_ankle", "r_ankle", "spine3", "l_toe", "r_toe", "neck", "l_collar",
    "r_collar", "head", "l_shoulder", "r_shoulder", "l_elbow", "r_elbow",
    "l_wrist", "r_wrist", "l_hand", "r_hand",
]

_PARENTS = np.array(
    [-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19, 20, 21],
    dtype=np.int32,
)

_OFFSETS = np.array([
    [0.000, 0.000, 0.000],    # pelvis
    [0.091, -0.063, 0.000],   # l_hip
    [-0.091, -0.063, 0.000],  # r_hip
    [0.000, 0.110, 0.000],    # spine1
    [0.000, -0.400, 0.000],   # l_knee
    [0.000, -0.400, 0.000],   # r_knee
    [0.000, 0.130, 0.000],    # spine2
    [0.000, -0.420, 0.000],   # l_ankle
    [0.000, -0.420, 0.000],   # r_ankle
    [0.000, 0.055, 0.000],    # spine3
    [0.000, -0.060, 0.125],   # l_toe
    [0.000, -0.060, 0.125],   # r_toe
    [0.000, 0.210, 0.000],    # neck
    [0.070, 0.115, 0.000],    # l_collar
    [-0.070, 0.115, 0.000],   # r_collar
    [0.000, 0.090, 0.000],    # head
    [0.095, 0.020, 0.000],    # l_shoulder
    [-0.095, 0.020, 0.000],   # r_shoulder
    [0.260, 0.000, 0.000],    # l_elbow
    [-0.260, 0.000, 0.000],   # r_elbow
    [0.250, 0.000, 0.000],    # l_wrist
    [-0.250, 0.000, 0.000],   # r_wrist
    [0.080, 0.000, 0.000],    # l_hand
    [-0.080, 0.000, 0.000],   # r_hand
])

# ankles + toes; used for ground-plane alignment
FOOT_JOINTS = (7, 8, 10, 11)
UP_AXIS = 1  # y


@dataclass(frozen=True)
class SkeletonDef:
    """Parent indices and rest-pose bone offsets for a 24-joint tree.

    Parents must be topologically ordered (parent[j] < j, root parent -1),
    which is what forward kinematics relies on.
    """

    parents: np.ndarray
    offsets: np.ndarray
    foot_joints: tuple = field(default=FOOT_JOINTS)

    def __post_init__(self):
        parents = np.asarray(self.parents, dtype=np.int32)
        offsets = np.asarray(self.offsets, dtype=np.float64)
        if parents.shape != (NUM_JOINTS,):
            raise ValidationError(f"expected {NUM_JOINTS} parent indices")
        if offsets.shape != (NUM_JOINTS, 3):
            raise ValidationError(f"expected ({NUM_JOINTS}, 3) offsets")
        if parents[0] != -1:
            raise ValidationError("joint 0 must be the root (parent -1)")
        if not ((parents[1:] >= 0) & (parents[1:] < np.arange(1, NUM_JOINTS))).all():
            raise ValidationError("parents must satisfy parent[j] < j for j > 0")
        if not np.isfinite(offsets).all():
            raise ValidationError("offsets must be finite")
        object.__setattr__(self, "parents", parents)
        object.__setattr__(self, "offsets", offsets)


def default_skeleton() -> SkeletonDef:
    return SkeletonDef(parents=_PARENTS.copy(), offsets=_OFFSETS.copy())
