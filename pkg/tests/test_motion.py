import numpy as np
import pytest

from groupdance.errors import ValidationError
from groupdance.motion import (
    POSE_DIM,
    GroupDanceSequence,
    MotionFrame,
    forward_kinematics,
    keypoint_trajectories,
    root_velocity,
)
from groupdance.rotations import IDENTITY_6D, matrix_to_sixd, axis_angle_to_matrix
from groupdance.skeleton import NUM_JOINTS, SkeletonDef


def rest_pose_data(n, t, tau=(0.0, 0.0, 0.0)):
    data = np.zeros((n, t, POSE_DIM))
    data[:, :, :3] = np.asarray(tau)
    data[:, :, 3:] = np.tile(IDENTITY_6D, NUM_JOINTS)
    return data


def cumulative_offsets(skel):
    out = np.zeros((NUM_JOINTS, 3))
    for j in range(1, NUM_JOINTS):
        out[j] = out[skel.parents[j]] + skel.offsets[j]
    return out


def test_motion_frame_flatten_is_147():
    frame = MotionFrame(tau=np.zeros(3), theta=np.tile(IDENTITY_6D, (NUM_JOINTS, 1)))
    assert frame.flatten().shape == (POSE_DIM,)
    back = MotionFrame.from_flat(frame.flatten())
    np.testing.assert_allclose(back.theta, frame.theta)


def test_sequence_validation():
    with pytest.raises(ValidationError):
        GroupDanceSequence(np.zeros((1, 1, 140)))
    with pytest.raises(ValidationError):
        GroupDanceSequence(np.full((1, 1, POSE_DIM), np.nan))
    base = rest_pose_data(1, 1)
    with pytest.raises(ValidationError):
        GroupDanceSequence(base, fps=0.0)


def test_fk_rest_pose_equals_cumulative_offsets(skel):
    seq = GroupDanceSequence(rest_pose_data(2, 3))
    pos = forward_kinematics(seq, skel)
    expected = cumulative_offsets(skel)
    for n in range(2):
        for t in range(3):
            np.testing.assert_allclose(pos[n, t], expected, atol=1e-12)


def test_fk_translation_equivariance(skel, rng):
    data = rest_pose_data(1, 2)
    rot = data[:, :, 3:].reshape(1, 2, NUM_JOINTS, 6)
    rot += rng.normal(scale=0.1, size=rot.shape)
    base = forward_kinematics(GroupDanceSequence(data), skel)
    shift = np.array([1.0, 2.0, 3.0])
    shifted = data.copy()
    shifted[:, :, :3] += shift
    moved = forward_kinematics(GroupDanceSequence(shifted), skel)
    np.testing.assert_allclose(moved, base + shift, atol=1e-12)


def test_fk_two_joint_chain_hand_computed():
    # root rotated 90 degrees about z: child offset (1,0,0) maps to (0,1,0)
    parents = np.full(NUM_JOINTS, -1, dtype=np.int32)
    parents[0] = -1
    parents[1:] = np.arange(NUM_JOINTS - 1)
    offsets = np.zeros((NUM_JOINTS, 3))
    offsets[1] = [1.0, 0.0, 0.0]
    skel = SkeletonDef(parents=parents, offsets=offsets)
    data = rest_pose_data(1, 1, tau=(0.5, 0.5, 0.0))
    rz = axis_angle_to_matrix(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    data[0, 0, 3:9] = matrix_to_sixd(rz)
    pos = forward_kinematics(GroupDanceSequence(data), skel)
    np.testing.assert_allclose(pos[0, 0, 0], [0.5, 0.5, 0.0], atol=1e-12)
    np.testing.assert_allclose(pos[0, 0, 1], [0.5, 1.5, 0.0], atol=1e-12)


def test_keypoint_trajectories_shape(skel):
    seq = GroupDanceSequence(rest_pose_data(3, 4))
    trajs = keypoint_trajectories(seq, skel)
    assert len(trajs) == 3
    assert trajs[0].points.shape == (4, NUM_JOINTS, 3)


def test_root_velocity_constant_translation_is_zero():
    seq = GroupDanceSequence(rest_pose_data(2, 5, tau=(1.0, 2.0, 3.0)))
    np.testing.assert_allclose(root_velocity(seq), 0.0)


def test_root_velocity_linear_motion_analytic():
    data = rest_pose_data(1, 31)
    data[0, :, 0] = np.arange(31) / 30.0  # x advances 1/30 m per frame at 30 fps
    vel = root_velocity(GroupDanceSequence(data, fps=30.0))
    np.testing.assert_allclose(vel[..., 0], 1.0, atol=1e-9)
    np.testing.assert_allclose(vel[..., 1:], 0.0, atol=1e-12)


def test_root_velocity_time_reversal_negates():
    data = rest_pose_data(1, 6)
    data[0, :, :3] = np.random.default_rng(3).normal(size=(6, 3))
    fwd = root_velocity(GroupDanceSequence(data))
    rev = root_velocity(GroupDanceSequence(data[:, ::-1]))
    np.testing.assert_allclose(rev, -fwd[:, ::-1], atol=1e-12)


def test_root_velocity_needs_two_frames():
    with pytest.raises(ValidationError):
        root_velocity(GroupDanceSequence(rest_pose_data(1, 1)))
