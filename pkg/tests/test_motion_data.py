"""Skeleton, BVH, feature-transform and contact-labeling contracts."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import TWO_JOINT_BVH, random_poses, rotate_clip_y
from mogan.bvh import BvhError, parse_bvh, write_bvh
from mogan.contacts import foot_skate, label_contacts
from mogan.features import (GroundTransform, accumulate_transform,
                            end_effector_trajectory, feature_to_pose,
                            features_from_poses, inject_noise,
                            pose_pair_to_feature, poses_from_features,
                            wrap_angle, yaw_matrix_2d)
from mogan.skeleton import (MotionClip, downsample, fk_positions,
                            forward_kinematics, reference_skeleton)
from mogan.synthgait import GaitParams, walking_clip

RNG = np.random.default_rng


class TestBvh:
    def test_two_joint_zero_frame(self):
        skel, clip = parse_bvh(TWO_JOINT_BVH)
        assert [j.name for j in skel.joints] == ["root", "child"]
        assert np.allclose(skel.joints[1].offset, [0.0, -0.5, 0.1])
        assert np.array_equal(clip.frames, np.zeros((1, 9)))

    def test_frame_count_mismatch(self):
        bad = TWO_JOINT_BVH.replace("Frames: 1", "Frames: 10")
        with pytest.raises(BvhError, match="line"):
            parse_bvh(bad)

    def test_write_then_read_roundtrip(self):
        skel = reference_skeleton()
        frames = random_poses(RNG(0), 25)
        clip = MotionClip(skel, 30.0, frames)
        skel2, clip2 = parse_bvh(write_bvh(skel, clip))
        assert [j.name for j in skel2.joints] == [j.name for j in skel.joints]
        assert np.abs(clip2.frames - clip.frames).max() < 1e-6

    def test_unsupported_channel_layout(self):
        bad = TWO_JOINT_BVH.replace(
            "CHANNELS 3 Yrotation Xrotation Zrotation",
            "CHANNELS 3 Xposition Xrotation Zrotation")
        with pytest.raises(BvhError, match="rotation channels"):
            parse_bvh(bad)

    def test_degrees_are_converted(self):
        text = TWO_JOINT_BVH.replace("0 0 0 0 0 0 0 0 0",
                                     "1 2 3 90 0 0 0 0 0")
        _, clip = parse_bvh(text)
        assert np.isclose(clip.frames[0, 4], np.pi / 2)   # root Yrotation
        assert np.allclose(clip.frames[0, :3], [1, 2, 3])


class TestDownsample:
    def test_120_to_30(self):
        clip = MotionClip(reference_skeleton(), 120.0,
                          random_poses(RNG(1), 400))
        out = downsample(clip, 4)
        assert out.frame_rate == 30.0
        assert out.n_frames == 100

    def test_identity(self):
        clip = MotionClip(reference_skeleton(), 30.0, random_poses(RNG(2), 10))
        out = downsample(clip, 1)
        assert np.array_equal(out.frames, clip.frames)

    def test_stride_indexing(self):
        frames = random_poses(RNG(3), 10)
        clip = MotionClip(reference_skeleton(), 30.0, frames)
        out = downsample(clip, 3)
        assert np.array_equal(out.frames, frames[[0, 3, 6, 9]])

    def test_factor_too_large(self):
        clip = MotionClip(reference_skeleton(), 30.0, random_poses(RNG(4), 5))
        with pytest.raises(ValueError):
            downsample(clip, 5)


class TestFeatures:
    def test_identical_poses_zero_deltas(self):
        q = random_poses(RNG(5), 1)[0]
        x = pose_pair_to_feature(q, q)
        assert x[0] == x[1] == x[2] == 0.0
        assert np.array_equal(x[6:], q[6:])

    def test_zero_yaw_displacement(self):
        q0 = np.zeros(60)
        q1 = np.zeros(60)
        q1[0] = 1.0     # world +x
        x = pose_pair_to_feature(q0, q1)
        assert np.allclose([x[0], x[1]], [1.0, 0.0])

    def test_quarter_turn_displacement_matches_matrix_oracle(self):
        # previous yaw pi/2, world displacement (1, 0) in (x, z)
        q0 = np.zeros(60)
        q0[4] = np.pi / 2
        q1 = q0.copy()
        q1[0] = 1.0
        x = pose_pair_to_feature(q0, q1)
        oracle = yaw_matrix_2d(-np.pi / 2) @ np.array([1.0, 0.0])
        assert np.allclose([x[0], x[1]], oracle)
        assert np.allclose(oracle, [0.0, 1.0])

    def test_roundtrip_single(self):
        rng = RNG(6)
        frames = random_poses(rng, 2)
        x = pose_pair_to_feature(frames[0], frames[1])
        pose, _ = feature_to_pose(GroundTransform.from_pose(frames[0]), x)
        assert np.abs(pose - frames[1]).max() < 1e-9

    @given(st.integers(0, 2 ** 32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_roundtrip_property(self, seed):
        frames = random_poses(RNG(seed), 2)
        x = pose_pair_to_feature(frames[0], frames[1])
        pose, _ = feature_to_pose(GroundTransform.from_pose(frames[0]), x)
        assert np.abs(pose - frames[1]).max() < 1e-9

    def test_chain_roundtrip_walking(self):
        clip = walking_clip(50)
        feats = features_from_poses(clip.frames)
        back = poses_from_features(clip.frames[0], feats)
        assert np.abs(back - clip.frames).max() < 1e-6

    def test_rotation_invariance(self):
        frames = random_poses(RNG(7), 30)
        feats = features_from_poses(frames)
        for phi in (0.3, -2.0, np.pi):
            rot = rotate_clip_y(frames, phi)
            assert np.abs(features_from_poses(rot) - feats).max() < 1e-9

    def test_translation_invariance(self):
        frames = random_poses(RNG(8), 30)
        feats = features_from_poses(frames)
        moved = frames.copy()
        moved[:, 0] += 4.2
        moved[:, 2] -= 7.7
        assert np.abs(features_from_poses(moved) - feats).max() < 1e-9

    def test_wrap_angle_range(self):
        vals = wrap_angle(np.array([np.pi, -np.pi, 3.5 * np.pi, 0.0]))
        assert np.all(vals <= np.pi) and np.all(vals > -np.pi)
        assert vals[0] == np.pi and vals[1] == np.pi


class TestGroundTransform:
    def test_identity_zero_feature(self):
        t = GroundTransform.identity()
        out = accumulate_transform(t, np.zeros(60))
        assert np.array_equal(out.matrix, np.eye(4))

    def test_two_quarter_turns(self):
        t = GroundTransform.identity()
        f = np.zeros(60)
        f[2] = np.pi / 2
        t = accumulate_transform(accumulate_transform(t, f), f)
        assert np.isclose(t.yaw, np.pi)

    def test_chain_matches_dense_matrix_oracle(self):
        rng = RNG(9)
        t = GroundTransform.identity()
        oracle = np.eye(4)
        for _ in range(20):
            f = np.zeros(60)
            f[0], f[1], f[2] = rng.normal(0, 0.5, 3)
            t = accumulate_transform(t, f)
            local = np.eye(4)
            c, s = np.cos(f[2]), np.sin(f[2])
            local[0, 0] = local[2, 2] = c
            local[0, 2] = s
            local[2, 0] = -s
            local[0, 3] = f[0]
            local[2, 3] = f[1]
            oracle = oracle @ local
        assert np.abs(t.matrix - oracle).max() < 1e-12

    def test_invariants_after_chain(self):
        rng = RNG(10)
        t = GroundTransform.identity()
        for _ in range(50):
            f = np.zeros(60)
            f[0], f[1], f[2] = rng.normal(0, 1.0, 3)
            t = accumulate_transform(t, f)
        r = t.matrix[:3, :3]
        assert np.abs(r @ r.T - np.eye(3)).max() < 1e-12
        assert np.isclose(np.linalg.det(r), 1.0)
        assert t.matrix[1, 3] == 0.0
        assert np.array_equal(t.matrix[3], [0, 0, 0, 1])
        assert np.isclose(wrap_angle(t.yaw),
                          np.arctan2(t.matrix[0, 2], t.matrix[0, 0]))


class TestForwardKinematics:
    def test_zero_pose_offsets_sum(self):
        skel = reference_skeleton()
        pos = forward_kinematics(skel, np.zeros(skel.dof))
        # toe = femur + tibia + foot + toe offsets
        expect = (skel.joints[11].offset + skel.joints[12].offset
                  + skel.joints[13].offset + skel.joints[14].offset)
        assert np.allclose(pos[14], expect)

    def test_root_translation_shifts_all(self):
        skel = reference_skeleton()
        rng = RNG(11)
        pose = random_poses(rng, 1)[0]
        v = np.array([1.5, -0.3, 2.0])
        moved = pose.copy()
        moved[:3] += v
        assert np.allclose(fk_positions(skel, moved),
                           fk_positions(skel, pose) + v)

    def test_single_axis_rotation_oracle(self):
        skel = reference_skeleton()
        pose = np.zeros(skel.dof)
        # rotate the left femur 90 degrees about x; the tibia offset
        # (0, -l, 0) maps to (0, 0, -l)
        pose[skel.angle_slice(11).start] = np.pi / 2
        pos = fk_positions(skel, pose)
        hip = skel.joints[11].offset
        assert np.allclose(pos[12], hip + [0.0, 0.0, -0.40])

    def test_locality(self):
        skel = reference_skeleton()
        rng = RNG(12)
        pose = random_poses(rng, 1)[0]
        moved = pose.copy()
        moved[skel.angle_slice(11).start] += 0.7   # left femur
        a, b = fk_positions(skel, pose), fk_positions(skel, moved)
        descendants = {11, 12, 13, 14}
        for j in range(skel.n_joints):
            if j in descendants - {11}:
                assert not np.allclose(a[j], b[j])
            elif j not in descendants:
                assert np.allclose(a[j], b[j])


class TestEndEffectors:
    def test_static_zero_velocity(self):
        skel = reference_skeleton()
        feats = np.tile(random_poses(RNG(13), 1)[0], (6, 1))
        _, v = end_effector_trajectory(skel, feats, 30.0)
        assert np.abs(v).max() == 0.0

    def test_uniform_translation_is_local_static(self):
        clip = walking_clip(30, GaitParams(arm_swing=0.0))
        feats = features_from_poses(clip.frames)
        # freeze limbs: constant angles, keep root motion
        feats[:, 6:] = feats[0, 6:]
        feats[:, 3] = feats[0, 3]
        feats[:, 4] = feats[0, 4]
        feats[:, 5] = feats[0, 5]
        p, v = end_effector_trajectory(clip.skeleton, feats, 30.0)
        assert np.abs(p - p[0]).max() < 1e-12
        assert np.abs(v).max() < 1e-9

    def test_sinusoid_matches_analytic_derivative(self):
        skel = reference_skeleton()
        fps = 30.0
        t = np.arange(40) / fps
        omega = 2.0
        feats = np.zeros((40, skel.dof))
        col = skel.angle_slice(4).start   # left humerus x channel
        feats[:, col] = 0.5 * np.sin(omega * t)
        p, v = end_effector_trajectory(skel, feats, fps)
        # compare measured hand speed to the analytic chain-rule speed
        arm = 0.51    # radius + hand offsets below the humerus
        analytic = np.abs(0.5 * omega * np.cos(omega * t[1:-1])) * arm
        measured = np.linalg.norm(
            (p[2:, 0:3] - p[:-2, 0:3]) * fps / 2.0, axis=1)[: len(analytic)]
        assert np.abs(measured - analytic).max() < 0.02


class TestContacts:
    def test_pinned_toe_always_contact(self):
        skel = reference_skeleton()
        pose = np.zeros(skel.dof)
        pose[1] = 0.88   # zero pose puts toes exactly at y = 0
        frames = np.tile(pose, (10, 1))
        clip = MotionClip(skel, 30.0, frames)
        labels = label_contacts(clip)
        assert np.all(labels == 1.0)

    def test_high_toe_never_contact(self):
        skel = reference_skeleton()
        pose = np.zeros(skel.dof)
        pose[1] = 1.18   # toes 0.3 m above ground
        clip = MotionClip(skel, 30.0, np.tile(pose, (10, 1)))
        assert np.all(label_contacts(clip) == 0.0)

    def test_scripted_gait_agreement(self):
        clip = walking_clip(160)
        labels = label_contacts(clip)
        assert (labels == clip.contacts).mean() >= 0.95

    def test_missing_toes_error(self):
        from mogan.skeleton import Joint, Skeleton

        skel = Skeleton([Joint("root", -1, [0, 0, 0]),
                         Joint("spine", 0, [0, 0.5, 0])])
        clip = MotionClip(skel, 30.0, np.zeros((3, skel.dof)))
        with pytest.raises(ValueError, match="toe"):
            label_contacts(clip)

    def test_scripted_gait_has_low_skate(self):
        assert foot_skate(walking_clip(120)) < 0.05


class TestInjectNoise:
    def test_zero_sigma_identity(self):
        feats = random_poses(RNG(14), 20)
        out = inject_noise(feats, 0.0, RNG(0))
        assert np.array_equal(out, feats)

    def test_statistics(self):
        feats = np.zeros((20000, 5))
        out = inject_noise(feats, 0.05, RNG(15))
        std = out.std(axis=0)
        assert np.all(np.abs(std - 0.05) < 0.001)

    def test_deterministic_given_seed(self):
        feats = random_poses(RNG(16), 10)
        a = inject_noise(feats, 0.05, RNG(99))
        b = inject_noise(feats, 0.05, RNG(99))
        assert np.array_equal(a, b)
