"""Kinematics oracles: independent homogeneous-matrix FK, FD Jacobians, IK round-trips.

The FK oracle builds 4x4 transforms with scipy's Rotation (a code path the
implementation never touches) and multiplies them out explicitly.
"""
from __future__ import annotations

import math

import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from seqplace.geometry import Pose
from seqplace.robot import (
    GraspSpec,
    fk,
    fk_batch,
    grasp_pose,
    ik_solve_batch,
    inverse_grasp,
    jacobian,
    planar_arm,
    spatial_arm_7dof,
    yaw_jacobian,
)
from conftest import central_diff, rel_err


def oracle_fk(chain, q):
    """Independent FK: explicit 4x4 homogeneous product via scipy rotations."""
    T = np.eye(4)
    for joint, qi in zip(chain.joints, q):
        trans = np.eye(4)
        trans[:3, 3] = joint.offset
        rot = np.eye(4)
        rot[:3, :3] = Rotation.from_rotvec(np.asarray(joint.axis) * qi).as_matrix()
        T = T @ trans @ rot
    tool = np.eye(4)
    tool[:3, 3] = chain.tool_translation
    tool[:3, :3] = chain.tool_rotation
    T = T @ tool
    return T[:3, 3], T[:3, :3]


def two_link():
    return planar_arm(link_lengths=(1.0, 1.0))


# ---------------------------------------------------------------------------
# fk
# ---------------------------------------------------------------------------


def test_fk_two_link_frozen():
    chain = two_link()
    state = fk(chain, np.array([0.0, 0.0]))
    np.testing.assert_allclose([state.pose.x, state.pose.y], [2.0, 0.0], atol=1e-14)
    state = fk(chain, np.array([math.pi / 2, 0.0]))
    np.testing.assert_allclose([state.pose.x, state.pose.y], [0.0, 2.0], atol=1e-14)
    assert state.pose.yaw == pytest.approx(math.pi / 2)


def test_fk_dimension_mismatch():
    with pytest.raises(ValueError):
        fk(two_link(), np.array([0.1, 0.2, 0.3]))


def test_fk_flags_limit_violation():
    chain = two_link()
    assert fk(chain, np.array([0.0, 0.0])).in_limits
    assert not fk(chain, np.array([5.0, 0.0])).in_limits


@pytest.mark.parametrize("make_chain", [two_link, lambda: planar_arm(), spatial_arm_7dof])
def test_fk_matches_matrix_product_oracle(make_chain):
    chain = make_chain()
    rng = np.random.default_rng(11)
    for _ in range(25):
        q = rng.uniform(chain.lower, chain.upper)
        state = fk(chain, q)
        pos, rot = oracle_fk(chain, q)
        np.testing.assert_allclose(state.ee_position, pos, atol=1e-12)
        np.testing.assert_allclose(state.rotation, rot, atol=1e-12)


def test_fk_batch_matches_scalar_fk():
    chain = spatial_arm_7dof()
    rng = np.random.default_rng(5)
    Q = rng.uniform(chain.lower, chain.upper, size=(6, chain.dof))
    batch = fk_batch(chain, Q)
    for i in range(6):
        state = fk(chain, Q[i])
        np.testing.assert_allclose(batch.ee_position[i], state.ee_position, atol=1e-13)
        np.testing.assert_allclose(batch.rotation[i], state.rotation, atol=1e-13)
        np.testing.assert_allclose(batch.joint_origins[i], state.joint_origins, atol=1e-13)
        np.testing.assert_allclose(batch.joint_axes[i], state.joint_axes, atol=1e-13)


def test_fk_world_link_spheres():
    chain = two_link()
    state = fk(chain, np.array([math.pi / 2, 0.0]))
    centers, radii, links = state.link_sphere_centers(chain)
    assert centers.shape[1] == 3
    assert len(radii) == len(centers) == len(links)
    # all spheres of a straight-up arm lie on the y axis
    np.testing.assert_allclose(centers[:, 0], 0.0, atol=1e-12)
    assert np.all(centers[:, 1] > 0.0)


# ---------------------------------------------------------------------------
# jacobian
# ---------------------------------------------------------------------------


def test_jacobian_two_link_frozen():
    chain = two_link()
    J = jacobian(chain, np.array([0.0, 0.0]))
    np.testing.assert_allclose(J[0:2, 0], [0.0, 2.0], atol=1e-14)
    np.testing.assert_allclose(J[0:2, 1], [0.0, 1.0], atol=1e-14)


@pytest.mark.parametrize("make_chain", [two_link, spatial_arm_7dof])
def test_jacobian_angular_columns_are_world_axes(make_chain):
    chain = make_chain()
    rng = np.random.default_rng(3)
    q = rng.uniform(chain.lower, chain.upper)
    J = jacobian(chain, q)
    state = fk(chain, q)
    np.testing.assert_allclose(J[3:6], state.joint_axes.T, atol=1e-13)


@pytest.mark.parametrize("make_chain", [two_link, lambda: planar_arm(), spatial_arm_7dof])
def test_jacobian_linear_rows_match_fd(make_chain):
    chain = make_chain()
    rng = np.random.default_rng(17)
    for _ in range(40):
        q = rng.uniform(chain.lower * 0.9, chain.upper * 0.9)
        J = jacobian(chain, q)

        for row in range(3):

            def f(v, _row=row):
                return fk(chain, v).ee_position[_row]

            numeric = central_diff(f, q, h=1e-6)
            assert rel_err(J[row], numeric) < 1e-5


def test_rotation_derivative_matches_fd():
    # dR/dq_j = [z_j]x R, the basis for all angular-part gradients
    chain = spatial_arm_7dof()
    rng = np.random.default_rng(23)
    q = rng.uniform(chain.lower * 0.8, chain.upper * 0.8)
    state = fk(chain, q)
    for j in range(chain.dof):
        z = state.joint_axes[j]
        K = np.array([[0, -z[2], z[1]], [z[2], 0, -z[0]], [-z[1], z[0], 0]])
        analytic = K @ state.rotation

        def f_entry(v, r, c):
            return fk(chain, v).rotation[r, c]

        for r in range(3):
            for c in range(3):
                num = central_diff(lambda v: f_entry(v, r, c), q, h=1e-6)[j]
                assert abs(num - analytic[r, c]) < 1e-6


def test_yaw_jacobian_matches_fd():
    chain = spatial_arm_7dof()
    rng = np.random.default_rng(29)
    checked = 0
    while checked < 25:
        q = rng.uniform(chain.lower * 0.8, chain.upper * 0.8)
        state = fk(chain, q)
        # skip gimbal-adjacent configs where yaw is ill-conditioned
        if state.rotation[0, 0] ** 2 + state.rotation[1, 0] ** 2 < 0.1:
            continue
        dyaw = yaw_jacobian(state)

        def f(v):
            return fk(chain, v).pose.yaw

        numeric = central_diff(f, q, h=1e-6)
        assert rel_err(dyaw, numeric) < 1e-4
        checked += 1


# ---------------------------------------------------------------------------
# ik
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("make_chain", [lambda: planar_arm(), spatial_arm_7dof])
def test_ik_fk_round_trip(make_chain):
    chain = make_chain()
    rng = np.random.default_rng(41)
    targets = []
    for _ in range(12):
        q0 = rng.uniform(chain.lower * 0.7, chain.upper * 0.7)
        targets.append(fk(chain, q0).pose)
    solutions, success, errors = ik_solve_batch(chain, targets, restarts=16, seed=7)
    assert np.all(success)
    for sol, target in zip(solutions, targets):
        state = fk(chain, sol)
        pos_err = np.linalg.norm(state.ee_position - target.translation)
        yaw_err = abs(
            math.remainder(state.pose.yaw - target.yaw, 2 * math.pi)
        )
        assert pos_err < 1e-4
        assert yaw_err < 1e-3
        assert np.all(sol >= chain.lower) and np.all(sol <= chain.upper)


def test_ik_unreachable_flag():
    chain = planar_arm()
    target = Pose(50.0, 0.0, 0.0, 0.0)
    _, success, errors = ik_solve_batch(chain, [target], restarts=4, seed=0)
    assert not success[0]
    assert errors[0] > 1.0


def test_ik_deterministic():
    chain = planar_arm()
    targets = [Pose(0.8, 0.4, 0.0, 0.3), Pose(0.8, 0.4, 0.0, 0.3)]
    s1, ok1, e1 = ik_solve_batch(chain, targets, restarts=8, seed=3)
    s2, ok2, e2 = ik_solve_batch(chain, targets, restarts=8, seed=3)
    np.testing.assert_array_equal(s1, s2)
    np.testing.assert_array_equal(ok1, ok2)
    np.testing.assert_array_equal(e1, e2)
    # streams are keyed by (seed, target index): solving a target alone gives
    # the same answer as solving it at the same index of a larger batch
    s3, _, _ = ik_solve_batch(chain, targets[:1], restarts=8, seed=3)
    np.testing.assert_array_equal(s1[0], s3[0])


# ---------------------------------------------------------------------------
# grasp
# ---------------------------------------------------------------------------


def test_grasp_pose_identity_offset():
    g = GraspSpec(offset=np.array([0.0, 0.0, 0.2]))
    target = grasp_pose(Pose(0, 0, 0, 0), g)
    np.testing.assert_allclose(target.to_array(), [0, 0, 0.2, 0])


def test_grasp_pose_yaw_alignment_and_translation():
    g = GraspSpec(offset=np.array([0.1, 0.0, 0.2]))
    obj = Pose(1.0, 2.0, 0.0, math.pi / 2)
    target = grasp_pose(obj, g)
    assert target.yaw == pytest.approx(math.pi / 2)
    np.testing.assert_allclose([target.x, target.y, target.z], [1.0, 2.1, 0.2], atol=1e-14)
    shifted = grasp_pose(Pose(2.0, 2.0, 0.0, math.pi / 2), g)
    np.testing.assert_allclose(
        np.array([shifted.x, shifted.y, shifted.z]) - np.array([target.x, target.y, target.z]),
        [1.0, 0.0, 0.0],
        atol=1e-14,
    )


def test_grasp_requires_topdown_offset():
    with pytest.raises(ValueError):
        GraspSpec(offset=np.array([0.0, 0.0, -0.1]))


@pytest.mark.parametrize("yaw", [0.0, 0.7, -2.0])
def test_grasp_inverse_round_trip(yaw):
    g = GraspSpec(offset=np.array([0.05, -0.02, 0.15]), yaw_offset=0.4)
    obj = Pose(0.3, -0.2, 0.1, yaw)
    back = inverse_grasp(grasp_pose(obj, g), g)
    np.testing.assert_allclose(back.to_array(), obj.to_array(), atol=1e-12)
