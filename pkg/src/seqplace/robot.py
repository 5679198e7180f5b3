"""Serial-manipulator kinematics: FK, geometric Jacobians, batched DLS IK.

Chains are ordered lists of revolute joints, each a fixed translation
followed by a rotation about a fixed body axis. Two reference arms are
bundled: a planar 3-DOF arm (every axis z) for fast tests and simple motion
scenes, and a 7-DOF spatial arm whose last joint spins about the tool
approach axis so yaw stays controllable in top-down configurations.

End-effector targets are position + yaw only; full orientation is not
tracked (top-down grasping does not need it).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .geometry import Pose, SphereSet, normalize_yaw

IK_POS_TOL = 1e-4
IK_YAW_TOL = 1e-3
IK_DAMPING = 1e-3
IK_MAX_ITERS = 200
IK_STEP_CLAMP = 0.5  # max |dq| per iteration, rad


@dataclass
class Joint:
    axis: np.ndarray  # unit 3-vector, body frame
    offset: np.ndarray  # translation from parent frame, applied before rotation
    lower: float
    upper: float

    def __post_init__(self):
        self.axis = np.asarray(self.axis, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float)
        if abs(np.linalg.norm(self.axis) - 1.0) > 1e-9:
            raise ValueError("joint axis must be unit norm")
        if not self.lower < self.upper:
            raise ValueError("joint limits must satisfy lower < upper")


@dataclass
class KinematicChain:
    joints: List[Joint]
    link_spheres: List[Optional[SphereSet]]  # per link, in that link's frame
    tool_translation: np.ndarray
    tool_rotation: np.ndarray  # 3x3

    def __post_init__(self):
        self.tool_translation = np.asarray(self.tool_translation, dtype=float)
        self.tool_rotation = np.asarray(self.tool_rotation, dtype=float)
        if len(self.link_spheres) != len(self.joints):
            raise ValueError("need one link_spheres entry (possibly None) per joint")

    @property
    def dof(self) -> int:
        return len(self.joints)

    @property
    def lower(self) -> np.ndarray:
        return np.array([j.lower for j in self.joints])

    @property
    def upper(self) -> np.ndarray:
        return np.array([j.upper for j in self.joints])


def _axis_rotation(axis: np.ndarray, q) -> np.ndarray:
    """Rodrigues rotation about a fixed axis for scalar or batched angles."""
    q = np.asarray(q, dtype=float)
    c = np.cos(q)[..., None, None]
    s = np.sin(q)[..., None, None]
    k = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    kk = np.outer(axis, axis)
    return c * np.eye(3) + s * k + (1.0 - c) * kk


@dataclass
class FkState:
    """Forward-kinematics result for one configuration."""

    ee_position: np.ndarray  # (3,)
    rotation: np.ndarray  # (3,3) end-effector rotation
    joint_origins: np.ndarray  # (J,3) world position of each joint axis point
    joint_axes: np.ndarray  # (J,3) world direction of each joint axis
    link_positions: np.ndarray  # (J,3) origin of each link frame
    link_rotations: np.ndarray  # (J,3,3)
    in_limits: bool

    @property
    def pose(self) -> Pose:
        yaw = math.atan2(self.rotation[1, 0], self.rotation[0, 0])
        p = self.ee_position
        return Pose(float(p[0]), float(p[1]), float(p[2]), yaw)

    def link_sphere_centers(self, chain: KinematicChain):
        """World centers/radii of all link spheres plus their link indices."""
        centers, radii, links = [], [], []
        for i, spheres in enumerate(chain.link_spheres):
            if spheres is None:
                continue
            world = spheres.centers @ self.link_rotations[i].T + self.link_positions[i]
            centers.append(world)
            radii.append(spheres.radii)
            links.extend([i] * len(spheres))
        if not centers:
            return np.zeros((0, 3)), np.zeros(0), np.zeros(0, dtype=int)
        return np.concatenate(centers), np.concatenate(radii), np.array(links)


def fk(chain: KinematicChain, q: np.ndarray) -> FkState:
    """Forward kinematics: product of joint transforms applied in order."""
    q = np.asarray(q, dtype=float)
    if q.shape != (chain.dof,):
        raise ValueError(f"expected {chain.dof} joint values, got shape {q.shape}")
    p = np.zeros(3)
    rot = np.eye(3)
    origins = np.zeros((chain.dof, 3))
    axes = np.zeros((chain.dof, 3))
    link_pos = np.zeros((chain.dof, 3))
    link_rot = np.zeros((chain.dof, 3, 3))
    for i, joint in enumerate(chain.joints):
        p = p + rot @ joint.offset
        axes[i] = rot @ joint.axis
        origins[i] = p
        rot = rot @ _axis_rotation(joint.axis, q[i])
        link_pos[i] = p
        link_rot[i] = rot
    ee = p + rot @ chain.tool_translation
    ee_rot = rot @ chain.tool_rotation
    in_limits = bool(np.all(q >= chain.lower) and np.all(q <= chain.upper))
    return FkState(ee, ee_rot, origins, axes, link_pos, link_rot, in_limits)


@dataclass
class FkBatch:
    """Vectorized FK over a (..., dof) array of configurations."""

    ee_position: np.ndarray  # (...,3)
    rotation: np.ndarray  # (...,3,3)
    joint_origins: np.ndarray  # (...,J,3)
    joint_axes: np.ndarray  # (...,J,3)
    link_positions: np.ndarray  # (...,J,3)
    link_rotations: np.ndarray  # (...,J,3,3)

    @property
    def yaw(self) -> np.ndarray:
        return np.arctan2(self.rotation[..., 1, 0], self.rotation[..., 0, 0])


def fk_batch(chain: KinematicChain, Q: np.ndarray) -> FkBatch:
    Q = np.asarray(Q, dtype=float)
    if Q.shape[-1] != chain.dof:
        raise ValueError("configuration dimension mismatch")
    lead = Q.shape[:-1]
    p = np.zeros(lead + (3,))
    rot = np.broadcast_to(np.eye(3), lead + (3, 3)).copy()
    origins = np.zeros(lead + (chain.dof, 3))
    axes = np.zeros(lead + (chain.dof, 3))
    link_pos = np.zeros(lead + (chain.dof, 3))
    link_rot = np.zeros(lead + (chain.dof, 3, 3))
    for i, joint in enumerate(chain.joints):
        p = p + np.einsum("...ij,j->...i", rot, joint.offset)
        axes[..., i, :] = np.einsum("...ij,j->...i", rot, joint.axis)
        origins[..., i, :] = p
        rot = np.einsum("...ij,...jk->...ik", rot, _axis_rotation(joint.axis, Q[..., i]))
        link_pos[..., i, :] = p
        link_rot[..., i, :, :] = rot
    ee = p + np.einsum("...ij,j->...i", rot, chain.tool_translation)
    ee_rot = np.einsum("...ij,jk->...ik", rot, chain.tool_rotation)
    return FkBatch(ee, ee_rot, origins, axes, link_pos, link_rot)


def jacobian(chain: KinematicChain, q: np.ndarray) -> np.ndarray:
    """6 x dof geometric Jacobian: linear rows 0-2, angular rows 3-5."""
    state = fk(chain, q)
    J = np.zeros((6, chain.dof))
    for i in range(chain.dof):
        z = state.joint_axes[i]
        J[0:3, i] = np.cross(z, state.ee_position - state.joint_origins[i])
        J[3:6, i] = z
    return J


def yaw_jacobian(state: FkState) -> np.ndarray:
    """Exact d(yaw)/dq from the rotation derivative dR/dq_j = [z_j]x R.

    This is not the same as the angular-z Jacobian row away from tool-down
    configurations; use this one wherever yaw enters a differentiated cost.
    """
    r00 = state.rotation[0, 0]
    r10 = state.rotation[1, 0]
    denom = r00 * r00 + r10 * r10
    col0 = state.rotation[:, 0]
    dof = state.joint_axes.shape[0]
    out = np.zeros(dof)
    if denom < 1e-12:
        return out  # gimbal-adjacent; caller treats yaw as locally flat
    for j in range(dof):
        dcol0 = np.cross(state.joint_axes[j], col0)
        out[j] = (r00 * dcol0[1] - r10 * dcol0[0]) / denom
    return out


def yaw_jacobian_batch(batch: FkBatch) -> np.ndarray:
    """Batched exact d(yaw)/dq, shape (..., dof)."""
    r00 = batch.rotation[..., 0, 0]
    r10 = batch.rotation[..., 1, 0]
    denom = r00 * r00 + r10 * r10
    col0 = batch.rotation[..., :, 0]
    dcol0 = np.cross(batch.joint_axes, col0[..., None, :])  # (...,J,3)
    num = r00[..., None] * dcol0[..., 1] - r10[..., None] * dcol0[..., 0]
    safe = np.where(denom < 1e-12, 1.0, denom)
    out = num / safe[..., None]
    return np.where((denom < 1e-12)[..., None], 0.0, out)


def ik_solve_batch(
    chain: KinematicChain,
    targets: Sequence[Pose],
    restarts: int = 16,
    seed: int = 0,
    max_iters: int = IK_MAX_ITERS,
    damping: float = IK_DAMPING,
):
    """Batched damped-least-squares IK on position + yaw targets.

    All (target, restart) seeds iterate in lockstep; converged rows freeze.
    Per-target RNG streams are keyed by (seed, target index), so results are
    deterministic and independent of batch composition order. Returns
    (solutions (T, dof), success (T,), errors (T,)); success requires
    position error < 1e-4 and yaw error < 1e-3 rad. Iterates are clamped to
    joint limits, so outputs respect limits exactly.

    The yaw-error response row uses the angular-z Jacobian component: an
    approximation away from tool-down configurations, but errors are
    measured exactly, so convergence still implies a correct solution.
    """
    n_targets = len(targets)
    if n_targets == 0:
        return np.zeros((0, chain.dof)), np.zeros(0, dtype=bool), np.zeros(0)
    target_pos = np.array([t.translation for t in targets])
    target_yaw = np.array([t.yaw for t in targets])

    seeds = np.empty((n_targets, restarts, chain.dof))
    for t in range(n_targets):
        rng = np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(t,)))
        seeds[t] = rng.uniform(chain.lower, chain.upper, size=(restarts, chain.dof))

    Q = seeds.reshape(n_targets * restarts, chain.dof)
    tp = np.repeat(target_pos, restarts, axis=0)
    ty = np.repeat(target_yaw, restarts)
    lower, upper = chain.lower, chain.upper

    def errors_of(batch: FkBatch):
        pos_err = tp - batch.ee_position
        yaw_err = normalize_yaw(ty - batch.yaw)
        return pos_err, yaw_err

    for _ in range(max_iters):
        batch = fk_batch(chain, Q)
        pos_err, yaw_err = errors_of(batch)
        pos_norm = np.linalg.norm(pos_err, axis=1)
        converged = (pos_norm < IK_POS_TOL) & (np.abs(yaw_err) < IK_YAW_TOL)
        if np.all(converged):
            break
        rel = batch.ee_position[:, None, :] - batch.joint_origins  # (N,J,3)
        J_lin = np.cross(batch.joint_axes, rel)  # (N,J,3) column-major layout
        J4 = np.concatenate(
            [np.swapaxes(J_lin, 1, 2), batch.joint_axes[:, None, :, 2]], axis=1
        )  # (N,4,J)
        e4 = np.concatenate([pos_err, yaw_err[:, None]], axis=1)
        A = J4 @ np.swapaxes(J4, 1, 2) + damping * np.eye(4)
        y = np.linalg.solve(A, e4[..., None])[..., 0]
        dq = np.einsum("nji,nj->ni", J4, y)
        step_scale = np.minimum(1.0, IK_STEP_CLAMP / np.maximum(np.max(np.abs(dq), axis=1), 1e-12))
        dq = dq * step_scale[:, None]
        dq[converged] = 0.0
        Q = np.clip(Q + dq, lower, upper)

    batch = fk_batch(chain, Q)
    pos_err, yaw_err = errors_of(batch)
    pos_norm = np.linalg.norm(pos_err, axis=1)
    success_rows = (pos_norm < IK_POS_TOL) & (np.abs(yaw_err) < IK_YAW_TOL)
    score = pos_norm + np.abs(yaw_err)

    Qr = Q.reshape(n_targets, restarts, chain.dof)
    success_rows = success_rows.reshape(n_targets, restarts)
    score = score.reshape(n_targets, restarts)
    bias = np.where(success_rows, 0.0, 1e6)
    best = np.argmin(bias + score, axis=1)  # first minimum: stable in restart index
    rows = np.arange(n_targets)
    return Qr[rows, best], success_rows[rows, best], score[rows, best]


# ---------------------------------------------------------------------------
# grasping
# ---------------------------------------------------------------------------


@dataclass
class GraspSpec:
    """Top-down grasp: EE sits at a fixed offset in the object's yaw frame."""

    offset: np.ndarray  # object frame -> EE, z component > 0 (from above)
    yaw_offset: float = 0.0  # EE yaw relative to object yaw

    def __post_init__(self):
        self.offset = np.asarray(self.offset, dtype=float)
        if self.offset.shape != (3,):
            raise ValueError("grasp offset must be a 3-vector")
        if self.offset[2] <= 0:
            raise ValueError("grasp offset must approach from above (z > 0)")


def grasp_pose(object_pose: Pose, grasp: GraspSpec) -> Pose:
    """End-effector target realizing a grasp of an object at a pose."""
    c, s = math.cos(object_pose.yaw), math.sin(object_pose.yaw)
    ox, oy, oz = grasp.offset
    return Pose(
        object_pose.x + c * ox - s * oy,
        object_pose.y + s * ox + c * oy,
        object_pose.z + oz,
        object_pose.yaw + grasp.yaw_offset,
    )


def inverse_grasp(ee_pose: Pose, grasp: GraspSpec) -> Pose:
    """Object pose implied by an end-effector pose holding the grasp."""
    yaw = ee_pose.yaw - grasp.yaw_offset
    c, s = math.cos(yaw), math.sin(yaw)
    ox, oy, oz = grasp.offset
    return Pose(
        ee_pose.x - (c * ox - s * oy),
        ee_pose.y - (s * ox + c * oy),
        ee_pose.z - oz,
        yaw,
    )


# ---------------------------------------------------------------------------
# bundled reference arms
# ---------------------------------------------------------------------------


def _link_spheres_along_x(length: float, radius: float, count: int) -> SphereSet:
    xs = (np.arange(1, count + 1) / (count + 1)) * length
    centers = np.zeros((count, 3))
    centers[:, 0] = xs
    return SphereSet(centers=centers, radii=np.full(count, radius))


def planar_arm(
    link_lengths: Sequence[float] = (0.5, 0.5, 0.5),
    sphere_radius: float = 0.06,
    spheres_per_link: int = 2,
) -> KinematicChain:
    """Planar arm: every joint about z, links along local x, tool at last tip."""
    lengths = list(link_lengths)
    joints = []
    link_spheres: List[Optional[SphereSet]] = []
    prev = np.zeros(3)
    for L in lengths:
        joints.append(Joint(axis=np.array([0.0, 0.0, 1.0]), offset=prev.copy(),
                            lower=-math.pi, upper=math.pi))
        link_spheres.append(_link_spheres_along_x(L, sphere_radius, spheres_per_link))
        prev = np.array([L, 0.0, 0.0])
    return KinematicChain(
        joints=joints,
        link_spheres=link_spheres,
        tool_translation=prev,
        tool_rotation=np.eye(3),
    )


def spatial_arm_7dof(scale: float = 1.0) -> KinematicChain:
    """7-DOF spatial arm, links along local z, wrist roll about tool axis.

    Axis pattern z-y-z-y-z-y-z; with total pitch pi the tool z points down
    and the last joint becomes a pure yaw spin, which keeps position+yaw IK
    well conditioned for top-down grasps.
    """
    z = np.array([0.0, 0.0, 1.0])
    y = np.array([0.0, 1.0, 0.0])
    specs = [
        # (axis, offset, lower, upper, sphere centers along local z after joint)
        (z, (0.0, 0.0, 0.30), -math.pi, math.pi, 0.05),
        (y, (0.0, 0.0, 0.05), -2.2, 2.2, 0.15),
        (z, (0.0, 0.0, 0.15), -math.pi, math.pi, 0.15),
        (y, (0.0, 0.0, 0.15), -2.6, 2.6, 0.15),
        (z, (0.0, 0.0, 0.15), -math.pi, math.pi, 0.15),
        (y, (0.0, 0.0, 0.15), -3.0, 3.0, 0.08),
        (z, (0.0, 0.0, 0.08), -math.pi, math.pi, 0.07),
    ]
    joints = []
    link_spheres: List[Optional[SphereSet]] = []
    for axis, offset, lo, hi, seg in specs:
        joints.append(
            Joint(axis=axis, offset=np.asarray(offset) * scale, lower=lo, upper=hi)
        )
        seg_len = seg * scale
        centers = np.array([[0.0, 0.0, seg_len * 0.5]])
        link_spheres.append(
            SphereSet(centers=centers, radii=np.array([0.055 * scale]))
        )
    return KinematicChain(
        joints=joints,
        link_spheres=link_spheres,
        tool_translation=np.array([0.0, 0.0, 0.07]) * scale,
        tool_rotation=np.eye(3),
    )
