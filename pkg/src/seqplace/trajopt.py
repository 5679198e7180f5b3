"""Joint trajectory-and-placement refinement for sequential pick-and-place.

The placement stage decides where blocks go; this module decides how the arm
gets them there. Stage-1 placements are lifted through grasp IK into joint
space (:func:`lift_placements`), piecewise-linear seed trajectories are drawn
through sampled intermediate waypoints (:func:`init_trajectories`), and then
all waypoints of all segments are optimized together under an augmented
Lagrangian (:func:`solve_al`): the objective is configuration-space path
length plus a soft alignment term tying each segment's first waypoint to its
grasp target, and the constraint vector collects final-placement cost, arm
collision, and carried-block collision terms. Pick waypoints are retracted
to the exact grasp after every inner loop, so only their null-space (elbow)
freedom persists; place waypoints are ordinary optimization variables, and
the placed pose of a block is always derived from its segment's final
waypoint through forward kinematics and the inverse grasp map, so there is
no duplicated placement state to keep consistent.

Collision terms for segment ``b`` see three obstacle families: static scene
spheres, blocks later in the sequence at their staged poses, and blocks
earlier in the sequence at their (optimizer-coupled) placed poses. The block
in hand is excluded at the first and last waypoint of its own segment, where
it legitimately touches its pick-up and put-down neighborhoods.

Carried-block spheres ride rigidly in the tool frame, anchored so that a
straight-down tool reproduces the yaw-frame grasp model exactly; placed and
staged blocks use the yaw-frame model directly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path as _Path
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .geometry import LINEAR, MODES, QUADRATIC, Pose, normalize_yaw, transform
from .problems import (
    MotionProblem,
    TetrisProblem,
    TowerProblem,
    YAW_FIXED,
    YAW_FREE,
    as_cost_model,
)
from .robot import (
    IK_DAMPING,
    IK_POS_TOL,
    IK_YAW_TOL,
    GraspSpec,
    KinematicChain,
    fk,
    fk_batch,
    grasp_pose,
    ik_solve_batch,
    inverse_grasp,
    yaw_jacobian_batch,
)

__all__ = [
    "DEFAULT_VALIDATION_EPSILON",
    "INNER_STEP_CLAMP",
    "AlReport",
    "AlResult",
    "LiftFailure",
    "LiftResult",
    "OuterRecord",
    "Trajectory",
    "TrajOptConfig",
    "TrajOptFailure",
    "al_value_and_gradient",
    "init_trajectories",
    "lift_placements",
    "motion_endpoints",
    "save_trajectory",
    "solve_al",
    "trajectory_cost",
    "trajectory_path_length",
    "validate",
]

DEFAULT_VALIDATION_EPSILON = 0.02
# Elementwise bound on one inner descent step (rad). Strong alignment weights
# make the start-waypoint curvature stiff relative to the learning rate; the
# clamp keeps the early, too-hot steps bounded until the rate decays.
INNER_STEP_CLAMP = 0.1

_DOWN = np.array([0.0, 0.0, -1.0])
# Tool-frame anchor for carried blocks: spheres at yaw-frame offset u sit at
# R_ee @ (_FLIP @ u). When the tool z-axis points straight down this equals
# the yaw-frame placement model for every tool yaw.
_FLIP = np.diag([1.0, -1.0, -1.0])
# Accepted angle between tool z and straight down after lifting. Solve-time
# pick waypoints are pinned at lift quality, so this must clear the default
# validation epsilon (0.02 rad) with margin rather than rely on later repair.
_POLISH_ANGLE_TOL = 0.005
# The damped least-squares tail converges slowly along the weakly actuated
# tool-axis direction; the tight angle tolerance needs the larger cap.
_POLISH_MAX_ITERS = 1000


class LiftFailure(RuntimeError):
    """Raised when no stage-1 particle survives grasp IK."""


class TrajOptFailure(RuntimeError):
    """Raised when no particle passes validation within the outer budget."""

    def __init__(self, best_violation: float, report: "AlReport"):
        super().__init__(
            f"no feasible trajectory found (best violation {best_violation:.4g})"
        )
        self.best_violation = best_violation
        self.report = report


@dataclass(frozen=True)
class TrajOptConfig:
    """Settings for trajectory initialization and the augmented-Lagrangian solve.

    ``k_waypoint`` intermediate waypoints are sampled per segment and each of
    the ``k_waypoint + 1`` legs is discretized into ``k_interp`` even steps,
    so segments carry ``k_interp * (k_waypoint + 1) + 1`` waypoints total.

    ``w_start`` weighs grasp alignment in the reported objective and in
    :func:`trajectory_cost` / :func:`al_value_and_gradient`. When start
    waypoints are optimized rather than pinned (they are pinned inside
    :func:`solve_al`), a start waypoint settles where the alignment spring
    balances the unit-magnitude path-length pull, at position error about
    ``1 / (2 * w_start)`` meters, and learning rates must keep
    ``w_start * lr`` well below 1 or plain gradient steps oscillate (the
    elementwise step clamp keeps such oscillation bounded but not
    convergent).

    Penalty weight ``mu0`` grows by ``beta`` after any outer iteration that
    fails to cut the maximum constraint violation by at least 10x.
    """

    k_waypoint: int = 1
    k_interp: int = 5
    w_start: float = 50.0
    w_arm: float = 1.0
    w_block: float = 1.0
    w_place: float = 1.0
    mu0: float = 10.0
    beta: float = 2.0
    outer_iters: int = 20
    inner_steps: int = 50
    lr_init: float = 0.05
    lr_final: float = 0.005
    validation_epsilon: float = DEFAULT_VALIDATION_EPSILON

    def __post_init__(self):
        if int(self.k_waypoint) != self.k_waypoint or self.k_waypoint < 0:
            raise ValueError("k_waypoint must be a nonnegative integer")
        if int(self.k_interp) != self.k_interp or self.k_interp < 1:
            raise ValueError("k_interp must be a positive integer")
        for name in ("w_start", "w_arm", "w_block", "w_place"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.mu0 <= 0:
            raise ValueError("mu0 must be positive")
        if self.beta <= 1:
            raise ValueError("beta must exceed 1")
        if int(self.outer_iters) != self.outer_iters or self.outer_iters < 1:
            raise ValueError("outer_iters must be a positive integer")
        if int(self.inner_steps) != self.inner_steps or self.inner_steps < 1:
            raise ValueError("inner_steps must be a positive integer")
        if self.lr_init <= 0 or self.lr_final <= 0:
            raise ValueError("learning rates must be positive")
        if self.validation_epsilon <= 0:
            raise ValueError("validation_epsilon must be positive")

    @property
    def waypoints_per_segment(self) -> int:
        return self.k_interp * (self.k_waypoint + 1) + 1


@dataclass
class Trajectory:
    """One particle's motion plan: a waypoint matrix per pick-place segment."""

    segments: np.ndarray  # (n_segments, T, dof)
    attached: Tuple[Optional[int], ...]  # carried block per segment, or None

    def __post_init__(self):
        self.segments = np.asarray(self.segments, dtype=float)
        if self.segments.ndim != 3:
            raise ValueError("segments must have shape (n_segments, T, dof)")
        if len(self.attached) != self.segments.shape[0]:
            raise ValueError("one attached-object entry per segment required")
        self.attached = tuple(self.attached)


@dataclass
class LiftResult:
    endpoints: np.ndarray  # (particles, n_segments, 2, dof): pick and place
    kept: np.ndarray  # indices into the input placement rows that survived IK


@dataclass
class OuterRecord:
    """Bookkeeping snapshot of one outer iteration, per particle."""

    index: int
    mu: np.ndarray  # (P,) penalty weight used during this outer iteration
    multipliers: np.ndarray  # (P,3) lambda entering the iteration
    constraints: np.ndarray  # (P,3) constraint vector after the inner loop
    updated_multipliers: np.ndarray  # (P,3) lambda + mu * c
    objective: np.ndarray  # (P,)
    feasible: np.ndarray  # (P,) validation outcome at this iterate
    violation: np.ndarray  # (P,) max violation reported by validation


@dataclass
class AlReport:
    outers: List[OuterRecord] = field(default_factory=list)
    accepted_objectives: List[float] = field(default_factory=list)


@dataclass
class AlResult:
    trajectory: Trajectory
    objective: float
    particle_index: int
    report: AlReport


# ---------------------------------------------------------------------------
# problem geometry shared by cost, solve, and validation
# ---------------------------------------------------------------------------


@dataclass
class _Geometry:
    problem: object
    chain: KinematicChain
    grasp: Optional[GraspSpec]
    manipulation: bool
    n_segments: int
    static_centers: np.ndarray
    static_radii: np.ndarray
    arm_local: np.ndarray  # (S,3) link-frame sphere centers
    arm_radii: np.ndarray
    arm_link: np.ndarray  # (S,) owning link index
    arm_mask: np.ndarray  # (S,J) joint j moves sphere s
    # manipulation-only fields
    block_u: List[np.ndarray]  # per block: sphere centers relative to the grasp point
    block_radii: List[np.ndarray]
    fixed_obs_centers: List[np.ndarray]  # per segment: statics + still-staged blocks
    fixed_obs_radii: List[np.ndarray]
    pick_pos: np.ndarray  # (B,3) grasp targets over the staged poses
    pick_yaw: np.ndarray  # (B,)
    place_model: object  # free-yaw placement cost model, or None
    anchor_yaw: bool  # pull placed yaws back to zero (fixed-yaw problems)


def _as_obstacles(centers, radii):
    if centers is None:
        return np.zeros((0, 3)), np.zeros(0)
    c = np.asarray(centers, dtype=float).reshape(-1, 3)
    r = np.asarray(radii, dtype=float).reshape(-1)
    if len(c) != len(r):
        raise ValueError("obstacle centers and radii length mismatch")
    return c, r


def _block_sphere_table(problem):
    """Object-frame sphere centers/radii per block, in skeleton order."""
    if isinstance(problem, TowerProblem):
        one = np.zeros((1, 3))
        return [one.copy() for _ in range(problem.n_blocks)], [
            np.array([problem.sphere_radius]) for _ in range(problem.n_blocks)
        ]
    centers = [blk.sphere_set.centers.copy() for blk in problem.blocks]
    radii = [blk.sphere_set.radii.copy() for blk in problem.blocks]
    return centers, radii


def _free_yaw_twin(problem):
    """The same placement problem with yaw treated as a live coordinate."""
    if isinstance(problem, TowerProblem):
        return TowerProblem(
            n_blocks=problem.n_blocks,
            side=problem.side,
            box=problem.box,
            obstacle_centers=problem.obstacle_centers,
            obstacle_radii=problem.obstacle_radii,
            yaw_mode=YAW_FREE,
            weights=problem.weights,
            footprint_halfwidth=problem.footprint_halfwidth,
            table_height=problem.table_height,
        )
    return TetrisProblem(
        blocks=problem.blocks,
        box=problem.box,
        z_star=problem.z_star,
        yaw_mode=YAW_FREE,
        weights=problem.weights,
        tight_packing=problem.tight_packing,
    )


def _build_geometry(problem, chain, grasp, static_centers, static_radii) -> _Geometry:
    if static_centers is None:
        static_centers = getattr(problem, "obstacle_centers", None)
        static_radii = getattr(problem, "obstacle_radii", None)
    statics_c, statics_r = _as_obstacles(static_centers, static_radii)

    arm_local, arm_radii, arm_link = [], [], []
    for i, spheres in enumerate(chain.link_spheres):
        if spheres is None:
            continue
        arm_local.append(spheres.centers)
        arm_radii.append(spheres.radii)
        arm_link.extend([i] * len(spheres))
    arm_local = np.concatenate(arm_local) if arm_local else np.zeros((0, 3))
    arm_radii = np.concatenate(arm_radii) if arm_radii else np.zeros(0)
    arm_link = np.asarray(arm_link, dtype=int)
    arm_mask = arm_link[:, None] >= np.arange(chain.dof)[None, :]

    manipulation = not isinstance(problem, MotionProblem)
    if not manipulation:
        return _Geometry(
            problem=problem, chain=chain, grasp=None, manipulation=False,
            n_segments=1, static_centers=statics_c, static_radii=statics_r,
            arm_local=arm_local, arm_radii=arm_radii, arm_link=arm_link,
            arm_mask=arm_mask, block_u=[], block_radii=[],
            fixed_obs_centers=[statics_c], fixed_obs_radii=[statics_r],
            pick_pos=np.zeros((0, 3)), pick_yaw=np.zeros(0),
            place_model=None, anchor_yaw=False,
        )

    if grasp is None:
        raise ValueError("manipulation problems need a grasp specification")
    if problem.initial_poses is None:
        raise ValueError("manipulation problems need staged initial poses")

    locals_, radii_ = _block_sphere_table(problem)
    n_segments = len(locals_)
    block_u = [loc - grasp.offset for loc in locals_]

    initial_world = [
        loc @ _rot_z(p.yaw).T + np.array(p.translation)
        for loc, p in zip(locals_, problem.initial_poses)
    ]
    fixed_c, fixed_r = [], []
    for b in range(n_segments):
        future_c = [initial_world[j] for j in range(b + 1, n_segments)]
        future_r = [radii_[j] for j in range(b + 1, n_segments)]
        fixed_c.append(np.concatenate([statics_c] + future_c) if future_c else statics_c)
        fixed_r.append(np.concatenate([statics_r] + future_r) if future_r else statics_r)

    targets = [grasp_pose(p, grasp) for p in problem.initial_poses]
    pick_pos = np.array([t.translation for t in targets])
    pick_yaw = np.array([t.yaw for t in targets])

    return _Geometry(
        problem=problem, chain=chain, grasp=grasp, manipulation=True,
        n_segments=n_segments, static_centers=statics_c, static_radii=statics_r,
        arm_local=arm_local, arm_radii=arm_radii, arm_link=arm_link,
        arm_mask=arm_mask, block_u=block_u, block_radii=radii_,
        fixed_obs_centers=fixed_c, fixed_obs_radii=fixed_r,
        pick_pos=pick_pos, pick_yaw=pick_yaw,
        place_model=as_cost_model(_free_yaw_twin(problem)), anchor_yaw=problem.yaw_mode == YAW_FIXED,
    )


def _rot_z(yaw: float) -> np.ndarray:
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _check_values(values, geo: _Geometry, config: TrajOptConfig) -> np.ndarray:
    values = np.asarray(values, dtype=float)
    if values.ndim != 4:
        raise ValueError("trajectory batch must have shape (P, segments, T, dof)")
    P, B, T, dof = values.shape
    if P < 1:
        raise ValueError("empty trajectory batch")
    if B != geo.n_segments:
        raise ValueError(f"expected {geo.n_segments} segments, got {B}")
    if dof != geo.chain.dof:
        raise ValueError("configuration dimension mismatch")
    if T < 2:
        raise ValueError("segments need at least two waypoints")
    return values


# ---------------------------------------------------------------------------
# batched cost evaluation and gradient
# ---------------------------------------------------------------------------


def _pen_terms(diff, rsum, mode):
    dist = np.sqrt(np.sum(diff * diff, axis=-1))
    pen = np.maximum(0.0, rsum - dist)
    val = pen * pen if mode == QUADRATIC else pen
    return dist, pen, val


def _pen_backward(diff, dist, pen, mode, factor):
    """World-space gradient on the first sphere set of each pen term.

    factor broadcasts per particle; contact (pen==0) and coincident centers
    (dist==0) contribute nothing, matching the placement-stage convention.
    """
    active = (pen > 0.0) & (dist > 0.0)
    slope = np.where(active, np.where(dist > 0.0, 1.0 / np.maximum(dist, 1e-300), 0.0), 0.0)
    if mode == QUADRATIC:
        slope = slope * 2.0 * pen
    return (-factor * slope)[..., None] * diff


def _evaluate(values, geo: _Geometry, config: TrajOptConfig, mode, lam, mu, want_grad):
    """Objective, constraint vector, Lagrangian value, and (optionally) the
    full Lagrangian gradient for a batch of trajectories."""
    P, B, T, dof = values.shape
    chain = geo.chain
    quad = mode == QUADRATIC

    fkb = fk_batch(chain, values)
    ee = fkb.ee_position  # (P,B,T,3)
    rot = fkb.rotation
    axes = fkb.joint_axes
    origins = fkb.joint_origins

    # arm sphere world centers: (P,B,T,S,3)
    S = len(geo.arm_local)
    if S:
        link_rot = fkb.link_rotations[..., geo.arm_link, :, :]  # (P,B,T,S,3,3)
        link_pos = fkb.link_positions[..., geo.arm_link, :]
        arm_w = np.einsum("...sik,sk->...si", link_rot, geo.arm_local) + link_pos
    else:
        arm_w = np.zeros((P, B, T, 0, 3))

    interior = slice(1, T - 1)

    if geo.manipulation:
        rotF = rot @ _FLIP  # carried-block frame per waypoint
        held_w = []  # per segment: (P, T-2, Sb, 3) on the interior slice
        for b in range(B):
            held_w.append(
                np.einsum("ptik,sk->ptsi", rotF[:, b, interior], geo.block_u[b])
                + ee[:, b, interior, None, :]
            )
        eef = ee[:, :, -1]  # (P,B,3)
        rotf = rot[:, :, -1]
        yawf = np.arctan2(rotf[..., 1, 0], rotf[..., 0, 0])
        psi = yawf - geo.grasp.yaw_offset  # derived block yaw, (P,B)
        cpsi, spsi = np.cos(psi), np.sin(psi)
        ox, oy, oz = geo.grasp.offset
        pose_xyz = np.stack(
            [
                eef[..., 0] - (cpsi * ox - spsi * oy),
                eef[..., 1] - (spsi * ox + cpsi * oy),
                eef[..., 2] - oz,
            ],
            axis=-1,
        )  # (P,B,3) derived placed positions
        placed_w = []  # per block: (P, Sb, 3) spheres at the derived placed pose
        for b in range(B):
            u = geo.block_u[b]
            rx = cpsi[:, b, None] * u[:, 0] - spsi[:, b, None] * u[:, 1]
            ry = spsi[:, b, None] * u[:, 0] + cpsi[:, b, None] * u[:, 1]
            placed_w.append(
                np.stack(
                    [eef[:, b, None, 0] + rx, eef[:, b, None, 1] + ry, eef[:, b, None, 2] + u[:, 2]],
                    axis=-1,
                )
            )

    # ---- forward: path length -------------------------------------------
    leg = values[:, :, 1:] - values[:, :, :-1]
    leg_norm = np.linalg.norm(leg, axis=-1)
    objective = leg_norm.sum(axis=(1, 2))

    # ---- forward: start alignment ---------------------------------------
    if geo.manipulation:
        d0 = ee[:, :, 0] - geo.pick_pos[None, :, :]  # (P,B,3)
        axis0 = rot[:, :, 0, :, 2]  # tool z at the first waypoint
        cos_down = np.clip(-axis0[..., 2], -1.0, 1.0)
        theta = np.arccos(cos_down)
        yaw0 = np.arctan2(rot[:, :, 0, 1, 0], rot[:, :, 0, 0, 0])
        # without the yaw spring the path-length pull twists the pick
        # waypoint away from the grasp it is supposed to realize
        dyaw0 = normalize_yaw(yaw0 - geo.pick_yaw[None, :])
        c_start = (
            np.sum(d0 * d0, axis=(1, 2))
            + np.sum(theta * theta, axis=1)
            + np.sum(dyaw0 * dyaw0, axis=1)
        )
        objective = objective + config.w_start * c_start

    # ---- forward: collision and placement constraints -------------------
    arm_groups = []  # (b, j_or_None, diff, dist, pen) ; j set -> placed obstacle
    held_groups = []
    c_arm = np.zeros(P)
    c_block = np.zeros(P)
    for b in range(B):
        fixed_c = geo.fixed_obs_centers[b] if geo.manipulation else geo.fixed_obs_centers[0]
        fixed_r = geo.fixed_obs_radii[b] if geo.manipulation else geo.fixed_obs_radii[0]
        if S and len(fixed_c):
            diff = arm_w[:, b, :, :, None, :] - fixed_c[None, None, None, :, :]
            rsum = geo.arm_radii[:, None] + fixed_r[None, :]
            dist, pen, val = _pen_terms(diff, rsum, mode)
            c_arm += val.sum(axis=(1, 2, 3))
            arm_groups.append((b, None, diff, dist, pen))
        if geo.manipulation:
            for j in range(b):
                if S:
                    diff = arm_w[:, b, :, :, None, :] - placed_w[j][:, None, None, :, :]
                    rsum = geo.arm_radii[:, None] + geo.block_radii[j][None, :]
                    dist, pen, val = _pen_terms(diff, rsum, mode)
                    c_arm += val.sum(axis=(1, 2, 3))
                    arm_groups.append((b, j, diff, dist, pen))
            if len(fixed_c):
                diff = held_w[b][:, :, :, None, :] - fixed_c[None, None, None, :, :]
                rsum = geo.block_radii[b][:, None] + fixed_r[None, :]
                dist, pen, val = _pen_terms(diff, rsum, mode)
                c_block += val.sum(axis=(1, 2, 3))
                held_groups.append((b, None, diff, dist, pen))
            for j in range(b):
                diff = held_w[b][:, :, :, None, :] - placed_w[j][:, None, None, :, :]
                rsum = geo.block_radii[b][:, None] + geo.block_radii[j][None, :]
                dist, pen, val = _pen_terms(diff, rsum, mode)
                c_block += val.sum(axis=(1, 2, 3))
                held_groups.append((b, j, diff, dist, pen))

    c_place = np.zeros(P)
    if geo.manipulation:
        rows = np.concatenate([pose_xyz, psi[..., None]], axis=-1).reshape(P, 4 * B)
        c_place = geo.place_model.evaluate(rows, pmode)
        if geo.anchor_yaw:
            wrapped = normalize_yaw(psi)
            c_place = c_place + np.sum(
                wrapped * wrapped if pquad else np.abs(wrapped), axis=1
            )

    constraints = np.stack(
        [config.w_place * c_place, config.w_arm * c_arm, config.w_block * c_block], axis=1
    )
    lagrangian = (
        objective
        + np.sum(lam * constraints, axis=1)
        + 0.5 * mu * np.sum(constraints * constraints, axis=1)
    )

    if not want_grad:
        return objective, constraints, lagrangian, None

    # ---- backward --------------------------------------------------------
    scale = lam + mu[:, None] * constraints  # (P,3) per-constraint multipliers
    s_place = scale[:, 0] * config.w_place
    s_arm = scale[:, 1] * config.w_arm
    s_block = scale[:, 2] * config.w_block

    grad = np.zeros_like(values)

    # path length
    safe = np.maximum(leg_norm, 1e-12)[..., None]
    unit = np.where(leg_norm[..., None] > 1e-12, leg / safe, 0.0)
    grad[:, :, :-1] -= unit
    grad[:, :, 1:] += unit

    g3_arm = np.zeros_like(arm_w)
    if geo.manipulation:
        g3_held = [np.zeros_like(h) for h in held_w]
        g3_placed = [np.zeros((P, len(u), 3)) for u in geo.block_u]
        g_pose = np.zeros((P, B, 4))  # gradient on (x, y, z, psi) per placed block

    for b, j, diff, dist, pen in arm_groups:
        g_a = _pen_backward(diff, dist, pen, mode, s_arm[:, None, None, None])
        g3_arm[:, b] += g_a.sum(axis=3)
        if j is not None:
            g3_placed[j] -= g_a.sum(axis=(1, 2))
    if geo.manipulation:
        for b, j, diff, dist, pen in held_groups:
            g_a = _pen_backward(diff, dist, pen, mode, s_block[:, None, None, None])
            g3_held[b] += g_a.sum(axis=3)
            if j is not None:
                g3_placed[j] -= g_a.sum(axis=(1, 2))

    # arm spheres: rigid-body jacobian rows, joints at or before the link
    if S:
        rel = arm_w[:, :, :, :, None, :] - origins[:, :, :, None, :, :]
        cross = np.cross(axes[:, :, :, None, :, :], rel)  # (P,B,T,S,J,3)
        cross = cross * geo.arm_mask[None, None, None, :, :, None]
        grad += np.einsum("pbtsjd,pbtsd->pbtj", cross, g3_arm)

    if geo.manipulation:
        # carried blocks: rigid attachment to the tool frame, every joint acts
        for b in range(B):
            if not len(geo.block_u[b]):
                continue
            rel = held_w[b][:, :, :, None, :] - origins[:, b, interior, None, :, :]
            cross = np.cross(axes[:, b, interior, None, :, :], rel)  # (P,Ti,Sb,J,3)
            grad[:, b, interior] += np.einsum("ptsjd,ptsd->ptj", cross, g3_held[b])

        # placement model and yaw anchors feed the per-block pose gradient
        g_rows = geo.place_model.gradient(rows, pmode).reshape(P, B, 4)
        g_pose += s_place[:, None, None] * g_rows
        if geo.anchor_yaw:
            wrapped = normalize_yaw(psi)
            danchor = 2.0 * wrapped if pquad else np.sign(wrapped)
            g_pose[:, :, 3] += s_place[:, None] * danchor

        # chain every final-waypoint quantity through the end-effector frame
        relf = eef[:, :, None, :] - origins[:, :, -1]  # (P,B,J,3)
        jlin_f = np.cross(axes[:, :, -1], relf)  # (P,B,J,3) tool-point jacobian
        yawjac_f = yaw_jacobian_batch(
            _FrameView(rotf, axes[:, :, -1])
        )  # (P,B,J) exact tool-yaw jacobian

        # placed-block spheres as obstacles for later segments
        for j in range(B):
            g3 = g3_placed[j]
            if not np.any(g3):
                continue
            gsum = g3.sum(axis=1)  # (P,3)
            u = geo.block_u[j]
            drx = -spsi[:, j, None] * u[:, 0] - cpsi[:, j, None] * u[:, 1]
            dry = cpsi[:, j, None] * u[:, 0] - spsi[:, j, None] * u[:, 1]
            gyaw = np.sum(g3[..., 0] * drx + g3[..., 1] * dry, axis=1)
            grad[:, j, -1] += np.einsum("pd,pjd->pj", gsum, jlin_f[:, j])
            grad[:, j, -1] += gyaw[:, None] * yawjac_f[:, j]

        # derived pose gradient: translation via the tool point, yaw via psi;
        # the grasp offset rotates with psi, coupling translation to yaw too
        dox = spsi * ox + cpsi * oy  # d(pose_x)/d(psi)
        doy = -cpsi * ox + spsi * oy
        gyaw_pose = g_pose[..., 0] * dox + g_pose[..., 1] * doy + g_pose[..., 3]
        grad[:, :, -1] += np.einsum("pbd,pbjd->pbj", g_pose[..., :3], jlin_f)
        grad[:, :, -1] += gyaw_pose[..., None] * yawjac_f

        # start alignment: squared position, tool-down angle, and yaw error
        rel0 = ee[:, :, 0, None, :] - origins[:, :, 0]
        jlin_0 = np.cross(axes[:, :, 0], rel0)  # (P,B,J,3)
        grad[:, :, 0] += config.w_start * 2.0 * np.einsum("pbd,pbjd->pbj", d0, jlin_0)
        sin_theta = np.sqrt(np.maximum(1.0 - cos_down * cos_down, 0.0))
        # d(theta^2)/d(cos) = -2 theta / sin theta; -2 at theta -> 0, dropped at pi
        factor = np.where(
            sin_theta > 1e-8,
            -2.0 * theta / np.maximum(sin_theta, 1e-8),
            np.where(cos_down > 0.0, -2.0, 0.0),
        )
        dcos = -np.cross(axes[:, :, 0], axis0[:, :, None, :])[..., 2]  # (P,B,J)
        grad[:, :, 0] += config.w_start * (factor[..., None] * dcos)
        yawjac_0 = yaw_jacobian_batch(_FrameView(rot[:, :, 0], axes[:, :, 0]))
        grad[:, :, 0] += config.w_start * 2.0 * dyaw0[..., None] * yawjac_0

    return objective, constraints, lagrangian, grad


class _FrameView:
    """Adapter giving yaw_jacobian_batch the two fields it reads."""

    def __init__(self, rotation, joint_axes):
        self.rotation = rotation
        self.joint_axes = joint_axes


def trajectory_cost(
    values,
    problem,
    chain: KinematicChain,
    config: TrajOptConfig,
    *,
    grasp: Optional[GraspSpec] = None,
    static_centers=None,
    static_radii=None,
    mode: str = LINEAR,
):
    """Per-particle objective and constraint vector for a trajectory batch.

    The objective is configuration-space path length plus the weighted start
    alignment term; the constraint vector stacks the weighted placement,
    arm-collision, and carried-block-collision terms in that order.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    geo = _build_geometry(problem, chain, grasp, static_centers, static_radii)
    values = _check_values(values, geo, config)
    P = values.shape[0]
    objective, constraints, _, _ = _evaluate(
        values, geo, config, mode, np.zeros((P, 3)), np.zeros(P), want_grad=False
    )
    return objective, constraints


def al_value_and_gradient(
    values,
    problem,
    chain: KinematicChain,
    config: TrajOptConfig,
    lam,
    mu,
    *,
    grasp: Optional[GraspSpec] = None,
    static_centers=None,
    static_radii=None,
    mode: str = LINEAR,
):
    """Augmented-Lagrangian value and its exact gradient for each particle.

    L = objective + lam . c + (mu / 2) |c|^2, differentiated through forward
    kinematics, the grasp composition, and every penetration term.
    """
    if mode not in MODES:
        raise ValueError(f"unknown mode {mode!r}")
    geo = _build_geometry(problem, chain, grasp, static_centers, static_radii)
    values = _check_values(values, geo, config)
    P = values.shape[0]
    lam = np.broadcast_to(np.asarray(lam, dtype=float), (P, 3)).copy()
    mu = np.broadcast_to(np.asarray(mu, dtype=float), (P,)).copy()
    _, _, lagrangian, grad = _evaluate(values, geo, config, mode, lam, mu, want_grad=True)
    return lagrangian, grad


# ---------------------------------------------------------------------------
# lifting placements into joint space
# ---------------------------------------------------------------------------


def _polish_tool_down(chain: KinematicChain, Q, target_pos, target_yaw):
    """Damped least-squares refinement adding a tool-points-down objective to
    converged position/yaw IK solutions. Returns (Q, ok)."""
    Q = np.array(Q, dtype=float)
    n = len(Q)
    if n == 0:
        return Q, np.zeros(0, dtype=bool)
    cos_tol = math.cos(_POLISH_ANGLE_TOL)
    # joints covering a full revolution wrap instead of clipping; pinning one
    # at +pi while the solution wants to pass through stalls the iteration
    full_circle = (chain.upper - chain.lower) >= 2.0 * math.pi - 1e-9
    for _ in range(_POLISH_MAX_ITERS):
        batch = fk_batch(chain, Q)
        pos_err = target_pos - batch.ee_position
        yaw_err = normalize_yaw(target_yaw - batch.yaw)
        axis = batch.rotation[..., :, 2]
        down_err = -1.0 - axis[..., 2]  # drive tool z toward straight down
        done = (
            (np.linalg.norm(pos_err, axis=1) < IK_POS_TOL)
            & (np.abs(yaw_err) < IK_YAW_TOL)
            & (-axis[..., 2] > cos_tol)
        )
        if np.all(done):
            break
        rel = batch.ee_position[:, None, :] - batch.joint_origins
        jlin = np.cross(batch.joint_axes, rel)  # (N,J,3)
        jyaw = yaw_jacobian_batch(batch)  # (N,J)
        jdown = np.cross(batch.joint_axes, axis[:, None, :])[..., 2]  # d(a_z)/dq
        J5 = np.concatenate(
            [np.swapaxes(jlin, 1, 2), jyaw[:, None, :], jdown[:, None, :]], axis=1
        )  # (N,5,J)
        e5 = np.concatenate([pos_err, yaw_err[:, None], down_err[:, None]], axis=1)
        A = J5 @ np.swapaxes(J5, 1, 2) + IK_DAMPING * np.eye(5)
        y = np.linalg.solve(A, e5[..., None])[..., 0]
        dq = np.einsum("nji,nj->ni", J5, y)
        step = np.minimum(1.0, 0.5 / np.maximum(np.max(np.abs(dq), axis=1), 1e-12))
        dq = dq * step[:, None]
        dq[done] = 0.0
        Q = Q + dq
        Q[:, full_circle] = chain.lower[full_circle] + np.mod(
            Q[:, full_circle] - chain.lower[full_circle], 2.0 * math.pi
        )
        Q = np.clip(Q, chain.lower, chain.upper)

    batch = fk_batch(chain, Q)
    pos_err = np.linalg.norm(target_pos - batch.ee_position, axis=1)
    yaw_err = np.abs(normalize_yaw(target_yaw - batch.yaw))
    ok = (pos_err < IK_POS_TOL) & (yaw_err < IK_YAW_TOL) & (
        -batch.rotation[..., 2, 2] > cos_tol
    )
    return Q, ok


def _arm_worst_penetration(chain, Q, geo, centers, radii):
    """Worst arm-sphere penetration against fixed spheres, per configuration."""
    fkb = fk_batch(chain, Q)
    link_rot = fkb.link_rotations[..., geo.arm_link, :, :]
    link_pos = fkb.link_positions[..., geo.arm_link, :]
    spheres = np.einsum("...sik,sk->...si", link_rot, geo.arm_local) + link_pos
    d = np.linalg.norm(spheres[:, :, None, :] - centers[None, None, :, :], axis=-1)
    pen = (geo.arm_radii[:, None] + radii[None, :]) - d
    return pen.max(axis=(1, 2))


# Seed offset between successive IK draws; any large constant works, it only
# has to decorrelate the per-target restart streams.
_LIFT_DRAW_STRIDE = 1000003


def lift_placements(
    problem,
    placements,
    chain: KinematicChain,
    grasp: GraspSpec,
    *,
    seed: int = 0,
    static_centers=None,
    static_radii=None,
    candidates: int = 4,
) -> LiftResult:
    """Solve grasp IK over staged and placed poses for each stage-1 particle.

    Endpoint solutions must reach the grasp pose (position within 1e-4, yaw
    within 1e-3) with the tool pointing down to within a small angle; any
    particle containing an unreachable pose is dropped.

    Up to ``candidates`` independently seeded IK draws are made. A target
    whose polish stalls in one draw can succeed in another, and when static
    obstacles are given each target keeps the draw whose arm configuration
    penetrates them least: redundant arms reach most grasps on several elbow
    branches, and downstream trajectory optimization cannot always rotate
    out of a penetrating branch it was started on.
    """
    geo = _build_geometry(problem, chain, grasp, None, None)
    if not geo.manipulation:
        raise TypeError("point-to-point problems carry their own endpoints")
    placements = np.atleast_2d(np.asarray(placements, dtype=float))
    P = placements.shape[0]
    B = geo.n_segments
    model = as_cost_model(problem)
    if placements.shape[1] != model.dimension:
        raise ValueError(
            f"placement rows have dimension {placements.shape[1]}, expected {model.dimension}"
        )

    targets = [grasp_pose(p, grasp) for p in problem.initial_poses]
    for row in placements:
        targets.extend(grasp_pose(p, grasp) for p in model.poses_from_row(row))

    statics_c, statics_r = _as_obstacles(static_centers, static_radii)
    score_branches = len(statics_c) > 0
    target_pos = np.array([t.translation for t in targets])
    target_yaw = np.array([t.yaw for t in targets])

    n_t = len(targets)
    solutions = np.zeros((n_t, chain.dof))
    ok = np.zeros(n_t, dtype=bool)
    best_pen = np.full(n_t, np.inf)
    for attempt in range(max(1, int(candidates))):
        sol, success, _ = ik_solve_batch(
            chain, targets, seed=seed + attempt * _LIFT_DRAW_STRIDE
        )
        sol, polished = _polish_tool_down(chain, sol, target_pos, target_yaw)
        draw_ok = success & polished
        if score_branches:
            pen = _arm_worst_penetration(chain, sol, geo, statics_c, statics_r)
        else:
            pen = np.zeros(n_t)
        better = draw_ok & (~ok | (pen < best_pen))
        solutions[better] = sol[better]
        best_pen[better] = pen[better]
        ok |= draw_ok
        if not score_branches and ok.all():
            break

    pick_ok = ok[:B]
    if not np.all(pick_ok):
        raise LiftFailure(
            f"staged pose {int(np.flatnonzero(~pick_ok)[0])} is not reachable tool-down"
        )
    place_ok = ok[B:].reshape(P, B)
    keep = np.flatnonzero(place_ok.all(axis=1))
    if len(keep) == 0:
        raise LiftFailure("every particle contains an unreachable placement")

    picks = solutions[:B]
    places = solutions[B:].reshape(P, B, chain.dof)
    endpoints = np.empty((len(keep), B, 2, chain.dof))
    endpoints[:, :, 0] = picks[None, :, :]
    endpoints[:, :, 1] = places[keep]
    return LiftResult(endpoints=endpoints, kept=keep)


def motion_endpoints(problem: MotionProblem, particles: int = 1) -> np.ndarray:
    """Endpoint array for a point-to-point problem, one segment per particle."""
    if not isinstance(problem, MotionProblem):
        raise TypeError("motion_endpoints needs a point-to-point problem")
    ends = np.stack([problem.start, problem.goal])[None, None]
    return np.tile(ends, (particles, 1, 1, 1))


# ---------------------------------------------------------------------------
# initialization
# ---------------------------------------------------------------------------


def init_trajectories(
    endpoints, chain: KinematicChain, config: TrajOptConfig, rng: np.random.Generator
) -> np.ndarray:
    """Piecewise-linear seed trajectories through uniformly sampled waypoints.

    Intermediate waypoints are drawn uniformly inside the joint-limit box;
    each leg between consecutive nodes is discretized into k_interp even
    steps. First and last waypoints equal the given endpoints exactly.
    """
    endpoints = np.asarray(endpoints, dtype=float)
    if endpoints.ndim != 4 or endpoints.shape[2] != 2:
        raise ValueError("endpoints must have shape (P, segments, 2, dof)")
    if endpoints.shape[3] != chain.dof:
        raise ValueError("configuration dimension mismatch")
    P, B = endpoints.shape[:2]
    K, steps = config.k_waypoint, config.k_interp
    nodes = np.empty((P, B, K + 2, chain.dof))
    nodes[:, :, 0] = endpoints[:, :, 0]
    nodes[:, :, -1] = endpoints[:, :, 1]
    if K:
        nodes[:, :, 1:-1] = rng.uniform(
            chain.lower, chain.upper, size=(P, B, K, chain.dof)
        )
    T = steps * (K + 1) + 1
    out = np.empty((P, B, T, chain.dof))
    for leg in range(K + 1):
        a = nodes[:, :, leg]
        d = nodes[:, :, leg + 1] - a
        for s in range(steps):
            out[:, :, leg * steps + s] = a + d * (s / steps)
    out[:, :, -1] = nodes[:, :, -1]
    return out


# ---------------------------------------------------------------------------
# the augmented-Lagrangian solve
# ---------------------------------------------------------------------------


def _particle_trajectory(values_p, geo: _Geometry) -> Trajectory:
    attached = tuple(range(geo.n_segments)) if geo.manipulation else (None,) * geo.n_segments
    return Trajectory(segments=values_p.copy(), attached=attached)


def solve_al(
    values,
    problem,
    chain: KinematicChain,
    config: TrajOptConfig,
    *,
    grasp: Optional[GraspSpec] = None,
    static_centers=None,
    static_radii=None,
) -> AlResult:
    """Optimize a trajectory batch and return the best validated particle.

    Inner loop: plain gradient descent on the augmented Lagrangian with a
    linearly decaying learning rate, elementwise step clamp, and joint-limit
    clamping after every step (point-to-point endpoints stay pinned). For
    manipulation problems, pick waypoints drift under the alignment spring
    during the inner loop and are then retracted to the exact grasp by the
    same damped-least-squares polish the lift uses. The retraction keeps
    whatever null-space (elbow) motion the collision terms produced while
    zeroing the alignment error itself, which growing collision multipliers
    would otherwise hold open against the spring.

    The placement constraint is evaluated in quadratic mode while collision
    terms stay linear: a settled tiling has every placement penetration at
    exactly zero, the kink of the linear hinge, where the nonvanishing
    slopes make plain gradient steps oscillate at amplitude lr * mu and the
    floor rises as mu grows; the quadratic form's gradient vanishes there.
    Collision constraints have interior margin (strictly negative
    penetrations), so the hinge kink is inactive at convergence and linear
    mode's depth-independent push-out helps escape deep initializations.

    Outer loop: multiplier update lambda += mu * c, penalty growth
    mu *= beta whenever the max violation failed to shrink 10x, independent
    validation of every particle, and an accept-if-better rule on feasible
    iterates. Stops at the first outer iteration with a feasible particle.
    """
    geo = _build_geometry(problem, chain, grasp, static_centers, static_radii)
    values = _check_values(values, geo, config).copy()
    P = values.shape[0]

    lam = np.zeros((P, 3))
    mu = np.full(P, float(config.mu0))
    prev_violation = np.full(P, np.inf)
    report = AlReport()
    best_obj = math.inf
    best_particle = -1
    best_values = None
    least_violation = math.inf

    lower, upper = chain.lower, chain.upper
    denom = max(config.inner_steps - 1, 1)
    if geo.manipulation:
        B = values.shape[1]
        pick_pos_flat = np.tile(geo.pick_pos, (P, 1))
        pick_yaw_flat = np.tile(geo.pick_yaw, P)
    for outer in range(config.outer_iters):
        for k in range(config.inner_steps):
            lr = config.lr_init + (config.lr_final - config.lr_init) * (k / denom)
            _, _, _, grad = _evaluate(
                values, geo, config, LINEAR, lam, mu, want_grad=True,
                place_mode=QUADRATIC,
            )
            step = np.clip(lr * grad, -INNER_STEP_CLAMP, INNER_STEP_CLAMP)
            values = np.clip(values - step, lower, upper)
            if not geo.manipulation:
                values[:, 0, 0] = geo.problem.start
                values[:, 0, -1] = geo.problem.goal

        if geo.manipulation:
            flat = values[:, :, 0].reshape(P * B, chain.dof)
            retracted, _ = _polish_tool_down(chain, flat, pick_pos_flat, pick_yaw_flat)
            values[:, :, 0] = retracted.reshape(P, B, chain.dof)

        objective, constraints, _, _ = _evaluate(
            values, geo, config, LINEAR, lam, mu, want_grad=False,
            place_mode=QUADRATIC,
        )
        updated = lam + mu[:, None] * constraints

        feasible = np.zeros(P, dtype=bool)
        violation = np.empty(P)
        for p in range(P):
            feasible[p], violation[p] = validate(
                _particle_trajectory(values[p], geo),
                problem,
                chain,
                grasp=grasp,
                static_centers=static_centers,
                static_radii=static_radii,
                epsilon=config.validation_epsilon,
            )
        least_violation = min(least_violation, float(violation.min()))

        report.outers.append(
            OuterRecord(
                index=outer,
                mu=mu.copy(),
                multipliers=lam.copy(),
                constraints=constraints.copy(),
                updated_multipliers=updated.copy(),
                objective=objective.copy(),
                feasible=feasible.copy(),
                violation=violation.copy(),
            )
        )

        for p in np.flatnonzero(feasible):
            if objective[p] < best_obj:
                best_obj = float(objective[p])
                best_particle = int(p)
                best_values = values[p].copy()
                report.accepted_objectives.append(best_obj)
        if best_values is not None:
            break

        lam = updated
        v = constraints.max(axis=1)
        mu = np.where(v > prev_violation / 10.0, mu * config.beta, mu)
        prev_violation = v

    if best_values is None:
        raise TrajOptFailure(least_violation, report)
    return AlResult(
        trajectory=_particle_trajectory(best_values, geo),
        objective=best_obj,
        particle_index=best_particle,
        report=report,
    )


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


def validate(
    trajectory: Trajectory,
    problem,
    chain: KinematicChain,
    *,
    grasp: Optional[GraspSpec] = None,
    static_centers=None,
    static_radii=None,
    epsilon: float = DEFAULT_VALIDATION_EPSILON,
):
    """Recompute every feasibility quantity from scratch for one trajectory.

    Checks, per waypoint: joint-limit excess and the worst single sphere
    penetration (arm everywhere, carried block on the interior); plus grasp
    alignment at each segment start (position, yaw, and tool-down angle),
    the final-placement cost, and, for point-to-point problems, endpoint
    drift. Feasible iff the maximum of all quantities is below epsilon.
    """
    geo = _build_geometry(problem, chain, grasp, static_centers, static_radii)
    segs = np.asarray(trajectory.segments, dtype=float)
    if segs.shape[0] != geo.n_segments or segs.shape[2] != chain.dof:
        raise ValueError("trajectory does not match the problem layout")
    B, T, _ = segs.shape
    worst = 0.0

    placed_spheres = []
    placed_poses = []
    if geo.manipulation:
        for b in range(B):
            ee_pose = fk(chain, segs[b, -1]).pose
            pose = inverse_grasp(ee_pose, geo.grasp)
            placed_poses.append(pose)
            world = (geo.block_u[b] + geo.grasp.offset) @ _rot_z(pose.yaw).T + np.array(
                pose.translation
            )
            placed_spheres.append(world)

    for b in range(B):
        obs_c = [geo.fixed_obs_centers[b if geo.manipulation else 0]]
        obs_r = [geo.fixed_obs_radii[b if geo.manipulation else 0]]
        for j in range(b):
            obs_c.append(placed_spheres[j])
            obs_r.append(geo.block_radii[j])
        obs_c = np.concatenate(obs_c)
        obs_r = np.concatenate(obs_r)
        for t in range(T):
            q = segs[b, t]
            excess = np.maximum(q - chain.upper, chain.lower - q)
            worst = max(worst, float(np.max(excess, initial=0.0)))
            state = fk(chain, q)
            centers, radii, _ = state.link_sphere_centers(chain)
            if len(obs_c):
                if len(centers):
                    d = np.linalg.norm(centers[:, None, :] - obs_c[None, :, :], axis=-1)
                    pen = (radii[:, None] + obs_r[None, :]) - d
                    worst = max(worst, float(np.max(pen, initial=0.0)))
                if geo.manipulation and 1 <= t <= T - 2:
                    held = geo.block_u[b] @ (state.rotation @ _FLIP).T + state.ee_position
                    d = np.linalg.norm(held[:, None, :] - obs_c[None, :, :], axis=-1)
                    pen = (geo.block_radii[b][:, None] + obs_r[None, :]) - d
                    worst = max(worst, float(np.max(pen, initial=0.0)))
        if geo.manipulation:
            state0 = fk(chain, segs[b, 0])
            worst = max(
                worst, float(np.linalg.norm(state0.ee_position - geo.pick_pos[b]))
            )
            worst = max(worst, abs(normalize_yaw(state0.pose.yaw - geo.pick_yaw[b])))
            cos_down = float(np.clip(-state0.rotation[2, 2], -1.0, 1.0))
            worst = max(worst, math.acos(cos_down))

    if geo.manipulation:
        rows = np.array(
            [[p.x, p.y, p.z, p.yaw] for p in placed_poses], dtype=float
        ).reshape(1, 4 * B)
        place = float(geo.place_model.evaluate(rows, LINEAR)[0])
        if geo.anchor_yaw:
            place += float(np.sum(np.abs(normalize_yaw(rows[0, 3::4]))))
        worst = max(worst, place)
    else:
        worst = max(worst, float(np.max(np.abs(segs[0, 0] - geo.problem.start), initial=0.0)))
        worst = max(worst, float(np.max(np.abs(segs[0, -1] - geo.problem.goal), initial=0.0)))

    return bool(worst < epsilon), worst


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------


def trajectory_path_length(trajectory: Trajectory) -> float:
    segs = trajectory.segments
    return float(np.sum(np.linalg.norm(np.diff(segs, axis=1), axis=-1)))


def save_trajectory(trajectory: Trajectory, path, *, max_violation: float) -> None:
    """Write a trajectory as line-oriented text, one waypoint per line."""
    segs = trajectory.segments
    B, T, dof = segs.shape
    lines = [
        f"# path_length={trajectory_path_length(trajectory):.9g}",
        f"# max_violation={max_violation:.9g}",
        f"# columns: segment_index, t, q1..q{dof}",
    ]
    for b in range(B):
        for t in range(T):
            q = ", ".join(f"{v:.12g}" for v in segs[b, t])
            lines.append(f"{b}, {t}, {q}")
    _Path(path).write_text("\n".join(lines) + "\n")
