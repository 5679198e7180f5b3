"""Stacking problem: uniform cubes piled into a stable tower.

Each cube is one inscribed sphere and its pose is the cube centre. The
cost pulls cube i (1-based) to height i * side, keeps the centre of mass
of everything above each cube over that cube's support footprint, and
penalizes sphere overlap between cubes and against static obstacles.

Stability is measured as the planar distance from the above-group centre
of mass to the (possibly yawed) square footprint of the supporting cube;
zero whenever the centre of mass is over the footprint.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..geometry import (
    LINEAR,
    QUADRATIC,
    Aabb,
    Pose,
    _check_mode,
    pen_pair,
    pen_sets,
    rotation_z,
)
from ..particle_opt import CostModel
from .tetris import YAW_FIXED, YAW_FREE, YAW_MODES


@dataclass(frozen=True)
class TowerWeights:
    """Term weights: support stability, height targets, sphere overlap."""

    stability: float = 1.0
    height: float = 1.0
    collision: float = 1.0

    def __post_init__(self) -> None:
        if min(self.stability, self.height, self.collision) < 0:
            raise ValueError("tower weights must be nonnegative")


@dataclass
class TowerProblem:
    """Stack ``n_blocks`` cubes of edge ``side`` inside a workspace box.

    The workspace box bounds the cube centres directly. ``table_height`` is
    the tabletop surface z, used by the motion stage; the placement cost
    itself only reads the height targets i * side.
    """

    n_blocks: int
    side: float
    box: Aabb
    obstacle_centers: np.ndarray | None = None
    obstacle_radii: np.ndarray | None = None
    yaw_mode: str = YAW_FIXED
    weights: TowerWeights = field(default_factory=TowerWeights)
    footprint_halfwidth: float | None = None
    table_height: float = 0.0
    initial_poses: tuple[Pose, ...] | None = None

    def __post_init__(self) -> None:
        if self.n_blocks < 2:
            raise ValueError("TowerProblem needs at least two blocks")
        if self.side <= 0:
            raise ValueError("cube side must be positive")
        if self.yaw_mode not in YAW_MODES:
            raise ValueError(f"yaw_mode must be one of {YAW_MODES}")
        if self.box.min.shape != (3,):
            raise ValueError("box must be three-dimensional")
        if self.obstacle_centers is None:
            self.obstacle_centers = np.zeros((0, 3))
            self.obstacle_radii = np.zeros(0)
        else:
            self.obstacle_centers = np.asarray(self.obstacle_centers, dtype=float).reshape(-1, 3)
            self.obstacle_radii = np.asarray(self.obstacle_radii, dtype=float).reshape(-1)
            if len(self.obstacle_centers) != len(self.obstacle_radii):
                raise ValueError("obstacle centers/radii length mismatch")
        if self.footprint_halfwidth is None:
            self.footprint_halfwidth = 0.5 * self.side
        if self.footprint_halfwidth <= 0:
            raise ValueError("footprint_halfwidth must be positive")
        if self.initial_poses is not None:
            self.initial_poses = tuple(self.initial_poses)
            if len(self.initial_poses) != self.n_blocks:
                raise ValueError("initial_poses length must match n_blocks")

    @property
    def sphere_radius(self) -> float:
        return 0.5 * self.side

    def height_target(self, index: int) -> float:
        """Target centre height of the block at 0-based ``index``."""
        return (index + 1) * self.side


def _footprint_distance(rel_local: np.ndarray, half: float) -> float:
    """Planar distance from a point (in the cube frame) to the square footprint."""
    clamped = np.clip(rel_local, -half, half)
    return float(np.hypot(*(rel_local - clamped)))


def tower_placement_cost(problem: TowerProblem, poses: list[Pose], mode: str = LINEAR) -> float:
    """Reference scalar stacking cost for one full tower arrangement."""
    _check_mode(mode)
    if len(poses) != problem.n_blocks:
        raise ValueError("need one pose per block")
    w = problem.weights
    half = problem.footprint_halfwidth
    r = problem.sphere_radius
    sq = mode == QUADRATIC

    total = 0.0
    for i in range(problem.n_blocks - 1):
        above = poses[i + 1 :]
        com = np.mean([[p.x, p.y] for p in above], axis=0)
        rel = com - np.array([poses[i].x, poses[i].y])
        rel_local = rotation_z(-poses[i].yaw)[:2, :2] @ rel
        dist = _footprint_distance(rel_local, half)
        total += w.stability * (dist * dist if sq else dist)
    for i, pose in enumerate(poses):
        dz = pose.z - problem.height_target(i)
        total += w.height * (dz * dz if sq else abs(dz))
    for i in range(problem.n_blocks):
        for j in range(i + 1, problem.n_blocks):
            pen = pen_pair(poses[i].translation, r, poses[j].translation, r)
            total += w.collision * (pen * pen if sq else pen)
    if len(problem.obstacle_centers):
        for pose in poses:
            total += w.collision * pen_sets(
                pose.translation[None, :],
                np.array([r]),
                problem.obstacle_centers,
                problem.obstacle_radii,
                mode,
            )
    return float(total)


class TowerCostModel(CostModel):
    """Batched stacking cost over pose rows.

    Row layout is block-major: (x, y, z) per cube, plus yaw in free-yaw
    mode. Workspace bounds apply to the cube centres as authored.
    """

    def __init__(self, problem: TowerProblem):
        self.problem = problem
        self.free_yaw = problem.yaw_mode == YAW_FREE
        self.per_block = 4 if self.free_yaw else 3
        n = problem.n_blocks
        box = problem.box
        lower = np.empty(n * self.per_block)
        upper = np.empty(n * self.per_block)
        for b in range(n):
            o = b * self.per_block
            lower[o : o + 3] = box.min
            upper[o : o + 3] = box.max
            if self.free_yaw:
                lower[o + 3] = -np.pi
                upper[o + 3] = np.pi
        super().__init__(n * self.per_block, lower, upper)
        self._targets = np.array([problem.height_target(b) for b in range(n)])
        # Cube-cube and cube-obstacle overlap, all single spheres.
        idx_i, idx_j = np.triu_indices(n, k=1)
        self._pair_i, self._pair_j = idx_i, idx_j
        self._rsum_pairs = np.full(len(idx_i), problem.side)
        self._obs_centers = problem.obstacle_centers
        self._obs_radii = problem.obstacle_radii

    def split(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        v = np.asarray(values, dtype=float)
        per = v.reshape(v.shape[0], self.problem.n_blocks, self.per_block)
        return per[..., :3], (per[..., 3] if self.free_yaw else None)

    def poses_from_row(self, row: np.ndarray) -> list[Pose]:
        pos, yaw = self.split(np.asarray(row)[None, :])
        return [
            Pose(*pos[0, b], yaw=float(yaw[0, b]) if yaw is not None else 0.0)
            for b in range(self.problem.n_blocks)
        ]

    def row_from_poses(self, poses: list[Pose]) -> np.ndarray:
        if len(poses) != self.problem.n_blocks:
            raise ValueError("need one pose per block")
        per = np.empty((self.problem.n_blocks, self.per_block))
        for b, p in enumerate(poses):
            per[b, :3] = (p.x, p.y, p.z)
            if self.free_yaw:
                per[b, 3] = p.yaw
        return per.reshape(-1)

    def _stability_terms(
        self, pos: np.ndarray, yaw: np.ndarray | None
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray | None]:
        """Distances plus the pieces needed for the chain rule.

        Returns (dist (P, B-1), rel world (P, B-1, 2), unit direction in the
        support frame (P, B-1, 2), d(rel_local)/d(yaw) or None).
        """
        b = self.problem.n_blocks
        half = self.problem.footprint_halfwidth
        xy = pos[..., :2]
        # Suffix means: com above support i = mean of xy[:, i+1:].
        suffix = np.cumsum(xy[:, ::-1, :], axis=1)[:, ::-1, :]
        counts = np.arange(b - 1, 0, -1, dtype=float)
        com = suffix[:, 1:, :] / counts[None, :, None]
        rel = com - xy[:, : b - 1, :]
        if yaw is None:
            rel_local = rel
            drel_dyaw = None
        else:
            th = yaw[:, : b - 1]
            c, s = np.cos(th), np.sin(th)
            # R(-th) rel and its derivative w.r.t. th
            rel_local = np.stack(
                [c * rel[..., 0] + s * rel[..., 1], -s * rel[..., 0] + c * rel[..., 1]],
                axis=-1,
            )
            drel_dyaw = np.stack(
                [-s * rel[..., 0] + c * rel[..., 1], -c * rel[..., 0] - s * rel[..., 1]],
                axis=-1,
            )
        clamped = np.clip(rel_local, -half, half)
        delta = rel_local - clamped
        dist = np.sqrt(np.sum(delta * delta, axis=-1))
        unit = np.where(dist[..., None] > 0.0, delta / np.where(dist[..., None] > 0, dist[..., None], 1.0), 0.0)
        return dist, rel, unit, drel_dyaw

    def evaluate(self, values: np.ndarray, mode: str) -> np.ndarray:
        _check_mode(mode)
        pr = self.problem
        w = pr.weights
        sq = mode == QUADRATIC
        pos, yaw = self.split(values)
        total = np.zeros(pos.shape[0])

        if pr.n_blocks > 1:
            dist, _, _, _ = self._stability_terms(pos, yaw)
            total += w.stability * (dist * dist if sq else dist).sum(axis=1)

        dz = pos[..., 2] - self._targets
        total += w.height * (dz * dz if sq else np.abs(dz)).sum(axis=1)

        if len(self._pair_i):
            diff = pos[:, self._pair_i, :] - pos[:, self._pair_j, :]
            d = np.sqrt(np.sum(diff * diff, axis=-1))
            pen = np.maximum(0.0, self._rsum_pairs - d)
            total += w.collision * (pen * pen if sq else pen).sum(axis=1)
        if len(self._obs_centers):
            diff = pos[:, :, None, :] - self._obs_centers[None, None, :, :]
            d = np.sqrt(np.sum(diff * diff, axis=-1))
            pen = np.maximum(0.0, (pr.sphere_radius + self._obs_radii) - d)
            total += w.collision * (pen * pen if sq else pen).sum(axis=(1, 2))
        return total

    def gradient(self, values: np.ndarray, mode: str) -> np.ndarray:
        _check_mode(mode)
        pr = self.problem
        w = pr.weights
        sq = mode == QUADRATIC
        pos, yaw = self.split(values)
        p, b = pos.shape[0], pr.n_blocks
        grad_pos = np.zeros((p, b, 3))
        grad_yaw = np.zeros((p, b)) if self.free_yaw else None

        if b > 1 and w.stability > 0:
            dist, rel, unit, drel_dyaw = self._stability_terms(pos, yaw)
            factor = w.stability * (2.0 * dist if sq else np.where(dist > 0, 1.0, 0.0))
            g_local = factor[..., None] * unit  # d cost / d rel_local
            if yaw is None:
                g_world = g_local
            else:
                th = yaw[:, : b - 1]
                c, s = np.cos(th), np.sin(th)
                # transpose of R(-th) maps frame gradients back to world
                g_world = np.stack(
                    [
                        c * g_local[..., 0] - s * g_local[..., 1],
                        s * g_local[..., 0] + c * g_local[..., 1],
                    ],
                    axis=-1,
                )
                grad_yaw[:, : b - 1] += np.sum(g_local * drel_dyaw, axis=-1)
            counts = np.arange(b - 1, 0, -1, dtype=float)
            shared = g_world / counts[None, :, None]
            grad_pos[:, 1:, :2] += np.cumsum(shared, axis=1)
            grad_pos[:, : b - 1, :2] -= g_world

        dz = pos[..., 2] - self._targets
        grad_pos[..., 2] += w.height * (2.0 * dz if sq else np.sign(dz))

        if len(self._pair_i) and w.collision > 0:
            diff = pos[:, self._pair_i, :] - pos[:, self._pair_j, :]
            d = np.sqrt(np.sum(diff * diff, axis=-1))
            pen = np.maximum(0.0, self._rsum_pairs - d)
            active = (pen > 0.0) & (d > 0.0)
            factor = w.collision * (2.0 * pen if sq else 1.0)
            scale = np.where(active, -factor / np.where(d > 0, d, 1.0), 0.0)
            g = scale[..., None] * diff
            for k in range(len(self._pair_i)):
                grad_pos[:, self._pair_i[k], :] += g[:, k, :]
                grad_pos[:, self._pair_j[k], :] -= g[:, k, :]
        if len(self._obs_centers) and w.collision > 0:
            diff = pos[:, :, None, :] - self._obs_centers[None, None, :, :]
            d = np.sqrt(np.sum(diff * diff, axis=-1))
            pen = np.maximum(0.0, (pr.sphere_radius + self._obs_radii) - d)
            active = (pen > 0.0) & (d > 0.0)
            factor = w.collision * (2.0 * pen if sq else 1.0)
            scale = np.where(active, -factor / np.where(d > 0, d, 1.0), 0.0)
            grad_pos += np.sum(scale[..., None] * diff, axis=2)

        out = np.empty((p, self.dimension))
        per = out.reshape(p, b, self.per_block)
        per[..., :3] = grad_pos
        if self.free_yaw:
            per[..., 3] = grad_yaw
        return out
