"""Flat packing problem: polyomino blocks dropped into a walled box.

The box interior is an axis-aligned region that the block cells tile
exactly (total cell area must equal the footprint area). Costs are
penetration depths between block spheres, between block spheres and
the four wall spheres, and a height term pulling every block's pose z
to the packing plane ``z_star``.

Walls are modelled as one very large sphere per side whose surface is
flush with the wall plane; at radius 100x the box extent, the surface
curvature error across the box is far below the satisfaction threshold.
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
    pen_sets,
    transform,
)
from ..particle_opt import CostModel
from ._interactions import SphereInteractions
from .shapes import BlockShape

YAW_FIXED = "fixed"
YAW_FREE = "quantized-free"
YAW_MODES = (YAW_FIXED, YAW_FREE)

WALL_RADIUS_FACTOR = 100.0
AREA_BALANCE_RTOL = 1e-9


@dataclass(frozen=True)
class PackingWeights:
    """Term weights: block-block overlap, block-wall overlap, height error."""

    block_block: float = 1.0
    block_wall: float = 1.0
    height: float = 1.0

    def __post_init__(self) -> None:
        if min(self.block_block, self.block_wall, self.height) < 0:
            raise ValueError("packing weights must be nonnegative")


def box_wall_spheres(box: Aabb, z_plane: float, radius: float) -> tuple[np.ndarray, np.ndarray]:
    """One flush sphere per vertical wall of the box footprint.

    Each sphere sits outside the box with its surface tangent to the wall
    plane at height ``z_plane`` (the plane of the block sphere centres).
    """
    (x0, y0), (x1, y1) = box.min[:2], box.max[:2]
    xc, yc = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
    centers = np.array(
        [
            [x0 - radius, yc, z_plane],
            [x1 + radius, yc, z_plane],
            [xc, y0 - radius, z_plane],
            [xc, y1 + radius, z_plane],
        ]
    )
    return centers, np.full(4, radius)


@dataclass
class TetrisProblem:
    """Pack a fixed multiset of polyomino blocks into a box, one layer deep.

    ``initial_poses`` (optional) are the staged world poses the blocks start
    from when a robot has to carry them into the box; the placement cost
    itself never reads them.
    """

    blocks: tuple[BlockShape, ...]
    box: Aabb
    z_star: float
    yaw_mode: str = YAW_FIXED
    weights: PackingWeights = field(default_factory=PackingWeights)
    initial_poses: tuple[Pose, ...] | None = None
    tight_packing: bool = True

    def __post_init__(self) -> None:
        self.blocks = tuple(self.blocks)
        if not self.blocks:
            raise ValueError("TetrisProblem needs at least one block")
        if self.yaw_mode not in YAW_MODES:
            raise ValueError(f"yaw_mode must be one of {YAW_MODES}")
        if self.box.min.shape != (3,):
            raise ValueError("box must be three-dimensional")
        sizes = {b.cell_size for b in self.blocks}
        if len(sizes) != 1:
            raise ValueError("all blocks must share one cell_size")
        if not (self.box.min[2] <= self.z_star <= self.box.max[2]):
            raise ValueError("z_star must lie inside the box z range")
        if self.initial_poses is not None:
            self.initial_poses = tuple(self.initial_poses)
            if len(self.initial_poses) != len(self.blocks):
                raise ValueError("initial_poses length must match blocks")
        if self.tight_packing:
            footprint = float(
                (self.box.max[0] - self.box.min[0]) * (self.box.max[1] - self.box.min[1])
            )
            cell_area = float(sum(b.area for b in self.blocks))
            if abs(cell_area - footprint) > AREA_BALANCE_RTOL * max(footprint, 1.0):
                raise ValueError(
                    "tight-packing area balance violated: total block cell area "
                    f"{cell_area:.9g} != box footprint area {footprint:.9g}"
                )
        radius = WALL_RADIUS_FACTOR * float(
            max(self.box.max[0] - self.box.min[0], self.box.max[1] - self.box.min[1])
        )
        self.wall_centers, self.wall_radii = box_wall_spheres(
            self.box, self.z_star + 0.5 * self.cell_size, radius
        )

    @property
    def n_blocks(self) -> int:
        return len(self.blocks)

    @property
    def cell_size(self) -> float:
        return self.blocks[0].cell_size


def tetris_cost(problem: TetrisProblem, poses: list[Pose], mode: str = LINEAR) -> float:
    """Reference scalar packing cost for one full block arrangement.

    Straightforward loops over geometry primitives; the batched model is
    checked against this path.
    """
    _check_mode(mode)
    if len(poses) != problem.n_blocks:
        raise ValueError("need one pose per block")
    w = problem.weights
    worlds = [transform(b.sphere_set, p) for b, p in zip(problem.blocks, poses)]
    radii = [b.sphere_set.radii for b in problem.blocks]
    total = 0.0
    for i in range(problem.n_blocks):
        for j in range(i + 1, problem.n_blocks):
            total += w.block_block * pen_sets(worlds[i], radii[i], worlds[j], radii[j], mode)
    for i in range(problem.n_blocks):
        total += w.block_wall * pen_sets(
            worlds[i], radii[i], problem.wall_centers, problem.wall_radii, mode
        )
    for pose in poses:
        dz = pose.z - problem.z_star
        total += w.height * (abs(dz) if mode == LINEAR else dz * dz)
    return float(total)


class TetrisCostModel(CostModel):
    """Batched packing cost over pose rows.

    Row layout is block-major: (x, y, z) per block in fixed-yaw mode,
    (x, y, z, yaw) in free-yaw mode. Translation bounds shrink the box by
    each block's own yaw-0 extent, so clamped fixed-yaw blocks can never
    leave the box.
    """

    def __init__(self, problem: TetrisProblem):
        self.problem = problem
        self.free_yaw = problem.yaw_mode == YAW_FREE
        self.per_block = 4 if self.free_yaw else 3
        n = problem.n_blocks
        box = problem.box
        lower = np.empty(n * self.per_block)
        upper = np.empty(n * self.per_block)
        for b, shape in enumerate(problem.blocks):
            o = b * self.per_block
            lower[o : o + 3] = [box.min[0], box.min[1], box.min[2]]
            upper[o : o + 3] = [
                box.max[0] - shape.width,
                box.max[1] - shape.height,
                box.max[2],
            ]
            if self.free_yaw:
                lower[o + 3] = -np.pi
                upper[o + 3] = np.pi
        super().__init__(n * self.per_block, lower, upper)
        self._core = SphereInteractions(
            [b.sphere_set.centers for b in problem.blocks],
            [b.sphere_set.radii for b in problem.blocks],
            problem.wall_centers,
            problem.wall_radii,
            body_body_weight=problem.weights.block_block,
            body_static_weight=problem.weights.block_wall,
        )

    def split(self, values: np.ndarray) -> tuple[np.ndarray, np.ndarray | None]:
        """(P, D) rows -> positions (P, n, 3) and yaws (P, n) or None."""
        v = np.asarray(values, dtype=float)
        per = v.reshape(v.shape[0], self.problem.n_blocks, self.per_block)
        pos = per[..., :3]
        yaw = per[..., 3] if self.free_yaw else None
        return pos, yaw

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

    def evaluate(self, values: np.ndarray, mode: str) -> np.ndarray:
        _check_mode(mode)
        pos, yaw = self.split(values)
        cost = self._core.evaluate(pos, yaw, mode)
        dz = pos[..., 2] - self.problem.z_star
        height = np.abs(dz) if mode == LINEAR else dz * dz
        return cost + self.problem.weights.height * height.sum(axis=1)

    def gradient(self, values: np.ndarray, mode: str) -> np.ndarray:
        _check_mode(mode)
        pos, yaw = self.split(values)
        grad_pos, grad_yaw = self._core.gradient(pos, yaw, mode)
        dz = pos[..., 2] - self.problem.z_star
        if mode == LINEAR:
            grad_pos[..., 2] += self.problem.weights.height * np.sign(dz)
        else:
            grad_pos[..., 2] += self.problem.weights.height * 2.0 * dz
        p = grad_pos.shape[0]
        out = np.empty((p, self.dimension))
        per = out.reshape(p, self.problem.n_blocks, self.per_block)
        per[..., :3] = grad_pos
        if self.free_yaw:
            per[..., 3] = grad_yaw
        return out
