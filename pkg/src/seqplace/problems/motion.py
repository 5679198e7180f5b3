"""Point-to-point arm motion problem: no objects, just obstacles."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..robot import KinematicChain


@dataclass
class MotionProblem:
    """Move an arm from a start to a goal configuration around obstacles.

    Obstacles are world-frame spheres. There is no placement stage; the
    trajectory stage consumes this directly.
    """

    chain: KinematicChain
    start: np.ndarray
    goal: np.ndarray
    obstacle_centers: np.ndarray | None = None
    obstacle_radii: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.start = np.asarray(self.start, dtype=float).reshape(-1)
        self.goal = np.asarray(self.goal, dtype=float).reshape(-1)
        dof = self.chain.dof
        if self.start.shape != (dof,) or self.goal.shape != (dof,):
            raise ValueError(f"start/goal must have shape ({dof},)")
        if not (np.all(np.isfinite(self.start)) and np.all(np.isfinite(self.goal))):
            raise ValueError("start/goal must be finite")
        for name, q in (("start", self.start), ("goal", self.goal)):
            if np.any(q < self.chain.lower) or np.any(q > self.chain.upper):
                raise ValueError(f"{name} configuration violates joint limits")
        if self.obstacle_centers is None:
            self.obstacle_centers = np.zeros((0, 3))
            self.obstacle_radii = np.zeros(0)
        else:
            self.obstacle_centers = np.asarray(self.obstacle_centers, dtype=float).reshape(-1, 3)
            self.obstacle_radii = np.asarray(self.obstacle_radii, dtype=float).reshape(-1)
            if len(self.obstacle_centers) != len(self.obstacle_radii):
                raise ValueError("obstacle centers/radii length mismatch")
