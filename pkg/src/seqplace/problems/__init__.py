"""Benchmark problem families, their batched cost models, and scene files."""

from .loader import (
    Scene,
    SceneError,
    SOLVER_KEYS,
    TRAJOPT_KEYS,
    bundled_scene_names,
    load_scene,
    parse_scene,
)
from .motion import MotionProblem
from .shapes import BlockShape
from .tetris import (
    YAW_FIXED,
    YAW_FREE,
    PackingWeights,
    TetrisCostModel,
    TetrisProblem,
    tetris_cost,
)
from .tower import TowerCostModel, TowerProblem, TowerWeights, tower_placement_cost

__all__ = [
    "BlockShape",
    "MotionProblem",
    "PackingWeights",
    "Scene",
    "SceneError",
    "SOLVER_KEYS",
    "TRAJOPT_KEYS",
    "TetrisCostModel",
    "TetrisProblem",
    "TowerCostModel",
    "TowerProblem",
    "TowerWeights",
    "YAW_FIXED",
    "YAW_FREE",
    "as_cost_model",
    "bundled_scene_names",
    "load_scene",
    "parse_scene",
    "tetris_cost",
    "tower_placement_cost",
]


def as_cost_model(problem):
    """Batched cost model for a placement problem instance."""
    if isinstance(problem, TetrisProblem):
        return TetrisCostModel(problem)
    if isinstance(problem, TowerProblem):
        return TowerCostModel(problem)
    raise TypeError(
        f"no placement cost model for {type(problem).__name__}; "
        "motion problems go straight to the trajectory stage"
    )
