"""Scene files: JSON descriptions of benchmark problems.

A scene bundles one problem instance with the optional robot, grasp
geometry, and per-scene solver/trajectory defaults. The schema is closed:
unknown or missing fields fail with the JSON path of the offending field,
so a typo in a scene file cannot silently change a benchmark.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from ..geometry import Aabb, Pose, rotation_z
from ..robot import GraspSpec, Joint, KinematicChain, SphereSet, planar_arm, spatial_arm_7dof
from .motion import MotionProblem
from .shapes import BlockShape
from .tetris import YAW_MODES, PackingWeights, TetrisProblem
from .tower import TowerProblem, TowerWeights

PROBLEM_TYPES = ("tetris", "tower", "motion")

SOLVER_KEYS = frozenset(
    {"n", "m", "k_lin", "k_quad", "eta_init", "alpha", "epsilon", "p_return", "max_restarts"}
)
# Kept in sync with the trajectory stage's config fields (asserted in tests).
TRAJOPT_KEYS = frozenset(
    {
        "k_waypoint",
        "k_interp",
        "w_start",
        "w_arm",
        "w_block",
        "w_place",
        "mu0",
        "beta",
        "outer_iters",
        "inner_steps",
        "lr_init",
        "lr_final",
        "validation_epsilon",
    }
)

BUILTIN_ARMS = ("planar3", "spatial7")


class SceneError(ValueError):
    """Scene file rejected; the message carries the JSON path of the fault."""


@dataclass
class Scene:
    """A loaded benchmark scene.

    ``obstacle_centers``/``obstacle_radii`` are the world-frame static
    spheres of the scene, also mirrored into the problem where the problem
    type carries its own obstacle fields.
    """

    problem: "TetrisProblem | TowerProblem | MotionProblem"
    chain: KinematicChain | None = None
    grasp: GraspSpec | None = None
    solver_overrides: dict = field(default_factory=dict)
    trajopt_overrides: dict = field(default_factory=dict)
    obstacle_centers: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    obstacle_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    name: str = ""
    path: str | None = None


def _fail(path: str, msg: str) -> None:
    raise SceneError(f"{path}: {msg}")


def _check_keys(obj: dict, path: str, required: set[str], optional: set[str]) -> None:
    if not isinstance(obj, dict):
        _fail(path, f"expected an object, got {type(obj).__name__}")
    missing = required - obj.keys()
    if missing:
        _fail(path, f"missing required field(s) {sorted(missing)}")
    unknown = obj.keys() - required - optional
    if unknown:
        _fail(path, f"unknown field(s) {sorted(unknown)}")


def _number(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        _fail(path, f"expected a number, got {type(value).__name__}")
    if not np.isfinite(value):
        _fail(path, "number must be finite")
    return float(value)


def _integer(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        _fail(path, f"expected an integer, got {type(value).__name__}")
    return int(value)


def _string(value, path: str) -> str:
    if not isinstance(value, str):
        _fail(path, f"expected a string, got {type(value).__name__}")
    return value


def _vector(value, path: str, n: int | None = None) -> np.ndarray:
    if not isinstance(value, list):
        _fail(path, f"expected an array, got {type(value).__name__}")
    if n is not None and len(value) != n:
        _fail(path, f"expected {n} entries, got {len(value)}")
    return np.array([_number(v, f"{path}[{i}]") for i, v in enumerate(value)])


def _list(value, path: str) -> list:
    if not isinstance(value, list):
        _fail(path, f"expected an array, got {type(value).__name__}")
    return value


def _parse_box(value, path: str) -> Aabb:
    _check_keys(value, path, {"min", "max"}, set())
    lo = _vector(value["min"], f"{path}.min", 3)
    hi = _vector(value["max"], f"{path}.max", 3)
    try:
        return Aabb(lo, hi)
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_blocks(value, path: str) -> list[BlockShape]:
    blocks = []
    for i, entry in enumerate(_list(value, path)):
        epath = f"{path}[{i}]"
        _check_keys(entry, epath, {"cells", "cell_size"}, {"name"})
        cells = []
        for j, cell in enumerate(_list(entry["cells"], f"{epath}.cells")):
            vec = _vector(cell, f"{epath}.cells[{j}]", 2)
            if not np.allclose(vec, np.round(vec)):
                _fail(f"{epath}.cells[{j}]", "cell coordinates must be integers")
            cells.append((int(round(vec[0])), int(round(vec[1]))))
        name = _string(entry.get("name", f"block{i}"), f"{epath}.name")
        size = _number(entry["cell_size"], f"{epath}.cell_size")
        try:
            blocks.append(BlockShape(name, tuple(cells), size))
        except ValueError as exc:
            _fail(epath, str(exc))
    if not blocks:
        _fail(path, "at least one block required")
    return blocks


def _parse_obstacles(value, path: str) -> tuple[np.ndarray, np.ndarray]:
    centers, radii = [], []
    for i, entry in enumerate(_list(value, path)):
        epath = f"{path}[{i}]"
        _check_keys(entry, epath, {"centers", "radii"}, {"pose"})
        cs = [
            _vector(c, f"{epath}.centers[{j}]", 3)
            for j, c in enumerate(_list(entry["centers"], f"{epath}.centers"))
        ]
        rs = _vector(entry["radii"], f"{epath}.radii", len(cs))
        if np.any(rs <= 0):
            _fail(f"{epath}.radii", "radii must be strictly positive")
        world = np.array(cs).reshape(-1, 3)
        if "pose" in entry:
            p = _vector(entry["pose"], f"{epath}.pose", 4)
            world = world @ rotation_z(p[3]).T + p[:3]
        centers.append(world)
        radii.append(rs)
    if not centers:
        return np.zeros((0, 3)), np.zeros(0)
    return np.concatenate(centers), np.concatenate(radii)


def _parse_poses(value, path: str, count: int) -> tuple[Pose, ...]:
    rows = _list(value, path)
    if len(rows) != count:
        _fail(path, f"expected {count} poses, got {len(rows)}")
    return tuple(
        Pose.from_array(_vector(row, f"{path}[{i}]", 4)) for i, row in enumerate(rows)
    )


def _parse_robot(value, path: str) -> KinematicChain:
    if not isinstance(value, dict):
        _fail(path, f"expected an object, got {type(value).__name__}")
    if "builtin" in value:
        name = _string(value["builtin"], f"{path}.builtin")
        if name == "planar3":
            _check_keys(value, path, {"builtin"}, {"link_lengths"})
            if "link_lengths" in value:
                lengths = _vector(value["link_lengths"], f"{path}.link_lengths")
                if np.any(lengths <= 0):
                    _fail(f"{path}.link_lengths", "link lengths must be positive")
                return planar_arm(tuple(lengths))
            return planar_arm()
        if name == "spatial7":
            _check_keys(value, path, {"builtin"}, {"scale"})
            scale = _number(value.get("scale", 1.0), f"{path}.scale")
            if scale <= 0:
                _fail(f"{path}.scale", "scale must be positive")
            return spatial_arm_7dof(scale)
        _fail(f"{path}.builtin", f"unknown builtin arm {name!r}, expected one of {BUILTIN_ARMS}")
    _check_keys(value, path, {"joints", "link_spheres", "tool"}, set())
    joints = []
    for i, entry in enumerate(_list(value["joints"], f"{path}.joints")):
        epath = f"{path}.joints[{i}]"
        _check_keys(entry, epath, {"axis", "offset", "limits"}, set())
        axis = _vector(entry["axis"], f"{epath}.axis", 3)
        offset = _vector(entry["offset"], f"{epath}.offset", 3)
        limits = _vector(entry["limits"], f"{epath}.limits", 2)
        try:
            joints.append(Joint(axis=axis, offset=offset, lower=limits[0], upper=limits[1]))
        except ValueError as exc:
            _fail(epath, str(exc))
    spheres_spec = _list(value["link_spheres"], f"{path}.link_spheres")
    if len(spheres_spec) != len(joints):
        _fail(f"{path}.link_spheres", f"expected one entry per joint ({len(joints)})")
    link_spheres = []
    for i, entry in enumerate(spheres_spec):
        epath = f"{path}.link_spheres[{i}]"
        if entry is None:
            link_spheres.append(None)
            continue
        cs, rs = [], []
        for j, sphere in enumerate(_list(entry, epath)):
            spath = f"{epath}[{j}]"
            _check_keys(sphere, spath, {"center", "radius"}, set())
            cs.append(_vector(sphere["center"], f"{spath}.center", 3))
            radius = _number(sphere["radius"], f"{spath}.radius")
            if radius <= 0:
                _fail(f"{spath}.radius", "radius must be strictly positive")
            rs.append(radius)
        link_spheres.append(SphereSet(np.array(cs).reshape(-1, 3), np.array(rs)))
    tool = value["tool"]
    _check_keys(tool, f"{path}.tool", {"translation"}, set())
    translation = _vector(tool["translation"], f"{path}.tool.translation", 3)
    try:
        return KinematicChain(
            joints=joints,
            link_spheres=link_spheres,
            tool_translation=translation,
            tool_rotation=np.eye(3),
        )
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_grasp(value, path: str) -> GraspSpec:
    _check_keys(value, path, {"offset"}, {"yaw_offset"})
    offset = _vector(value["offset"], f"{path}.offset", 3)
    yaw_offset = _number(value.get("yaw_offset", 0.0), f"{path}.yaw_offset")
    try:
        return GraspSpec(offset=offset, yaw_offset=yaw_offset)
    except ValueError as exc:
        _fail(path, str(exc))


def _parse_overrides(value, path: str, allowed: frozenset, int_keys: set[str]) -> dict:
    if not isinstance(value, dict):
        _fail(path, f"expected an object, got {type(value).__name__}")
    unknown = value.keys() - allowed
    if unknown:
        _fail(path, f"unknown field(s) {sorted(unknown)}")
    out = {}
    for key, raw in value.items():
        kpath = f"{path}.{key}"
        out[key] = _integer(raw, kpath) if key in int_keys else _number(raw, kpath)
    return out


def _parse_weights(value, path: str, cls, fields: tuple[str, ...]):
    _check_keys(value, path, set(), set(fields))
    kwargs = {k: _number(value[k], f"{path}.{k}") for k in value}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        _fail(path, str(exc))


_COMMON_OPTIONAL = {"name", "description"}
_SOLVER_INT_KEYS = {"n", "m", "k_lin", "k_quad", "p_return", "max_restarts"}
_TRAJOPT_INT_KEYS = {"k_waypoint", "k_interp", "outer_iters", "inner_steps"}


def parse_scene(data: dict, *, path: str | None = None) -> Scene:
    """Validate a scene dictionary and build the problem it describes."""
    root = "$"
    if not isinstance(data, dict):
        _fail(root, f"expected an object, got {type(data).__name__}")
    ptype = data.get("problem_type")
    if ptype not in PROBLEM_TYPES:
        _fail(f"{root}.problem_type", f"expected one of {PROBLEM_TYPES}, got {ptype!r}")

    chain = grasp = None
    solver_overrides: dict = {}
    trajopt_overrides: dict = {}

    if ptype == "tetris":
        _check_keys(
            data,
            root,
            {"problem_type", "blocks", "box", "z_star"},
            _COMMON_OPTIONAL
            | {"yaw_mode", "weights", "initial_poses", "obstacles", "robot", "grasp", "solver", "trajopt"},
        )
    elif ptype == "tower":
        _check_keys(
            data,
            root,
            {"problem_type", "blocks", "box"},
            _COMMON_OPTIONAL
            | {
                "yaw_mode",
                "weights",
                "initial_poses",
                "obstacles",
                "robot",
                "grasp",
                "solver",
                "trajopt",
                "table_height",
                "footprint_halfwidth",
            },
        )
    else:
        _check_keys(
            data,
            root,
            {"problem_type", "robot", "start", "goal"},
            _COMMON_OPTIONAL | {"obstacles", "trajopt"},
        )

    if "robot" in data:
        chain = _parse_robot(data["robot"], f"{root}.robot")
    if "grasp" in data:
        grasp = _parse_grasp(data["grasp"], f"{root}.grasp")
    if "solver" in data:
        solver_overrides = _parse_overrides(
            data["solver"], f"{root}.solver", SOLVER_KEYS, _SOLVER_INT_KEYS
        )
    if "trajopt" in data:
        trajopt_overrides = _parse_overrides(
            data["trajopt"], f"{root}.trajopt", TRAJOPT_KEYS, _TRAJOPT_INT_KEYS
        )
    obstacles = (np.zeros((0, 3)), np.zeros(0))
    if "obstacles" in data:
        obstacles = _parse_obstacles(data["obstacles"], f"{root}.obstacles")

    if ptype == "tetris":
        blocks = _parse_blocks(data["blocks"], f"{root}.blocks")
        box = _parse_box(data["box"], f"{root}.box")
        z_star = _number(data["z_star"], f"{root}.z_star")
        yaw_mode = _string(data.get("yaw_mode", "fixed"), f"{root}.yaw_mode")
        if yaw_mode not in YAW_MODES:
            _fail(f"{root}.yaw_mode", f"expected one of {YAW_MODES}, got {yaw_mode!r}")
        weights = PackingWeights()
        if "weights" in data:
            weights = _parse_weights(
                data["weights"],
                f"{root}.weights",
                PackingWeights,
                ("block_block", "block_wall", "height"),
            )
        initial = None
        if "initial_poses" in data:
            initial = _parse_poses(data["initial_poses"], f"{root}.initial_poses", len(blocks))
        try:
            problem = TetrisProblem(
                blocks=tuple(blocks),
                box=box,
                z_star=z_star,
                yaw_mode=yaw_mode,
                weights=weights,
                initial_poses=initial,
            )
        except ValueError as exc:
            _fail(root, str(exc))
    elif ptype == "tower":
        blocks = _parse_blocks(data["blocks"], f"{root}.blocks")
        sides = {b.cell_size for b in blocks}
        if any(b.cells != ((0, 0),) for b in blocks) or len(sides) != 1:
            _fail(f"{root}.blocks", "tower blocks must be identical single-cell cubes")
        box = _parse_box(data["box"], f"{root}.box")
        yaw_mode = _string(data.get("yaw_mode", "fixed"), f"{root}.yaw_mode")
        if yaw_mode not in YAW_MODES:
            _fail(f"{root}.yaw_mode", f"expected one of {YAW_MODES}, got {yaw_mode!r}")
        weights = TowerWeights()
        if "weights" in data:
            weights = _parse_weights(
                data["weights"],
                f"{root}.weights",
                TowerWeights,
                ("stability", "height", "collision"),
            )
        initial = None
        if "initial_poses" in data:
            initial = _parse_poses(data["initial_poses"], f"{root}.initial_poses", len(blocks))
        kwargs = {}
        if "table_height" in data:
            kwargs["table_height"] = _number(data["table_height"], f"{root}.table_height")
        if "footprint_halfwidth" in data:
            kwargs["footprint_halfwidth"] = _number(
                data["footprint_halfwidth"], f"{root}.footprint_halfwidth"
            )
        try:
            problem = TowerProblem(
                n_blocks=len(blocks),
                side=sides.pop(),
                box=box,
                obstacle_centers=obstacles[0],
                obstacle_radii=obstacles[1],
                yaw_mode=yaw_mode,
                weights=weights,
                initial_poses=initial,
                **kwargs,
            )
        except ValueError as exc:
            _fail(root, str(exc))
    else:
        dof = chain.dof
        start = _vector(data["start"], f"{root}.start", dof)
        goal = _vector(data["goal"], f"{root}.goal", dof)
        try:
            problem = MotionProblem(
                chain=chain,
                start=start,
                goal=goal,
                obstacle_centers=obstacles[0],
                obstacle_radii=obstacles[1],
            )
        except ValueError as exc:
            _fail(root, str(exc))

    name = data.get("name", "")
    if name:
        name = _string(name, f"{root}.name")
    if "description" in data:
        _string(data["description"], f"{root}.description")
    return Scene(
        problem=problem,
        chain=chain,
        grasp=grasp,
        solver_overrides=solver_overrides,
        trajopt_overrides=trajopt_overrides,
        obstacle_centers=obstacles[0],
        obstacle_radii=obstacles[1],
        name=name,
        path=path,
    )


_SCENE_SUFFIX = ".scene.json"


def bundled_scene_names() -> list[str]:
    """Bare names of the scene files shipped inside the package."""
    base = resources.files("seqplace") / "scenes"
    return sorted(
        p.name[: -len(_SCENE_SUFFIX)] for p in base.iterdir() if p.name.endswith(_SCENE_SUFFIX)
    )


def _strip_scene_suffix(name: str) -> str:
    for suffix in (_SCENE_SUFFIX, ".json"):
        if name.endswith(suffix):
            return name[: -len(suffix)]
    return name


def load_scene(source: "str | Path | dict") -> Scene:
    """Load a scene from a file path, a bundled scene name, or a dict."""
    if isinstance(source, dict):
        return parse_scene(source)
    p = Path(source)
    if p.exists():
        with open(p) as fh:
            try:
                data = json.load(fh)
            except json.JSONDecodeError as exc:
                raise SceneError(f"{p}: invalid JSON ({exc})") from exc
        return parse_scene(data, path=str(p))
    name = _strip_scene_suffix(p.name)
    candidate = resources.files("seqplace") / "scenes" / f"{name}{_SCENE_SUFFIX}"
    if candidate.is_file():
        data = json.loads(candidate.read_text())
        return parse_scene(data, path=str(source))
    raise SceneError(
        f"scene {str(source)!r} not found; not a file and not one of the "
        f"bundled scenes {bundled_scene_names()}"
    )
