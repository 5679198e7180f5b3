"""Problem families: frozen examples, dual-route checks, FD gradients, loader."""

import itertools
import json
import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from _oracles import enumerate_tilings, grid_placements, grid_pose
from conftest import rel_err
from seqplace.geometry import LINEAR, QUADRATIC, Aabb, Pose, pen_sets, transform
from seqplace.problems import (
    BlockShape,
    MotionProblem,
    PackingWeights,
    SceneError,
    TetrisCostModel,
    TetrisProblem,
    TowerCostModel,
    TowerProblem,
    TowerWeights,
    as_cost_model,
    bundled_scene_names,
    load_scene,
    parse_scene,
    tetris_cost,
    tower_placement_cost,
)

O_CELLS = ((0, 0), (1, 0), (0, 1), (1, 1))


def _tetris_two_blocks(yaw_mode="fixed"):
    blocks = (
        BlockShape("a", ((0, 0), (1, 0)), 1.0),
        BlockShape("b", ((0, 0), (0, 1)), 1.0),
    )
    box = Aabb([0.0, 0.0, -0.5], [2.0, 2.0, 0.5])
    return TetrisProblem(blocks=blocks, box=box, z_star=0.0, yaw_mode=yaw_mode)


def _tower(n=4, yaw_mode="fixed", with_obstacle=True):
    centers = np.array([[0.4, 0.0, 0.25]]) if with_obstacle else None
    radii = np.array([0.12]) if with_obstacle else None
    return TowerProblem(
        n_blocks=n,
        side=0.1,
        box=Aabb([-0.5, -0.5, 0.0], [0.5, 0.5, 0.6]),
        obstacle_centers=centers,
        obstacle_radii=radii,
        yaw_mode=yaw_mode,
    )


# ---------------------------------------------------------------------------
# BlockShape
# ---------------------------------------------------------------------------


def test_block_shape_spheres():
    b = BlockShape("sq", O_CELLS, 2.0)
    assert b.n_cells == 4
    assert b.width == 4.0 and b.height == 4.0
    assert b.area == 16.0
    assert_allclose(sorted(b.sphere_set.centers[:, 0]), [1.0, 1.0, 3.0, 3.0])
    assert_allclose(b.sphere_set.centers[:, 2], [1.0, 1.0, 1.0, 1.0])
    assert_allclose(b.sphere_set.radii, [1.0, 1.0, 1.0, 1.0])


def test_block_shape_rejects_bad_cells():
    with pytest.raises(ValueError, match="no cells"):
        BlockShape("x", (), 1.0)
    with pytest.raises(ValueError, match="duplicate"):
        BlockShape("x", ((0, 0), (0, 0)), 1.0)
    with pytest.raises(ValueError, match="edge-connected"):
        BlockShape("x", ((0, 0), (1, 1)), 1.0)
    with pytest.raises(ValueError, match="normalized"):
        BlockShape("x", ((1, 0), (2, 0)), 1.0)
    with pytest.raises(ValueError, match="cell_size"):
        BlockShape("x", ((0, 0),), 0.0)


# ---------------------------------------------------------------------------
# tetris_cost frozen examples
# ---------------------------------------------------------------------------


def test_single_block_oversized_box_costs_zero():
    block = BlockShape("sq", O_CELLS, 1.0)
    problem = TetrisProblem(
        blocks=(block,),
        box=Aabb([0.0, 0.0, -1.0], [10.0, 10.0, 1.0]),
        z_star=0.0,
        tight_packing=False,
    )
    pose = [Pose(4.0, 4.0, 0.0)]
    assert tetris_cost(problem, pose, LINEAR) == 0.0
    assert tetris_cost(problem, pose, QUADRATIC) == 0.0


def test_identical_poses_cost_is_self_overlap():
    # Two identical blocks at the same pose: only the block-block term fires.
    block = BlockShape("sq", O_CELLS, 1.0)
    problem = TetrisProblem(
        blocks=(block, block),
        box=Aabb([0.0, 0.0, -1.0], [20.0, 20.0, 1.0]),
        z_star=0.0,
        weights=PackingWeights(block_block=2.0),
        tight_packing=False,
    )
    pose = Pose(8.0, 8.0, 0.0)
    world = transform(block.sphere_set, pose)
    for mode in (LINEAR, QUADRATIC):
        expected = 2.0 * pen_sets(world, block.sphere_set.radii, world, block.sphere_set.radii, mode)
        assert tetris_cost(problem, [pose, pose], mode) == pytest.approx(expected, rel=1e-12)


def test_domino_tight_packing_cost_vanishes():
    # Exact-contact pens survive only as float round-off (~1e-17).
    scene = load_scene("domino2")
    problem = scene.problem
    poses = [grid_pose(problem, (0, 0)), grid_pose(problem, (0, 1))]
    assert tetris_cost(problem, poses, LINEAR) < 1e-12
    assert tetris_cost(problem, poses, QUADRATIC) < 1e-12


def test_area_balance_enforced():
    block = BlockShape("sq", O_CELLS, 1.0)
    with pytest.raises(ValueError, match="area balance"):
        TetrisProblem(blocks=(block,), box=Aabb([0, 0, -1], [3.0, 3.0, 1]), z_star=0.0)
    # 2x2 block exactly fills a 2x2 box
    TetrisProblem(blocks=(block,), box=Aabb([0, 0, -1], [2.0, 2.0, 1]), z_star=0.0)


# ---------------------------------------------------------------------------
# tower_placement_cost frozen examples
# ---------------------------------------------------------------------------


def _aligned_tower_poses(problem, x=0.0, y=0.0):
    return [
        Pose(x, y, problem.height_target(i)) for i in range(problem.n_blocks)
    ]


def test_tower_aligned_stack_costs_zero():
    problem = _tower(n=3, with_obstacle=False)
    poses = _aligned_tower_poses(problem)
    assert tower_placement_cost(problem, poses, LINEAR) == 0.0
    assert tower_placement_cost(problem, poses, QUADRATIC) == 0.0


def test_tower_top_raised_by_one():
    problem = TowerProblem(
        n_blocks=3,
        side=1.0,
        box=Aabb([-5, -5, 0], [5, 5, 10]),
        weights=TowerWeights(height=2.5),
    )
    poses = _aligned_tower_poses(problem)
    poses[2] = Pose(0.0, 0.0, poses[2].z + 1.0)
    # |dz| = dz^2 = 1, so both modes give w_height exactly
    assert tower_placement_cost(problem, poses, LINEAR) == pytest.approx(2.5)
    assert tower_placement_cost(problem, poses, QUADRATIC) == pytest.approx(2.5)


def test_tower_com_outside_footprint():
    # Top block shifted 0.6: its CoM sits 0.1 outside the middle cube's
    # half-width-0.5 footprint, while the two-block CoM above the bottom
    # cube (0.3) stays inside.
    problem = TowerProblem(n_blocks=3, side=1.0, box=Aabb([-5, -5, 0], [5, 5, 10]))
    poses = _aligned_tower_poses(problem)
    poses[2] = Pose(0.6, 0.0, poses[2].z)
    assert tower_placement_cost(problem, poses, LINEAR) == pytest.approx(0.1)
    assert tower_placement_cost(problem, poses, QUADRATIC) == pytest.approx(0.01)


def test_tower_rejects_small_or_bad():
    with pytest.raises(ValueError, match="two blocks"):
        TowerProblem(n_blocks=1, side=1.0, box=Aabb([-1, -1, 0], [1, 1, 5]))
    with pytest.raises(ValueError, match="side"):
        TowerProblem(n_blocks=2, side=0.0, box=Aabb([-1, -1, 0], [1, 1, 5]))


# ---------------------------------------------------------------------------
# cost model dimensions and packing helpers
# ---------------------------------------------------------------------------


def test_model_dimensions():
    scene = load_scene("tetris5")
    free = TetrisProblem(
        blocks=scene.problem.blocks,
        box=scene.problem.box,
        z_star=scene.problem.z_star,
        yaw_mode="quantized-free",
    )
    assert as_cost_model(free).dimension == 20
    assert as_cost_model(scene.problem).dimension == 15
    tower = TowerProblem(n_blocks=10, side=0.1, box=Aabb([-1, -1, 0], [1, 1, 2]))
    assert as_cost_model(tower).dimension == 30


def test_as_cost_model_rejects_motion():
    scene = load_scene("empty3")
    with pytest.raises(TypeError, match="motion"):
        as_cost_model(scene.problem)


def test_pose_row_round_trip():
    for problem in (_tetris_two_blocks("quantized-free"), _tower(3, "quantized-free")):
        model = as_cost_model(problem)
        rng = np.random.default_rng(3)
        row = rng.uniform(model.lower, model.upper)
        poses = model.poses_from_row(row)
        assert_allclose(model.row_from_poses(poses), row, atol=1e-12)


def test_fixed_yaw_bounds_keep_blocks_off_walls():
    # The per-block shrunken translation bounds guarantee zero wall cost.
    scene = load_scene("tetris5")
    model = as_cost_model(scene.problem)
    rng = np.random.default_rng(11)
    rows = rng.uniform(model.lower, model.upper, size=(64, model.dimension))
    problem = scene.problem
    for row in rows:
        for block, pose in zip(problem.blocks, model.poses_from_row(row)):
            world = transform(block.sphere_set, pose)
            wall = pen_sets(
                world, block.sphere_set.radii, problem.wall_centers, problem.wall_radii, LINEAR
            )
            assert wall == 0.0


# ---------------------------------------------------------------------------
# dual route: batched model vs scalar reference
# ---------------------------------------------------------------------------


@pytest.mark.parametrize("mode", [LINEAR, QUADRATIC])
@pytest.mark.parametrize("yaw_mode", ["fixed", "quantized-free"])
def test_tetris_model_matches_scalar(mode, yaw_mode):
    scene = load_scene("tetris5")
    problem = TetrisProblem(
        blocks=scene.problem.blocks,
        box=scene.problem.box,
        z_star=scene.problem.z_star,
        yaw_mode=yaw_mode,
        weights=PackingWeights(1.3, 0.7, 2.0),
    )
    model = TetrisCostModel(problem)
    rng = np.random.default_rng(7)
    rows = rng.uniform(model.lower, model.upper, size=(40, model.dimension))
    batched = model.evaluate(rows, mode)
    for row, got in zip(rows, batched):
        expected = tetris_cost(problem, model.poses_from_row(row), mode)
        assert rel_err(np.array([got]), np.array([expected])) < 1e-10


@pytest.mark.parametrize("mode", [LINEAR, QUADRATIC])
@pytest.mark.parametrize("yaw_mode", ["fixed", "quantized-free"])
def test_tower_model_matches_scalar(mode, yaw_mode):
    problem = _tower(n=5, yaw_mode=yaw_mode)
    problem.weights = TowerWeights(1.7, 0.9, 1.2)
    model = TowerCostModel(problem)
    rng = np.random.default_rng(13)
    rows = rng.uniform(model.lower, model.upper, size=(40, model.dimension))
    batched = model.evaluate(rows, mode)
    for row, got in zip(rows, batched):
        expected = tower_placement_cost(problem, model.poses_from_row(row), mode)
        assert rel_err(np.array([got]), np.array([expected])) < 1e-10


def test_quadratic_is_sum_of_squared_linear_terms():
    # Recount every individual linear term by hand and square it.
    problem = _tower(n=4, yaw_mode="fixed")
    model = TowerCostModel(problem)
    rng = np.random.default_rng(29)
    rows = rng.uniform(model.lower, model.upper, size=(20, model.dimension))
    r = problem.sphere_radius
    half = problem.footprint_halfwidth
    for row in rows:
        poses = model.poses_from_row(row)
        terms = []
        for i in range(problem.n_blocks - 1):
            com = np.mean([[p.x, p.y] for p in poses[i + 1 :]], axis=0)
            d = com - [poses[i].x, poses[i].y]
            terms.append(np.linalg.norm(d - np.clip(d, -half, half)))
        for i, p in enumerate(poses):
            terms.append(abs(p.z - problem.height_target(i)))
        for i, j in itertools.combinations(range(problem.n_blocks), 2):
            gap = np.linalg.norm(poses[i].translation - poses[j].translation)
            terms.append(max(0.0, 2 * r - gap))
        for p in poses:
            for oc, orad in zip(problem.obstacle_centers, problem.obstacle_radii):
                gap = np.linalg.norm(p.translation - oc)
                terms.append(max(0.0, r + orad - gap))
        expected = float(np.sum(np.square(terms)))
        got = float(model.evaluate(row[None], QUADRATIC)[0])
        assert rel_err(np.array([got]), np.array([expected])) < 1e-10


def test_permuting_identical_blocks_preserves_cost():
    scene = load_scene("tetris8")
    problem = scene.problem
    # square_a/square_b at indices 0 and 5, jay_a/jay_b at 4 and 6
    assert problem.blocks[0].cells == problem.blocks[5].cells
    assert problem.blocks[4].cells == problem.blocks[6].cells
    model = as_cost_model(problem)
    rng = np.random.default_rng(17)
    rows = rng.uniform(model.lower, model.upper, size=(10, model.dimension))
    for row in rows:
        per = row.reshape(problem.n_blocks, 3).copy()
        per[[0, 5]] = per[[5, 0]]
        per[[4, 6]] = per[[6, 4]]
        swapped = per.reshape(-1)
        for mode in (LINEAR, QUADRATIC):
            a = float(model.evaluate(row[None], mode)[0])
            b = float(model.evaluate(swapped[None], mode)[0])
            assert a == pytest.approx(b, rel=1e-12, abs=1e-15)


def test_costs_nonnegative():
    for problem in (_tetris_two_blocks("quantized-free"), _tower(4, "quantized-free")):
        model = as_cost_model(problem)
        rng = np.random.default_rng(31)
        rows = rng.uniform(model.lower, model.upper, size=(200, model.dimension))
        for mode in (LINEAR, QUADRATIC):
            assert np.all(model.evaluate(rows, mode) >= 0.0)


# ---------------------------------------------------------------------------
# finite-difference gradient checks (kink-filtered)
# ---------------------------------------------------------------------------


def _batched_central_diff(model, x, mode, h=1e-6):
    d = len(x)
    rows = np.vstack([np.tile(x, (d, 1)), np.tile(x, (d, 1))])
    rows[np.arange(d), np.arange(d)] += h
    rows[d + np.arange(d), np.arange(d)] -= h
    vals = model.evaluate(rows, mode)
    return (vals[:d] - vals[d:]) / (2.0 * h)


def _tetris_kink_free(problem, poses, margin=1e-4):
    worlds = [transform(b.sphere_set, p) for b, p in zip(problem.blocks, poses)]
    radii = [b.sphere_set.radii for b in problem.blocks]
    sets = list(zip(worlds, radii)) + [(problem.wall_centers, problem.wall_radii)]
    for (ca, ra), (cb, rb) in itertools.combinations(sets, 2):
        d = np.linalg.norm(ca[:, None, :] - cb[None, :, :], axis=-1)
        if np.any(np.abs((ra[:, None] + rb[None, :]) - d) < margin):
            return False
    return all(abs(p.z - problem.z_star) > margin for p in poses)


def _tower_kink_free(problem, poses, margin=1e-4):
    half = problem.footprint_halfwidth
    r = problem.sphere_radius
    for i, j in itertools.combinations(range(problem.n_blocks), 2):
        gap = np.linalg.norm(poses[i].translation - poses[j].translation)
        if abs(gap - 2 * r) < margin:
            return False
    for i, p in enumerate(poses):
        if abs(p.z - problem.height_target(i)) < margin:
            return False
        for oc, orad in zip(problem.obstacle_centers, problem.obstacle_radii):
            if abs(np.linalg.norm(p.translation - oc) - (r + orad)) < margin:
                return False
    for i in range(problem.n_blocks - 1):
        com = np.mean([[p.x, p.y] for p in poses[i + 1 :]], axis=0)
        rel = com - np.array([poses[i].x, poses[i].y])
        c, s = math.cos(poses[i].yaw), math.sin(poses[i].yaw)
        rel_local = np.array([c * rel[0] + s * rel[1], -s * rel[0] + c * rel[1]])
        if np.any(np.abs(np.abs(rel_local) - half) < margin):
            return False
    return True


def _fd_check(model, kink_free, n_configs=110, seed=0, tol=1e-5):
    rng = np.random.default_rng(seed)
    checked = 0
    attempts = 0
    while checked < n_configs:
        attempts += 1
        assert attempts < 50 * n_configs, "kink filter rejecting too many configs"
        x = rng.uniform(model.lower, model.upper)
        if not kink_free(model.poses_from_row(x)):
            continue
        for mode in (LINEAR, QUADRATIC):
            fd = _batched_central_diff(model, x, mode)
            an = model.gradient(x[None], mode)[0]
            assert rel_err(an, fd) < tol, f"mode={mode} config={checked}"
        checked += 1


@pytest.mark.parametrize("yaw_mode", ["fixed", "quantized-free"])
def test_tetris_gradient_matches_fd(yaw_mode):
    scene = load_scene("tetris5")
    problem = TetrisProblem(
        blocks=scene.problem.blocks,
        box=scene.problem.box,
        z_star=scene.problem.z_star,
        yaw_mode=yaw_mode,
        weights=PackingWeights(1.1, 0.8, 1.4),
    )
    model = TetrisCostModel(problem)
    _fd_check(model, lambda poses: _tetris_kink_free(problem, poses), seed=5)


@pytest.mark.parametrize("yaw_mode", ["fixed", "quantized-free"])
def test_tower_gradient_matches_fd(yaw_mode):
    problem = _tower(n=4, yaw_mode=yaw_mode)
    model = TowerCostModel(problem)
    _fd_check(model, lambda poses: _tower_kink_free(problem, poses), seed=23)


# ---------------------------------------------------------------------------
# grid-enumeration oracle on micro-instances
# ---------------------------------------------------------------------------


def test_domino_oracle_satisfying_set():
    problem = load_scene("domino2").problem
    assert [len(p) for p in grid_placements(problem)] == [2, 2]
    tilings = enumerate_tilings(problem)
    assert sorted(tilings) == [((0, 0), (0, 1)), ((0, 1), (0, 0))]


def test_tetris5_has_exactly_four_tilings():
    # Model-evaluated exhaustive grid sweep; cross-checks the scene design.
    problem = load_scene("tetris5").problem
    model = as_cost_model(problem)
    placements = grid_placements(problem)
    rows = np.array(
        [
            model.row_from_poses([grid_pose(problem, cell) for cell in assignment])
            for assignment in itertools.product(*placements)
        ]
    )
    hits = 0
    for chunk in np.array_split(rows, max(1, len(rows) // 4096)):
        hits += int(np.sum(model.evaluate(chunk, QUADRATIC) < 1e-9))
    assert hits == 4


# ---------------------------------------------------------------------------
# scene loading
# ---------------------------------------------------------------------------


def test_bundled_scene_names():
    names = bundled_scene_names()
    for expected in ("tetris5", "tetris8", "domino2", "tower4", "corridor3", "empty3"):
        assert expected in names


def test_load_tetris5_bundle():
    scene = load_scene("tetris5")
    assert isinstance(scene.problem, TetrisProblem)
    assert scene.problem.n_blocks == 5
    assert scene.chain is not None and scene.chain.dof == 7
    assert scene.grasp is not None
    assert scene.solver_overrides["eta_init"] == pytest.approx(0.02)
    assert scene.trajopt_overrides["k_waypoint"] == 1
    assert len(scene.problem.initial_poses) == 5


def test_load_by_suffixed_name_and_path(tmp_path):
    assert load_scene("tetris8.scene.json").problem.n_blocks == 8
    assert load_scene("tetris8").chain is None
    data = {
        "problem_type": "motion",
        "robot": {"builtin": "planar3", "link_lengths": [0.4, 0.4]},
        "start": [0.0, 0.0],
        "goal": [1.0, -1.0],
    }
    p = tmp_path / "mini.scene.json"
    p.write_text(json.dumps(data))
    scene = load_scene(str(p))
    assert isinstance(scene.problem, MotionProblem)
    assert scene.chain.dof == 2
    assert scene.path == str(p)


def test_load_tower_bundle():
    scene = load_scene("tower4")
    problem = scene.problem
    assert isinstance(problem, TowerProblem)
    assert problem.n_blocks == 4
    assert problem.side == pytest.approx(0.1)
    assert problem.table_height == pytest.approx(0.05)
    assert len(problem.obstacle_centers) == 1
    assert scene.grasp.offset[2] == pytest.approx(0.1)


def test_obstacle_pose_composition():
    data = {
        "problem_type": "tower",
        "blocks": [
            {"cells": [[0, 0]], "cell_size": 0.1},
            {"cells": [[0, 0]], "cell_size": 0.1},
        ],
        "box": {"min": [-1, -1, 0], "max": [1, 1, 1]},
        "obstacles": [
            {"centers": [[1.0, 0.0, 0.2]], "radii": [0.05], "pose": [0.5, 0.0, 0.0, math.pi / 2]}
        ],
    }
    problem = parse_scene(data).problem
    assert_allclose(problem.obstacle_centers[0], [0.5, 1.0, 0.2], atol=1e-12)


def test_explicit_robot_schema():
    data = {
        "problem_type": "motion",
        "robot": {
            "joints": [
                {"axis": [0, 0, 1], "offset": [0, 0, 0], "limits": [-3, 3]},
                {"axis": [0, 0, 1], "offset": [0.5, 0, 0], "limits": [-3, 3]},
            ],
            "link_spheres": [
                [{"center": [0.25, 0, 0], "radius": 0.05}],
                None,
            ],
            "tool": {"translation": [0.5, 0, 0]},
        },
        "start": [0, 0],
        "goal": [1, 1],
    }
    scene = parse_scene(data)
    assert scene.chain.dof == 2
    assert scene.chain.link_spheres[1] is None
    assert len(scene.chain.link_spheres[0]) == 1


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda d: d.update(frobnicate=1), "frobnicate"),
        (lambda d: d.pop("z_star"), "z_star"),
        (lambda d: d.update(problem_type="frisbee"), "$.problem_type"),
        (lambda d: d["blocks"][0].update(cells=[[0, 0], [0.5, 1]]), "$.blocks[0].cells[1]"),
        (lambda d: d["blocks"][0].update(cells=[[0, 0], [0, 0]]), "$.blocks[0]"),
        (lambda d: d.update(box={"min": [0, 0, -1], "max": [9, 9, 1]}), "area balance"),
        (lambda d: d.update(yaw_mode="sideways"), "$.yaw_mode"),
        (lambda d: d.update(solver={"warp": 9}), "$.solver"),
        (lambda d: d.update(solver={"n": 2.5}), "$.solver.n"),
        (lambda d: d.update(initial_poses=[[0, 0, 0, 0]]), "$.initial_poses"),
        (lambda d: d.update(grasp={"offset": [0, 0, -0.1]}), "$.grasp"),
        (
            lambda d: d.update(obstacles=[{"centers": [[0, 0, 0]], "radii": [0.1, 0.2]}]),
            "$.obstacles[0].radii",
        ),
    ],
)
def test_tetris_scene_errors_carry_field_paths(mutate, fragment):
    data = {
        "problem_type": "tetris",
        "blocks": [
            {"cells": [[0, 0], [1, 0]], "cell_size": 1.0},
            {"cells": [[0, 0], [1, 0]], "cell_size": 1.0},
        ],
        "box": {"min": [0, 0, -1], "max": [2.0, 2.0, 1]},
        "z_star": 0.0,
    }
    mutate(data)
    with pytest.raises(SceneError) as err:
        parse_scene(data)
    assert fragment in str(err.value)


@pytest.mark.parametrize(
    "mutate, fragment",
    [
        (lambda d: d.update(blocks=[{"cells": [[0, 0]], "cell_size": 1}]), "blocks"),
        (lambda d: d.update(start=[0, 0]), "$.start"),
        (lambda d: d.update(start=[0, 9.0, 0]), "limits"),
        (lambda d: d["robot"].update(builtin="octopod"), "$.robot.builtin"),
        (lambda d: d.update(z_star=0.0), "z_star"),
    ],
)
def test_motion_scene_errors(mutate, fragment):
    data = {
        "problem_type": "motion",
        "robot": {"builtin": "planar3"},
        "start": [0.0, 0.0, 0.0],
        "goal": [1.0, 1.0, 1.0],
    }
    mutate(data)
    with pytest.raises(SceneError) as err:
        parse_scene(data)
    assert fragment in str(err.value)


def test_tower_scene_rejects_mixed_blocks():
    data = {
        "problem_type": "tower",
        "blocks": [
            {"cells": [[0, 0]], "cell_size": 0.1},
            {"cells": [[0, 0], [1, 0]], "cell_size": 0.1},
        ],
        "box": {"min": [-1, -1, 0], "max": [1, 1, 1]},
    }
    with pytest.raises(SceneError, match="single-cell"):
        parse_scene(data)


def test_missing_scene_lists_bundled():
    with pytest.raises(SceneError, match="tetris5"):
        load_scene("no_such_scene")
