"""Command-line front end for the benchmark harness.

Subcommands:
  solve   one scene, one seed; prints the result and writes output files
  trials  repeated timed solves with a success/timing summary
  sweep   batch-size grid (placement stage only)
  trace   cost-evolution export (CSV and optional SVG)

Exit codes: 0 success, 1 solver failure (trials: no successful trial),
2 usage or scene errors.
"""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from .bench import (
    export_trace,
    run_sweep,
    run_trials,
    solve_scene,
    trace_solve,
    write_sweep_csv,
    write_trials_csv,
)
from .problems import MotionProblem, SceneError, as_cost_model, load_scene
from .trajopt import save_trajectory

__all__ = ["cli_main", "main"]

# Desk-scale defaults for the sweep grid; wider ranges go through --n/--m.
DEFAULT_SWEEP_N = [2 ** k for k in range(9, 14)]
DEFAULT_SWEEP_M = [2 ** k for k in range(8, 11)]


class _UsageError(Exception):
    pass


def _int_list(text: str):
    try:
        values = [int(tok) for tok in text.split(",") if tok]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        ) from None
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument(
        "--scene", required=True,
        help="bundled scene name or path to a .scene.json file",
    )
    common.add_argument("--seed", type=int, default=0, help="base random seed")
    common.add_argument(
        "--threads", type=int, default=None,
        help="worker threads (default: SPASM_THREADS env var, else 1)",
    )
    common.add_argument(
        "--n", type=_int_list, default=None, metavar="LIST",
        help="sampling batch size (comma-separated list for sweep)",
    )
    common.add_argument(
        "--m", type=_int_list, default=None, metavar="LIST",
        help="optimization batch size (comma-separated list for sweep)",
    )
    common.add_argument("--k-lin", type=int, default=None, help="linear-phase steps")
    common.add_argument("--k-quad", type=int, default=None, help="quadratic-phase steps")
    common.add_argument("--eta", type=float, default=None,
                        help="initial linear-phase learning rate")
    common.add_argument("--alpha", type=float, default=None,
                        help="quadratic-phase learning rate")
    common.add_argument("--epsilon", type=float, default=None,
                        help="satisfaction threshold")
    common.add_argument("--max-restarts", type=int, default=None)
    common.add_argument("--quadratic-only", action="store_true",
                        help="ablation: drop the linear phase entirely")
    common.add_argument("--out", default=None, help="output file path")
    common.add_argument("--svg", default=None, help="SVG plot path")

    parser = argparse.ArgumentParser(
        prog="seqplace",
        description="Benchmark harness for the two-stage pick-and-place planner.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", parents=[common],
                             help="solve one scene with one seed")
    p_solve.add_argument("--no-trajopt", action="store_true",
                         help="stop after the placement stage")
    p_solve.add_argument("--warm-start", default=None, metavar="PATH",
                         help="placement rows (whitespace text) injected into the batch")
    p_solve.add_argument("--trace", default=None, metavar="PATH",
                         help="also write a cost-evolution CSV")

    p_trials = sub.add_parser("trials", parents=[common],
                              help="timed repetitions with a summary")
    p_trials.add_argument("--trials", type=int, default=10)
    p_trials.add_argument("--no-trajopt", action="store_true")
    p_trials.add_argument("--warm-start", default=None, metavar="PATH")

    p_sweep = sub.add_parser("sweep", parents=[common],
                             help="success/time grid over batch sizes")
    p_sweep.add_argument("--trials", type=int, default=10)

    sub.add_parser("trace", parents=[common], help="cost-evolution export")
    return parser


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("SPASM_THREADS")
    if env:
        try:
            return int(env)
        except ValueError:
            raise _UsageError(f"SPASM_THREADS must be an integer, got {env!r}") from None
    return 1


def _single(values, flag: str) -> int:
    if len(values) != 1:
        raise _UsageError(f"{flag} takes a single value for this subcommand")
    return values[0]


def _solver_overrides(args, *, with_batch_sizes: bool) -> dict:
    out = {}
    if with_batch_sizes:
        if args.n is not None:
            out["n"] = _single(args.n, "--n")
        if args.m is not None:
            out["m"] = _single(args.m, "--m")
    pairs = (
        ("k_lin", "k_lin"),
        ("k_quad", "k_quad"),
        ("eta", "eta_init"),
        ("alpha", "alpha"),
        ("epsilon", "epsilon"),
        ("max_restarts", "max_restarts"),
    )
    for attr, key in pairs:
        value = getattr(args, attr)
        if value is not None:
            out[key] = value
    return out


def _load_warm(path):
    if path is None:
        return None
    return np.loadtxt(path, ndmin=2)


def _scene_label(scene, args) -> str:
    return scene.name or Path(args.scene).stem


def _cmd_solve(args) -> int:
    scene = load_scene(args.scene)
    name = _scene_label(scene, args)
    sol = solve_scene(
        scene,
        seed=args.seed,
        threads=_threads(args),
        solver_overrides=_solver_overrides(args, with_batch_sizes=True),
        quadratic_only=args.quadratic_only,
        no_trajopt=args.no_trajopt,
        warm_seeds=_load_warm(args.warm_start),
    )

    if args.trace is not None:
        trace = trace_solve(
            scene,
            seed=args.seed,
            threads=_threads(args),
            solver_overrides=_solver_overrides(args, with_batch_sizes=True),
            quadratic_only=args.quadratic_only,
        )
        export_trace(trace, args.trace, svg_path=args.svg)

    if not sol.success:
        print(
            f"scene {name}: FAILED after {sol.restarts} restarts "
            f"({sol.steps} steps, {sol.time_ms:.1f} ms)",
            file=sys.stderr,
        )
        return 1

    print(
        f"scene {name}: solved in {sol.time_ms:.1f} ms "
        f"(restarts {sol.restarts}, steps {sol.steps})"
    )
    if sol.placement is not None:
        print(f"final cost {sol.final_cost:.6g}")
        print("placement:")
        model = as_cost_model(scene.problem)
        for b, pose in enumerate(model.poses_from_row(sol.placement)):
            print(
                f"  block {b}: x={pose.x:+.4f} y={pose.y:+.4f} "
                f"z={pose.z:+.4f} yaw={pose.yaw:+.4f}"
            )
    if sol.trajectory is not None:
        print(
            f"path length {sol.path_length:.4f}, "
            f"max violation {sol.max_violation:.4g}"
        )
        out = args.out if args.out is not None else f"{name}.traj.txt"
        save_trajectory(sol.trajectory, out, max_violation=sol.max_violation)
        print(f"trajectory written to {out}")
    elif args.out is not None:
        np.savetxt(args.out, sol.placement[None, :], fmt="%.17g")
        print(f"placement written to {args.out}")
    return 0


def _cmd_trials(args) -> int:
    scene = load_scene(args.scene)
    name = _scene_label(scene, args)
    if args.trials < 1:
        raise _UsageError("--trials must be >= 1")
    records, summary = run_trials(
        scene,
        args.trials,
        seed=args.seed,
        threads=_threads(args),
        solver_overrides=_solver_overrides(args, with_batch_sizes=True),
        quadratic_only=args.quadratic_only,
        no_trajopt=args.no_trajopt,
        warm_seeds=_load_warm(args.warm_start),
    )
    if args.out is not None:
        write_trials_csv(records, args.out)
        print(f"records written to {args.out}")
    if summary.successes:
        print(
            f"scene {name}: {summary.successes}/{summary.trials} solved "
            f"({100.0 * summary.success_rate:.1f}%), "
            f"time {summary.mean_ms:.2f} ± {summary.ci95_ms:.2f} ms (95% CI)"
        )
        return 0
    print(f"scene {name}: 0/{summary.trials} solved")
    return 1


def _cmd_sweep(args) -> int:
    scene = load_scene(args.scene)
    name = _scene_label(scene, args)
    if args.trials < 1:
        raise _UsageError("--trials must be >= 1")
    grid = run_sweep(
        scene,
        args.n if args.n is not None else DEFAULT_SWEEP_N,
        args.m if args.m is not None else DEFAULT_SWEEP_M,
        args.trials,
        seed=args.seed,
        threads=_threads(args),
        solver_overrides=_solver_overrides(args, with_batch_sizes=False),
        quadratic_only=args.quadratic_only,
    )
    for n, m in grid.skipped:
        print(f"scene {name}: skipped n={n} m={m} (need m <= n)")
    for c in grid.cells:
        print(
            f"scene {name}: n={c.n} m={c.m} -> "
            f"{100.0 * c.success_rate:.1f}% success, {c.mean_ms:.2f} ms mean"
        )
    if args.out is not None:
        write_sweep_csv(grid, args.out)
        print(f"grid written to {args.out}")
    if args.svg is not None:
        from .plots import plot_sweep

        plot_sweep(grid, args.svg)
        print(f"plot written to {args.svg}")
    return 0


def _cmd_trace(args) -> int:
    scene = load_scene(args.scene)
    if args.out is None:
        raise _UsageError("trace requires --out for the CSV path")
    trace = trace_solve(
        scene,
        seed=args.seed,
        threads=_threads(args),
        solver_overrides=_solver_overrides(args, with_batch_sizes=True),
        quadratic_only=args.quadratic_only,
    )
    export_trace(trace, args.out, svg_path=args.svg)
    written = args.out if args.svg is None else f"{args.out} and {args.svg}"
    print(f"trace written to {written}")
    return 0


_COMMANDS = {
    "solve": _cmd_solve,
    "trials": _cmd_trials,
    "sweep": _cmd_sweep,
    "trace": _cmd_trace,
}


def cli_main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        code = exc.code
        if isinstance(code, int):
            return code
        return 0 if code is None else 2
    try:
        return _COMMANDS[args.command](args)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SceneError as exc:
        print(f"scene error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
