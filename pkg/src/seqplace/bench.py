"""Benchmark harness: timed trials, batch-size sweeps, and cost traces.

A trial runs the full pipeline for one seed: the placement stage on the
scene's problem (restart budget capped so the cumulative step count stays
within ``STEP_CAP``), then, when the scene carries a robot, grasp lifting
and trajectory optimization. Point-to-point scenes skip the placement stage
entirely. Success is always decided by a fresh soundness re-check on the
returned artifact, never by the solver's own bookkeeping.

Trial CSVs deliberately omit wall-clock columns: with a fixed seed every
other field is deterministic, so the files are byte-identical across runs
and thread counts. Timing lives in the summary (mean with a normal-
approximation 95% confidence interval over the successful trials).
"""

from __future__ import annotations

import csv
import math
import re
import statistics
import time
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .particle_opt import (
    LINEAR,
    TRACE_PARTICLE_CAP,
    OptimizerConfig,
    TraceData,
    restart_stream,
    run_descent_schedule,
    sample_uniform,
    select_topk,
    solve,
)
from .problems import MotionProblem, Scene, as_cost_model
from .trajopt import (
    LiftFailure,
    TrajOptConfig,
    TrajOptFailure,
    Trajectory,
    init_trajectories,
    lift_placements,
    motion_endpoints,
    solve_al,
    trajectory_path_length,
    validate,
)

__all__ = [
    "STEP_CAP",
    "SceneSolution",
    "SweepCell",
    "SweepGrid",
    "TrialRecord",
    "TrialSummary",
    "effective_max_restarts",
    "export_trace",
    "read_sweep_csv",
    "run_sweep",
    "run_trials",
    "selection_efficacy",
    "solve_scene",
    "summarize",
    "trace_solve",
    "write_sweep_csv",
    "write_trials_csv",
]

# Cumulative optimizer-step budget per trial, counted across restarts.
STEP_CAP = 30000

# Stream key for trajectory initialization, outside the restart-stream range.
_TRAJ_STREAM = 1 << 20


def effective_max_restarts(config: OptimizerConfig) -> int:
    """Largest restart count whose total step budget fits ``STEP_CAP``."""
    per_restart = config.k_lin + config.k_quad
    if per_restart == 0:
        return config.max_restarts
    return min(config.max_restarts, max(1, STEP_CAP // per_restart))


def _trajectory_stream(seed: int) -> np.random.Generator:
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(_TRAJ_STREAM,))
    )


def _solver_config(scene: Scene, seed, solver_overrides, quadratic_only) -> OptimizerConfig:
    merged = dict(scene.solver_overrides)
    if solver_overrides:
        merged.update(solver_overrides)
    if quadratic_only:
        merged["k_lin"] = 0
    return OptimizerConfig(seed=seed, **merged)


def _trajopt_config(scene: Scene, trajopt_overrides) -> TrajOptConfig:
    merged = dict(scene.trajopt_overrides)
    if trajopt_overrides:
        merged.update(trajopt_overrides)
    return TrajOptConfig(**merged)


# ---------------------------------------------------------------------------
# one scene, one seed
# ---------------------------------------------------------------------------


@dataclass
class SceneSolution:
    """Outcome of one pipeline run.

    ``final_cost`` is the quadratic placement cost when only the placement
    stage runs, and the worst validation quantity (in distance units) when a
    trajectory is produced, so ``success`` implies ``final_cost`` below the
    respective threshold in both regimes.
    """

    success: bool
    time_ms: float
    restarts: int
    steps: int
    final_cost: float
    placement: Optional[np.ndarray] = None
    trajectory: Optional[Trajectory] = None
    path_length: Optional[float] = None
    max_violation: Optional[float] = None


def _solve_motion(scene: Scene, seed, trajopt_overrides) -> SceneSolution:
    config = _trajopt_config(scene, trajopt_overrides)
    t0 = time.perf_counter()
    ends = motion_endpoints(scene.problem)
    values = init_trajectories(ends, scene.chain, config, _trajectory_stream(seed))
    try:
        result = solve_al(values, scene.problem, scene.chain, config)
    except TrajOptFailure as exc:
        return SceneSolution(
            success=False,
            time_ms=(time.perf_counter() - t0) * 1e3,
            restarts=0,
            steps=0,
            final_cost=exc.best_violation,
            max_violation=exc.best_violation,
        )
    time_ms = (time.perf_counter() - t0) * 1e3
    feasible, worst = validate(
        result.trajectory, scene.problem, scene.chain, epsilon=config.validation_epsilon
    )
    return SceneSolution(
        success=bool(feasible),
        time_ms=time_ms,
        restarts=0,
        steps=0,
        final_cost=worst,
        trajectory=result.trajectory,
        path_length=trajectory_path_length(result.trajectory),
        max_violation=worst,
    )


def solve_scene(
    scene: Scene,
    *,
    seed: int = 0,
    threads: int = 1,
    solver_overrides: Optional[dict] = None,
    trajopt_overrides: Optional[dict] = None,
    quadratic_only: bool = False,
    no_trajopt: bool = False,
    warm_seeds: Optional[np.ndarray] = None,
) -> SceneSolution:
    """Run the pipeline once. Failures are normal returns, not exceptions."""
    if isinstance(scene.problem, MotionProblem):
        if no_trajopt:
            raise ValueError("point-to-point scenes have no placement stage")
        return _solve_motion(scene, seed, trajopt_overrides)

    model = as_cost_model(scene.problem)
    config = _solver_config(scene, seed, solver_overrides, quadratic_only)
    config = replace(config, max_restarts=effective_max_restarts(config))
    run_stage2 = scene.chain is not None and not no_trajopt

    t0 = time.perf_counter()
    result = solve(model, config, warm_seeds=warm_seeds, threads=threads)
    if not result.success:
        return SceneSolution(
            success=False,
            time_ms=(time.perf_counter() - t0) * 1e3,
            restarts=result.report.restarts,
            steps=result.report.steps,
            final_cost=math.nan,
        )

    if not run_stage2:
        time_ms = (time.perf_counter() - t0) * 1e3
        best = result.particles[0]
        ok = bool(model.satisfaction(best[None, :], config.epsilon)[0])
        return SceneSolution(
            success=ok,
            time_ms=time_ms,
            restarts=result.report.restarts,
            steps=result.report.steps,
            final_cost=float(result.costs[0]),
            placement=best.copy(),
        )

    tconfig = _trajopt_config(scene, trajopt_overrides)
    try:
        lifted = lift_placements(
            scene.problem,
            result.particles,
            scene.chain,
            scene.grasp,
            seed=seed,
            static_centers=scene.obstacle_centers,
            static_radii=scene.obstacle_radii,
        )
        values = init_trajectories(
            lifted.endpoints, scene.chain, tconfig, _trajectory_stream(seed)
        )
        al = solve_al(
            values,
            scene.problem,
            scene.chain,
            tconfig,
            grasp=scene.grasp,
            static_centers=scene.obstacle_centers,
            static_radii=scene.obstacle_radii,
        )
    except (LiftFailure, TrajOptFailure) as exc:
        worst = getattr(exc, "best_violation", math.nan)
        return SceneSolution(
            success=False,
            time_ms=(time.perf_counter() - t0) * 1e3,
            restarts=result.report.restarts,
            steps=result.report.steps,
            final_cost=worst,
            max_violation=worst if isinstance(exc, TrajOptFailure) else None,
        )
    time_ms = (time.perf_counter() - t0) * 1e3

    feasible, worst = validate(
        al.trajectory,
        scene.problem,
        scene.chain,
        grasp=scene.grasp,
        static_centers=scene.obstacle_centers,
        static_radii=scene.obstacle_radii,
        epsilon=tconfig.validation_epsilon,
    )
    return SceneSolution(
        success=bool(feasible),
        time_ms=time_ms,
        restarts=result.report.restarts,
        steps=result.report.steps,
        final_cost=worst,
        placement=result.particles[lifted.kept[al.particle_index]].copy(),
        trajectory=al.trajectory,
        path_length=trajectory_path_length(al.trajectory),
        max_violation=worst,
    )


# ---------------------------------------------------------------------------
# trials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrialRecord:
    trial: int
    seed: int
    success: bool
    time_ms: float  # wall clock to first validated solution, incl. restarts
    restarts: int
    steps: int
    final_cost: float
    path_length: Optional[float]


@dataclass(frozen=True)
class TrialSummary:
    trials: int
    successes: int
    success_rate: float
    mean_ms: float
    ci95_ms: float


def summarize(records: Sequence[TrialRecord]) -> TrialSummary:
    """Success rate plus mean / 95% CI of time-to-first-solution.

    Timing statistics cover successful trials only; failed trials have no
    first solution to time. The CI uses the normal approximation.
    """
    n = len(records)
    times = [r.time_ms for r in records if r.success]
    k = len(times)
    if k == 0:
        mean = ci = math.nan
    elif k == 1:
        mean, ci = times[0], 0.0
    else:
        mean = statistics.mean(times)
        ci = 1.96 * statistics.stdev(times) / math.sqrt(k)
    return TrialSummary(
        trials=n,
        successes=k,
        success_rate=k / n if n else math.nan,
        mean_ms=mean,
        ci95_ms=ci,
    )


def run_trials(
    scene: Scene,
    trials: int,
    *,
    seed: int = 0,
    threads: int = 1,
    solver_overrides: Optional[dict] = None,
    trajopt_overrides: Optional[dict] = None,
    quadratic_only: bool = False,
    no_trajopt: bool = False,
    warm_seeds: Optional[np.ndarray] = None,
) -> Tuple[List[TrialRecord], TrialSummary]:
    """Repeated timed solves with per-trial seeds ``seed + i``.

    Trials run sequentially; each is internally parallel, so the per-trial
    wall-clock numbers never contend with one another.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    records = []
    for i in range(trials):
        sol = solve_scene(
            scene,
            seed=seed + i,
            threads=threads,
            solver_overrides=solver_overrides,
            trajopt_overrides=trajopt_overrides,
            quadratic_only=quadratic_only,
            no_trajopt=no_trajopt,
            warm_seeds=warm_seeds,
        )
        records.append(
            TrialRecord(
                trial=i,
                seed=seed + i,
                success=sol.success,
                time_ms=sol.time_ms,
                restarts=sol.restarts,
                steps=sol.steps,
                final_cost=sol.final_cost,
                path_length=sol.path_length,
            )
        )
    return records, summarize(records)


def _fmt(value) -> str:
    if value is None:
        return ""
    return repr(float(value))


def write_trials_csv(records: Sequence[TrialRecord], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", "seed", "success", "restarts", "steps", "final_cost", "path_length"])
        for r in records:
            w.writerow(
                [r.trial, r.seed, int(r.success), r.restarts, r.steps,
                 _fmt(r.final_cost), _fmt(r.path_length)]
            )


# ---------------------------------------------------------------------------
# batch-size sweep
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SweepCell:
    n: int
    m: int
    trials: int
    success_rate: float
    mean_ms: float
    ci95_ms: float


@dataclass
class SweepGrid:
    n_values: List[int]
    m_values: List[int]
    trials: int
    cells: List[SweepCell]
    skipped: List[Tuple[int, int]]


def run_sweep(
    scene: Scene,
    n_values: Sequence[int],
    m_values: Sequence[int],
    trials: int,
    *,
    seed: int = 0,
    threads: int = 1,
    solver_overrides: Optional[dict] = None,
    quadratic_only: bool = False,
) -> SweepGrid:
    """Placement-stage success/time grid over batch sizes, n-major order.

    Cells with m > n cannot be configured and are skipped but recorded. The
    trajectory stage is excluded so the grid isolates the sampling/selection
    trade-off the batch sizes control.
    """
    cells: List[SweepCell] = []
    skipped: List[Tuple[int, int]] = []
    for n in n_values:
        for m in m_values:
            if m > n:
                skipped.append((int(n), int(m)))
                continue
            over = dict(solver_overrides or {})
            over.update({"n": int(n), "m": int(m)})
            _, summary = run_trials(
                scene,
                trials,
                seed=seed,
                threads=threads,
                solver_overrides=over,
                quadratic_only=quadratic_only,
                no_trajopt=True,
            )
            cells.append(
                SweepCell(
                    n=int(n),
                    m=int(m),
                    trials=trials,
                    success_rate=summary.success_rate,
                    mean_ms=summary.mean_ms,
                    ci95_ms=summary.ci95_ms,
                )
            )
    return SweepGrid(
        n_values=[int(v) for v in n_values],
        m_values=[int(v) for v in m_values],
        trials=trials,
        cells=cells,
        skipped=skipped,
    )


def write_sweep_csv(grid: SweepGrid, path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write("n,m,trials,success_rate,mean_ms,ci95_ms\n")
        for n, m in grid.skipped:
            fh.write(f"# skipped n={n} m={m}: need m <= n\n")
        for c in grid.cells:
            fh.write(
                f"{c.n},{c.m},{c.trials},{_fmt(c.success_rate)},"
                f"{_fmt(c.mean_ms)},{_fmt(c.ci95_ms)}\n"
            )


_SKIP_RE = re.compile(r"# skipped n=(\d+) m=(\d+)")


def read_sweep_csv(path) -> SweepGrid:
    cells: List[SweepCell] = []
    skipped: List[Tuple[int, int]] = []
    with open(path, newline="") as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("n,"):
                continue
            if line.startswith("#"):
                match = _SKIP_RE.match(line)
                if match:
                    skipped.append((int(match.group(1)), int(match.group(2))))
                continue
            parts = line.split(",")
            cells.append(
                SweepCell(
                    n=int(parts[0]),
                    m=int(parts[1]),
                    trials=int(parts[2]),
                    success_rate=float(parts[3]),
                    mean_ms=float(parts[4]),
                    ci95_ms=float(parts[5]),
                )
            )
    n_values = sorted({c.n for c in cells} | {n for n, _ in skipped})
    m_values = sorted({c.m for c in cells} | {m for _, m in skipped})
    return SweepGrid(
        n_values=n_values,
        m_values=m_values,
        trials=cells[0].trials if cells else 0,
        cells=cells,
        skipped=skipped,
    )


# ---------------------------------------------------------------------------
# cost traces
# ---------------------------------------------------------------------------


def trace_solve(
    scene: Scene,
    *,
    seed: int = 0,
    threads: int = 1,
    solver_overrides: Optional[dict] = None,
    quadratic_only: bool = False,
) -> TraceData:
    """Cost evolution of one sampling pass, mixing selected and rejected rows.

    The first sampling batch is ranked once; the traced subset is the best
    half of the selection plus an equal number of rejected particles spread
    evenly across the rejected cost range. All traced rows then run the full
    two-phase schedule. Rows evolve independently, so the selected rows
    behave exactly as they would inside a complete solve.
    """
    if isinstance(scene.problem, MotionProblem):
        raise ValueError("tracing applies to placement scenes")
    model = as_cost_model(scene.problem)
    config = _solver_config(scene, seed, solver_overrides, quadratic_only)

    batch = sample_uniform(model, config.n, restart_stream(config.seed, 0))
    batch.costs = model.evaluate(batch.values, LINEAR)
    top = select_topk(batch, config.m)

    n_traced = min(config.m, TRACE_PARTICLE_CAP)
    n_rej = min(n_traced // 2, config.n - config.m)
    n_sel = n_traced - n_rej
    if n_rej:
        pool = np.argsort(batch.costs, kind="stable")[config.m :]
        pick = np.round(np.linspace(0, len(pool) - 1, n_rej)).astype(int)
        ids = np.concatenate([top[:n_sel], pool[pick]])
    else:
        ids = top[:n_sel].copy()
    selected = np.zeros(len(ids), dtype=bool)
    selected[:n_sel] = True

    steps_total = config.k_lin + config.k_quad
    costs = np.zeros((steps_total, len(ids)))
    satisfied = np.zeros((steps_total, len(ids)), dtype=bool)

    def sink(step, mode, c, s):
        costs[step - 1] = c
        satisfied[step - 1] = s

    run_descent_schedule(
        model, batch.values[ids].copy(), config, threads=threads, trace_sink=sink
    )
    return TraceData(
        steps=np.arange(1, steps_total + 1),
        particle_ids=ids,
        selected=selected,
        costs=costs,
        satisfied=satisfied,
    )


def export_trace(trace: TraceData, csv_path, *, svg_path=None) -> None:
    """Write the per-step cost table (step-major) and optionally the plot."""
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "particle_id", "cost", "selected", "satisfied"])
        for si, step in enumerate(trace.steps):
            for pi, pid in enumerate(trace.particle_ids):
                w.writerow(
                    [int(step), int(pid), repr(float(trace.costs[si, pi])),
                     int(trace.selected[pi]), int(trace.satisfied[si, pi])]
                )
    if svg_path is not None:
        from .plots import plot_trace

        plot_trace(trace, svg_path)


# ---------------------------------------------------------------------------
# selection efficacy
# ---------------------------------------------------------------------------


def selection_efficacy(
    scene: Scene,
    *,
    trials: int = 20,
    seed: int = 0,
    threads: int = 1,
    solver_overrides: Optional[dict] = None,
) -> Tuple[float, float]:
    """Satisfaction rate after the schedule: selected top-m particles versus
    an equal-size random subset of the rejected ones, pooled over trials.

    Requires n >= 2m so the rejected subset can match the selected size.
    """
    if isinstance(scene.problem, MotionProblem):
        raise ValueError("placement scenes only")
    model = as_cost_model(scene.problem)
    sel_hits = rej_hits = total = 0
    for i in range(trials):
        config = _solver_config(scene, seed + i, solver_overrides, False)
        if config.n - config.m < config.m:
            raise ValueError("need n >= 2*m to draw the rejected subset")
        rng = restart_stream(config.seed, 0)
        batch = sample_uniform(model, config.n, rng)
        batch.costs = model.evaluate(batch.values, LINEAR)
        top = select_topk(batch, config.m)
        pool = np.setdiff1d(np.arange(config.n), top)
        rejected = rng.choice(pool, size=config.m, replace=False)
        values = np.concatenate([batch.values[top], batch.values[rejected]])
        run_descent_schedule(model, values, config, threads=threads)
        sat = model.satisfaction(values, config.epsilon)
        sel_hits += int(np.count_nonzero(sat[: config.m]))
        rej_hits += int(np.count_nonzero(sat[config.m :]))
        total += config.m
    return sel_hits / total, rej_hits / total
