"""Data-parallel particle optimization engine.

The solve loop: draw a large uniform batch, rank it by linear-mode cost, keep
the best M rows, run K_lin linear-phase gradient steps with a decaying
learning rate followed by K_quad quadratic-phase steps at a small fixed rate,
then extract the particles whose quadratic-mode cost falls below epsilon.
If none do, resample from scratch, up to max_restarts attempts.

The linear phase moves particles aggressively through the cost landscape
(constant-magnitude hinge gradients with an annealed step size); the
quadratic phase polishes into the satisfying set. Particles never leave the
problem's bounding box: every step is clamped componentwise.

Determinism contract: given identical (model, config, seeds), results are
bit-identical regardless of the worker count, because sampling is a single
centralized draw per restart, all per-particle arithmetic is row-independent,
and every reduction (top-M selection, final ordering) is a stable sort.
"""
from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import LINEAR, QUADRATIC

TRACE_PARTICLE_CAP = 4096


class CostModel:
    """Batch cost interface the engine optimizes against.

    Subclasses provide vectorized ``evaluate`` and ``gradient`` over a P x D
    value matrix in either cost mode. ``satisfaction`` re-evaluates the
    quadratic-mode cost from scratch and thresholds it; the engine uses it as
    the independent soundness re-check on anything it returns.
    """

    def __init__(self, dimension: int, lower: np.ndarray, upper: np.ndarray):
        self.dimension = int(dimension)
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.shape != (self.dimension,) or self.upper.shape != (self.dimension,):
            raise ValueError("bounds must have shape (dimension,)")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    def evaluate(self, values: np.ndarray, mode: str) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, values: np.ndarray, mode: str) -> np.ndarray:
        raise NotImplementedError

    def satisfaction(self, values: np.ndarray, epsilon: float = 1e-3) -> np.ndarray:
        return self.evaluate(values, QUADRATIC) < epsilon

    def clamp(self, values: np.ndarray) -> np.ndarray:
        return np.clip(values, self.lower, self.upper)


@dataclass
class ParticleBatch:
    """Matrix of candidate solutions plus their evaluated costs."""

    values: np.ndarray  # (P, D)
    costs: np.ndarray  # (P,)
    satisfied: np.ndarray = field(default=None)  # type: ignore[assignment]
    flagged: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        self.costs = np.asarray(self.costs, dtype=float)
        n = len(self.values)
        if self.satisfied is None:
            self.satisfied = np.zeros(n, dtype=bool)
        if self.flagged is None:
            self.flagged = np.zeros(n, dtype=bool)

    def __len__(self) -> int:
        return len(self.values)


@dataclass
class OptimizerConfig:
    """Engine hyperparameters; see module docstring for the phase semantics."""

    n: int = 4096  # sampling batch size
    m: int = 512  # optimization batch size
    k_lin: int = 25  # linear-phase steps
    k_quad: int = 5  # quadratic-phase steps
    eta_init: float = 0.1  # initial linear-phase learning rate
    alpha: float = 0.05  # fixed quadratic-phase learning rate
    epsilon: float = 1e-3  # satisfaction threshold on quadratic cost
    p_return: int = 32  # max solutions returned
    max_restarts: int = 64  # resample attempts before Failure
    seed: int = 0

    def __post_init__(self):
        if not (1 <= self.m <= self.n):
            raise ValueError("need 1 <= m <= n")
        if self.k_lin < 0 or self.k_quad < 0:
            raise ValueError("step counts must be nonnegative")
        if self.eta_init <= 0 or self.alpha <= 0:
            raise ValueError("learning rates must be positive")
        if self.epsilon <= 0:
            raise ValueError("epsilon must be positive")
        if self.p_return < 1:
            raise ValueError("p_return must be >= 1")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be >= 1")


@dataclass
class TraceData:
    """Per-step cost trace of the optimized subset (one solve pass)."""

    steps: np.ndarray  # (S,) 1-based step index
    particle_ids: np.ndarray  # (n_traced,) row index in the sampled batch
    selected: np.ndarray  # (n_traced,) bool
    costs: np.ndarray  # (S, n_traced) cost in the active phase's mode
    satisfied: np.ndarray  # (S, n_traced) quadratic cost < epsilon


@dataclass
class SolveReport:
    restarts: int
    steps: int
    time_ms: float
    n_satisfying: int = 0
    flagged: int = 0
    trace: Optional[TraceData] = None


@dataclass
class SolveResult:
    success: bool
    particles: np.ndarray  # (k, D) ascending final (quadratic) cost
    costs: np.ndarray  # (k,)
    indices: np.ndarray  # (k,) original row index in the final batch
    report: SolveReport


class _BatchOps:
    """Row-chunked parallel dispatch for evaluate/gradient calls.

    Chunks are contiguous row ranges concatenated back in order, so results
    are identical to the single-threaded path for any worker count.
    """

    def __init__(self, model: CostModel, threads: int = 1):
        self.model = model
        self.threads = max(1, int(threads))
        self._pool = ThreadPoolExecutor(self.threads) if self.threads > 1 else None

    def close(self):
        if self._pool is not None:
            self._pool.shutdown(wait=True)

    def _dispatch(self, fn, values: np.ndarray, mode: str) -> np.ndarray:
        if self._pool is None or len(values) < 2 * self.threads:
            return fn(values, mode)
        chunks = np.array_split(values, self.threads)
        parts = list(self._pool.map(lambda c: fn(c, mode), chunks))
        return np.concatenate(parts)

    def evaluate(self, values, mode):
        return self._dispatch(self.model.evaluate, values, mode)

    def gradient(self, values, mode):
        return self._dispatch(self.model.gradient, values, mode)


def restart_stream(seed: int, restart: int) -> np.random.Generator:
    """RNG stream for one restart, keyed by (seed, restart index)."""
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(restart,)))


def sample_uniform(
    cost_model: CostModel, n: int, rng_stream: np.random.Generator
) -> ParticleBatch:
    """Draw n i.i.d. uniform particles within the model's bounds.

    Degenerate dimensions (lower == upper) are held fixed at the bound.
    Costs are not evaluated yet; the caller decides the mode.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    values = rng_stream.uniform(cost_model.lower, cost_model.upper, size=(n, cost_model.dimension))
    return ParticleBatch(values=values, costs=np.full(n, np.inf))


def select_topk(batch: ParticleBatch, m: int) -> np.ndarray:
    """Indices of the m lowest-cost particles, ascending, ties by row index."""
    if m > len(batch):
        raise ValueError("m exceeds batch size")
    order = np.argsort(batch.costs, kind="stable")
    return order[:m]


def lr_schedule(k: int, k_lin: int, eta_init: float) -> float:
    """Linear decay eta_init * (1 - k/K_lin) for step k in 1..K_lin.

    The final step's rate is exactly zero; that no-op step is kept
    deliberately so the step count matches the schedule length.
    """
    if not 1 <= k <= k_lin:
        raise ValueError("schedule step k out of range 1..k_lin")
    return eta_init * (1.0 - k / k_lin)


def _step_values(
    values: np.ndarray,
    flagged: np.ndarray,
    ops: _BatchOps,
    mode: str,
    rate: float,
) -> None:
    """One clamped gradient step in place; freezes rows with bad gradients."""
    grad = ops.gradient(values, mode)
    bad = ~np.all(np.isfinite(grad), axis=1)
    if np.any(bad):
        flagged |= bad
        grad = np.where(bad[:, None], 0.0, grad)
    values -= rate * grad
    np.clip(values, ops.model.lower, ops.model.upper, out=values)


def descend(
    batch: ParticleBatch, cost_model: CostModel, mode: str, rate: float, threads: int = 1
) -> ParticleBatch:
    """One gradient step on every particle: clamp(values - rate * grad).

    Costs are re-evaluated in the given mode. Particles with a non-finite
    gradient component do not move and are flagged (a cost-model bug signal).
    """
    if rate < 0:
        raise ValueError("rate must be >= 0")
    ops = _BatchOps(cost_model, threads)
    try:
        _step_values(batch.values, batch.flagged, ops, mode, rate)
        batch.costs = ops.evaluate(batch.values, mode)
    finally:
        ops.close()
    return batch


def inject_warm_start(
    batch: ParticleBatch, seeds: np.ndarray, cost_model: CostModel
) -> ParticleBatch:
    """Overwrite the first rows with seed states, clamped into bounds."""
    seeds = np.atleast_2d(np.asarray(seeds, dtype=float))
    if seeds.shape[0] == 0:
        return batch
    if seeds.shape[0] > len(batch):
        raise ValueError("more seeds than particles")
    if seeds.shape[1] != cost_model.dimension:
        raise ValueError("seed dimension mismatch")
    batch.values[: seeds.shape[0]] = cost_model.clamp(seeds)
    batch.costs[: seeds.shape[0]] = np.inf
    return batch


def run_descent_schedule(
    model: CostModel,
    values: np.ndarray,
    config: OptimizerConfig,
    *,
    threads: int = 1,
    trace_sink=None,
    epsilon: Optional[float] = None,
) -> tuple[np.ndarray, np.ndarray, int]:
    """Run the two-phase schedule on a value matrix.

    Returns (values, flagged, steps_run). ``trace_sink(step, mode, costs,
    satisfied)`` is called after every step when provided. The matrix is
    modified in place.
    """
    eps = config.epsilon if epsilon is None else epsilon
    flagged = np.zeros(len(values), dtype=bool)
    ops = _BatchOps(model, threads)
    steps = 0
    try:
        for k in range(1, config.k_lin + 1):
            _step_values(values, flagged, ops, LINEAR, lr_schedule(k, config.k_lin, config.eta_init))
            steps += 1
            if trace_sink is not None:
                trace_sink(steps, LINEAR, ops.evaluate(values, LINEAR),
                           ops.evaluate(values, QUADRATIC) < eps)
        for _ in range(config.k_quad):
            _step_values(values, flagged, ops, QUADRATIC, config.alpha)
            steps += 1
            if trace_sink is not None:
                trace_sink(steps, QUADRATIC, ops.evaluate(values, QUADRATIC),
                           ops.evaluate(values, QUADRATIC) < eps)
    finally:
        ops.close()
    return values, flagged, steps


def solve(
    cost_model: CostModel,
    config: OptimizerConfig,
    *,
    warm_seeds: Optional[np.ndarray] = None,
    threads: int = 1,
    trace: bool = False,
) -> SolveResult:
    """Full sample / select / optimize / extract loop with restarts.

    Returns up to ``p_return`` satisfying particles ordered by ascending
    quadratic-mode cost. Failure after ``max_restarts`` fruitless attempts is
    a normal return with ``success=False``. When tracing is enabled the trace
    covers the last executed restart (the one that produced the outcome) and
    subsamples to at most ``TRACE_PARTICLE_CAP`` particles.
    """
    t_start = time.perf_counter()
    total_steps = 0
    total_flagged = 0
    trace_data: Optional[TraceData] = None
    ops = _BatchOps(cost_model, threads)
    try:
        for restart in range(config.max_restarts):
            rng = restart_stream(config.seed, restart)
            batch = sample_uniform(cost_model, config.n, rng)
            if warm_seeds is not None:
                inject_warm_start(batch, warm_seeds, cost_model)
            batch.costs = ops.evaluate(batch.values, LINEAR)
            top = select_topk(batch, config.m)
            values = batch.values[top].copy()

            sink = None
            if trace:
                n_traced = min(config.m, TRACE_PARTICLE_CAP)
                step_count = config.k_lin + config.k_quad
                t_costs = np.zeros((step_count, n_traced))
                t_sat = np.zeros((step_count, n_traced), dtype=bool)

                def sink(step, mode, costs, satisfied, _c=t_costs, _s=t_sat, _n=n_traced):
                    _c[step - 1] = costs[:_n]
                    _s[step - 1] = satisfied[:_n]

                trace_data = TraceData(
                    steps=np.arange(1, step_count + 1),
                    particle_ids=top[:n_traced].copy(),
                    selected=np.ones(n_traced, dtype=bool),
                    costs=t_costs,
                    satisfied=t_sat,
                )

            values, flagged, steps = run_descent_schedule(
                cost_model, values, config, threads=threads, trace_sink=sink
            )
            total_steps += steps
            total_flagged += int(np.count_nonzero(flagged))

            final_costs = ops.evaluate(values, QUADRATIC)
            sat = final_costs < config.epsilon
            if np.any(sat):
                sat_idx = np.flatnonzero(sat)
                order = sat_idx[np.argsort(final_costs[sat_idx], kind="stable")]
                chosen = order[: config.p_return]
                # independent soundness re-check, never the cached costs
                recheck = cost_model.satisfaction(values[chosen], config.epsilon)
                chosen = chosen[recheck]
                report = SolveReport(
                    restarts=restart,
                    steps=total_steps,
                    time_ms=(time.perf_counter() - t_start) * 1e3,
                    n_satisfying=int(np.count_nonzero(sat)),
                    flagged=total_flagged,
                    trace=trace_data,
                )
                return SolveResult(
                    success=len(chosen) > 0,
                    particles=values[chosen],
                    costs=final_costs[chosen],
                    indices=top[chosen],
                    report=report,
                )
    finally:
        ops.close()
    report = SolveReport(
        restarts=config.max_restarts,
        steps=total_steps,
        time_ms=(time.perf_counter() - t_start) * 1e3,
        n_satisfying=0,
        flagged=total_flagged,
        trace=trace_data,
    )
    empty = np.zeros((0, cost_model.dimension))
    return SolveResult(
        success=False,
        particles=empty,
        costs=np.zeros(0),
        indices=np.zeros(0, dtype=int),
        report=report,
    )
