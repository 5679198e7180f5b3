"""Engine tests: frozen selection/schedule values, clamping, determinism.

Frozen expected values:
  select_topk([3,1,2], M=2)      -> [1, 2]
  select_topk([1,1,0], M=2)      -> [2, 0]   (stable tie-break by index)
  lr_schedule(5, 25, 0.1)        -> 0.08
  lr_schedule(K_lin, K_lin, eta) -> 0.0
  descend on |x-0.3| from 0.5 at rate 0.1 -> 0.4
"""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqplace.particle_opt import (
    CostModel,
    OptimizerConfig,
    descend,
    inject_warm_start,
    lr_schedule,
    restart_stream,
    sample_uniform,
    select_topk,
    solve,
)


class AbsModel(CostModel):
    """1-D |x - c| (linear) / (x - c)^2 (quadratic) toy model."""

    def __init__(self, center=0.3, lo=0.0, hi=1.0):
        super().__init__(
            dimension=1, lower=np.array([lo]), upper=np.array([hi])
        )
        self.center = center

    def evaluate(self, values, mode):
        r = np.abs(values[:, 0] - self.center)
        return r * r if mode == "quadratic" else r

    def gradient(self, values, mode):
        d = values[:, 0] - self.center
        g = 2.0 * d if mode == "quadratic" else np.sign(d)
        return g[:, None]


class EverywhereModel(CostModel):
    """Zero cost everywhere; every particle satisfies."""

    def __init__(self, dim=2):
        super().__init__(
            dimension=dim, lower=np.zeros(dim), upper=np.ones(dim)
        )

    def evaluate(self, values, mode):
        return np.zeros(len(values))

    def gradient(self, values, mode):
        return np.zeros_like(values)


class NeverModel(CostModel):
    """Cost bounded away from zero; no particle ever satisfies."""

    def __init__(self):
        super().__init__(dimension=1, lower=np.zeros(1), upper=np.ones(1))

    def evaluate(self, values, mode):
        return 1.0 + values[:, 0] ** 2

    def gradient(self, values, mode):
        return 2.0 * values

    def satisfaction(self, values, epsilon=1e-3):
        return np.zeros(len(values), dtype=bool)


class NanGradModel(EverywhereModel):
    """Returns a non-finite gradient for rows whose first component > 0.5."""

    def gradient(self, values, mode):
        g = np.ones_like(values)
        g[values[:, 0] > 0.5, 0] = np.nan
        return g

    def evaluate(self, values, mode):
        return np.sum(values, axis=1)


def small_config(**kw):
    defaults = dict(n=64, m=16, k_lin=5, k_quad=3, eta_init=0.1, alpha=0.05,
                    epsilon=1e-3, p_return=8, max_restarts=4, seed=0)
    defaults.update(kw)
    return OptimizerConfig(**defaults)


# ---------------------------------------------------------------------------
# sample_uniform
# ---------------------------------------------------------------------------


def test_sample_uniform_bounds_containment():
    model = EverywhereModel(dim=2)
    batch = sample_uniform(model, 1000, restart_stream(3, 0))
    assert batch.values.shape == (1000, 2)
    assert np.all(batch.values >= 0.0) and np.all(batch.values <= 1.0)


def test_sample_uniform_degenerate_dimension():
    model = EverywhereModel(dim=3)
    model.lower = np.array([0.0, 0.0, 0.5])
    model.upper = np.array([1.0, 1.0, 0.5])
    batch = sample_uniform(model, 50, restart_stream(0, 0))
    np.testing.assert_array_equal(batch.values[:, 2], np.full(50, 0.5))


def test_sample_uniform_mean_law_of_large_numbers():
    model = EverywhereModel(dim=2)
    batch = sample_uniform(model, 10**5, restart_stream(1, 0))
    means = batch.values.mean(axis=0)
    assert np.all(np.abs(means - 0.5) < 0.01)


def test_restart_streams_differ():
    a = restart_stream(0, 0).uniform(size=4)
    b = restart_stream(0, 1).uniform(size=4)
    c = restart_stream(1, 0).uniform(size=4)
    assert not np.allclose(a, b)
    assert not np.allclose(a, c)
    np.testing.assert_array_equal(a, restart_stream(0, 0).uniform(size=4))


# ---------------------------------------------------------------------------
# select_topk
# ---------------------------------------------------------------------------


def test_select_topk_frozen():
    from seqplace.particle_opt import ParticleBatch

    batch = ParticleBatch(values=np.zeros((3, 1)), costs=np.array([3.0, 1.0, 2.0]))
    np.testing.assert_array_equal(select_topk(batch, 2), [1, 2])
    batch.costs = np.array([1.0, 1.0, 0.0])
    np.testing.assert_array_equal(select_topk(batch, 2), [2, 0])


def test_select_topk_full_permutation():
    from seqplace.particle_opt import ParticleBatch

    rng = np.random.default_rng(0)
    costs = rng.uniform(size=20)
    batch = ParticleBatch(values=np.zeros((20, 1)), costs=costs)
    idx = select_topk(batch, 20)
    assert sorted(idx) == list(range(20))
    assert np.all(np.diff(costs[idx]) >= 0)


@given(st.lists(st.integers(0, 5), min_size=1, max_size=30))
def test_select_topk_stable_under_ties(vals):
    from seqplace.particle_opt import ParticleBatch

    costs = np.array(vals, dtype=float)
    batch = ParticleBatch(values=np.zeros((len(vals), 1)), costs=costs)
    idx = select_topk(batch, len(vals))
    for a, b in zip(idx, idx[1:]):
        assert (costs[a], a) < (costs[b], b)


# ---------------------------------------------------------------------------
# lr_schedule
# ---------------------------------------------------------------------------


def test_lr_schedule_frozen_values():
    assert lr_schedule(5, 25, 0.1) == pytest.approx(0.08)
    assert lr_schedule(25, 25, 0.1) == 0.0
    assert lr_schedule(1, 1, 0.5) == 0.0


def test_lr_schedule_strictly_decreasing():
    rates = [lr_schedule(k, 25, 0.1) for k in range(1, 26)]
    assert all(a > b for a, b in zip(rates, rates[1:]))


def test_lr_schedule_rejects_out_of_range():
    with pytest.raises(ValueError):
        lr_schedule(0, 25, 0.1)
    with pytest.raises(ValueError):
        lr_schedule(26, 25, 0.1)


# ---------------------------------------------------------------------------
# descend
# ---------------------------------------------------------------------------


def test_descend_zero_rate_noop():
    model = AbsModel()
    batch = sample_uniform(model, 16, restart_stream(0, 0))
    before = batch.values.copy()
    descend(batch, model, "linear", 0.0)
    np.testing.assert_array_equal(batch.values, before)


def test_descend_unit_slope_step():
    model = AbsModel(center=0.3)
    from seqplace.particle_opt import ParticleBatch

    batch = ParticleBatch(values=np.array([[0.5]]), costs=np.array([np.inf]))
    descend(batch, model, "linear", 0.1)
    assert batch.values[0, 0] == pytest.approx(0.4)
    assert batch.costs[0] == pytest.approx(0.1)


def test_descend_clamps_to_bounds():
    model = AbsModel(center=-5.0)  # gradient pushes x below 0
    from seqplace.particle_opt import ParticleBatch

    batch = ParticleBatch(values=np.array([[0.05]]), costs=np.array([np.inf]))
    descend(batch, model, "linear", 0.2)
    assert batch.values[0, 0] == 0.0


def test_descend_freezes_nonfinite_gradient():
    model = NanGradModel(dim=2)
    from seqplace.particle_opt import ParticleBatch

    batch = ParticleBatch(
        values=np.array([[0.2, 0.2], [0.8, 0.2]]), costs=np.full(2, np.inf)
    )
    descend(batch, model, "linear", 0.1)
    # healthy particle stepped, poisoned particle frozen and flagged
    np.testing.assert_allclose(batch.values[0], [0.1, 0.1])
    np.testing.assert_allclose(batch.values[1], [0.8, 0.2])
    assert batch.flagged[1] and not batch.flagged[0]


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_descend_always_within_bounds(seed):
    model = AbsModel(center=0.9)
    batch = sample_uniform(model, 32, restart_stream(seed, 0))
    batch.costs = model.evaluate(batch.values, "linear")
    for rate in (0.0, 0.3, 1.7):
        descend(batch, model, "linear", rate)
        assert np.all(batch.values >= model.lower) and np.all(
            batch.values <= model.upper
        )


# ---------------------------------------------------------------------------
# inject_warm_start
# ---------------------------------------------------------------------------


def test_inject_warm_start_overwrites_first_rows():
    model = EverywhereModel(dim=2)
    batch = sample_uniform(model, 8, restart_stream(0, 0))
    seeds = np.array([[0.1, 0.2], [0.3, 0.4]])
    inject_warm_start(batch, seeds, model)
    np.testing.assert_array_equal(batch.values[:2], seeds)


def test_inject_warm_start_empty_noop():
    model = EverywhereModel(dim=2)
    batch = sample_uniform(model, 8, restart_stream(0, 0))
    before = batch.values.copy()
    inject_warm_start(batch, np.zeros((0, 2)), model)
    np.testing.assert_array_equal(batch.values, before)


def test_inject_warm_start_clamps_out_of_bounds():
    model = EverywhereModel(dim=2)
    batch = sample_uniform(model, 8, restart_stream(0, 0))
    inject_warm_start(batch, np.array([[-3.0, 7.0]]), model)
    np.testing.assert_array_equal(batch.values[0], [0.0, 1.0])


# ---------------------------------------------------------------------------
# solve
# ---------------------------------------------------------------------------


def test_solve_convex_1d():
    model = AbsModel(center=0.3)
    result = solve(model, small_config(k_lin=20, k_quad=10))
    assert result.success
    assert np.all(np.abs(result.particles[:, 0] - 0.3) < np.sqrt(1e-3))
    # quadratic satisfaction: (x-c)^2 < eps
    assert np.all(result.costs < 1e-3)


def test_solve_everywhere_satisfying_first_restart():
    model = EverywhereModel(dim=2)
    cfg = small_config(n=32, m=8, p_return=16)
    result = solve(model, cfg)
    assert result.success
    assert result.report.restarts == 0
    # all M particles satisfy; p_return caps at 16 but only m=8 were optimized
    assert len(result.particles) == 8
    assert result.report.steps == cfg.k_lin + cfg.k_quad


def test_solve_failure_is_normal_return():
    model = NeverModel()
    result = solve(model, small_config(max_restarts=3))
    assert not result.success
    assert len(result.particles) == 0
    assert result.report.restarts == 3
    assert result.report.steps == 3 * (5 + 3)


def test_solve_results_sorted_ascending():
    model = AbsModel(center=0.5)
    result = solve(model, small_config(k_lin=20, k_quad=10, p_return=32))
    assert result.success
    assert np.all(np.diff(result.costs) >= 0)


def test_solve_deterministic_across_runs_and_threads():
    model = AbsModel(center=0.7)
    cfg = small_config(k_lin=10, k_quad=5)
    r1 = solve(model, cfg)
    r2 = solve(model, cfg)
    r4 = solve(model, cfg, threads=4)
    np.testing.assert_array_equal(r1.particles, r2.particles)
    np.testing.assert_array_equal(r1.particles, r4.particles)
    np.testing.assert_array_equal(r1.costs, r4.costs)


def test_solve_warm_start_survives_selection():
    model = AbsModel(center=0.42)
    seeds = np.array([[0.42]])
    result = solve(model, small_config(), warm_seeds=seeds)
    assert result.success
    assert result.report.restarts == 0
    assert np.any(np.abs(result.particles[:, 0] - 0.42) < 1e-6)


def test_solve_trace_shape():
    model = AbsModel(center=0.3)
    cfg = small_config(n=32, m=8, k_lin=4, k_quad=2)
    result = solve(model, cfg, trace=True)
    tr = result.report.trace
    assert tr is not None
    assert tr.costs.shape == (6, 8)  # (k_lin + k_quad, m) traced
    assert tr.particle_ids.shape == (8,)
    assert np.all(tr.selected)
    assert tr.steps.tolist() == [1, 2, 3, 4, 5, 6]


def test_config_validation():
    with pytest.raises(ValueError):
        small_config(m=100)  # m > n
    with pytest.raises(ValueError):
        small_config(eta_init=0.0)
    with pytest.raises(ValueError):
        small_config(epsilon=-1.0)
    with pytest.raises(ValueError):
        small_config(p_return=0)
