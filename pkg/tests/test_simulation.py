import numpy as np
import pytest

from dadmpc.exceptions import FeasibilityFault
from dadmpc.simulation import (TRACE_COLUMNS, SimulationContext, disturbance_sequence,
                               lqr_input, run_closed_loop, sample_disturbance, sweep)

T_SHORT = 120


def test_truncated_normal_samples():
    rng = np.random.default_rng(0)
    W = np.array([sample_disturbance(rng, 3.0) for _ in range(100_000)])
    assert np.all(np.abs(W) <= 3.0)
    assert np.all(np.abs(W.mean(axis=0)) <= 0.02)
    with pytest.raises(ValueError):
        sample_disturbance(rng, 0.0)


def test_disturbance_sequence_is_seed_determined():
    a = disturbance_sequence(5, 300, 3.0)
    b = disturbance_sequence(5, 300, 3.0)
    assert a.tobytes() == b.tobytes()
    assert not np.array_equal(a, disturbance_sequence(6, 300, 3.0))


def test_lqr_input_saturates(spec, ctx):
    u = lqr_input(ctx.K, np.array([100.0, 100.0]), spec.u_set)
    assert abs(u[0]) == 12.0


@pytest.mark.parametrize("variant", ["dad-asy", "dad-rob", "fri-only", "robust", "lqr"])
def test_short_run_bookkeeping(ctx, variant):
    m = run_closed_loop(ctx, variant, 3, 0.2, T=T_SHORT)
    t = np.arange(1, T_SHORT + 1)
    np.testing.assert_array_equal(m.V, np.cumsum(m.v) / t)
    # Lemma 1 identity and band at every step
    lhs = np.cumsum(m.v) / t
    rhs = m.alpha + (m.alpha_0 - m.alpha_traj[1:]) / (t * m.eta)
    assert np.max(np.abs(lhs - rhs)) <= 1e-9
    lo = m.alpha + (m.alpha_0 - np.maximum.accumulate(m.alpha_traj)[1:]) / (t * m.eta)
    hi = m.alpha + (m.alpha_0 - np.minimum.accumulate(m.alpha_traj)[1:]) / (t * m.eta)
    assert np.all(lo - 1e-12 <= m.V) and np.all(m.V <= hi + 1e-12)
    assert m.J == pytest.approx(m.stage_costs.sum())
    assert np.all(np.abs(m.inputs) <= 12 + 1e-6)
    lines = m.trace_csv.splitlines()
    assert lines[0].split(",") == list(TRACE_COLUMNS)
    assert len(lines) == T_SHORT + 2


def test_variants_share_disturbances(ctx):
    a = run_closed_loop(ctx, "lqr", 4, 0.2, T=50)
    b = run_closed_loop(ctx, "fri-only", 4, 0.2, T=50)
    assert a.disturbances.tobytes() == b.disturbances.tobytes()


def test_trace_is_byte_identical_and_timing_optional(ctx):
    a = run_closed_loop(ctx, "dad-asy", 2, 0.2, T=40)
    b = run_closed_loop(ctx, "dad-asy", 2, 0.2, T=40)
    assert a.trace_csv == b.trace_csv
    assert all(line.endswith(",") for line in a.trace_csv.splitlines()[1:])
    c = run_closed_loop(ctx, "dad-asy", 2, 0.2, T=40, record_timing=True)
    assert not c.trace_csv.splitlines()[1].endswith(",")


def test_inadmissible_start_aborts(spec):
    bad = SimulationContext(spec.with_overrides(run={"x0": [6.9, 11.5]}))
    with pytest.raises(FeasibilityFault):
        run_closed_loop(bad, "dad-rob", 1, 0.2, T=5)
    # the baselines do not need the ladder
    run_closed_loop(bad, "lqr", 1, 0.2, T=5)


def test_sweep_records_cells_and_reuses_alpha_free_runs(ctx):
    res = sweep(ctx, ["robust", "lqr", "fri-only"], [0.0, 0.2], [1], T=30)
    assert len(res.cells) == 6 and not res.faults
    r0 = res.runs[("robust", 0.0, 1)]
    r2 = res.runs[("robust", 0.2, 1)]
    assert r0.J == r2.J and r2.alpha == 0.2
    assert res.runs[("lqr", 0.2, 1)].J_over_J_lqr == 1.0
    rows = res.table()
    assert {r["variant"] for r in rows} == {"robust", "lqr", "fri-only"}


def test_sweep_collects_faults(spec):
    bad = SimulationContext(spec.with_overrides(run={"x0": [6.9, 11.5]}))
    res = sweep(bad, ["dad-rob", "lqr"], [0.2], [1], T=5)
    assert len(res.faults) == 1 and res.faults[0]["variant"] == "dad-rob"
    assert [c["fault"] is None for c in res.cells] == [False, True]
