from dataclasses import replace

import numpy as np
import pytest

from freeflyer.dynamics import COMBINED_SIM
from freeflyer.global_plan import ObstacleWorld
from freeflyer.harness import (
    TRACE_COLUMNS, GlobalPlanFailed, Timeout, check_trace, compare_informative, monte_carlo, run_scenario,
)
from freeflyer.scenario import load_scenario


@pytest.fixture(scope="module")
def short_payload():
    # 20 s of the transfer: long enough for one replan and one model update
    cfg = load_scenario("payload_transfer").with_(max_sim_time=20.0)
    return cfg, run_scenario(cfg)


def test_start_in_goal_is_immediate_success():
    tr = run_scenario(load_scenario("trivial"))
    assert tr.success
    assert len(tr.rows) == 0 and tr.duration == 0.0
    assert tr.to_csv().strip() == ",".join(TRACE_COLUMNS)
    assert check_trace(tr) == []


def test_timeout_returns_partial_trace(short_payload):
    cfg, tr = short_payload
    assert tr.status == "timeout"
    assert len(tr.rows) == 200
    with pytest.raises(Timeout) as info:
        run_scenario(cfg, raise_on_timeout=True)
    np.testing.assert_array_equal(info.value.trace.rows, tr.rows)


def test_same_seed_bit_identical(short_payload):
    cfg, tr = short_payload
    again = run_scenario(cfg)
    assert again.to_csv() == tr.to_csv()
    np.testing.assert_array_equal(again.truth_fine, tr.truth_fine)
    other = run_scenario(cfg.with_(seed=cfg.seed + 1))
    assert other.to_csv() != tr.to_csv()


def test_trace_layout_and_checker(short_payload):
    cfg, tr = short_payload
    assert tr.rows.shape[1] == len(TRACE_COLUMNS)
    assert check_trace(tr) == []
    # one control row per tick and five RK4 sub-steps per tick
    assert len(tr.truth_fine) == 5 * len(tr.rows) + 1
    assert np.all(np.abs(tr.rows[:, 13:16]) <= 0.4)
    np.testing.assert_array_equal(tr.rows[:, 0], np.arange(200) * 0.1)


def test_schedule_counts(short_payload):
    _, tr = short_payload
    assert tr.replan_times == [0.0, 12.0]
    assert tr.n_replans == 1 and tr.n_model_updates == 1
    assert tr.update_times == [16.0]
    assert tr.clamp_events == 0
    assert list(np.unique(tr.rows[:, -1])) == [0.0, 1.0]


def test_model_swaps_pass_the_gate(short_payload):
    _, tr = short_payload
    assert set(t for t, _ in tr.swaps) <= set(tr.update_times)
    traces = [np.sum(tr.config.theta_init.cov)]
    for t, theta in tr.swaps:
        row = tr.rows[np.argmin(np.abs(tr.rows[:, 0] - t))]
        np.testing.assert_allclose(row[16:20], theta, rtol=1e-12)
        traces.append(row[20:24].sum())
    assert all(b < a for a, b in zip(traces, traces[1:]))


def test_checker_rejects_bad_traces(short_payload):
    _, tr = short_payload
    bad = tr.rows.copy()
    bad[5, 14] = 0.5
    assert any("wrench" in p for p in check_trace(replace(tr, rows=bad)))
    bad = tr.rows.copy()
    bad[7, 0] = bad[6, 0]
    assert any("time" in p for p in check_trace(replace(tr, rows=bad)))
    assert any("replan" in p for p in check_trace(replace(tr, replan_times=[0.0])))
    fine = tr.truth_fine.copy()
    fine[10, :2] = [10.0, 0.0]
    assert any("bounds" in p for p in check_trace(replace(tr, truth_fine=fine)))


def test_global_plan_failure_raises():
    cfg = load_scenario("payload_transfer")
    blocked = ObstacleWorld(cfg.world.bounds, np.array([[0.0, 0.0, 0.3]]))
    with pytest.raises(GlobalPlanFailed):
        run_scenario(cfg.with_(world=blocked))


def test_single_run_summary_equals_the_run(short_payload):
    cfg, tr = short_payload
    s = monte_carlo(cfg, 1)
    th, p = tr.final_params()
    np.testing.assert_array_equal(s.runs[0].final_theta, th)
    np.testing.assert_array_equal(s.mean_p, p)
    np.testing.assert_array_equal(s.mean_error, th - np.asarray(COMBINED_SIM))
    np.testing.assert_array_equal(s.std_error, 0.0)
    assert s.failures == 1  # a timeout counts as a failure


def test_identical_arms_give_zero_change():
    cfg = load_scenario("payload_transfer").with_(max_sim_time=5.0, gamma0=0.0)
    comp = compare_informative(cfg, 2)
    assert all(v == 0.0 for v in comp.change_pct.values())
    assert comp.nominal.theta_true == comp.informative.theta_true == list(np.asarray(COMBINED_SIM))
    with pytest.raises(ValueError):
        compare_informative(cfg, 1)
    with pytest.raises(ValueError):
        monte_carlo(cfg, 0)


@pytest.mark.slow
def test_payload_transfer_reaches_goal():
    tr = run_scenario(load_scenario("payload_transfer"))
    assert tr.success
    assert check_trace(tr) == []
