import numpy as np
import pytest

from freeflyer.control import MpcConfig, mpc_step, reference_segment
from freeflyer.dynamics import ASTROBEE_SIM, COMBINED_SIM, step
from freeflyer.local_plan import CostWeights, LocalPlan, plan_local


def _rest_plan(x=np.zeros(6), n=40):
    return LocalPlan(np.tile(x, (n + 1, 1)), np.zeros((n, 3)), 0.5, 0.0, 0.0)


def test_fixed_point_gives_zero_input():
    res = mpc_step(np.zeros(6), ASTROBEE_SIM, _rest_plan(), 0.0)
    assert np.linalg.norm(np.asarray(res.u0)) <= 1e-6


def test_offset_pushes_toward_reference():
    res = mpc_step(np.array([-0.1, 0, 0, 0, 0, 0]), ASTROBEE_SIM, _rest_plan(), 0.0)
    assert res.u0.fx > 0


def test_output_inside_box_from_any_state():
    rng = np.random.default_rng(0)
    for _ in range(20):
        x = np.concatenate([rng.uniform(-3, 3, 3), rng.uniform(-1, 1, 3)])
        res = mpc_step(x, COMBINED_SIM, _rest_plan(), 0.0)
        assert np.max(np.abs(np.asarray(res.u0))) <= 0.4


def test_reference_interpolates_plan():
    plan = plan_local(np.zeros(6), ASTROBEE_SIM, np.array([0.1, 0, 0, 0, 0, 0]), CostWeights(gamma=0.0), None, 8)
    x_ref, u_ref = reference_segment(plan, 0.25, MpcConfig())
    assert x_ref.shape == (11, 6) and u_ref.shape == (10, 3)
    np.testing.assert_allclose(x_ref[0], 0.5 * (plan.states[0] + plan.states[1]), atol=1e-15)
    np.testing.assert_array_equal(u_ref[0], plan.inputs[0])
    # past the end the reference holds the final state
    x_far, u_far = reference_segment(plan, 100.0, MpcConfig())
    np.testing.assert_array_equal(x_far, np.tile(plan.states[-1], (11, 1)))
    np.testing.assert_array_equal(u_far, 0.0)


def test_warm_start_never_worse_than_cold_zero():
    plan = plan_local(np.zeros(6), COMBINED_SIM, np.array([0.3, 0.1, 0, 0, 0, 0]), CostWeights(gamma=0.0), None, 24)
    x = np.array([0.01, -0.01, 0.05, 0, 0, 0])
    cold = mpc_step(x, COMBINED_SIM, plan, 0.0)
    warm = mpc_step(x, COMBINED_SIM, plan, 0.0, warm_start=cold.shifted())
    assert warm.cost <= cold.cost * (1 + 1e-12) or warm.cost <= cold.cost + 1e-12


def test_closed_loop_regulation():
    x = np.array([0.2, 0.0, 0.0, 0.0, 0.0, 0.0])
    warm = None
    for _ in range(300):
        res = mpc_step(x, ASTROBEE_SIM, _rest_plan(), 0.0, warm_start=warm)
        warm = res.shifted()
        for _ in range(5):
            x = step(ASTROBEE_SIM, x, res.u0, 0.02)
    assert np.hypot(x[0], x[1]) <= 0.01


def test_config_validation():
    with pytest.raises(ValueError):
        MpcConfig(weights=CostWeights(gamma=1.0))
    with pytest.raises(ValueError):
        MpcConfig(horizon_nc=0)
