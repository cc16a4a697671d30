import warnings

import numpy as np
import pytest

from qtrack.controller import ControllerState, adaptive_control, closed_loop_step, oracle_control, start_controller
from qtrack.errors import TrialDiverged, ZeroLeadingCoefficient
from qtrack.estimator import EstimatorState
from qtrack.model import NoiseModel, OmegaSet, ParamVec, QuantizerSpec
from qtrack.plant import PlantState

Q = QuantizerSpec.paper()
BOX = OmegaSet.symmetric_box(6.0, 2.0)


@pytest.mark.parametrize("theta_hat, ystar, u_prev, u", [
    ((5, 0), 1, 0, 0.2),
    ((4, 1), 2, 0.25, 0.4375),
    ((4, 0), 0, 123.0, 0.0),
])
def test_adaptive_control(theta_hat, ystar, u_prev, u):
    assert adaptive_control(ParamVec(*theta_hat), ystar, u_prev) == pytest.approx(u)


def test_guard():
    assert adaptive_control(ParamVec(0.0, 0.0), 1.0, 0.0, 1e-3) == pytest.approx(1e3)
    assert adaptive_control(ParamVec(-1e-9, 0.0), 1.0, 0.0, 1e-3) == pytest.approx(-1e3)
    # inactive guard leaves the law untouched
    assert adaptive_control(ParamVec(2e-3, 0.0), 1.0, 0.0, 1e-3) == pytest.approx(500)


def test_oracle_control():
    assert oracle_control(ParamVec(4, 1), 1, 0) == pytest.approx(0.25)
    assert oracle_control(ParamVec(4, 1), 0, 0) == 0
    with pytest.raises(ZeroLeadingCoefficient):
        oracle_control(ParamVec(0, 1), 1, 0)


def make_loop(theta_hat0=(5.0, 0.0), noise=None, y1=1.0, guard_enabled=True):
    noise = noise or NoiseModel()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        est = EstimatorState.start(theta_hat0, BOX, Q, noise)
    plant = PlantState(ParamVec(4.0, 1.0), Q, noise)
    return plant, est, start_controller(est, y1, guard_enabled=guard_enabled)


def test_first_step_chain():
    plant, est, ctl = make_loop()
    row, est = closed_loop_step(plant, est, ctl, 1.0, 2.05, 0.0)
    assert row.u == pytest.approx(0.2)
    assert row.y == pytest.approx(0.8)
    assert (row.s, row.s_bar) == (2, -50.0)
    assert est.theta_hat == (6.0, 0.0)
    assert plant.k == 2 and plant.u_prev == pytest.approx(0.2)
    assert ctl.u == pytest.approx(2.05 / 6.0)


def test_exact_tracking_with_true_parameter():
    plant, est, ctl = make_loop((4.0, 1.0), NoiseModel("zero"))
    ystar = np.random.default_rng(5).uniform(-2, 2, 60)
    ctl.u = oracle_control(ParamVec(4, 1), ystar[0], 0.0)
    for k in range(59):
        row, est = closed_loop_step(plant, est, ctl, ystar[k], ystar[k + 1], 0.0)
        assert row.y - ystar[k] == pytest.approx(0, abs=1e-12)
        assert est.theta_hat == (4.0, 1.0)


def test_zero_reference_gives_zero_input():
    plant, est, ctl = make_loop(y1=0.0)
    rng = np.random.default_rng(0)
    for _ in range(30):
        w = rng.normal()
        row, est = closed_loop_step(plant, est, ctl, 0.0, 0.0, w)
        assert row.u == 0.0 and row.y == w


def test_one_step_tracking_identity():
    rng = np.random.default_rng(8)
    ystar = 1 + rng.uniform(0, 1, 200)
    plant, est, ctl = make_loop(y1=ystar[0])
    prev = est.theta_hat
    for k in range(199):
        row, est = closed_loop_step(plant, est, ctl, ystar[k], ystar[k + 1], rng.normal())
        phi_dot = row.u * prev[0] + plant_prev * prev[1] if k else row.u * prev[0]
        assert phi_dot == pytest.approx(ystar[k], abs=1e-10)
        plant_prev, prev = row.u, est.theta_hat


def test_guard_disabled_aborts():
    with pytest.raises(TrialDiverged):
        make_loop((0.0, 0.0), guard_enabled=False)
    ctl = ControllerState(0.0, 1e-6, guard_enabled=False)
    with pytest.raises(TrialDiverged):
        ctl.next_input(ParamVec(1e-9, 0.0), 1.0, 0.0, 7)
