"""Certainty-equivalence tracking control and the closed-loop step."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

from .errors import TrialDiverged, ZeroLeadingCoefficient
from .estimator import EstimatorState, update
from .model import ParamVec, Regressor
from .plant import PlantState, output, quantize, weighted_observation

DEFAULT_EPSILON_GUARD = 1e-6


def guarded_divisor(theta1: float, epsilon_guard: float) -> float:
    """theta1 pushed away from zero to magnitude >= ``epsilon_guard``; sign(0) is +1."""
    mag = abs(theta1)
    if mag >= epsilon_guard:
        return theta1
    return -epsilon_guard if theta1 < 0 else epsilon_guard


def adaptive_control(theta_hat: ParamVec, y_star_next: float, u_prev: float,
                     epsilon_guard: float = DEFAULT_EPSILON_GUARD) -> float:
    """Input that would put the next output on ``y_star_next`` if ``theta_hat`` were exact."""
    d = guarded_divisor(theta_hat[0], epsilon_guard)
    return y_star_next / d - (theta_hat[1] / d) * u_prev


def oracle_control(theta: ParamVec, y_star_next: float, u_prev: float) -> float:
    """Known-parameter optimal input."""
    if theta[0] == 0.0:
        raise ZeroLeadingCoefficient("theta1 = 0: the plant cannot be inverted")
    return y_star_next / theta[0] - (theta[1] / theta[0]) * u_prev


@dataclass
class ControllerState:
    """``u`` is the input queued for the current step."""

    u: float = 0.0
    epsilon_guard: float = DEFAULT_EPSILON_GUARD
    guard_enabled: bool = True

    def __post_init__(self):
        if not self.epsilon_guard > 0:
            raise ValueError("epsilon_guard must be > 0")

    def next_input(self, theta_hat: ParamVec, y_star_next: float, u_prev: float,
                   k: int) -> tuple[float, bool]:
        """Return (u(k+1), guard_was_active)."""
        active = abs(theta_hat[0]) < self.epsilon_guard
        if active and not self.guard_enabled:
            raise TrialDiverged(k, f"|theta1_hat| = {abs(theta_hat[0]):.3g} below "
                                   f"{self.epsilon_guard:g} with the guard disabled")
        return adaptive_control(theta_hat, y_star_next, u_prev, self.epsilon_guard), active


class StepRow(NamedTuple):
    k: int
    u: float
    y: float
    s: int
    s_bar: float
    theta_hat: ParamVec
    y_star: float
    guard_active: bool


def start_controller(estimator: EstimatorState, y_star_first: float,
                     epsilon_guard: float = DEFAULT_EPSILON_GUARD,
                     guard_enabled: bool = True) -> ControllerState:
    """Initial input u(1) = y*(1) / theta1_hat(0), with u(0) = 0."""
    ctl = ControllerState(0.0, epsilon_guard, guard_enabled)
    ctl.u, _ = ctl.next_input(estimator.theta_hat, y_star_first, 0.0, 0)
    return ctl


def closed_loop_step(plant: PlantState, estimator: EstimatorState, controller: ControllerState,
                     y_star: float, y_star_next: float, w: float) -> tuple[StepRow, EstimatorState]:
    """Advance the loop by one step k = ``plant.k``.

    Applies the queued u(k), measures and quantizes y(k), updates the estimate
    with phi(k) = [u(k), u(k-1)] and queues u(k+1) from the new estimate.
    ``plant`` and ``controller`` are advanced in place; the new estimator
    state is returned with the row.
    """
    k = plant.k
    u = controller.u
    y = output(plant, u, w)
    if not math.isfinite(y):
        raise TrialDiverged(k, f"non-finite output y={y}")
    s = quantize(plant.quantizer, y)
    s_bar = weighted_observation(plant.quantizer, s)
    estimator = update(estimator, Regressor(u, plant.u_prev), s_bar)
    u_next, active = controller.next_input(estimator.theta_hat, y_star_next, u, k)
    plant.advance(u)
    controller.u = u_next
    return StepRow(k, u, y, s, s_bar, estimator.theta_hat, y_star, active), estimator
