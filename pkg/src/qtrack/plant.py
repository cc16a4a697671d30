"""Stochastic regression plant and multi-threshold sensor."""
from __future__ import annotations

from bisect import bisect_left
from dataclasses import dataclass

from .errors import LevelOutOfRange
from .model import NoiseModel, ParamVec, QuantizerSpec


@dataclass
class PlantState:
    theta: ParamVec
    quantizer: QuantizerSpec
    noise: NoiseModel
    u_prev: float = 0.0
    k: int = 1

    def advance(self, u: float) -> None:
        """Record ``u`` as the applied input and move to the next step."""
        self.u_prev = u
        self.k += 1


def output(state: PlantState, u: float, w: float) -> float:
    """y(k) = u(k) theta1 + u(k-1) theta2 + w(k); ``state`` is not touched."""
    return u * state.theta[0] + state.u_prev * state.theta[1] + w


def quantize(spec: QuantizerSpec, y: float) -> int:
    """Sensor level p with C_p < y <= C_{p+1}; intervals are closed on the right."""
    # bisect_left counts thresholds strictly below y, which is exactly p
    return bisect_left(spec.thresholds, y)


def weighted_observation(spec: QuantizerSpec, level: int) -> float:
    if not 0 <= level <= spec.m:
        raise LevelOutOfRange(f"level {level} outside 0..{spec.m}")
    return spec.weights[level]
