"""Projected stochastic-approximation identifier driven by weighted sensor levels."""
from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

from .errors import InvalidObservation
from .model import NoiseModel, OmegaSet, ParamVec, QuantizerSpec, Regressor, project


def predicted_weight(theta_hat: ParamVec, phi: Regressor, quantizer: QuantizerSpec,
                     noise: NoiseModel) -> float:
    """Expected weighted observation if ``theta_hat`` were the true parameter.

    Sums beta_p [F(C_{p+1} - z) - F(C_p - z)] with z = phi' theta_hat, in
    ascending p, using F(-inf) = 0 and F(+inf) = 1 for the outer thresholds.
    """
    z = phi.dot(theta_hat)
    c, b = quantizer.thresholds, quantizer.weights
    m = len(c)
    total = 0.0
    f_lo = 0.0
    for p in range(m + 1):
        f_hi = noise.cdf(c[p] - z) if p < m else 1.0
        total += b[p] * (f_hi - f_lo)
        f_lo = f_hi
    return total


@dataclass(frozen=True)
class EstimatorState:
    theta_hat: ParamVec
    omega: OmegaSet
    quantizer: QuantizerSpec
    noise: NoiseModel
    k: int = 1

    @classmethod
    def start(cls, theta_hat0, omega: OmegaSet, quantizer: QuantizerSpec,
              noise: NoiseModel) -> EstimatorState:
        """Initial state at k = 1; warns when ``omega`` is not inside the minimum-phase set."""
        if omega.admits_min_phase_violation():
            warnings.warn("projection set contains parameters with |theta1| <= |theta2|; "
                          "the controller guard keeps the control law defined",
                          RuntimeWarning, stacklevel=2)
        return cls(project(omega, theta_hat0), omega, quantizer, noise, 1)


def update(state: EstimatorState, phi: Regressor, s_bar: float) -> EstimatorState:
    """One projected update with gain 1/k; returns a new state with k + 1."""
    if s_bar not in state.quantizer.weights:
        raise InvalidObservation(f"{s_bar} is not one of the quantizer weights")
    a = predicted_weight(state.theta_hat, phi, state.quantizer, state.noise)
    g = (a - s_bar) / state.k
    th = state.theta_hat
    raw = (th[0] + phi[0] * g, th[1] + phi[1] * g)
    return replace(state, theta_hat=project(state.omega, raw), k=state.k + 1)


def estimation_error(theta_hat, theta_true) -> float:
    """Squared Euclidean distance between estimate and truth."""
    d1 = theta_hat[0] - theta_true[0]
    d2 = theta_hat[1] - theta_true[1]
    return d1 * d1 + d2 * d2
