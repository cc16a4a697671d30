"""Assumption checks and the closed-form constants of the convergence theory."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidBounds, WindowTooShort
from .model import NoiseModel, QuantizerSpec


def lambda_min_2x2(a, b, c):
    """Smaller eigenvalue of the symmetric matrix [[a, b], [b, c]].

    Works elementwise on arrays.
    """
    return (a + c) / 2.0 - np.hypot((a - c) / 2.0, b)


def reference_excitation_trace(y_star, h: int) -> np.ndarray:
    """lambda_min of sum_{i=k+1}^{k+h-1} Y(i) Y(i)' for k = 1..K-h+1.

    ``y_star`` holds y*(1..K); Y(i) = [y*(i), y*(i-1)] with y*(0) = 0.
    """
    if h <= 2:
        raise WindowTooShort(f"window length h must exceed 2, got {h}")
    y = np.asarray(y_star, dtype=float)
    if len(y) < h:
        raise WindowTooShort(f"horizon {len(y)} shorter than window h={h}")
    prev = np.concatenate(([0.0], y[:-1]))
    # rows i = 2..K, i.e. array index 1..K-1
    a = sliding_window_view(y[1:] * y[1:], h - 1).sum(axis=1)
    b = sliding_window_view(y[1:] * prev[1:], h - 1).sum(axis=1)
    c = sliding_window_view(prev[1:] * prev[1:], h - 1).sum(axis=1)
    return lambda_min_2x2(a, b, c)


def check_reference_excitation(y_star, h: int, K: int | None = None) -> float:
    """Smallest windowed eigenvalue over the horizon; positive certifies excitation there."""
    y = np.asarray(y_star, dtype=float)
    if K is not None:
        y = y[:K]
    return float(reference_excitation_trace(y, h).min())


def f_star(noise: NoiseModel, D1: float, grid_step: float | None = None) -> float:
    """Minimum of the noise density on [-D1, D1]."""
    D1 = abs(float(D1))
    if noise.kind == "zero":
        return 0.0
    if noise.symmetric_unimodal:
        return noise.pdf(D1)
    step = grid_step or 1e-4 * D1 or 1.0
    xs = np.arange(-D1, D1 + step / 2, step)
    return min(noise.pdf(float(x)) for x in xs)


def rate_class(zeta: float) -> str:
    if math.isclose(zeta, 1.0, rel_tol=1e-12, abs_tol=0.0):
        return "log_k_over_k"
    return "one_over_k" if zeta > 1.0 else "power"


@dataclass(frozen=True)
class ProblemConstants:
    y_bar: float
    h: int
    delta_y: float
    theta_lower: float
    theta_bar: float
    m_bar: float
    M: float
    delta: float
    D1: float
    f_star: float
    zeta: float
    rate_class: str

    @property
    def rate(self) -> str:
        """Human-readable mean-square rate for the assigned case."""
        if self.rate_class == "one_over_k":
            return "O(1/k)"
        if self.rate_class == "log_k_over_k":
            return "O(ln k / k)"
        return f"O(k^-{self.zeta:.6g})"


def derive_constants(y_bar: float, h: int, delta_y: float, theta_lower: float,
                     theta_bar: float, m_bar: float, quantizer: QuantizerSpec,
                     noise: NoiseModel) -> ProblemConstants:
    """Input bound, excitation level, density floor and rate exponent."""
    if not 0 < theta_bar < theta_lower <= m_bar:
        raise InvalidBounds(
            f"need 0 < theta_bar < theta_lower <= m_bar, got {theta_bar}, {theta_lower}, {m_bar}")
    if h <= 2:
        raise WindowTooShort(f"window length h must exceed 2, got {h}")
    M = math.sqrt(2.0) * y_bar / (theta_lower - theta_bar)
    delta = delta_y / (4.0 * (h - 1) * m_bar**2)
    D1 = max(abs(quantizer.thresholds[-1]), abs(quantizer.thresholds[0])) + M * m_bar
    fs = f_star(noise, D1)
    zeta = 2.0 * quantizer.weight_span * delta * fs / h
    return ProblemConstants(y_bar, h, delta_y, theta_lower, theta_bar, m_bar, M, delta,
                            D1, fs, zeta, rate_class(zeta))
