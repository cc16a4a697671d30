"""Problem data shared by the plant, estimator, controller and harness.

All types are frozen dataclasses: once built they are safe to hand to any
number of trial workers.
"""
from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import (
    EmptyQuantizer,
    InvalidNoise,
    InvalidOmega,
    InvalidReference,
    NonAscendingThresholds,
    NonDecreasingWeights,
)

SQRT2 = math.sqrt(2.0)
SQRT2PI = math.sqrt(2.0 * math.pi)


class ParamVec(NamedTuple):
    """Two-coefficient parameter: ``c1`` multiplies u(k), ``c2`` multiplies u(k-1)."""

    c1: float
    c2: float

    def norm(self) -> float:
        return math.hypot(self.c1, self.c2)


class Regressor(NamedTuple):
    """phi(k) = [u(k), u(k-1)]."""

    u_curr: float
    u_prev: float

    def dot(self, theta: ParamVec) -> float:
        return self.u_curr * theta.c1 + self.u_prev * theta.c2

    def norm(self) -> float:
        return math.hypot(self.u_curr, self.u_prev)


@dataclass(frozen=True)
class QuantizerSpec:
    """Finite thresholds C_1 < ... < C_m and weights beta_0 > ... > beta_m.

    The outer thresholds C_0 = -inf and C_{m+1} = +inf are implicit.
    """

    thresholds: tuple[float, ...]
    weights: tuple[float, ...]

    def __init__(self, thresholds: Sequence[float], weights: Sequence[float]):
        object.__setattr__(self, "thresholds", tuple(float(c) for c in thresholds))
        object.__setattr__(self, "weights", tuple(float(b) for b in weights))
        validate_quantizer(self)

    @property
    def m(self) -> int:
        return len(self.thresholds)

    @property
    def beta_max(self) -> float:
        return self.weights[0]

    @property
    def beta_min(self) -> float:
        return self.weights[-1]

    @property
    def weight_span(self) -> float:
        """beta_0 - beta_m, the largest possible innovation magnitude."""
        return self.weights[0] - self.weights[-1]

    @classmethod
    def paper(cls) -> QuantizerSpec:
        """Three finite thresholds and four weights of the reference experiment."""
        return cls([-2.0, 0.0, 2.0], [80.0, 50.0, -50.0, -80.0])


def validate_quantizer(spec: QuantizerSpec) -> None:
    """Raise if ``spec`` breaks a quantizer invariant; return ``None`` otherwise."""
    c, b = spec.thresholds, spec.weights
    if len(c) < 1:
        raise EmptyQuantizer("need at least one finite threshold (m >= 1)")
    if not all(math.isfinite(x) for x in c + b):
        raise NonAscendingThresholds("thresholds and weights must be finite")
    for p in range(len(c) - 1):
        if not c[p] < c[p + 1]:
            raise NonAscendingThresholds(
                f"thresholds must be strictly ascending: C_{p + 1}={c[p]} >= C_{p + 2}={c[p + 1]}"
            )
    if len(b) != len(c) + 1:
        raise NonDecreasingWeights(
            f"need m+1={len(c) + 1} weights for m={len(c)} thresholds, got {len(b)}"
        )
    for p in range(len(b) - 1):
        if not b[p] > b[p + 1]:
            raise NonDecreasingWeights(
                f"weights must be strictly decreasing: beta_{p}={b[p]} <= beta_{p + 1}={b[p + 1]}"
            )


# Integer codes shared with the compiled and pure-Python kernels.
NOISE_GAUSSIAN = 0
NOISE_LOGISTIC = 1
NOISE_UNIFORM = 2
NOISE_ZERO = 3

_NOISE_CODES = {
    "gaussian": NOISE_GAUSSIAN,
    "logistic": NOISE_LOGISTIC,
    "uniform": NOISE_UNIFORM,
    "zero": NOISE_ZERO,
}


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean i.i.d. noise law with known CDF and density.

    ``scale`` is the standard deviation for ``gaussian``, the logistic scale
    for ``logistic`` and the half-width for ``uniform``.  ``zero`` is a point
    mass at 0 and exists for noiseless test runs; its density is undefined.
    """

    kind: str = "gaussian"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in _NOISE_CODES:
            raise InvalidNoise(f"unknown noise kind {self.kind!r}")
        if self.kind != "zero" and not (math.isfinite(self.scale) and self.scale > 0):
            raise InvalidNoise(f"noise scale must be finite and > 0, got {self.scale}")

    @classmethod
    def standard_normal(cls) -> NoiseModel:
        return cls("gaussian", 1.0)

    @property
    def code(self) -> int:
        return _NOISE_CODES[self.kind]

    @property
    def variance(self) -> float:
        s = self.scale
        if self.kind == "gaussian":
            return s * s
        if self.kind == "logistic":
            return s * s * math.pi**2 / 3.0
        if self.kind == "uniform":
            return s * s / 3.0
        return 0.0

    @property
    def symmetric_unimodal(self) -> bool:
        return self.kind in ("gaussian", "logistic", "uniform")

    def cdf(self, x: float) -> float:
        return noise_cdf(self.code, self.scale, x)

    def pdf(self, x: float) -> float:
        s = self.scale
        if self.kind == "gaussian":
            z = x / s
            return math.exp(-0.5 * z * z) / (s * SQRT2PI)
        if self.kind == "logistic":
            e = math.exp(-abs(x) / s)
            return e / (s * (1.0 + e) ** 2)
        if self.kind == "uniform":
            return 1.0 / (2.0 * s) if -s <= x <= s else 0.0
        raise InvalidNoise("point-mass noise has no density")

    def sample(self, rng: np.random.Generator) -> float:
        return float(self.sample_array(rng, 1)[0])

    def sample_array(self, rng: np.random.Generator, n: int) -> np.ndarray:
        s = self.scale
        if self.kind == "gaussian":
            return rng.normal(0.0, s, n)
        if self.kind == "logistic":
            return rng.logistic(0.0, s, n)
        if self.kind == "uniform":
            return rng.uniform(-s, s, n)
        return np.zeros(n)


def noise_cdf(code: int, scale: float, x: float) -> float:
    """CDF of the noise law identified by ``code``; the kernels mirror this."""
    if code == NOISE_GAUSSIAN:
        return 0.5 * math.erfc(-x / (scale * SQRT2))
    if code == NOISE_LOGISTIC:
        z = x / scale
        if z >= 0:
            return 1.0 / (1.0 + math.exp(-z))
        e = math.exp(z)
        return e / (1.0 + e)
    if code == NOISE_UNIFORM:
        if x <= -scale:
            return 0.0
        if x >= scale:
            return 1.0
        return (x + scale) / (2.0 * scale)
    return 1.0 if x >= 0.0 else 0.0


@dataclass(frozen=True)
class OmegaSet:
    """Axis-aligned box [lo1, hi1] x [lo2, hi2] used as the projection domain.

    Build the sign-constrained variant with :meth:`signed_box`; it is still a
    box, so projection stays coordinate-wise clamping.
    """

    lo1: float
    hi1: float
    lo2: float
    hi2: float
    kind: str = "box"
    sign: int = 0
    theta_lower: float = math.nan
    theta_bar: float = math.nan
    m_bar: float = math.nan

    def __post_init__(self):
        vals = (self.lo1, self.hi1, self.lo2, self.hi2)
        if not all(math.isfinite(v) for v in vals):
            raise InvalidOmega("box bounds must be finite (compactness)")
        if self.lo1 > self.hi1 or self.lo2 > self.hi2:
            raise InvalidOmega(f"empty box: [{self.lo1},{self.hi1}] x [{self.lo2},{self.hi2}]")

    @classmethod
    def box(cls, lo1: float, hi1: float, lo2: float, hi2: float) -> OmegaSet:
        return cls(float(lo1), float(hi1), float(lo2), float(hi2))

    @classmethod
    def symmetric_box(cls, r1: float, r2: float) -> OmegaSet:
        return cls.box(-r1, r1, -r2, r2)

    @classmethod
    def signed_box(cls, sign: int, theta_lower: float, m_bar: float, theta_bar: float) -> OmegaSet:
        """First coordinate magnitude in [theta_lower, m_bar] with a known sign,
        second coordinate magnitude at most theta_bar."""
        if sign not in (1, -1):
            raise InvalidOmega(f"sign must be +1 or -1, got {sign}")
        if not 0 < theta_bar < theta_lower <= m_bar:
            raise InvalidOmega(
                "signed box needs 0 < theta_bar < theta_lower <= m_bar, got "
                f"theta_bar={theta_bar}, theta_lower={theta_lower}, m_bar={m_bar}"
            )
        if sign > 0:
            lo1, hi1 = theta_lower, m_bar
        else:
            lo1, hi1 = -m_bar, -theta_lower
        return cls(float(lo1), float(hi1), -float(theta_bar), float(theta_bar),
                   kind="signed_box", sign=sign, theta_lower=float(theta_lower),
                   theta_bar=float(theta_bar), m_bar=float(m_bar))

    def contains(self, x: ParamVec) -> bool:
        return self.lo1 <= x[0] <= self.hi1 and self.lo2 <= x[1] <= self.hi2

    @property
    def sup_norm(self) -> float:
        """Largest Euclidean norm of a point in the box."""
        return math.hypot(max(abs(self.lo1), abs(self.hi1)), max(abs(self.lo2), abs(self.hi2)))

    def min_abs_first(self) -> float:
        """Smallest |x1| over the box (0 when the box straddles x1 = 0)."""
        if self.lo1 <= 0.0 <= self.hi1:
            return 0.0
        return min(abs(self.lo1), abs(self.hi1))

    def max_abs_second(self) -> float:
        return max(abs(self.lo2), abs(self.hi2))

    def admits_min_phase_violation(self) -> bool:
        """True if some point of the box has |x1| <= |x2| (zero minimum-phase margin)."""
        return self.min_abs_first() <= self.max_abs_second()


def _clamp(v: float, lo: float, hi: float) -> float:
    return lo if v < lo else hi if v > hi else v


def project(omega: OmegaSet, x: Sequence[float]) -> ParamVec:
    """Euclidean projection onto ``omega`` (coordinate-wise clamp for a box)."""
    return ParamVec(_clamp(float(x[0]), omega.lo1, omega.hi1),
                    _clamp(float(x[1]), omega.lo2, omega.hi2))


def min_phase_margin(theta: Sequence[float]) -> float:
    """min over |w| <= 1 of |theta1 + theta2 * w|."""
    return max(0.0, abs(theta[0]) - abs(theta[1]))


@dataclass(frozen=True)
class ReferenceSignal:
    """Bounded reference sequence y*(1), y*(2), ...

    ``paper_example`` gives y*(2j-1) = ``low`` and y*(2j) = ``high`` + e(j)
    with e(j) i.i.d. uniform on [0, ``e_width``); ``table`` replays ``values``
    (cycling when ``repeat``); ``custom`` calls ``generator(n, rng)``.
    """

    kind: str = "paper_example"
    low: float = 1.0
    high: float = 2.0
    e_width: float = 0.1
    values: tuple[float, ...] = ()
    repeat: bool = False
    generator: Callable[[int, np.random.Generator], Sequence[float]] | None = field(
        default=None, compare=False)
    y_bar: float | None = None

    def __post_init__(self):
        if self.kind not in ("paper_example", "table", "custom"):
            raise InvalidReference(f"unknown reference kind {self.kind!r}")
        if self.kind == "table":
            object.__setattr__(self, "values", tuple(float(v) for v in self.values))
            if not self.values:
                raise InvalidReference("table reference needs at least one value")
        if self.kind == "custom" and self.generator is None:
            raise InvalidReference("custom reference needs a generator")
        if self.kind == "paper_example" and not self.e_width >= 0:
            raise InvalidReference("e_width must be >= 0")
        if self.y_bar is None:
            object.__setattr__(self, "y_bar", self._natural_bound())

    @classmethod
    def table(cls, values: Sequence[float], repeat: bool = False,
              y_bar: float | None = None) -> ReferenceSignal:
        return cls(kind="table", values=tuple(values), repeat=repeat, y_bar=y_bar)

    def _natural_bound(self) -> float:
        if self.kind == "paper_example":
            return max(abs(self.low), abs(self.high), abs(self.high + self.e_width))
        if self.kind == "table":
            return max(abs(v) for v in self.values)
        return math.inf

    def generate(self, n: int, rng: np.random.Generator | None = None) -> np.ndarray:
        """Return y*(1..n) as a float array (index 0 holds y*(1))."""
        if self.kind == "paper_example":
            if rng is None:
                raise InvalidReference("paper_example reference needs an rng")
            out = np.empty(n)
            out[0::2] = self.low
            e = rng.uniform(0.0, self.e_width, n // 2)
            out[1::2] = self.high + e
        elif self.kind == "table":
            vals = np.asarray(self.values)
            if n > len(vals):
                if not self.repeat:
                    raise InvalidReference(f"table has {len(vals)} values, need {n}")
                vals = np.resize(vals, n)
            out = vals[:n].copy()
        else:
            out = np.asarray(self.generator(n, rng), dtype=float)
            if out.shape != (n,):
                raise InvalidReference(f"generator returned shape {out.shape}, expected ({n},)")
        if not np.all(np.isfinite(out)) or np.any(np.abs(out) > self.y_bar):
            raise InvalidReference(f"reference leaves the bound |y*| <= {self.y_bar}")
        return out
