"""Seeded closed-loop trials and their Monte Carlo aggregation."""
from __future__ import annotations

import math
import os
from collections.abc import Sequence
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import NamedTuple

import numpy as np
from scipy import stats

from . import backend as _backend
from .analysis import ProblemConstants, derive_constants, lambda_min_2x2, reference_excitation_trace
from .controller import DEFAULT_EPSILON_GUARD, closed_loop_step, start_controller
from .errors import InvalidConfig, InvalidOmega, TrialDiverged, WindowTooShort
from .estimator import EstimatorState
from .model import NoiseModel, OmegaSet, ParamVec, QuantizerSpec, ReferenceSignal
from .plant import PlantState

DIVERGENCE_LIMIT = 1e12
WORKERS_ENV = "QTRACK_WORKERS"


def default_checkpoints(horizon: int, per_decade: int = 10, start: int = 10) -> tuple[int, ...]:
    """Log-spaced step indices from ``start`` to ``horizon`` (always included)."""
    if horizon < start:
        return tuple(range(1, horizon + 1))
    top = math.log10(horizon)
    j0 = math.ceil(math.log10(start) * per_decade)
    pts = {int(round(10 ** (j / per_decade))) for j in range(j0, int(top * per_decade) + 1)}
    pts.add(horizon)
    return tuple(sorted(p for p in pts if start <= p <= horizon))


@dataclass(frozen=True)
class ExperimentConfig:
    theta: ParamVec
    quantizer: QuantizerSpec
    reference: ReferenceSignal
    noise: NoiseModel = field(default_factory=NoiseModel.standard_normal)
    omega: OmegaSet = field(default_factory=lambda: OmegaSet.symmetric_box(6.0, 2.0))
    theta_hat0: ParamVec = ParamVec(5.0, 0.0)
    epsilon_guard: float = DEFAULT_EPSILON_GUARD
    guard_enabled: bool = True
    horizon: int = 10_000
    trials: int = 200
    master_seed: int = 0
    checkpoints: tuple[int, ...] = ()
    h: int = 3
    mu: float = 0.5
    divergence_limit: float = DIVERGENCE_LIMIT

    def __post_init__(self):
        object.__setattr__(self, "theta", ParamVec(*map(float, self.theta)))
        object.__setattr__(self, "theta_hat0", ParamVec(*map(float, self.theta_hat0)))
        if not self.checkpoints:
            object.__setattr__(self, "checkpoints", default_checkpoints(self.horizon))
        object.__setattr__(self, "checkpoints", tuple(int(c) for c in self.checkpoints))
        self.validate()

    def validate(self) -> None:
        if self.horizon < 1:
            raise InvalidConfig(f"horizon must be >= 1, got {self.horizon}")
        if self.trials < 1:
            raise InvalidConfig(f"trials must be >= 1, got {self.trials}")
        cp = self.checkpoints
        if any(b <= a for a, b in zip(cp, cp[1:])):
            raise InvalidConfig("checkpoints must be strictly increasing")
        if cp and (cp[0] < 1 or cp[-1] > self.horizon):
            raise InvalidConfig(f"checkpoints must lie in [1, {self.horizon}]")
        if not self.omega.contains(self.theta_hat0):
            raise InvalidOmega(f"initial estimate {tuple(self.theta_hat0)} is outside the projection set")
        if self.h <= 2:
            raise WindowTooShort(f"window length h must exceed 2, got {self.h}")
        if not self.epsilon_guard > 0:
            raise InvalidConfig("epsilon_guard must be > 0")
        if not all(math.isfinite(v) for v in self.theta):
            raise InvalidConfig("theta must be finite")

    def with_overrides(self, **kw) -> ExperimentConfig:
        return replace(self, **kw)


def paper_config(**overrides) -> ExperimentConfig:
    """The reference experiment: theta = (4, 1), |x| <= 6, |y| <= 2, theta_hat(0) = (5, 0)."""
    base = dict(
        theta=ParamVec(4.0, 1.0),
        quantizer=QuantizerSpec.paper(),
        reference=ReferenceSignal(kind="paper_example", low=1.0, high=2.0, e_width=0.1),
        noise=NoiseModel.standard_normal(),
        omega=OmegaSet.symmetric_box(6.0, 2.0),
        theta_hat0=ParamVec(5.0, 0.0),
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def trial_generators(master_seed: int, trial_index: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (noise, reference) streams keyed by (master_seed, trial_index)."""
    ss = np.random.SeedSequence(entropy=master_seed, spawn_key=(trial_index,))
    noise_ss, ref_ss = ss.spawn(2)
    return np.random.Generator(np.random.PCG64(noise_ss)), np.random.Generator(np.random.PCG64(ref_ss))


def trial_inputs(config: ExperimentConfig, trial_index: int) -> tuple[np.ndarray, np.ndarray]:
    """Noise w(1..K) and reference y*(1..K+1) for one trial."""
    g_noise, g_ref = trial_generators(config.master_seed, trial_index)
    w = config.noise.sample_array(g_noise, config.horizon)
    y_star = config.reference.generate(config.horizon + 1, g_ref)
    return np.ascontiguousarray(w, dtype=float), np.ascontiguousarray(y_star, dtype=float)


@dataclass
class TrialRecord:
    """Per-step trajectory; row j holds step k = j + 1."""

    u: np.ndarray
    y: np.ndarray
    s: np.ndarray
    s_bar: np.ndarray
    theta_hat: np.ndarray
    y_star: np.ndarray
    guard_active: np.ndarray
    theta: ParamVec
    theta_hat0: ParamVec

    def __len__(self) -> int:
        return len(self.u)

    @property
    def k(self) -> np.ndarray:
        return np.arange(1, len(self.u) + 1)

    @property
    def phi(self) -> np.ndarray:
        """Regressors [u(k), u(k-1)] as a (K, 2) array."""
        prev = np.concatenate(([0.0], self.u[:-1]))
        return np.column_stack((self.u, prev))

    @property
    def err_sq(self) -> np.ndarray:
        d = self.theta_hat - np.asarray(self.theta)
        return d[:, 0] ** 2 + d[:, 1] ** 2

    @property
    def track_sq(self) -> np.ndarray:
        return (self.y - self.y_star) ** 2

    def estimate_steps(self) -> np.ndarray:
        """||theta_hat(k) - theta_hat(k-1)|| for k = 1..K."""
        prev = np.vstack((np.asarray(self.theta_hat0)[None, :], self.theta_hat[:-1]))
        return np.hypot(*(self.theta_hat - prev).T)

    def step_bound_violations(self, quantizer: QuantizerSpec, rtol: float = 1e-12) -> int:
        """Steps where the estimate moved farther than ||phi(k)|| (beta_0 - beta_m) / k."""
        bound = np.hypot(*self.phi.T) / self.k * quantizer.weight_span
        return int(np.count_nonzero(self.estimate_steps() > bound * (1 + rtol)))


def _run_kernel(config: ExperimentConfig, w: np.ndarray, y_star: np.ndarray, backend: str):
    K = len(w)
    u = np.zeros(K)
    y = np.zeros(K)
    s = np.zeros(K, dtype=np.int64)
    sb = np.zeros(K)
    th = np.zeros((K, 2))
    guard = np.zeros(K, dtype=np.uint8)
    om = config.omega
    status, step = _backend.get_kernel(backend)(
        config.theta[0], config.theta[1],
        np.asarray(config.quantizer.thresholds), np.asarray(config.quantizer.weights),
        config.noise.code, float(config.noise.scale),
        om.lo1, om.hi1, om.lo2, om.hi2,
        config.theta_hat0[0], config.theta_hat0[1],
        config.epsilon_guard, config.guard_enabled,
        w, y_star, config.divergence_limit,
        u, y, s, sb, th, guard,
    )
    if status == 1:
        raise TrialDiverged(step, f"value left |v| <= {config.divergence_limit:g} or became non-finite")
    if status == 2:
        raise TrialDiverged(step, f"|theta1_hat| below epsilon_guard={config.epsilon_guard:g} "
                                  "with the guard disabled")
    return u, y, s, sb, th, guard.astype(bool)


def _run_reference(config: ExperimentConfig, w: np.ndarray, y_star: np.ndarray):
    """Object-level loop through closed_loop_step; slow, used to cross-check the kernels."""
    import warnings

    K = len(w)
    plant = PlantState(config.theta, config.quantizer, config.noise)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        est = EstimatorState.start(config.theta_hat0, config.omega, config.quantizer, config.noise)
    ctl = start_controller(est, float(y_star[0]), config.epsilon_guard, config.guard_enabled)
    rows = []
    for i in range(K):
        if not (math.isfinite(ctl.u) and abs(ctl.u) <= config.divergence_limit):
            raise TrialDiverged(i + 1, "input left the divergence limit")
        row, est = closed_loop_step(plant, est, ctl, float(y_star[i]), float(y_star[i + 1]), float(w[i]))
        if abs(row.y) > config.divergence_limit:
            raise TrialDiverged(row.k, "output left the divergence limit")
        rows.append(row)
    u = np.array([r.u for r in rows])
    y = np.array([r.y for r in rows])
    s = np.array([r.s for r in rows], dtype=np.int64)
    sb = np.array([r.s_bar for r in rows])
    th = np.array([r.theta_hat for r in rows], dtype=float).reshape(K, 2)
    guard = np.array([r.guard_active for r in rows], dtype=bool)
    return u, y, s, sb, th, guard


def run_trial(config: ExperimentConfig, trial_index: int = 0, backend: str | None = None) -> TrialRecord:
    """Simulate steps 1..K for one seeded trial.

    ``backend`` is ``"compiled"``, ``"python"``, ``"reference"`` (object-level
    loop) or ``None`` for the import-time default.
    """
    w, y_star = trial_inputs(config, trial_index)
    try:
        if backend == "reference":
            u, y, s, sb, th, guard = _run_reference(config, w, y_star)
        else:
            u, y, s, sb, th, guard = _run_kernel(config, w, y_star, backend)
    except TrialDiverged as exc:
        exc.trial_index = trial_index
        raise TrialDiverged(exc.step, exc.reason, trial_index) from None
    return TrialRecord(u, y, s, sb, th, y_star[:-1].copy(), guard, config.theta, config.theta_hat0)


class ExcitationTrace(NamedTuple):
    """lambda_min per window start k = 1, 2, ... and the first k after which
    every window exceeds the threshold (``None`` if that never happens)."""

    trace: np.ndarray
    k0: int | None


def excitation_trace(phi: np.ndarray, h: int) -> np.ndarray:
    """lambda_min of sum_{i=k+2}^{k+h+1} phi(i) phi(i)' for k = 1..K-h-1."""
    phi = np.asarray(phi, dtype=float)
    if len(phi) < h + 2:
        return np.empty(0)
    x, z = phi[1:, 0], phi[1:, 1]
    a = np.lib.stride_tricks.sliding_window_view(x * x, h).sum(axis=1)
    b = np.lib.stride_tricks.sliding_window_view(x * z, h).sum(axis=1)
    c = np.lib.stride_tricks.sliding_window_view(z * z, h).sum(axis=1)
    # window k covers array rows k+1..k+h; drop the k = 0 window
    return lambda_min_2x2(a, b, c)[1:]


def persistent_start(trace: np.ndarray, delta: float = 0.0) -> int | None:
    """Smallest k (1-based) with trace[j] > delta for every window j >= k."""
    if len(trace) == 0 or not trace[-1] > delta:
        return None
    bad = np.flatnonzero(~(trace > delta))
    return 1 if len(bad) == 0 else int(bad[-1]) + 2


def empirical_excitation_trace(records, h: int, delta: float = 0.0) -> ExcitationTrace:
    """Windowed excitation of one record, or the pointwise minimum over several."""
    if isinstance(records, (TrialRecord, np.ndarray)):
        records = [records]
    if len(records) == 0:
        raise ValueError("need at least one trajectory")
    traces = [excitation_trace(r.phi if isinstance(r, TrialRecord) else r, h) for r in records]
    trace = np.min(np.vstack(traces), axis=0)
    return ExcitationTrace(trace, persistent_start(trace, delta))


def fit_loglog_slope(ks, values, second_half: bool = True) -> tuple[float, float]:
    """Least-squares slope of log(values) against log(k) and its standard error."""
    ks = np.asarray(ks, dtype=float)
    values = np.asarray(values, dtype=float)
    if second_half:
        start = len(ks) // 2
        ks, values = ks[start:], values[start:]
    keep = (values > 0) & np.isfinite(values)
    ks, values = ks[keep], values[keep]
    if len(ks) < 2:
        return math.nan, math.nan
    if len(ks) == 2:
        return float(np.diff(np.log(values))[0] / np.diff(np.log(ks))[0]), math.nan
    fit = stats.linregress(np.log(ks), np.log(values))
    return float(fit.slope), float(fit.stderr)


def input_bound(config: ExperimentConfig) -> float | None:
    """sqrt(2) y_bar / (theta_lower - theta_bar) for a sign-constrained set, else ``None``."""
    om = config.omega
    if om.kind != "signed_box":
        return None
    return math.sqrt(2.0) * config.reference.y_bar / (om.theta_lower - om.theta_bar)


class TrialStats(NamedTuple):
    err_sq: np.ndarray
    track_sq: np.ndarray
    tail_track: float
    k0: int | None
    min_excitation: float
    delta_y_hat: float
    step_violations: int
    phi_bound_violations: int
    max_phi_norm: float
    guard_hits: int


def trial_stats(config: ExperimentConfig, record: TrialRecord, delta: float = 0.0) -> TrialStats:
    cp = np.asarray(config.checkpoints) - 1
    K = len(record)
    err, track = record.err_sq, record.track_sq
    tail = float(track[K // 2 - 1 if K >= 2 else 0:].mean())
    ex = empirical_excitation_trace(record, config.h, delta)
    phi_norm = np.hypot(*record.phi.T)
    bound = input_bound(config)
    phi_viol = 0 if bound is None else int(np.count_nonzero(phi_norm > bound))
    try:
        dy = float(reference_excitation_trace(record.y_star, config.h).min())
    except WindowTooShort:
        dy = math.nan
    post = ex.trace[ex.k0 - 1:] if ex.k0 is not None else np.empty(0)
    return TrialStats(
        err[cp], track[cp], tail, ex.k0,
        float(post.min()) if len(post) else math.nan, dy,
        record.step_bound_violations(config.quantizer), phi_viol,
        float(phi_norm.max()), int(record.guard_active.sum()),
    )


def _trial_job(args):
    config, index, backend, delta = args
    try:
        return trial_stats(config, run_trial(config, index, backend), delta)
    except TrialDiverged as exc:
        return exc


class MonteCarloDiverged(TrialDiverged):
    def __init__(self, n_diverged: int, n_trials: int, first: TrialDiverged):
        self.n_diverged = n_diverged
        self.n_trials = n_trials
        self.first = first
        RuntimeError.__init__(self, f"{n_diverged}/{n_trials} trials diverged; first: {first}")
        self.step, self.reason, self.trial_index = first.step, first.reason, first.trial_index


@dataclass
class MonteCarloSummary:
    checkpoints: np.ndarray
    mse_curve: np.ndarray
    mse_se: np.ndarray
    median_mse_curve: np.ndarray
    tracking_curve: np.ndarray
    tracking_se: np.ndarray
    tail_tracking_mean: float
    tail_tracking_se: float
    slope: float
    slope_se: float
    n_trials: int
    n_diverged: int
    empirical_k0: int | None
    min_excitation: float
    delta_y_hat: float
    step_violations: int
    phi_bound_violations: int
    max_phi_norm: float
    guard_hits: int
    noise_variance: float
    constants: ProblemConstants | None = None

    @property
    def flagged(self) -> bool:
        return self.n_diverged > 0

    @property
    def k_times_mse(self) -> np.ndarray:
        return self.checkpoints * self.mse_curve


def _se(x: np.ndarray, axis=0):
    n = x.shape[axis]
    if n < 2:
        return np.full(np.delete(x.shape, axis), np.nan) if x.ndim > 1 else math.nan
    return np.std(x, axis=axis, ddof=1) / math.sqrt(n)


def resolve_workers(workers: int | None) -> int:
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1") or 1)
    return max(1, int(workers))


def constants_for(config: ExperimentConfig, delta_y: float) -> ProblemConstants | None:
    """Theory constants when the projection set is sign-constrained; ``None`` otherwise."""
    om = config.omega
    if om.kind != "signed_box" or not delta_y > 0:
        return None
    return derive_constants(config.reference.y_bar, config.h, delta_y, om.theta_lower,
                            om.theta_bar, om.m_bar, config.quantizer, config.noise)


def run_montecarlo(config: ExperimentConfig, workers: int | None = None,
                   backend: str | None = None) -> MonteCarloSummary:
    """Run ``config.trials`` seeded trials and reduce them in trial order.

    Raises :class:`MonteCarloDiverged` when more than 20% of trials diverge;
    otherwise diverged trials are dropped and the summary is flagged.
    """
    workers = resolve_workers(workers)
    jobs = [(config, i, backend, 0.0) for i in range(config.trials)]
    if workers == 1:
        results = [_trial_job(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_trial_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))

    failed = [r for r in results if isinstance(r, TrialDiverged)]
    ok: list[TrialStats] = [r for r in results if not isinstance(r, TrialDiverged)]
    if failed and len(ok) < 0.8 * config.trials:
        raise MonteCarloDiverged(len(failed), config.trials, failed[0])

    err = np.vstack([r.err_sq for r in ok])
    track = np.vstack([r.track_sq for r in ok])
    tails = np.array([r.tail_track for r in ok])
    cps = np.asarray(config.checkpoints)
    mse = err.mean(axis=0)
    slope, slope_se = fit_loglog_slope(cps, mse)
    k0s = [r.k0 for r in ok]
    k0 = None if any(k is None for k in k0s) else max(k0s)
    dy = float(np.nanmin([r.delta_y_hat for r in ok]))
    min_ex = float(np.nanmin([r.min_excitation for r in ok])) if k0 is not None else math.nan
    return MonteCarloSummary(
        checkpoints=cps,
        mse_curve=mse,
        mse_se=_se(err),
        median_mse_curve=np.median(err, axis=0),
        tracking_curve=track.mean(axis=0),
        tracking_se=_se(track),
        tail_tracking_mean=float(tails.mean()),
        tail_tracking_se=float(_se(tails)),
        slope=slope,
        slope_se=slope_se,
        n_trials=len(ok),
        n_diverged=len(failed),
        empirical_k0=k0,
        min_excitation=min_ex,
        delta_y_hat=dy,
        step_violations=sum(r.step_violations for r in ok),
        phi_bound_violations=sum(r.phi_bound_violations for r in ok),
        max_phi_norm=max(r.max_phi_norm for r in ok),
        guard_hits=sum(r.guard_hits for r in ok),
        noise_variance=config.noise.variance,
        constants=constants_for(config, dy),
    )


def synthetic_summary(checkpoints: Sequence[int], power: float, scale: float = 1.0) -> MonteCarloSummary:
    """Summary built from the exact curve scale / k**power; exercises the slope fit only."""
    cps = np.asarray(checkpoints)
    mse = scale / cps.astype(float) ** power
    slope, slope_se = fit_loglog_slope(cps, mse)
    nan = np.full(len(cps), np.nan)
    return MonteCarloSummary(cps, mse, np.zeros(len(cps)), mse, nan, nan, math.nan, math.nan,
                             slope, slope_se, 0, 0, None, math.nan, math.nan, 0, 0, math.nan, 0,
                             math.nan)
