import math

import numpy as np
import pytest

from qtrack import harness
from qtrack.errors import InvalidConfig, InvalidOmega, TrialDiverged
from qtrack.harness import (
    default_checkpoints,
    empirical_excitation_trace,
    excitation_trace,
    fit_loglog_slope,
    input_bound,
    paper_config,
    run_montecarlo,
    run_trial,
)
from qtrack.model import NoiseModel, OmegaSet, ParamVec


def test_single_step_record(monkeypatch):
    real = harness.trial_inputs

    def zero_first_noise(config, index):
        w, ystar = real(config, index)
        w[0] = 0.0
        return w, ystar

    monkeypatch.setattr(harness, "trial_inputs", zero_first_noise)
    rec = run_trial(paper_config(horizon=1), 0)
    assert len(rec) == 1
    assert rec.u[0] == pytest.approx(0.2)
    assert rec.y[0] == pytest.approx(0.8)
    assert (rec.s[0], rec.s_bar[0]) == (2, -50.0)
    assert tuple(rec.theta_hat[0]) == (6.0, 0.0)


def test_noiseless_exact_start_tracks_perfectly():
    cfg = paper_config(horizon=500, noise=NoiseModel("zero"), theta_hat0=ParamVec(4.0, 1.0))
    rec = run_trial(cfg, 3)
    assert np.all(rec.track_sq[1:] == 0.0)
    assert np.all(rec.theta_hat == [4.0, 1.0])


def test_reproducible_per_trial():
    cfg = paper_config(horizon=300, master_seed=5)
    a, b = run_trial(cfg, 2), run_trial(cfg, 2)
    assert np.array_equal(a.theta_hat, b.theta_hat)
    assert not np.array_equal(a.y, run_trial(cfg, 3).y)


def test_error_shrinks_in_most_trials():
    cfg = paper_config(horizon=1000, master_seed=123)
    shrunk = [run_trial(cfg, i).err_sq[-1] < 2.0 for i in range(50)]
    assert sum(shrunk) >= 45


def test_every_step_within_bounds(short_paper_config):
    for i in range(short_paper_config.trials):
        rec = run_trial(short_paper_config, i)
        assert rec.step_bound_violations(short_paper_config.quantizer) == 0
        assert all(short_paper_config.omega.contains(t) for t in rec.theta_hat[::50])


def test_two_index_bound_signed_box():
    cfg = paper_config(horizon=3000, omega=OmegaSet.signed_box(1, 3.0, 6.5, 2.0))
    M = input_bound(cfg)
    total = sum(abs(b) for b in cfg.quantizer.weights)
    rng = np.random.default_rng(0)
    for t in range(5):
        rec = run_trial(cfg, t)
        th = np.vstack(([cfg.theta_hat0], rec.theta_hat))  # th[j] = theta_hat(j)
        for _ in range(300):
            j, i = sorted(rng.choice(len(th), 2, replace=False))
            assert np.linalg.norm(th[i] - th[j]) <= M * (i - j) / (j + 1) * total


def test_divergence_reported():
    cfg = paper_config(horizon=200, divergence_limit=1.0)
    with pytest.raises(TrialDiverged) as err:
        run_trial(cfg, 4)
    assert err.value.trial_index == 4 and err.value.step >= 1


def test_config_validation():
    with pytest.raises(InvalidConfig):
        paper_config(horizon=100, checkpoints=(10, 5))
    with pytest.raises(InvalidConfig):
        paper_config(horizon=100, checkpoints=(10, 500))
    with pytest.raises(InvalidOmega):
        paper_config(theta_hat0=ParamVec(7.0, 0.0))


def test_default_checkpoints():
    cps = default_checkpoints(10_000)
    assert cps[0] == 10 and cps[-1] == 10_000 and 100 in cps and 1000 in cps
    assert len(cps) == 31
    assert default_checkpoints(5) == (1, 2, 3, 4, 5)


@pytest.mark.parametrize("power", [1.0, 0.5, 2.0])
def test_slope_fit_exact_power(power):
    ks = np.array(default_checkpoints(10_000))
    slope, se = fit_loglog_slope(ks, 3.7 / ks**power)
    assert slope == pytest.approx(-power, abs=1e-12)
    assert se == pytest.approx(0, abs=1e-7)


class TestExcitation:
    def test_constant_zero_input(self):
        ex = empirical_excitation_trace(np.zeros((50, 2)), 3)
        assert np.all(ex.trace == 0) and ex.k0 is None

    def test_orthonormal_alternation(self):
        phi = np.array([[1.0, 0.0], [0.0, 1.0]] * 20)
        ex = empirical_excitation_trace(phi, 3)
        assert np.all(ex.trace >= 1 - 1e-12) and ex.k0 == 1

    def test_against_eigensolver(self, short_paper_config):
        rec = run_trial(short_paper_config, 0)
        phi, h = rec.phi, 3
        trace = excitation_trace(phi, h)
        for k in range(1, 300):
            S = sum(np.outer(phi[i - 1], phi[i - 1]) for i in range(k + 2, k + h + 2))
            assert trace[k - 1] == pytest.approx(np.linalg.eigvalsh(S)[0], abs=1e-9)
        assert empirical_excitation_trace(rec, h).k0 is not None

    def test_k0_after_late_failure(self):
        phi = np.array([[1.0, 0.0], [0.0, 1.0]] * 20)
        phi[10:14] = 0.0
        ex = empirical_excitation_trace(phi, 3)
        assert ex.k0 is not None and np.all(ex.trace[ex.k0 - 1:] > 0) and ex.trace[ex.k0 - 2] <= 0


def test_montecarlo_small(short_paper_config):
    s = run_montecarlo(short_paper_config)
    assert s.n_trials == 8 and not s.flagged
    assert s.mse_curve.shape == (len(short_paper_config.checkpoints),)
    assert s.step_violations == 0
    assert s.constants is None
    assert math.isfinite(s.slope)


def test_montecarlo_flags_partial_divergence():
    # trial-dependent divergence: a tiny limit trips every trial -> hard failure
    cfg = paper_config(horizon=100, trials=5, divergence_limit=1.0)
    with pytest.raises(TrialDiverged):
        run_montecarlo(cfg)


def test_signed_box_constants_present():
    cfg = paper_config(horizon=1000, trials=4, omega=OmegaSet.signed_box(1, 3.0, 6.5, 2.0))
    s = run_montecarlo(cfg)
    assert s.constants is not None
    assert s.constants.M == pytest.approx(math.sqrt(2) * 2.1)
    assert s.phi_bound_violations == 0


def test_montecarlo_tolerates_few_divergences(monkeypatch):
    real = harness._trial_job

    def flaky(args):
        if args[1] == 3:
            return TrialDiverged(17, "injected", 3)
        return real(args)

    monkeypatch.setattr(harness, "_trial_job", flaky)
    s = run_montecarlo(paper_config(horizon=300, trials=10))
    assert s.flagged and s.n_diverged == 1 and s.n_trials == 9
