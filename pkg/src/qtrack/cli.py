"""Command line interface: ``qtrack simulate | montecarlo | check``.

Exit codes: 0 success, 2 config parse error, 3 validation error (or a hard
assumption failure in ``check``), 4 trial divergence, 5 more than 20% of
Monte Carlo trials diverged.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import tempfile
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from . import backend as _backend
from .analysis import check_reference_excitation, derive_constants, f_star
from .config import ConfigParseError, load_config
from .errors import TrialDiverged, ValidationError
from .harness import (
    MonteCarloDiverged,
    resolve_workers,
    run_montecarlo,
    run_trial,
    synthetic_summary,
    trial_generators,
)
from .model import min_phase_margin

EXIT_OK = 0
EXIT_PARSE = 2
EXIT_INVALID = 3
EXIT_DIVERGED = 4
EXIT_MC_DIVERGED = 5

TRIAL_HEADER = ["k", "u", "y", "S", "S_bar", "theta1_hat", "theta2_hat", "err_sq", "track_sq"]
MSE_HEADER = ["k", "mse", "mse_se", "k_times_mse"]
TRACK_HEADER = ["k", "track", "track_se"]
SUMMARY_HEADER = ["slope", "slope_se", "tail_tracking_mean", "tail_tracking_se", "rate_class",
                  "zeta", "empirical_K0", "delta_y_hat"]


def fmt(v) -> str:
    """Round-trip text for numbers; everything else via str()."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    lines.extend(",".join(fmt(v) for v in row) for row in rows)
    atomic_write(path, "\n".join(lines) + "\n")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(out_dir: Path, loaded, command: str, outputs: list[str], **extra) -> Path:
    manifest = {
        "command": command,
        "tool_version": __version__,
        "backend": extra.pop("backend", _backend.BACKEND),
        "config_path": str(loaded.path) if loaded is not None else None,
        "config_sha256": loaded.sha256 if loaded is not None else None,
        "master_seed": loaded.config.master_seed if loaded is not None else None,
        "started_at": extra.pop("started_at", _now()),
        "outputs": [str(out_dir / o) for o in outputs],
    }
    manifest.update(extra)
    path = out_dir / "manifest.json"
    atomic_write(path, json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def _fail(code: int, exc: Exception) -> int:
    name = exc.invariant if isinstance(exc, ValidationError) else type(exc).__name__
    print(f"error: {name}: {exc}", file=sys.stderr)
    return code


def _load(path, **kw):
    """Return (LoadedConfig, None) or (None, exit code)."""
    try:
        return load_config(path, **kw), None
    except ConfigParseError as exc:
        return None, _fail(EXIT_PARSE, exc)
    except ValidationError as exc:
        return None, _fail(EXIT_INVALID, exc)


def cmd_simulate(config_path, out_dir, *, seed=None, horizon=None, trial_index=0,
                 quantizer_preset=None, backend=None) -> int:
    loaded, code = _load(config_path, quantizer_preset=quantizer_preset,
                         master_seed=seed, horizon=horizon)
    if loaded is None:
        return code
    cfg = loaded.config
    out = Path(out_dir)
    started = _now()
    write_manifest(out, loaded, "simulate", ["trial.csv"], started_at=started,
                   trial_index=trial_index, status="running")
    try:
        rec = run_trial(cfg, trial_index, backend)
    except TrialDiverged as exc:
        write_manifest(out, loaded, "simulate", [], started_at=started, trial_index=trial_index,
                       status="diverged", error=str(exc))
        return _fail(EXIT_DIVERGED, exc)
    err, track = rec.err_sq, rec.track_sq
    rows = zip(rec.k.tolist(), rec.u.tolist(), rec.y.tolist(), rec.s.tolist(), rec.s_bar.tolist(),
               rec.theta_hat[:, 0].tolist(), rec.theta_hat[:, 1].tolist(), err.tolist(), track.tolist())
    write_csv(out / "trial.csv", TRIAL_HEADER, rows)
    write_manifest(out, loaded, "simulate", ["trial.csv"], started_at=started,
                   trial_index=trial_index, status="done", finished_at=_now(),
                   guard_hits=int(rec.guard_active.sum()),
                   step_bound_violations=rec.step_bound_violations(cfg.quantizer))
    print(f"wrote {out / 'trial.csv'} ({len(rec)} steps); final theta_hat = "
          f"({rec.theta_hat[-1, 0]:.6g}, {rec.theta_hat[-1, 1]:.6g})")
    return EXIT_OK


def cmd_montecarlo(config_path, out_dir, *, seed=None, horizon=None, trials=None, workers=None,
                   synthetic_power=None, quantizer_preset=None, backend=None) -> int:
    loaded, code = _load(config_path, quantizer_preset=quantizer_preset,
                         master_seed=seed, horizon=horizon, trials=trials)
    if loaded is None:
        return code
    cfg = loaded.config
    out = Path(out_dir)
    started = _now()
    outputs = ["mse_curve.csv", "tracking_curve.csv", "summary.csv"]
    workers = resolve_workers(workers)
    write_manifest(out, loaded, "montecarlo", outputs, started_at=started, status="running",
                   workers=workers, synthetic_power=synthetic_power)

    if synthetic_power is not None:
        summary = synthetic_summary(cfg.checkpoints, synthetic_power)
    else:
        try:
            summary = run_montecarlo(cfg, workers=workers, backend=backend)
        except MonteCarloDiverged as exc:
            write_manifest(out, loaded, "montecarlo", [], started_at=started, status="diverged",
                           error=str(exc), workers=workers)
            return _fail(EXIT_MC_DIVERGED, exc)

    cps = summary.checkpoints.tolist()
    write_csv(out / "mse_curve.csv", MSE_HEADER,
              zip(cps, summary.mse_curve.tolist(), summary.mse_se.tolist(), summary.k_times_mse.tolist()))
    write_csv(out / "tracking_curve.csv", TRACK_HEADER,
              zip(cps, summary.tracking_curve.tolist(), summary.tracking_se.tolist()))
    c = summary.constants
    write_csv(out / "summary.csv", SUMMARY_HEADER, [[
        summary.slope, summary.slope_se, summary.tail_tracking_mean, summary.tail_tracking_se,
        c.rate_class if c else "not_certified", c.zeta if c else "not_certified",
        summary.empirical_k0 if summary.empirical_k0 is not None else "never",
        summary.delta_y_hat,
    ]])
    write_manifest(out, loaded, "montecarlo", outputs, started_at=started, status="done",
                   finished_at=_now(), workers=workers, synthetic_power=synthetic_power,
                   n_trials=summary.n_trials, n_diverged=summary.n_diverged,
                   flagged=summary.flagged, step_bound_violations=summary.step_violations,
                   input_bound_violations=summary.phi_bound_violations,
                   guard_hits=summary.guard_hits)
    print(f"slope {summary.slope:.4f} +/- {summary.slope_se:.4f}; "
          f"tail tracking {summary.tail_tracking_mean:.4f} +/- {summary.tail_tracking_se:.4f}; "
          f"final mse {summary.mse_curve[-1]:.4g}")
    if summary.flagged:
        print(f"warning: {summary.n_diverged} trial(s) diverged and were dropped", file=sys.stderr)
    return EXIT_OK


def assumption_report(cfg) -> list[tuple[str, str, str, bool]]:
    """Rows (check, status, detail, hard) for a configuration."""
    rows = []
    _, g_ref = trial_generators(cfg.master_seed, 0)
    ystar = cfg.reference.generate(cfg.horizon + 1, g_ref)[: cfg.horizon]
    sup = float(np.max(np.abs(ystar)))
    ok = sup <= cfg.reference.y_bar
    rows.append(("reference bounded", "pass" if ok else "fail",
                 f"y_bar = {cfg.reference.y_bar:.6g}, observed sup |y*| = {sup:.6g}", not ok))

    dy = check_reference_excitation(ystar, cfg.h)
    rows.append(("reference excitation", "pass" if dy > 0 else "fail",
                 f"h = {cfg.h}, delta_y_hat = {dy:.6g} over k <= {cfg.horizon}", not dy > 0))

    margin = min_phase_margin(cfg.theta)
    ok = margin > cfg.mu and 0 < cfg.mu < 1
    rows.append(("minimum-phase margin", "pass" if ok else "fail",
                 f"margin = {margin:.6g} vs mu = {cfg.mu:.6g}", not ok))

    om = cfg.omega
    inside = om.contains(cfg.theta) and (om.kind != "signed_box" or abs(cfg.theta[1]) < om.theta_bar)
    rows.append(("true parameter in projection set", "pass" if inside else "fail",
                 f"theta = ({cfg.theta[0]:g}, {cfg.theta[1]:g})", not inside))
    if om.admits_min_phase_violation():
        why = "contains theta1=0" if om.min_abs_first() == 0 else "contains |theta1| <= |theta2|"
        rows.append(("projection set inside min-phase region", "warn",
                     f"violated ({why}); controller guard epsilon = {cfg.epsilon_guard:g}", False))
    else:
        rows.append(("projection set inside min-phase region", "pass",
                     f"|theta1| >= {om.min_abs_first():g} > |theta2| <= {om.max_abs_second():g}", False))
    rows.append(("projection set sup-norm", "info", f"M_bar (sup ||v||) = {om.sup_norm:.6g}", False))

    rows.append(("noise zero-mean, finite variance", "pass",
                 f"{cfg.noise.kind}(scale={cfg.noise.scale:g}), variance = {cfg.noise.variance:.6g}",
                 False))

    if om.kind == "signed_box" and dy > 0:
        try:
            c = derive_constants(cfg.reference.y_bar, cfg.h, dy, om.theta_lower, om.theta_bar,
                                 om.m_bar, cfg.quantizer, cfg.noise)
        except ValidationError as exc:
            rows.append(("theory constants", "fail", str(exc), True))
        else:
            pos = c.f_star > 0
            rows.append(("density floor", "pass" if pos else "fail",
                         f"D1 = {c.D1:.6g}, f* = {c.f_star:.6g}", not pos))
            rows.append(("input bound M", "info", f"{c.M:.6g}", False))
            rows.append(("excitation level delta", "info", f"{c.delta:.6g}", False))
            rows.append(("rate exponent zeta", "info", f"{c.zeta:.6g} -> {c.rate_class} ({c.rate})",
                         False))
    else:
        reason = ("projection set is not sign-constrained" if om.kind != "signed_box"
                  else "reference excitation not certified")
        for name in ("density floor", "input bound M", "excitation level delta",
                     "rate exponent zeta"):
            rows.append((name, "not-certifiable", reason, False))
        if om.kind != "signed_box":
            fs = f_star(cfg.noise, max(abs(cfg.quantizer.thresholds[0]),
                                       abs(cfg.quantizer.thresholds[-1]))) if cfg.noise.kind != "zero" else 0.0
            rows.append(("density at outer threshold", "info", f"f(max|C|) = {fs:.6g}", False))
    return rows


def cmd_check(config_path, *, quantizer_preset=None, horizon=None) -> int:
    loaded, code = _load(config_path, quantizer_preset=quantizer_preset, horizon=horizon)
    if loaded is None:
        return code
    try:
        rows = assumption_report(loaded.config)
    except ValidationError as exc:
        return _fail(EXIT_INVALID, exc)
    w1 = max(len(r[0]) for r in rows)
    w2 = max(len(r[1]) for r in rows)
    for name, status, detail, _ in rows:
        print(f"{name:<{w1}}  {status:<{w2}}  {detail}")
    hard = [r for r in rows if r[3]]
    return EXIT_INVALID if hard else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="qtrack", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("config", help="JSON experiment config")
        sp.add_argument("--quantizer-preset", choices=["paper"], default=None,
                        help="replace the config's quantizer with the reference thresholds/weights")
        sp.add_argument("--horizon", type=int, default=None)

    sp = sub.add_parser("simulate", help="run one trial, write trial.csv")
    common(sp)
    sp.add_argument("-o", "--out", default="out", help="output directory")
    sp.add_argument("--seed", type=int, default=None, help="override master_seed")
    sp.add_argument("--trial-index", type=int, default=0)
    sp.add_argument("--backend", choices=sorted(_backend.KERNELS) + ["reference"], default=None)

    sp = sub.add_parser("montecarlo", help="run all trials, write curves and summary")
    common(sp)
    sp.add_argument("-o", "--out", default="out", help="output directory")
    sp.add_argument("--seed", type=int, default=None, help="override master_seed")
    sp.add_argument("--trials", type=int, default=None)
    sp.add_argument("--workers", type=int, default=None,
                    help="worker processes (default: $QTRACK_WORKERS or 1)")
    sp.add_argument("--synthetic-power", type=float, default=None,
                    help="skip simulation; feed mse(k) = 1/k**p to the slope fit")
    sp.add_argument("--backend", choices=sorted(_backend.KERNELS), default=None)

    sp = sub.add_parser("check", help="report assumption checks and theory constants")
    common(sp)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "simulate":
        return cmd_simulate(args.config, args.out, seed=args.seed, horizon=args.horizon,
                            trial_index=args.trial_index, quantizer_preset=args.quantizer_preset,
                            backend=args.backend)
    if args.command == "montecarlo":
        return cmd_montecarlo(args.config, args.out, seed=args.seed, horizon=args.horizon,
                              trials=args.trials, workers=args.workers,
                              synthetic_power=args.synthetic_power,
                              quantizer_preset=args.quantizer_preset, backend=args.backend)
    return cmd_check(args.config, quantizer_preset=args.quantizer_preset, horizon=args.horizon)


if __name__ == "__main__":
    sys.exit(main())
