"""JSON experiment configuration.

Schema (every key optional except ``theta``, ``quantizer`` and ``reference``)::

    {
      "theta": [4, 1],
      "quantizer": {"thresholds": [-2, 0, 2], "weights": [80, 50, -50, -80]},
      "reference": {"kind": "paper_example", "low": 1, "high": 2, "e_width": 0.1}
                 | {"kind": "table", "values": [...], "repeat": false},
      "y_bar": null,                       # bound on |y*|; derived when omitted
      "noise": {"kind": "gaussian", "scale": 1.0},   # logistic | uniform | zero
      "omega": {"kind": "box", "lo1": -6, "hi1": 6, "lo2": -2, "hi2": 2}
             | {"kind": "signed_box", "sign": 1, "theta_lower": 3,
                "theta_bar": 2, "m_bar": 6.5},
      "theta_hat0": [5, 0],
      "epsilon_guard": 1e-6, "guard_enabled": true,
      "horizon": 10000, "trials": 200, "master_seed": 0,
      "checkpoints": null,                 # default: 10 per decade from k = 10
      "h": 3, "mu": 0.5,
      "divergence_limit": 1e12,
      "comment": "free text, ignored"
    }

Keys starting with ``_`` and ``comment`` are ignored.
"""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import InvalidConfig, ValidationError
from .harness import ExperimentConfig
from .model import NoiseModel, OmegaSet, ParamVec, QuantizerSpec, ReferenceSignal


class ConfigParseError(Exception):
    """The file is missing, unreadable, not JSON, or structurally wrong."""


_KNOWN = {
    "theta", "quantizer", "reference", "y_bar", "noise", "omega", "theta_hat0",
    "epsilon_guard", "guard_enabled", "horizon", "trials", "master_seed", "checkpoints",
    "h", "mu", "divergence_limit", "comment",
}

PAPER_QUANTIZER = {"thresholds": [-2.0, 0.0, 2.0], "weights": [80.0, 50.0, -50.0, -80.0]}


@dataclass(frozen=True)
class LoadedConfig:
    config: ExperimentConfig
    raw: dict[str, Any]
    sha256: str
    path: Path | None


def read_raw(path: str | Path) -> tuple[dict[str, Any], bytes]:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise ConfigParseError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    try:
        raw = json.loads(data)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ConfigParseError(f"{path}: not valid JSON ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigParseError(f"{path}: top level must be an object")
    return raw, data


def _pair(raw, key) -> ParamVec:
    v = raw[key]
    if not (isinstance(v, list) and len(v) == 2):
        raise ConfigParseError(f"{key!r} must be a list of two numbers")
    try:
        return ParamVec(float(v[0]), float(v[1]))
    except (TypeError, ValueError) as exc:
        raise ConfigParseError(f"{key!r}: {exc}") from exc


def _section(raw, key) -> dict:
    v = raw[key]
    if not isinstance(v, dict):
        raise ConfigParseError(f"{key!r} must be an object")
    return v


def build_config(raw: dict[str, Any], *, quantizer_preset: str | None = None,
                 **overrides) -> ExperimentConfig:
    """Turn a parsed JSON object into a validated :class:`ExperimentConfig`.

    Structural problems raise :class:`ConfigParseError`; invariant
    violations raise the matching :class:`~qtrack.errors.ValidationError`.
    """
    unknown = {k for k in raw if k not in _KNOWN and not k.startswith("_")}
    if unknown:
        raise ConfigParseError(f"unknown config keys: {sorted(unknown)}")
    raw = dict(raw)
    if quantizer_preset is not None:
        if quantizer_preset != "paper":
            raise ConfigParseError(f"unknown quantizer preset {quantizer_preset!r}")
        raw["quantizer"] = PAPER_QUANTIZER
    for key in ("theta", "quantizer", "reference"):
        if key not in raw:
            raise ConfigParseError(f"missing required key {key!r}")

    try:
        q = _section(raw, "quantizer")
        quantizer = QuantizerSpec(q["thresholds"], q["weights"])
        reference = _reference(_section(raw, "reference"), raw.get("y_bar"))
        kw: dict[str, Any] = dict(theta=_pair(raw, "theta"), quantizer=quantizer, reference=reference)
        if "noise" in raw:
            n = _section(raw, "noise")
            kw["noise"] = NoiseModel(n.get("kind", "gaussian"), float(n.get("scale", 1.0)))
        if "omega" in raw:
            kw["omega"] = _omega(_section(raw, "omega"))
        if "theta_hat0" in raw:
            kw["theta_hat0"] = _pair(raw, "theta_hat0")
        for key, conv in (("epsilon_guard", float), ("guard_enabled", bool), ("horizon", int),
                          ("trials", int), ("master_seed", int), ("h", int), ("mu", float),
                          ("divergence_limit", float)):
            if raw.get(key) is not None:
                kw[key] = conv(raw[key])
        if raw.get("checkpoints"):
            kw["checkpoints"] = tuple(int(c) for c in raw["checkpoints"])
    except ValidationError:
        raise
    except KeyError as exc:
        raise ConfigParseError(f"missing key {exc}") from exc
    except (TypeError, AttributeError, ValueError) as exc:
        raise ConfigParseError(str(exc)) from exc

    overrides = {k: v for k, v in overrides.items() if v is not None}
    kw.update(overrides)
    if "horizon" in overrides and "checkpoints" in kw:
        # an explicit horizon override trims checkpoints beyond it
        kw["checkpoints"] = tuple(c for c in kw["checkpoints"] if c <= kw["horizon"])
    return ExperimentConfig(**kw)


def _reference(r: dict, y_bar) -> ReferenceSignal:
    kind = r.get("kind", "paper_example")
    yb = None if y_bar is None else float(y_bar)
    if kind == "paper_example":
        return ReferenceSignal(kind=kind, low=float(r.get("low", 1.0)), high=float(r.get("high", 2.0)),
                               e_width=float(r.get("e_width", 0.1)), y_bar=yb)
    if kind == "table":
        return ReferenceSignal.table(r["values"], repeat=bool(r.get("repeat", False)), y_bar=yb)
    raise ConfigParseError(f"unknown reference kind {kind!r}")


def _omega(o: dict) -> OmegaSet:
    kind = o.get("kind", "box")
    if kind == "box":
        return OmegaSet.box(float(o["lo1"]), float(o["hi1"]), float(o["lo2"]), float(o["hi2"]))
    if kind == "signed_box":
        return OmegaSet.signed_box(int(o.get("sign", 1)), float(o["theta_lower"]),
                                   float(o["m_bar"]), float(o["theta_bar"]))
    raise InvalidConfig(f"unknown omega kind {kind!r}")


def load_config(path: str | Path, **kw) -> LoadedConfig:
    raw, data = read_raw(path)
    cfg = build_config(raw, **kw)
    return LoadedConfig(cfg, raw, hashlib.sha256(data).hexdigest(), Path(path))


def shipped_config_path(name: str = "paper_example") -> Path:
    return Path(__file__).with_name("configs") / f"{name}.json"
