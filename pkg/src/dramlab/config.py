"""Profile configs: structured JSON documents that fully describe a device
(geometry, timing rule table, bus-slot width, fault models, energy
constants) plus platform knobs (FIFO, drain, periodic-op scheduler).

A profile is addressed by filesystem path or by the bare name of a shipped
default (``ddr4_default``, ``ddr3_default``, ``mfrA``, ``mfrB``, ``mfrC``).
"""

from __future__ import annotations

import json
from importlib import resources
from pathlib import Path

from .dram import DramDevice, Geometry
from .faults import FaultModelConfig
from .platform import (
    ConfigError,
    HostDrain,
    PeriodicScheduler,
    Platform,
    ReadbackFifo,
)
from .timing import rules_from_config

SHIPPED_PROFILES = ("ddr4_default", "ddr3_default", "mfrA", "mfrB", "mfrC")

_REQUIRED_KEYS = ("slot_ns", "geometry", "timing_rules")


def _read_shipped(name: str) -> dict:
    ref = resources.files("dramlab").joinpath("data", f"{name}.json")
    return json.loads(ref.read_text(encoding="utf-8"))


def load_config(source) -> dict:
    """Load a profile from a dict, a JSON file path, or a shipped name."""
    if isinstance(source, dict):
        return dict(source)
    path = str(source)
    if Path(path).is_file():
        try:
            with open(path, encoding="utf-8") as fh:
                cfg = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(path, f"invalid JSON: {exc}") from exc
        if not isinstance(cfg, dict):
            raise ConfigError(path, "top-level JSON value must be an object")
        return cfg
    stem = Path(path).stem
    if stem in SHIPPED_PROFILES and (path == stem or path == f"{stem}.json"):
        return _read_shipped(stem)
    raise ConfigError(
        path, f"no such file, and not a shipped profile {SHIPPED_PROFILES}"
    )


def validate_config(cfg: dict, path: str = "<config>") -> dict:
    for key in _REQUIRED_KEYS:
        if key not in cfg:
            raise ConfigError(path, f"missing required key {key!r}")
    try:
        slot_ns = float(cfg["slot_ns"])
    except (TypeError, ValueError):
        raise ConfigError(path, f"slot_ns must be a number, got {cfg['slot_ns']!r}")
    if slot_ns <= 0:
        raise ConfigError(path, f"slot_ns must be positive, got {slot_ns}")
    if not isinstance(cfg["timing_rules"], list) or not cfg["timing_rules"]:
        raise ConfigError(path, "timing_rules must be a non-empty list")
    if not isinstance(cfg["geometry"], dict):
        raise ConfigError(path, "geometry must be an object")
    sched = cfg.get("scheduler", {})
    for key, value in sched.items():
        if key.endswith("_ns") and float(value) <= 0:
            raise ConfigError(path, f"scheduler.{key} must be positive")
    return cfg


def device_from_config(cfg: dict, path: str = "<config>") -> DramDevice:
    validate_config(cfg, path)
    try:
        geometry = Geometry.from_dict(cfg["geometry"])
        rules = rules_from_config(cfg["timing_rules"])
        fault = FaultModelConfig.from_dict(cfg.get("fault_model", {}))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc
    return DramDevice(
        geometry,
        rules,
        float(cfg["slot_ns"]),
        fault_model=fault,
        energy_constants=cfg.get("energy_constants", {}),
    )


def initialize(source, overrides: dict | None = None) -> Platform:
    """Build a ready platform from a profile path/name/dict.

    ``overrides`` is a shallow update applied on top of the loaded config
    (used by CLI flags such as ``--refresh on``)."""
    path = "<config>" if isinstance(source, dict) else str(source)
    cfg = load_config(source)
    if overrides:
        cfg = _merge(cfg, overrides)
    device = device_from_config(cfg, path)
    fifo_cfg = cfg.get("fifo", {})
    try:
        fifo = ReadbackFifo(int(fifo_cfg.get("capacity", 512)))
        host = HostDrain(float(fifo_cfg.get("drain_rate", 0.25)))
        sched_cfg = dict(cfg.get("scheduler", {}))
        scheduler = PeriodicScheduler(device.slot_ns, **sched_cfg)
    except (TypeError, ValueError) as exc:
        raise ConfigError(path, str(exc)) from exc
    return Platform(
        device,
        fifo=fifo,
        host=host,
        scheduler=scheduler,
        name=str(cfg.get("name", Path(path).stem)),
    )


def _merge(base: dict, overrides: dict) -> dict:
    out = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], value)
        else:
            out[key] = value
    return out
