"""Flat sectioned key=value config files and run manifests.

A config file maps directly onto the TrainConfig dataclass tree:

    [train]
    epochs = 60
    seed = 0
    ...
    [lrs]
    position = 0.00016
    ...
    [raster]
    dtype = float32
    ...
    [densify]
    budget = 512
    ...

Command-line overrides use the same addressing ("densify.budget=512",
flag wins). The manifest written next to checkpoints is the fully
resolved config in the same format, so it re-parses to an equal config.
"""
from __future__ import annotations

import configparser
from dataclasses import fields

from .train import TrainConfig

_SECTIONS = {
    "train": lambda cfg: cfg,
    "lrs": lambda cfg: cfg.lrs,
    "raster": lambda cfg: cfg.raster,
    "densify": lambda cfg: cfg.densify,
}


def _coerce(current, text: str):
    if isinstance(current, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    if isinstance(current, tuple):
        parts = text.replace(",", " ").split()
        return tuple(type(current[0])(p) for p in parts) if current else tuple(float(p) for p in parts)
    if current is None:
        low = text.strip().lower()
        return None if low in ("none", "") else float(text)
    return text.strip()


def _apply(obj, key: str, text: str):
    if not hasattr(obj, key):
        raise KeyError(f"unknown config key '{key}' for {type(obj).__name__}")
    setattr(obj, key, _coerce(getattr(obj, key), text))


def parse_config(path) -> TrainConfig:
    cfg = TrainConfig()
    cp = configparser.ConfigParser()
    with open(path) as f:
        cp.read_file(f)
    for section in cp.sections():
        if section not in _SECTIONS:
            raise KeyError(f"unknown config section [{section}]")
        target = _SECTIONS[section](cfg)
        for key, value in cp.items(section):
            _apply(target, key, value)
    return cfg


def apply_overrides(cfg: TrainConfig, pairs) -> TrainConfig:
    """Apply "section.key=value" strings on top of a parsed config."""
    for pair in pairs or ():
        addr, _, value = pair.partition("=")
        section, _, key = addr.strip().partition(".")
        if section not in _SECTIONS or not key:
            raise KeyError(f"override must look like section.key=value, got {pair!r}")
        _apply(_SECTIONS[section](cfg), key, value)
    return cfg


def _fmt(value):
    if isinstance(value, tuple):
        return " ".join(repr(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def emit_config(cfg: TrainConfig) -> str:
    """Resolved config as manifest text (the inverse of parse_config)."""
    scalar_sections = []
    for name, pick in _SECTIONS.items():
        obj = pick(cfg)
        lines = [f"[{name}]"]
        for f in fields(obj):
            if name == "train" and f.name in ("lrs", "raster", "densify"):
                continue
            lines.append(f"{f.name} = {_fmt(getattr(obj, f.name))}")
        scalar_sections.append("\n".join(lines))
    return "\n\n".join(scalar_sections) + "\n"
