"""Plain-text model configs (INI) mirroring ScalingConfig.

`resolve_config` accepts either a preset name ("tiny-2d", "basic-3d", ...)
or a path to a .cfg file. Preset files for all six named variants ship in
the package's configs/ directory; a file with the same fields builds the
same model.
"""

from __future__ import annotations

import configparser
import os

from .model import PRESET_NAMES, ScalingConfig, preset

_CONFIG_DIR = os.path.join(os.path.dirname(__file__), "configs")

_TUPLE_FIELDS = ("base_channels", "dense_units", "growth", "skip_channels",
                 "input_shape")
_INT_FIELDS = ("dims", "pmfs_channel", "num_classes")


def _parse_tuple(text):
    return tuple(int(p) for p in text.replace(",", " ").split())


def load_config(path):
    parser = configparser.ConfigParser()
    if not parser.read(path):
        raise FileNotFoundError(f"config file not found: {path}")
    if "model" not in parser:
        raise ValueError(f"config {path} lacks a [model] section")
    sec = parser["model"]
    kwargs = {"name": sec.get("name", "custom")}
    for key in _TUPLE_FIELDS:
        kwargs[key] = _parse_tuple(sec[key])
    for key in _INT_FIELDS:
        kwargs[key] = sec.getint(key)
    kwargs["decoder"] = sec.get("decoder", "direct_fusion")
    kwargs["use_attention"] = sec.getboolean("use_attention", True)
    return ScalingConfig(**kwargs)


def save_config(cfg: ScalingConfig, path):
    parser = configparser.ConfigParser()
    parser["model"] = {
        "name": cfg.name,
        "dims": str(cfg.dims),
        "base_channels": ", ".join(map(str, cfg.base_channels)),
        "dense_units": ", ".join(map(str, cfg.dense_units)),
        "growth": ", ".join(map(str, cfg.growth)),
        "skip_channels": ", ".join(map(str, cfg.skip_channels)),
        "pmfs_channel": str(cfg.pmfs_channel),
        "decoder": cfg.decoder,
        "num_classes": str(cfg.num_classes),
        "input_shape": ", ".join(map(str, cfg.input_shape)),
        "use_attention": str(cfg.use_attention).lower(),
    }
    with open(path, "w") as fh:
        parser.write(fh)


def resolve_config(name_or_path, input_shape=None, num_classes=None):
    """Preset name or .cfg path -> (ScalingConfig, is_preset)."""
    if name_or_path in PRESET_NAMES:
        cfg = preset(
            name_or_path,
            input_shape=input_shape,
            num_classes=num_classes if num_classes else 1,
        )
        return cfg, True
    bundled = os.path.join(_CONFIG_DIR, f"{name_or_path}.cfg")
    path = name_or_path if os.path.exists(name_or_path) else bundled
    if not os.path.exists(path):
        raise FileNotFoundError(
            f"unknown preset or missing config file: {name_or_path} "
            f"(presets: {', '.join(PRESET_NAMES)})"
        )
    cfg = load_config(path)
    from dataclasses import replace

    updates = {}
    if input_shape is not None:
        updates["input_shape"] = tuple(input_shape)
    if num_classes is not None:
        updates["num_classes"] = num_classes
    if updates:
        cfg = replace(cfg, **updates)
    return cfg, cfg.name.lower() in ("tiny", "small", "basic")
