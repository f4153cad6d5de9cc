"""Typed INI configuration for training runs.

Sections mirror the config types: ``[model]`` (MlpSpec), ``[data]``
(SyntheticDataset), ``[train]`` (TrainConfig). Unknown sections or keys are
errors, so typos never pass silently.
"""
from __future__ import annotations

import configparser
import copy


def _ints(text):
    text = str(text).strip()
    return [int(t) for t in text.split(",") if t.strip()] if text else []


SCHEMA = {
    "model": {"widths": _ints, "init": str},
    "data": {"generator": str, "n_train": int, "n_test": int, "noise": float, "seed": int},
    "train": {
        "batch_size": int, "epochs": int, "lr": float, "momentum": float, "method": str,
        "milestones": _ints, "gamma": float, "vdm": str, "seed": int,
    },
}

DEFAULTS = {
    "model": {"widths": [2, 16, 2], "init": "uniform"},
    "data": {"generator": "two-gaussians", "n_train": 512, "n_test": 512, "noise": 0.3, "seed": 0},
    "train": {
        "batch_size": 32, "epochs": 60, "lr": 0.1, "momentum": 0.9, "method": "nesterov",
        "milestones": [], "gamma": 0.1, "vdm": "identity", "seed": 0,
    },
}


class ConfigError(ValueError):
    pass


def parse_value(section, key, raw):
    try:
        conv = SCHEMA[section][key]
    except KeyError:
        raise ConfigError(f"unknown config key [{section}] {key}") from None
    try:
        return conv(raw)
    except ValueError:
        raise ConfigError(f"bad value {raw!r} for [{section}] {key}") from None


def load_config(path=None, text=None):
    """Defaults overlaid with the file's values, as a nested dict."""
    cfg = copy.deepcopy(DEFAULTS)
    if path is None and text is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    try:
        if text is not None:
            parser.read_string(text)
        else:
            with open(path, encoding="utf-8") as fh:
                parser.read_file(fh)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    for section in parser.sections():
        if section not in SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            cfg[section][key] = parse_value(section, key, raw)
    return cfg
