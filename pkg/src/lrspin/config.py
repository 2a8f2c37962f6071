"""Experiment configuration: INI sections with literal values.

Temperature lists accept ``start:stop:step`` (inclusive) or a literal list.
Unknown sections or keys are rejected.
"""

from __future__ import annotations

import ast
import configparser
import copy
import hashlib
import json
from pathlib import Path

DEFAULTS = {
    "lattice": {"L": 10, "alpha": 3.0, "mu": 0.0},
    "mcmc": {"temps": "0:14:0.1", "burn_in": None, "stride": None, "n_samples": 2000,
             "seed": 0},
    "rbm": {"temps": "0:14:0.5", "n_hidden": 81, "steps": 30000, "lr": 1e-3, "batch": 1000,
            "cd_k": 1, "mean_field_data": False, "seed": 1},
    "flow": {"length": 50, "seed_temperatures": [0.0, 7.7, 14.0], "seed": 2},
    "thermometer": {"temps": "0:14:0.5", "width": 64, "epochs": 50, "lr": 1e-3, "batch": 100,
                    "seed": 3},
    "stack": {"desk_scale": True, "temperature": 7.7, "layer_sizes": None, "steps": 2000,
              "lr": 1e-2, "batch": 500, "cd_k": 1, "rg_steps": 3, "seed": 4},
    "vh": {"mean_field": False, "top": 4, "seed": 5},
    "output": {"dir": "out"},
}
SECTIONS = tuple(DEFAULTS)


class ConfigError(ValueError):
    pass


def parse_value(text: str):
    text = text.strip()
    if text.lower() in ("none", "null", ""):
        return None
    if text.lower() in ("true", "false"):
        return text.lower() == "true"
    try:
        return ast.literal_eval(text)
    except (ValueError, SyntaxError):
        return text


def temperature_grid(text) -> list[float]:
    if isinstance(text, (int, float)):
        return [float(text)]
    if isinstance(text, (list, tuple)):
        return [float(t) for t in text]
    if isinstance(text, str) and text.count(":") == 2:
        start, stop, step = (float(x) for x in text.split(":"))
        if step <= 0:
            raise ConfigError(f"temperature step must be positive in {text!r}")
        n = int(round((stop - start) / step))
        return [round(start + k * step, 10) for k in range(n + 1)]
    raise ConfigError(f"cannot read temperature list {text!r}")


def load(path=None, overrides=(), seed: int | None = None) -> dict:
    cfg = copy.deepcopy(DEFAULTS)
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"config file {path} does not exist")
        parser = configparser.ConfigParser(interpolation=None)
        parser.optionxform = str
        parser.read(path)
        for section in parser.sections():
            for key, value in parser.items(section):
                _set(cfg, section, key, parse_value(value))
    for item in overrides:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, value = item.split("=", 1)
        section, key = dotted.split(".", 1)
        _set(cfg, section, key, parse_value(value))
    if seed is not None:
        for i, section in enumerate(SECTIONS):
            if "seed" in cfg[section]:
                cfg[section]["seed"] = seed + i
    validate(cfg)
    return cfg


def _set(cfg, section, key, value):
    if section not in cfg:
        raise ConfigError(f"unknown config section [{section}]")
    if key not in cfg[section]:
        raise ConfigError(f"unknown config key {section}.{key}")
    cfg[section][key] = value


def validate(cfg: dict) -> None:
    lat = cfg["lattice"]
    if not isinstance(lat["L"], int) or lat["L"] < 2:
        raise ConfigError("lattice.L must be an integer >= 2")
    for section in ("mcmc", "rbm", "thermometer"):
        temperature_grid(cfg[section]["temps"])
    for section, keys in {"mcmc": ("n_samples",), "rbm": ("n_hidden", "batch", "cd_k"),
                          "flow": ("length",), "thermometer": ("width", "batch"),
                          "stack": ("batch", "cd_k", "rg_steps")}.items():
        for key in keys:
            if not isinstance(cfg[section][key], int) or cfg[section][key] < 1:
                raise ConfigError(f"{section}.{key} must be a positive integer")
    out = Path(str(cfg["output"]["dir"]))
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output.dir {out} exists and is not a directory")


def config_hash(cfg: dict) -> str:
    """Digest of everything except the output location."""
    body = {k: v for k, v in cfg.items() if k != "output"}
    blob = json.dumps(body, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]
