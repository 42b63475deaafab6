"""Flat sectioned key-value configuration with schema validation.

The file format is INI: ``[section]`` headers over ``key = value`` lines.
Every key is declared in the schema below with a type and default;
unknown sections or keys and unparseable values raise ConfigError. The
only environment override is DUMMYNET_DATA_DIR for ``run.data_dir``.
"""
from __future__ import annotations

import configparser
import hashlib
import json
import os
from pathlib import Path

from .errors import ConfigError

_BOOL_TRUE = {"1", "true", "yes", "on"}
_BOOL_FALSE = {"0", "false", "no", "off"}


def _parse_int_tuple(text: str) -> tuple[int, ...]:
    return tuple(int(part.strip()) for part in text.split(",") if part.strip())


# section -> key -> (python type, default)
SCHEMA: dict[str, dict[str, tuple[type, object]]] = {
    "run": {
        "seed": (int, 0),
        "data_dir": (str, ""),
        "out_dir": (str, "runs/default"),
        "workers": (int, 1),
        "single_thread": (bool, False),
    },
    "data": {
        "size": (int, 64),
        "pose_corpus": (int, 600),
        "gan_samples": (int, 240),
        "mask_pairs": (int, 220),
        "vae_crops": (int, 260),
        "max_brightness": (float, 1.0),
    },
    "pose": {
        "viewpoint_clusters": (int, 6),
        "pose_clusters": (int, 0),  # 0 = one cluster per 200 members
        "birch_threshold": (float, 0.5),
        "birch_branching": (int, 50),
        "heatmap_sigma": (float, 2.0),
    },
    "mask": {
        "epochs": (int, 25),
        "lr": (float, 1e-3),
        "batch_size": (int, 8),
        "base_width": (int, 16),
    },
    "vae": {
        "epochs": (int, 30),
        "lr": (float, 1e-3),
        "batch_size": (int, 16),
        "beta": (float, 1.0),
    },
    "gan": {
        "n_blocks": (int, 2),
        "base_width": (int, 32),
        "critic_width": (int, 24),
        "stage_steps": (tuple, (100, 140, 220)),
        "fade_steps": (int, 50),
        "batch_size": (int, 8),
        "critic_iters": (int, 1),
        "lr": (float, 2e-4),
        "lambda1": (float, 1.0),
        "lambda2": (float, 10.0),
        "lambda3": (float, 10.0),
        "lambda4": (float, 1.0),
        "gp_weight": (float, 10.0),
    },
    "augment": {
        "n_samples": (int, 200),
        "attempts": (int, 50),
        "neighborhood_scale": (float, 2.0),
        "scenes": (int, 40),
    },
    "eval": {
        "epochs": (int, 60),
        "lr": (float, 0.05),
        "momentum": (float, 0.9),
        "batch_size": (int, 32),
        "input_size": (int, 64),
        "real_pos": (int, 100),
        "train_neg": (int, 400),
        "test_pos": (int, 300),
        "test_neg": (int, 1200),
        "generated_pos": (int, 200),
        "runs": (int, 5),
    },
}


def default_config() -> dict[str, dict[str, object]]:
    return {sec: {k: v for k, (_, v) in keys.items()} for sec, keys in SCHEMA.items()}


def _convert(section: str, key: str, raw: str) -> object:
    typ, _ = SCHEMA[section][key]
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low in _BOOL_TRUE:
                return True
            if low in _BOOL_FALSE:
                return False
            raise ValueError(raw)
        if typ is tuple:
            return _parse_int_tuple(raw)
        return typ(raw)
    except ValueError as err:
        raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from err


def load_config(path: str | Path | None) -> dict[str, dict[str, object]]:
    """Parse and validate a config file; missing keys take defaults."""
    cfg = default_config()
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            read = parser.read(str(path))
        except configparser.Error as err:
            raise ConfigError(f"cannot parse {path}: {err}") from err
        if not read:
            raise ConfigError(f"config file not found: {path}")
        for section in parser.sections():
            if section not in SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                cfg[section][key] = _convert(section, key, raw)
    env_data = os.environ.get("DUMMYNET_DATA_DIR")
    if env_data:
        cfg["run"]["data_dir"] = env_data
    return cfg


def config_hash(cfg: dict[str, dict[str, object]]) -> str:
    """Stable content hash of a config dict."""
    blob = json.dumps(cfg, sort_keys=True, default=list).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()[:16]


def file_hash(path: str | Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()[:16]
