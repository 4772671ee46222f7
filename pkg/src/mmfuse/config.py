"""Flat key=value configuration with dotted namespaces.

Files hold one ``section.key = value`` pair per line; ``#`` starts a comment.
Command-line overrides use the same syntax and win over file values. Values
stay strings until a typed getter pulls them out.
"""

from __future__ import annotations

import os


class ConfigError(Exception):
    pass


def parse_kv_lines(lines, source="<config>"):
    cfg = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = line.split("=", 1)
        cfg[key.strip()] = value.strip()
    return cfg


def load_config(path=None, overrides=()):
    cfg = {}
    if path:
        try:
            with open(path) as fh:
                cfg.update(parse_kv_lines(fh, source=path))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg.update(parse_kv_lines(overrides, source="<override>"))
    return cfg


def get_str(cfg, key, default=None):
    value = cfg.get(key, default)
    if value is None:
        raise ConfigError(f"missing required config key {key}")
    return str(value)


def get_int(cfg, key, default=None):
    try:
        return int(get_str(cfg, key, None if default is None else str(default)))
    except ValueError:
        raise ConfigError(f"config key {key} must be an integer, got {cfg[key]!r}")


def get_float(cfg, key, default=None):
    try:
        return float(get_str(cfg, key, None if default is None else str(default)))
    except ValueError:
        raise ConfigError(f"config key {key} must be a float, got {cfg[key]!r}")


def get_bool(cfg, key, default=None):
    text = get_str(cfg, key, None if default is None else str(default)).lower()
    if text in ("1", "true", "yes", "on"):
        return True
    if text in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"config key {key} must be a boolean, got {cfg[key]!r}")


def get_ints(cfg, key, default=None):
    text = get_str(cfg, key, default)
    try:
        return tuple(int(p) for p in text.split(",") if p.strip())
    except ValueError:
        raise ConfigError(f"config key {key} must be comma-separated integers, got {text!r}")


def get_strs(cfg, key, default=""):
    text = get_str(cfg, key, default)
    return tuple(p.strip() for p in text.split(",") if p.strip())


def get_seed(cfg, key="seed", default=0):
    """Config seed, falling back to MFUSE_SEED, then the default."""
    if key in cfg:
        return get_int(cfg, key)
    env = os.environ.get("MFUSE_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise ConfigError(f"MFUSE_SEED must be an integer, got {env!r}")
    return default
