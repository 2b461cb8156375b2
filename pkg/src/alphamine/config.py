"""Run configuration files: one TOML file drives every command.

Sections mirror the module configs; every file key has a default equal to the
corresponding RunConfig/StrategyConfig default, unknown keys are rejected,
and ``dump_config`` emits a canonical file that reproduces the run.
"""
from __future__ import annotations

import sys
from dataclasses import fields, replace

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigError
from .pipeline import RunConfig

# (section, file key) -> RunConfig field
_SCHEMA: dict[tuple[str, str], str] = {
    ("run", "seed"): "seed",
    ("run", "iterations"): "iterations",
    ("run", "cycles_per_iteration"): "cycles_per_iteration",
    ("run", "pool_size"): "pool_size",
    ("run", "lambda"): "lam",
    ("run", "max_episode_len"): "max_episode_len",
    ("run", "quantile_level"): "quantile_level",
    ("run", "beta"): "beta",
    ("run", "policy_lr"): "policy_lr",
    ("run", "discount"): "discount",
    ("run", "horizon"): "horizon",
    ("run", "c_puct"): "c_puct",
    ("run", "tokens"): "tokens",
    ("data", "csv"): "csv",
    ("data", "synthetic"): "synthetic",
    ("data", "n_stocks"): "n_stocks",
    ("data", "n_days"): "n_days",
    ("data", "data_seed"): "data_seed",
    ("data", "planted"): "planted",
    ("data", "planted_weight"): "planted_weight",
    ("split", "train"): "split_train",
    ("split", "valid"): "split_valid",
    ("split", "test"): "split_test",
    ("split", "train_frac"): "train_frac",
    ("split", "valid_frac"): "valid_frac",
    ("policy", "embed_dim"): "embed_dim",
    ("policy", "hidden_dim"): "hidden_dim",
    ("policy", "gru_layers"): "gru_layers",
    ("policy", "head_dims"): "head_dims",
    ("fit", "lr"): "fit_lr",
    ("fit", "max_iters"): "fit_max_iters",
    ("fit", "tol"): "fit_tol",
    ("backtest", "k"): "backtest_k",
    ("backtest", "rebalance_every"): "rebalance_every",
    ("backtest", "cost_bps"): "cost_bps",
    ("output", "checkpoint_dir"): "checkpoint_dir",
}

_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}
_TUPLE_FIELDS = {"tokens", "head_dims", "split_train", "split_valid", "split_test"}


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return config_from_dict(data, origin=path)


def config_from_dict(data: dict, origin: str = "<config>") -> RunConfig:
    values: dict[str, object] = {}
    for section, body in data.items():
        if not isinstance(body, dict):
            raise ConfigError(f"{origin}: top-level key {section!r} must be a section")
        for key, raw in body.items():
            field_name = _SCHEMA.get((section, key))
            if field_name is None:
                raise ConfigError(f"{origin}: unknown key [{section}] {key}")
            values[field_name] = _coerce(field_name, raw, origin, f"[{section}] {key}")
    try:
        return RunConfig(**values)
    except TypeError as exc:
        raise ConfigError(f"{origin}: {exc}") from exc


def _coerce(field_name: str, raw, origin: str, label: str):
    if field_name in _TUPLE_FIELDS:
        if not isinstance(raw, (list, tuple)):
            raise ConfigError(f"{origin}: {label} must be an array")
        return tuple(raw)
    default = getattr(RunConfig(), field_name)
    if isinstance(default, bool):
        if not isinstance(raw, bool):
            raise ConfigError(f"{origin}: {label} must be a boolean")
        return raw
    if isinstance(default, int) and not isinstance(raw, bool) and isinstance(raw, int):
        return raw
    if isinstance(default, float):
        if isinstance(raw, (int, float)) and not isinstance(raw, bool):
            return float(raw)
        raise ConfigError(f"{origin}: {label} must be a number")
    if isinstance(default, int):
        raise ConfigError(f"{origin}: {label} must be an integer")
    if isinstance(default, str):
        if not isinstance(raw, str):
            raise ConfigError(f"{origin}: {label} must be a string")
        return raw
    return raw


def apply_overrides(config: RunConfig, pairs: list[str]) -> RunConfig:
    """Apply ``section.key=value`` command-line overrides."""
    updates: dict[str, object] = {}
    for pair in pairs:
        if "=" not in pair or "." not in pair.split("=", 1)[0]:
            raise ConfigError(f"override {pair!r} is not of the form section.key=value")
        dotted, text = pair.split("=", 1)
        section, key = dotted.split(".", 1)
        field_name = _SCHEMA.get((section, key))
        if field_name is None:
            raise ConfigError(f"unknown override key {dotted!r}")
        updates[field_name] = _parse_text(field_name, text)
    return replace(config, **updates)


def _parse_text(field_name: str, text: str):
    if field_name in _TUPLE_FIELDS:
        items = [t.strip() for t in text.split(",") if t.strip()]
        if field_name == "head_dims":
            return tuple(int(t) for t in items)
        return tuple(items)
    default = getattr(RunConfig(), field_name)
    if isinstance(default, bool):
        if text.lower() in ("1", "true", "yes"):
            return True
        if text.lower() in ("0", "false", "no"):
            return False
        raise ConfigError(f"{field_name}: bad boolean {text!r}")
    if isinstance(default, int):
        return int(text)
    if isinstance(default, float):
        return float(text)
    return text


def _toml_value(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    if isinstance(value, tuple):
        return "[" + ", ".join(_toml_value(v) for v in value) + "]"
    raise ConfigError(f"cannot serialize {value!r}")


def dump_config(config: RunConfig) -> str:
    """Canonical TOML carrying every effective setting."""
    sections: dict[str, list[str]] = {}
    for (section, key), field_name in _SCHEMA.items():
        sections.setdefault(section, []).append(
            f"{key} = {_toml_value(getattr(config, field_name))}"
        )
    out = []
    for section, lines in sections.items():
        out.append(f"[{section}]")
        out.extend(lines)
        out.append("")
    return "\n".join(out)
