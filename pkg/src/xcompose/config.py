"""Merged run configuration: flags > environment > config file > defaults."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import XComposeError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

CONFIG_FILENAME = "xcompose.toml"

ENV_KEYS = {
    "XC_GEN_URL": "gen_url",
    "XC_EMBED_URL": "embed_url",
    "XC_JUDGE_URL": "judge_url",
}


class ConfigError(XComposeError):
    pass


@dataclass
class RunConfig:
    gen_url: str = ""
    embed_url: str = ""
    judge_url: str = ""
    token: str = ""
    dim: int = 64
    m: int = 4
    max_tokens: int = 1024
    temperature: float = 0.0
    seed: int | None = None
    selection: str = "model"  # model | top1
    runs: int = 3
    k_negatives: int = 3
    jobs: int = 0  # 0 = logical cores
    allow_partial: bool = False
    allow_no_images: bool = False
    timeout_generate: float = 120.0
    timeout_embed: float = 30.0
    stub: bool = False
    stub_salt: int = 0

    @classmethod
    def field_names(cls) -> set[str]:
        return {f.name for f in fields(cls)}


def load_config(flag_values: dict, config_path: str | None = None,
                env: dict | None = None) -> RunConfig:
    """Build a RunConfig, rejecting unknown keys in the config file and flags."""
    env = os.environ if env is None else env
    config = RunConfig()
    known = RunConfig.field_names()

    path = Path(config_path) if config_path else Path(CONFIG_FILENAME)
    if path.exists():
        data = tomllib.loads(path.read_text(encoding="utf-8"))
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config keys in {path}: {sorted(unknown)}")
        for key, value in data.items():
            setattr(config, key, value)

    for env_key, attr in ENV_KEYS.items():
        if env.get(env_key):
            setattr(config, attr, env[env_key])

    unknown = {k for k, v in flag_values.items() if v is not None} - known
    if unknown:
        raise ConfigError(f"unknown configuration flags: {sorted(unknown)}")
    for key, value in flag_values.items():
        if value is not None:
            setattr(config, key, value)

    if config.selection not in ("model", "top1"):
        raise ConfigError(f"selection must be 'model' or 'top1', got {config.selection!r}")
    return config
